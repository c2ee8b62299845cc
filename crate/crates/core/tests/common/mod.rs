#![allow(dead_code)]

use ntpqpt::linalg::herm_eig;
use ntpqpt::{chi_from_kraus, CMatrix, ChiMatrix, KrausSet, OperatorBasis, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn ginibre(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// Random Kraus set of the given rank with max eigenvalue of Σ E†E equal
/// to `p_max`.
pub fn random_kraus(rng: &mut ChaCha8Rng, dim: usize, rank: usize, p_max: f64) -> KrausSet {
    let ops: Vec<CMatrix> = (0..rank).map(|_| ginibre(rng, dim)).collect();
    let mut s = CMatrix::zeros(dim, dim);
    for e in &ops {
        s = &s + &(&e.adjoint() * e);
    }
    let top = herm_eig(&s.hermitian_part()).unwrap().max();
    let k = (p_max / top).sqrt();
    KrausSet::new(ops.iter().map(|e| e.scale(k)).collect()).unwrap()
}

/// Random physical qubit channel: Kraus rank 1 to 4, random overall loss.
pub fn random_channel(rng: &mut ChaCha8Rng, basis: &OperatorBasis) -> ChiMatrix {
    let rank = rng.random_range(1..=4);
    let p_max = rng.random_range(0.05..=1.0);
    chi_from_kraus(&random_kraus(rng, basis.dim(), rank, p_max), basis).unwrap()
}

/// Random mixed state of full rank.
pub fn random_density(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let g = ginibre(rng, dim);
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    m.scale(1.0 / tr).hermitian_part()
}
