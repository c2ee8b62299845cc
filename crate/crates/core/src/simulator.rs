//! Forward model of the partially transmitting polarizing beam splitter
//! (PPBS) experiment.
//!
//! The PPBS maps α|H⟩ + β|V⟩ to α√T_H|H⟩ + β√T_V|V⟩. Inputs are the six
//! polarization states, each analyzed in the same six projections, and
//! coincidences are Poisson distributed around N·Tr[Π_b E(ρ_a)].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channels::{change_basis, pauli_basis, BasisLabel, ChiMatrix, OperatorBasis, ProbabilityOperator};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::states::Protocol;
use crate::tomography::CountTable;

/// Default expected pairs per input setting.
pub const DEFAULT_EXPOSURE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpbsParams {
    pub t_h: f64,
    pub t_v: f64,
}

impl PpbsParams {
    pub fn new(t_h: f64, t_v: f64) -> Result<Self> {
        for (name, t) in [("T_H", t_h), ("T_V", t_v)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!("{name} = {t} is outside [0, 1]")));
            }
        }
        Ok(Self { t_h, t_v })
    }

    /// T_H = 1, T_V = Γ with Γ = T_V / T_H in (0, 1].
    pub fn from_gamma(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} is outside (0, 1]")));
        }
        Self::new(1.0, gamma)
    }

    /// Γ = T_V / T_H, undefined when T_H = 0.
    pub fn gamma(&self) -> Option<f64> {
        (self.t_h > 0.0).then(|| self.t_v / self.t_h)
    }

    /// diag(√T_H, √T_V).
    pub fn kraus_operator(&self) -> CMatrix {
        CMatrix::from_real_diag(&[self.t_h.sqrt(), self.t_v.sqrt()])
    }
}

/// Closed-form PPBS process matrix in the Pauli basis, converted to
/// `basis` when that is a different qubit basis.
pub fn ppbs_chi(p: &PpbsParams, basis: &OperatorBasis) -> Result<ChiMatrix> {
    if basis.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: basis.dim(),
        });
    }
    let (sh, sv) = (p.t_h.sqrt(), p.t_v.sqrt());
    let corner = (p.t_h - p.t_v) / 4.0;
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)].re = (sh + sv).powi(2) / 4.0;
    m[(0, 3)].re = corner;
    m[(3, 0)].re = corner;
    m[(3, 3)].re = (sh - sv).powi(2) / 4.0;
    let chi = ChiMatrix::new(pauli_basis(), m)?;
    if *basis.label() == BasisLabel::Pauli {
        Ok(chi)
    } else {
        change_basis(&chi, basis)
    }
}

/// P = diag(T_H, T_V).
pub fn ppbs_probability_operator(p: &PpbsParams) -> Result<ProbabilityOperator> {
    ProbabilityOperator::from_matrix(CMatrix::from_real_diag(&[p.t_h, p.t_v]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    Poisson,
    None,
}

impl std::str::FromStr for Noise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(Noise::Poisson),
            "none" => Ok(Noise::None),
            other => Err(Error::InvalidParameter(format!("unknown noise model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: PpbsParams,
    /// Expected pairs per input setting.
    pub exposure: f64,
    pub seed: u64,
    pub noise: Noise,
    /// Mean background counts added to every cell. Zero by default.
    #[serde(default)]
    pub dark_counts: f64,
    /// Detection efficiency applied to every cell. One by default.
    #[serde(default = "unit_efficiency")]
    pub efficiency: f64,
}

fn unit_efficiency() -> f64 {
    1.0
}

impl SimConfig {
    pub fn new(params: PpbsParams, exposure: f64, seed: u64, noise: Noise) -> Result<Self> {
        let cfg = Self {
            params,
            exposure,
            seed,
            noise,
            dark_counts: 0.0,
            efficiency: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exposure must be positive, got {}",
                self.exposure
            )));
        }
        if !(self.dark_counts >= 0.0) || !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidParameter("detector hooks out of range".into()));
        }
        PpbsParams::new(self.params.t_h, self.params.t_v)?;
        Ok(())
    }
}

/// μ_ab = N·Tr[Π_b E(ρ_a)] for an arbitrary channel.
pub fn expected_counts(chi: &ChiMatrix, protocol: &Protocol, exposure: f64) -> Result<Vec<Vec<f64>>> {
    let analyzers = protocol.analyzer_projectors();
    protocol
        .input_states()
        .iter()
        .map(|rho| {
            let out = chi.apply(rho)?;
            Ok(analyzers
                .iter()
                .map(|pi| exposure * (pi * &out).trace().re.max(0.0))
                .collect())
        })
        .collect()
}

/// RNG for stream `stream` of `seed`. Streams are independent ChaCha
/// sequences, so sweep points never share draws.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw integer counts around the given means.
pub fn sample_counts(means: &[Vec<f64>], noise: Noise, rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    means
        .iter()
        .map(|row| {
            row.iter()
                .map(|&mu| match noise {
                    Noise::None => mu.round() as u64,
                    Noise::Poisson if mu > 0.0 => {
                        Poisson::new(mu).expect("finite positive mean").sample(rng) as u64
                    }
                    Noise::Poisson => 0,
                })
                .collect()
        })
        .collect()
}

/// Counts for any qubit channel under the six-state protocol family.
pub fn simulate_channel_counts(
    chi: &ChiMatrix,
    protocol: &Protocol,
    exposure: f64,
    noise: Noise,
    rng: &mut ChaCha8Rng,
) -> Result<CountTable> {
    let means = expected_counts(chi, protocol, exposure)?;
    let counts = sample_counts(&means, noise, rng);
    CountTable::new(
        chi.dim(),
        protocol.inputs.iter().map(|p| p.to_string()).collect(),
        protocol.analyzers.iter().map(|p| p.to_string()).collect(),
        exposure,
        counts,
    )
}

pub fn simulate_counts(cfg: &SimConfig) -> Result<CountTable> {
    simulate_counts_stream(cfg, 0)
}

pub fn simulate_counts_stream(cfg: &SimConfig, stream: u64) -> Result<CountTable> {
    cfg.validate()?;
    let chi = ppbs_chi(&cfg.params, &pauli_basis())?;
    let protocol = Protocol::six_state();
    let mut means = expected_counts(&chi, &protocol, cfg.exposure)?;
    for row in &mut means {
        for mu in row.iter_mut() {
            *mu = *mu * cfg.efficiency + cfg.dark_counts;
        }
    }
    let mut rng = stream_rng(cfg.seed, stream);
    let counts = sample_counts(&means, cfg.noise, &mut rng);
    CountTable::new(
        2,
        protocol.inputs.iter().map(|p| p.to_string()).collect(),
        protocol.analyzers.iter().map(|p| p.to_string()).collect(),
        cfg.exposure,
        counts,
    )
}

/// One table per Γ (T_H = 1, T_V = Γ), each on its own RNG stream.
pub fn gamma_sweep(gammas: &[f64], template: &SimConfig) -> Result<Vec<(f64, CountTable)>> {
    gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let cfg = SimConfig {
                params: PpbsParams::from_gamma(g)?,
                ..template.clone()
            };
            Ok((g, simulate_counts_stream(&cfg, i as u64)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{chi_from_kraus, elementary_basis, KrausSet, ProbabilityClass};
    use crate::states::Polarization;

    fn idx(p: Polarization) -> usize {
        Polarization::ALL.iter().position(|&q| q == p).unwrap()
    }

    #[test]
    fn identity_and_projective_limits() {
        let b = pauli_basis();
        let id = ppbs_chi(&PpbsParams::new(1.0, 1.0).unwrap(), &b).unwrap();
        assert!((id.mat() - &CMatrix::from_real_diag(&[1.0, 0.0, 0.0, 0.0])).max_abs() < 1e-15);

        let proj = ppbs_chi(&PpbsParams::new(1.0, 0.0).unwrap(), &b).unwrap();
        let q = 0.25;
        let want = CMatrix::from_real_rows(&[
            &[q, 0.0, 0.0, q],
            &[0.0; 4],
            &[0.0; 4],
            &[q, 0.0, 0.0, q],
        ]);
        assert!((proj.mat() - &want).max_abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_kraus_oracle() {
        for basis in [pauli_basis(), elementary_basis(2).unwrap()] {
            for (th, tv) in [(0.3, 0.9), (1.0, 0.255), (0.5, 0.5)] {
                let p = PpbsParams::new(th, tv).unwrap();
                let chi = ppbs_chi(&p, &basis).unwrap();
                let k = KrausSet::new(vec![p.kraus_operator()]).unwrap();
                let oracle = chi_from_kraus(&k, &basis).unwrap();
                assert!((chi.mat() - oracle.mat()).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn probability_operator_cases() {
        let p = ppbs_probability_operator(&PpbsParams::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(p.classify(), ProbabilityClass::TracePreserving);
        let p = ppbs_probability_operator(&PpbsParams::from_gamma(0.4).unwrap()).unwrap();
        assert_eq!(p.eigenvalues(), &[0.4, 1.0]);
        assert_eq!(p.classify(), ProbabilityClass::StateDependent);
        let p = ppbs_probability_operator(&PpbsParams::new(0.5, 0.5).unwrap()).unwrap();
        assert_eq!(p.classify(), ProbabilityClass::UniformLossy);
    }

    #[test]
    fn noiseless_count_examples() {
        let n = 1e4;
        let cfg = SimConfig::new(PpbsParams::from_gamma(1.0).unwrap(), n, 1, Noise::None).unwrap();
        let t = simulate_counts(&cfg).unwrap();
        assert_eq!(t.counts[idx(Polarization::H)][idx(Polarization::H)], 10_000);

        let cfg = SimConfig::new(PpbsParams::new(1.0, 0.0).unwrap(), n, 1, Noise::None).unwrap();
        let t = simulate_counts(&cfg).unwrap();
        assert!(t.counts[idx(Polarization::V)].iter().all(|&c| c == 0));
        assert_eq!(t.counts[idx(Polarization::D)][idx(Polarization::D)], 2_500);
    }

    #[test]
    fn orthogonal_analyzers_give_success_probability() {
        let p = PpbsParams::new(0.8, 0.3).unwrap();
        let cfg = SimConfig::new(p, 1e6, 3, Noise::None).unwrap();
        let t = simulate_counts(&cfg).unwrap();
        let pop = ppbs_probability_operator(&p).unwrap();
        for (a, input) in Polarization::ALL.iter().enumerate() {
            let pair = t.counts[a][idx(Polarization::H)] + t.counts[a][idx(Polarization::V)];
            let want = 1e6 * pop.success_probability(&input.projector());
            assert!((pair as f64 - want).abs() <= 1.0, "{input}: {pair} vs {want}");
        }
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let template = SimConfig::new(PpbsParams::from_gamma(1.0).unwrap(), 1e4, 42, Noise::Poisson).unwrap();
        let a = gamma_sweep(&[0.879, 0.255], &template).unwrap();
        let b = gamma_sweep(&[0.879, 0.255], &template).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].0, 0.879);
        assert_ne!(a[0].1.counts, a[1].1.counts);

        let single = gamma_sweep(&[1.0], &template).unwrap();
        assert_eq!(single[0].1, simulate_counts(&template).unwrap());
        assert!(gamma_sweep(&[1.2], &template).is_err());
        assert!(gamma_sweep(&[0.0], &template).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(PpbsParams::new(1.1, 0.5).is_err());
        let p = PpbsParams::from_gamma(0.5).unwrap();
        assert!(SimConfig::new(p, 0.0, 0, Noise::None).is_err());
        assert!("gaussian".parse::<Noise>().is_err());
    }
}
