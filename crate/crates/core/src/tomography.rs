//! Linear-inversion process tomography.
//!
//! Output states are estimated from analyzer counts, expressed in a basis
//! {ρ_k} of d×d matrices to give λ, and mapped back to χ through the
//! generalized inverse τ of the β tensor defined by
//!
//! ```text
//! A_m ρ_j A_n† = Σ_k β^{mn}_{jk} ρ_k,      λ_jk = Σ_mn β^{mn}_{jk} χ_mn.
//! ```
//!
//! β is stored as a d⁴×d⁴ matrix taking vec(χ) (index m·d² + n) to
//! vec(λ) (index j·d² + k).

use serde::{Deserialize, Serialize};

use crate::channels::{ChiMatrix, DensityMatrix, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, herm_eig, pseudo_inverse, CMatrix, C64};

/// Current version of the JSON file schemas.
pub const SCHEMA_VERSION: u32 = 1;

const MAX_STATE_CONDITION: f64 = 1e6;
const PINV_RANK_TOL: f64 = 1e-16;

/// d² linearly independent d×d matrices.
#[derive(Debug, Clone)]
pub struct StateBasis {
    dim: usize,
    states: Vec<CMatrix>,
    /// Inverse of the matrix whose columns are vec(ρ_k).
    coords: CMatrix,
}

impl StateBasis {
    pub fn new(states: Vec<CMatrix>) -> Result<Self> {
        let dim = states
            .first()
            .map(|s| s.rows())
            .ok_or_else(|| Error::Representation("empty state basis".into()))?;
        let n = dim * dim;
        if states.len() != n || states.iter().any(|s| s.shape() != (dim, dim)) {
            return Err(Error::Representation(format!(
                "state basis needs {n} matrices of size {dim}x{dim}"
            )));
        }
        let columns = CMatrix::from_fn(n, n, |r, k| states[k].as_slice()[r]);
        let gram = &columns.adjoint() * &columns;
        let cond = condition_number(&gram)?;
        if !(cond < MAX_STATE_CONDITION) {
            return Err(Error::IllConditioned(cond));
        }
        let coords = columns.inverse()?;
        Ok(Self {
            dim,
            states,
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[CMatrix] {
        &self.states
    }

    /// Coefficients c_k with m = Σ_k c_k ρ_k.
    pub fn coords(&self, m: &CMatrix) -> Result<Vec<C64>> {
        if m.shape() != (self.dim, self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.rows(),
            });
        }
        Ok(self.coords.matvec(m.as_slice()))
    }

    pub fn gram(&self) -> CMatrix {
        let n = self.states.len();
        CMatrix::from_fn(n, n, |i, j| self.states[i].inner(&self.states[j]))
    }
}

/// Matrix units |i⟩⟨j| in lexicographic order.
pub fn canonical_state_basis(dim: usize) -> Result<StateBasis> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {dim}")));
    }
    StateBasis::new(
        (0..dim * dim)
            .map(|k| CMatrix::unit(dim, k / dim, k % dim))
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct BetaTensor {
    /// d²
    n: usize,
    mat: CMatrix,
}

impl BetaTensor {
    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    /// β^{mn}_{jk}
    pub fn get(&self, m: usize, n: usize, j: usize, k: usize) -> C64 {
        self.mat[(j * self.n + k, m * self.n + n)]
    }

    /// Identity β, as produced by a trivial basis pair.
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            mat: CMatrix::identity(n * n),
        }
    }
}

pub fn build_beta(basis: &OperatorBasis, states: &StateBasis) -> Result<BetaTensor> {
    if basis.dim() != states.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: states.dim(),
        });
    }
    let n = basis.len();
    let mut mat = CMatrix::zeros(n * n, n * n);
    let adj: Vec<CMatrix> = basis.ops().iter().map(|a| a.adjoint()).collect();
    for (m, am) in basis.ops().iter().enumerate() {
        for (nn, an) in adj.iter().enumerate() {
            for (j, rho) in states.states().iter().enumerate() {
                let image = &(am * rho) * an;
                for (k, c) in states.coords(&image)?.into_iter().enumerate() {
                    mat[(j * n + k, m * n + nn)] = c;
                }
            }
        }
    }
    Ok(BetaTensor { n, mat })
}

/// Max |A_m ρ_j A_n† − Σ_k β^{mn}_{jk} ρ_k| over all (m, n, j).
pub fn beta_defining_residual(beta: &BetaTensor, basis: &OperatorBasis, states: &StateBasis) -> f64 {
    let mut worst: f64 = 0.0;
    for (m, am) in basis.ops().iter().enumerate() {
        for (nn, an) in basis.ops().iter().enumerate() {
            for (j, rho) in states.states().iter().enumerate() {
                let lhs = &(am * rho) * &an.adjoint();
                let mut rhs = CMatrix::zeros(states.dim(), states.dim());
                for (k, rk) in states.states().iter().enumerate() {
                    rhs = &rhs + &rk.scale_c(beta.get(m, nn, j, k));
                }
                worst = worst.max((&lhs - &rhs).max_abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct TauTensor {
    n: usize,
    mat: CMatrix,
}

impl TauTensor {
    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    /// τ^{mn}_{jk}
    pub fn get(&self, m: usize, n: usize, j: usize, k: usize) -> C64 {
        self.mat[(m * self.n + n, j * self.n + k)]
    }

    /// max |Σ_jk τ^{pq}_{jk} β^{mn}_{jk} − δ_pm δ_qn|.
    pub fn delta_residual(&self, beta: &BetaTensor) -> f64 {
        let prod = &self.mat * &beta.mat;
        (&prod - &CMatrix::identity(prod.rows())).max_abs()
    }
}

/// Moore-Penrose inverse of β.
pub fn invert_beta(beta: &BetaTensor) -> Result<TauTensor> {
    let mat = pseudo_inverse(&beta.mat, PINV_RANK_TOL)?;
    Ok(TauTensor { n: beta.n, mat })
}

/// λ_jk: coefficients of E(ρ_j) in the state basis.
#[derive(Debug, Clone)]
pub struct LambdaMatrix {
    mat: CMatrix,
}

impl LambdaMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        mat.require_square()?;
        Ok(Self { mat })
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    /// Output image of basis element j, Σ_k λ_jk ρ_k.
    pub fn image(&self, j: usize, states: &StateBasis) -> CMatrix {
        let d = states.dim();
        let mut out = CMatrix::zeros(d, d);
        for (k, rk) in states.states().iter().enumerate() {
            out = &out + &rk.scale_c(self.mat[(j, k)]);
        }
        out
    }
}

/// λ together with the least-squares residual of the overdetermined fit.
#[derive(Debug, Clone)]
pub struct LambdaFit {
    pub lambda: LambdaMatrix,
    pub residual: f64,
}

/// Express every measured output and every prepared input in the state
/// basis and solve C Λ = O in the least-squares sense, so that λ refers to
/// the state basis regardless of which physical inputs were prepared.
pub fn lambda_from_outputs(
    outputs: &[DensityMatrix],
    inputs: &[CMatrix],
    states: &StateBasis,
) -> Result<LambdaFit> {
    if outputs.len() != inputs.len() {
        return Err(Error::TableShape(format!(
            "{} outputs for {} inputs",
            outputs.len(),
            inputs.len()
        )));
    }
    let n = states.states().len();
    let k = inputs.len();
    let mut c = CMatrix::zeros(k, n);
    let mut o = CMatrix::zeros(k, n);
    for (a, (rho_in, rho_out)) in inputs.iter().zip(outputs).enumerate() {
        for (j, v) in states.coords(rho_in)?.into_iter().enumerate() {
            c[(a, j)] = v;
        }
        for (j, v) in states.coords(rho_out.mat())?.into_iter().enumerate() {
            o[(a, j)] = v;
        }
    }
    let rank = numerical_rank(&c)?;
    if rank < n {
        return Err(Error::RankDeficientInputs { rank, needed: n });
    }
    let c_pinv = pseudo_inverse(&c, PINV_RANK_TOL)?;
    let lambda = &c_pinv * &o;
    let residual = (&(&c * &lambda) - &o).frobenius_norm();
    Ok(LambdaFit {
        lambda: LambdaMatrix::new(lambda)?,
        residual,
    })
}

fn numerical_rank(m: &CMatrix) -> Result<usize> {
    let gram = (&m.adjoint() * m).hermitian_part();
    let eig = herm_eig(&gram)?;
    let top = eig.max();
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|&&x| x > 1e-12 * top && top > 0.0)
        .count())
}

/// χ from linear inversion, kept exactly as computed (no PSD clamp).
#[derive(Debug, Clone)]
pub struct LinearInversion {
    pub chi: ChiMatrix,
    pub min_eigenvalue: f64,
    /// True when some eigenvalue is below −1e-10 λ_max.
    pub non_psd: bool,
}

/// χ_mn = Σ_jk τ^{mn}_{jk} λ_jk.
pub fn linear_inversion(
    lambda: &LambdaMatrix,
    tau: &TauTensor,
    basis: &OperatorBasis,
) -> Result<LinearInversion> {
    let n = basis.len();
    if lambda.mat().rows() != n || tau.n != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lambda.mat().rows(),
        });
    }
    let v = tau.mat.matvec(lambda.mat().as_slice());
    let raw = CMatrix::from_vec(n, n, v)?;
    let chi = ChiMatrix::new(basis.clone(), raw.hermitian_part())?;
    let eig = chi.spectrum()?;
    let min_eigenvalue = eig.min();
    Ok(LinearInversion {
        non_psd: min_eigenvalue < -1e-10 * eig.max().abs().max(f64::MIN_POSITIVE),
        chi,
        min_eigenvalue,
    })
}

/// Linear estimator for a state measured with an overcomplete set of
/// rank-one projectors. The dual frame D_b solves the least-squares
/// problem min Σ_b |p_b − Tr[Π_b ρ]|², so ρ̂ = Σ_b p_b D_b.
#[derive(Debug, Clone)]
pub struct StateTomographer {
    dim: usize,
    dual: Vec<CMatrix>,
}

impl StateTomographer {
    pub fn new(projectors: &[CMatrix]) -> Result<Self> {
        let dim = projectors
            .first()
            .map(|p| p.rows())
            .ok_or_else(|| Error::IncompleteAnalyzers("no analyzers".into()))?;
        let n = dim * dim;
        let mut frame = CMatrix::zeros(n, n);
        for p in projectors {
            if p.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.rows(),
                });
            }
            let v = p.as_slice();
            for r in 0..n {
                for c in 0..n {
                    frame[(r, c)] += v[r] * v[c].conj();
                }
            }
        }
        let cond = condition_number(&frame.hermitian_part())?;
        if !(cond < 1e12) {
            return Err(Error::IncompleteAnalyzers(format!(
                "{} projectors do not span the {dim}x{dim} operators",
                projectors.len()
            )));
        }
        let inv = frame.inverse()?;
        let dual = projectors
            .iter()
            .map(|p| CMatrix::from_vec(dim, dim, inv.matvec(p.as_slice())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, dual })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn analyzer_count(&self) -> usize {
        self.dual.len()
    }

    /// Unnormalized output estimate from counts under exposure N; its
    /// trace estimates the success probability.
    pub fn estimate(&self, counts: &[f64], exposure: f64) -> Result<DensityMatrix> {
        if counts.len() != self.dual.len() {
            return Err(Error::IncompleteAnalyzers(format!(
                "expected {} analyzer counts, got {}",
                self.dual.len(),
                counts.len()
            )));
        }
        if !(exposure > 0.0) {
            return Err(Error::InvalidParameter(format!("exposure must be positive, got {exposure}")));
        }
        let mut rho = CMatrix::zeros(self.dim, self.dim);
        for (n, d) in counts.iter().zip(&self.dual) {
            if *n != 0.0 {
                rho = &rho + &d.scale(n / exposure);
            }
        }
        DensityMatrix::from_hermitian(rho.hermitian_part())
    }
}

/// One-shot form of [`StateTomographer::estimate`].
pub fn state_tomography(projectors: &[CMatrix], counts: &[f64], exposure: f64) -> Result<DensityMatrix> {
    StateTomographer::new(projectors)?.estimate(counts, exposure)
}

/// β and τ for one (operator basis, state basis) pair, built once.
#[derive(Debug, Clone)]
pub struct LinearInverter {
    basis: OperatorBasis,
    states: StateBasis,
    beta: BetaTensor,
    tau: TauTensor,
}

impl LinearInverter {
    /// Uses the canonical matrix-unit state basis.
    pub fn new(basis: &OperatorBasis) -> Result<Self> {
        Self::with_states(basis, canonical_state_basis(basis.dim())?)
    }

    pub fn with_states(basis: &OperatorBasis, states: StateBasis) -> Result<Self> {
        let beta = build_beta(basis, &states)?;
        let tau = invert_beta(&beta)?;
        Ok(Self {
            basis: basis.clone(),
            states,
            beta,
            tau,
        })
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn states(&self) -> &StateBasis {
        &self.states
    }

    pub fn beta(&self) -> &BetaTensor {
        &self.beta
    }

    pub fn tau(&self) -> &TauTensor {
        &self.tau
    }

    pub fn invert(&self, lambda: &LambdaMatrix) -> Result<LinearInversion> {
        linear_inversion(lambda, &self.tau, &self.basis)
    }

    /// Outputs for prepared inputs → χ.
    pub fn reconstruct(&self, outputs: &[DensityMatrix], inputs: &[CMatrix]) -> Result<LinearInversion> {
        let fit = lambda_from_outputs(outputs, inputs, &self.states)?;
        self.invert(&fit.lambda)
    }
}

/// Coincidence counts n_ab for input a and analyzer b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub schema: u32,
    pub dim: usize,
    pub inputs: Vec<String>,
    pub projectors: Vec<String>,
    /// Expected number of pairs per input setting.
    pub exposure: f64,
    pub counts: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl CountTable {
    pub fn new(
        dim: usize,
        inputs: Vec<String>,
        projectors: Vec<String>,
        exposure: f64,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self> {
        let t = Self {
            schema: SCHEMA_VERSION,
            dim,
            inputs,
            projectors,
            exposure,
            counts,
            manifest: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::TableShape(format!("unsupported schema {}", self.schema)));
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::TableShape(format!("exposure must be positive, got {}", self.exposure)));
        }
        if self.counts.len() != self.inputs.len() {
            return Err(Error::TableShape(format!(
                "{} count rows for {} inputs",
                self.counts.len(),
                self.inputs.len()
            )));
        }
        if let Some(row) = self.counts.iter().find(|r| r.len() != self.projectors.len()) {
            return Err(Error::TableShape(format!(
                "count row has {} cells for {} projectors",
                row.len(),
                self.projectors.len()
            )));
        }
        Ok(())
    }

    pub fn row(&self, a: usize) -> Vec<f64> {
        self.counts[a].iter().map(|&n| n as f64).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{elementary_basis, pauli_basis, ChiMatrix};
    use crate::states::Polarization;

    #[test]
    fn canonical_basis_is_orthonormal() {
        let b = canonical_state_basis(2).unwrap();
        assert_eq!(b.states()[1], CMatrix::unit(2, 0, 1));
        assert_eq!(b.states()[2], CMatrix::unit(2, 1, 0));
        assert!((&b.gram() - &CMatrix::identity(4)).max_abs() < 1e-15);
        assert_eq!(canonical_state_basis(3).unwrap().states().len(), 9);
    }

    #[test]
    fn degenerate_state_basis_rejected() {
        let h = Polarization::H.projector();
        let states = vec![h.clone(), h.clone(), Polarization::V.projector(), Polarization::D.projector()];
        assert!(StateBasis::new(states).is_err());
    }

    #[test]
    fn beta_identity_block() {
        let states = canonical_state_basis(2).unwrap();
        let beta = build_beta(&pauli_basis(), &states).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((beta.get(0, 0, j, k).re - want).abs() < 1e-15);
            }
        }
        // σx |0⟩⟨0| σx = |1⟩⟨1|
        for k in 0..4 {
            let want = if k == 3 { 1.0 } else { 0.0 };
            assert!((beta.get(1, 1, 0, k) - C64::new(want, 0.0)).norm() < 1e-15);
        }
        assert!(beta_defining_residual(&beta, &pauli_basis(), &states) < 1e-12);
    }

    #[test]
    fn tau_inverts_beta() {
        let id = BetaTensor::identity(4);
        let tau = invert_beta(&id).unwrap();
        assert!((tau.mat() - &CMatrix::identity(16)).max_abs() < 1e-15);

        for basis in [pauli_basis(), elementary_basis(2).unwrap()] {
            let inv = LinearInverter::new(&basis).unwrap();
            assert!(inv.tau().delta_residual(inv.beta()) < 1e-10);
            let b = inv.beta().mat();
            let bab = &(b * inv.tau().mat()) * b;
            assert!((&bab - b).max_abs() < 1e-8);
        }
    }

    #[test]
    fn singular_beta_rejected() {
        let beta = BetaTensor {
            n: 2,
            mat: CMatrix::zeros(4, 4),
        };
        assert!(matches!(invert_beta(&beta), Err(Error::Singular(_))));
    }

    fn six_projectors() -> Vec<CMatrix> {
        Polarization::ALL.iter().map(|p| p.projector()).collect()
    }

    fn forward_counts(rho: &CMatrix, exposure: f64) -> Vec<f64> {
        six_projectors()
            .iter()
            .map(|p| exposure * (p * rho).trace().re)
            .collect()
    }

    #[test]
    fn tomography_of_attenuated_horizontal() {
        let rho = Polarization::H.projector().scale(0.7);
        let est = state_tomography(&six_projectors(), &forward_counts(&rho, 1e4), 1e4).unwrap();
        assert!((est.trace() - 0.7).abs() < 1e-12);
        assert!((est.mat() - &rho).max_abs() < 1e-12);
    }

    #[test]
    fn tomography_of_zero_and_mixed() {
        let est = state_tomography(&six_projectors(), &[0.0; 6], 100.0).unwrap();
        assert_eq!(est.mat().max_abs(), 0.0);

        let rho = CMatrix::identity(2).scale(0.25);
        let est = state_tomography(&six_projectors(), &forward_counts(&rho, 500.0), 500.0).unwrap();
        assert!((est.mat() - &rho).max_abs() < 1e-12);
    }

    #[test]
    fn tomography_needs_complete_analyzers() {
        let partial: Vec<CMatrix> = six_projectors().into_iter().take(3).collect();
        assert!(matches!(
            StateTomographer::new(&partial),
            Err(Error::IncompleteAnalyzers(_))
        ));
        let tomo = StateTomographer::new(&six_projectors()).unwrap();
        assert!(matches!(
            tomo.estimate(&[1.0; 5], 10.0),
            Err(Error::IncompleteAnalyzers(_))
        ));
    }

    #[test]
    fn identity_lambda_and_chi() {
        let inputs = six_projectors();
        let outputs: Vec<DensityMatrix> = inputs
            .iter()
            .map(|r| DensityMatrix::from_hermitian(r.clone()).unwrap())
            .collect();
        let inv = LinearInverter::new(&pauli_basis()).unwrap();
        let fit = lambda_from_outputs(&outputs, &inputs, inv.states()).unwrap();
        assert!((fit.lambda.mat() - &CMatrix::identity(4)).max_abs() < 1e-12);
        assert!(fit.residual < 1e-10);
        let li = inv.invert(&fit.lambda).unwrap();
        let want = ChiMatrix::identity(&pauli_basis()).unwrap();
        assert!((li.chi.mat() - want.mat()).max_abs() < 1e-12);
        assert!(!li.non_psd);
    }

    #[test]
    fn rank_deficient_inputs_rejected() {
        let inputs: Vec<CMatrix> = [Polarization::H, Polarization::V, Polarization::D]
            .iter()
            .map(|p| p.projector())
            .collect();
        let outputs: Vec<DensityMatrix> = inputs
            .iter()
            .map(|r| DensityMatrix::from_hermitian(r.clone()).unwrap())
            .collect();
        let states = canonical_state_basis(2).unwrap();
        assert!(matches!(
            lambda_from_outputs(&outputs, &inputs, &states),
            Err(Error::RankDeficientInputs { rank: 3, needed: 4 })
        ));
    }

    #[test]
    fn count_table_validation() {
        let labels = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let ok = CountTable::new(2, labels(&["H"]), labels(&["H", "V"]), 10.0, vec![vec![1, 2]]);
        assert!(ok.is_ok());
        let bad = CountTable::new(2, labels(&["H"]), labels(&["H", "V"]), 10.0, vec![vec![1]]);
        assert!(matches!(bad, Err(Error::TableShape(_))));
        let json = ok.unwrap().to_json().unwrap();
        assert!(json.contains("\"schema\": 1"));
        assert!(CountTable::from_json(&json).is_ok());
    }
}
