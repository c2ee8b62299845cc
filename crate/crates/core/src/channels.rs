//! Channel representations: operator bases, chi (process) matrices, Kraus
//! sets, the success-probability operator and process fidelities.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    clamp_spectrum, herm_eig, psd_projection, state_fidelity, CMatrix, EigDecomposition, C64,
    DEFAULT_CLAMP_TOL, HERMITIAN_TOL, I, ONE, ZERO,
};

const BASIS_NORM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const KRAUS_DROP_TOL: f64 = 1e-12;
const PHYSICAL_TOL: f64 = 1e-9;
/// Eigenvalues of P closer than this are treated as equal.
pub const P_CLASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisLabel {
    Pauli,
    ElementaryScaled,
    Custom(String),
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisLabel::Pauli => f.write_str("pauli"),
            BasisLabel::ElementaryScaled => f.write_str("elementary-scaled"),
            BasisLabel::Custom(name) => f.write_str(name),
        }
    }
}

impl BasisLabel {
    pub fn parse(s: &str) -> Self {
        match s {
            "pauli" => BasisLabel::Pauli,
            "elementary-scaled" => BasisLabel::ElementaryScaled,
            other => BasisLabel::Custom(other.to_string()),
        }
    }
}

/// A complete set of d² operators with Tr[A_m A_n†] = d δ_mn.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    dim: usize,
    ops: Vec<CMatrix>,
    label: BasisLabel,
}

impl OperatorBasis {
    pub fn new(label: BasisLabel, ops: Vec<CMatrix>) -> Result<Self> {
        let dim = ops
            .first()
            .map(|op| op.rows())
            .ok_or_else(|| Error::InvalidBasis("empty operator list".into()))?;
        if ops.len() != dim * dim {
            return Err(Error::InvalidBasis(format!(
                "need {} operators for dimension {dim}, got {}",
                dim * dim,
                ops.len()
            )));
        }
        if ops.iter().any(|op| op.shape() != (dim, dim)) {
            return Err(Error::InvalidBasis(format!("every operator must be {dim}x{dim}")));
        }
        for (m, a) in ops.iter().enumerate() {
            for (n, b) in ops.iter().enumerate() {
                // Tr[A_m A_n†] = Tr[A_n† A_m]
                let g = b.inner(a);
                let want = if m == n { dim as f64 } else { 0.0 };
                if (g - C64::new(want, 0.0)).norm() > BASIS_NORM_TOL * dim as f64 {
                    return Err(Error::InvalidBasis(format!(
                        "Tr[A_{m} A_{n}†] = {g}, expected {want}"
                    )));
                }
            }
        }
        Ok(Self { dim, ops, label })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of operators, d².
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn label(&self) -> &BasisLabel {
        &self.label
    }

    /// Coefficients c_m with op = Σ_m c_m A_m.
    pub fn coefficients(&self, op: &CMatrix) -> Result<Vec<C64>> {
        if op.shape() != (self.dim, self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: op.rows(),
            });
        }
        let d = self.dim as f64;
        Ok(self.ops.iter().map(|a| a.inner(op) / d).collect())
    }

    pub fn combine(&self, coeffs: &[C64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (c, a) in coeffs.iter().zip(&self.ops) {
            if *c != ZERO {
                out = &out + &a.scale_c(*c);
            }
        }
        out
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.label == other.label
            && self
                .ops
                .iter()
                .zip(&other.ops)
                .all(|(a, b)| (a - b).max_abs() <= 1e-15)
    }

    fn require_same(&self, other: &Self) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::BasisMismatch {
                left: self.label.to_string(),
                right: other.label.to_string(),
            })
        }
    }

    /// Basis for a serialized label. Custom bases need their operators.
    pub fn from_label(label: &BasisLabel, dim: usize) -> Result<Self> {
        match label {
            BasisLabel::Pauli if dim == 2 => Ok(pauli_basis()),
            BasisLabel::Pauli => Err(Error::InvalidBasis(format!(
                "pauli basis is defined for d = 2, not {dim}"
            ))),
            BasisLabel::ElementaryScaled => elementary_basis(dim),
            BasisLabel::Custom(name) => Err(Error::InvalidBasis(format!(
                "custom basis {name:?} requires explicit operators"
            ))),
        }
    }
}

/// {I, σx, σy, σz}.
pub fn pauli_basis() -> OperatorBasis {
    let id = CMatrix::identity(2);
    let x = CMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap();
    let y = CMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]).unwrap();
    let z = CMatrix::from_vec(2, 2, vec![ONE, ZERO, ZERO, -ONE]).unwrap();
    OperatorBasis::new(BasisLabel::Pauli, vec![id, x, y, z]).expect("Pauli basis is normalized")
}

/// √d |i⟩⟨j| in lexicographic (i, j) order.
pub fn elementary_basis(dim: usize) -> Result<OperatorBasis> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {dim}")));
    }
    let s = (dim as f64).sqrt();
    let ops = (0..dim * dim)
        .map(|k| CMatrix::unit(dim, k / dim, k % dim).scale(s))
        .collect();
    OperatorBasis::new(BasisLabel::ElementaryScaled, ops)
}

/// A d×d Hermitian operator standing for a (possibly unnormalized) state.
///
/// [`DensityMatrix::new`] enforces the full physical contract (PSD, trace
/// at most one). Tomographic estimates are only Hermitian in general and go
/// through [`DensityMatrix::from_hermitian`].
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl DensityMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        let rho = Self::from_hermitian(mat)?;
        let eig = herm_eig(&rho.mat)?;
        clamp_spectrum(&eig, DEFAULT_CLAMP_TOL)?;
        let tr = rho.trace();
        if tr > 1.0 + PHYSICAL_TOL {
            return Err(Error::Representation(format!("state trace {tr} exceeds 1")));
        }
        Ok(rho)
    }

    pub fn from_hermitian(mat: CMatrix) -> Result<Self> {
        mat.require_hermitian()?;
        Ok(Self {
            mat: mat.hermitian_part(),
        })
    }

    /// |ψ⟩⟨ψ|, normalized.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let psi: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Ok(Self {
            mat: CMatrix::projector(&psi),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_mat(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mat: self.mat.scale(s),
        }
    }

    /// Unit-trace copy.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr.abs() <= f64::MIN_POSITIVE {
            return Err(Error::ZeroTrace);
        }
        Ok(self.scaled(1.0 / tr))
    }
}

/// Kraus operators {E_i}.
#[derive(Debug, Clone)]
pub struct KrausSet {
    dim: usize,
    ops: Vec<CMatrix>,
}

impl KrausSet {
    /// Shape checks only; see [`KrausSet::physical`] for Σ E†E ≤ I.
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let dim = ops
            .first()
            .map(|op| op.rows())
            .ok_or_else(|| Error::Representation("empty Kraus set".into()))?;
        if ops.len() > dim * dim {
            return Err(Error::Representation(format!(
                "{} Kraus operators exceed d² = {}",
                ops.len(),
                dim * dim
            )));
        }
        if ops.iter().any(|op| op.shape() != (dim, dim)) {
            return Err(Error::Representation(format!(
                "every Kraus operator must be {dim}x{dim}"
            )));
        }
        Ok(Self { dim, ops })
    }

    pub fn physical(ops: Vec<CMatrix>) -> Result<Self> {
        let k = Self::new(ops)?;
        let top = k.completeness_excess()?;
        if top > PHYSICAL_TOL {
            return Err(Error::Unphysical(1.0 + top));
        }
        Ok(k)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    /// Σ E_i† E_i.
    pub fn completeness(&self) -> CMatrix {
        self.ops
            .iter()
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, e| {
                &acc + &(&e.adjoint() * e)
            })
    }

    /// Largest eigenvalue of Σ E†E − I.
    pub fn completeness_excess(&self) -> Result<f64> {
        let m = &self.completeness() - &CMatrix::identity(self.dim);
        Ok(herm_eig(&m.hermitian_part())?.max())
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        self.ops.iter().fold(CMatrix::zeros(self.dim, self.dim), |acc, e| {
            &acc + &(&(e * rho) * &e.adjoint())
        })
    }

    /// Coefficient matrix a_im of E_i = Σ_m a_im A_m.
    pub fn coefficients(&self, basis: &OperatorBasis) -> Result<Vec<Vec<C64>>> {
        self.ops.iter().map(|e| basis.coefficients(e)).collect()
    }
}

/// Process matrix χ_mn relative to an operator basis.
#[derive(Debug, Clone)]
pub struct ChiMatrix {
    basis: OperatorBasis,
    mat: CMatrix,
}

impl ChiMatrix {
    /// Checks shape and hermiticity. Positivity is not enforced because
    /// linear inversion legitimately produces non-PSD matrices; see
    /// [`ChiMatrix::is_physical`].
    pub fn new(basis: OperatorBasis, mat: CMatrix) -> Result<Self> {
        let n = basis.len();
        if mat.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: mat.rows(),
            });
        }
        if !mat.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::Representation(format!(
                "chi matrix is not Hermitian (defect {:.3e})",
                mat.hermitian_defect()
            )));
        }
        Ok(Self {
            basis,
            mat: mat.hermitian_part(),
        })
    }

    /// Identity channel in the given basis.
    pub fn identity(basis: &OperatorBasis) -> Result<Self> {
        chi_from_kraus(&KrausSet::new(vec![CMatrix::identity(basis.dim())])?, basis)
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            mat: self.mat.scale(s),
        }
    }

    pub fn spectrum(&self) -> Result<EigDecomposition> {
        herm_eig(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.spectrum()?.min())
    }

    /// PSD within tolerance and P ≤ I.
    pub fn is_physical(&self) -> Result<bool> {
        let eig = self.spectrum()?;
        if eig.min() < -PSD_TOL * eig.max().max(0.0) {
            return Ok(false);
        }
        Ok(probability_operator(self)?.max_eigenvalue() <= 1.0 + PHYSICAL_TOL)
    }

    /// Nearest PSD matrix (negative eigenvalues dropped) and the most
    /// negative eigenvalue of the original.
    pub fn psd_repaired(&self) -> Result<(Self, f64)> {
        let (mat, min) = psd_projection(&self.mat)?;
        Ok((
            Self {
                basis: self.basis.clone(),
                mat: mat.hermitian_part(),
            },
            min,
        ))
    }

    /// E(ρ) = Σ_mn χ_mn A_m ρ A_n† on an arbitrary d×d operator.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        let d = self.dim();
        if rho.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rho.rows(),
            });
        }
        let ops = self.basis.ops();
        let left: Vec<CMatrix> = ops.iter().map(|a| a * rho).collect();
        let rights: Vec<CMatrix> = ops.iter().map(|a| a.adjoint()).collect();
        let mut out = CMatrix::zeros(d, d);
        for (m, lm) in left.iter().enumerate() {
            for (n, an) in rights.iter().enumerate() {
                let c = self.mat[(m, n)];
                if c == ZERO {
                    continue;
                }
                out = &out + &(lm * an).scale_c(c);
            }
        }
        Ok(out)
    }
}

/// E(ρ). The output is not renormalized; its trace is Tr[Pρ].
pub fn apply_channel(chi: &ChiMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::from_hermitian(chi.apply(rho.mat())?)
}

/// χ_mn = Σ_i a_im a*_in.
pub fn chi_from_kraus(kraus: &KrausSet, basis: &OperatorBasis) -> Result<ChiMatrix> {
    if kraus.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: kraus.dim(),
        });
    }
    let n = basis.len();
    let coeffs = kraus.coefficients(basis)?;
    let mut mat = CMatrix::zeros(n, n);
    for a in &coeffs {
        for m in 0..n {
            for k in 0..n {
                mat[(m, k)] += a[m] * a[k].conj();
            }
        }
    }
    ChiMatrix::new(basis.clone(), mat)
}

/// Spectral factorization E_i = √λ_i Σ_m V_mi A_m, dropping components
/// below 1e-12 λ_max.
pub fn kraus_from_chi(chi: &ChiMatrix) -> Result<KrausSet> {
    let eig = chi.spectrum()?;
    clamp_spectrum(&eig, DEFAULT_CLAMP_TOL)?;
    let top = eig.max();
    if top <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    let mut ops = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate().rev() {
        if lam < KRAUS_DROP_TOL * top {
            continue;
        }
        let coeffs: Vec<C64> = eig
            .eigenvectors
            .col(k)
            .into_iter()
            .map(|v| v * lam.sqrt())
            .collect();
        ops.push(chi.basis().combine(&coeffs));
    }
    KrausSet::new(ops)
}

/// χ' = U χ U† with U_km = Tr[A'_k† A_m]/d.
pub fn change_basis(chi: &ChiMatrix, target: &OperatorBasis) -> Result<ChiMatrix> {
    if target.dim() != chi.dim() {
        return Err(Error::DimensionMismatch {
            expected: chi.dim(),
            found: target.dim(),
        });
    }
    // Re-validate in case the target was built without the constructor's checks.
    let target = OperatorBasis::new(target.label().clone(), target.ops().to_vec())?;
    let n = target.len();
    let mut u = CMatrix::zeros(n, n);
    for (m, a) in chi.basis().ops().iter().enumerate() {
        let c = target.coefficients(a)?;
        for k in 0..n {
            u[(k, m)] = c[k];
        }
    }
    let mat = &(&u * chi.mat()) * &u.adjoint();
    ChiMatrix::new(target, mat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilityClass {
    /// P = I.
    TracePreserving,
    /// P = p I with p < 1.
    UniformLossy,
    /// P has at least two distinct eigenvalues.
    StateDependent,
}

impl fmt::Display for ProbabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbabilityClass::TracePreserving => "trace-preserving",
            ProbabilityClass::UniformLossy => "uniform-lossy",
            ProbabilityClass::StateDependent => "state-dependent",
        })
    }
}

/// P = Σ_mn χ_mn A_n† A_m; Tr[E(ρ)] = Tr[Pρ].
#[derive(Debug, Clone)]
pub struct ProbabilityOperator {
    mat: CMatrix,
    spectrum: EigDecomposition,
}

impl ProbabilityOperator {
    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        let spectrum = herm_eig(&mat)?;
        Ok(Self {
            mat: mat.hermitian_part(),
            spectrum,
        })
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn spectrum(&self) -> &EigDecomposition {
        &self.spectrum
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.spectrum.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.spectrum.max()
    }

    pub fn classify(&self) -> ProbabilityClass {
        let lo = self.spectrum.min();
        let hi = self.spectrum.max();
        if hi - lo > P_CLASS_TOL {
            ProbabilityClass::StateDependent
        } else if (hi - 1.0).abs() <= P_CLASS_TOL && (lo - 1.0).abs() <= P_CLASS_TOL {
            ProbabilityClass::TracePreserving
        } else {
            ProbabilityClass::UniformLossy
        }
    }

    /// Success probability Tr[Pρ].
    pub fn success_probability(&self, rho: &CMatrix) -> f64 {
        (&self.mat * rho).trace().re
    }
}

pub fn probability_operator(chi: &ChiMatrix) -> Result<ProbabilityOperator> {
    let d = chi.dim();
    let ops = chi.basis().ops();
    let mut p = CMatrix::zeros(d, d);
    for (m, am) in ops.iter().enumerate() {
        for (n, an) in ops.iter().enumerate() {
            let c = chi.mat()[(m, n)];
            if c == ZERO {
                continue;
            }
            p = &p + &(&an.adjoint() * am).scale_c(c);
        }
    }
    ProbabilityOperator::from_matrix(p)
}

/// ρ_E = (I ⊗ E)|Φ⟩⟨Φ| with |Φ⟩ = Σ_j |jj⟩/√d; the first tensor factor is
/// the untouched reference system.
pub fn jamiolkowski_state(chi: &ChiMatrix) -> Result<DensityMatrix> {
    let d = chi.dim();
    let mut out = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let image = chi.apply(&CMatrix::unit(d, i, j))?;
            let block = CMatrix::unit(d, i, j).kron(&image);
            out = &out + &block;
        }
    }
    DensityMatrix::from_hermitian(out.scale(1.0 / d as f64))
}

/// Δ(χ, χ_id) = F(χ/Tr χ, χ_id/Tr χ_id); insensitive to global loss.
pub fn process_fidelity_ntp(chi: &ChiMatrix, chi_id: &ChiMatrix) -> Result<f64> {
    process_fidelity_ntp_with(chi, chi_id, DEFAULT_CLAMP_TOL)
}

pub fn process_fidelity_ntp_with(chi: &ChiMatrix, chi_id: &ChiMatrix, clamp_tol: f64) -> Result<f64> {
    chi.basis().require_same(chi_id.basis())?;
    let ta = chi.trace();
    let tb = chi_id.trace();
    if ta <= 0.0 || tb <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    state_fidelity(
        &chi.mat().scale(1.0 / ta),
        &chi_id.mat().scale(1.0 / tb),
        clamp_tol,
    )
}

/// Process fidelity of two trace-preserving channels (unit-trace chi).
pub fn process_fidelity_tp(chi_a: &ChiMatrix, chi_b: &ChiMatrix) -> Result<f64> {
    for tr in [chi_a.trace(), chi_b.trace()] {
        if (tr - 1.0).abs() > 1e-6 {
            return Err(Error::TraceNotUnit(tr));
        }
    }
    process_fidelity_ntp(chi_a, chi_b)
}
