//! Maximum-likelihood reconstruction of χ.
//!
//! χ̃(t) = T(t)†T(t) with T lower triangular and real on the diagonal, so
//! every parameter vector maps to a PSD process matrix. The objective is
//! the weighted least-squares surrogate of the Poisson likelihood,
//!
//! ```text
//! f(t) = Σ_ab [n_ab − N Σ_mn ⟨ψ_b|A_m|φ_a⟩⟨φ_a|A_n†|ψ_b⟩ χ̃_mn(t)]² / w_ab
//! ```
//!
//! Besides the unconstrained fit this module carries the two
//! trace-preserving approximations: a fit constrained to P = I and the
//! post-selected reconstruction from normalized output states.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channels::{probability_operator, ChiMatrix, DensityMatrix, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_psd, herm_eig, CMatrix, C64, DEFAULT_CLAMP_TOL, ZERO};
use crate::optim::{Minimum, NelderMead};
use crate::states::Protocol;
use crate::tomography::{CountTable, LinearInversion, LinearInverter, StateTomographer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Linear,
    Mle,
    MleTp,
    PostSelected,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Linear, Method::Mle, Method::MleTp, Method::PostSelected];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::Mle => "mle",
            Method::MleTp => "mle-tp",
            Method::PostSelected => "post-selected",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// How zero-count cells enter the weights 1/w_ab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroCountPolicy {
    /// w_ab = max(n_ab, 1).
    Floor,
    /// Cells with n_ab = 0 are left out.
    Drop,
}

/// Parameter vector of the lower-triangular factor.
///
/// Layout: the n real diagonal entries first, then (re, im) pairs for the
/// strictly lower entries in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MleParams {
    n: usize,
    t: Vec<f64>,
}

impl MleParams {
    pub fn new(n: usize, t: Vec<f64>) -> Result<Self> {
        if t.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: t.len(),
            });
        }
        Ok(Self { n, t })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, t: vec![0.0; n * n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }

    pub fn factor(&self) -> CMatrix {
        factor_from(self.n, &self.t)
    }

    /// χ̃(t) = T†T.
    pub fn chi_matrix(&self) -> CMatrix {
        let t = self.factor();
        &t.adjoint() * &t
    }

    /// Parameters reproducing a PSD matrix. Uses a semidefinite Cholesky
    /// factor of the index-reversed matrix so that T comes out lower
    /// triangular with T†T = χ.
    pub fn from_chi(chi: &CMatrix) -> Result<Self> {
        let n = chi.require_hermitian()?;
        let rev = CMatrix::from_fn(n, n, |i, j| chi[(n - 1 - i, n - 1 - j)]);
        let l = cholesky_psd(&rev, 1e-13)?;
        // χ = U U† with U = J L J upper triangular; T = U†.
        let t = CMatrix::from_fn(n, n, |i, j| l[(n - 1 - j, n - 1 - i)].conj());
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            out[i] = t[(i, i)].re;
        }
        let mut k = n;
        for i in 0..n {
            for j in 0..i {
                out[k] = t[(i, j)].re;
                out[k + 1] = t[(i, j)].im;
                k += 2;
            }
        }
        Ok(Self { n, t: out })
    }
}

fn factor_from(n: usize, t: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(t[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = C64::new(t[k], t[k + 1]);
            k += 2;
        }
    }
    m
}

/// T(t)†T(t).
fn gram_of(n: usize, t: &[f64]) -> CMatrix {
    let f = factor_from(n, t);
    &f.adjoint() * &f
}

#[derive(Debug, Clone)]
struct Cell {
    /// conj(⟨ψ_b|A_m|φ_a⟩) over m.
    amp: Vec<C64>,
    count: f64,
    inv_weight: f64,
}

/// Precomputed objective for one count table.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    n: usize,
    exposure: f64,
    cells: Vec<Cell>,
}

impl LikelihoodModel {
    pub fn new(
        counts: &CountTable,
        protocol: &Protocol,
        basis: &OperatorBasis,
        zero_counts: ZeroCountPolicy,
    ) -> Result<Self> {
        check_protocol(counts, protocol)?;
        if basis.dim() != counts.dim {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: counts.dim,
            });
        }
        let inputs = protocol.input_kets();
        let analyzers = protocol.analyzer_kets();
        let mut cells = Vec::with_capacity(inputs.len() * analyzers.len());
        for (a, phi) in inputs.iter().enumerate() {
            for (b, psi) in analyzers.iter().enumerate() {
                let n_ab = counts.counts[a][b] as f64;
                if n_ab == 0.0 && zero_counts == ZeroCountPolicy::Drop {
                    continue;
                }
                let amp = basis
                    .ops()
                    .iter()
                    .map(|op| {
                        let a_phi = op.matvec(phi);
                        psi.iter().zip(&a_phi).map(|(p, v)| p.conj() * v).sum::<C64>().conj()
                    })
                    .collect();
                cells.push(Cell {
                    amp,
                    count: n_ab,
                    inv_weight: 1.0 / n_ab.max(1.0),
                });
            }
        }
        Ok(Self {
            n: basis.len(),
            exposure: counts.exposure,
            cells,
        })
    }

    pub fn param_len(&self) -> usize {
        self.n * self.n
    }

    /// f(t).
    pub fn value(&self, t: &[f64]) -> f64 {
        let n = self.n;
        let tm = factor_from(n, t);
        let mut total = 0.0;
        for cell in &self.cells {
            // model = ‖T conj(u)‖²
            let mut p = 0.0;
            for i in 0..n {
                let row = &tm.row(i)[..=i];
                let w: C64 = row.iter().zip(&cell.amp).map(|(a, b)| a * b).sum();
                p += w.norm_sqr();
            }
            let r = cell.count - self.exposure * p;
            total += r * r * cell.inv_weight;
        }
        total
    }

    /// f evaluated directly on a χ matrix (which need not be PSD).
    pub fn value_for_chi(&self, chi: &CMatrix) -> f64 {
        let mut total = 0.0;
        for cell in &self.cells {
            let mut p = ZERO;
            for m in 0..self.n {
                for k in 0..self.n {
                    p += chi[(m, k)] * cell.amp[m].conj() * cell.amp[k];
                }
            }
            let r = cell.count - self.exposure * p.re;
            total += r * r * cell.inv_weight;
        }
        total
    }
}

/// f(t) for a single evaluation; build a [`LikelihoodModel`] when
/// evaluating repeatedly.
pub fn likelihood(
    t: &MleParams,
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
) -> Result<f64> {
    let model = LikelihoodModel::new(counts, protocol, basis, ZeroCountPolicy::Floor)?;
    if t.n != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            found: t.n,
        });
    }
    Ok(model.value(&t.t))
}

fn check_protocol(counts: &CountTable, protocol: &Protocol) -> Result<()> {
    counts.validate()?;
    let inputs: Vec<String> = protocol.inputs.iter().map(|p| p.to_string()).collect();
    let analyzers: Vec<String> = protocol.analyzers.iter().map(|p| p.to_string()).collect();
    if inputs != counts.inputs || analyzers != counts.projectors {
        return Err(Error::TableShape(format!(
            "table labels {:?}/{:?} do not match protocol {:?}/{:?}",
            counts.inputs, counts.projectors, inputs, analyzers
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Total starts: one from linear inversion plus random ones.
    pub restarts: usize,
    pub optimizer: NelderMead,
    /// Initial simplex edge as a fraction of √Tr χ_seed.
    pub step_fraction: f64,
    pub seed: u64,
    pub zero_counts: ZeroCountPolicy,
    /// Extra Nelder-Mead runs from the best point after the restarts.
    pub polish_rounds: usize,
    pub penalty_start: f64,
    pub penalty_growth: f64,
    pub max_penalty_stages: usize,
    /// Target for ‖P − I‖_F in the constrained fit.
    pub residual_target: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            optimizer: NelderMead::default(),
            step_fraction: 0.05,
            seed: 0,
            zero_counts: ZeroCountPolicy::Floor,
            polish_rounds: 2,
            penalty_start: 1.0,
            penalty_growth: 10.0,
            max_penalty_stages: 24,
            residual_target: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub method: Method,
    pub chi: ChiMatrix,
    /// f at the fitted (pre-normalization) χ.
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts_used: usize,
    /// ‖P − I‖_F, constrained fit only.
    pub constraint_residual: Option<f64>,
    /// λ_max(P) before rescaling; χ was divided by this.
    pub normalization_scale: f64,
    pub seed: u64,
    /// Smallest eigenvalue of the reconstructed χ before any PSD repair.
    pub min_chi_eigenvalue: f64,
}

/// Divide χ by λ_max(P) so the most transmitted state has success
/// probability one.
pub fn normalize_max_p(chi: &ChiMatrix) -> Result<(ChiMatrix, f64)> {
    let top = probability_operator(chi)?.max_eigenvalue();
    if !(top > 0.0) {
        return Err(Error::ZeroTrace);
    }
    Ok((chi.scaled(1.0 / top), top))
}

/// Unnormalized output estimates, one per prepared input.
pub fn tomograph_outputs(counts: &CountTable, protocol: &Protocol) -> Result<Vec<DensityMatrix>> {
    check_protocol(counts, protocol)?;
    let tomo = StateTomographer::new(&protocol.analyzer_projectors())?;
    (0..counts.inputs.len())
        .map(|a| tomo.estimate(&counts.row(a), counts.exposure))
        .collect()
}

pub fn linear_reconstruction(
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
) -> Result<LinearInversion> {
    let outputs = tomograph_outputs(counts, protocol)?;
    LinearInverter::new(basis)?.reconstruct(&outputs, &protocol.input_states())
}

fn seeds(seed_chi: &ChiMatrix, opts: &FitOptions) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = seed_chi.basis().len();
    let first = MleParams::from_chi(seed_chi.mat())?;
    let scale = seed_chi.trace().max(1e-12).sqrt();
    let sigma = scale / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = vec![first.t];
    for _ in 1..opts.restarts.max(1) {
        out.push(
            (0..n * n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sigma * z
                })
                .collect::<Vec<f64>>(),
        );
    }
    Ok((out, scale))
}

struct Search {
    best: Minimum,
    evaluations: usize,
    iterations: usize,
}

/// Run from every start, keep the best (first wins ties), then polish.
fn multistart<F>(f: F, starts: &[Vec<f64>], step: f64, opts: &FitOptions) -> Search
where
    F: Fn(&[f64]) -> f64,
{
    let nm = NelderMead {
        initial_step: step,
        ..opts.optimizer
    };
    let mut evaluations = 0;
    let mut best: Option<Minimum> = None;
    for x0 in starts {
        let m = nm.minimize(&f, x0);
        evaluations += m.evaluations;
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    let mut iterations = best.iterations;
    let polish = NelderMead {
        initial_step: step * 0.1,
        ..nm
    };
    for _ in 0..opts.polish_rounds {
        let m = polish.minimize(&f, &best.x);
        evaluations += m.evaluations;
        iterations += m.iterations;
        if m.value < best.value {
            best = m;
        } else {
            break;
        }
    }
    Search {
        best,
        evaluations,
        iterations,
    }
}

fn seed_from_linear(counts: &CountTable, protocol: &Protocol, basis: &OperatorBasis) -> Result<ChiMatrix> {
    let li = linear_reconstruction(counts, protocol, basis)?;
    let (repaired, _) = li.chi.psd_repaired()?;
    if repaired.trace() > 0.0 {
        return Ok(repaired);
    }
    // All-dark data: start from a small identity instead of the zero map.
    Ok(ChiMatrix::identity(basis)?.scaled(1e-6))
}

/// Unconstrained maximum-likelihood fit, rescaled so λ_max(P) = 1.
pub fn fit_unconstrained(
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
    opts: &FitOptions,
) -> Result<FitReport> {
    let model = LikelihoodModel::new(counts, protocol, basis, opts.zero_counts)?;
    let seed_chi = seed_from_linear(counts, protocol, basis)?;
    let (starts, scale) = seeds(&seed_chi, opts)?;
    let seed_value = model.value(&starts[0]);

    let search = multistart(|t| model.value(t), &starts, opts.step_fraction * scale, opts);
    let best = &search.best;
    if !best.value.is_finite() || best.value > seed_value {
        return Err(Error::DegenerateFit {
            seed: seed_value,
            best: best.value,
        });
    }
    let params = MleParams::new(basis.len(), best.x.clone())?;
    let raw = ChiMatrix::new(basis.clone(), params.chi_matrix())?;
    let (chi, scale) = normalize_max_p(&raw)?;
    Ok(FitReport {
        method: Method::Mle,
        min_chi_eigenvalue: chi.min_eigenvalue()?,
        chi,
        objective: best.value,
        iterations: search.iterations,
        evaluations: search.evaluations,
        restarts_used: starts.len(),
        constraint_residual: None,
        normalization_scale: scale,
        seed: opts.seed,
    })
}

/// P(χ) − I for a matrix in `basis`.
fn tp_defect(chi: &CMatrix, basis: &OperatorBasis, products: &[CMatrix]) -> f64 {
    let n = basis.len();
    let d = basis.dim();
    let mut p = CMatrix::identity(d).scale(-1.0);
    for m in 0..n {
        for k in 0..n {
            let c = chi[(m, k)];
            if c != ZERO {
                p = &p + &products[k * n + m].scale_c(c);
            }
        }
    }
    p.frobenius_norm()
}

/// Map χ onto the trace-preserving set with E_i → E_i P^{-1/2}, i.e.
/// χ → R χ R† where A_m P^{-1/2} = Σ_k R_km A_k.
fn retract_to_tp(chi: &ChiMatrix) -> Result<ChiMatrix> {
    let basis = chi.basis();
    let p = probability_operator(chi)?;
    let eig = herm_eig(p.mat())?;
    let floor = 1e-12 * eig.max().max(1e-300);
    let inv_root = eig.reconstruct_with(|x| 1.0 / x.max(floor).sqrt());
    let n = basis.len();
    let mut r = CMatrix::zeros(n, n);
    for (m, a) in basis.ops().iter().enumerate() {
        for (k, c) in basis.coefficients(&(a * &inv_root))?.into_iter().enumerate() {
            r[(k, m)] = c;
        }
    }
    ChiMatrix::new(basis.clone(), (&(&r * chi.mat()) * &r.adjoint()).hermitian_part())
}

fn retract_params(t: &[f64], basis: &OperatorBasis) -> Result<Vec<f64>> {
    let chi = ChiMatrix::new(basis.clone(), gram_of(basis.len(), t))?;
    Ok(MleParams::from_chi(retract_to_tp(&chi)?.mat())?.t)
}

/// Maximum-likelihood fit constrained to P = I by a quadratic penalty
/// μ‖P − I‖²_F with continuation in μ. Each stage starts from the
/// previous optimum mapped back onto the constraint set.
pub fn fit_trace_preserving(
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
    opts: &FitOptions,
) -> Result<FitReport> {
    let model = LikelihoodModel::new(counts, protocol, basis, opts.zero_counts)?;
    let n = basis.len();
    let products: Vec<CMatrix> = (0..n * n)
        .map(|idx| &basis.ops()[idx / n].adjoint() * &basis.ops()[idx % n])
        .collect();
    let residual_of = |t: &[f64]| tp_defect(&gram_of(n, t), basis, &products);

    let seed_chi = seed_from_linear(counts, protocol, basis)?;
    let (raw_starts, _) = seeds(&seed_chi, opts)?;
    let starts = raw_starts
        .iter()
        .map(|t| retract_params(t, basis))
        .collect::<Result<Vec<_>>>()?;
    let step = opts.step_fraction; // Tr χ = 1 on the constraint set
    let seed_value = model.value(&starts[0]);

    let mut mu = opts.penalty_start;
    let mut evaluations = 0;
    let mut iterations = 0;
    let mut current: Option<Minimum> = None;
    let mut residual = f64::INFINITY;
    for stage in 0..opts.max_penalty_stages {
        let objective = |t: &[f64]| {
            let r = residual_of(t);
            model.value(t) + mu * r * r
        };
        let stage_starts = match &current {
            None => starts.clone(),
            Some(m) => vec![retract_params(&m.x, basis)?],
        };
        let stage_opts = FitOptions {
            polish_rounds: if stage == 0 { opts.polish_rounds } else { 0 },
            ..opts.clone()
        };
        let search = multistart(objective, &stage_starts, step, &stage_opts);
        evaluations += search.evaluations;
        iterations += search.iterations;
        residual = residual_of(&search.best.x);
        current = Some(search.best);
        if residual < opts.residual_target {
            break;
        }
        mu *= opts.penalty_growth;
    }
    let best = current.expect("at least one stage");
    if residual >= opts.residual_target {
        return Err(Error::PenaltyExhausted {
            stages: opts.max_penalty_stages,
            residual,
        });
    }
    let value = model.value(&best.x);
    if !value.is_finite() {
        return Err(Error::DegenerateFit {
            seed: seed_value,
            best: value,
        });
    }
    let chi = ChiMatrix::new(basis.clone(), gram_of(n, &best.x))?;
    Ok(FitReport {
        method: Method::MleTp,
        min_chi_eigenvalue: chi.min_eigenvalue()?,
        chi,
        objective: value,
        iterations,
        evaluations,
        restarts_used: starts.len(),
        constraint_residual: Some(residual),
        normalization_scale: 1.0,
        seed: opts.seed,
    })
}

/// Post-selected reconstruction: each output estimate is normalized to
/// unit trace before λ is extracted. The returned χ has negative
/// eigenvalues dropped; `min_chi_eigenvalue` reports the raw minimum.
pub fn fit_post_selected(
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
    opts: &FitOptions,
) -> Result<FitReport> {
    let raw = post_selected_raw(counts, protocol, basis)?;
    let (chi, min) = raw.chi.psd_repaired()?;
    let model = LikelihoodModel::new(counts, protocol, basis, opts.zero_counts)?;
    Ok(FitReport {
        method: Method::PostSelected,
        objective: model.value_for_chi(chi.mat()),
        chi,
        iterations: 0,
        evaluations: 0,
        restarts_used: 0,
        constraint_residual: None,
        normalization_scale: 1.0,
        seed: opts.seed,
        min_chi_eigenvalue: min,
    })
}

/// The post-selected χ before PSD repair.
pub fn post_selected_raw(
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
) -> Result<LinearInversion> {
    let outputs = tomograph_outputs(counts, protocol)?;
    let normalized = outputs
        .iter()
        .zip(&protocol.inputs)
        .map(|(rho, label)| {
            if rho.trace() <= 1e-12 {
                Err(Error::DarkInput(label.to_string()))
            } else {
                rho.normalized()
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LinearInverter::new(basis)?.reconstruct(&normalized, &protocol.input_states())
}

/// Linear inversion packaged as a report (χ kept raw, unnormalized).
pub fn fit_linear(
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
    opts: &FitOptions,
) -> Result<FitReport> {
    let li = linear_reconstruction(counts, protocol, basis)?;
    let model = LikelihoodModel::new(counts, protocol, basis, opts.zero_counts)?;
    Ok(FitReport {
        method: Method::Linear,
        objective: model.value_for_chi(li.chi.mat()),
        chi: li.chi,
        iterations: 0,
        evaluations: 0,
        restarts_used: 0,
        constraint_residual: None,
        normalization_scale: 1.0,
        seed: opts.seed,
        min_chi_eigenvalue: li.min_eigenvalue,
    })
}

pub fn reconstruct(
    method: Method,
    counts: &CountTable,
    protocol: &Protocol,
    basis: &OperatorBasis,
    opts: &FitOptions,
) -> Result<FitReport> {
    match method {
        Method::Linear => fit_linear(counts, protocol, basis, opts),
        Method::Mle => fit_unconstrained(counts, protocol, basis, opts),
        Method::MleTp => fit_trace_preserving(counts, protocol, basis, opts),
        Method::PostSelected => fit_post_selected(counts, protocol, basis, opts),
    }
}

/// χ suitable for fidelity evaluation: negative eigenvalues dropped.
pub fn fidelity_ready(chi: &ChiMatrix) -> Result<ChiMatrix> {
    if chi.min_eigenvalue()? >= -DEFAULT_CLAMP_TOL * chi.spectrum()?.max().max(1.0) {
        return Ok(chi.clone());
    }
    Ok(chi.psd_repaired()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{pauli_basis, process_fidelity_ntp};
    use crate::simulator::{ppbs_chi, simulate_counts, Noise, PpbsParams, SimConfig};

    fn noiseless(gamma: f64, exposure: f64) -> CountTable {
        let cfg = SimConfig::new(PpbsParams::from_gamma(gamma).unwrap(), exposure, 5, Noise::None).unwrap();
        simulate_counts(&cfg).unwrap()
    }

    #[test]
    fn params_are_psd_and_invertible() {
        let p = MleParams::new(4, (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let chi = p.chi_matrix();
        assert!(herm_eig(&chi).unwrap().min() > -1e-14);
        let back = MleParams::from_chi(&chi).unwrap();
        assert!((&back.chi_matrix() - &chi).max_abs() < 1e-12);
    }

    #[test]
    fn rank_one_seed_factors() {
        let chi = ppbs_chi(&PpbsParams::from_gamma(0.3).unwrap(), &pauli_basis()).unwrap();
        let p = MleParams::from_chi(chi.mat()).unwrap();
        assert!((&p.chi_matrix() - chi.mat()).max_abs() < 1e-12);
    }

    #[test]
    fn likelihood_examples() {
        let b = pauli_basis();
        let protocol = Protocol::six_state();
        let counts = noiseless(1.0, 1e4);
        let exact = MleParams::from_chi(ChiMatrix::identity(&b).unwrap().mat()).unwrap();
        assert!(likelihood(&exact, &counts, &protocol, &b).unwrap() < 1e-18);

        let zero = MleParams::zeros(4);
        let want: f64 = counts
            .counts
            .iter()
            .flatten()
            .map(|&n| (n as f64).powi(2) / (n as f64).max(1.0))
            .sum();
        let got = likelihood(&zero, &counts, &protocol, &b).unwrap();
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn zero_count_policy_drop() {
        let b = pauli_basis();
        let protocol = Protocol::six_state();
        let counts = noiseless(1.0, 100.0);
        let floor = LikelihoodModel::new(&counts, &protocol, &b, ZeroCountPolicy::Floor).unwrap();
        let drop = LikelihoodModel::new(&counts, &protocol, &b, ZeroCountPolicy::Drop).unwrap();
        assert!(drop.cells.len() < floor.cells.len());
        let zero = vec![0.0; 16];
        assert!((floor.value(&zero) - drop.value(&zero)).abs() < 1e-9);
    }

    #[test]
    fn mismatched_protocol_rejected() {
        let counts = noiseless(0.5, 1e3);
        let protocol = Protocol::with_inputs(&[crate::states::Polarization::H]);
        let r = fit_unconstrained(&counts, &protocol, &pauli_basis(), &FitOptions::default());
        assert!(matches!(r, Err(Error::TableShape(_))));
    }

    #[test]
    fn normalize_examples() {
        let b = pauli_basis();
        let chi = ppbs_chi(&PpbsParams::new(0.5, 0.25).unwrap(), &b).unwrap();
        let (scaled, s) = normalize_max_p(&chi).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        let want = ppbs_chi(&PpbsParams::new(1.0, 0.5).unwrap(), &b).unwrap();
        assert!((scaled.mat() - want.mat()).max_abs() < 1e-15);
        let (_, s2) = normalize_max_p(&scaled).unwrap();
        assert!((s2 - 1.0).abs() < 1e-12);

        let zero = ChiMatrix::new(b, CMatrix::zeros(4, 4)).unwrap();
        assert!(matches!(normalize_max_p(&zero), Err(Error::ZeroTrace)));
    }

    #[test]
    fn identity_fit_is_identity() {
        let b = pauli_basis();
        let counts = noiseless(1.0, 1e4);
        let r = fit_unconstrained(&counts, &Protocol::six_state(), &b, &FitOptions::default()).unwrap();
        let id = ChiMatrix::identity(&b).unwrap();
        assert!((r.chi.mat() - id.mat()).max_abs() < 1e-6);
        let p = probability_operator(&r.chi).unwrap();
        assert!((p.mat() - &CMatrix::identity(2)).max_abs() < 1e-6);
    }

    #[test]
    fn noiseless_ppbs_fit() {
        let b = pauli_basis();
        let counts = noiseless(0.5, 1e4);
        let r = fit_unconstrained(&counts, &Protocol::six_state(), &b, &FitOptions::default()).unwrap();
        let truth = ppbs_chi(&PpbsParams::from_gamma(0.5).unwrap(), &b).unwrap();
        assert!(process_fidelity_ntp(&r.chi, &truth).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn tp_fit_on_identity_data() {
        let b = pauli_basis();
        let counts = noiseless(1.0, 1e4);
        let r = fit_trace_preserving(&counts, &Protocol::six_state(), &b, &FitOptions::default()).unwrap();
        assert!(r.constraint_residual.unwrap() < 1e-6);
        let id = ChiMatrix::identity(&b).unwrap();
        assert!((r.chi.mat() - id.mat()).max_abs() < 1e-6);
    }

    #[test]
    fn retraction_lands_on_tp_set() {
        let b = pauli_basis();
        let chi = ppbs_chi(&PpbsParams::from_gamma(0.3).unwrap(), &b).unwrap();
        let tp = retract_to_tp(&chi).unwrap();
        let p = probability_operator(&tp).unwrap();
        assert!((p.mat() - &CMatrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn post_selected_on_tp_data_matches_linear() {
        let b = pauli_basis();
        let counts = noiseless(1.0, 1e4);
        let protocol = Protocol::six_state();
        let ps = fit_post_selected(&counts, &protocol, &b, &FitOptions::default()).unwrap();
        let li = fit_linear(&counts, &protocol, &b, &FitOptions::default()).unwrap();
        assert!((ps.chi.mat() - li.chi.mat()).max_abs() < 1e-12);
    }

    #[test]
    fn post_selection_rejects_dark_input() {
        let cfg = SimConfig::new(PpbsParams::new(1.0, 0.0).unwrap(), 1e4, 1, Noise::None).unwrap();
        let counts = simulate_counts(&cfg).unwrap();
        let r = fit_post_selected(&counts, &Protocol::six_state(), &pauli_basis(), &FitOptions::default());
        assert!(matches!(r, Err(Error::DarkInput(ref l)) if l == "V"));
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("bayes".parse::<Method>().is_err());
    }
}
