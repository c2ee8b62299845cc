//! Small dense complex matrices and the Hermitian kernels built on them:
//! eigendecomposition by cyclic Jacobi rotations, PSD square roots and
//! Uhlmann fidelity.
//!
//! Everything here is sized for process tomography of one or two qudits,
//! i.e. matrices of at most a few dozen rows. Nothing is blocked or
//! vectorized.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative tolerance used when a matrix is required to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default relative eigenvalue clamp for PSD operations.
pub const DEFAULT_CLAMP_TOL: f64 = 1e-10;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Representation(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from nested rows of real numbers.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let diag: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&diag)
    }

    /// Column vector.
    pub fn column(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// |ψ⟩⟨ψ| for a column vector or plain slice.
    pub fn projector(psi: &[C64]) -> Self {
        Self::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    /// Matrix unit |i⟩⟨j| of size n.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = ONE;
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_c(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius inner product Tr[A† B].
    pub fn inner(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Kronecker product self ⊗ other.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = other.shape();
        Self::from_fn(self.rows * r2, self.cols * c2, |i, j| {
            self[(i / r2, j / c2)] * other[(i % r2, j % c2)]
        })
    }

    /// Largest |M - M†| entry.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.is_square() && self.hermitian_defect() <= rel_tol * self.max_abs().max(1.0)
    }

    /// (M + M†)/2.
    pub fn hermitian_part(&self) -> Self {
        let mut out = Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        });
        for i in 0..self.rows {
            out[(i, i)].im = 0.0;
        }
        out
    }

    pub fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::Representation(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    pub fn require_hermitian(&self) -> Result<usize> {
        let n = self.require_square()?;
        let defect = self.hermitian_defect();
        if defect > HERMITIAN_TOL * self.max_abs().max(1.0) {
            return Err(Error::Representation(format!(
                "matrix is not Hermitian (max |M - M†| = {defect:.3e})"
            )));
        }
        Ok(n)
    }

    /// Row-major vectorization, vec(M)[i*cols + j] = M[i, j].
    pub fn vectorize(&self) -> Vec<C64> {
        self.data.clone()
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Solve A X = B by Gauss-Jordan elimination with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let n = self.require_square()?;
        if rhs.rows != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.rows,
            });
        }
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&x, &y| a[(x, k)].norm().total_cmp(&a[(y, k)].norm()))
                .unwrap_or(k);
            if a[(pivot, k)].norm() <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            if pivot != k {
                for c in 0..n {
                    a.data.swap(k * n + c, pivot * n + c);
                }
                for c in 0..b.cols {
                    b.data.swap(k * b.cols + c, pivot * b.cols + c);
                }
            }
            let inv = ONE / a[(k, k)];
            for r in 0..n {
                if r == k {
                    continue;
                }
                let factor = a[(r, k)] * inv;
                if factor == ZERO {
                    continue;
                }
                for c in k..n {
                    let v = a[(k, c)];
                    a[(r, c)] -= factor * v;
                }
                for c in 0..b.cols {
                    let v = b[(k, c)];
                    b[(r, c)] -= factor * v;
                }
            }
        }
        for r in 0..n {
            let inv = ONE / a[(r, r)];
            for c in 0..b.cols {
                b[(r, c)] *= inv;
            }
        }
        Ok(b)
    }

    pub fn inverse(&self) -> Result<Self> {
        let n = self.require_square()?;
        self.solve(&Self::identity(n))
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:>+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Spectrum of a Hermitian matrix: ascending real eigenvalues and the
/// unitary whose columns are the matching eigenvectors.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl EigDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        self.reconstruct_with(|x| x)
    }

    /// V f(Λ) V†.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let v = &self.eigenvectors;
        let n = v.rows();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Projector onto the k-th eigenvector.
    pub fn projector(&self, k: usize) -> CMatrix {
        CMatrix::projector(&self.eigenvectors.col(k))
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues come back ascending; equal eigenvalues keep the
/// order in which the rotations left them.
pub fn herm_eig(m: &CMatrix) -> Result<EigDecomposition> {
    let n = m.require_hermitian()?;
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n);

    let total = a.frobenius_norm();
    if total == 0.0 || n == 1 {
        return Ok(finish_eig(a, v));
    }
    let target = (f64::EPSILON * total).powi(2);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if off <= target {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    Ok(finish_eig(a, v))
}

/// Annihilate a[p][q] with the unitary U = diag(1, e^{-iφ}) · R(θ).
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let n = a.rows();
    let beta = a[(p, q)];
    let mag = beta.norm();
    if mag < 1e-300 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let phase = beta / mag;

    let zeta = (aqq - app) / (2.0 * mag);
    let t = if zeta >= 0.0 {
        1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
    } else {
        -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // U restricted to the (p, q) plane.
    let ph = phase.conj();
    let u_pp = C64::new(c, 0.0);
    let u_pq = C64::new(s, 0.0);
    let u_qp = ph * (-s);
    let u_qq = ph * c;

    // A <- A U
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
    }
    // A <- U† A
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

fn finish_eig(a: CMatrix, v: CMatrix) -> EigDecomposition {
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps first-encountered order among ties.
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let eigenvalues = order.iter().map(|&k| a[(k, k)].re).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    EigDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Scale against which clamp tolerances are measured.
fn clamp_scale(eig: &EigDecomposition) -> f64 {
    eig.max().max(1.0)
}

/// Zero out eigenvalues within `clamp_tol * scale` of zero; anything more
/// negative than that is an error.
pub fn clamp_spectrum(eig: &EigDecomposition, clamp_tol: f64) -> Result<Vec<f64>> {
    let tol = clamp_tol * clamp_scale(eig);
    eig.eigenvalues
        .iter()
        .map(|&lam| {
            if lam < -tol {
                Err(Error::NotPsd { eigenvalue: lam })
            } else if lam <= tol {
                Ok(0.0)
            } else {
                Ok(lam)
            }
        })
        .collect()
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(m: &CMatrix, clamp_tol: f64) -> Result<CMatrix> {
    let eig = herm_eig(m)?;
    let clamped = clamp_spectrum(&eig, clamp_tol)?;
    let roots = EigDecomposition {
        eigenvalues: clamped.iter().map(|x| x.sqrt()).collect(),
        eigenvectors: eig.eigenvectors,
    };
    Ok(roots.reconstruct())
}

/// Project a Hermitian matrix onto the PSD cone by dropping negative
/// eigenvalues. Returns the projection and the most negative eigenvalue
/// of the input.
pub fn psd_projection(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let eig = herm_eig(m)?;
    let min = eig.min();
    Ok((eig.reconstruct_with(|x| x.max(0.0)), min))
}

/// Uhlmann fidelity (Tr √(√a b √a))². Inputs need not have unit trace.
pub fn state_fidelity(a: &CMatrix, b: &CMatrix, clamp_tol: f64) -> Result<f64> {
    let n = a.require_hermitian()?;
    let nb = b.require_hermitian()?;
    if n != nb {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: nb,
        });
    }
    clamp_spectrum(&herm_eig(b)?, clamp_tol)?;
    let sa = psd_sqrt(a, clamp_tol)?;
    let inner = (&(&sa * b) * &sa).hermitian_part();
    let eig = herm_eig(&inner)?;
    let root_trace: f64 = clamp_spectrum(&eig, clamp_tol)?
        .iter()
        .map(|x| x.sqrt())
        .sum();
    Ok(root_trace * root_trace)
}

/// Moore-Penrose inverse of a full-column-rank matrix, via the spectrum of
/// A†A. Fails if A†A has an eigenvalue below `rank_tol` times the largest.
pub fn pseudo_inverse(a: &CMatrix, rank_tol: f64) -> Result<CMatrix> {
    let ah = a.adjoint();
    let gram = (&ah * a).hermitian_part();
    let eig = herm_eig(&gram)?;
    let top = eig.max();
    if top <= 0.0 {
        return Err(Error::Singular("zero matrix has no column rank".into()));
    }
    if eig.min() <= rank_tol * top {
        return Err(Error::Singular(format!(
            "column rank deficient: singular value ratio {:.3e}",
            (eig.min().max(0.0) / top).sqrt()
        )));
    }
    let gram_inv = eig.reconstruct_with(|x| 1.0 / x);
    Ok(&gram_inv * &ah)
}

/// Ratio of largest to smallest eigenvalue of a Hermitian PSD matrix.
pub fn condition_number(m: &CMatrix) -> Result<f64> {
    let eig = herm_eig(m)?;
    let lo = eig.min();
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(eig.max() / lo)
}

/// Lower-triangular L with L L† = m for PSD m. Pivots below `tol` times
/// the largest diagonal entry are treated as exact zeros so that
/// rank-deficient inputs factor cleanly.
pub fn cholesky_psd(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let n = m.require_hermitian()?;
    let scale = m.diag().iter().map(|z| z.re).fold(0.0, f64::max);
    let floor = tol * scale.max(f64::MIN_POSITIVE);
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d < -floor.max(1e-9 * scale) {
            return Err(Error::NotPsd { eigenvalue: d });
        }
        if d <= floor {
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = C64::new(root, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / root;
        }
    }
    Ok(l)
}
