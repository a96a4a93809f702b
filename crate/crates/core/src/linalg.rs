//! Dense complex linear algebra: tensor products, partial traces, Hermitian
//! spectral decomposition, spectral matrix functions, Schatten norms and
//! fidelity.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. Composite systems
//! use row-major subsystem order: for dims `[d0, d1, ...]` the first factor is
//! the most significant digit of the flat index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Absolute tolerance on `|M - M^dagger|` accepted before symmetrizing.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped to zero; anything lower is an error.
pub const PSD_TOL: f64 = 1e-10;
/// Relative cutoff below which an eigenvalue is outside the support.
pub const SUPPORT_TOL: f64 = 1e-12;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `eigenvalues`.
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V†`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_fn(|x| x)
    }

    /// Number of eigenvalues above `tol * λ_max` (zero when `λ_max <= 0`).
    pub fn rank(&self, tol: f64) -> usize {
        let top = self.max_eigenvalue();
        if top <= 0.0 {
            return 0;
        }
        self.eigenvalues.iter().filter(|&&l| l > tol * top).count()
    }

    /// Columns of the eigenvectors whose eigenvalue exceeds `tol * λ_max`.
    pub fn support_basis(&self, tol: f64) -> CMatrix {
        let r = self.rank(tol);
        self.eigenvectors.columns(0, r).into_owned()
    }

    /// Eigenvalues with the PSD clamping policy applied.
    pub fn clamped_eigenvalues(&self) -> Result<Vec<f64>> {
        clamp_psd(&self.eigenvalues)
    }
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = real(v);
    }
    m
}

pub fn basis_vector(d: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[i] = ONE;
    v
}

/// `|v><v|`.
pub fn dyad(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius inner product `Tr(A† B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn tensor_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    let mut acc = CMatrix::from_element(1, 1, ONE);
    for f in factors {
        acc = acc.kronecker(f);
    }
    acc
}

/// `m ⊗ m ⊗ ... ⊗ m` (`n` factors).
pub fn tensor_power(m: &CMatrix, n: usize) -> CMatrix {
    tensor_all(std::iter::repeat_n(m, n))
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|M - M†|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `(M + M†) / 2`.
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn is_exactly_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == ZERO))
}

/// Hermitian eigen-decomposition with eigenvalues sorted in descending order.
///
/// The input is checked against [`HERMITIAN_TOL`] (scaled by the largest
/// entry when that exceeds one) and symmetrized before decomposing. Exactly
/// diagonal inputs take a direct path returning computational basis vectors,
/// which keeps degenerate diagonal spectra in a canonical basis.
pub fn eig_h(m: &CMatrix) -> Result<Spectrum> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare(m.nrows(), m.ncols()));
    }
    let scale = max_abs(m).max(1.0);
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(dev));
    }
    Ok(eig_symmetrized(&symmetrize(m)))
}

/// Decomposition of a matrix already known to be Hermitian.
pub(crate) fn eig_symmetrized(h: &CMatrix) -> Spectrum {
    let n = h.nrows();
    if n == 0 {
        return Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: CMatrix::zeros(0, 0),
        };
    }
    let (values, vectors) = if is_exactly_diagonal(h) {
        let values: Vec<f64> = (0..n).map(|i| h[(i, i)].re).collect();
        (values, CMatrix::identity(n, n))
    } else {
        let eig = h.clone().symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &vectors.column(src));
    }
    Spectrum {
        eigenvalues,
        eigenvectors,
    }
}

/// Eigenvalues only, same ordering and checks as [`eig_h`].
pub fn eigenvalues_h(m: &CMatrix) -> Result<Vec<f64>> {
    Ok(eig_h(m)?.eigenvalues)
}

/// Applies the clamping policy: values in `[-PSD_TOL·s, 0)` become zero,
/// where `s = max(1, max |λ|)`; anything more negative is an error.
pub fn clamp_psd(values: &[f64]) -> Result<Vec<f64>> {
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 {
                Ok(v)
            } else if v >= -PSD_TOL * scale {
                Ok(0.0)
            } else {
                Err(Error::NotPsd(v))
            }
        })
        .collect()
}

/// Singular values in descending order.
pub fn singular_values(x: &CMatrix) -> Vec<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = x.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub trace_norm: f64,
    pub hs_norm: f64,
    pub op_norm: f64,
}

/// Schatten-1, Schatten-2 and operator norms from the singular values.
pub fn norms(x: &CMatrix) -> Norms {
    let s = singular_values(x);
    Norms {
        trace_norm: s.iter().sum(),
        hs_norm: s.iter().map(|v| v * v).sum::<f64>().sqrt(),
        op_norm: s.first().copied().unwrap_or(0.0),
    }
}

pub fn trace_norm(x: &CMatrix) -> f64 {
    singular_values(x).iter().sum()
}

/// Trace norm of a Hermitian matrix as `Σ |λ_i|`.
pub fn trace_norm_hermitian(x: &CMatrix) -> Result<f64> {
    Ok(eig_h(x)?.eigenvalues.iter().map(|l| l.abs()).sum())
}

pub fn op_norm(x: &CMatrix) -> f64 {
    singular_values(x).first().copied().unwrap_or(0.0)
}

/// Spectral square root of a PSD matrix. With `invert`, the pseudo-inverse
/// square root: eigenvalues at or below `SUPPORT_TOL · λ_max` map to zero.
pub fn sqrt_psd(m: &CMatrix, invert: bool) -> Result<CMatrix> {
    let spec = eig_h(m)?;
    sqrt_from_spectrum(&spec, invert)
}

pub(crate) fn sqrt_from_spectrum(spec: &Spectrum, invert: bool) -> Result<CMatrix> {
    let vals = spec.clamped_eigenvalues()?;
    let top = vals.first().copied().unwrap_or(0.0);
    let cut = SUPPORT_TOL * top;
    let clamped = Spectrum {
        eigenvalues: vals,
        eigenvectors: spec.eigenvectors.clone(),
    };
    Ok(if invert {
        clamped.apply_fn(|l| if l > cut && l > 0.0 { 1.0 / l.sqrt() } else { 0.0 })
    } else {
        clamped.apply_fn(f64::sqrt)
    })
}

/// Orthogonal projector onto the span of eigenvectors with eigenvalue above
/// `tol · λ_max`. The zero matrix has the zero projector.
pub fn support_projector(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let spec = eig_h(m)?;
    Ok(projector_from_spectrum(&spec, tol))
}

pub(crate) fn projector_from_spectrum(spec: &Spectrum, tol: f64) -> CMatrix {
    let q = spec.support_basis(tol);
    &q * q.adjoint()
}

/// Numerical rank of a Hermitian matrix: eigenvalues with
/// `|λ| > tol · max |λ|`.
pub fn rank_h(m: &CMatrix, tol: f64) -> Result<usize> {
    let vals = eig_h(m)?.eigenvalues;
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(vals.iter().filter(|v| v.abs() > tol * top).count())
}

/// Root fidelity `F(ρ,σ) = Tr √(√ρ σ √ρ)`, evaluated as `‖√ρ √σ‖₁`.
pub fn fidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity of {:?} and {:?} matrices",
            rho.shape(),
            sigma.shape()
        )));
    }
    let a = sqrt_on_support(rho)?;
    let b = sqrt_on_support(sigma)?;
    Ok(trace_norm(&(a * b)))
}

/// Square root with eigenvalues at or below `SUPPORT_TOL · λ_max` set to
/// zero, so rounding noise in rank-deficient inputs does not leak through
/// the square root.
fn sqrt_on_support(m: &CMatrix) -> Result<CMatrix> {
    let spec = eig_h(m)?;
    let vals = spec.clamped_eigenvalues()?;
    let cut = SUPPORT_TOL * vals.first().copied().unwrap_or(0.0);
    let clamped = Spectrum {
        eigenvalues: vals,
        eigenvectors: spec.eigenvectors,
    };
    Ok(clamped.apply_fn(|l| if l > cut { l.sqrt() } else { 0.0 }))
}

/// Partial trace keeping the subsystems listed in `keep` (in ascending order
/// of subsystem index, regardless of the order given).
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare(m.nrows(), m.ncols()));
    }
    if total != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dims {dims:?} multiply to {total}, matrix is {}",
            m.nrows()
        )));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "subsystem index {bad} out of range for {} subsystems",
            dims.len()
        )));
    }
    let kept: Vec<bool> = (0..dims.len()).map(|i| keep.contains(&i)).collect();
    let dk: usize = dims
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| k)
        .map(|(d, _)| d)
        .product();
    let dt = total / dk.max(1);

    // full[t][k] = flat index with traced digits t and kept digits k
    let mut full = vec![0usize; total];
    for flat in 0..total {
        let mut rem = flat;
        let mut k_idx = 0usize;
        let mut t_idx = 0usize;
        let mut k_stride = 1usize;
        let mut t_stride = 1usize;
        for (i, &d) in dims.iter().enumerate().rev() {
            let digit = rem % d;
            rem /= d;
            if kept[i] {
                k_idx += digit * k_stride;
                k_stride *= d;
            } else {
                t_idx += digit * t_stride;
                t_stride *= d;
            }
        }
        full[t_idx * dk + k_idx] = flat;
    }

    let mut out = CMatrix::zeros(dk, dk);
    for t in 0..dt {
        let row = &full[t * dk..(t + 1) * dk];
        for (j, &fj) in row.iter().enumerate() {
            for (i, &fi) in row.iter().enumerate() {
                out[(i, j)] += m[(fi, fj)];
            }
        }
    }
    Ok(out)
}

/// Trace norm of `|a><a| - |b><b|` for arbitrary (unnormalized) vectors,
/// from the 2x2 Gram problem: `√((‖a‖²+‖b‖²)² - 4|<a|b>|²)`.
pub fn dyad_difference_trace_norm(a: &CVector, b: &CVector) -> f64 {
    let na = a.norm_squared();
    let nb = b.norm_squared();
    let ov = a.dotc(b).norm_sqr();
    ((na + nb).powi(2) - 4.0 * ov).max(0.0).sqrt()
}

/// Orthonormal basis of the column space of `g` (relative cutoff `tol`),
/// computed from the smaller of the two Gram matrices.
pub fn column_space(g: &CMatrix, tol: f64) -> CMatrix {
    let (rows, cols) = g.shape();
    if cols == 0 || rows == 0 {
        return CMatrix::zeros(rows, 0);
    }
    if cols < rows {
        let spec = eig_symmetrized(&symmetrize(&(g.adjoint() * g)));
        let r = spec.rank(tol);
        let mut q = g * spec.eigenvectors.columns(0, r);
        for j in 0..r {
            let s = spec.eigenvalues[j].sqrt();
            q.column_mut(j).unscale_mut(s);
        }
        // one re-orthonormalization pass for small singular values
        gram_schmidt(&q)
    } else {
        eig_symmetrized(&symmetrize(&(g * g.adjoint()))).support_basis(tol)
    }
}

/// Modified Gram-Schmidt on the columns, dropping columns that become
/// numerically dependent.
pub fn gram_schmidt(v: &CMatrix) -> CMatrix {
    let mut cols: Vec<CVector> = Vec::with_capacity(v.ncols());
    for j in 0..v.ncols() {
        let mut x: CVector = v.column(j).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let p = q.dotc(&x);
                x -= q * p;
            }
        }
        let n = x.norm();
        if n > 1e-10 {
            cols.push(x.unscale(n));
        }
    }
    if cols.is_empty() {
        return CMatrix::zeros(v.nrows(), 0);
    }
    CMatrix::from_columns(&cols)
}

/// Completes orthonormal columns `q` (D×k) to a full unitary `[q | q⊥]`
/// using Householder reflections.
pub fn complete_unitary(q: &CMatrix) -> CMatrix {
    let d = q.nrows();
    let k = q.ncols();
    let mut work = q.clone();
    let mut reflectors: Vec<CVector> = Vec::with_capacity(k);
    for j in 0..k {
        let mut x: CVector = CVector::zeros(d);
        for i in j..d {
            x[i] = work[(i, j)];
        }
        let alpha = x.norm();
        if alpha == 0.0 {
            reflectors.push(CVector::zeros(d));
            continue;
        }
        let phase = if x[j].norm() > 0.0 { x[j] / x[j].norm() } else { ONE };
        x[j] += phase * alpha;
        let nx = x.norm();
        x.unscale_mut(nx);
        // H = I - 2 x x† applied to remaining columns
        let proj = x.adjoint() * &work;
        for col in 0..k {
            let p = proj[(0, col)] * 2.0;
            for i in j..d {
                work[(i, col)] -= x[i] * p;
            }
        }
        reflectors.push(x);
    }
    // Q = H_0 H_1 ... H_{k-1}; columns k.. of Q span the complement.
    let mut full = CMatrix::identity(d, d);
    for x in reflectors.iter().rev() {
        let proj = x.adjoint() * &full;
        for col in 0..d {
            let p = proj[(0, col)] * 2.0;
            if p == ZERO {
                continue;
            }
            for i in 0..d {
                full[(i, col)] -= x[i] * p;
            }
        }
    }
    let mut out = CMatrix::zeros(d, d);
    for j in 0..k {
        out.set_column(j, &q.column(j));
    }
    for j in k..d {
        out.set_column(j, &full.column(j));
    }
    out
}

/// Nested `[rows][cols]` array of `[re, im]` pairs.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_rows(m: &CMatrix) -> MatrixRows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_rows(rows: &MatrixRows) -> Result<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(CMatrix::from_fn(r, c, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

pub fn vector_to_pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vector_from_pairs(p: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(p.len(), p.iter().map(|z| C64::new(z[0], z[1])))
}
