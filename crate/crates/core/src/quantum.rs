//! States, channels, complementary channels and entropic functionals.
//! All entropies are in bits.

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, dyad, eig_h, eig_symmetrized, hs_inner, max_abs, partial_trace, real, symmetrize,
    CMatrix, CVector, Spectrum, C64, ONE, PSD_TOL, SUPPORT_TOL, ZERO,
};

/// Positive semidefinite operator with a cached trace. Normalized states have
/// trace 1; projected states carry their (sub-unit) trace explicitly.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    mat: CMatrix,
    trace_value: f64,
}

impl DensityOperator {
    /// Validates Hermiticity and positivity (after clamping drift).
    pub fn new(mat: CMatrix) -> Result<Self> {
        let spec = eig_h(&mat)?;
        let scale = spec
            .eigenvalues
            .iter()
            .fold(1.0f64, |a, v| a.max(v.abs()));
        let min = spec.min_eigenvalue();
        if min < -PSD_TOL * scale {
            return Err(Error::NotPsd(min));
        }
        Ok(Self::from_psd_unchecked(mat))
    }

    /// Validates and additionally requires `|Tr − 1| ≤ 1e-9`.
    pub fn new_normalized(mat: CMatrix) -> Result<Self> {
        let rho = Self::new(mat)?;
        if (rho.trace_value - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "state trace is {}, expected 1",
                rho.trace_value
            )));
        }
        Ok(rho)
    }

    /// Wraps a matrix known to be PSD up to rounding (symmetrized here).
    pub fn from_psd_unchecked(mat: CMatrix) -> Self {
        let mat = symmetrize(&mat);
        let trace_value = linalg::trace(&mat).re;
        Self { mat, trace_value }
    }

    pub fn pure(v: &CVector) -> Self {
        Self::from_psd_unchecked(dyad(v))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        if let Some(&v) = values.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::NotPsd(v));
        }
        Ok(Self::from_psd_unchecked(linalg::diag_real(values)))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::from_psd_unchecked(linalg::identity(d).unscale(d as f64))
    }

    pub fn basis_state(d: usize, i: usize) -> Self {
        Self::pure(&linalg::basis_vector(d, i))
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_mat(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.trace_value
    }

    pub fn spectrum(&self) -> Spectrum {
        eig_symmetrized(&self.mat)
    }

    /// Eigenvalues (descending) with negative drift clamped to zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum()
            .eigenvalues
            .into_iter()
            .map(|v| v.max(0.0))
            .collect()
    }

    /// Copy rescaled to unit trace; the zero operator is returned unchanged.
    pub fn normalized(&self) -> Self {
        if self.trace_value <= 0.0 {
            return self.clone();
        }
        Self {
            mat: self.mat.unscale(self.trace_value),
            trace_value: 1.0,
        }
    }

    pub fn purity(&self) -> f64 {
        linalg::hs_inner(&self.mat, &self.mat).re
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| i == j || self.mat[(i, j)].norm() <= tol))
    }
}

/// Vector on a composite system with explicit subsystem dimensions.
#[derive(Clone, Debug)]
pub struct PureState {
    pub vec: CVector,
    pub dims: Vec<usize>,
}

impl PureState {
    pub fn new(vec: CVector, dims: Vec<usize>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if total != vec.len() {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} multiply to {total}, vector has {} entries",
                vec.len()
            )));
        }
        Ok(Self { vec, dims })
    }

    pub fn norm_sq(&self) -> f64 {
        self.vec.norm_squared()
    }

    pub fn density(&self) -> CMatrix {
        dyad(&self.vec)
    }

    /// Reduced operator on the subsystems in `keep`.
    pub fn reduce(&self, keep: &[usize]) -> Result<CMatrix> {
        if self.dims.len() == 2 && (keep == [0] || keep == [1]) {
            // reshape as d0 × d1 and form M M† or Mᵀ M*
            let (d0, d1) = (self.dims[0], self.dims[1]);
            let m = CMatrix::from_fn(d0, d1, |i, j| self.vec[i * d1 + j]);
            return Ok(if keep == [0] {
                &m * m.adjoint()
            } else {
                m.transpose() * m.map(|z| z.conj())
            });
        }
        partial_trace(&self.density(), &self.dims, keep)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelReport {
    pub max_deviation: f64,
    pub passed: bool,
}

/// Completeness tolerance for `Σ A_k† A_k = I`.
pub const CHANNEL_TOL: f64 = 1e-9;

/// Channel given by Kraus operators `A_k : C^d_in → C^d_out`.
#[derive(Clone, Debug)]
pub struct KrausChannel {
    ops: Vec<CMatrix>,
    d_in: usize,
    d_out: usize,
}

impl KrausChannel {
    /// Builds a channel after checking that all operators share one shape.
    /// Completeness is checked separately by [`validate_channel`].
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidParameter("channel needs at least one Kraus operator".into()))?;
        let (d_out, d_in) = first.shape();
        if let Some(bad) = ops.iter().find(|a| a.shape() != (d_out, d_in)) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator of shape {:?} in a {d_out}x{d_in} channel",
                bad.shape()
            )));
        }
        if ops.iter().any(|a| a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::InvalidParameter("Kraus operator has non-finite entries".into()));
        }
        Ok(Self { ops, d_in, d_out })
    }

    /// Like [`KrausChannel::new`] but also rejects incomplete Kraus sets.
    pub fn new_validated(ops: Vec<CMatrix>) -> Result<Self> {
        let ch = Self::new(ops)?;
        let report = validate_channel(&ch);
        if !report.passed {
            return Err(Error::InvalidParameter(format!(
                "Kraus operators are not trace preserving (deviation {:e})",
                report.max_deviation
            )));
        }
        Ok(ch)
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_env(&self) -> usize {
        self.ops.len()
    }

    pub fn identity(d: usize) -> Self {
        Self::new(vec![linalg::identity(d)]).expect("single square operator")
    }

    pub fn dephasing(p: f64) -> Result<Self> {
        check_unit_interval("p", p)?;
        Self::new(vec![
            linalg::identity(2).scale((1.0 - p).sqrt()),
            pauli_z().scale(p.sqrt()),
        ])
    }

    pub fn depolarizing(p: f64) -> Result<Self> {
        check_unit_interval("p", p)?;
        let s = (p / 4.0).sqrt();
        Self::new(vec![
            linalg::identity(2).scale((1.0 - 3.0 * p / 4.0).sqrt()),
            pauli_x().scale(s),
            pauli_y().scale(s),
            pauli_z().scale(s),
        ])
    }

    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        check_unit_interval("gamma", gamma)?;
        let a0 = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, real((1.0 - gamma).sqrt())]);
        let a1 = CMatrix::from_row_slice(2, 2, &[ZERO, real(gamma.sqrt()), ZERO, ZERO]);
        Self::new(vec![a0, a1])
    }

    /// Qubit erasure: with probability `p` the input is replaced by the flag
    /// state `|2⟩` of a qutrit output.
    pub fn erasure(p: f64) -> Result<Self> {
        check_unit_interval("p", p)?;
        let mut keep = CMatrix::zeros(3, 2);
        keep[(0, 0)] = real((1.0 - p).sqrt());
        keep[(1, 1)] = real((1.0 - p).sqrt());
        let mut e0 = CMatrix::zeros(3, 2);
        e0[(2, 0)] = real(p.sqrt());
        let mut e1 = CMatrix::zeros(3, 2);
        e1[(2, 1)] = real(p.sqrt());
        Self::new(vec![keep, e0, e1])
    }

    fn check_input(&self, d: usize) -> Result<()> {
        if d != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "channel input dimension {} but operand has dimension {d}",
                self.d_in
            )));
        }
        Ok(())
    }

    /// `Σ_k A_k X A_k†` for any square operator `X`.
    pub fn apply_matrix(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check_input(x.nrows())?;
        let mut out = CMatrix::zeros(self.d_out, self.d_out);
        for a in &self.ops {
            out += a * x * a.adjoint();
        }
        Ok(out)
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        Ok(DensityOperator::from_psd_unchecked(self.apply_matrix(rho.mat())?))
    }

    /// `E[k, k'] = Tr(A_k X A_k'†)`.
    pub fn environment_matrix(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check_input(x.nrows())?;
        let k = self.d_env();
        let ax: Vec<CMatrix> = self.ops.iter().map(|a| a * x).collect();
        let mut e = CMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = hs_inner(&self.ops[j], &ax[i]);
                e[(i, j)] = v;
                e[(j, i)] = v.conj();
            }
        }
        Ok(e)
    }

    pub fn environment_output(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        Ok(DensityOperator::from_psd_unchecked(self.environment_matrix(rho.mat())?))
    }

    /// Columns `A_k |v⟩`; Bob's output is `G G†` and Eve's is `Gᵀ G*`.
    pub fn stinespring_columns(&self, v: &CVector) -> Result<CMatrix> {
        self.check_input(v.len())?;
        let cols: Vec<CVector> = self.ops.iter().map(|a| a * v).collect();
        Ok(CMatrix::from_columns(&cols))
    }

    /// Bob and Eve outputs of the pure input `|v⟩⟨v|` (unnormalized if `v` is).
    pub fn pure_outputs(&self, v: &CVector) -> Result<(CMatrix, CMatrix)> {
        let g = self.stinespring_columns(v)?;
        let bob = &g * g.adjoint();
        let eve = g.transpose() * g.map(|z| z.conj());
        Ok((bob, eve))
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, real(-1.0)])
}

/// Maximum entry of `|Σ A_k† A_k − I|`.
pub fn validate_channel(ch: &KrausChannel) -> ChannelReport {
    let mut sum = CMatrix::zeros(ch.d_in, ch.d_in);
    for a in &ch.ops {
        sum += a.adjoint() * a;
    }
    let dev = max_abs(&(sum - linalg::identity(ch.d_in)));
    ChannelReport {
        max_deviation: dev,
        passed: dev <= CHANNEL_TOL,
    }
}

/// Purification `Σ_j √λ_j |v_j⟩|j⟩` on `dim ⊗ rank`.
pub fn purify(rho: &DensityOperator) -> PureState {
    let spec = rho.spectrum();
    let r = spec.rank(SUPPORT_TOL).max(1);
    let d = rho.dim();
    let mut vec = CVector::zeros(d * r);
    for j in 0..r {
        let s = spec.eigenvalues[j].max(0.0).sqrt();
        for i in 0..d {
            vec[i * r + j] = spec.eigenvectors[(i, j)] * s;
        }
    }
    PureState { vec, dims: vec![d, r] }
}

/// `−Σ λ log₂ λ` over the eigenvalues of the operator (clamped at zero).
pub fn entropy(rho: &DensityOperator) -> f64 {
    entropy_of_spectrum(&rho.eigenvalues())
}

pub fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.log2())
        .sum()
}

/// Binary entropy `h₂(p)`.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_of_spectrum(&[p, 1.0 - p])
}

/// `η(x) = −x log₂ x` with `η(0) = 0`.
pub fn eta(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.log2()
    }
}

/// `S(ρ‖σ) = Tr ρ (log₂ ρ − log₂ σ)`; `+∞` when `supp ρ ⊄ supp σ`.
pub fn relative_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> f64 {
    if rho.dim() != sigma.dim() {
        return f64::NAN;
    }
    let s_spec = sigma.spectrum();
    let top = s_spec.max_eigenvalue();
    let cut = SUPPORT_TOL * top.max(0.0);
    let mut cross = 0.0;
    let mut leak = 0.0;
    for (j, &lam) in s_spec.eigenvalues.iter().enumerate() {
        let v = s_spec.eigenvectors.column(j);
        let w = (v.adjoint() * rho.mat() * v)[(0, 0)].re;
        if lam > cut && lam > 0.0 {
            cross += w * lam.log2();
        } else {
            leak += w;
        }
    }
    if leak > 1e-10 * rho.trace().abs().max(1e-300) {
        return f64::INFINITY;
    }
    -entropy(rho) - cross
}

/// Probability-weighted collection of states on one space.
#[derive(Clone, Debug)]
pub struct Ensemble {
    probs: Vec<f64>,
    states: Vec<DensityOperator>,
}

impl Ensemble {
    pub fn new(probs: Vec<f64>, states: Vec<DensityOperator>) -> Result<Self> {
        if probs.len() != states.len() || probs.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {} states",
                probs.len(),
                states.len()
            )));
        }
        if let Some(&p) = probs.iter().find(|&&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        let d = states[0].dim();
        if states.iter().any(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch("ensemble states differ in dimension".into()));
        }
        Ok(Self { probs, states })
    }

    pub fn uniform(states: Vec<DensityOperator>) -> Result<Self> {
        let n = states.len().max(1);
        Self::new(vec![1.0 / n as f64; states.len()], states)
    }

    /// Ensemble with probabilities proportional to the traces of the given
    /// operators and normalized members. Zero-trace members get weight zero.
    pub fn from_unnormalized(ops: Vec<DensityOperator>) -> Result<Self> {
        let total: f64 = ops.iter().map(|s| s.trace().max(0.0)).sum();
        if total <= 0.0 {
            return Err(Error::Inconsistent("all ensemble members have zero trace".into()));
        }
        let probs = ops.iter().map(|s| s.trace().max(0.0) / total).collect();
        let states = ops.iter().map(|s| s.normalized()).collect();
        Self::new(probs, states)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn states(&self) -> &[DensityOperator] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn average(&self) -> CMatrix {
        let d = self.states[0].dim();
        let mut avg = CMatrix::zeros(d, d);
        for (p, s) in self.probs.iter().zip(&self.states) {
            avg += s.mat().scale(*p);
        }
        avg
    }
}

/// `χ = S(Σ p_i ρ_i) − Σ p_i S(ρ_i)`.
pub fn holevo_chi(ens: &Ensemble) -> f64 {
    let avg = DensityOperator::from_psd_unchecked(ens.average());
    let mean_s: f64 = ens
        .probs
        .iter()
        .zip(&ens.states)
        .map(|(p, s)| if *p > 0.0 { p * entropy(s) } else { 0.0 })
        .sum();
    entropy(&avg) - mean_s
}

/// `S(Λ(ρ)) − S(Λ^c(ρ))`.
pub fn coherent_information(ch: &KrausChannel, rho: &DensityOperator) -> Result<f64> {
    Ok(entropy(&ch.apply(rho)?) - entropy(&ch.environment_output(rho)?))
}

/// `⟨u|M|v⟩` for column vectors.
pub fn sandwich(u: &CVector, m: &CMatrix, v: &CVector) -> C64 {
    (u.adjoint() * m * v)[(0, 0)]
}
