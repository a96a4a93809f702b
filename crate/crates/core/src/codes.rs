//! Random code ensembles over a typical source and their averaging formulas.
//!
//! Codewords live in the span of the source eigenvectors. Lloyd codewords are
//! `Σ_i √q_i e^{iφ_i} |i⟩` with independent uniform phases drawn in basis-column
//! order. Uniform source-distorted (USD) codewords are `√d √ρ |φ⟩` with `|φ⟩`
//! Haar-random on the support (`d` = support dimension), drawn as a
//! normalized vector of `d` complex normals.

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector, C64, SUPPORT_TOL, ZERO};
use crate::quantum::DensityOperator;
use crate::rng::{complex_normal, phase, stream};
use crate::typicality::ProtocolStates;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Lloyd,
    #[serde(rename = "usd")]
    UniformSourceDistorted,
    Explicit,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Lloyd => "lloyd",
            EnsembleKind::UniformSourceDistorted => "usd",
            EnsembleKind::Explicit => "explicit",
        }
    }
}

/// Normalized source `ρ_typ` in its eigenbasis, restricted to the support.
#[derive(Clone, Debug)]
pub struct CodeSource {
    /// Eigenvalues `q_i`, all positive.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns (`dim × rank`).
    pub basis: CMatrix,
}

impl CodeSource {
    pub fn new(eigenvalues: Vec<f64>, basis: CMatrix) -> Result<Self> {
        if eigenvalues.len() != basis.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} eigenvalues for {} basis vectors",
                eigenvalues.len(),
                basis.ncols()
            )));
        }
        if eigenvalues.is_empty() {
            return Err(Error::EmptyTypicalSet("A"));
        }
        if let Some(&q) = eigenvalues.iter().find(|&&q| !(q > 0.0)) {
            return Err(Error::InvalidParameter(format!("source eigenvalue {q} is not positive")));
        }
        Ok(Self { eigenvalues, basis })
    }

    /// Support eigen-decomposition of a state (normalized here).
    pub fn from_density(rho: &DensityOperator) -> Result<Self> {
        let rho = rho.normalized();
        let spec = rho.spectrum();
        let r = spec.rank(SUPPORT_TOL);
        Self::new(spec.eigenvalues[..r].to_vec(), spec.support_basis(SUPPORT_TOL))
    }

    pub fn from_protocol(ps: &ProtocolStates) -> Result<Self> {
        Self::new(ps.source_eigenvalues.clone(), ps.typ_a.basis.clone())
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn density(&self) -> CMatrix {
        let mut scaled = self.basis.clone();
        for (j, &q) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(q);
        }
        &scaled * self.basis.adjoint()
    }

    pub fn purity(&self) -> f64 {
        self.eigenvalues.iter().map(|q| q * q).sum()
    }

    /// `Σ_i c_i |i⟩`.
    fn embed(&self, coeffs: &CVector) -> CVector {
        &self.basis * coeffs
    }

    /// Operator expressed in the eigenbasis coordinates, `B† X B`.
    fn coords(&self, x: &CMatrix) -> CMatrix {
        self.basis.adjoint() * x * &self.basis
    }
}

#[derive(Clone, Debug)]
pub struct Code {
    pub codewords: Vec<CVector>,
    pub kind: EnsembleKind,
    pub source_eigenvalues: Vec<f64>,
    pub seed: u64,
    pub trial: u32,
}

impl Code {
    /// Code with given codewords (for instance an orthonormal set).
    pub fn explicit(codewords: Vec<CVector>) -> Result<Self> {
        if codewords.is_empty() {
            return Err(Error::EmptyCode(0));
        }
        let d = codewords[0].len();
        if codewords.iter().any(|v| v.len() != d) {
            return Err(Error::DimensionMismatch("codewords differ in length".into()));
        }
        Ok(Self {
            codewords,
            kind: EnsembleKind::Explicit,
            source_eigenvalues: Vec::new(),
            seed: 0,
            trial: 0,
        })
    }

    /// First `n` computational basis vectors of a `dim`-dimensional space.
    pub fn orthonormal(dim: usize, n: usize) -> Result<Self> {
        if n > dim {
            return Err(Error::InvalidParameter(format!("{n} orthonormal codewords do not fit in dimension {dim}")));
        }
        Self::explicit((0..n).map(|i| crate::linalg::basis_vector(dim, i)).collect())
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.codewords.first().map_or(0, |v| v.len())
    }

    pub fn norms_sq(&self) -> Vec<f64> {
        self.codewords.iter().map(|v| v.norm_squared()).collect()
    }

    pub fn to_json(&self) -> Value {
        let words: Vec<Vec<f64>> = self
            .codewords
            .iter()
            .map(|v| v.iter().flat_map(|z| [z.re, z.im]).collect())
            .collect();
        json!({
            "seed": self.seed,
            "trial": self.trial,
            "kind": self.kind,
            "source_eigenvalues": self.source_eigenvalues,
            "codewords": words,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            seed: u64,
            #[serde(default)]
            trial: u32,
            kind: EnsembleKind,
            source_eigenvalues: Vec<f64>,
            codewords: Vec<Vec<f64>>,
        }
        let doc: Doc = serde_json::from_value(v.clone())?;
        let mut codewords = Vec::with_capacity(doc.codewords.len());
        for w in &doc.codewords {
            if w.len() % 2 != 0 {
                return Err(Error::Config {
                    field: "codewords".into(),
                    message: "interleaved re/im array has odd length".into(),
                });
            }
            codewords.push(CVector::from_iterator(w.len() / 2, w.chunks(2).map(|p| c(p[0], p[1]))));
        }
        Ok(Self {
            codewords,
            kind: doc.kind,
            source_eigenvalues: doc.source_eigenvalues,
            seed: doc.seed,
            trial: doc.trial,
        })
    }
}

fn lloyd_coefficients<R: RngCore + ?Sized>(source: &CodeSource, rng: &mut R) -> CVector {
    CVector::from_iterator(
        source.rank(),
        source.eigenvalues.iter().map(|&q| {
            let t = phase(rng);
            c(t.cos(), t.sin()) * q.sqrt()
        }),
    )
}

fn usd_coefficients<R: RngCore + ?Sized>(source: &CodeSource, rng: &mut R) -> CVector {
    let d = source.rank();
    let phi = CVector::from_iterator(d, (0..d).map(|_| complex_normal(rng)));
    let phi = phi.unscale(phi.norm());
    let scale = (d as f64).sqrt();
    CVector::from_iterator(d, source.eigenvalues.iter().zip(phi.iter()).map(|(&q, &z)| z * (scale * q.sqrt())))
}

fn sample_with(
    source: &CodeSource,
    n_codewords: usize,
    seed: u64,
    trial: u32,
    kind: EnsembleKind,
) -> Result<Code> {
    if n_codewords == 0 {
        return Err(Error::EmptyCode(0));
    }
    let codewords = (0..n_codewords)
        .map(|a| {
            let mut rng = stream(seed, trial, a as u32);
            let coeffs = match kind {
                EnsembleKind::Lloyd => lloyd_coefficients(source, &mut rng),
                _ => usd_coefficients(source, &mut rng),
            };
            source.embed(&coeffs)
        })
        .collect();
    Ok(Code {
        codewords,
        kind,
        source_eigenvalues: source.eigenvalues.clone(),
        seed,
        trial,
    })
}

/// Lloyd code; codeword `α` uses stream `(seed, trial, α)`.
pub fn sample_lloyd(source: &CodeSource, n_codewords: usize, seed: u64, trial: u32) -> Result<Code> {
    sample_with(source, n_codewords, seed, trial, EnsembleKind::Lloyd)
}

/// Uniform source-distorted code; codeword `α` uses stream `(seed, trial, α)`.
pub fn sample_usd(source: &CodeSource, n_codewords: usize, seed: u64, trial: u32) -> Result<Code> {
    sample_with(source, n_codewords, seed, trial, EnsembleKind::UniformSourceDistorted)
}

pub fn sample(kind: EnsembleKind, source: &CodeSource, n_codewords: usize, seed: u64, trial: u32) -> Result<Code> {
    match kind {
        EnsembleKind::Lloyd => sample_lloyd(source, n_codewords, seed, trial),
        EnsembleKind::UniformSourceDistorted => sample_usd(source, n_codewords, seed, trial),
        EnsembleKind::Explicit => Err(Error::InvalidParameter("explicit codes are not sampled".into())),
    }
}

/// Ensemble average of `⟨α|X|α⟩⟨α|Y|α⟩`.
///
/// Lloyd: `Tr(Xρ)Tr(Yρ) + Tr(XρYρ) − Σ_i q_i² X_ii Y_ii` in the eigenbasis.
/// USD: `d/(d+1) [Tr(Xρ)Tr(Yρ) + Tr(XρYρ)]`.
pub fn moment2_analytic(kind: EnsembleKind, source: &CodeSource, x: &CMatrix, y: &CMatrix) -> Result<C64> {
    let xs = source.coords(x);
    let ys = source.coords(y);
    let q = &source.eigenvalues;
    let r = q.len();
    let tx: C64 = (0..r).map(|i| xs[(i, i)] * q[i]).sum();
    let ty: C64 = (0..r).map(|i| ys[(i, i)] * q[i]).sum();
    let mut off = ZERO;
    for i in 0..r {
        for j in 0..r {
            if i != j {
                off += xs[(i, j)] * ys[(j, i)] * (q[i] * q[j]);
            }
        }
    }
    match kind {
        EnsembleKind::Lloyd => Ok(tx * ty + off),
        EnsembleKind::UniformSourceDistorted => {
            let diag: C64 = (0..r).map(|i| xs[(i, i)] * ys[(i, i)] * (q[i] * q[i])).sum();
            let d = r as f64;
            Ok((tx * ty + off + diag) * (d / (d + 1.0)))
        }
        EnsembleKind::Explicit => Err(Error::InvalidParameter("no ensemble average for explicit codes".into())),
    }
}

/// The USD formula with an arbitrary middle operator in the second term,
/// `d/(d+1) [Tr(Xρ)Tr(Yρ) + Tr(X M Y ρ)]`; `M = ρ` recovers
/// [`moment2_analytic`].
pub fn moment2_usd_with_middle(source: &CodeSource, x: &CMatrix, y: &CMatrix, middle: &CMatrix) -> C64 {
    let rho = source.density();
    let tx = crate::linalg::trace_of_product(x, &rho);
    let ty = crate::linalg::trace_of_product(y, &rho);
    let t2 = crate::linalg::trace(&(x * middle * y * &rho));
    let d = source.rank() as f64;
    (tx * ty + t2) * (d / (d + 1.0))
}

/// Monte Carlo estimate against an analytic value, per entry.
#[derive(Clone, Debug)]
pub struct MomentReport {
    pub mc_mean: CMatrix,
    pub analytic: CMatrix,
    /// Largest entry modulus of `mc_mean − analytic`.
    pub deviation: f64,
    pub samples: usize,
    /// Largest per-component standard error.
    pub std_error: f64,
    /// Largest ratio `|difference| / standard error` over real and imaginary parts.
    pub max_z: f64,
    /// Component-wise standard errors (real, imaginary).
    se_re: DMatrix<f64>,
    se_im: DMatrix<f64>,
}

impl MomentReport {
    /// Every component satisfies `|difference| ≤ k·se + 1e-12`.
    pub fn within(&self, k: f64) -> bool {
        let diff = &self.mc_mean - &self.analytic;
        diff.iter()
            .zip(self.se_re.iter().zip(self.se_im.iter()))
            .all(|(z, (sr, si))| z.re.abs() <= k * sr + 1e-12 && z.im.abs() <= k * si + 1e-12)
    }
}

struct Accumulator {
    sum: CMatrix,
    sum_sq_re: DMatrix<f64>,
    sum_sq_im: DMatrix<f64>,
    count: usize,
}

impl Accumulator {
    fn new(r: usize, c: usize) -> Self {
        Self {
            sum: CMatrix::zeros(r, c),
            sum_sq_re: DMatrix::zeros(r, c),
            sum_sq_im: DMatrix::zeros(r, c),
            count: 0,
        }
    }

    fn push(&mut self, m: &CMatrix) {
        self.sum += m;
        for ((z, sr), si) in m.iter().zip(self.sum_sq_re.iter_mut()).zip(self.sum_sq_im.iter_mut()) {
            *sr += z.re * z.re;
            *si += z.im * z.im;
        }
        self.count += 1;
    }

    fn report(self, analytic: CMatrix) -> MomentReport {
        let n = self.count as f64;
        let mean = self.sum.unscale(n);
        let se = |sq: &DMatrix<f64>, part: fn(&C64) -> f64| {
            DMatrix::from_fn(sq.nrows(), sq.ncols(), |i, j| {
                let m = part(&mean[(i, j)]);
                let var = ((sq[(i, j)] / n - m * m) * n / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
        };
        let se_re = se(&self.sum_sq_re, |z| z.re);
        let se_im = se(&self.sum_sq_im, |z| z.im);
        let diff = &mean - &analytic;
        let deviation = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let std_error = se_re.iter().chain(se_im.iter()).copied().fold(0.0, f64::max);
        let ratio = |d: f64, s: f64| {
            if d.abs() <= 1e-12 {
                0.0
            } else if s > 0.0 {
                d.abs() / s
            } else {
                f64::INFINITY
            }
        };
        let max_z = diff
            .iter()
            .zip(se_re.iter().zip(se_im.iter()))
            .map(|(z, (sr, si))| ratio(z.re, *sr).max(ratio(z.im, *si)))
            .fold(0.0, f64::max);
        MomentReport {
            mc_mean: mean,
            analytic,
            deviation,
            samples: self.count,
            std_error,
            max_z,
            se_re,
            se_im,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MomentCheck {
    /// Mean of `|α⟩⟨α|` against `ρ_typ`.
    pub first: MomentReport,
    /// Mean of `⟨α|X|α⟩⟨α|Y|α⟩` against [`moment2_analytic`].
    pub second: MomentReport,
}

/// Monte Carlo check of the first and second moments; sample `s` uses the
/// codeword stream `(seed, 0, s)`.
pub fn moment_check(kind: EnsembleKind, source: &CodeSource, x: &CMatrix, y: &CMatrix, samples: usize, seed: u64) -> Result<MomentCheck> {
    moment_check_on(kind, source, x, y, samples, seed, 0)
}

fn moment_check_on(kind: EnsembleKind, source: &CodeSource, x: &CMatrix, y: &CMatrix, samples: usize, seed: u64, trial: u32) -> Result<MomentCheck> {
    if samples < 100 {
        return Err(Error::InvalidParameter(format!("moment check needs at least 100 samples, got {samples}")));
    }
    if samples > u32::MAX as usize {
        return Err(Error::InvalidParameter("too many samples".into()));
    }
    let d = source.dim();
    if x.shape() != (d, d) || y.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!("test operators must be {d}x{d}")));
    }
    let analytic2 = moment2_analytic(kind, source, x, y)?;
    let mut first = Accumulator::new(d, d);
    let mut second = Accumulator::new(1, 1);
    for s in 0..samples {
        let mut rng = stream(seed, trial, s as u32);
        let coeffs = match kind {
            EnsembleKind::Lloyd => lloyd_coefficients(source, &mut rng),
            EnsembleKind::UniformSourceDistorted => usd_coefficients(source, &mut rng),
            EnsembleKind::Explicit => return Err(Error::InvalidParameter("explicit codes are not sampled".into())),
        };
        let a = source.embed(&coeffs);
        first.push(&(&a * a.adjoint()));
        let ex = a.dotc(&(x * &a));
        let ey = a.dotc(&(y * &a));
        second.push(&CMatrix::from_element(1, 1, ex * ey));
    }
    Ok(MomentCheck {
        first: first.report(source.density()),
        second: second.report(CMatrix::from_element(1, 1, analytic2)),
    })
}

/// One random instance of a moment sweep.
#[derive(Clone, Debug)]
pub struct MomentSweepEntry {
    pub pair: u32,
    pub dim: usize,
    pub check: MomentCheck,
}

impl MomentSweepEntry {
    pub fn within(&self, k: f64) -> bool {
        self.check.first.within(k) && self.check.second.within(k)
    }
}

/// Moment checks on `pairs` random instances. Instance `i` has dimension
/// `2 + i mod 5`, a full-rank random source and Gaussian test operators
/// `X`, `Y`, all drawn from stream `(seed, 0xffff_fffe, i)`; its samples use
/// codeword streams `(seed, i + 1, s)`.
pub fn moment_sweep(kind: EnsembleKind, pairs: u32, samples: usize, seed: u64) -> Result<Vec<MomentSweepEntry>> {
    use crate::random::{random_density, random_gaussian_matrix};
    use rayon::prelude::*;
    if pairs >= u32::MAX - 1 {
        return Err(Error::InvalidParameter("too many pairs".into()));
    }
    (0..pairs)
        .into_par_iter()
        .map(|i| {
            let dim = 2 + (i as usize) % 5;
            let mut rng = stream(seed, 0xffff_fffe, i);
            let source = CodeSource::from_density(&random_density(&mut rng, dim))?;
            let x = random_gaussian_matrix(&mut rng, dim, dim);
            let y = random_gaussian_matrix(&mut rng, dim, dim);
            let check = moment_check_on(kind, &source, &x, &y, samples, seed, i + 1)?;
            Ok(MomentSweepEntry { pair: i, dim, check })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormStatistics {
    pub mean: f64,
    pub var: f64,
    /// `(1+ε) Tr ρ_typ² / ε²`.
    pub chebyshev_bound: f64,
    /// Fraction of codewords with `⟨α|α⟩ ∉ (1−ε, 1+ε)`.
    pub outside_fraction: f64,
    pub epsilon: f64,
}

/// Empirical mean and (population) variance of `⟨α|α⟩` with the Chebyshev
/// bound at `epsilon`.
pub fn norm_statistics(code: &Code, source_purity: f64, epsilon: f64) -> Result<NormStatistics> {
    if code.is_empty() {
        return Err(Error::EmptyCode(0));
    }
    let norms = code.norms_sq();
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let outside = norms.iter().filter(|&&x| x <= 1.0 - epsilon || x >= 1.0 + epsilon).count() as f64 / n;
    Ok(NormStatistics {
        mean,
        var,
        chebyshev_bound: (1.0 + epsilon) * source_purity / (epsilon * epsilon),
        outside_fraction: outside,
        epsilon,
    })
}

/// Exact variance of `⟨α|α⟩` for USD codes: `d/(d+1)(Tr ρ² + 1) − 1`.
pub fn usd_norm_variance(source: &CodeSource) -> f64 {
    let d = source.rank() as f64;
    d / (d + 1.0) * (source.purity() + 1.0) - 1.0
}
