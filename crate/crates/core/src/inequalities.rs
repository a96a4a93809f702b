//! Checkable forms of the analytic inequalities used by the coding
//! arguments, each reporting both sides and the margin, plus seeded random
//! sweeps that serialize any violating instance for replay.
//!
//! Norms are Schatten-1 throughout (`‖X‖ = Tr|X|`). The Fuchs–van de Graaf
//! upper bound is the standard `½‖ρ−σ‖ ≤ √(1−F²)`.

use std::f64::consts::LN_2;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dyad_difference_trace_norm, eig_h, fidelity, hermitian_deviation, identity, matrix_from_rows, matrix_to_rows,
    max_abs, sqrt_psd, trace, vector_from_pairs, vector_to_pairs, CMatrix, CVector, MatrixRows, SUPPORT_TOL,
};
use crate::quantum::{entropy, eta, relative_entropy, DensityOperator, KrausChannel};
use crate::random::{random_channel, random_density, random_density_rank, random_hermitian, random_pure, random_psd_rank, random_unitary};
use crate::rng::{stream, uniform};

pub const INEQ_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IneqReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub holds: bool,
    pub applicable: bool,
}

impl IneqReport {
    /// `lhs ≤ rhs`.
    pub fn new(lhs: f64, rhs: f64, applicable: bool) -> Self {
        let margin = rhs - lhs;
        Self {
            lhs,
            rhs,
            margin,
            holds: margin >= -INEQ_TOL,
            applicable,
        }
    }

    fn not_applicable() -> Self {
        Self {
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            holds: true,
            applicable: false,
        }
    }
}

/// `‖ρ−σ‖₁² / (2 ln 2) ≤ S(ρ‖σ)`.
pub fn pinsker(rho: &DensityOperator, sigma: &DensityOperator) -> Result<IneqReport> {
    let t = crate::linalg::trace_norm_hermitian(&(rho.mat() - sigma.mat()))?;
    let s = relative_entropy(rho, sigma);
    Ok(IneqReport::new(t * t / (2.0 * LN_2), s, s.is_finite()))
}

/// `|S(ρ) − S(σ)| ≤ T log₂ d + η(T)` with `T = ‖ρ−σ‖₁ < 1/3`.
pub fn fannes(rho: &DensityOperator, sigma: &DensityOperator, d: usize) -> Result<IneqReport> {
    let t = crate::linalg::trace_norm_hermitian(&(rho.mat() - sigma.mat()))?;
    let lhs = (entropy(rho) - entropy(sigma)).abs();
    Ok(IneqReport::new(lhs, t * (d as f64).log2() + eta(t), t < 1.0 / 3.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedReport {
    /// `1 − F ≤ ½‖ρ−σ‖₁`.
    pub lower: IneqReport,
    /// `½‖ρ−σ‖₁ ≤ √(1 − F²)`.
    pub upper: IneqReport,
}

impl TwoSidedReport {
    /// The side with the smaller margin.
    pub fn combined(&self) -> IneqReport {
        if self.lower.margin <= self.upper.margin {
            self.lower
        } else {
            self.upper
        }
    }
}

pub fn fuchs_van_de_graaf(rho: &DensityOperator, sigma: &DensityOperator) -> Result<TwoSidedReport> {
    let f = fidelity(rho.mat(), sigma.mat())?.clamp(0.0, 1.0);
    let half = 0.5 * crate::linalg::trace_norm_hermitian(&(rho.mat() - sigma.mat()))?;
    Ok(TwoSidedReport {
        lower: IneqReport::new(1.0 - f, half, true),
        upper: IneqReport::new(half, (1.0 - f * f).max(0.0).sqrt(), true),
    })
}

/// `I − (S+T)^{-1/2} S (S+T)^{-1/2} ≤ 2(I − S) + 4T` on `supp(S+T)`.
///
/// Reported as `0 ≤ λ_min(RHS − LHS)`: `lhs = 0`, `rhs = margin`.
pub fn hayashi_nagaoka(s: &CMatrix, t: &CMatrix) -> Result<IneqReport> {
    let d = s.nrows();
    if s.shape() != t.shape() || !s.is_square() {
        return Err(Error::DimensionMismatch("S and T must be square of equal size".into()));
    }
    let s_spec = eig_h(s)?;
    let t_spec = eig_h(t)?;
    let applicable = s_spec.min_eigenvalue() >= -1e-10 && s_spec.max_eigenvalue() <= 1.0 + 1e-10 && t_spec.min_eigenvalue() >= -1e-10;
    if !applicable {
        return Ok(IneqReport::not_applicable());
    }
    let total = s + t;
    let q = eig_h(&total)?.support_basis(SUPPORT_TOL);
    if q.ncols() == 0 {
        return Ok(IneqReport::new(0.0, 0.0, true));
    }
    let inv = sqrt_psd(&total, true)?;
    let lhs = identity(d) - &inv * s * &inv;
    let rhs = (identity(d) - s).scale(2.0) + t.scale(4.0);
    let diff = q.adjoint() * (rhs - lhs) * &q;
    let m = eig_h(&crate::linalg::symmetrize(&diff))?.min_eigenvalue();
    Ok(IneqReport::new(0.0, m, true))
}

/// `‖X‖₁² ≤ rank(X) ‖X‖²_HS` for Hermitian `X`.
pub fn trace_hs_dim(x: &CMatrix) -> Result<IneqReport> {
    if !x.is_square() || hermitian_deviation(x) > 1e-10 * max_abs(x).max(1.0) {
        return Ok(IneqReport::not_applicable());
    }
    let vals = eig_h(x)?.eigenvalues;
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rank = vals.iter().filter(|v| v.abs() > 1e-12 * top).count() as f64;
    let l1: f64 = vals.iter().map(|v| v.abs()).sum();
    let l2: f64 = vals.iter().map(|v| v * v).sum();
    Ok(IneqReport::new(l1 * l1, rank * l2, true))
}

/// `‖|ψ̃⟩⟨ψ̃| − |ψ⟩⟨ψ|‖₁ ≤ 6√ε` for `ψ̃ = Πψ'` and `ψ = ψ'/‖ψ'‖`, under
/// `|⟨ψ̃|ψ'⟩|² ≥ 1−ε`, `⟨ψ'|ψ'⟩ ≤ 1+ε` and `0 ≤ ε < 1`.
pub fn projector_closeness(psi_prime: &CVector, pi: &CMatrix, epsilon: f64) -> Result<IneqReport> {
    if pi.shape() != (psi_prime.len(), psi_prime.len()) {
        return Err(Error::DimensionMismatch("projector and vector differ in dimension".into()));
    }
    let is_projector = hermitian_deviation(pi) <= 1e-9 && max_abs(&(pi * pi - pi)) <= 1e-9;
    let tilde = pi * psi_prime;
    let inner = tilde.dotc(psi_prime).norm_sqr();
    let norm_sq = psi_prime.norm_squared();
    let applicable = is_projector
        && (0.0..1.0).contains(&epsilon)
        && inner >= 1.0 - epsilon - 1e-12
        && norm_sq <= 1.0 + epsilon + 1e-12
        && norm_sq > 0.0;
    if !applicable {
        return Ok(IneqReport::not_applicable());
    }
    let psi = psi_prime.unscale(norm_sq.sqrt());
    Ok(IneqReport::new(dyad_difference_trace_norm(&tilde, &psi), 6.0 * epsilon.sqrt(), true))
}

/// The smallest `ε` meeting both hypotheses of [`projector_closeness`].
pub fn closeness_epsilon(psi_prime: &CVector, pi: &CMatrix) -> f64 {
    let tilde = pi * psi_prime;
    let inner = tilde.dotc(psi_prime).norm_sqr();
    (1.0 - inner).max(psi_prime.norm_squared() - 1.0).max(0.0)
}

/// `supp σ ⊆ supp ρ ⇒ supp Λ(σ) ⊆ supp Λ(ρ)`, measured as the weight of
/// `Λ(σ)` outside `supp Λ(ρ)` (`lhs`) against `rhs = 0`.
pub fn support_monotonicity(rho: &DensityOperator, sigma: &DensityOperator, ch: &KrausChannel) -> Result<IneqReport> {
    let d = rho.dim();
    if sigma.dim() != d || ch.d_in() != d {
        return Err(Error::DimensionMismatch("states and channel input differ in dimension".into()));
    }
    let p_in = crate::linalg::support_projector(rho.mat(), SUPPORT_TOL)?;
    let outside_in = identity(d) - p_in;
    let leak = trace(&(&outside_in * sigma.mat() * &outside_in)).re;
    if leak > 1e-9 * sigma.trace().max(1.0) {
        return Ok(IneqReport::not_applicable());
    }
    let p_out = crate::linalg::support_projector(&ch.apply_matrix(rho.mat())?, SUPPORT_TOL)?;
    let outside = identity(ch.d_out()) - p_out;
    let w = trace(&(&outside * ch.apply_matrix(sigma.mat())? * &outside)).re;
    Ok(IneqReport::new(w.max(0.0), 0.0, true))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Pinsker,
    Fannes,
    FuchsVanDeGraaf,
    HayashiNagaoka,
    TraceHsDim,
    ProjectorCloseness,
    SupportMonotonicity,
}

impl Predicate {
    pub const ALL: [Predicate; 7] = [
        Predicate::Pinsker,
        Predicate::Fannes,
        Predicate::FuchsVanDeGraaf,
        Predicate::HayashiNagaoka,
        Predicate::TraceHsDim,
        Predicate::ProjectorCloseness,
        Predicate::SupportMonotonicity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::Pinsker => "pinsker",
            Predicate::Fannes => "fannes",
            Predicate::FuchsVanDeGraaf => "fuchs_van_de_graaf",
            Predicate::HayashiNagaoka => "hayashi_nagaoka",
            Predicate::TraceHsDim => "trace_hs_dim",
            Predicate::ProjectorCloseness => "projector_closeness",
            Predicate::SupportMonotonicity => "support_monotonicity",
        }
    }

    fn id(self) -> u32 {
        Self::ALL.iter().position(|p| *p == self).expect("listed") as u32
    }

    /// Random precondition-satisfying instance of dimension `d`.
    pub fn generate<R: RngCore + ?Sized>(self, d: usize, rng: &mut R) -> Instance {
        match self {
            Predicate::Pinsker => {
                let k = 1 + below(rng, d);
                Instance::Pinsker {
                    rho: rows(random_density_rank(rng, d, k).mat()),
                    sigma: rows(random_density(rng, d).mat()),
                }
            }
            Predicate::Fannes => {
                // ‖σ − ω‖₁ ≤ 2, so λ < 1/6 keeps T below 1/3
                let (k1, k2) = (1 + below(rng, d), 1 + below(rng, d));
                let sigma = random_density_rank(rng, d, k1);
                let omega = random_density_rank(rng, d, k2);
                let lambda = uniform(rng) / 6.0 * 0.999;
                let rho = sigma.mat().scale(1.0 - lambda) + omega.mat().scale(lambda);
                Instance::Fannes {
                    rho: rows(&rho),
                    sigma: rows(sigma.mat()),
                    d,
                }
            }
            Predicate::FuchsVanDeGraaf => {
                let (k1, k2) = (1 + below(rng, d), 1 + below(rng, d));
                Instance::FuchsVanDeGraaf {
                    rho: rows(random_density_rank(rng, d, k1).mat()),
                    sigma: rows(random_density_rank(rng, d, k2).mat()),
                }
            }
            Predicate::HayashiNagaoka => {
                let k1 = 1 + below(rng, d);
                let p = random_psd_rank(rng, d, k1);
                let top = eig_h(&p).map(|s| s.max_eigenvalue()).unwrap_or(1.0).max(f64::MIN_POSITIVE);
                let s = p.unscale(top * (1.0 + uniform(rng)));
                let k2 = 1 + below(rng, d);
                let t = random_psd_rank(rng, d, k2).scale(uniform(rng));
                Instance::HayashiNagaoka { s: rows(&s), t: rows(&t) }
            }
            Predicate::TraceHsDim => {
                let k = 1 + below(rng, d);
                let u = random_unitary(rng, d);
                let h = random_hermitian(rng, k);
                let mut x = CMatrix::zeros(d, d);
                x.view_mut((0, 0), (k, k)).copy_from(&h);
                Instance::TraceHsDim { x: rows(&(&u * x * u.adjoint())) }
            }
            Predicate::ProjectorCloseness => {
                let rank = d - below(rng, 2).min(d - 1);
                let u = random_unitary(rng, d);
                let basis = u.columns(0, rank).into_owned();
                let pi = &basis * basis.adjoint();
                let inside = random_pure(rng, d);
                let noise = random_pure(rng, d);
                let mix = 0.3 * uniform(rng);
                let scale = 1.0 + 0.2 * (uniform(rng) - 0.5);
                let v = (&pi * inside).scale(1.0 - mix) + noise.scale(mix);
                let psi = v.unscale(v.norm()).scale(scale.sqrt());
                let epsilon = closeness_epsilon(&psi, &pi);
                Instance::ProjectorCloseness {
                    psi: vector_to_pairs(&psi),
                    pi: rows(&pi),
                    epsilon,
                }
            }
            Predicate::SupportMonotonicity => {
                let k = 1 + below(rng, d);
                let rho = random_density_rank(rng, d, k);
                let basis = rho.spectrum().support_basis(SUPPORT_TOL);
                let r = basis.ncols();
                let k2 = 1 + below(rng, r);
                let inner = random_density_rank(rng, r, k2);
                let sigma = &basis * inner.mat() * basis.adjoint();
                let d_out = 2 + below(rng, d - 1);
                let kraus = d.div_ceil(d_out) + below(rng, 2);
                let ch = random_channel(rng, d, d_out, kraus);
                Instance::SupportMonotonicity {
                    rho: rows(rho.mat()),
                    sigma: rows(&sigma),
                    kraus: ch.ops().iter().map(matrix_to_rows).collect(),
                }
            }
        }
    }

    /// Instances at or near equality.
    pub fn witnesses(self, d: usize) -> Vec<Instance> {
        let mixed = rows(&identity(d).unscale(d as f64));
        let e0 = rows(DensityOperator::basis_state(d, 0).mat());
        match self {
            Predicate::Pinsker => vec![Instance::Pinsker { rho: mixed.clone(), sigma: mixed }],
            Predicate::Fannes => vec![Instance::Fannes { rho: mixed.clone(), sigma: mixed, d }],
            Predicate::FuchsVanDeGraaf => vec![
                Instance::FuchsVanDeGraaf { rho: mixed.clone(), sigma: mixed },
                Instance::FuchsVanDeGraaf {
                    rho: e0,
                    sigma: rows(DensityOperator::basis_state(d, 1).mat()),
                },
            ],
            Predicate::HayashiNagaoka => vec![Instance::HayashiNagaoka {
                s: rows(&identity(d)),
                t: rows(&CMatrix::zeros(d, d)),
            }],
            Predicate::TraceHsDim => vec![Instance::TraceHsDim { x: e0 }],
            Predicate::ProjectorCloseness => vec![Instance::ProjectorCloseness {
                psi: vector_to_pairs(&crate::linalg::basis_vector(d, 0)),
                pi: rows(&identity(d)),
                epsilon: 0.0,
            }],
            Predicate::SupportMonotonicity => vec![Instance::SupportMonotonicity {
                rho: mixed.clone(),
                sigma: mixed,
                kraus: KrausChannel::identity(d).ops().iter().map(matrix_to_rows).collect(),
            }],
        }
    }
}

fn rows(m: &CMatrix) -> MatrixRows {
    matrix_to_rows(m)
}

fn below<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    ((uniform(rng) * n as f64) as usize).min(n.saturating_sub(1))
}

fn state(m: &MatrixRows) -> Result<DensityOperator> {
    Ok(DensityOperator::from_psd_unchecked(matrix_from_rows(m)?))
}

/// Every input of one predicate evaluation, serializable for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum Instance {
    Pinsker { rho: MatrixRows, sigma: MatrixRows },
    Fannes { rho: MatrixRows, sigma: MatrixRows, d: usize },
    FuchsVanDeGraaf { rho: MatrixRows, sigma: MatrixRows },
    HayashiNagaoka { s: MatrixRows, t: MatrixRows },
    TraceHsDim { x: MatrixRows },
    ProjectorCloseness { psi: Vec<[f64; 2]>, pi: MatrixRows, epsilon: f64 },
    SupportMonotonicity { rho: MatrixRows, sigma: MatrixRows, kraus: Vec<MatrixRows> },
}

impl Instance {
    pub fn predicate(&self) -> Predicate {
        match self {
            Instance::Pinsker { .. } => Predicate::Pinsker,
            Instance::Fannes { .. } => Predicate::Fannes,
            Instance::FuchsVanDeGraaf { .. } => Predicate::FuchsVanDeGraaf,
            Instance::HayashiNagaoka { .. } => Predicate::HayashiNagaoka,
            Instance::TraceHsDim { .. } => Predicate::TraceHsDim,
            Instance::ProjectorCloseness { .. } => Predicate::ProjectorCloseness,
            Instance::SupportMonotonicity { .. } => Predicate::SupportMonotonicity,
        }
    }

    pub fn evaluate(&self) -> Result<IneqReport> {
        match self {
            Instance::Pinsker { rho, sigma } => pinsker(&state(rho)?, &state(sigma)?),
            Instance::Fannes { rho, sigma, d } => fannes(&state(rho)?, &state(sigma)?, *d),
            Instance::FuchsVanDeGraaf { rho, sigma } => Ok(fuchs_van_de_graaf(&state(rho)?, &state(sigma)?)?.combined()),
            Instance::HayashiNagaoka { s, t } => hayashi_nagaoka(&matrix_from_rows(s)?, &matrix_from_rows(t)?),
            Instance::TraceHsDim { x } => trace_hs_dim(&matrix_from_rows(x)?),
            Instance::ProjectorCloseness { psi, pi, epsilon } => projector_closeness(&vector_from_pairs(psi), &matrix_from_rows(pi)?, *epsilon),
            Instance::SupportMonotonicity { rho, sigma, kraus } => {
                let ops = kraus.iter().map(matrix_from_rows).collect::<Result<Vec<_>>>()?;
                support_monotonicity(&state(rho)?, &state(sigma)?, &KrausChannel::new(ops)?)
            }
        }
    }
}

/// A failed check with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub d: usize,
    pub seed: u64,
    /// Draw index, or `None` for a fixed witness.
    pub draw: Option<u32>,
    pub report: IneqReport,
    pub instance: Instance,
}

impl Violation {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        Ok(serde_json::from_value(v.clone())?)
    }

    /// Re-evaluates the stored instance.
    pub fn replay(&self) -> Result<IneqReport> {
        self.instance.evaluate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimSummary {
    pub d: usize,
    pub draws: usize,
    pub min_margin: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub predicate: Predicate,
    pub per_dim: Vec<DimSummary>,
    /// Smallest absolute margin among the fixed witnesses.
    pub witness_margin: f64,
    pub violations: Vec<Violation>,
}

impl SweepReport {
    pub fn min_margin(&self) -> f64 {
        self.per_dim.iter().map(|s| s.min_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn draws(&self) -> usize {
        self.per_dim.iter().map(|s| s.draws).sum()
    }

    /// No violations and a witness within `1e-6` of equality.
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.witness_margin <= 1e-6
    }
}

/// Attempts per draw before a generator is considered broken.
const MAX_ATTEMPTS: usize = 100;

/// Draw `j` at dimension `d` uses stream `(seed, 16·predicate + d, j)`.
pub fn sweep(predicate: Predicate, dims: &[usize], draws: usize, seed: u64) -> Result<SweepReport> {
    let mut per_dim = Vec::with_capacity(dims.len());
    let mut violations = Vec::new();
    let mut witness_margin = f64::INFINITY;
    for &d in dims {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("sweep dimension {d} < 2")));
        }
        let results: Vec<Result<(Instance, IneqReport, u32)>> = (0..draws as u32)
            .into_par_iter()
            .map(|j| {
                let mut rng = stream(seed, predicate.id() * 16 + d as u32, j);
                for _ in 0..MAX_ATTEMPTS {
                    let inst = predicate.generate(d, &mut rng);
                    let rep = inst.evaluate()?;
                    if rep.applicable {
                        return Ok((inst, rep, j));
                    }
                }
                Err(Error::Inconsistent(format!("{} generator produced no applicable instance at d = {d}", predicate.name())))
            })
            .collect();
        let mut summary = DimSummary {
            d,
            draws: 0,
            min_margin: f64::INFINITY,
            failures: 0,
        };
        for r in results {
            let (inst, rep, j) = r?;
            summary.draws += 1;
            summary.min_margin = summary.min_margin.min(rep.margin);
            if !rep.holds {
                summary.failures += 1;
                violations.push(Violation {
                    d,
                    seed,
                    draw: Some(j),
                    report: rep,
                    instance: inst,
                });
            }
        }
        for inst in predicate.witnesses(d) {
            let rep = inst.evaluate()?;
            witness_margin = witness_margin.min(rep.margin.abs());
            summary.min_margin = summary.min_margin.min(rep.margin);
            if !rep.holds || !rep.applicable {
                violations.push(Violation {
                    d,
                    seed,
                    draw: None,
                    report: rep,
                    instance: inst,
                });
            }
        }
        per_dim.push(summary);
    }
    Ok(SweepReport {
        predicate,
        per_dim,
        witness_margin,
        violations,
    })
}

pub fn sweep_all(dims: &[usize], draws: usize, seed: u64) -> Result<Vec<SweepReport>> {
    Predicate::ALL.iter().map(|&p| sweep(p, dims, draws, seed)).collect()
}
