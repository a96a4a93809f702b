//! One code sent through `n` uses of a channel: encoding, the tripartite
//! output state, typical projection, quantum error, the Uhlmann decoder,
//! privacy and distinguishability of the channel outputs.
//!
//! A [`JointState`] stores `ψ[a, b, e]` with the marker `a` most significant
//! (`index = a·d_B·d_E + b·d_E + e`). Codeword `α` contributes the block
//! `G_α / √Z` where `G_α` has columns `A_k |α⟩` and `Z = Σ_α ⟨α|α⟩`.

use std::f64::consts::LN_2;

use crate::codes::Code;
use crate::error::{Error, Result};
use crate::linalg::{
    column_space, complete_unitary, dyad_difference_trace_norm, eig_h, identity, sqrt_psd, support_projector,
    tensor, trace_norm, trace_norm_hermitian, CMatrix, CVector, C64, SUPPORT_TOL, ZERO,
};
use crate::quantum::{entropy, eta, holevo_chi, DensityOperator, Ensemble, KrausChannel, PureState};
use crate::typicality::{Budget, ProtocolStates};

/// Slack for the decoder and Prop-2 style bounds.
pub const BOUND_TOL: f64 = 1e-8;
/// Slack for operator contracts (POVM, trace-norm comparisons).
pub const CONTRACT_TOL: f64 = 1e-9;

/// Tripartite vector on marker ⊗ B ⊗ E.
#[derive(Clone, Debug)]
pub struct JointState {
    pub vec: CVector,
    /// `(N, d_B, d_E)`.
    pub dims: [usize; 3],
    pub normalized: bool,
    pub norm_sq: f64,
}

impl JointState {
    pub fn new(vec: CVector, dims: [usize; 3], normalized: bool) -> Result<Self> {
        if dims.iter().product::<usize>() != vec.len() {
            return Err(Error::DimensionMismatch(format!("joint dims {dims:?} for {} entries", vec.len())));
        }
        let norm_sq = vec.norm_squared();
        Ok(Self { vec, dims, normalized, norm_sq })
    }

    fn from_blocks(blocks: &[CMatrix], normalized: bool) -> Self {
        let (db, de) = blocks[0].shape();
        let mut vec = CVector::zeros(blocks.len() * db * de);
        for (a, blk) in blocks.iter().enumerate() {
            for b in 0..db {
                for e in 0..de {
                    vec[(a * db + b) * de + e] = blk[(b, e)];
                }
            }
        }
        let norm_sq = vec.norm_squared();
        Self {
            vec,
            dims: [blocks.len(), db, de],
            normalized,
            norm_sq,
        }
    }

    pub fn n_markers(&self) -> usize {
        self.dims[0]
    }

    pub fn d_b(&self) -> usize {
        self.dims[1]
    }

    pub fn d_e(&self) -> usize {
        self.dims[2]
    }

    /// `ψ[a, ·, ·]` as a `d_B × d_E` matrix.
    pub fn block(&self, a: usize) -> CMatrix {
        let [_, db, de] = self.dims;
        let off = a * db * de;
        CMatrix::from_fn(db, de, |b, e| self.vec[off + b * de + e])
    }

    pub fn blocks(&self) -> Vec<CMatrix> {
        (0..self.n_markers()).map(|a| self.block(a)).collect()
    }

    /// `(a,b) × e` reshaping.
    pub fn matrix(&self) -> CMatrix {
        let de = self.d_e();
        CMatrix::from_fn(self.n_markers() * self.d_b(), de, |r, e| self.vec[r * de + e])
    }

    pub fn as_pure_state(&self) -> PureState {
        PureState {
            vec: self.vec.clone(),
            dims: self.dims.to_vec(),
        }
    }

    pub fn reduce_ab(&self) -> CMatrix {
        let m = self.matrix();
        &m * m.adjoint()
    }

    pub fn reduce_a(&self) -> CMatrix {
        let blocks = self.blocks();
        let n = blocks.len();
        let mut out = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = blocks[j].dotc(&blocks[i]);
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        out
    }

    pub fn reduce_b(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.d_b(), self.d_b());
        for blk in self.blocks() {
            out += &blk * blk.adjoint();
        }
        out
    }

    pub fn reduce_e(&self) -> CMatrix {
        let m = self.matrix();
        m.transpose() * m.map(|z| z.conj())
    }

    /// `σ_AE[(a,e),(a',e')] = (B_aᵀ B_a'*)[e,e']`.
    pub fn reduce_ae(&self) -> CMatrix {
        let blocks = self.blocks();
        let (n, de) = (blocks.len(), self.d_e());
        let conj: Vec<CMatrix> = blocks.iter().map(|b| b.map(|z| z.conj())).collect();
        let mut out = CMatrix::zeros(n * de, n * de);
        for a in 0..n {
            for a2 in a..n {
                let m = blocks[a].transpose() * &conj[a2];
                out.view_mut((a * de, a2 * de), (de, de)).copy_from(&m);
                if a2 != a {
                    out.view_mut((a2 * de, a * de), (de, de)).copy_from(&m.adjoint());
                }
            }
        }
        out
    }

    /// Same state with E restricted to the support of `σ_E`
    /// (an isometry on E, so every quantity on A, B, AE or E is unchanged).
    pub fn compress_environment(&self) -> JointState {
        let m = self.matrix();
        let q = column_space(&m.transpose(), 1e-14);
        let compressed = &m * q.map(|z| z.conj());
        let r = compressed.ncols();
        let vec = CVector::from_iterator(compressed.nrows() * r, (0..compressed.nrows()).flat_map(|row| (0..r).map(move |j| (row, j))).map(|(row, j)| compressed[(row, j)]));
        JointState {
            norm_sq: vec.norm_squared(),
            vec,
            dims: [self.dims[0], self.dims[1], r],
            normalized: self.normalized,
        }
    }
}

fn check_code(code: &Code) -> Result<f64> {
    if code.is_empty() {
        return Err(Error::EmptyCode(0));
    }
    let norms = code.norms_sq();
    if let Some(i) = norms.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::InvalidParameter(format!("codeword {i} has zero norm")));
    }
    Ok(norms.iter().sum())
}

/// `ψ_AA' = Z^{-1/2} Σ_α |α⟩_A |α⟩_A'` with computational markers, dims `[N, d]`.
pub fn encode_state(code: &Code) -> Result<PureState> {
    let z = check_code(code)?;
    let (n, d) = (code.len(), code.dim());
    let s = z.sqrt();
    let vec = CVector::from_fn(n * d, |idx, _| code.codewords[idx / d][idx % d] / s);
    PureState::new(vec, vec![n, d])
}

/// `ψ_ABE = Z^{-1/2} Σ_α Σ_k |α⟩_A A_k|α⟩_B |k⟩_E`.
pub fn joint_state(code: &Code, ch: &KrausChannel) -> Result<JointState> {
    let z = check_code(code)?;
    if ch.d_in() != code.dim() {
        return Err(Error::DimensionMismatch(format!(
            "channel input {} for codewords of length {}",
            ch.d_in(),
            code.dim()
        )));
    }
    let s = z.sqrt();
    let blocks = code
        .codewords
        .iter()
        .map(|v| Ok(ch.stinespring_columns(v)?.unscale(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointState::from_blocks(&blocks, true))
}

/// Projected vector with the trace-norm gap to the original.
#[derive(Clone, Debug)]
pub struct Projection {
    pub state: JointState,
    /// `⟨ψ̃|ψ̃⟩`.
    pub overlap: f64,
    /// `1 − |⟨ψ̃|ψ⟩|²`, the smallest `ε` meeting the overlap hypothesis.
    pub epsilon: f64,
    /// `‖|ψ⟩⟨ψ| − |ψ̃⟩⟨ψ̃|‖₁`.
    pub gap: f64,
}

impl Projection {
    /// Gap against `6√ε`, with the overlap hypothesis checked for that `ε`.
    pub fn lemma_check(&self, epsilon: f64) -> (bool, bool) {
        let applicable = self.epsilon <= epsilon + 1e-12;
        // ε comes from 1 − |⟨u|v⟩|², so it carries a few ulps of cancellation error.
        let eps = epsilon.max(0.0) + 4.0 * f64::EPSILON;
        (applicable, self.gap <= 6.0 * eps.sqrt() + CONTRACT_TOL)
    }
}

/// `(I_A ⊗ Π_B ⊗ Π_E)|ψ⟩`.
pub fn project_joint(js: &JointState, pi_b: &CMatrix, pi_e: &CMatrix) -> Result<Projection> {
    let [_, db, de] = js.dims;
    if pi_b.shape() != (db, db) || pi_e.shape() != (de, de) {
        return Err(Error::DimensionMismatch(format!(
            "projectors {:?}, {:?} for B = {db}, E = {de}",
            pi_b.shape(),
            pi_e.shape()
        )));
    }
    let pe_t = pi_e.transpose();
    let blocks: Vec<CMatrix> = js.blocks().iter().map(|b| pi_b * b * &pe_t).collect();
    let state = JointState::from_blocks(&blocks, false);
    let unit = js.vec.unscale(js.norm_sq.sqrt());
    let overlap = state.norm_sq;
    let inner = state.vec.dotc(&unit).norm_sqr();
    Ok(Projection {
        gap: dyad_difference_trace_norm(&unit, &state.vec),
        epsilon: (1.0 - inner).max(0.0),
        overlap,
        state,
    })
}

/// Environment projector of `ps` as a diagonal matrix on the Kraus indices.
pub fn environment_projector(ps: &ProtocolStates) -> CMatrix {
    let mask = ps.env_mask();
    CMatrix::from_fn(mask.len(), mask.len(), |i, j| if i == j && mask[i] { C64::new(1.0, 0.0) } else { ZERO })
}

/// Per-codeword Bob and Eve outputs.
#[derive(Clone, Debug)]
pub struct OutputEnsembles {
    /// Normalized `σ_B^α` with weights `⟨α|α⟩ / Σ_β ⟨β|β⟩`.
    pub bob: Ensemble,
    pub eve: Ensemble,
}

fn ensembles_from_blocks(blocks: &[CMatrix]) -> Result<OutputEnsembles> {
    let weights: Vec<f64> = blocks.iter().map(|b| b.norm_squared()).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut bob = Vec::with_capacity(blocks.len());
    let mut eve = Vec::with_capacity(blocks.len());
    for (b, w) in blocks.iter().zip(&weights) {
        bob.push(DensityOperator::from_psd_unchecked((b * b.adjoint()).unscale(*w)));
        eve.push(DensityOperator::from_psd_unchecked((b.transpose() * b.map(|z| z.conj())).unscale(*w)));
    }
    Ok(OutputEnsembles {
        bob: Ensemble::new(probs.clone(), bob)?,
        eve: Ensemble::new(probs, eve)?,
    })
}

/// Output ensembles of the unprojected code state.
pub fn output_ensembles(code: &Code, ch: &KrausChannel) -> Result<OutputEnsembles> {
    ensembles_from_blocks(&joint_state(code, ch)?.blocks())
}

/// `σ'^α_B = Σ_k F_k|α⟩⟨α|F_k†` and `σ'^α_E[k,k'] = Tr(F_k|α⟩⟨α|F_k'†)` on the
/// typical environment indices. Not normalized.
#[derive(Clone, Debug)]
pub struct PrimedOutputs {
    pub bob: Vec<CMatrix>,
    pub eve: Vec<CMatrix>,
    pub traces: Vec<f64>,
}

pub fn primed_outputs(code: &Code, ps: &ProtocolStates) -> Result<PrimedOutputs> {
    let data = codeword_data(code, ps)?;
    Ok(primed_from(&data))
}

fn primed_from(data: &[CodewordData]) -> PrimedOutputs {
    let mut out = PrimedOutputs {
        bob: Vec::with_capacity(data.len()),
        eve: Vec::with_capacity(data.len()),
        traces: Vec::with_capacity(data.len()),
    };
    for d in data {
        out.bob.push(&d.g_primed * d.g_primed.adjoint());
        out.eve.push(d.g_primed.transpose() * d.g_primed.map(|z| z.conj()));
        out.traces.push(d.g_primed.norm_squared());
    }
    out
}

struct CodewordData {
    norm_sq: f64,
    /// Columns `A_k|α⟩` over all Kraus indices.
    g: CMatrix,
    /// Columns `F_k|α⟩` over the typical environment indices.
    g_primed: CMatrix,
}

fn codeword_data(code: &Code, ps: &ProtocolStates) -> Result<Vec<CodewordData>> {
    check_code(code)?;
    if code.dim() != ps.d_a() {
        return Err(Error::DimensionMismatch(format!(
            "codewords of length {} for a {}-dimensional source",
            code.dim(),
            ps.d_a()
        )));
    }
    code.codewords
        .iter()
        .map(|v| {
            let g = ps.channel_n.stinespring_columns(v)?;
            let g_primed = if ps.env_indices.is_empty() {
                CMatrix::zeros(ps.d_b(), 0)
            } else {
                &ps.typ_b.projector * g.select_columns(&ps.env_indices)
            };
            Ok(CodewordData {
                norm_sq: v.norm_squared(),
                g,
                g_primed,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct QuantumError {
    /// `‖σ_AE − τ_A ⊗ σ_E‖₁` from the Hermitian spectrum.
    pub q_e: f64,
    /// The same norm from singular values.
    pub q_e_svd: f64,
    /// `‖σ_AE − σ_A ⊗ σ_E‖₁`.
    pub q_e_variant: f64,
}

/// Quantum error with `τ_A = I_N / N` on the marker space.
pub fn quantum_error(js: &JointState) -> Result<QuantumError> {
    let n = js.n_markers();
    let sigma_ae = js.reduce_ae();
    let sigma_e = js.reduce_e();
    let tau = identity(n).unscale(n as f64);
    let diff = &sigma_ae - tensor(&tau, &sigma_e);
    let diff_v = &sigma_ae - tensor(&js.reduce_a(), &sigma_e);
    Ok(QuantumError {
        q_e: trace_norm_hermitian(&diff)?,
        q_e_svd: trace_norm(&diff),
        q_e_variant: trace_norm_hermitian(&diff_v)?,
    })
}

#[derive(Clone, Debug)]
pub struct DecoderResult {
    /// `F(σ'_AB, ψ⁺_AB)` after decoding (root fidelity).
    pub fidelity: f64,
    /// `Σ s_i = F(σ_AE, τ_A ⊗ σ_E)`, the optimal purification overlap.
    pub uhlmann_overlap: f64,
    /// Dimension of the ancilla B'.
    pub ancilla_dim: usize,
    /// Isometry `B → B B'` (`(d_B·d_B') × d_B`, B' index fastest).
    pub isometry: CMatrix,
    /// `U_BB'` with `U(|b⟩|0⟩) = T|b⟩`, when requested.
    pub unitary: Option<CMatrix>,
}

/// Uhlmann decoder for a joint state whose E is given in any basis; the
/// ancilla has the dimension of E (compress E first to keep it small).
///
/// The target purification is `ψ⁺_AB ⊗ Σ_j √μ_j |w_j⟩_E |j⟩_B'` where
/// `σ_E = Σ_j μ_j |w_j⟩⟨w_j|`. With `X = Tr_AE |ψ⟩⟨φ|` and thin SVD
/// `X = W S V†`, the optimal isometry is `V W†`.
pub fn decoder(js: &JointState, build_unitary: bool, budget: &Budget) -> Result<DecoderResult> {
    let [n, db, r] = js.dims;
    if db < n {
        return Err(Error::DimensionShortfall { have: db, need: n });
    }
    let spec = eig_h(&js.reduce_e())?;
    let phi_conj = CMatrix::from_fn(r, r, |e, j| (spec.eigenvectors[(e, j)] * spec.eigenvalues[j].max(0.0).sqrt()).conj());
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let blocks = js.blocks();
    let mut x = CMatrix::zeros(db, n * r);
    for (c, blk) in blocks.iter().enumerate() {
        x.view_mut((0, c * r), (db, r)).copy_from(&(blk * &phi_conj).scale(inv_sqrt_n));
    }
    let svd = x.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let overlap: f64 = svd.singular_values.iter().sum();
    let k = u.ncols();
    let top = v_t.adjoint() * u.adjoint();

    let d_total = db * r;
    let mut iso = CMatrix::zeros(d_total, db);
    iso.view_mut((0, 0), (n * r, db)).copy_from(&top);
    if k < db {
        let w_perp = complete_unitary(&u).columns(k, db - k).into_owned();
        for i in 0..db - k {
            let row = n * r + i;
            for b in 0..db {
                iso[(row, b)] += w_perp[(b, i)].conj();
            }
        }
    }

    let mut f = CMatrix::zeros(r, r);
    for (c, blk) in blocks.iter().enumerate() {
        f += iso.view((c * r, 0), (r, db)) * blk;
    }
    let fidelity = f.norm() * inv_sqrt_n;

    let unitary = if build_unitary {
        budget.check_matrix("decoding unitary", d_total as u128)?;
        let q = complete_unitary(&iso);
        let mut u_full = CMatrix::zeros(d_total, d_total);
        let mut spare = db;
        for col in 0..d_total {
            if col % r == 0 {
                u_full.set_column(col, &q.column(col / r));
            } else {
                u_full.set_column(col, &q.column(spare));
                spare += 1;
            }
        }
        Some(u_full)
    } else {
        None
    };
    Ok(DecoderResult {
        fidelity,
        uhlmann_overlap: overlap,
        ancilla_dim: r,
        isometry: iso,
        unitary,
    })
}

#[derive(Clone, Debug)]
pub struct PrivacyMetrics {
    /// `x = (1/N) Σ_α ‖σ_E^α − σ_E‖₁`.
    pub avg_eve_distance: f64,
    pub chi_e: f64,
    /// `x·n·log₂ d + η(x)` with `d` the single-use environment dimension;
    /// `None` when `x > 1/3`.
    pub fannes_bound: Option<f64>,
    /// `(1/N) Σ_α ‖σ_E^α − σ'^α_E‖₁` (normalized true output against primed).
    pub sigsig_e: f64,
    /// `(1/N) Σ_α ‖σ'^α_E − ρ'_E‖₁`.
    pub primed_eve_distance: f64,
    /// `(1/N) Σ_α ‖σ'^α_E − ρ'_E‖₁²`.
    pub primed_eve_sq_distance: f64,
    /// `d_E (1/N) Σ_α Tr(σ'^α_E − ρ'_E)²` with `d_E` the typical environment dimension.
    pub hs_route_bound: f64,
}

fn privacy_from(data: &[CodewordData], ps: &ProtocolStates) -> Result<PrivacyMetrics> {
    let n = data.len();
    let nf = n as f64;
    let k = ps.k_n();
    let total: f64 = data.iter().map(|d| d.norm_sq).sum();
    let states: Vec<DensityOperator> = data
        .iter()
        .map(|d| DensityOperator::from_psd_unchecked((d.g.transpose() * d.g.map(|z| z.conj())).unscale(d.norm_sq)))
        .collect();
    let probs: Vec<f64> = data.iter().map(|d| d.norm_sq / total).collect();
    let ens = Ensemble::new(probs, states)?;
    let avg = ens.average();
    let chi_e = holevo_chi(&ens);
    let primed = primed_from(data);
    let rho_e = ps.rho_prime_e.mat();
    let r_e = ps.env_indices.len();

    let mut dist = 0.0;
    let mut sigsig = 0.0;
    let mut pd = 0.0;
    let mut pd_sq = 0.0;
    let mut hs = 0.0;
    for (s, sp) in ens.states().iter().zip(&primed.eve) {
        dist += trace_norm_hermitian(&(s.mat() - &avg))?;
        let mut embedded = s.mat().clone();
        for (i, &ki) in ps.env_indices.iter().enumerate() {
            for (j, &kj) in ps.env_indices.iter().enumerate() {
                embedded[(ki, kj)] -= sp[(i, j)];
            }
        }
        debug_assert_eq!(embedded.nrows(), k);
        sigsig += trace_norm_hermitian(&embedded)?;
        if r_e > 0 {
            let x = sp - rho_e;
            let t = trace_norm_hermitian(&x)?;
            pd += t;
            pd_sq += t * t;
            hs += r_e as f64 * x.norm_squared();
        }
    }
    let x = dist / nf;
    let d_env = ps.channel.d_env() as f64;
    Ok(PrivacyMetrics {
        avg_eve_distance: x,
        chi_e,
        fannes_bound: (x <= 1.0 / 3.0).then(|| x * ps.n as f64 * d_env.log2() + eta(x)),
        sigsig_e: sigsig / nf,
        primed_eve_distance: pd / nf,
        primed_eve_sq_distance: pd_sq / nf,
        hs_route_bound: hs / nf,
    })
}

/// Privacy figures of a code against the projected states `ps`.
pub fn privacy_metrics(code: &Code, ps: &ProtocolStates) -> Result<PrivacyMetrics> {
    privacy_from(&codeword_data(code, ps)?, ps)
}

/// Square-root measurement with a failure outcome.
#[derive(Clone, Debug)]
pub struct Povm {
    /// `Λ_α = Π^α Π_B Π^α`.
    pub lambdas: Vec<CMatrix>,
    /// `Y_α = S^{-1/2} Λ_α S^{-1/2}` with `S = Σ_β Λ_β`.
    pub elements: Vec<CMatrix>,
    /// `Y_0 = I − Σ_α Y_α`.
    pub completion: CMatrix,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct PovmReport {
    /// Smallest eigenvalue over all elements `Y_α` (`α ≥ 1`).
    pub min_eigenvalue: f64,
    /// Largest eigenvalue of `Σ_α Y_α − I`.
    pub sum_excess: f64,
    /// `max |Σ_α Y_α + Y_0 − I|` entrywise.
    pub completion_error: f64,
}

impl PovmReport {
    pub fn holds(&self) -> bool {
        self.min_eigenvalue >= -1e-10 && self.sum_excess <= CONTRACT_TOL && self.completion_error <= CONTRACT_TOL
    }
}

impl Povm {
    pub fn report(&self) -> Result<PovmReport> {
        let d = self.completion.nrows();
        let mut sum = CMatrix::zeros(d, d);
        let mut min_eig = f64::INFINITY;
        for y in &self.elements {
            sum += y;
            min_eig = min_eig.min(eig_h(y)?.min_eigenvalue());
        }
        let excess = eig_h(&(&sum - identity(d)))?.max_eigenvalue();
        let closure = &sum + &self.completion - identity(d);
        Ok(PovmReport {
            min_eigenvalue: min_eig,
            sum_excess: excess,
            completion_error: crate::linalg::max_abs(&closure),
        })
    }
}

/// Square-root measurement built from the supports of the primed Bob outputs.
pub fn sqrt_povm(bob_primed: &[CMatrix], pi_b: &CMatrix) -> Result<Povm> {
    let d = pi_b.nrows();
    if bob_primed.iter().any(|s| s.shape() != (d, d)) {
        return Err(Error::DimensionMismatch("primed outputs and Π_B differ in dimension".into()));
    }
    let lambdas = bob_primed
        .iter()
        .map(|s| {
            let p = support_projector(s, SUPPORT_TOL)?;
            Ok(&p * pi_b * &p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = CMatrix::zeros(d, d);
    for l in &lambdas {
        total += l;
    }
    if crate::linalg::max_abs(&total) == 0.0 {
        return Ok(Povm {
            elements: vec![CMatrix::zeros(d, d); lambdas.len()],
            lambdas,
            completion: identity(d),
            diagnostic: Some("all Λ_α vanish; measurement is the trivial {I}".into()),
        });
    }
    let inv = sqrt_psd(&total, true)?;
    let elements: Vec<CMatrix> = lambdas.iter().map(|l| &inv * l * &inv).collect();
    let mut sum = CMatrix::zeros(d, d);
    for y in &elements {
        sum += y;
    }
    Ok(Povm {
        completion: identity(d) - sum,
        elements,
        lambdas,
        diagnostic: None,
    })
}

#[derive(Clone, Debug)]
pub struct DistinguishabilityMetrics {
    /// `(1/N) Σ_α Tr σ_B^α Y_α` on the normalized true outputs.
    pub p_s: f64,
    /// `(1/N) Σ_α Tr σ'^α_B Y_α`.
    pub p_s_primed: f64,
    pub chi_b: f64,
    /// χ of the primed Bob outputs, weighted by their traces.
    pub chi_b_primed: f64,
    /// `log₂N − (8 p_e n log₂ d + 3η(p_e))`, clipped at 0.
    pub chi_lower_bound: f64,
    /// `2(1 − a) + 4b`.
    pub hn_bound: f64,
    /// `a = (1/N) Σ_α Tr σ'^α Λ_α`.
    pub hn_diagonal: f64,
    /// `b = (1/N) Σ_α Σ_{β≠α} Tr σ'^α Λ_β`.
    pub hn_cross: f64,
    /// `(1/N) Σ_α ‖σ_B^α − σ'^α_B‖₁`.
    pub sigsig_b: f64,
    /// `(1/N) Σ_α Tr σ'^α_B`.
    pub mean_primed_trace: f64,
    pub povm: PovmReport,
    pub povm_diagnostic: Option<String>,
}

impl DistinguishabilityMetrics {
    /// `1 − p̃_s ≤ hn_bound` is only implied when the primed outputs are
    /// sub-normalized on average.
    pub fn hn_applicable(&self) -> bool {
        self.mean_primed_trace <= 1.0 + 1e-12
    }

    pub fn hn_holds(&self) -> bool {
        1.0 - self.p_s_primed <= self.hn_bound + BOUND_TOL
    }

    pub fn sigsig_holds(&self) -> bool {
        (self.p_s - self.p_s_primed).abs() <= self.sigsig_b + CONTRACT_TOL
    }
}

fn re_trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    crate::linalg::trace_of_product(a, b).re
}

fn distinguishability_from(data: &[CodewordData], ps: &ProtocolStates) -> Result<DistinguishabilityMetrics> {
    let n = data.len();
    let nf = n as f64;
    let total: f64 = data.iter().map(|d| d.norm_sq).sum();
    let states: Vec<DensityOperator> = data
        .iter()
        .map(|d| DensityOperator::from_psd_unchecked((&d.g * d.g.adjoint()).unscale(d.norm_sq)))
        .collect();
    let ens = Ensemble::new(data.iter().map(|d| d.norm_sq / total).collect(), states)?;
    let chi_b = holevo_chi(&ens);
    let primed = primed_from(data);
    let povm = sqrt_povm(&primed.bob, &ps.typ_b.projector)?;

    let mut p_s = 0.0;
    let mut p_t = 0.0;
    let mut sigsig = 0.0;
    let mut a = 0.0;
    let mut b = 0.0;
    for (i, (s, sp)) in ens.states().iter().zip(&primed.bob).enumerate() {
        p_s += re_trace_product(s.mat(), &povm.elements[i]);
        p_t += re_trace_product(sp, &povm.elements[i]);
        sigsig += trace_norm_hermitian(&(s.mat() - sp))?;
        for (j, l) in povm.lambdas.iter().enumerate() {
            let v = re_trace_product(sp, l);
            if i == j {
                a += v;
            } else {
                b += v;
            }
        }
    }
    let (p_s, p_t, a, b) = (p_s / nf, p_t / nf, a / nf, b / nf);
    let chi_b_primed = match Ensemble::from_unnormalized(primed.bob.iter().map(|m| DensityOperator::from_psd_unchecked(m.clone())).collect()) {
        Ok(e) => holevo_chi(&e),
        Err(_) => 0.0,
    };
    let p_e = (1.0 - p_s).max(0.0);
    let d_out = ps.channel.d_out() as f64;
    let lower = nf.log2() - (8.0 * p_e * ps.n as f64 * d_out.log2() + 3.0 * eta(p_e));
    Ok(DistinguishabilityMetrics {
        p_s,
        p_s_primed: p_t,
        chi_b,
        chi_b_primed,
        chi_lower_bound: lower.max(0.0),
        hn_bound: 2.0 * (1.0 - a) + 4.0 * b,
        hn_diagonal: a,
        hn_cross: b,
        sigsig_b: sigsig / nf,
        mean_primed_trace: primed.traces.iter().sum::<f64>() / nf,
        povm: povm.report()?,
        povm_diagnostic: povm.diagnostic,
    })
}

/// Decoding figures of a code with the square-root measurement.
pub fn distinguishability_metrics(code: &Code, ps: &ProtocolStates) -> Result<DistinguishabilityMetrics> {
    distinguishability_from(&codeword_data(code, ps)?, ps)
}

/// Headline figures of one code.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeMetrics {
    pub q_e: f64,
    pub q_e_variant: f64,
    pub chi_b: f64,
    pub chi_e: f64,
    pub n_codewords: usize,
    pub log2_n: f64,
    pub avg_eve_distance: f64,
    pub p_s: f64,
    pub p_s_primed: f64,
    pub decoder_fidelity: f64,
    pub projected_overlap: f64,
    pub hn_bound: f64,
    /// `S(σ_B)` of the joint state.
    pub entropy_b: f64,
    /// `S(σ_E)` of the joint state.
    pub entropy_e: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBoundReport {
    pub lhs: f64,
    /// `√(2 ln 2) · √(χ_E + log₂N − χ_B)`.
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    /// `(χ_B − χ_E) − (S_B − S_E)`.
    pub identity_gap: f64,
    pub identity_holds: bool,
}

/// `q_e ≤ √(2 ln 2) √(χ_E + log₂N − χ_B)` together with the entropy chain.
///
/// The displayed form of the bound (environment χ added, Bob χ subtracted)
/// is the one supported by the relative-entropy chain
/// `S(σ_AE‖τ_A⊗σ_E) = log₂N − χ_B + χ_E`; the swapped form is not checked.
pub fn error_bound_check(m: &CodeMetrics) -> Result<ErrorBoundReport> {
    let inner = m.chi_e + m.log2_n - m.chi_b;
    if inner < -BOUND_TOL {
        return Err(Error::Inconsistent(format!("χ_E + log N − χ_B = {inner:e} is negative")));
    }
    let rhs = (2.0 * LN_2).sqrt() * inner.max(0.0).sqrt();
    let identity_gap = (m.chi_b - m.chi_e) - (m.entropy_b - m.entropy_e);
    Ok(ErrorBoundReport {
        lhs: m.q_e,
        rhs,
        slack: rhs - m.q_e,
        holds: m.q_e <= rhs + BOUND_TOL,
        identity_gap,
        identity_holds: identity_gap.abs() <= BOUND_TOL,
    })
}

/// Which optional parts of a trial to evaluate.
#[derive(Clone, Copy, Debug)]
pub struct TrialOptions {
    pub privacy: bool,
    pub distinguishability: bool,
    pub decoder: bool,
    pub build_unitary: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            privacy: true,
            distinguishability: true,
            decoder: true,
            build_unitary: false,
        }
    }
}

/// Everything measured on one code, plus the contract checks.
#[derive(Clone, Debug)]
pub struct TrialReport {
    /// Skipped parts are reported as NaN.
    pub metrics: CodeMetrics,
    pub bound: ErrorBoundReport,
    pub quantum_error: QuantumError,
    pub projection: Projection,
    pub privacy: Option<PrivacyMetrics>,
    pub distinguishability: Option<DistinguishabilityMetrics>,
    pub decoder: Option<DecoderResult>,
    /// `max_α |S(σ_B^α) − S(σ_E^α)|`.
    pub entropy_duality_gap: f64,
    /// `|S(σ_AE) − S(σ_B)|`.
    pub purity_gap: f64,
}

impl TrialReport {
    /// Every failed invariant, described in one line each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let m = &self.metrics;
        if !self.bound.holds {
            v.push(format!("error bound: q_e = {:e} > {:e}", self.bound.lhs, self.bound.rhs));
        }
        if !self.bound.identity_holds {
            v.push(format!("entropy chain gap {:e}", self.bound.identity_gap));
        }
        if (self.quantum_error.q_e - self.quantum_error.q_e_svd).abs() > CONTRACT_TOL {
            v.push(format!("q_e paths disagree: {:e} vs {:e}", self.quantum_error.q_e, self.quantum_error.q_e_svd));
        }
        if self.entropy_duality_gap > BOUND_TOL {
            v.push(format!("per-codeword entropy duality gap {:e}", self.entropy_duality_gap));
        }
        if self.purity_gap > BOUND_TOL {
            v.push(format!("S_AE − S_B = {:e}", self.purity_gap));
        }
        let (_, proj_ok) = self.projection.lemma_check(self.projection.epsilon);
        if !proj_ok {
            v.push(format!("projection gap {:e} exceeds 6√ε", self.projection.gap));
        }
        if self.decoder.is_some() && m.decoder_fidelity < 1.0 - m.q_e / 2.0 - BOUND_TOL {
            v.push(format!("decoder fidelity {:e} < 1 − q_e/2", m.decoder_fidelity));
        }
        if let Some(d) = &self.distinguishability {
            if !d.povm.holds() {
                v.push(format!("POVM contract: {:?}", d.povm));
            }
            if !d.sigsig_holds() {
                v.push(format!("|p_s − p̃_s| = {:e} > {:e}", (d.p_s - d.p_s_primed).abs(), d.sigsig_b));
            }
            if d.hn_applicable() && !d.hn_holds() {
                v.push(format!("1 − p̃_s = {:e} > hn bound {:e}", 1.0 - d.p_s_primed, d.hn_bound));
            }
        }
        v
    }
}

fn entropy_of_gram(m: &CMatrix) -> f64 {
    entropy(&DensityOperator::from_psd_unchecked(m.clone()))
}

/// Runs the whole pipeline for one code over the states `ps`.
pub fn run_trial(ps: &ProtocolStates, code: &Code, opts: TrialOptions, budget: &Budget) -> Result<TrialReport> {
    let full = joint_state(code, &ps.channel_n)?;
    let projection = project_joint(&full, &ps.typ_b.projector, &environment_projector(ps))?;
    let js = full.compress_environment();
    drop(full);

    let qe = quantum_error(&js)?;
    let sigma_b = js.reduce_b();
    let entropy_b = entropy_of_gram(&sigma_b);
    let entropy_e = entropy_of_gram(&js.reduce_e());
    let purity_gap = (entropy_of_gram(&js.reduce_ae()) - entropy_b).abs();

    let blocks = js.blocks();
    let mut duality = 0.0f64;
    for b in &blocks {
        let w = b.norm_squared();
        let sb = entropy_of_gram(&(b * b.adjoint()).unscale(w));
        let se = entropy_of_gram(&(b.transpose() * b.map(|z| z.conj())).unscale(w));
        duality = duality.max((sb - se).abs());
    }
    let ens = ensembles_from_blocks(&blocks)?;
    let chi_b = holevo_chi(&ens.bob);
    let chi_e = holevo_chi(&ens.eve);

    let data = if opts.privacy || opts.distinguishability {
        Some(codeword_data(code, ps)?)
    } else {
        None
    };
    let privacy = match (&data, opts.privacy) {
        (Some(d), true) => Some(privacy_from(d, ps)?),
        _ => None,
    };
    let distinguishability = match (&data, opts.distinguishability) {
        (Some(d), true) => Some(distinguishability_from(d, ps)?),
        _ => None,
    };
    let decoder = if opts.decoder {
        Some(decoder(&js, opts.build_unitary, budget)?)
    } else {
        None
    };

    let n = code.len();
    let metrics = CodeMetrics {
        q_e: qe.q_e,
        q_e_variant: qe.q_e_variant,
        chi_b,
        chi_e,
        n_codewords: n,
        log2_n: (n as f64).log2(),
        avg_eve_distance: privacy.as_ref().map_or(f64::NAN, |p| p.avg_eve_distance),
        p_s: distinguishability.as_ref().map_or(f64::NAN, |d| d.p_s),
        p_s_primed: distinguishability.as_ref().map_or(f64::NAN, |d| d.p_s_primed),
        decoder_fidelity: decoder.as_ref().map_or(f64::NAN, |d| d.fidelity),
        projected_overlap: projection.overlap,
        hn_bound: distinguishability.as_ref().map_or(f64::NAN, |d| d.hn_bound),
        entropy_b,
        entropy_e,
    };
    let bound = error_bound_check(&metrics)?;
    Ok(TrialReport {
        metrics,
        bound,
        quantum_error: qe,
        projection,
        privacy,
        distinguishability,
        decoder,
        entropy_duality_gap: duality,
        purity_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{sample_lloyd, sample_usd, CodeSource};
    use crate::linalg::{basis_vector, fidelity, max_abs, partial_trace};
    use crate::testutil::{random_channel, random_pure, rng};
    use crate::typicality::{build_protocol_states, measured_epsilon};

    fn budget() -> Budget {
        Budget::default()
    }

    fn flat_states(ch: &KrausChannel, n: usize, delta: f64) -> ProtocolStates {
        build_protocol_states(&DensityOperator::maximally_mixed(ch.d_in()), ch, n, delta, &budget()).unwrap()
    }

    fn lloyd(ps: &ProtocolStates, n: usize, seed: u64) -> Code {
        sample_lloyd(&CodeSource::from_protocol(ps).unwrap(), n, seed, 0).unwrap()
    }

    #[test]
    fn orthonormal_code_is_maximally_entangled() {
        let code = Code::orthonormal(2, 2).unwrap();
        let psi = encode_state(&code).unwrap();
        let s = 0.5f64.sqrt();
        let expect = [s, 0.0, 0.0, s];
        for (z, e) in psi.vec.iter().zip(expect) {
            assert!((z.re - e).abs() < 1e-15 && z.im == 0.0);
        }
    }

    #[test]
    fn encoding_reduction_and_normalization() {
        let src = CodeSource::from_density(&DensityOperator::diagonal(&[0.6, 0.3, 0.1]).unwrap()).unwrap();
        let code = sample_lloyd(&src, 3, 4, 0).unwrap();
        let psi = encode_state(&code).unwrap();
        let red = psi.reduce(&[1]).unwrap();
        let mut expect = CMatrix::zeros(3, 3);
        for w in &code.codewords {
            expect += (w * w.adjoint()).unscale(3.0);
        }
        assert!(max_abs(&(red - expect)) < 1e-14);
        let usd = sample_usd(&src, 5, 4, 0).unwrap();
        assert!((encode_state(&usd).unwrap().norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_channel_joint_state_has_trivial_environment() {
        let code = Code::orthonormal(4, 3).unwrap();
        let js = joint_state(&code, &KrausChannel::identity(4)).unwrap();
        assert_eq!(js.dims, [3, 4, 1]);
        let psi = encode_state(&code).unwrap();
        for (a, b) in js.vec.iter().zip(psi.vec.iter()) {
            assert_eq!(a, b);
        }
        assert!((js.norm_sq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn joint_reduction_matches_channel_on_marker_path() {
        let ch = KrausChannel::dephasing(0.3).unwrap();
        let mut r = rng(3);
        let code = Code::explicit((0..3).map(|_| random_pure(&mut r, 2)).collect()).unwrap();
        let js = joint_state(&code, &ch).unwrap();
        let psi = encode_state(&code).unwrap();
        // (I ⊗ Λ)(ψψ†) via Kraus operators I ⊗ A_k
        let mut expect = CMatrix::zeros(6, 6);
        for a in ch.ops() {
            let big = tensor(&identity(3), a);
            expect += &big * psi.density() * big.adjoint();
        }
        assert!(max_abs(&(js.reduce_ab() - &expect)) < 1e-9);
        let dense = partial_trace(&js.as_pure_state().density(), &[3, 2, 2], &[0, 2]).unwrap();
        assert!(max_abs(&(dense - js.reduce_ae())) < 1e-12);
    }

    #[test]
    fn compression_preserves_local_quantities() {
        let mut r = rng(4);
        let ch = random_channel(&mut r, 3, 2, 5);
        let code = Code::explicit((0..2).map(|_| random_pure(&mut r, 3)).collect()).unwrap();
        let js = joint_state(&code, &ch).unwrap();
        let c = js.compress_environment();
        assert!(c.d_e() <= 4);
        let a = quantum_error(&js).unwrap();
        let b = quantum_error(&c).unwrap();
        assert!((a.q_e - b.q_e).abs() < 1e-10);
        assert!((a.q_e_variant - b.q_e_variant).abs() < 1e-10);
        assert!(max_abs(&(js.reduce_ab() - c.reduce_ab())) < 1e-12);
    }

    #[test]
    fn projection_trivial_cases() {
        let code = Code::orthonormal(2, 2).unwrap();
        let js = joint_state(&code, &KrausChannel::identity(2)).unwrap();
        let p = project_joint(&js, &identity(2), &identity(1)).unwrap();
        assert!((p.overlap - 1.0).abs() < 1e-15);
        assert!(p.gap < 1e-7);
        let ps = flat_states(&KrausChannel::identity(2), 3, 0.1);
        let code = lloyd(&ps, 2, 1);
        let rep = run_trial(&ps, &code, TrialOptions::default(), &budget()).unwrap();
        assert!((rep.projection.overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_dephasing_against_measured_epsilon() {
        let ch = KrausChannel::dephasing(0.1).unwrap();
        let ps = build_protocol_states(&DensityOperator::diagonal(&[0.5, 0.5]).unwrap(), &ch, 4, 0.3, &budget()).unwrap();
        let eps = measured_epsilon(&ps);
        let full = joint_state(&lloyd(&ps, 2, 5), &ps.channel_n).unwrap();
        let p = project_joint(&full, &ps.typ_b.projector, &environment_projector(&ps)).unwrap();
        assert!(p.overlap >= 1.0 - eps - 1e-12, "overlap {} eps {}", p.overlap, eps);
        let (applicable, holds) = p.lemma_check(eps);
        assert!(applicable && holds);
    }

    #[test]
    fn identity_outputs() {
        let code = Code::orthonormal(3, 2).unwrap();
        let ens = output_ensembles(&code, &KrausChannel::identity(3)).unwrap();
        for (i, s) in ens.bob.states().iter().enumerate() {
            assert!(max_abs(&(s.mat() - crate::linalg::dyad(&basis_vector(3, i)))) < 1e-15);
        }
        for s in ens.eve.states() {
            assert_eq!(s.dim(), 1);
            assert!((s.mat()[(0, 0)].re - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_channel_exact_case() {
        let code = Code::orthonormal(4, 4).unwrap();
        let js = joint_state(&code, &KrausChannel::identity(4)).unwrap();
        let qe = quantum_error(&js).unwrap();
        assert!(qe.q_e < 1e-12 && qe.q_e_variant < 1e-12);
        let dec = decoder(&js, true, &budget()).unwrap();
        assert!((dec.fidelity - 1.0).abs() < 1e-10);
        let u = dec.unitary.unwrap();
        assert!(crate::linalg::op_norm(&(u.adjoint() * &u - identity(u.nrows()))) < 1e-9);
    }

    #[test]
    fn decoder_meets_fidelity_bound_and_matches_uhlmann() {
        let mut r = rng(12);
        for trial in 0..6 {
            let ch = random_channel(&mut r, 3, 3, 2 + trial % 3);
            let code = Code::explicit((0..2).map(|_| random_pure(&mut r, 3)).collect()).unwrap();
            let js = joint_state(&code, &ch).unwrap().compress_environment();
            let qe = quantum_error(&js).unwrap();
            let dec = decoder(&js, true, &budget()).unwrap();
            assert!(dec.fidelity >= 1.0 - qe.q_e / 2.0 - 1e-8);
            assert!(dec.fidelity >= dec.uhlmann_overlap - 1e-10);
            let tau = identity(2).unscale(2.0);
            let f = fidelity(&js.reduce_ae(), &tensor(&tau, &js.reduce_e())).unwrap();
            assert!((f - dec.uhlmann_overlap).abs() < 1e-8, "{f} vs {}", dec.uhlmann_overlap);
            let t = &dec.isometry;
            assert!(crate::linalg::op_norm(&(t.adjoint() * t - identity(3))) < 1e-9);
            let u = dec.unitary.unwrap();
            assert!(crate::linalg::op_norm(&(u.adjoint() * &u - identity(u.nrows()))) < 1e-9);
            for b in 0..3 {
                assert!((u.column(b * dec.ancilla_dim) - t.column(b)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn decoder_reports_shortfall() {
        let code = Code::orthonormal(3, 3).unwrap();
        let ch = KrausChannel::new(vec![CMatrix::from_fn(2, 3, |i, j| if i == j { C64::new(1.0, 0.0) } else { ZERO }), CMatrix::from_fn(2, 3, |i, j| if i == 0 && j == 2 { C64::new(1.0, 0.0) } else { ZERO })]).unwrap();
        let js = joint_state(&code, &ch).unwrap();
        assert!(matches!(decoder(&js, false, &budget()), Err(Error::DimensionShortfall { have: 2, need: 3 })));
    }

    #[test]
    fn quantum_error_paths_agree_on_dephasing() {
        let ch = KrausChannel::dephasing(0.2).unwrap();
        let ps = flat_states(&ch, 3, 0.7);
        let code = lloyd(&ps, 2, 7);
        let js = joint_state(&code, &ps.channel_n).unwrap();
        let qe = quantum_error(&js).unwrap();
        assert!((qe.q_e - qe.q_e_svd).abs() < 1e-9);
        let rep = run_trial(&ps, &code, TrialOptions::default(), &budget()).unwrap();
        assert!(rep.bound.holds && rep.bound.identity_holds);
        assert!(rep.violations().is_empty(), "{:?}", rep.violations());
    }

    #[test]
    fn product_state_variants_agree() {
        // σ_A = τ_A when codewords are orthonormal, so both variants coincide
        let code = Code::orthonormal(2, 2).unwrap();
        let mut r = rng(2);
        let ch = random_channel(&mut r, 2, 2, 3);
        let js = joint_state(&code, &ch).unwrap();
        let qe = quantum_error(&js).unwrap();
        assert!((qe.q_e - qe.q_e_variant).abs() < 1e-12);
    }

    #[test]
    fn single_kraus_and_identical_codewords_leak_nothing() {
        let ps = flat_states(&KrausChannel::identity(2), 2, 0.2);
        let p = privacy_metrics(&lloyd(&ps, 3, 2), &ps).unwrap();
        assert!(p.avg_eve_distance < 1e-12 && p.chi_e.abs() < 1e-12);

        let ch = KrausChannel::depolarizing(0.4).unwrap();
        let ps = flat_states(&ch, 2, 0.7);
        let mut r = rng(5);
        let w = random_pure(&mut r, 4);
        let code = Code::explicit(vec![w.clone(), w.clone(), w]).unwrap();
        let p = privacy_metrics(&code, &ps).unwrap();
        assert!(p.chi_e.abs() < 1e-10 && p.avg_eve_distance < 1e-10);
        assert!(p.primed_eve_sq_distance <= p.hs_route_bound + 1e-9);
    }

    #[test]
    fn sqrt_povm_commuting_and_single_cases() {
        let p0 = crate::linalg::dyad(&basis_vector(3, 0));
        let p12 = crate::linalg::diag_real(&[0.0, 0.5, 0.25]);
        let povm = sqrt_povm(&[p0.clone(), p12], &identity(3)).unwrap();
        assert!(max_abs(&(&povm.elements[0] - &p0)) < 1e-12);
        assert!(max_abs(&(&povm.elements[1] - crate::linalg::diag_real(&[0.0, 1.0, 1.0]))) < 1e-12);
        assert!(povm.report().unwrap().holds());

        let mut r = rng(8);
        let v = random_pure(&mut r, 3);
        let sigma = crate::linalg::dyad(&v).scale(0.7);
        let pi_b = crate::linalg::diag_real(&[1.0, 1.0, 0.0]);
        let povm = sqrt_povm(std::slice::from_ref(&sigma), &pi_b).unwrap();
        let lam = &povm.lambdas[0];
        let proj = support_projector(lam, SUPPORT_TOL).unwrap();
        assert!(max_abs(&(&povm.elements[0] - proj)) < 1e-10);

        let zero = sqrt_povm(&[CMatrix::zeros(2, 2)], &identity(2)).unwrap();
        assert!(zero.diagnostic.is_some());
        assert!(max_abs(&(zero.completion - identity(2))) == 0.0);
    }

    #[test]
    fn identity_channel_distinguishability() {
        let ps = flat_states(&KrausChannel::identity(2), 2, 0.2);
        let code = Code::orthonormal(4, 4).unwrap();
        let d = distinguishability_metrics(&code, &ps).unwrap();
        assert!((d.p_s - 1.0).abs() < 1e-12);
        assert!((d.chi_b - 2.0).abs() < 1e-10);
    }

    #[test]
    fn fully_depolarizing_outputs_are_useless() {
        let ch = KrausChannel::depolarizing(1.0).unwrap();
        let ps = flat_states(&ch, 1, 0.5);
        let code = Code::orthonormal(2, 2).unwrap();
        let d = distinguishability_metrics(&code, &ps).unwrap();
        assert!(d.chi_b.abs() < 1e-12);
        assert!((d.p_s - 0.5).abs() < 1e-12);
        let rep = run_trial(&ps, &code, TrialOptions::default(), &budget()).unwrap();
        assert!(rep.bound.holds && rep.bound.rhs > 1.0);
    }

    #[test]
    fn hayashi_nagaoka_over_lloyd_seeds() {
        let ch = KrausChannel::dephasing(0.1).unwrap();
        let ps = flat_states(&ch, 4, 0.3);
        for seed in 0..20 {
            let d = distinguishability_metrics(&lloyd(&ps, 2, seed), &ps).unwrap();
            assert!(d.hn_applicable());
            assert!(d.hn_holds(), "seed {seed}: {} vs {}", 1.0 - d.p_s_primed, d.hn_bound);
            assert!(d.sigsig_holds());
            assert!(d.povm.holds());
        }
    }

    #[test]
    fn random_instance_invariants() {
        let mut r = rng(21);
        for (i, ch) in [KrausChannel::amplitude_damping(0.2).unwrap(), KrausChannel::depolarizing(0.2).unwrap(), random_channel(&mut r, 2, 2, 3)].into_iter().enumerate() {
            let ps = flat_states(&ch, 3, 0.7);
            for kind in 0..2 {
                let src = CodeSource::from_protocol(&ps).unwrap();
                let code = if kind == 0 { sample_lloyd(&src, 3, i as u64, 0) } else { sample_usd(&src, 3, i as u64, 0) }.unwrap();
                let rep = run_trial(&ps, &code, TrialOptions::default(), &budget()).unwrap();
                assert!(rep.violations().is_empty(), "{:?}", rep.violations());
                let p = rep.privacy.as_ref().unwrap();
                assert!((p.chi_e - rep.metrics.chi_e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn error_bound_rejects_inconsistent_inputs() {
        let m = CodeMetrics {
            q_e: 0.0,
            q_e_variant: 0.0,
            chi_b: 3.0,
            chi_e: 0.0,
            n_codewords: 2,
            log2_n: 1.0,
            avg_eve_distance: 0.0,
            p_s: 1.0,
            p_s_primed: 1.0,
            decoder_fidelity: 1.0,
            projected_overlap: 1.0,
            hn_bound: 0.0,
            entropy_b: 3.0,
            entropy_e: 0.0,
        };
        assert!(error_bound_check(&m).is_err());
        let ok = CodeMetrics { chi_b: 1.0, entropy_b: 1.0, ..m };
        let rep = error_bound_check(&ok).unwrap();
        assert!(rep.holds && rep.slack == rep.rhs);
    }
}
