//! n-fold extensions, eigenvalue-window typical subspaces and the projected
//! ("primed") source, output and environment states built from them.

use crate::error::{Error, Result};
use crate::linalg::{self, hs_inner, tensor_all, trace_of_product, CMatrix, CVector, ZERO};
use crate::quantum::{entropy, entropy_of_spectrum, DensityOperator, KrausChannel};

/// Size limits checked before any n-fold object is allocated.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    /// Cap on `d_in^n · K^n`, the size of a joint input/environment index set.
    pub joint_entries: u128,
    /// Cap on `K^n · d_out^n · d_in^n`, the storage of an extended Kraus list.
    pub kraus_entries: u128,
    /// Cap on entries of any dense square matrix.
    pub matrix_entries: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            joint_entries: 1 << 20,
            kraus_entries: 1 << 24,
            matrix_entries: 1 << 22,
        }
    }
}

impl Budget {
    fn check(what: &str, needed: u128, cap: u128) -> Result<()> {
        if needed > cap {
            return Err(Error::BudgetExceeded {
                what: what.to_string(),
                needed,
                cap,
            });
        }
        Ok(())
    }

    pub fn check_matrix(&self, what: &str, dim: u128) -> Result<()> {
        Self::check(what, dim.saturating_mul(dim), self.matrix_entries)
    }
}

fn pow(base: usize, n: usize) -> u128 {
    (base as u128).saturating_pow(n as u32)
}

/// All n-fold tensor products of the Kraus operators, in lexicographic order
/// with the first copy as the most significant index.
pub fn extend_channel(ch: &KrausChannel, n: usize, budget: &Budget) -> Result<KrausChannel> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let k = ch.d_env();
    let kn = pow(k, n);
    Budget::check(
        "extended Kraus list",
        kn.saturating_mul(pow(ch.d_out(), n)).saturating_mul(pow(ch.d_in(), n)),
        budget.kraus_entries,
    )?;
    Budget::check("joint input/environment space", pow(ch.d_in(), n).saturating_mul(kn), budget.joint_entries)?;
    let mut ops: Vec<CMatrix> = ch.ops().to_vec();
    for _ in 1..n {
        let mut next = Vec::with_capacity(ops.len() * k);
        for a in &ops {
            for b in ch.ops() {
                next.push(linalg::tensor(a, b));
            }
        }
        ops = next;
    }
    KrausChannel::new(ops)
}

/// Rotates the Kraus operators, `A'_k = Σ_j conj(W_jk) A_j`, so that the
/// environment state of `rho` becomes diagonal. Returns the channel unchanged
/// when the environment state is already diagonal.
pub fn canonical_kraus(ch: &KrausChannel, rho: &DensityOperator) -> Result<KrausChannel> {
    let env = ch.environment_output(rho)?;
    let scale = env.trace().abs().max(f64::MIN_POSITIVE);
    if env.is_diagonal(1e-14 * scale) {
        return Ok(ch.clone());
    }
    let w = env.spectrum().eigenvectors;
    let k = ch.d_env();
    let ops = (0..k)
        .map(|col| {
            let mut acc = CMatrix::zeros(ch.d_out(), ch.d_in());
            for (j, a) in ch.ops().iter().enumerate() {
                let coef = w[(j, col)].conj();
                if coef != ZERO {
                    acc += a * coef;
                }
            }
            acc
        })
        .collect();
    KrausChannel::new(ops)
}

/// Typical subspace of `ρ^{⊗n}` and the projected state `Π ρ^{⊗n} Π`.
#[derive(Clone, Debug)]
pub struct TypicalDecomposition {
    pub n: usize,
    pub delta: f64,
    /// Single-copy entropy `S` in bits.
    pub entropy_rate: f64,
    /// Product eigenvalues of `ρ^{⊗n}` in lexicographic order of the
    /// single-copy eigen-indices (single-copy spectrum sorted descending).
    pub product_eigenvalues: Vec<f64>,
    /// Indices into `product_eigenvalues` that fall inside the window.
    pub retained_indices: Vec<usize>,
    pub retained_eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors spanning the typical subspace, as columns.
    pub basis: CMatrix,
    pub projector: CMatrix,
    /// `Π ρ^{⊗n} Π`, unnormalized.
    pub hatted_state: DensityOperator,
    /// For exactly diagonal inputs: computational-basis index of each basis column.
    pub computational_indices: Option<Vec<usize>>,
    pub diagnostic: Option<String>,
}

impl TypicalDecomposition {
    pub fn rank(&self) -> usize {
        self.retained_indices.len()
    }

    pub fn trace(&self) -> f64 {
        self.retained_eigenvalues.iter().sum()
    }

    /// Window `[2^{−n(S+δ)}, 2^{−n(S−δ)}]`.
    pub fn window(&self) -> (f64, f64) {
        window(self.entropy_rate, self.n, self.delta)
    }
}

fn window(s: f64, n: usize, delta: f64) -> (f64, f64) {
    let nf = n as f64;
    (2f64.powf(-nf * (s + delta)), 2f64.powf(-nf * (s - delta)))
}

/// Eigenvalue-window typical projector of `ρ^{⊗n}`, enumerating the full
/// product spectrum. An empty window yields a rank-0 decomposition with a
/// diagnostic.
pub fn typical_projector(rho: &DensityOperator, n: usize, delta: f64, budget: &Budget) -> Result<TypicalDecomposition> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    let d = rho.dim();
    let total = pow(d, n);
    budget.check_matrix("n-fold typical projector", total)?;
    let total = total as usize;

    let diagonal_input = rho.is_diagonal(0.0);
    let spec = rho.spectrum();
    let single: Vec<f64> = spec.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let s = entropy_of_spectrum(&single);
    let (lo, hi) = window(s, n, delta);

    let mut product = vec![1.0f64; total];
    for (flat, value) in product.iter_mut().enumerate() {
        let mut rem = flat;
        let mut acc = 1.0;
        for _ in 0..n {
            acc *= single[rem % d];
            rem /= d;
        }
        *value = acc;
    }
    let retained: Vec<usize> = (0..total).filter(|&i| product[i] >= lo && product[i] <= hi).collect();
    let retained_eigenvalues: Vec<f64> = retained.iter().map(|&i| product[i]).collect();

    let digits = |flat: usize| -> Vec<usize> {
        let mut out = vec![0; n];
        let mut rem = flat;
        for slot in out.iter_mut().rev() {
            *slot = rem % d;
            rem /= d;
        }
        out
    };

    let mut basis = CMatrix::zeros(total, retained.len());
    let mut comp = Vec::new();
    if diagonal_input {
        // eigenvectors are computational basis vectors; locate each one
        let perm: Vec<usize> = (0..d)
            .map(|j| (0..d).find(|&i| spec.eigenvectors[(i, j)] != ZERO).unwrap_or(j))
            .collect();
        for (col, &flat) in retained.iter().enumerate() {
            let idx = digits(flat).iter().fold(0usize, |acc, &j| acc * d + perm[j]);
            basis[(idx, col)] = linalg::ONE;
            comp.push(idx);
        }
    } else {
        let vecs: Vec<CMatrix> = (0..d).map(|j| spec.eigenvectors.columns(j, 1).into_owned()).collect();
        for (col, &flat) in retained.iter().enumerate() {
            let v = tensor_all(digits(flat).iter().map(|&j| &vecs[j]));
            basis.set_column(col, &v.column(0));
        }
    }
    let projector = &basis * basis.adjoint();
    let mut scaled = basis.clone();
    for (j, &l) in retained_eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l);
    }
    let hatted = DensityOperator::from_psd_unchecked(&scaled * basis.adjoint());
    let diagnostic = retained.is_empty().then(|| {
        format!("typical window [{lo:e}, {hi:e}] contains no eigenvalue of the {n}-fold state (S = {s:.6}, delta = {delta})")
    });
    Ok(TypicalDecomposition {
        n,
        delta,
        entropy_rate: s,
        product_eigenvalues: product,
        retained_indices: retained,
        retained_eigenvalues,
        basis,
        projector,
        hatted_state: hatted,
        computational_indices: diagonal_input.then_some(comp),
        diagnostic,
    })
}

/// Block-diagonal input/output matrix `Σ_i |i⟩⟨i| ⊗ M_i`.
#[derive(Clone, Debug)]
pub struct IoMatrix {
    /// Basis vectors `|i⟩` of the typical source subspace (columns).
    pub source_basis: CMatrix,
    /// Output blocks `M_i = q_i Σ_k F_k |i⟩⟨i| F_k†`, one per column.
    pub blocks: Vec<CMatrix>,
}

impl IoMatrix {
    pub fn purity(&self) -> f64 {
        self.blocks.iter().map(|m| hs_inner(m, m).re).sum()
    }

    /// `Tr_B`: `Σ_i Tr(M_i) |i⟩⟨i|`.
    pub fn reduce_input(&self) -> CMatrix {
        let d = self.source_basis.nrows();
        let mut out = CMatrix::zeros(d, d);
        for (j, m) in self.blocks.iter().enumerate() {
            let v = self.source_basis.column(j);
            out += v * v.adjoint() * linalg::trace(m);
        }
        out
    }

    /// `Tr_A`: `Σ_i M_i`.
    pub fn reduce_output(&self) -> CMatrix {
        let d = self.blocks.first().map_or(0, |m| m.nrows());
        self.blocks.iter().fold(CMatrix::zeros(d, d), |acc, m| acc + m)
    }

    /// Dense `d_A × d_B` operator (input factor first).
    pub fn to_dense(&self) -> CMatrix {
        let mut out = CMatrix::zeros(0, 0);
        for (j, m) in self.blocks.iter().enumerate() {
            let v = self.source_basis.column(j).into_owned();
            let term = linalg::tensor(&(&v * v.adjoint()), m);
            if out.nrows() == 0 {
                out = term;
            } else {
                out += term;
            }
        }
        out
    }
}

/// Source, channel and projected states for block length `n`.
#[derive(Clone, Debug)]
pub struct ProtocolStates {
    pub n: usize,
    pub delta: f64,
    pub source: DensityOperator,
    /// Single-copy channel rotated so that the environment state is diagonal.
    pub channel: KrausChannel,
    /// n-fold extension of `channel`.
    pub channel_n: KrausChannel,
    pub typ_a: TypicalDecomposition,
    pub typ_b: TypicalDecomposition,
    pub typ_e: TypicalDecomposition,
    /// Environment (Kraus) indices of the typical environment subspace.
    pub env_indices: Vec<usize>,
    /// `Tr ρ̂_A^typ`.
    pub hat_a_trace: f64,
    /// `ρ̂_A^typ / Tr ρ̂_A^typ`.
    pub rho_a_typ: DensityOperator,
    /// Eigenvalues `q_i` of `ρ_A^typ`, aligned with `typ_a.basis` columns.
    pub source_eigenvalues: Vec<f64>,
    /// `F_k = Π_B A_k` for each `k` in `env_indices`.
    pub f_ops: Vec<CMatrix>,
    pub rho_prime_a: DensityOperator,
    pub rho_prime_b: DensityOperator,
    /// Environment state on the typical index set (`env_indices` order).
    pub rho_prime_e: DensityOperator,
    pub rho_io: IoMatrix,
    pub diagnostics: Vec<String>,
}

impl ProtocolStates {
    pub fn d_a(&self) -> usize {
        self.typ_a.basis.nrows()
    }

    pub fn d_b(&self) -> usize {
        self.channel_n.d_out()
    }

    pub fn k_n(&self) -> usize {
        self.channel_n.d_env()
    }

    pub fn entropy_a(&self) -> f64 {
        self.typ_a.entropy_rate
    }

    pub fn entropy_b(&self) -> f64 {
        self.typ_b.entropy_rate
    }

    pub fn entropy_e(&self) -> f64 {
        self.typ_e.entropy_rate
    }

    /// Diagonal 0/1 mask of the environment projector on the Kraus index set.
    pub fn env_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.k_n()];
        for &k in &self.env_indices {
            mask[k] = true;
        }
        mask
    }

    /// Columns `F_k |v⟩` for `k` in `env_indices`.
    pub fn projected_columns(&self, v: &CVector) -> CMatrix {
        let cols: Vec<CVector> = self.f_ops.iter().map(|f| f * v).collect();
        if cols.is_empty() {
            return CMatrix::zeros(self.d_b(), 0);
        }
        CMatrix::from_columns(&cols)
    }

    /// Traces of `ρ'_A`, `ρ'_B`, `ρ'_E`.
    pub fn primed_traces(&self) -> [f64; 3] {
        [self.rho_prime_a.trace(), self.rho_prime_b.trace(), self.rho_prime_e.trace()]
    }
}

/// Builds every projected state for source `ρ`, channel `Λ`, block length
/// `n` and window `δ`. The channel is first rotated to its canonical form
/// with respect to `ρ`.
pub fn build_protocol_states(source: &DensityOperator, ch: &KrausChannel, n: usize, delta: f64, budget: &Budget) -> Result<ProtocolStates> {
    let canonical = canonical_kraus(ch, source)?;
    let channel_n = extend_channel(&canonical, n, budget)?;
    budget.check_matrix("n-fold output space", pow(canonical.d_out(), n))?;

    let rho_b1 = canonical.apply(source)?;
    let env1 = canonical.environment_output(source)?;
    let env_diag: Vec<f64> = (0..env1.dim()).map(|i| env1.mat()[(i, i)].re.max(0.0)).collect();

    let typ_a = typical_projector(source, n, delta, budget)?;
    let typ_b = typical_projector(&rho_b1, n, delta, budget)?;
    let typ_e = typical_projector(&DensityOperator::diagonal(&env_diag)?, n, delta, budget)?;
    let mut diagnostics: Vec<String> = Vec::new();
    for (name, t) in [("A", &typ_a), ("B", &typ_b), ("E", &typ_e)] {
        if let Some(msg) = &t.diagnostic {
            diagnostics.push(format!("{name}: {msg}"));
        }
    }
    if typ_a.rank() == 0 {
        return Err(Error::EmptyTypicalSet("A"));
    }
    let mut env_indices = typ_e.computational_indices.clone().expect("diagonal input");
    env_indices.sort_unstable();

    let hat_a_trace = typ_a.trace();
    let q: Vec<f64> = typ_a.retained_eigenvalues.iter().map(|p| p / hat_a_trace).collect();
    let rho_a_typ = DensityOperator::from_psd_unchecked(typ_a.hatted_state.mat().unscale(hat_a_trace));

    let pi_b = &typ_b.projector;
    let f_ops: Vec<CMatrix> = env_indices.iter().map(|&k| pi_b * &channel_n.ops()[k]).collect();

    let d_a = typ_a.basis.nrows();
    let d_b = channel_n.d_out();
    let r_e = env_indices.len();
    let mut rho_b = CMatrix::zeros(d_b, d_b);
    let mut rho_e = CMatrix::zeros(r_e, r_e);
    let mut rho_a = CMatrix::zeros(d_a, d_a);
    let mut blocks = Vec::with_capacity(q.len());
    for (i, &qi) in q.iter().enumerate() {
        let v = typ_a.basis.column(i).into_owned();
        let g = if f_ops.is_empty() {
            CMatrix::zeros(d_b, 0)
        } else {
            CMatrix::from_columns(&f_ops.iter().map(|f| f * &v).collect::<Vec<_>>())
        };
        let block = (&g * g.adjoint()).scale(qi);
        rho_e += (g.transpose() * g.map(|z| z.conj())).scale(qi);
        rho_a += (&v * v.adjoint()).scale(qi * g.norm_squared());
        rho_b += &block;
        blocks.push(block);
    }

    Ok(ProtocolStates {
        n,
        delta,
        source: source.clone(),
        channel: canonical,
        channel_n,
        typ_a: typ_a.clone(),
        typ_b,
        typ_e,
        env_indices,
        hat_a_trace,
        rho_a_typ,
        source_eigenvalues: q,
        f_ops,
        rho_prime_a: DensityOperator::from_psd_unchecked(rho_a),
        rho_prime_b: DensityOperator::from_psd_unchecked(rho_b),
        rho_prime_e: DensityOperator::from_psd_unchecked(rho_e),
        rho_io: IoMatrix {
            source_basis: typ_a.basis,
            blocks,
        },
        diagnostics,
    })
}

/// A measured value against a bound, `value ≤ bound` unless `lower` is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub value: f64,
    pub bound: f64,
    pub lower: bool,
    pub holds: bool,
}

impl BoundCheck {
    pub const TOL: f64 = 1e-9;

    pub fn upper(value: f64, bound: f64) -> Self {
        Self {
            value,
            bound,
            lower: false,
            holds: value <= bound + Self::TOL,
        }
    }

    pub fn lower(value: f64, bound: f64) -> Self {
        Self {
            value,
            bound,
            lower: true,
            holds: value >= bound - Self::TOL,
        }
    }
}

/// Bounds on one primed state.
#[derive(Clone, Debug)]
pub struct PrimedStateReport {
    pub system: &'static str,
    /// `Tr ρ'_X ≥ 1 − ε`.
    pub trace: BoundCheck,
    /// `λ_max(ρ'_X) ≤ (1+ε) 2^{−n(S_X−δ)}`.
    pub max_eigenvalue: BoundCheck,
    /// `rk ρ'_X ≤ 2^{n(S_X+δ)}`.
    pub rank: BoundCheck,
    /// `Tr ρ'_X² ≤ (1+ε) 2^{−n(S_X−δ)}`.
    pub purity: BoundCheck,
}

impl PrimedStateReport {
    pub fn all_hold(&self) -> bool {
        self.trace.holds && self.max_eigenvalue.holds && self.rank.holds && self.purity.holds
    }
}

#[derive(Clone, Debug)]
pub struct PurityIdentity {
    pub kraus_sum: f64,
    pub matrix: f64,
    pub holds: bool,
}

impl PurityIdentity {
    fn new(kraus_sum: f64, matrix: f64) -> Self {
        Self {
            kraus_sum,
            matrix,
            holds: (kraus_sum - matrix).abs() <= 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrimedStatesReport {
    pub epsilon: f64,
    pub delta: f64,
    pub systems: Vec<PrimedStateReport>,
    pub purity_identity_b: PurityIdentity,
    pub purity_identity_e: PurityIdentity,
    /// `Tr ρ_io² ≤ min(Tr ρ'_A², Tr ρ'_B²)`.
    pub io_purity: BoundCheck,
    /// Largest entry deviation of the two reductions of `ρ_io` from `ρ'_A`, `ρ'_B`.
    pub io_reduction_error: f64,
}

impl PrimedStatesReport {
    pub fn bounds_hold(&self) -> bool {
        self.systems.iter().all(PrimedStateReport::all_hold)
    }

    pub fn identities_hold(&self) -> bool {
        self.purity_identity_b.holds && self.purity_identity_e.holds && self.io_purity.holds && self.io_reduction_error <= 1e-9
    }
}

/// Smallest `ε` consistent with the finite-n construction:
/// `max(0, 1 − min_X Tr ρ'_X, (Tr ρ̂_A^typ)^{−2} − 1)`.
pub fn measured_epsilon(ps: &ProtocolStates) -> f64 {
    let min_trace = ps.primed_traces().into_iter().fold(f64::INFINITY, f64::min);
    let t = ps.hat_a_trace;
    0f64.max(1.0 - min_trace).max(1.0 / (t * t) - 1.0)
}

/// Evaluates the trace, eigenvalue, rank and purity bounds on `ρ'_A`,
/// `ρ'_B`, `ρ'_E`, both Kraus-sum purity identities and the purity bound on
/// the input/output matrix.
pub fn verify_prop_rhonx(ps: &ProtocolStates, epsilon: f64, delta: f64) -> PrimedStatesReport {
    let nf = ps.n as f64;
    let rank_tol = linalg::SUPPORT_TOL;
    let mut systems = Vec::with_capacity(3);
    let mut purities = [0.0f64; 3];
    let entries = [
        ("A", &ps.rho_prime_a, ps.entropy_a()),
        ("B", &ps.rho_prime_b, ps.entropy_b()),
        ("E", &ps.rho_prime_e, ps.entropy_e()),
    ];
    for (slot, (name, rho, s)) in entries.into_iter().enumerate() {
        let spec = rho.spectrum();
        let vals: Vec<f64> = spec.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let purity: f64 = vals.iter().map(|v| v * v).sum();
        purities[slot] = purity;
        let top = 2f64.powf(-nf * (s - delta));
        systems.push(PrimedStateReport {
            system: name,
            trace: BoundCheck::lower(rho.trace(), 1.0 - epsilon),
            max_eigenvalue: BoundCheck::upper(vals.first().copied().unwrap_or(0.0), (1.0 + epsilon) * top),
            rank: BoundCheck::upper(spec.rank(rank_tol) as f64, 2f64.powf(nf * (s + delta))),
            purity: BoundCheck::upper(purity, (1.0 + epsilon) * top),
        });
    }

    let rho = ps.rho_a_typ.mat();
    let fr: Vec<CMatrix> = ps.f_ops.iter().map(|f| f * rho).collect();
    let m: Vec<CMatrix> = fr.iter().zip(&ps.f_ops).map(|(x, f)| x * f.adjoint()).collect();
    let mut sum_b = 0.0;
    let mut sum_e = 0.0;
    for k in 0..ps.f_ops.len() {
        for kp in 0..ps.f_ops.len() {
            sum_b += trace_of_product(&m[k], &m[kp]).re;
            let a = hs_inner(&ps.f_ops[kp], &fr[k]);
            let b = hs_inner(&ps.f_ops[k], &fr[kp]);
            sum_e += (a * b).re;
        }
    }

    let io = ps.rho_io.purity();
    let red_a = ps.rho_io.reduce_input();
    let red_b = ps.rho_io.reduce_output();
    let io_reduction_error = linalg::max_abs(&(red_a - ps.rho_prime_a.mat())).max(linalg::max_abs(&(red_b - ps.rho_prime_b.mat())));

    PrimedStatesReport {
        epsilon,
        delta,
        systems,
        purity_identity_b: PurityIdentity::new(sum_b, purities[1]),
        purity_identity_e: PurityIdentity::new(sum_e, purities[2]),
        io_purity: BoundCheck::upper(io, purities[0].min(purities[1])),
        io_reduction_error,
    }
}

/// Lemma-level checks on the hatted states: `Tr ρ̂_X ≥ 1 − ε` and the
/// operator inequality `ρ̃_X ≤ ρ̂_X^typ` for `X = B`.
#[derive(Clone, Debug)]
pub struct HattedReport {
    pub traces: [f64; 3],
    /// Minimum eigenvalue of `ρ̂_B^typ − Tr(ρ̂_A) ρ'_B`.
    pub b_domination_min_eigenvalue: f64,
}

pub fn hatted_report(ps: &ProtocolStates) -> Result<HattedReport> {
    let diff = ps.typ_b.hatted_state.mat() - ps.rho_prime_b.mat().scale(ps.hat_a_trace);
    let min = linalg::eig_h(&diff)?.min_eigenvalue();
    Ok(HattedReport {
        traces: [ps.typ_a.trace(), ps.typ_b.trace(), ps.typ_e.trace()],
        b_domination_min_eigenvalue: min,
    })
}

#[derive(Clone, Debug)]
pub struct PackingReport {
    /// (i) per-codeword support ranks against `2^{n(S_E+δ)}`.
    pub support_ranks: Vec<BoundCheck>,
    /// (ii) `λ_max(Π_B ρ'_B Π_B) ≤ (1+ε) 2^{−n(S_B−δ)}`.
    pub average_max_eigenvalue: BoundCheck,
    /// (iii) `Tr(σ'^α_B Π_B) ≥ 1 − ε` per codeword.
    pub captured_weight: Vec<BoundCheck>,
}

impl PackingReport {
    pub fn all_hold(&self) -> bool {
        self.support_ranks.iter().all(|c| c.holds) && self.average_max_eigenvalue.holds && self.captured_weight.iter().all(|c| c.holds)
    }
}

/// Hypotheses of the one-shot packing lemma on projected Bob outputs.
pub fn verify_packing_hypotheses(ps: &ProtocolStates, code_outputs: &[DensityOperator], delta: f64, epsilon: f64) -> Result<PackingReport> {
    let nf = ps.n as f64;
    let pi_b = &ps.typ_b.projector;
    let rank_bound = 2f64.powf(nf * (ps.entropy_e() + delta));
    let mut support_ranks = Vec::with_capacity(code_outputs.len());
    let mut captured = Vec::with_capacity(code_outputs.len());
    for sigma in code_outputs {
        if sigma.dim() != pi_b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "code output has dimension {}, typical projector {}",
                sigma.dim(),
                pi_b.nrows()
            )));
        }
        support_ranks.push(BoundCheck::upper(sigma.spectrum().rank(linalg::SUPPORT_TOL) as f64, rank_bound));
        captured.push(BoundCheck::lower(trace_of_product(sigma.mat(), pi_b).re, 1.0 - epsilon));
    }
    let avg = pi_b * ps.rho_prime_b.mat() * pi_b;
    let top = linalg::eig_h(&avg)?.max_eigenvalue();
    Ok(PackingReport {
        support_ranks,
        average_max_eigenvalue: BoundCheck::upper(top, (1.0 + epsilon) * 2f64.powf(-nf * (ps.entropy_b() - delta))),
        captured_weight: captured,
    })
}

/// Single-copy entropies of source, output and environment.
pub fn single_copy_entropies(source: &DensityOperator, ch: &KrausChannel) -> Result<(f64, f64, f64)> {
    Ok((
        entropy(source),
        entropy(&ch.apply(source)?),
        entropy(&ch.environment_output(source)?),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::validate_channel;
    use crate::testutil::{random_channel, random_density, rng};

    fn budget() -> Budget {
        Budget::default()
    }

    #[test]
    fn extend_identity_and_dephasing() {
        let ext = extend_channel(&KrausChannel::identity(2), 3, &budget()).unwrap();
        assert_eq!(ext.d_env(), 1);
        assert_eq!(ext.ops()[0], linalg::identity(8));

        let deph = KrausChannel::dephasing(0.3).unwrap();
        let ext = extend_channel(&deph, 2, &budget()).unwrap();
        assert_eq!(ext.d_env(), 4);
        assert!(validate_channel(&ext).passed);
        let want = linalg::tensor(&deph.ops()[0], &deph.ops()[1]);
        assert_eq!(ext.ops()[1], want);
    }

    #[test]
    fn extended_channel_factorizes_on_products() {
        let deph = KrausChannel::dephasing(0.2).unwrap();
        let ext = extend_channel(&deph, 3, &budget()).unwrap();
        let mut r = rng(1);
        let rho = random_density(&mut r, 2);
        let rho3 = linalg::tensor_power(rho.mat(), 3);
        let out = ext.apply_matrix(&rho3).unwrap();
        let single = deph.apply(&rho).unwrap();
        let want = linalg::tensor_power(single.mat(), 3);
        assert!((out - want).norm() < 1e-13);
    }

    #[test]
    fn budget_guard() {
        let tiny = Budget {
            joint_entries: 1 << 10,
            kraus_entries: 1 << 12,
            matrix_entries: 1 << 12,
        };
        let dep = KrausChannel::depolarizing(0.1).unwrap();
        assert!(matches!(extend_channel(&dep, 4, &tiny), Err(Error::BudgetExceeded { .. })));
        let rho = DensityOperator::maximally_mixed(2);
        assert!(matches!(typical_projector(&rho, 7, 0.1, &tiny), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn canonical_kraus_examples() {
        let deph = KrausChannel::dephasing(0.3).unwrap();
        // |0⟩ has off-diagonal environment √0.21
        let zero = DensityOperator::basis_state(2, 0);
        let can = canonical_kraus(&deph, &zero).unwrap();
        assert!(can.environment_output(&zero).unwrap().is_diagonal(1e-9));

        // the maximally mixed state already has a diagonal environment
        let mm = DensityOperator::maximally_mixed(2);
        let same = canonical_kraus(&deph, &mm).unwrap();
        for (a, b) in same.ops().iter().zip(deph.ops()) {
            assert_eq!(a, b);
        }

        let mut r = rng(2);
        let ch = random_channel(&mut r, 3, 2, 3);
        let rho = random_density(&mut r, 3);
        let can = canonical_kraus(&ch, &rho).unwrap();
        assert!(can.environment_output(&rho).unwrap().is_diagonal(1e-9));
        for _ in 0..20 {
            let s = random_density(&mut r, 3);
            let a = ch.apply(&s).unwrap();
            let b = can.apply(&s).unwrap();
            assert!((a.mat() - b.mat()).norm() < 1e-10);
        }
        // action on a basis of input operators
        for i in 0..3 {
            for j in 0..3 {
                let mut e = CMatrix::zeros(3, 3);
                e[(i, j)] = linalg::ONE;
                let a = ch.apply_matrix(&e).unwrap();
                let b = can.apply_matrix(&e).unwrap();
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn typical_pure_and_flat() {
        let pure = DensityOperator::basis_state(2, 0);
        for n in 1..5 {
            let t = typical_projector(&pure, n, 0.1, &budget()).unwrap();
            assert_eq!(t.rank(), 1);
            assert!((t.trace() - 1.0).abs() < 1e-15);
        }
        let mm = DensityOperator::maximally_mixed(2);
        let t = typical_projector(&mm, 4, 0.05, &budget()).unwrap();
        assert_eq!(t.rank(), 16);
        assert!((&t.projector - linalg::identity(16)).norm() < 1e-15);
    }

    #[test]
    fn typical_binary_source_oracle() {
        let rho = DensityOperator::diagonal(&[0.9, 0.1]).unwrap();
        let t = typical_projector(&rho, 10, 0.2, &budget()).unwrap();
        // oracle: enumerate all 2^10 strings by Hamming weight
        let s = -(0.9f64 * 0.9f64.log2() + 0.1 * 0.1f64.log2());
        let (lo, hi) = (2f64.powf(-10.0 * (s + 0.2)), 2f64.powf(-10.0 * (s - 0.2)));
        let mut rank = 0;
        let mut tr = 0.0;
        for x in 0u32..1024 {
            let w = x.count_ones() as i32;
            let l = 0.9f64.powi(10 - w) * 0.1f64.powi(w);
            if l >= lo && l <= hi {
                rank += 1;
                tr += l;
            }
        }
        assert_eq!(rank, 10);
        assert_eq!(t.rank(), rank);
        assert!((t.trace() - tr).abs() < 1e-12);
        assert!((t.trace() - 10.0 * 0.9f64.powi(9) * 0.1).abs() < 1e-12);
        assert!((t.trace() - 0.38742).abs() < 1e-5);
    }

    #[test]
    fn typical_projector_structure() {
        let mut r = rng(3);
        let rho = random_density(&mut r, 2);
        let t = typical_projector(&rho, 4, 0.3, &budget()).unwrap();
        let p = &t.projector;
        assert!((p * p - p).norm() < 1e-10);
        let full = linalg::tensor_power(rho.mat(), 4);
        assert!((p * &full - &full * p).norm() < 1e-9);
        let hatted = p * &full * p;
        assert!((hatted - t.hatted_state.mat()).norm() < 1e-10);
        let (lo, hi) = t.window();
        assert!(t.retained_eigenvalues.iter().all(|&l| l >= lo && l <= hi));
        assert!((t.rank() as f64) <= 2f64.powf(4.0 * (t.entropy_rate + 0.3)));
    }

    #[test]
    fn empty_window_is_reported() {
        let rho = DensityOperator::diagonal(&[0.9, 0.1]).unwrap();
        let t = typical_projector(&rho, 1, 0.05, &budget()).unwrap();
        assert_eq!(t.rank(), 0);
        assert!(t.diagnostic.is_some());
        assert_eq!(t.trace(), 0.0);
    }

    #[test]
    fn protocol_states_identity_channel() {
        let ps = build_protocol_states(&DensityOperator::maximally_mixed(2), &KrausChannel::identity(2), 3, 0.25, &budget()).unwrap();
        let flat = linalg::identity(8).unscale(8.0);
        assert!((ps.rho_prime_b.mat() - &flat).norm() < 1e-14);
        assert!((ps.rho_a_typ.mat() - &flat).norm() < 1e-14);
        assert_eq!(ps.rho_prime_e.dim(), 1);
        assert!((ps.rho_prime_e.mat()[(0, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn protocol_states_dephasing_invariants() {
        let deph = KrausChannel::dephasing(0.1).unwrap();
        let src = DensityOperator::maximally_mixed(2);
        let ps = build_protocol_states(&src, &deph, 3, 0.7, &budget()).unwrap();
        let eps = measured_epsilon(&ps);
        assert!(ps.rho_prime_b.trace() >= 1.0 - eps - 1e-12);
        // un-projected comparison: Tr ρ'_B ≤ Tr Λ^{⊗n}(ρ_A^typ) = 1
        assert!(ps.rho_prime_b.trace() <= 1.0 + 1e-12);

        // ρ'_B and ρ'_E from the Kraus definitions
        let rho = ps.rho_a_typ.mat();
        let mut b = CMatrix::zeros(8, 8);
        for f in &ps.f_ops {
            b += f * rho * f.adjoint();
        }
        assert!((b - ps.rho_prime_b.mat()).norm() < 1e-10);
        for (x, fx) in ps.f_ops.iter().enumerate() {
            for (y, fy) in ps.f_ops.iter().enumerate() {
                let want = linalg::trace(&(fx * rho * fy.adjoint()));
                assert!((want - ps.rho_prime_e.mat()[(x, y)]).norm() < 1e-10);
            }
        }
        let io = ps.rho_io.to_dense();
        let ra = partial_trace_io(&io, 8, 8, true);
        let rb = partial_trace_io(&io, 8, 8, false);
        assert!((ra - ps.rho_prime_a.mat()).norm() < 1e-9);
        assert!((rb - ps.rho_prime_b.mat()).norm() < 1e-9);
        assert!(ps.primed_traces().iter().all(|&t| t <= 1.0 + 1e-9));
    }

    fn partial_trace_io(m: &CMatrix, da: usize, db: usize, keep_a: bool) -> CMatrix {
        linalg::partial_trace(m, &[da, db], &[if keep_a { 0 } else { 1 }]).unwrap()
    }

    #[test]
    fn prop_rhonx_bounds_on_dephasing() {
        let deph = KrausChannel::dephasing(0.2).unwrap();
        let ps = build_protocol_states(&DensityOperator::maximally_mixed(2), &deph, 4, 0.3, &budget()).unwrap();
        let eps = measured_epsilon(&ps);
        let rep = verify_prop_rhonx(&ps, eps, 0.3);
        assert!(rep.bounds_hold(), "{rep:#?}");
        assert!(rep.identities_hold(), "{rep:#?}");
    }

    #[test]
    fn prop_rhonx_pure_source_identity_channel() {
        let ps = build_protocol_states(&DensityOperator::basis_state(2, 0), &KrausChannel::identity(2), 3, 0.2, &budget()).unwrap();
        let rep = verify_prop_rhonx(&ps, measured_epsilon(&ps), 0.2);
        for sys in &rep.systems {
            assert!((sys.trace.value - 1.0).abs() < 1e-14);
            assert!((sys.max_eigenvalue.value - 1.0).abs() < 1e-14);
            assert_eq!(sys.rank.value, 1.0);
            assert!((sys.purity.value - 1.0).abs() < 1e-14);
        }
        assert!(rep.bounds_hold() && rep.identities_hold());
    }

    #[test]
    fn purity_identities_on_random_channels() {
        let mut r = rng(4);
        for _ in 0..10 {
            let ch = random_channel(&mut r, 2, 2, 3);
            let src = random_density(&mut r, 2);
            let ps = build_protocol_states(&src, &ch, 2, 1.0, &budget()).unwrap();
            let rep = verify_prop_rhonx(&ps, measured_epsilon(&ps), 1.0);
            assert!(rep.identities_hold(), "{rep:#?}");
            assert!(rep.bounds_hold(), "{rep:#?}");
            let h = hatted_report(&ps).unwrap();
            assert!(h.b_domination_min_eigenvalue >= -1e-9);
        }
    }

    #[test]
    fn hatted_trace_trend_for_dephasing_environment() {
        let deph = KrausChannel::dephasing(0.1).unwrap();
        let src = DensityOperator::maximally_mixed(2);
        let mut prev = -1.0;
        for n in 2..=6 {
            let ps = build_protocol_states(&src, &deph, n, 0.25, &budget()).unwrap();
            let t = ps.typ_e.trace();
            assert!(t >= prev - 1e-12, "n = {n}: {t} < {prev}");
            prev = t;
        }
    }

    #[test]
    fn packing_hypotheses_identity_orthonormal() {
        let ps = build_protocol_states(&DensityOperator::maximally_mixed(2), &KrausChannel::identity(2), 2, 0.25, &budget()).unwrap();
        let outs: Vec<_> = (0..2).map(|i| DensityOperator::basis_state(4, i)).collect();
        let rep = verify_packing_hypotheses(&ps, &outs, 0.25, measured_epsilon(&ps)).unwrap();
        assert!(rep.support_ranks.iter().all(|c| c.value == 1.0));
        assert!(rep.all_hold());
    }

    #[test]
    fn packing_hypotheses_fully_depolarizing_reported() {
        let dep = KrausChannel::depolarizing(1.0).unwrap();
        let ps = build_protocol_states(&DensityOperator::maximally_mixed(2), &dep, 2, 0.5, &budget()).unwrap();
        let outs = vec![ps.rho_prime_b.clone()];
        let rep = verify_packing_hypotheses(&ps, &outs, 0.5, measured_epsilon(&ps)).unwrap();
        // output is I/4 on the full typical space
        assert!((rep.average_max_eigenvalue.value - 0.25 * ps.rho_prime_b.trace()).abs() < 1e-9);
    }
}
