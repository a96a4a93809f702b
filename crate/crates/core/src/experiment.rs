//! Experiment driver: configuration, named channels, seeded trial
//! orchestration and persistence of result tables.
//!
//! A configuration is a single JSON document. Every trial is keyed by
//! `(seed, trial, n)`; its code is drawn from [`crate::rng::stream`] with that
//! seed and trial number, so a configuration fully determines every numeric
//! column of the output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::codes::{self, Code, CodeSource, EnsembleKind};
use crate::error::{Error, Result};
use crate::linalg::{self, MatrixRows};
use crate::protocol::{self, TrialOptions, TrialReport};
use crate::quantum::{validate_channel, DensityOperator, KrausChannel};
use crate::typicality::{self, Budget, PrimedStatesReport, ProtocolStates};

/// CSV header, in column order.
pub const COLUMNS: [&str; 19] = [
    "config_hash",
    "seed",
    "trial",
    "n",
    "delta",
    "N",
    "q_e",
    "q_e_variant",
    "chi_B",
    "chi_E",
    "avg_eve_distance",
    "p_s",
    "p_s_primed",
    "decoder_fidelity",
    "projected_overlap",
    "hn_bound",
    "bound_lhs",
    "bound_rhs",
    "wall_time_ms",
];

const SOURCE_SUM_TOL: f64 = 1e-10;

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Channel by name, with parameters in `[0, 1]`.
///
/// Names: `identity` (optional dimension), `dephasing(p)`, `depolarizing(p)`,
/// `amplitude_damping(γ)` and `erasure(p)` (qubit input, qutrit output with
/// the flag state `|2⟩`).
pub fn named_channel(name: &str, params: &[f64]) -> Result<KrausChannel> {
    let one = |label: &str| -> Result<f64> {
        match params {
            [p] if (0.0..=1.0).contains(p) => Ok(*p),
            [p] => Err(Error::InvalidParameter(format!("{name}: {label} = {p} outside [0, 1]"))),
            _ => Err(Error::InvalidParameter(format!(
                "{name} takes exactly one parameter ({label}), got {}",
                params.len()
            ))),
        }
    };
    match name {
        "identity" => match params {
            [] => Ok(KrausChannel::identity(2)),
            [d] if *d >= 1.0 && d.fract() == 0.0 => Ok(KrausChannel::identity(*d as usize)),
            _ => Err(Error::InvalidParameter("identity takes no parameter or a positive integer dimension".into())),
        },
        "dephasing" => KrausChannel::dephasing(one("p")?),
        "depolarizing" => KrausChannel::depolarizing(one("p")?),
        "amplitude_damping" => KrausChannel::amplitude_damping(one("gamma")?),
        "erasure" => KrausChannel::erasure(one("p")?),
        other => Err(Error::UnknownChannel(other.to_string())),
    }
}

/// Reads a Kraus list stored as a JSON array of matrices, each a nested
/// `[rows][cols]` array of `[re, im]` pairs.
pub fn read_kraus_file(path: &Path) -> Result<KrausChannel> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<MatrixRows> = serde_json::from_str(&text)?;
    let ops = rows.iter().map(linalg::matrix_from_rows).collect::<Result<Vec<_>>>()?;
    KrausChannel::new_validated(ops)
}

pub fn write_kraus_file(ch: &KrausChannel, path: &Path) -> Result<()> {
    let rows: Vec<MatrixRows> = ch.ops().iter().map(linalg::matrix_to_rows).collect();
    fs::write(path, serde_json::to_string(&rows)?)?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_file: Option<PathBuf>,
}

impl ChannelSpec {
    pub fn named(name: &str, params: &[f64]) -> Self {
        Self {
            name: Some(name.to_string()),
            params: params.to_vec(),
            kraus_file: None,
        }
    }

    /// Relative Kraus file paths are resolved against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<KrausChannel> {
        match (&self.name, &self.kraus_file) {
            (Some(name), None) => named_channel(name, &self.params).map_err(|e| config_err("channel", e.to_string())),
            (None, Some(file)) => {
                if !self.params.is_empty() {
                    return Err(config_err("channel.params", "params are not used with kraus_file"));
                }
                let path = match base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                read_kraus_file(&path).map_err(|e| config_err("channel.kraus_file", format!("{}: {e}", path.display())))
            }
            _ => Err(config_err("channel", "give exactly one of `name` or `kraus_file`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Diagonal of the source density matrix in the computational basis.
    pub eigenvalues: Vec<f64>,
}

/// One block length or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockLengths {
    One(usize),
    Many(Vec<usize>),
}

impl BlockLengths {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Self::One(n) => vec![*n],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Privacy,
    Distinguishability,
    Decoder,
    /// Abort on any failed invariant of a trial report.
    Bounds,
    /// Abort when the typical-state bounds or purity identities fail.
    Typicality,
}

fn all_checks() -> Vec<Check> {
    vec![
        Check::Privacy,
        Check::Distinguishability,
        Check::Decoder,
        Check::Bounds,
        Check::Typicality,
    ]
}

fn one() -> u32 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_entries: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_entries: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_entries: Option<u64>,
}

impl BudgetSpec {
    pub fn budget(&self) -> Budget {
        let d = Budget::default();
        Budget {
            joint_entries: self.joint_entries.map_or(d.joint_entries, u128::from),
            kraus_entries: self.kraus_entries.map_or(d.kraus_entries, u128::from),
            matrix_entries: self.matrix_entries.map_or(d.matrix_entries, u128::from),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSpec,
    pub source: SourceSpec,
    pub n: BlockLengths,
    pub delta: f64,
    #[serde(rename = "rate_R", default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_codewords: Option<usize>,
    pub ensemble: EnsembleKind,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub trials_per_seed: u32,
    #[serde(default = "all_checks")]
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSpec>,
    /// Directory used to resolve a relative `kraus_file`; not part of the hash.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates a configuration document. Errors name the
    /// offending field and, for malformed JSON, the line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let field = if path == "." { "document".to_string() } else { path };
            config_err(&field, format!("{inner} (line {}, column {})", inner.line(), inner.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        Self::from_json_str(&v.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err("path", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.rate, self.n_codewords) {
            (Some(_), Some(_)) => return Err(config_err("rate_R", "give either rate_R or N, not both")),
            (None, None) => return Err(config_err("rate_R", "one of rate_R or N is required")),
            (Some(r), None) if !(r.is_finite() && r > 0.0) => return Err(config_err("rate_R", format!("rate must be positive, got {r}"))),
            (None, Some(n)) if n < 2 => return Err(config_err("N", format!("need at least 2 codewords, got {n}"))),
            _ => {}
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(config_err("delta", format!("δ must be positive, got {}", self.delta)));
        }
        let ev = &self.source.eigenvalues;
        if ev.is_empty() {
            return Err(config_err("source.eigenvalues", "empty"));
        }
        if let Some(x) = ev.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(config_err("source.eigenvalues", format!("negative or non-finite entry {x}")));
        }
        let sum: f64 = ev.iter().sum();
        if (sum - 1.0).abs() > SOURCE_SUM_TOL {
            return Err(config_err("source.eigenvalues", format!("sum {sum} differs from 1 by more than {SOURCE_SUM_TOL:e}")));
        }
        let ns = self.n.values();
        if ns.is_empty() || ns.contains(&0) {
            return Err(config_err("n", "block lengths must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "at least one seed is required"));
        }
        if self.trials_per_seed == 0 {
            return Err(config_err("trials_per_seed", "must be positive"));
        }
        if self.ensemble == EnsembleKind::Explicit {
            return Err(config_err("ensemble", "expected lloyd or usd"));
        }
        Ok(())
    }

    pub fn has(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }

    pub fn budget(&self) -> Budget {
        self.budget.map(|b| b.budget()).unwrap_or_default()
    }

    /// `max(2, round(2^{nR}))`, rounding halves away from zero; an explicit
    /// `N` is used as given.
    pub fn codewords_for(&self, n: usize) -> usize {
        match (self.n_codewords, self.rate) {
            (Some(big_n), _) => big_n,
            (None, Some(r)) => {
                let v = (n as f64 * r).exp2().round();
                if v >= usize::MAX as f64 {
                    usize::MAX
                } else {
                    (v as usize).max(2)
                }
            }
            (None, None) => 2,
        }
    }

    /// Canonical text: compact JSON, keys sorted, defaults filled in.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        sort_keys(v).to_string()
    }

    /// First 16 hex digits of SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn channel(&self) -> Result<KrausChannel> {
        let ch = self.channel.build(self.base_dir.as_deref())?;
        let report = validate_channel(&ch);
        if !report.passed {
            return Err(config_err("channel", format!("Kraus completeness deviation {:e}", report.max_deviation)));
        }
        if ch.d_in() != self.source.eigenvalues.len() {
            return Err(config_err(
                "source.eigenvalues",
                format!("{} eigenvalues for a channel with input dimension {}", self.source.eigenvalues.len(), ch.d_in()),
            ));
        }
        Ok(ch)
    }

    pub fn source_density(&self) -> Result<DensityOperator> {
        DensityOperator::diagonal(&self.source.eigenvalues)
    }
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Rejects configurations whose dense objects would exceed the budget,
/// before anything is allocated.
pub fn check_budget(cfg: &ExperimentConfig, ch: &KrausChannel) -> Result<()> {
    let budget = cfg.budget();
    let pow = |b: usize, n: usize| (b as u128).saturating_pow(n as u32);
    for n in cfg.n.values() {
        let (da, db, k) = (pow(ch.d_in(), n), pow(ch.d_out(), n), pow(ch.d_env(), n));
        let big_n = cfg.codewords_for(n) as u128;
        budget.check_matrix("input operator", da)?;
        budget.check_matrix("output operator", db)?;
        budget.check_matrix("environment operator", k)?;
        budget.check_matrix("marker-environment operator", big_n.saturating_mul(k.min(big_n.saturating_mul(db))))?;
        let kraus = k.saturating_mul(db).saturating_mul(da);
        if kraus > budget.kraus_entries {
            return Err(Error::BudgetExceeded {
                what: "extended Kraus list".into(),
                needed: kraus,
                cap: budget.kraus_entries,
            });
        }
        let joint = big_n.saturating_mul(db).saturating_mul(k);
        if joint > budget.joint_entries {
            return Err(Error::BudgetExceeded {
                what: "joint marker-output-environment vector".into(),
                needed: joint,
                cap: budget.joint_entries,
            });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub seed: u64,
    pub trial: u32,
    pub n: usize,
    pub delta: f64,
    #[serde(rename = "N")]
    pub n_codewords: usize,
    pub q_e: f64,
    pub q_e_variant: f64,
    #[serde(rename = "chi_B")]
    pub chi_b: f64,
    #[serde(rename = "chi_E")]
    pub chi_e: f64,
    pub avg_eve_distance: f64,
    pub p_s: f64,
    pub p_s_primed: f64,
    pub decoder_fidelity: f64,
    pub projected_overlap: f64,
    pub hn_bound: f64,
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    pub wall_time_ms: u64,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn float_json(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

impl ResultRow {
    /// Cells in [`COLUMNS`] order.
    pub fn csv_record(&self) -> Vec<String> {
        let floats = self.floats();
        let mut rec = vec![
            self.config_hash.clone(),
            self.seed.to_string(),
            self.trial.to_string(),
            self.n.to_string(),
            fmt_float(self.delta),
            self.n_codewords.to_string(),
        ];
        rec.extend(floats.iter().map(|x| fmt_float(*x)));
        rec.push(self.wall_time_ms.to_string());
        rec
    }

    fn floats(&self) -> [f64; 12] {
        [
            self.q_e,
            self.q_e_variant,
            self.chi_b,
            self.chi_e,
            self.avg_eve_distance,
            self.p_s,
            self.p_s_primed,
            self.decoder_fidelity,
            self.projected_overlap,
            self.hn_bound,
            self.bound_lhs,
            self.bound_rhs,
        ]
    }

    /// JSON object with the CSV columns as keys; NaN becomes `null`.
    pub fn to_json(&self) -> Value {
        let mut map = serde_json::Map::new();
        map.insert("config_hash".into(), json!(self.config_hash));
        map.insert("seed".into(), json!(self.seed));
        map.insert("trial".into(), json!(self.trial));
        map.insert("n".into(), json!(self.n));
        map.insert("delta".into(), float_json(self.delta));
        map.insert("N".into(), json!(self.n_codewords));
        for (name, x) in COLUMNS[6..18].iter().zip(self.floats()) {
            map.insert((*name).into(), float_json(x));
        }
        map.insert("wall_time_ms".into(), json!(self.wall_time_ms));
        Value::Object(map)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let mut v = v.clone();
        let mut nulls = Vec::new();
        if let Value::Object(map) = &mut v {
            for (k, slot) in map.iter_mut() {
                if slot.is_null() {
                    nulls.push(k.clone());
                    *slot = json!(0.0);
                }
            }
        }
        let mut row: ResultRow = serde_json::from_value(v)?;
        for k in &nulls {
            *row.float_slot(k).ok_or_else(|| Error::Inconsistent(format!("column {k} may not be null")))? = f64::NAN;
        }
        Ok(row)
    }

    fn float_slot(&mut self, column: &str) -> Option<&mut f64> {
        Some(match column {
            "delta" => &mut self.delta,
            "q_e" => &mut self.q_e,
            "q_e_variant" => &mut self.q_e_variant,
            "chi_B" => &mut self.chi_b,
            "chi_E" => &mut self.chi_e,
            "avg_eve_distance" => &mut self.avg_eve_distance,
            "p_s" => &mut self.p_s,
            "p_s_primed" => &mut self.p_s_primed,
            "decoder_fidelity" => &mut self.decoder_fidelity,
            "projected_overlap" => &mut self.projected_overlap,
            "hn_bound" => &mut self.hn_bound,
            "bound_lhs" => &mut self.bound_lhs,
            "bound_rhs" => &mut self.bound_rhs,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Record wall-clock time per trial; otherwise the column is 0 so that
    /// output files are reproducible byte for byte.
    pub timing: bool,
    /// Return outcomes with violations instead of aborting on the first one.
    pub keep_going: bool,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub row: ResultRow,
    pub report: TrialReport,
    pub code: Code,
    /// Typical-state checks for this block length, when enabled.
    pub typicality: Option<PrimedStatesReport>,
    pub violations: Vec<String>,
}

struct Block {
    n: usize,
    states: ProtocolStates,
    source: CodeSource,
    typicality: Option<PrimedStatesReport>,
    typicality_violations: Vec<String>,
}

fn typicality_violations(r: &PrimedStatesReport) -> Vec<String> {
    let mut v = Vec::new();
    for s in &r.systems {
        if !s.all_hold() {
            v.push(format!("typical-state bounds fail: {s:?}"));
        }
    }
    if !r.identities_hold() {
        v.push(format!(
            "purity identities fail: B {:?}, E {:?}, io {:?}, reduction error {:e}",
            r.purity_identity_b, r.purity_identity_e, r.io_purity, r.io_reduction_error
        ));
    }
    v
}

fn trial_options(cfg: &ExperimentConfig) -> TrialOptions {
    TrialOptions {
        privacy: cfg.has(Check::Privacy),
        distinguishability: cfg.has(Check::Distinguishability),
        decoder: cfg.has(Check::Decoder),
        build_unitary: false,
    }
}

fn build_block(cfg: &ExperimentConfig, source: &DensityOperator, ch: &KrausChannel, n: usize, budget: &Budget) -> Result<Block> {
    let states = typicality::build_protocol_states(source, ch, n, cfg.delta, budget)?;
    let code_source = CodeSource::from_protocol(&states)?;
    let typicality = cfg
        .has(Check::Typicality)
        .then(|| typicality::verify_prop_rhonx(&states, typicality::measured_epsilon(&states), cfg.delta));
    let typicality_violations = typicality.as_ref().map(typicality_violations).unwrap_or_default();
    Ok(Block {
        n,
        states,
        source: code_source,
        typicality,
        typicality_violations,
    })
}

fn row_from(cfg_hash: &str, seed: u64, trial: u32, delta: f64, report: &TrialReport, wall_time_ms: u64, n: usize) -> ResultRow {
    let m = &report.metrics;
    ResultRow {
        config_hash: cfg_hash.to_string(),
        seed,
        trial,
        n,
        delta,
        n_codewords: m.n_codewords,
        q_e: m.q_e,
        q_e_variant: m.q_e_variant,
        chi_b: m.chi_b,
        chi_e: m.chi_e,
        avg_eve_distance: m.avg_eve_distance,
        p_s: m.p_s,
        p_s_primed: m.p_s_primed,
        decoder_fidelity: m.decoder_fidelity,
        projected_overlap: m.projected_overlap,
        hn_bound: m.hn_bound,
        bound_lhs: report.bound.lhs,
        bound_rhs: report.bound.rhs,
        wall_time_ms,
    }
}

/// Serialized instance of a failed trial, readable by [`replay`].
pub fn trial_dump(cfg: &ExperimentConfig, outcome: &TrialOutcome) -> Value {
    json!({
        "kind": "trial",
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "config_dir": cfg.base_dir.as_ref().map(|p| p.display().to_string()),
        "seed": outcome.row.seed,
        "trial": outcome.row.trial,
        "n": outcome.row.n,
        "violations": outcome.violations,
        "code": outcome.code.to_json(),
    })
}

/// Runs every `(seed, trial, n)` job; rows are ordered by that key.
pub fn run_detailed(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    let ch = cfg.channel()?;
    check_budget(cfg, &ch)?;
    let budget = cfg.budget();
    let source = cfg.source_density()?;
    let hash = cfg.hash();
    let topts = trial_options(cfg);

    let mut ns = cfg.n.values();
    ns.sort_unstable();
    ns.dedup();
    let blocks = ns
        .iter()
        .map(|&n| build_block(cfg, &source, &ch, n, &budget))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for trial in 0..cfg.trials_per_seed {
            for b in 0..blocks.len() {
                jobs.push((seed, trial, b));
            }
        }
    }

    let outcomes = jobs
        .into_par_iter()
        .map(|(seed, trial, b)| -> Result<TrialOutcome> {
            let block = &blocks[b];
            let start = Instant::now();
            let code = codes::sample(cfg.ensemble, &block.source, cfg.codewords_for(block.n), seed, trial)?;
            let report = protocol::run_trial(&block.states, &code, topts, &budget)?;
            let wall = if opts.timing { start.elapsed().as_millis() as u64 } else { 0 };
            let mut violations = block.typicality_violations.clone();
            if cfg.has(Check::Bounds) {
                violations.extend(report.violations());
            }
            Ok(TrialOutcome {
                row: row_from(&hash, seed, trial, cfg.delta, &report, wall, block.n),
                report,
                code,
                typicality: block.typicality.clone(),
                violations,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if !opts.keep_going {
        if let Some(bad) = outcomes.iter().find(|o| !o.violations.is_empty()) {
            return Err(Error::CheckFailed {
                message: format!(
                    "seed {} trial {} n {}: {}",
                    bad.row.seed,
                    bad.row.trial,
                    bad.row.n,
                    bad.violations.join("; ")
                ),
                dump: Box::new(trial_dump(cfg, bad)),
            });
        }
    }
    Ok(outcomes)
}

/// Result rows of a configuration, aborting on any failed check.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_with(cfg, RunOptions::default())
}

pub fn run_with(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<ResultRow>> {
    Ok(run_detailed(cfg, opts)?.into_iter().map(|o| o.row).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.csv_record()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV cells are ASCII"))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Inconsistent(format!("CSV: {other:?}")),
    }
}

pub fn to_json_string(rows: &[ResultRow]) -> String {
    let arr: Vec<Value> = rows.iter().map(ResultRow::to_json).collect();
    serde_json::to_string_pretty(&arr).expect("rows serialize")
}

/// Writes the rows to `path`.
pub fn emit(rows: &[ResultRow], format: Format, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no rows to emit".into()));
    }
    let text = match format {
        Format::Csv => to_csv_string(rows)?,
        Format::Json => to_json_string(rows),
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::Inconsistent(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != COLUMNS.len() {
            return Err(Error::Inconsistent(format!("row with {} columns", rec.len())));
        }
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Inconsistent(format!("column {}: {e}", COLUMNS[i])))
        };
        let u = |i: usize| -> Result<u64> {
            rec[i]
                .parse::<u64>()
                .map_err(|e| Error::Inconsistent(format!("column {}: {e}", COLUMNS[i])))
        };
        rows.push(ResultRow {
            config_hash: rec[0].to_string(),
            seed: u(1)?,
            trial: u(2)? as u32,
            n: u(3)? as usize,
            delta: f(4)?,
            n_codewords: u(5)? as usize,
            q_e: f(6)?,
            q_e_variant: f(7)?,
            chi_b: f(8)?,
            chi_e: f(9)?,
            avg_eve_distance: f(10)?,
            p_s: f(11)?,
            p_s_primed: f(12)?,
            decoder_fidelity: f(13)?,
            projected_overlap: f(14)?,
            hn_bound: f(15)?,
            bound_lhs: f(16)?,
            bound_rhs: f(17)?,
            wall_time_ms: u(18)?,
        });
    }
    Ok(rows)
}

pub fn read_json(path: &Path) -> Result<Vec<ResultRow>> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Inconsistent("result JSON is not an array".into()))?;
    arr.iter().map(ResultRow::from_json).collect()
}

#[derive(Clone, Debug)]
pub struct ReplayOutcome {
    pub kind: String,
    /// Failed checks found on re-evaluation; empty means the instance now passes.
    pub violations: Vec<String>,
}

/// Re-evaluates a dump written by the CLI: a failed trial or a violated
/// inequality instance.
pub fn replay(dump: &Value) -> Result<ReplayOutcome> {
    match dump.get("kind").and_then(Value::as_str) {
        Some("trial") => replay_trial(dump),
        Some("inequality") => {
            let v = crate::inequalities::Violation::from_json(&dump["violation"])?;
            let r = v.replay()?;
            let violations = if r.holds {
                Vec::new()
            } else {
                vec![format!("{}: lhs {:e} > rhs {:e}", v.instance.predicate().name(), r.lhs, r.rhs)]
            };
            Ok(ReplayOutcome {
                kind: "inequality".into(),
                violations,
            })
        }
        _ => Err(config_err("kind", "expected \"trial\" or \"inequality\"")),
    }
}

fn replay_trial(dump: &Value) -> Result<ReplayOutcome> {
    let field = |name: &str| dump.get(name).ok_or_else(|| config_err(name, "missing"));
    let mut cfg = ExperimentConfig::from_value(field("config")?)?;
    cfg.base_dir = dump.get("config_dir").and_then(Value::as_str).map(PathBuf::from);
    let n = field("n")?.as_u64().ok_or_else(|| config_err("n", "not an integer"))? as usize;
    let code = Code::from_json(field("code")?)?;
    let ch = cfg.channel()?;
    let budget = cfg.budget();
    let block = build_block(&cfg, &cfg.source_density()?, &ch, n, &budget)?;
    let report = protocol::run_trial(&block.states, &code, trial_options(&cfg), &budget)?;
    let mut violations = block.typicality_violations;
    if cfg.has(Check::Bounds) {
        violations.extend(report.violations());
    }
    Ok(ReplayOutcome {
        kind: "trial".into(),
        violations,
    })
}
