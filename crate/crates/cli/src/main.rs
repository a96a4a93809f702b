use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qcodelab::codes::{self, EnsembleKind};
use qcodelab::experiment::{self, ExperimentConfig, Format, RunOptions};
use qcodelab::inequalities;
use qcodelab::Error;
use serde_json::json;

const PASS: u8 = 0;
const VIOLATION: u8 = 1;
const CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "qcodelab", version, about = "Random quantum code experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Lloyd,
    Usd,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment configuration and write the result table.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Record per-trial wall time (otherwise 0, keeping output reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Random-instance sweeps of every inequality predicate.
    CheckInequalities {
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        /// Inclusive range `a..b`, a single dimension or a comma list.
        #[arg(long, default_value = "2..8", value_parser = parse_dims)]
        dims: Dims,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for violation dumps.
        #[arg(long, default_value = ".")]
        dump_dir: PathBuf,
    },
    /// Monte Carlo check of the ensemble moment formulas.
    Moments {
        #[arg(long, value_enum)]
        ensemble: EnsembleArg,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        pairs: u32,
    },
    /// Re-evaluate a violation dump.
    Replay { dump: PathBuf },
}

#[derive(Clone, Debug)]
struct Dims(Vec<usize>);

fn parse_dims(s: &str) -> Result<Dims, String> {
    let bad = || format!("invalid dimension list `{s}`");
    let dims: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if dims.is_empty() || dims.iter().any(|&d| d < 2) {
        return Err(format!("dimensions must be at least 2: `{s}`"));
    }
    Ok(Dims(dims))
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), Error> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn report_error(e: &Error) -> u8 {
    eprintln!("error: {e}");
    CONFIG_ERROR
}

fn run(config: &Path, out: &Path, format: FormatArg, timing: bool) -> Result<u8, Error> {
    let cfg = ExperimentConfig::load(config)?;
    let opts = RunOptions { timing, keep_going: false };
    match experiment::run_with(&cfg, opts) {
        Ok(rows) => {
            let format = match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            };
            experiment::emit(&rows, format, out)?;
            println!("{} rows written to {} (config {})", rows.len(), out.display(), cfg.hash());
            Ok(PASS)
        }
        Err(Error::CheckFailed { message, dump }) => {
            let path = out.with_extension("violation.json");
            write_json(&path, &dump)?;
            eprintln!("violation: {message}");
            eprintln!("instance written to {}", path.display());
            Ok(VIOLATION)
        }
        Err(e) => Err(e),
    }
}

fn check_inequalities(draws: usize, dims: &[usize], seed: u64, dump_dir: &Path) -> Result<u8, Error> {
    let reports = inequalities::sweep_all(dims, draws, seed)?;
    let mut code = PASS;
    for r in &reports {
        let ok = r.passed();
        println!(
            "{:<22} draws {:>6}  min margin {:+.3e}  witness margin {:.3e}  violations {}  {}",
            r.predicate.name(),
            r.draws(),
            r.min_margin(),
            r.witness_margin,
            r.violations.len(),
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            code = VIOLATION;
        }
        for (k, v) in r.violations.iter().enumerate() {
            fs::create_dir_all(dump_dir)?;
            let path = dump_dir.join(format!("violation-{}-d{}-{k}.json", r.predicate.name(), v.d));
            write_json(&path, &json!({"kind": "inequality", "violation": v.to_json()}))?;
            eprintln!("instance written to {}", path.display());
        }
    }
    Ok(code)
}

fn moments(ensemble: EnsembleArg, samples: usize, seed: u64, pairs: u32) -> Result<u8, Error> {
    let kind = match ensemble {
        EnsembleArg::Lloyd => EnsembleKind::Lloyd,
        EnsembleArg::Usd => EnsembleKind::UniformSourceDistorted,
    };
    let entries = codes::moment_sweep(kind, pairs, samples, seed)?;
    let mut code = PASS;
    for e in &entries {
        let ok = e.within(5.0);
        println!(
            "pair {:>3}  d {}  first max z {:.2}  second max z {:.2}  {}",
            e.pair,
            e.dim,
            e.check.first.max_z,
            e.check.second.max_z,
            if ok { "ok" } else { "OUTSIDE 5σ" }
        );
        if !ok {
            code = VIOLATION;
        }
    }
    println!(
        "{} of {} instances within 5 standard errors ({} samples each)",
        entries.iter().filter(|e| e.within(5.0)).count(),
        entries.len(),
        samples
    );
    Ok(code)
}

fn replay(path: &Path) -> Result<u8, Error> {
    let dump: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let outcome = experiment::replay(&dump)?;
    if outcome.violations.is_empty() {
        println!("{}: instance passes on re-evaluation", outcome.kind);
        return Ok(PASS);
    }
    for v in &outcome.violations {
        println!("{}: {v}", outcome.kind);
    }
    Ok(VIOLATION)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            format,
            timing,
        } => run(config, out, *format, *timing),
        Command::CheckInequalities {
            draws,
            dims,
            seed,
            dump_dir,
        } => check_inequalities(*draws, &dims.0, *seed, dump_dir),
        Command::Moments {
            ensemble,
            samples,
            seed,
            pairs,
        } => moments(*ensemble, *samples, *seed, *pairs),
        Command::Replay { dump } => replay(dump),
    };
    ExitCode::from(result.unwrap_or_else(|e| report_error(&e)))
}
