//! The `fedbcd` command line: `train`, `sweep`, `audit` and `gen-data`.
//!
//! Exit codes: 0 success, 1 audit failure, 2 configuration or input error,
//! 3 numerical divergence.

mod config;

pub use config::{AuditSection, Config, ConfigSource, DataConfig, DataSource, OutputConfig, SweepConfig};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::algorithms::{train, AlgoKind, RunStatus, TrainInputs};
use crate::error::{Error, Result};
use crate::harness::{gen_synthetic, run_sweep, write_csv_vertical, write_metrics_csv, SweepSpec};
use crate::model::ModelBlock;
use crate::security_audit::{run_shadow_audit, AuditConfig, AuditControl};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Name of the environment variable that replaces `training.seed`.
pub const SEED_ENV: &str = "FEDBCD_SEED";

#[derive(Debug, Parser)]
#[command(name = "fedbcd", version, about = "Vertical federated training by block coordinate descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train once and write the manifest, per-round metrics and final parameters.
    Train(CommonArgs),
    /// Rounds-to-target for every (algorithm, Q) cell.
    Sweep(SweepArgs),
    /// Shadow-training audit of one party's exchanged messages.
    Audit(AuditArgs),
    /// Write the configured synthetic dataset as per-party CSV files.
    GenData(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config, or a run manifest to repeat.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for every output file.
    #[arg(long, default_value = "fedbcd-out")]
    pub out: PathBuf,
    /// Override one config key, e.g. `--set training.eta0=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads for the parallel local phase.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated Q values.
    #[arg(long)]
    pub q: Option<String>,
    /// Comma-separated algorithms (fedsgd, fedbcd_p, fedbcd_s, fedpbcd_p).
    #[arg(long)]
    pub algos: Option<String>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub party: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Replace the witnesses by a shear; the audit is expected to fail.
    #[arg(long)]
    pub negative_control: bool,
}

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: Option<String>,
    pub config: Config,
}

impl RunManifest {
    fn start(command: &str, config: &Config, dataset_fingerprint: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.training.seed,
            dataset_fingerprint,
            started_at: now(),
            finished_at: None,
            status: None,
            config: config.clone(),
        }
    }

    fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join("manifest.json"), self)
    }

    fn finish(mut self, out: &Path, status: &str) -> Result<()> {
        self.finished_at = Some(now());
        self.status = Some(status.to_string());
        self.write(out)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn source(args: &CommonArgs) -> ConfigSource {
    ConfigSource {
        path: args.config.clone(),
        overrides: args.set.clone(),
        seed: std::env::var(SEED_ENV).ok(),
        threads: args.threads,
    }
}

fn prepare(args: &CommonArgs) -> Result<Config> {
    let cfg = source(args).resolve()?;
    fs::create_dir_all(&args.out)?;
    Ok(cfg)
}

/// Parses `args` (program name first), runs the command and returns its
/// exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Audit(a) => cmd_audit(a),
        Command::GenData(a) => cmd_gen_data(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalDivergence { .. } => EXIT_DIVERGED,
                _ => EXIT_CONFIG,
            }
        }
    }
}

#[derive(Serialize)]
struct Params<'a> {
    status: RunStatus,
    blocks: &'a [ModelBlock],
}

pub fn cmd_train(args: &CommonArgs) -> Result<i32> {
    let cfg = prepare(args)?;
    let (train_set, eval, fingerprint) = cfg.data.load_split(cfg.training.parties)?;
    let manifest = RunManifest::start("train", &cfg, fingerprint);
    manifest.write(&args.out)?;
    let mut inputs = TrainInputs::new(&train_set);
    if let Some(e) = &eval {
        inputs = inputs.with_eval(e);
    }
    let outcome = train(&cfg.training, inputs, &mut ())?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let file = fs::File::create(args.out.join("metrics.csv"))?;
    write_metrics_csv(std::io::BufWriter::new(file), &outcome.rounds, cfg.output.wallclock)?;
    write_json(
        &args.out.join("params.json"),
        &Params {
            status: outcome.status,
            blocks: &outcome.blocks,
        },
    )?;
    let last = outcome.last();
    match outcome.status {
        RunStatus::Diverged { round } => {
            eprintln!("diverged at sync round {round}; metrics up to round {} kept", round - 1);
            manifest.finish(&args.out, "diverged")?;
            Ok(EXIT_DIVERGED)
        }
        _ => {
            println!(
                "{} rounds, loss {:.6}, eval {}",
                last.sync_round,
                last.full_loss,
                last.eval_metric.map_or("-".into(), |m| format!("{m:.4}"))
            );
            manifest.finish(&args.out, "completed")?;
            Ok(EXIT_OK)
        }
    }
}

fn parse_list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config(format!("--{what} list is empty")));
    }
    items.into_iter().map(parse).collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let mut cfg = prepare(&args.common)?;
    if let Some(q) = &args.q {
        cfg.sweep.q_values = parse_list(q, "q", |s| {
            s.parse().map_err(|_| Error::Config(format!("--q: `{s}` is not a count")))
        })?;
    }
    if let Some(a) = &args.algos {
        cfg.sweep.algos = parse_list(a, "algos", AlgoKind::parse)?;
    }
    let spec = SweepSpec {
        q_values: cfg.sweep.q_values.clone(),
        algos: cfg.sweep.algos.clone(),
        target_metric: cfg.sweep.target_metric,
        target_value: cfg.sweep.target_value,
        max_rounds: cfg.sweep.max_rounds,
    };
    spec.validate()?;
    let (train_set, eval, fingerprint) = cfg.data.load_split(cfg.training.parties)?;
    let manifest = RunManifest::start("sweep", &cfg, fingerprint);
    manifest.write(&args.common.out)?;
    let mut inputs = TrainInputs::new(&train_set);
    if let Some(e) = &eval {
        inputs = inputs.with_eval(e);
    }
    let table = run_sweep(&spec, &cfg.training, inputs)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    fs::write(args.common.out.join("sweep.csv"), table.to_csv())?;
    fs::write(args.common.out.join("sweep.txt"), table.to_text())?;
    print!("{}", table.to_text());
    manifest.finish(&args.common.out, "completed")?;
    Ok(EXIT_OK)
}

pub fn cmd_audit(args: &AuditArgs) -> Result<i32> {
    let mut cfg = prepare(&args.common)?;
    if let Some(p) = args.party {
        cfg.audit.party = p;
    }
    if let Some(t) = args.trials {
        cfg.audit.trials = t;
    }
    if args.negative_control {
        cfg.audit.control = AuditControl::Shear;
    }
    let (train_set, _, fingerprint) = cfg.data.load_split(cfg.training.parties)?;
    let k = cfg.audit.party;
    if let Some(&d_k) = train_set.dims().get(k) {
        if d_k < 2 {
            return Err(Error::Config(format!(
                "party {k} holds {d_k} feature column; the audit requires d_k >= 2 \
                 (with one column every orthogonal map fixing θ⁰ is the identity)"
            )));
        }
    }
    let manifest = RunManifest::start("audit", &cfg, fingerprint);
    manifest.write(&args.common.out)?;
    let audit = AuditConfig {
        target_party: k,
        trials: cfg.audit.trials,
        rounds: cfg.audit.rounds,
        local_iters: cfg.audit.local_iters.unwrap_or(cfg.training.local_iters),
        tol_abs: cfg.audit.tol_abs,
        tol_rel: cfg.audit.tol_rel,
        control: cfg.audit.control,
        base: cfg.training.clone(),
    };
    let report = run_shadow_audit(&audit, &train_set)?;
    write_json(&args.common.out.join("audit.json"), &report)?;
    let passed = report.trials.iter().filter(|t| t.passed).count();
    println!(
        "party {k}: {passed}/{} trials passed, max message deviation {:.3e}, max parameter deviation {:.3e}",
        report.trials.len(),
        report.max_message_deviation(),
        report.max_theta_deviation()
    );
    if let Some(r) = report.trials.iter().find_map(|t| t.first_failure_round) {
        println!("first failure at sync round {r}");
    }
    manifest.finish(&args.common.out, if report.passed { "passed" } else { "failed" })?;
    Ok(if report.passed { EXIT_OK } else { EXIT_AUDIT_FAILED })
}

pub fn cmd_gen_data(args: &CommonArgs) -> Result<i32> {
    let cfg = prepare(args)?;
    if cfg.data.source != DataSource::Synthetic {
        return Err(Error::Config("gen-data needs data.source = \"synthetic\"".into()));
    }
    let synthetic = gen_synthetic(&cfg.data.synthetic_spec())?;
    let full = cfg.data.load(cfg.training.parties)?;
    let (paths, labels) = write_csv_vertical(&full, &args.out)?;
    write_json(&args.out.join("w_star.json"), &synthetic.w_star)?;
    let manifest = RunManifest::start("gen-data", &cfg, full.fingerprint());
    manifest.finish(&args.out, "completed")?;
    for p in paths.iter().chain(std::iter::once(&labels)) {
        println!("{}", p.display());
    }
    Ok(EXIT_OK)
}
