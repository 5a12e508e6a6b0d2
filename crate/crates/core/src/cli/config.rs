use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algorithms::{AlgoKind, TrainingConfig};
use crate::error::{Error, Result};
use crate::harness::{
    equal_split, gen_synthetic, load_csv_vertical, split_from_widths, split_vertical, SyntheticSpec, SyntheticTask,
    TargetMetric, VerticalDataset,
};
use crate::security_audit::AuditControl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub n: usize,
    pub d: usize,
    pub task: SyntheticTask,
    pub noise: f64,
    pub seed: u64,
    pub feature_scale: f64,
    pub shared_factor: f64,
    /// Per-party feature files, in party order; the last party holds labels.
    pub party_files: Vec<PathBuf>,
    pub label_file: Option<PathBuf>,
    /// Columns per party for synthetic data; an equal split when empty.
    pub widths: Vec<usize>,
    /// Share of samples held out for the evaluation metric; `0` evaluates
    /// on the training set.
    pub eval_fraction: f64,
    pub holdout_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            n: 2000,
            d: 20,
            task: SyntheticTask::LogisticSeparable,
            noise: 0.5,
            seed: 7,
            feature_scale: 1.0,
            shared_factor: 0.0,
            party_files: Vec::new(),
            label_file: None,
            widths: Vec::new(),
            eval_fraction: 0.2,
            holdout_seed: 7,
        }
    }
}

impl DataConfig {
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            feature_scale: self.feature_scale,
            shared_factor: self.shared_factor,
            ..SyntheticSpec::new(self.n, self.d, self.task, self.noise, self.seed)
        }
    }

    /// The full dataset, before any held-out split.
    pub fn load(&self, parties: usize) -> Result<VerticalDataset> {
        match self.source {
            DataSource::Synthetic => {
                let s = gen_synthetic(&self.synthetic_spec())?;
                let split = if self.widths.is_empty() {
                    equal_split(self.d, parties)?
                } else {
                    if self.widths.iter().sum::<usize>() != self.d || self.widths.len() != parties {
                        return Err(Error::Config(format!(
                            "data.widths {:?} must list {parties} column counts summing to d = {}",
                            self.widths, self.d
                        )));
                    }
                    split_from_widths(&self.widths)
                };
                split_vertical(&s.features, &s.labels, &split, parties - 1)
            }
            DataSource::Csv => {
                let labels = self
                    .label_file
                    .as_ref()
                    .ok_or_else(|| Error::Config("data.label_file is required for csv data".into()))?;
                if self.party_files.len() != parties {
                    return Err(Error::Config(format!(
                        "data.party_files lists {} files for {parties} parties",
                        self.party_files.len()
                    )));
                }
                load_csv_vertical(&self.party_files, labels)
            }
        }
    }

    /// `(train, held_out)`, the latter absent when `eval_fraction = 0`.
    pub fn load_split(&self, parties: usize) -> Result<(VerticalDataset, Option<VerticalDataset>, String)> {
        let full = self.load(parties)?;
        let fingerprint = full.fingerprint();
        if self.eval_fraction == 0.0 {
            return Ok((full, None, fingerprint));
        }
        let (train, eval) = full.train_eval_split(self.eval_fraction, self.holdout_seed)?;
        Ok((train, Some(eval), fingerprint))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.party_files.iter_mut().for_each(fix);
        if let Some(p) = self.label_file.as_mut() {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub q_values: Vec<usize>,
    pub algos: Vec<AlgoKind>,
    pub target_metric: TargetMetric,
    pub target_value: f64,
    pub max_rounds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            q_values: vec![1, 5, 10],
            algos: vec![AlgoKind::FedSgd, AlgoKind::FedBcdParallel],
            target_metric: TargetMetric::AucAbove,
            target_value: 0.85,
            max_rounds: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub party: usize,
    pub trials: usize,
    pub rounds: usize,
    /// Defaults to `training.local_iters`.
    pub local_iters: Option<usize>,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub control: AuditControl,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            party: 0,
            trials: 10,
            rounds: 100,
            local_iters: None,
            tol_abs: 1e-9,
            tol_rel: 0.0,
            control: AuditControl::Orthogonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write measured `elapsed_ms`; off keeps metrics files reproducible.
    pub wallclock: bool,
}

/// Everything a command reads, with every default filled in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    pub audit: AuditSection,
    pub output: OutputConfig,
}

/// Parses a `--set` value with TOML syntax, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t
            .remove("v")
            .and_then(|v| serde_json::to_value(v).ok())
            .unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::Config(format!("malformed key `{key}`")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not inside a section")))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config(format!("malformed key `{key}`")))
}

/// Where a config comes from and what to change on top of it.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    /// A TOML config or a JSON run manifest. Defaults apply when absent.
    pub path: Option<PathBuf>,
    /// `key=value` pairs such as `training.eta0=0.05`.
    pub overrides: Vec<String>,
    /// Replaces `training.seed` (from the environment).
    pub seed: Option<String>,
    pub threads: Option<usize>,
}

impl ConfigSource {
    pub fn resolve(&self) -> Result<Config> {
        let (mut value, base_dir) = match &self.path {
            None => (Value::Object(Default::default()), None),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let v = if path.extension().is_some_and(|e| e == "json") {
                    let mut m: Value = serde_json::from_str(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    m.get_mut("config")
                        .map(Value::take)
                        .ok_or_else(|| Error::Config(format!("{}: manifest has no `config`", path.display())))?
                } else {
                    let t: toml::Table =
                        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    serde_json::to_value(t).map_err(|e| Error::Config(e.to_string()))?
                };
                (v, path.parent().map(Path::to_path_buf))
            }
        };
        if let Some(seed) = &self.seed {
            let s: u64 = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("FEDBCD_SEED must be an unsigned integer, got `{seed}`")))?;
            set_path(&mut value, "training.seed", Value::from(s))?;
        }
        if let Some(t) = self.threads {
            set_path(&mut value, "training.threads", Value::from(t))?;
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            set_path(&mut value, k.trim(), parse_value(v.trim()))?;
        }
        let mut cfg: Config = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(dir) = base_dir {
            cfg.data.resolve_paths(&dir);
        }
        cfg.audit.local_iters.get_or_insert(cfg.training.local_iters);
        cfg.training.validate()?;
        Ok(cfg)
    }
}
