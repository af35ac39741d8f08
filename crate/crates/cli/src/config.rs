//! Run configuration: strict TOML with documented defaults.

use std::path::{Path, PathBuf};

use npe_core::experiments::{PicardConfig, SweepMode, SweepSettings};
use npe_core::initial::{GaussianBlobs, RandomSmooth, SingleMode};
use npe_core::{Grid, PhysParams, Preset, StepperConfig, Variant};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "GridConfig::default_n")]
    pub n: usize,
}

impl GridConfig {
    fn default_n() -> usize {
        128
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: Self::default_n() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    pub diffusivity: f64,
    pub epsilon: f64,
    pub kbtk: f64,
    pub nu: f64,
    pub ell: f64,
    /// Inferred from `ell` and `nu` when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            diffusivity: 1.0,
            epsilon: 1.0,
            kbtk: 1.0,
            nu: 0.0,
            ell: 0.0,
            variant: None,
        }
    }
}

impl PhysicsConfig {
    pub fn params(&self) -> PhysParams {
        let variant = self.variant.unwrap_or(if self.ell > 0.0 {
            Variant::Regularized
        } else if self.nu > 0.0 {
            Variant::Npns
        } else {
            Variant::Npe
        });
        PhysParams {
            diffusivity: self.diffusivity,
            epsilon: self.epsilon,
            kbtk: self.kbtk,
            nu: self.nu,
            ell: self.ell,
            variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    #[serde(default = "TimeConfig::default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "TimeConfig::default_cfl")]
    pub cfl_safety: f64,
    /// Defaults to `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(default)]
    pub adaptive: bool,
}

impl TimeConfig {
    fn default_dt() -> f64 {
        1e-3
    }

    fn default_cfl() -> f64 {
        0.5
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            t_end: self.t_end,
            cfl_safety: self.cfl_safety,
            dt_max: self.dt_max.unwrap_or(self.dt),
            adaptive: self.adaptive,
        }
    }
}

/// Initial condition: a named preset or a snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum InitialConfig {
    SingleMode(SingleMode),
    GaussianBlobs(GaussianBlobs),
    RandomSmooth(RandomSmooth),
    Snapshot(SnapshotInitial),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotInitial {
    pub path: PathBuf,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::RandomSmooth(RandomSmooth::default())
    }
}

impl InitialConfig {
    /// `None` for snapshot input.
    pub fn preset(&self) -> Option<Preset> {
        match self {
            InitialConfig::SingleMode(p) => Some(Preset::SingleMode(*p)),
            InitialConfig::GaussianBlobs(p) => Some(Preset::GaussianBlobs(*p)),
            InitialConfig::RandomSmooth(p) => Some(Preset::RandomSmooth(*p)),
            InitialConfig::Snapshot(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub series_path: PathBuf,
    pub series_interval: f64,
    /// Periodic snapshots are written when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
    pub snapshot_dir: PathBuf,
    /// JSON report of `sweep` and `picard`.
    pub report_path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            series_path: "series.csv".into(),
            series_interval: 0.01,
            snapshot_interval: None,
            snapshot_dir: "snapshots".into(),
            report_path: "report.json".into(),
        }
    }
}

fn default_s_list() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 3.0]
}

fn default_record_interval() -> f64 {
    0.01
}

fn default_n_iters() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    InviscidSweep {
        nu_list: Vec<f64>,
        #[serde(default)]
        mode: SweepMode,
        /// Defaults to `[time.t_end]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_times: Option<Vec<f64>>,
        #[serde(default = "default_s_list")]
        s_list: Vec<f64>,
        #[serde(default = "default_record_interval")]
        record_interval: f64,
    },
    MollificationSweep {
        ell_list: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_times: Option<Vec<f64>>,
        #[serde(default = "default_s_list")]
        s_list: Vec<f64>,
        #[serde(default = "default_record_interval")]
        record_interval: f64,
    },
    Picard {
        /// Heuristic horizon when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t0: Option<f64>,
        #[serde(default = "default_n_iters")]
        n_iters: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
    },
}

impl ExperimentConfig {
    pub fn is_sweep(&self) -> bool {
        !matches!(self, ExperimentConfig::Picard { .. })
    }

    /// Settings for either sweep kind; `None` for Picard.
    pub fn sweep_settings(&self, t_end: f64) -> Option<SweepSettings> {
        match self {
            ExperimentConfig::InviscidSweep { sample_times, s_list, record_interval, .. }
            | ExperimentConfig::MollificationSweep { sample_times, s_list, record_interval, .. } => {
                Some(SweepSettings {
                    sample_times: sample_times.clone().unwrap_or_else(|| vec![t_end]),
                    s_list: s_list.clone(),
                    record_interval: *record_interval,
                })
            }
            ExperimentConfig::Picard { .. } => None,
        }
    }

    pub fn picard_config(&self) -> Option<PicardConfig> {
        match self {
            ExperimentConfig::Picard { t0, n_iters, dt } => Some(PicardConfig {
                t0: *t0,
                n_iters: *n_iters,
                dt: *dt,
                ..PicardConfig::default()
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Seed for randomized presets.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
}

impl RunConfig {
    /// Parses and validates a TOML document, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(key) = unknown.into_iter().next() {
            return Err(ConfigError::UnknownKey(key));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` after applying `key=value` overrides (dotted keys,
    /// TOML values; bare words are taken as strings).
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Self::parse(text);
        }
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let merged = toml::to_string(&doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::parse(&merged)
    }

    /// Reads a file and resolves relative paths against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse_with_overrides(&text, overrides)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output.series_path);
        fix(&mut self.output.snapshot_dir);
        fix(&mut self.output.report_path);
        if let InitialConfig::Snapshot(s) = &mut self.initial {
            fix(&mut s.path);
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid.n).expect("validated")
    }

    pub fn params(&self) -> PhysParams {
        self.physics.params()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        Grid::new(self.grid.n).map_err(|e| ConfigError::Invalid(format!("grid.n: {e}")))?;
        self.params()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("physics: {e}")))?;
        if !(self.time.t_end >= 0.0 && self.time.t_end.is_finite()) {
            return invalid("time.t_end must be finite and >= 0");
        }
        self.time
            .stepper()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("time: {e}")))?;
        if !(self.output.series_interval > 0.0) {
            return invalid("output.series_interval must be > 0");
        }
        if let Some(i) = self.output.snapshot_interval {
            if !(i > 0.0) {
                return invalid("output.snapshot_interval must be > 0");
            }
        }
        if let Some(p) = self.initial.preset() {
            p.build(self.grid(), self.seed)
                .map_err(|e| ConfigError::Invalid(format!("initial: {e}")))?;
        }
        match &self.experiment {
            Some(ExperimentConfig::InviscidSweep { nu_list, .. }) if nu_list.iter().any(|v| !(*v >= 0.0)) => {
                invalid("experiment.nu_list entries must be >= 0")
            }
            Some(ExperimentConfig::MollificationSweep { ell_list, .. })
                if ell_list.iter().any(|v| !(*v >= 0.0)) =>
            {
                invalid("experiment.ell_list entries must be >= 0")
            }
            Some(ExperimentConfig::Picard { n_iters, .. }) if *n_iters < 2 => {
                invalid("experiment.n_iters must be >= 2")
            }
            Some(ExperimentConfig::Picard { t0: Some(t0), .. }) if !(*t0 > 0.0) => {
                invalid("experiment.t0 must be > 0")
            }
            Some(e) if e.is_sweep() => {
                let s = e.sweep_settings(self.time.t_end).expect("sweep");
                if s.sample_times.is_empty() || s.sample_times.iter().any(|t| !(*t >= 0.0)) {
                    return invalid("experiment.sample_times must be non-empty and >= 0");
                }
                if !(s.record_interval > 0.0) {
                    return invalid("experiment.record_interval must be > 0");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Parse(format!("override key `{key}` is malformed")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Parse(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
