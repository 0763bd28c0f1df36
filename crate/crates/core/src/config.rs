use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::TargetNormalization;
use crate::sim::PREMIUM_THRESHOLD;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PATHWAY_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    Partition,
    Spectral,
}

/// Every tunable of the pipeline. Resolved from defaults, then a
/// `key = value` file, then command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Claims CSV read by `ingest`; defaults to `claims.csv` in the output directory.
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub k: usize,
    pub groups: usize,
    pub max_inpatient: usize,
    pub restarts: usize,
    pub kernel: KernelVariant,
    pub normalization: TargetNormalization,
    pub clamp_negative: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub discount: f64,
    pub repeats: usize,
    pub rollouts: usize,
    pub max_steps: usize,
    pub workers: usize,
    pub premium_threshold: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub balance_tolerance: f64,
    pub balance_attempts: usize,
    pub split_retries: usize,
    /// JSON map physician → group; replaces balanced random grouping.
    pub grouping_file: Option<PathBuf>,
    pub strict: bool,
    pub horizon_days: i64,
    pub n_traj: usize,
    pub start_day: i64,
    /// `initial`, `state:<key>` or `category:<label>`.
    pub condition: String,
    pub bin_width: f64,
    pub synth_episodes: usize,
    pub synth_physicians: usize,
    pub synth_beneficiaries: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            k: 3,
            groups: 3,
            max_inpatient: 4,
            restarts: 100,
            kernel: KernelVariant::Partition,
            normalization: TargetNormalization::KernelMass,
            clamp_negative: true,
            tol: 1e-6,
            max_iter: 100_000,
            discount: 1.0,
            repeats: 500,
            rollouts: 400,
            max_steps: 200,
            workers: 1,
            premium_threshold: PREMIUM_THRESHOLD,
            k_min: 2,
            k_max: 9,
            balance_tolerance: 250.0,
            balance_attempts: 50,
            split_retries: 20,
            grouping_file: None,
            strict: true,
            horizon_days: 120,
            n_traj: 10_000,
            start_day: 0,
            condition: "initial".into(),
            bin_width: 1000.0,
            synth_episodes: 212,
            synth_physicians: 37,
            synth_beneficiaries: 205,
        }
    }
}

pub const KEYS: &[&str] = &[
    "input",
    "out_dir",
    "seed",
    "k",
    "groups",
    "max_inpatient",
    "restarts",
    "kernel",
    "normalization",
    "clamp_negative",
    "tol",
    "max_iter",
    "discount",
    "repeats",
    "rollouts",
    "max_steps",
    "workers",
    "premium_threshold",
    "k_min",
    "k_max",
    "balance_tolerance",
    "balance_attempts",
    "split_retries",
    "grouping_file",
    "strict",
    "horizon_days",
    "n_traj",
    "start_day",
    "condition",
    "bin_width",
    "synth_episodes",
    "synth_physicians",
    "synth_beneficiaries",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl PipelineConfig {
    /// Defaults with the output directory taken from the environment when set.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.out_dir = PathBuf::from(dir);
        }
        cfg
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input" => self.input = optional_path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "groups" => self.groups = parse(key, v)?,
            "max_inpatient" => self.max_inpatient = parse(key, v)?,
            "restarts" => self.restarts = parse(key, v)?,
            "kernel" => {
                self.kernel = match v {
                    "partition" => KernelVariant::Partition,
                    "spectral" => KernelVariant::Spectral,
                    _ => return Err(Error::Config(format!("kernel must be partition or spectral, got `{v}`"))),
                }
            }
            "normalization" => {
                self.normalization = match v {
                    "kernel_mass" => TargetNormalization::KernelMass,
                    "sample_mass" => TargetNormalization::SampleMass,
                    _ => return Err(Error::Config(format!("normalization must be kernel_mass or sample_mass, got `{v}`"))),
                }
            }
            "clamp_negative" => self.clamp_negative = parse(key, v)?,
            "tol" => self.tol = parse(key, v)?,
            "max_iter" => self.max_iter = parse(key, v)?,
            "discount" => self.discount = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "rollouts" => self.rollouts = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "premium_threshold" => self.premium_threshold = parse(key, v)?,
            "k_min" => self.k_min = parse(key, v)?,
            "k_max" => self.k_max = parse(key, v)?,
            "balance_tolerance" => self.balance_tolerance = parse(key, v)?,
            "balance_attempts" => self.balance_attempts = parse(key, v)?,
            "split_retries" => self.split_retries = parse(key, v)?,
            "grouping_file" => self.grouping_file = optional_path(v),
            "strict" => self.strict = parse(key, v)?,
            "horizon_days" => self.horizon_days = parse(key, v)?,
            "n_traj" => self.n_traj = parse(key, v)?,
            "start_day" => self.start_day = parse(key, v)?,
            "condition" => self.condition = v.to_string(),
            "bin_width" => self.bin_width = parse(key, v)?,
            "synth_episodes" => self.synth_episodes = parse(key, v)?,
            "synth_physicians" => self.synth_physicians = parse(key, v)?,
            "synth_beneficiaries" => self.synth_beneficiaries = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("groups", self.groups),
            ("restarts", self.restarts),
            ("max_iter", self.max_iter),
            ("repeats", self.repeats),
            ("rollouts", self.rollouts),
            ("max_steps", self.max_steps),
            ("workers", self.workers),
            ("n_traj", self.n_traj),
            ("synth_episodes", self.synth_episodes),
            ("synth_physicians", self.synth_physicians),
            ("synth_beneficiaries", self.synth_beneficiaries),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{key}` must be positive")));
        }
        if !(self.tol > 0.0) || !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config("tol must be positive and discount in (0, 1]".into()));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::Config(format!("empty k range {}..={}", self.k_min, self.k_max)));
        }
        if !(self.bin_width > 0.0) || self.horizon_days < 0 {
            return Err(Error::Config("bin_width must be positive and horizon_days non-negative".into()));
        }
        Ok(())
    }

    /// The config as echoed into artifacts: the output directory is left
    /// out so that artifacts do not depend on where they were written.
    pub fn echoed(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("plain config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
        }
        value
    }

    pub fn hash(&self) -> String {
        crate::hashing::sha256_json(&self.echoed())
    }

    /// `key = value` lines that reproduce this config.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("plain config serializes");
        let map = value.as_object().expect("struct serializes to an object");
        KEYS.iter()
            .map(|k| {
                let v = match &map[*k] {
                    serde_json::Value::Null => "none".to_string(),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                format!("{k} = {v}\n")
            })
            .collect()
    }

    pub fn claims_path(&self) -> PathBuf {
        self.input.clone().unwrap_or_else(|| self.out_dir.join("claims.csv"))
    }
}
