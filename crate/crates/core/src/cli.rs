//! The `pathway` command line: one subcommand per pipeline stage, file-based
//! artifacts in the output directory and a one-line JSON summary on stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{KernelVariant, PipelineConfig};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::ingest::{
    assemble_episodes, extract_transitions, group_physicians, parse_claims, AssemblyConfig, CostMismatch, Dictionaries,
    EpisodeRecord, PhysicianGrouping, SchemaConfig, StateId, TransitionDataset,
};
use crate::kernel::{build_empirical_mdp, EmpiricalMdp, KernelSpec};
use crate::seeding::task_rng;
use crate::sim::{
    cross_validate, episode_premium, evaluate_policy, export_histogram, forecast_pathway, simulate_episode, Controller,
    CvConfig, DayOccupancy, EpisodeStats, ForecastCondition, ForecastConfig, GapModel, RolloutConfig, Simulator,
    StartDistribution,
};
use crate::solver::{
    derive_prescription_policy, extract_policy, q_values, value_iteration, GroupPolicy, PrescriptionPolicy, SolverConfig,
};
use crate::spectral::{compress, support_decomposition, StatePartition};
use crate::synth::{generate_claims, SynthConfig};

macro_rules! overrides {
    ($($field:ident),* $(,)?) => {
        /// Config overrides; every config key is also a flag.
        #[derive(Args, Debug, Default)]
        struct Overrides {
            $(
                #[arg(long, global = true, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
                $(
                    if let Some(v) = &self.$field {
                        cfg.set(stringify!($field), v)?;
                    }
                )*
                Ok(())
            }
        }
    };
}

overrides!(
    input,
    out_dir,
    seed,
    k,
    groups,
    max_inpatient,
    restarts,
    kernel,
    normalization,
    clamp_negative,
    tol,
    max_iter,
    discount,
    repeats,
    rollouts,
    max_steps,
    workers,
    premium_threshold,
    k_min,
    k_max,
    balance_tolerance,
    balance_attempts,
    split_retries,
    grouping_file,
    strict,
    horizon_days,
    n_traj,
    start_day,
    condition,
    bin_width,
    synth_episodes,
    synth_physicians,
    synth_beneficiaries,
);

#[derive(Parser, Debug)]
#[command(name = "pathway", about = "Offline RL for clinical pathways from episodic claims", disable_version_flag = true)]
struct Cli {
    /// `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print name and version as JSON.
    #[arg(long)]
    version: bool,
    /// Print the resolved config as JSON and exit.
    #[arg(long = "config-dump", global = true)]
    config_dump: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate synthetic claims and the ground-truth sidecar.
    Synth,
    /// Parse claims, assemble episodes, group physicians, extract transitions.
    Ingest,
    /// Spectral features and the k-block state partition.
    Compress,
    /// Kernel-smoothed MDP estimate.
    Fit,
    /// Value iteration, greedy group policy and procedure prescriptions.
    Solve,
    /// Monte-Carlo evaluation against the behavior policy.
    Evaluate,
    /// Two-fold cross-validation over k.
    Cv,
    /// Per-day diagnosis-category forecast under the policy.
    Forecast,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Compress => "compress",
            Command::Fit => "fit",
            Command::Solve => "solve",
            Command::Evaluate => "evaluate",
            Command::Cv => "cv",
            Command::Forecast => "forecast",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    tool: String,
    version: String,
    stage: String,
    seed: u64,
    config_hash: String,
    config: Value,
    /// File name → SHA-256 of the bytes read.
    inputs: BTreeMap<String, String>,
    /// Companion files written by the same stage.
    outputs: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    meta: Meta,
    data: T,
}

#[derive(Serialize, Deserialize)]
struct IngestData {
    dictionaries: Dictionaries,
    grouping: PhysicianGrouping,
    episodes: Vec<EpisodeRecord>,
    dataset: TransitionDataset,
    skipped_rows: Vec<(u64, String)>,
    cost_mismatches: Vec<CostMismatch>,
}

#[derive(Serialize, Deserialize)]
struct SolveData {
    iterations: usize,
    residual: f64,
    discount: f64,
    values: BTreeMap<StateId, f64>,
    q_values: BTreeMap<StateId, Vec<f64>>,
    policy: GroupPolicy,
    prescriptions: PrescriptionPolicy,
}

#[derive(Serialize, Deserialize)]
struct EvaluateData {
    optimized: EpisodeStats,
    behavior: EpisodeStats,
    observed_mean_cost: f64,
    observed_mean_premium: f64,
    cost_reduction: f64,
    premium_reduction: f64,
}

#[derive(Serialize, Deserialize)]
struct ForecastData {
    condition: ForecastCondition,
    start_day: i64,
    horizon_days: i64,
    trajectories: usize,
    terminal: Vec<f64>,
}

/// Stage context: resolved config plus the hashes of everything read so far.
struct Stage {
    cfg: PipelineConfig,
    name: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    written: Vec<String>,
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

impl Stage {
    fn new(cfg: PipelineConfig, name: &'static str) -> Self {
        Self { cfg, name, inputs: BTreeMap::new(), outputs: BTreeMap::new(), written: Vec::new() }
    }

    fn read_bytes(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Precondition(format!("missing input {}", path.display())),
            _ => Error::Io(e),
        })?;
        self.inputs.insert(file_name(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn read_artifact<T: DeserializeOwned>(&mut self, name: &str) -> Result<T> {
        let path = self.cfg.out_dir.join(name);
        let bytes = self.read_bytes(&path)?;
        let artifact: Artifact<T> = serde_json::from_slice(&bytes)?;
        Ok(artifact.data)
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::create_dir_all(&self.cfg.out_dir)?;
        std::fs::write(self.cfg.out_dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        self.written.push(name.to_string());
        Ok(())
    }

    fn meta(&self) -> Meta {
        Meta {
            tool: "pathway".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            stage: self.name.into(),
            seed: self.cfg.seed,
            config_hash: self.cfg.hash(),
            config: self.cfg.echoed(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        }
    }

    /// Write `data` wrapped with the stage metadata; companion files must be
    /// written first so that their hashes are listed.
    fn write_artifact<T: Serialize>(&mut self, name: &str, data: &T) -> Result<()> {
        let artifact = Artifact { meta: self.meta(), data };
        let mut text = serde_json::to_string_pretty(&artifact)?;
        text.push('\n');
        std::fs::create_dir_all(&self.cfg.out_dir)?;
        std::fs::write(self.cfg.out_dir.join(name), text.as_bytes())?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn summary(&self, mut fields: Value) -> Value {
        let map = fields.as_object_mut().expect("summary fields are an object");
        map.insert("stage".into(), json!(self.name));
        map.insert("config_hash".into(), json!(self.cfg.hash()));
        map.insert("out_dir".into(), json!(self.cfg.out_dir.display().to_string()));
        map.insert("outputs".into(), json!(self.written));
        fields
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig { tol: self.cfg.tol, max_iter: self.cfg.max_iter, discount: self.cfg.discount }
    }

    fn rollout(&self) -> RolloutConfig {
        RolloutConfig {
            seed: self.cfg.seed,
            max_steps: self.cfg.max_steps,
            rollouts: self.cfg.rollouts,
            repeats: self.cfg.repeats,
            premium_threshold: self.cfg.premium_threshold,
            workers: self.cfg.workers,
        }
    }

    fn load_mdp(&mut self) -> Result<EmpiricalMdp> {
        let data: Value = self.read_artifact("mdp.json")?;
        EmpiricalMdp::from_json(&data.to_string())
    }
}

fn synth(stage: &mut Stage) -> Result<Value> {
    let cfg = &stage.cfg;
    let synth_cfg = SynthConfig {
        n_episodes: cfg.synth_episodes,
        n_physicians: cfg.synth_physicians,
        n_beneficiaries: cfg.synth_beneficiaries,
        seed: cfg.seed,
        ..SynthConfig::default()
    };
    let model = synth_cfg.calibrated_model()?;
    let out = generate_claims(&synth_cfg, &model)?;
    stage.write_file("claims.csv", out.csv()?.as_bytes())?;
    let mut groups = serde_json::to_string_pretty(&out.sidecar.physician_types)?;
    groups.push('\n');
    stage.write_file("physician_groups.json", groups.as_bytes())?;
    stage.write_artifact("ground_truth.json", &out.sidecar)?;
    Ok(json!({
        "episodes": synth_cfg.n_episodes,
        "claims": out.claims.len(),
        "sampled_mean_cost": out.sidecar.sampled_mean_cost,
        "sampled_std_cost": out.sidecar.sampled_std_cost,
    }))
}

fn ingest(stage: &mut Stage) -> Result<Value> {
    let path = stage.cfg.claims_path();
    let bytes = stage.read_bytes(&path)?;
    let schema = SchemaConfig { strict: stage.cfg.strict, ..SchemaConfig::default() };
    let table = parse_claims(bytes.as_slice(), &schema)?;
    let report = assemble_episodes(&table.records, &AssemblyConfig::default())?;
    let episodes = report.episodes;
    let dictionaries = Dictionaries::from_episodes(&episodes);
    let grouping = match stage.cfg.grouping_file.clone() {
        Some(file) => {
            let groups: BTreeMap<String, usize> = serde_json::from_slice(&stage.read_bytes(&file)?)?;
            PhysicianGrouping::from_assignment(groups, stage.cfg.groups, &episodes)?
        }
        None => group_physicians(
            &episodes,
            stage.cfg.groups,
            stage.cfg.seed,
            stage.cfg.balance_tolerance,
            stage.cfg.balance_attempts,
        )?,
    };
    let dataset = extract_transitions(&episodes, &grouping, stage.cfg.max_inpatient, &dictionaries)?;
    let summary = json!({
        "claims": table.records.len(),
        "skipped_rows": table.skipped.len(),
        "episodes": episodes.len(),
        "transitions": dataset.len(),
        "diagnosis_categories": dictionaries.diagnosis_count(),
        "group_gap": grouping.gap,
        "cost_mismatches": report.cost_mismatches.len(),
    });
    let data = IngestData {
        dictionaries,
        grouping,
        episodes,
        dataset,
        skipped_rows: table.skipped,
        cost_mismatches: report.cost_mismatches,
    };
    stage.write_artifact("ingest.json", &data)?;
    Ok(summary)
}

fn compress_stage(stage: &mut Stage) -> Result<Value> {
    let data: IngestData = stage.read_artifact("ingest.json")?;
    let (features, partition) = compress(&data.dataset, stage.cfg.k, stage.cfg.restarts, stage.cfg.seed)?;
    stage.write_file("features.csv", features.to_csv().as_bytes())?;
    stage.write_artifact("partition.json", &partition)?;
    let sizes: Vec<usize> = partition.members().iter().map(Vec::len).collect();
    Ok(json!({
        "k": partition.k,
        "objective": partition.objective,
        "singular_values": partition.singular_values,
        "block_sizes": sizes,
    }))
}

fn fit(stage: &mut Stage) -> Result<Value> {
    let data: IngestData = stage.read_artifact("ingest.json")?;
    let spec = match stage.cfg.kernel {
        KernelVariant::Partition => KernelSpec::Partition(stage.read_artifact::<StatePartition>("partition.json")?),
        KernelVariant::Spectral => KernelSpec::Spectral {
            features: support_decomposition(&data.dataset)?.features(stage.cfg.k)?,
            clamp_negative: stage.cfg.clamp_negative,
        },
    };
    let mdp = build_empirical_mdp(&data.dataset, &spec, stage.cfg.normalization)?;
    let value: Value = serde_json::from_str(&mdp.to_json()?)?;
    stage.write_artifact("mdp.json", &value)?;
    Ok(json!({
        "kernel": mdp.provenance.kernel,
        "states": mdp.len(),
        "actions": mdp.actions,
        "pooled_fallbacks": mdp.provenance.fallback.pooled_actions,
        "self_loops": mdp.provenance.fallback.self_loops,
    }))
}

fn solve(stage: &mut Stage) -> Result<Value> {
    let mdp = stage.load_mdp()?;
    let data: IngestData = stage.read_artifact("ingest.json")?;
    let solver = stage.solver();
    let v = value_iteration(&mdp, &solver)?;
    let policy = extract_policy(&mdp, &v, solver.discount)?;
    let q = q_values(&mdp, &v, solver.discount)?;
    let prescriptions = derive_prescription_policy(&data.dataset, &data.grouping, &policy)?;
    stage.write_file("values.csv", v.to_csv()?.as_bytes())?;
    let mut counts = vec![0usize; mdp.actions];
    for s in mdp.states.iter().filter(|s| !s.is_terminal()) {
        counts[policy.action(s)] += 1;
    }
    let starts = data.dataset.initial_states();
    let start_value = starts.iter().filter_map(|s| v.get(s)).sum::<f64>() / starts.len().max(1) as f64;
    let out = SolveData {
        iterations: v.iterations,
        residual: v.residual,
        discount: solver.discount,
        values: v.states.iter().copied().zip(v.values.iter().copied()).collect(),
        q_values: mdp.states.iter().copied().zip(q).collect(),
        policy,
        prescriptions,
    };
    stage.write_artifact("policy.json", &out)?;
    Ok(json!({
        "iterations": out.iterations,
        "residual": out.residual,
        "mean_initial_value": start_value,
        "states_per_group": counts,
    }))
}

fn evaluate(stage: &mut Stage) -> Result<Value> {
    let mdp = stage.load_mdp()?;
    let solved: SolveData = stage.read_artifact("policy.json")?;
    let data: IngestData = stage.read_artifact("ingest.json")?;
    let start = StartDistribution::Empirical(data.dataset.initial_states());
    let rollout = stage.rollout();
    let controller = Controller::from_policy(&solved.policy, &mdp)?;
    let optimized = evaluate_policy(&mdp, &controller, &start, &rollout)?;
    let behavior = evaluate_policy(&mdp, &Controller::behavior(mdp.actions), &start, &rollout)?;

    let threshold = stage.cfg.premium_threshold;
    let observed: Vec<f64> = data.episodes.iter().map(|e| e.total_cost).collect();
    let n = observed.len().max(1) as f64;
    let observed_mean_cost = observed.iter().sum::<f64>() / n;
    let observed_mean_premium = observed.iter().map(|&c| episode_premium(c, threshold)).sum::<f64>() / n;

    let sim = Simulator::new(&mdp, stage.cfg.max_steps);
    let gaps = GapModel::Constant(1);
    let mut simulated = Vec::with_capacity(stage.cfg.rollouts);
    for (i, s) in data.dataset.initial_states().iter().cycle().take(stage.cfg.rollouts).enumerate() {
        let mut rng = task_rng(stage.cfg.seed, &[u64::MAX, i as u64]);
        simulated.push(simulate_episode(&sim, &controller, s, &gaps, &mut rng)?.total_cost);
    }
    let bin = stage.cfg.bin_width;
    stage.write_file("histogram_observed.csv", export_histogram(&observed, bin, threshold)?.to_csv()?.as_bytes())?;
    stage.write_file("histogram_policy.csv", export_histogram(&simulated, bin, threshold)?.to_csv()?.as_bytes())?;

    let out = EvaluateData {
        cost_reduction: behavior.mean_cost - optimized.mean_cost,
        premium_reduction: behavior.mean_premium - optimized.mean_premium,
        optimized,
        behavior,
        observed_mean_cost,
        observed_mean_premium,
    };
    stage.write_artifact("evaluation.json", &out)?;
    Ok(json!({
        "optimized_mean_cost": out.optimized.mean_cost,
        "optimized_cost_ci": out.optimized.cost_ci,
        "behavior_mean_cost": out.behavior.mean_cost,
        "behavior_cost_ci": out.behavior.cost_ci,
        "optimized_mean_premium": out.optimized.mean_premium,
        "behavior_mean_premium": out.behavior.mean_premium,
        "episodes_per_policy": out.optimized.episodes,
        "warning": out.optimized.warning.clone().or(out.behavior.warning.clone()),
    }))
}

fn cv(stage: &mut Stage) -> Result<Value> {
    let data: IngestData = stage.read_artifact("ingest.json")?;
    let cfg = &stage.cfg;
    let cv_cfg = CvConfig {
        k_range: (cfg.k_min..=cfg.k_max).collect(),
        groups: cfg.groups,
        max_inpatient: cfg.max_inpatient,
        restarts: cfg.restarts,
        balance_tolerance: cfg.balance_tolerance,
        balance_attempts: cfg.balance_attempts,
        repeats: cfg.repeats,
        rollouts: cfg.rollouts,
        max_steps: cfg.max_steps,
        split_retries: cfg.split_retries,
        seed: cfg.seed,
        solver: stage.solver(),
        normalization: cfg.normalization,
        premium_threshold: cfg.premium_threshold,
        grouping: cfg.grouping_file.is_some().then(|| data.grouping.clone()),
        workers: cfg.workers,
    };
    let report = cross_validate(&data.episodes, &data.dictionaries, &cv_cfg)?;
    stage.write_artifact("cv_report.json", &report)?;
    let curve: Vec<Value> = report
        .entries
        .iter()
        .map(|e| json!({"k": e.k, "in_sample": e.in_sample.mean_cost, "out_of_sample": e.out_of_sample.mean_cost}))
        .collect();
    Ok(json!({ "selected_k": report.selected_k, "curve": curve }))
}

fn parse_condition(text: &str, dict: &Dictionaries) -> Result<ForecastCondition> {
    let bad = || Error::Config(format!("condition must be initial, state:<key> or category:<label>, got `{text}`"));
    if text == "initial" {
        return Ok(ForecastCondition::Initial);
    }
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    match kind {
        "state" => Ok(ForecastCondition::State(rest.parse()?)),
        "category" => dict
            .diagnosis_category
            .index_of(rest)
            .map(ForecastCondition::Category)
            .ok_or_else(|| Error::Lookup(format!("diagnosis category `{rest}` not in the dictionary"))),
        _ => Err(bad()),
    }
}

fn forecast(stage: &mut Stage) -> Result<Value> {
    let mdp = stage.load_mdp()?;
    let solved: SolveData = stage.read_artifact("policy.json")?;
    let data: IngestData = stage.read_artifact("ingest.json")?;
    let condition = parse_condition(&stage.cfg.condition, &data.dictionaries)?;
    let cfg = ForecastConfig {
        start_day: stage.cfg.start_day,
        horizon_days: stage.cfg.horizon_days,
        n_traj: stage.cfg.n_traj,
        seed: stage.cfg.seed,
        max_steps: stage.cfg.max_steps,
        condition: condition.clone(),
    };
    let occupancy = DayOccupancy::from_episodes(&data.episodes, stage.cfg.max_inpatient, &data.dictionaries)?;
    let gaps = GapModel::from_episodes(&data.episodes);
    let controller = Controller::from_policy(&solved.policy, &mdp)?;
    let matrix = forecast_pathway(&mdp, &controller, &cfg, Some(&occupancy), &gaps)?;
    stage.write_file("forecast.csv", matrix.to_csv(data.dictionaries.diagnosis_category.labels())?.as_bytes())?;
    let terminal = matrix.terminal_column();
    let out = ForecastData {
        condition,
        start_day: cfg.start_day,
        horizon_days: cfg.horizon_days,
        trajectories: cfg.n_traj,
        terminal: terminal.clone(),
    };
    stage.write_artifact("forecast.json", &out)?;
    Ok(json!({
        "days": matrix.rows.len(),
        "trajectories": cfg.n_traj,
        "terminal_at_horizon": terminal.last().copied().unwrap_or(0.0),
    }))
}

fn run_stage(command: Command, cfg: PipelineConfig) -> Result<Value> {
    let mut stage = Stage::new(cfg, command.name());
    let fields = match command {
        Command::Synth => synth(&mut stage)?,
        Command::Ingest => ingest(&mut stage)?,
        Command::Compress => compress_stage(&mut stage)?,
        Command::Fit => fit(&mut stage)?,
        Command::Solve => solve(&mut stage)?,
        Command::Evaluate => evaluate(&mut stage)?,
        Command::Cv => cv(&mut stage)?,
        Command::Forecast => forecast(&mut stage)?,
    };
    Ok(stage.summary(fields))
}

fn resolve(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::from_env();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cli.overrides.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

/// Run the CLI on `argv` (program name first) and return the exit code:
/// 0 on success, 1 on usage or validation errors, 2 on runtime errors.
pub fn run_command(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    if cli.version {
        println!("{}", json!({"name": "pathway", "version": env!("CARGO_PKG_VERSION")}));
        return 0;
    }
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if cli.config_dump {
        println!("{}", serde_json::to_string(&cfg).expect("plain config serializes"));
        return 0;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required: synth | ingest | compress | fit | solve | evaluate | cv | forecast");
        return 1;
    };
    match run_stage(command, cfg) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
