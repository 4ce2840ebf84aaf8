//! Run configuration: TOML sections with explicit defaults, dotted-key flag
//! overrides, and seed-range expansion.

use crate::CliError;
use gbl_core::backup::{BackupConfig, BackupOperator, PolicyMode};
use gbl_core::env::{self, Environment};
use gbl_core::learner::LearnerConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvSection,
    pub learner: LearnerSection,
    pub backup: BackupSection,
    pub output: OutputSection,
    /// Seed list: a single seed, a comma list, or an inclusive `a..b` range.
    /// Empty means: use `GBL_SEED` from the environment, or 0.
    pub seeds: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvSection::default(),
            learner: LearnerSection::default(),
            backup: BackupSection::default(),
            output: OutputSection::default(),
            seeds: String::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub name: String,
    pub n: Option<u32>,
    pub p: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub total_steps: u64,
    pub replay_period: u64,
    pub batch_size: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub target_update_every: u64,
    pub eval_every: u64,
    pub eval_episodes: u32,
}

impl Default for LearnerSection {
    fn default() -> Self {
        let base = LearnerConfig::default();
        LearnerSection {
            total_steps: base.total_steps,
            replay_period: base.replay_period,
            batch_size: base.batch_size,
            alpha: base.alpha,
            epsilon: base.epsilon,
            target_update_every: base.target_update_every,
            eval_every: base.eval_every,
            eval_episodes: base.eval_episodes,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackupSection {
    pub operator: String,
    pub depth: usize,
    pub breadth: usize,
    pub gamma: f64,
    pub double: bool,
    pub distributional: bool,
    pub per_pair_breadth: bool,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for BackupSection {
    fn default() -> Self {
        let base = BackupConfig::default();
        BackupSection {
            operator: base.operator.name().to_string(),
            depth: base.depth,
            breadth: base.breadth,
            gamma: base.gamma,
            double: base.double,
            distributional: base.distributional,
            per_pair_breadth: base.per_pair_breadth,
            atoms: base.atoms,
            v_min: base.v_min,
            v_max: base.v_max,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub emit_plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("gbl_out"), emit_plots: false }
    }
}

/// Flag-level overrides shared by the run-style commands.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Environment spec, e.g. `EmptyGrid:8` or `SlipperyGrid:5:0.2`.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long = "backup.operator", value_name = "OP")]
    pub backup_operator: Option<String>,
    #[arg(long = "backup.depth", value_name = "D")]
    pub backup_depth: Option<usize>,
    #[arg(long = "backup.breadth", value_name = "B")]
    pub backup_breadth: Option<usize>,
    #[arg(long = "backup.double", value_name = "BOOL")]
    pub backup_double: Option<bool>,
    #[arg(long = "backup.distributional", value_name = "BOOL")]
    pub backup_distributional: Option<bool>,
    /// Seeds: `7`, `0,2,5`, or inclusive range `0..4`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Total environment steps (optimization steps for offline training).
    #[arg(long)]
    pub steps: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Generic dotted-key override, repeatable: `--set learner.alpha=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
    /// Write SVG training-curve plots alongside the CSVs.
    #[arg(long)]
    pub emit_plots: bool,
}

/// Load the config file (if any) and apply flag overrides on top.
pub fn resolve(overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut config = match &overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| usage(format!("invalid config: {e}")))?
        }
        None => RunConfig::default(),
    };
    if let Some(env) = &overrides.env {
        apply_env_string(&mut config.env, env)?;
    }
    if let Some(op) = &overrides.backup_operator {
        config.backup.operator = op.clone();
    }
    if let Some(d) = overrides.backup_depth {
        config.backup.depth = d;
    }
    if let Some(b) = overrides.backup_breadth {
        config.backup.breadth = b;
    }
    if let Some(v) = overrides.backup_double {
        config.backup.double = v;
    }
    if let Some(v) = overrides.backup_distributional {
        config.backup.distributional = v;
    }
    if let Some(seeds) = &overrides.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(steps) = overrides.steps {
        config.learner.total_steps = steps;
    }
    if let Some(out) = &overrides.out {
        config.output.dir = out.clone();
    }
    if overrides.emit_plots {
        config.output.emit_plots = true;
    }
    for kv in &overrides.set {
        apply_set(&mut config, kv)?;
    }
    Ok(config)
}

fn apply_env_string(section: &mut EnvSection, spec: &str) -> Result<(), CliError> {
    let mut parts = spec.split(':');
    section.name = parts.next().unwrap_or_default().to_string();
    section.n = parts
        .next()
        .map(|v| v.parse().map_err(|_| usage(format!("bad env size `{v}`"))))
        .transpose()?;
    section.p = parts
        .next()
        .map(|v| v.parse().map_err(|_| usage(format!("bad env probability `{v}`"))))
        .transpose()?;
    if parts.next().is_some() {
        return Err(usage(format!("too many parameters in env spec `{spec}`")));
    }
    Ok(())
}

/// Apply one `section.key=value` override.
fn apply_set(config: &mut RunConfig, kv: &str) -> Result<(), CliError> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
    let parse_err = |k: &str| usage(format!("bad value `{value}` for key `{k}`"));
    macro_rules! parse {
        ($k:expr) => {
            value.parse().map_err(|_| parse_err($k))?
        };
    }
    match key {
        "env.name" => config.env.name = value.to_string(),
        "env.n" => config.env.n = Some(parse!(key)),
        "env.p" => config.env.p = Some(parse!(key)),
        "learner.total_steps" => config.learner.total_steps = parse!(key),
        "learner.replay_period" => config.learner.replay_period = parse!(key),
        "learner.batch_size" => config.learner.batch_size = parse!(key),
        "learner.alpha" => config.learner.alpha = parse!(key),
        "learner.epsilon" => config.learner.epsilon = parse!(key),
        "learner.target_update_every" => config.learner.target_update_every = parse!(key),
        "learner.eval_every" => config.learner.eval_every = parse!(key),
        "learner.eval_episodes" => config.learner.eval_episodes = parse!(key),
        "backup.operator" => config.backup.operator = value.to_string(),
        "backup.depth" => config.backup.depth = parse!(key),
        "backup.breadth" => config.backup.breadth = parse!(key),
        "backup.gamma" => config.backup.gamma = parse!(key),
        "backup.double" => config.backup.double = parse!(key),
        "backup.distributional" => config.backup.distributional = parse!(key),
        "backup.per_pair_breadth" => config.backup.per_pair_breadth = parse!(key),
        "backup.atoms" => config.backup.atoms = parse!(key),
        "backup.v_min" => config.backup.v_min = parse!(key),
        "backup.v_max" => config.backup.v_max = parse!(key),
        "output.dir" => config.output.dir = PathBuf::from(value),
        "output.emit_plots" => config.output.emit_plots = parse!(key),
        "seeds" => config.seeds = value.to_string(),
        other => return Err(usage(format!("unknown config key `{other}`"))),
    }
    Ok(())
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment>, CliError> {
        if self.env.name.is_empty() {
            return Err(usage("env.name required"));
        }
        env::from_name(&self.env.name, self.env.n, self.env.p)
            .map_err(|e| usage(e.to_string()))
    }

    pub fn backup_config(&self) -> Result<BackupConfig, CliError> {
        let operator: BackupOperator = self
            .backup
            .operator
            .parse()
            .map_err(|e: gbl_core::backup::BackupError| usage(e.to_string()))?;
        let cfg = BackupConfig {
            operator,
            depth: self.backup.depth,
            breadth: self.backup.breadth,
            gamma: self.backup.gamma,
            double: self.backup.double,
            distributional: self.backup.distributional,
            per_pair_breadth: self.backup.per_pair_breadth,
            policy: PolicyMode::Greedy,
            atoms: self.backup.atoms,
            v_min: self.backup.v_min,
            v_max: self.backup.v_max,
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn learner_config(&self, seed: u64) -> Result<LearnerConfig, CliError> {
        let cfg = LearnerConfig {
            total_steps: self.learner.total_steps,
            replay_period: self.learner.replay_period,
            batch_size: self.learner.batch_size,
            alpha: self.learner.alpha,
            epsilon: self.learner.epsilon,
            target_update_every: self.learner.target_update_every,
            seed,
            eval_every: self.learner.eval_every,
            eval_episodes: self.learner.eval_episodes,
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Expand the seeds field; falls back to `GBL_SEED`, then to 0.
    pub fn seed_list(&self) -> Result<Vec<u64>, CliError> {
        let spec = if self.seeds.is_empty() {
            std::env::var("GBL_SEED").unwrap_or_else(|_| "0".to_string())
        } else {
            self.seeds.clone()
        };
        parse_seeds(&spec)
    }
}

pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let bad = || usage(format!("bad seeds spec `{spec}`; expected N, a,b,c or a..b"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

/// Check that a required input path exists (missing inputs are usage errors).
pub fn require_input(path: &Path) -> Result<(), CliError> {
    if !path.exists() {
        return Err(usage(format!("input file {} does not exist", path.display())));
    }
    Ok(())
}
