//! Episode loop, training curriculum and Monte Carlo evaluation.

mod episode;

pub use episode::{run_episode, run_episode_traced, Episode, EpisodeConfig, EpisodeMetrics, StepRecord, Transmission};

use std::io::Write;

use ldtn_gnn::{Architecture, ModelParams};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};
use crate::marl::{AgentMode, GatPolicy};
use crate::marl::{Trainer, TrainerConfig};
use crate::marl::RewardConfig;
use crate::policies::{Greedy, RandomPolicy, RoutingPolicy, SprayAndWait};
use crate::seeds::{stream_rng, stream_seed, Stream};

/// Ranges from which per-episode scenarios are drawn. Maps are square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpace {
    pub min_size: usize,
    pub max_size: usize,
    pub min_rovers: usize,
    pub max_rovers: usize,
}

impl Default for ScenarioSpace {
    fn default() -> Self {
        Self { min_size: 20, max_size: 40, min_rovers: 3, max_rovers: 5 }
    }
}

impl ScenarioSpace {
    /// A space that always yields exactly `size` x `size` with `rovers` rovers.
    pub fn fixed(size: usize, rovers: usize) -> Self {
        Self { min_size: size, max_size: size, min_rovers: rovers, max_rovers: rovers }
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.min_size < 3 || self.min_size > self.max_size {
            return Err(ConfigError::invalid("run.min_size", "need 3 <= min_size <= max_size"));
        }
        if self.min_rovers < 1 || self.min_rovers > self.max_rovers {
            return Err(ConfigError::invalid("run.min_rovers", "need 1 <= min_rovers <= max_rovers"));
        }
        Ok(())
    }
}

/// Episode `index` of the stream seeded by `master`.
pub fn scenario(base: &EpisodeConfig, space: &ScenarioSpace, master: u64, index: u64) -> EpisodeConfig {
    let mut rng = stream_rng(master, Stream::Scenario, index);
    let size = rng.gen_range(space.min_size..=space.max_size);
    let rovers = rng.gen_range(space.min_rovers..=space.max_rovers);
    let mut cfg = base.clone();
    cfg.width = size;
    cfg.height = size;
    cfg.rovers = rovers;
    cfg.obstacles.seed = stream_seed(master, Stream::Map, index);
    cfg.seed = stream_seed(master, Stream::KMeans, index);
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub base: EpisodeConfig,
    pub space: ScenarioSpace,
    pub trainer: TrainerConfig,
    pub reward: RewardConfig,
    /// Episodes in each of the three phases (the first phase runs longer
    /// until the replay holds the warm-up amount).
    pub episodes: usize,
    /// Hard cap on first-phase episodes.
    pub max_collect_episodes: usize,
    pub seed: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            base: EpisodeConfig::default(),
            space: ScenarioSpace::default(),
            trainer: TrainerConfig::default(),
            reward: RewardConfig::default(),
            episodes: 10,
            max_collect_episodes: 200,
            seed: 0,
        }
    }
}

/// One line of the training metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumRow {
    pub phase: u8,
    pub episode: u64,
    pub epsilon: f64,
    pub replay_fill: usize,
    pub train_steps: u64,
    pub rovers: usize,
    pub size: usize,
    pub created: u64,
    pub delivered_unique: u64,
    pub duplicates: u64,
    pub dropped: u64,
    pub ratio: f64,
    pub topology_changes: u64,
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct CurriculumResult {
    pub model: ModelParams<f32>,
    pub rows: Vec<CurriculumRow>,
    pub trainer: Trainer,
}

/// Three-phase training: random collection plus an initial sweep, ε-annealed
/// learning, then frozen evaluation of the learned weights.
pub fn run_curriculum(cfg: &CurriculumConfig, mut on_episode: impl FnMut(&CurriculumRow)) -> Result<CurriculumResult> {
    cfg.base.validate()?;
    cfg.space.validate()?;
    cfg.trainer.validate()?;
    cfg.reward.validate()?;
    if cfg.episodes == 0 {
        return Err(ConfigError::invalid("run.episodes", "must be >= 1").into());
    }
    let mut model = ModelParams::<f32>::init(Architecture::DEFAULT, stream_seed(cfg.seed, Stream::ModelInit, 0));
    model.dropout = cfg.trainer.dropout;
    let trainer = Trainer::new(
        cfg.trainer.clone(),
        &model,
        stream_seed(cfg.seed, Stream::Replay, 0),
        stream_seed(cfg.seed, Stream::Dropout, 0),
    );
    let mut policy = GatPolicy::learner(model, trainer, cfg.reward.clone(), stream_seed(cfg.seed, Stream::Policy, 0));
    let mut rows = Vec::new();
    let mut index = 0u64;

    let mut run = |policy: &mut GatPolicy, phase: u8, rows: &mut Vec<CurriculumRow>| -> Result<()> {
        let ep = scenario(&cfg.base, &cfg.space, cfg.seed, index);
        let eps = policy.epsilon();
        let m = run_episode(&ep, policy)?;
        let row = CurriculumRow {
            phase,
            episode: index,
            epsilon: eps,
            replay_fill: policy.replay_len(),
            train_steps: policy.trainer.as_ref().map_or(0, |t| t.steps),
            rovers: m.rovers,
            size: m.width,
            created: m.created,
            delivered_unique: m.delivered_unique,
            duplicates: m.duplicates,
            dropped: m.dropped,
            ratio: m.ratio,
            topology_changes: m.topology_changes,
            steps: m.steps,
        };
        on_episode(&row);
        rows.push(row);
        index += 1;
        Ok(())
    };

    policy.mode = AgentMode::Collect;
    let mut collected = 0;
    while collected < cfg.episodes || (policy.replay_len() < cfg.trainer.warmup && collected < cfg.max_collect_episodes) {
        run(&mut policy, 1, &mut rows)?;
        collected += 1;
    }
    if policy.replay_len() >= cfg.trainer.batch_size {
        policy.sweep(cfg.trainer.initial_sweep)?;
    }

    policy.mode = AgentMode::Anneal;
    for _ in 0..cfg.episodes {
        run(&mut policy, 2, &mut rows)?;
    }

    policy.mode = AgentMode::Frozen;
    for _ in 0..cfg.episodes {
        run(&mut policy, 3, &mut rows)?;
    }

    let trainer = policy.trainer.take().expect("learner has a trainer");
    Ok(CurriculumResult { model: policy.model, rows, trainer })
}

pub fn write_curriculum_csv(rows: &[CurriculumRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Policies the evaluation harness knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    SprayAndWait,
    Greedy,
    Random,
    /// The learned policy, with the exploration forecast horizon O.
    Gat { horizon: usize },
}

impl PolicyKind {
    pub fn label(&self) -> String {
        match self {
            PolicyKind::SprayAndWait => "snw".into(),
            PolicyKind::Greedy => "greedy".into(),
            PolicyKind::Random => "random".into(),
            PolicyKind::Gat { horizon } => format!("gatmarl-o{horizon}"),
        }
    }

    /// Parses `snw`, `greedy`, `random`, `gatmarl` (O = 1) or `gatmarl-oN`.
    pub fn parse(s: &str) -> std::result::Result<Self, ConfigError> {
        match s {
            "snw" => Ok(PolicyKind::SprayAndWait),
            "greedy" => Ok(PolicyKind::Greedy),
            "random" => Ok(PolicyKind::Random),
            "gatmarl" => Ok(PolicyKind::Gat { horizon: 1 }),
            _ => s
                .strip_prefix("gatmarl-o")
                .and_then(|n| n.parse().ok())
                .filter(|&h: &usize| h >= 1)
                .map(|horizon| PolicyKind::Gat { horizon })
                .ok_or_else(|| ConfigError::invalid("policy", format!("unknown policy '{s}'"))),
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, PolicyKind::Gat { .. })
    }
}

/// Instantiates `kind` for an episode. The learned policy also sets the
/// forecast horizon in `cfg`; `seed` only matters for the random policy.
pub fn build_policy(
    kind: PolicyKind,
    cfg: &mut EpisodeConfig,
    seed: u64,
    model: Option<&ModelParams<f32>>,
) -> Result<Box<dyn RoutingPolicy>> {
    Ok(match kind {
        PolicyKind::SprayAndWait => Box::new(SprayAndWait),
        PolicyKind::Greedy => Box::new(Greedy),
        PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
        PolicyKind::Gat { horizon } => {
            cfg.explore.objective_horizon = horizon;
            let model = model.ok_or_else(|| ConfigError::invalid("model", "the learned policy needs a checkpoint"))?;
            Box::new(GatPolicy::frozen(model.clone()))
        }
    })
}

/// Runs episode `index` for `kind`. `model` is required for the learned policy.
pub fn evaluate_one(
    kind: PolicyKind,
    base: &EpisodeConfig,
    space: &ScenarioSpace,
    master: u64,
    index: u64,
    model: Option<&ModelParams<f32>>,
) -> Result<EpisodeMetrics> {
    let mut cfg = scenario(base, space, master, index);
    let mut policy = build_policy(kind, &mut cfg, stream_seed(master, Stream::Policy, index), model)?;
    let mut m = run_episode(&cfg, policy.as_mut())?;
    m.policy = kind.label();
    m.seed = index;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub episodes: usize,
    pub ratio_mean: f64,
    pub ratio_std: f64,
    pub delivered_mean: f64,
    pub created_mean: f64,
    pub duplicates_mean: f64,
    pub dropped_mean: f64,
    pub topology_changes_mean: f64,
    pub steps_mean: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn summarise(policy: &str, rows: &[EpisodeMetrics]) -> PolicySummary {
    let col = |f: fn(&EpisodeMetrics) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };
    let (ratio_mean, ratio_std) = mean_std(&col(|m| m.ratio));
    PolicySummary {
        policy: policy.to_string(),
        episodes: rows.len(),
        ratio_mean,
        ratio_std,
        delivered_mean: mean_std(&col(|m| m.delivered_unique as f64)).0,
        created_mean: mean_std(&col(|m| m.created as f64)).0,
        duplicates_mean: mean_std(&col(|m| m.duplicates as f64)).0,
        dropped_mean: mean_std(&col(|m| m.dropped as f64)).0,
        topology_changes_mean: mean_std(&col(|m| m.topology_changes as f64)).0,
        steps_mean: mean_std(&col(|m| m.steps as f64)).0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    /// Grouped by policy in the requested order, then by episode.
    pub rows: Vec<EpisodeMetrics>,
    pub summary: Vec<PolicySummary>,
}

impl MonteCarloReport {
    pub fn summary_for(&self, label: &str) -> Option<&PolicySummary> {
        self.summary.iter().find(|s| s.policy == label)
    }

    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `episodes` scenarios for every policy. Every policy sees the same
/// scenario sequence. `jobs > 1` runs episodes on a thread pool; results do
/// not depend on it.
pub fn run_monte_carlo(
    kinds: &[PolicyKind],
    base: &EpisodeConfig,
    space: &ScenarioSpace,
    master: u64,
    episodes: usize,
    model: Option<&ModelParams<f32>>,
    jobs: usize,
) -> Result<MonteCarloReport> {
    base.validate()?;
    space.validate()?;
    if episodes == 0 {
        return Ok(MonteCarloReport { rows: Vec::new(), summary: Vec::new() });
    }
    if kinds.iter().any(PolicyKind::needs_model) && model.is_none() {
        return Err(ConfigError::invalid("model", "the learned policy needs a checkpoint").into());
    }
    let work: Vec<(PolicyKind, u64)> =
        kinds.iter().flat_map(|&k| (0..episodes as u64).map(move |i| (k, i))).collect();
    let eval = |&(k, i): &(PolicyKind, u64)| evaluate_one(k, base, space, master, i, model);
    let results: Vec<Result<EpisodeMetrics>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| ConfigError::invalid("run.jobs", e.to_string()))?;
        pool.install(|| work.par_iter().map(eval).collect())
    } else {
        work.iter().map(eval).collect()
    };
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = kinds
        .iter()
        .zip(rows.chunks(episodes))
        .map(|(k, chunk)| summarise(&k.label(), chunk))
        .collect();
    Ok(MonteCarloReport { rows, summary })
}
