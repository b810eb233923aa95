//! Command implementations behind the `ldtn` binary.
//!
//! Exit codes: 0 success, 1 other runtime failure, 2 configuration, input or
//! checkpoint error, 3 constraint violation inside the simulator.

pub mod config;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ldtn_core::engine::{
    build_policy, run_curriculum, run_monte_carlo, scenario, write_curriculum_csv, Episode, EpisodeConfig,
    EpisodeMetrics, PolicyKind, PolicySummary, StepRecord,
};
use ldtn_core::seeds::{stream_seed, Stream};
use ldtn_core::{ConfigError, SimError};
use ldtn_gnn::{load_checkpoint, save_checkpoint, Architecture, GnnError, ModelParams};
use serde::{Deserialize, Serialize};

pub use config::{ScenarioConfig, CONFIG_VERSION};

/// Version of the eval summary and trace schemas.
pub const OUTPUT_VERSION: u32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: 1, message: format!("{}: {e}", path.display()) }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<GnnError> for CliError {
    fn from(e: GnnError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Config(_) | SimError::Model(_) => 2,
            SimError::ConstraintViolation { .. } => 3,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn load_model(path: &Path) -> CliResult<ModelParams<f32>> {
    load_checkpoint(path, Some(Architecture::DEFAULT))
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

/// Runs the three-phase curriculum, writing the checkpoint and per-episode
/// training metrics. Phase summaries go to `log`.
pub fn cmd_train(cfg: &ScenarioConfig, log: &mut dyn Write) -> CliResult<TrainOutput> {
    cfg.validate()?;
    let result = run_curriculum(&cfg.curriculum(), |_| {})?;
    for phase in 1..=3u8 {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.phase == phase).collect();
        if rows.is_empty() {
            continue;
        }
        let mean = rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64;
        let last = rows[rows.len() - 1];
        let _ = writeln!(
            log,
            "phase {phase}: {} episodes, mean delivery ratio {mean:.4}, replay {}, train steps {}, epsilon {:.3}",
            rows.len(),
            last.replay_fill,
            last.train_steps,
            last.epsilon
        );
    }
    let checkpoint = cfg.run.checkpoint.clone();
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_checkpoint(&result.model, &checkpoint).map_err(|e| match e {
        GnnError::Io(io) => CliError::io(&checkpoint, io),
        other => other.into(),
    })?;
    let metrics = cfg.run.output_dir.join("train_metrics.csv");
    let mut out = create(&metrics)?;
    write_curriculum_csv(&result.rows, &mut out).map_err(|e| CliError { code: 1, message: e.to_string() })?;
    out.flush().map_err(|e| CliError::io(&metrics, e))?;
    Ok(TrainOutput { checkpoint, metrics })
}

/// JSON summary written next to the per-episode evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub version: u32,
    pub seed: u64,
    pub episodes: usize,
    pub policies: Vec<PolicySummary>,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub report: EvalSummary,
}

pub fn cmd_eval(cfg: &ScenarioConfig, log: &mut dyn Write) -> CliResult<EvalOutput> {
    cfg.validate()?;
    let kinds = cfg.policy_kinds()?;
    let model = if kinds.iter().any(PolicyKind::needs_model) { Some(load_model(&cfg.run.checkpoint)?) } else { None };
    let report = run_monte_carlo(
        &kinds,
        &cfg.episode(),
        &cfg.space(),
        cfg.run.seed,
        cfg.run.episodes,
        model.as_ref(),
        cfg.run.jobs,
    )?;
    for s in &report.summary {
        let _ = writeln!(
            log,
            "{:<12} ratio {:.4} ± {:.4}  duplicates {:.1}  dropped {:.1}  steps {:.0}",
            s.policy, s.ratio_mean, s.ratio_std, s.duplicates_mean, s.dropped_mean, s.steps_mean
        );
    }
    let csv_path = cfg.run.output_dir.join("eval.csv");
    let mut out = create(&csv_path)?;
    report.write_csv(&mut out).map_err(|e| CliError { code: 1, message: e.to_string() })?;
    out.flush().map_err(|e| CliError::io(&csv_path, e))?;

    let summary = EvalSummary {
        version: OUTPUT_VERSION,
        seed: cfg.run.seed,
        episodes: cfg.run.episodes,
        policies: report.summary,
        config: cfg.clone(),
    };
    let summary_path = cfg.run.output_dir.join("eval_summary.json");
    let mut out = create(&summary_path)?;
    serde_json::to_writer_pretty(&mut out, &summary).map_err(|e| CliError { code: 1, message: e.to_string() })?;
    out.flush().map_err(|e| CliError::io(&summary_path, e))?;
    Ok(EvalOutput { csv: csv_path, summary: summary_path, report: summary })
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Header { version: u32, policy: String, config: EpisodeConfig },
    Step(StepRecord),
    Metrics(EpisodeMetrics),
}

/// Runs scenario `run.episode` with `run.policy`, optionally tracing every
/// step to `run.trace`.
pub fn cmd_run(cfg: &ScenarioConfig) -> CliResult<EpisodeMetrics> {
    cfg.validate()?;
    let kind = PolicyKind::parse(&cfg.run.policy)?;
    let model = if kind.needs_model() { Some(load_model(&cfg.run.checkpoint)?) } else { None };
    let mut ep_cfg = scenario(&cfg.episode(), &cfg.space(), cfg.run.seed, cfg.run.episode);
    let mut policy = build_policy(
        kind,
        &mut ep_cfg,
        stream_seed(cfg.run.seed, Stream::Policy, cfg.run.episode),
        model.as_ref(),
    )?;
    let mut trace = match &cfg.run.trace {
        Some(path) => Some((path.clone(), create(path)?)),
        None => None,
    };
    let mut emit = |line: &TraceLine| -> CliResult<()> {
        if let Some((path, out)) = trace.as_mut() {
            serde_json::to_writer(&mut *out, line).map_err(|e| CliError { code: 1, message: e.to_string() })?;
            out.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
        }
        Ok(())
    };
    emit(&TraceLine::Header { version: OUTPUT_VERSION, policy: kind.label(), config: ep_cfg.clone() })?;
    let mut ep = Episode::new(&ep_cfg)?;
    while !ep.is_done() && (cfg.run.max_steps == 0 || ep.step < cfg.run.max_steps) {
        let record = ep.step(policy.as_mut())?;
        emit(&TraceLine::Step(record))?;
    }
    policy.end_episode();
    let mut metrics = ep.finish(policy.name());
    metrics.policy = kind.label();
    metrics.seed = cfg.run.episode;
    emit(&TraceLine::Metrics(metrics.clone()))?;
    if let Some((path, out)) = trace.as_mut() {
        out.flush().map_err(|e| CliError::io(path, e))?;
    }
    Ok(metrics)
}

/// Counters recovered from the last step of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub steps: u64,
    pub created: u64,
    pub copies: u64,
    pub delivered_unique: u64,
    pub duplicates: u64,
    pub dropped: u64,
    pub still_buffered: u64,
    pub ratio: f64,
}

impl ReplaySummary {
    fn from_last(last: &StepRecord, lander: usize) -> Self {
        let still_buffered = last.buffers.iter().take(lander).map(|&b| b as u64).sum();
        Self {
            steps: last.step + 1,
            created: last.created,
            copies: last.copies,
            delivered_unique: last.delivered_unique,
            duplicates: last.duplicates,
            dropped: last.dropped,
            still_buffered,
            ratio: if last.created == 0 { 0.0 } else { last.delivered_unique as f64 / last.created as f64 },
        }
    }

    pub fn matches(&self, m: &EpisodeMetrics) -> bool {
        self.steps == m.steps
            && self.created == m.created
            && self.copies == m.copies
            && self.delivered_unique == m.delivered_unique
            && self.duplicates == m.duplicates
            && self.dropped == m.dropped
            && self.still_buffered == m.still_buffered
            && self.ratio == m.ratio
    }
}

/// Reads a trace and re-emits one JSON record per step to `out`. Returns the
/// number of step records and the counters of the last one.
pub fn cmd_replay(log_path: &Path, out: &mut dyn Write) -> CliResult<(usize, Option<ReplaySummary>)> {
    let file = File::open(log_path).map_err(|e| CliError::config(format!("{}: {e}", log_path.display())))?;
    let malformed = |n: usize, what: String| CliError::config(format!("{}:{n}: {what}", log_path.display()));
    let mut steps = 0;
    let mut last: Option<StepRecord> = None;
    let mut rovers = None;
    let mut recorded: Option<EpisodeMetrics> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| malformed(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| malformed(i + 1, e.to_string()))?;
        match parsed {
            TraceLine::Header { config, .. } => rovers = Some(config.rovers),
            TraceLine::Step(rec) => {
                let expected = last.as_ref().map_or(0, |l| l.step + 1);
                if rec.step != expected {
                    return Err(malformed(i + 1, format!("expected step {expected}, found {}", rec.step)));
                }
                if let Some(n) = rovers {
                    if rec.positions.len() != n {
                        return Err(malformed(i + 1, "rover count differs from the header".into()));
                    }
                }
                serde_json::to_writer(&mut *out, &rec).map_err(|e| CliError { code: 1, message: e.to_string() })?;
                out.write_all(b"\n").map_err(|e| CliError { code: 1, message: e.to_string() })?;
                steps += 1;
                last = Some(rec);
            }
            TraceLine::Metrics(m) => recorded = Some(m),
        }
    }
    let summary = last.map(|l| ReplaySummary::from_last(&l, l.positions.len()));
    if let (Some(s), Some(m)) = (&summary, &recorded) {
        if !s.matches(m) {
            return Err(CliError::config(format!(
                "{}: step counters disagree with the recorded metrics",
                log_path.display()
            )));
        }
    }
    Ok((steps, summary))
}
