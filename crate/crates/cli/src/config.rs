//! Scenario configuration file: sections, defaults and dotted overrides.

use std::path::{Path, PathBuf};

use ldtn_core::engine::{CurriculumConfig, EpisodeConfig, PolicyKind, ScenarioSpace};
use ldtn_core::explore::ExplorationConfig;
use ldtn_core::marl::{RewardConfig, TrainerConfig};
use ldtn_core::net::LinkParams;
use ldtn_core::world::ObstacleModel;
use ldtn_core::ConfigError;
use serde::{Deserialize, Serialize};

/// Bumped whenever a key is renamed or its meaning changes.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    /// Metres per cell.
    pub resolution: f64,
    pub density: f64,
    /// `[radius, weight]` pairs.
    pub radius_distribution: Vec<(u32, f64)>,
    pub inflation_radius: u32,
    pub max_retries: u32,
}

impl Default for WorldSection {
    fn default() -> Self {
        let o = ObstacleModel::default();
        Self {
            resolution: 1.0,
            density: o.density,
            radius_distribution: o.radius_distribution,
            inflation_radius: o.inflation_radius,
            max_retries: o.max_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub interval: u64,
    pub buffer_capacity: usize,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self { interval: 1, buffer_capacity: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Episodes per curriculum phase (train) or per policy (eval).
    pub episodes: usize,
    pub max_collect_episodes: usize,
    /// Square map side, drawn uniformly from `min_size..=max_size`.
    pub min_size: usize,
    pub max_size: usize,
    pub min_rovers: usize,
    pub max_rovers: usize,
    /// When set, every episode uses exactly this many rovers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rovers: Option<usize>,
    pub jobs: usize,
    /// Evaluated policies: `snw`, `greedy`, `random`, `gatmarl`, `gatmarl-oN`.
    pub policies: Vec<String>,
    /// Policy for the single-episode `run` command.
    pub policy: String,
    /// Scenario index for the `run` command.
    pub episode: u64,
    /// Step limit for the `run` command; 0 runs to completion.
    pub max_steps: u64,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
    /// JSON-lines trace written by the `run` command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 10,
            max_collect_episodes: 200,
            min_size: 20,
            max_size: 40,
            min_rovers: 3,
            max_rovers: 5,
            rovers: None,
            jobs: 1,
            policies: vec!["snw".into(), "greedy".into(), "gatmarl".into()],
            policy: "greedy".into(),
            episode: 0,
            max_steps: 0,
            checkpoint: "model.ckpt".into(),
            output_dir: "results".into(),
            trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub world: WorldSection,
    pub net: LinkParams,
    pub traffic: TrafficSection,
    pub explore: ExplorationConfig,
    pub reward: RewardConfig,
    pub trainer: TrainerConfig,
    pub run: RunSection,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::invalid("config", e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    /// Reads `path` (or starts from defaults) and applies dotted overrides
    /// such as `("trainer.gamma", "0.9")`.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| ConfigError::invalid("config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut doc: toml::Table =
            toml::from_str(&text).map_err(|e| ConfigError::invalid("config", e.message().to_string()))?;
        for (key, value) in overrides {
            apply_override(&mut doc, key, value)?;
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::invalid("config", e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.episode().validate()?;
        self.space().validate()?;
        self.trainer.validate()?;
        self.reward.validate()?;
        self.policy_kinds()?;
        PolicyKind::parse(&self.run.policy)?;
        if self.run.jobs == 0 {
            return Err(ConfigError::invalid("run.jobs", "must be >= 1"));
        }
        Ok(())
    }

    pub fn space(&self) -> ScenarioSpace {
        let (min_rovers, max_rovers) = match self.run.rovers {
            Some(r) => (r, r),
            None => (self.run.min_rovers, self.run.max_rovers),
        };
        ScenarioSpace { min_size: self.run.min_size, max_size: self.run.max_size, min_rovers, max_rovers }
    }

    /// Base episode; size, rover count and seeds are drawn per scenario.
    pub fn episode(&self) -> EpisodeConfig {
        let space = self.space();
        EpisodeConfig {
            width: space.min_size,
            height: space.min_size,
            resolution: self.world.resolution,
            obstacles: ObstacleModel {
                density: self.world.density,
                radius_distribution: self.world.radius_distribution.clone(),
                seed: 0,
                inflation_radius: self.world.inflation_radius,
                max_retries: self.world.max_retries,
            },
            rovers: space.min_rovers,
            link: self.net.clone(),
            explore: self.explore.clone(),
            interval: self.traffic.interval,
            buffer_capacity: self.traffic.buffer_capacity,
            seed: 0,
        }
    }

    pub fn curriculum(&self) -> CurriculumConfig {
        CurriculumConfig {
            base: self.episode(),
            space: self.space(),
            trainer: self.trainer.clone(),
            reward: self.reward.clone(),
            episodes: self.run.episodes,
            max_collect_episodes: self.run.max_collect_episodes,
            seed: self.run.seed,
        }
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>, ConfigError> {
        if self.run.policies.is_empty() {
            return Err(ConfigError::invalid("run.policies", "list at least one policy"));
        }
        self.run.policies.iter().map(|p| PolicyKind::parse(p.trim())).collect()
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // Anything that is not a TOML literal is taken as a bare string.
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn apply_override(doc: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let Some((section, field)) = key.split_once('.') else {
        return Err(ConfigError::invalid(key, "overrides take the form section.key"));
    };
    if section.is_empty() || field.is_empty() || field.contains('.') {
        return Err(ConfigError::invalid(key, "overrides take the form section.key"));
    }
    let table = doc
        .entry(section)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| ConfigError::invalid(section, "not a section"))?;
    table.insert(field.to_string(), parse_value(raw));
    Ok(())
}

/// Splits `--section.key value` and `--section.key=value` pairs out of `args`.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), ConfigError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let dotted = arg.strip_prefix("--").filter(|k| {
            let name = k.split('=').next().unwrap_or("");
            name.contains('.') && !name.contains('/')
        });
        match dotted {
            Some(pair) => match pair.split_once('=') {
                Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
                None => {
                    let v = it.next().ok_or_else(|| ConfigError::invalid(pair, "missing value"))?;
                    overrides.push((pair.to_string(), v));
                }
            },
            None => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}
