//! Learning framework around the Q-network: observations with TTL masking,
//! rewards, experience replay, Double-DQN training and the learned policy.

mod agent;
mod train;

use ldtn_gnn::PaddedGraph;
use serde::{Deserialize, Serialize};

pub use agent::{AgentMode, GatPolicy};
pub use train::{
    batch_loss, select_action, td_targets, train_step, EpsilonSchedule, Experience, Optimizer, Replay, TrainLogRow,
    Trainer, TrainerConfig,
};

use crate::error::{ConfigError, Result, SimError};
use crate::net::NodeId;
use crate::policies::DecisionView;

pub const FEATURES: usize = 7;
const SCALE: f64 = 10.0;

/// A rover's padded local graph and the node behind each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub graph: PaddedGraph<f32>,
    /// `slots[k]` is the node in row `k` (`None` for padding).
    pub slots: Vec<Option<NodeId>>,
}

/// The 7 scaled features of node `n` as seen from `view.rover`:
/// `[is_self, is_lander, lander_link_now, ttl, buffer, region_dist, node_dist]`.
pub fn node_features(view: &DecisionView<'_>, n: NodeId) -> [f64; FEATURES] {
    let lander = view.lander();
    let is_lander = n == lander;
    let flag = |b: bool| if b { SCALE } else { 0.0 };
    let scaled = |v: f64| (SCALE * v).clamp(0.0, SCALE);
    let ttl = view.ttl[n].min(view.ttl_cap) as f64 / view.ttl_cap as f64;
    let (buffer, region, dist) = if is_lander {
        (0.0, 0.0, 0.0)
    } else {
        (
            view.buffers[n].len() as f64 / view.buffer_capacity as f64,
            view.nodes[n].region_dist_m / view.map_diagonal_m,
            view.nodes[n].lander_dist_m / view.map_diagonal_m,
        )
    };
    [
        flag(n == view.rover),
        flag(is_lander),
        flag(is_lander || view.snapshot.has_edge(n, lander)),
        scaled(ttl),
        scaled(buffer),
        scaled(region),
        scaled(dist),
    ]
}

/// Builds `(X_r, A'_r)`: self in row 0, neighbours by ascending id, a star
/// adjacency around self, then TTL masking. If any neighbour forecasts a
/// lander contact, neighbours forecasting none are masked out.
pub fn observe_state(view: &DecisionView<'_>, max_nodes: usize) -> Result<Observation> {
    let neighbours = view.neighbours();
    if neighbours.len() + 1 > max_nodes {
        return Err(SimError::Capacity { size: neighbours.len() + 1, max: max_nodes });
    }
    let mut graph = PaddedGraph::<f32>::new(max_nodes, FEATURES);
    let mut slots = vec![None; max_nodes];
    let members = std::iter::once(view.rover).chain(neighbours.iter().copied());
    for (k, n) in members.enumerate() {
        for (dst, v) in graph.row_mut(k).iter_mut().zip(node_features(view, n)) {
            *dst = v as f32;
        }
        graph.valid[k] = true;
        slots[k] = Some(n);
        if k > 0 {
            graph.connect(0, k);
        }
    }
    if neighbours.iter().any(|&n| view.ttl[n] > 0) {
        for (k, &n) in neighbours.iter().enumerate() {
            if view.ttl[n] == 0 {
                graph.mask(k + 1);
            }
        }
    }
    Ok(Observation { graph, slots })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub r_deliver: f64,
    pub r_conn: f64,
    pub r_ttl: f64,
    pub r_no_ttl: f64,
    pub r_usage: f64,
    pub r_hold: f64,
    pub r_fwd: f64,
    pub alpha_ttl: f64,
    pub alpha_b: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_deliver: 10.0,
            r_conn: 2.0,
            r_ttl: 3.0,
            r_no_ttl: -2.0,
            r_usage: -3.0,
            r_hold: -8.0,
            r_fwd: -8.0,
            alpha_ttl: 1.0,
            alpha_b: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let non_positive = [("reward.r_no_ttl", self.r_no_ttl), ("reward.r_usage", self.r_usage), ("reward.r_hold", self.r_hold), ("reward.r_fwd", self.r_fwd)];
        for (key, v) in non_positive {
            if !(v <= 0.0) {
                return Err(ConfigError::invalid(key, "must be <= 0"));
            }
        }
        let non_negative = [("reward.r_ttl", self.r_ttl), ("reward.r_deliver", self.r_deliver), ("reward.r_conn", self.r_conn)];
        for (key, v) in non_negative {
            if !(v >= 0.0) {
                return Err(ConfigError::invalid(key, "must be >= 0"));
            }
        }
        if !(self.alpha_ttl > 0.0 && self.alpha_b > 0.0) {
            return Err(ConfigError::invalid("reward.alpha_ttl", "curvatures must be > 0"));
        }
        Ok(())
    }

    fn curve(alpha: f64, u: f64) -> f64 {
        (10f64.powf(alpha * u) - 1.0) / (10f64.powf(alpha) - 1.0)
    }

    /// `r_noTTL` for a zero forecast, otherwise the rising exponential curve
    /// in `u_T = min(TTL, cap) / cap`.
    pub fn ttl_term(&self, ttl: u32, cap: u32) -> f64 {
        if ttl == 0 {
            self.r_no_ttl
        } else {
            self.r_ttl * Self::curve(self.alpha_ttl, ttl.min(cap) as f64 / cap as f64)
        }
    }

    /// Buffer penalty at fill fraction `u ∈ [0, 1]`.
    pub fn buffer_term(&self, u: f64) -> f64 {
        self.r_usage * Self::curve(self.alpha_b, u.clamp(0.0, 1.0))
    }
}

/// Reward for `view.rover` choosing `target` (itself for hold), evaluated on
/// the state at decision time.
pub fn compute_reward(config: &RewardConfig, view: &DecisionView<'_>, target: NodeId) -> f64 {
    let lander = view.lander();
    if target == lander {
        return config.r_ttl + config.r_deliver + config.r_conn;
    }
    let u = view.buffers[target].len() as f64 / view.buffer_capacity as f64;
    let mut r = config.buffer_term(u) + config.ttl_term(view.ttl[target], view.ttl_cap);
    r += if target == view.rover { config.r_hold } else { config.r_fwd };
    if view.snapshot.has_edge(target, lander) {
        r += config.r_conn;
    }
    r
}
