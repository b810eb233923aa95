use ldtn_gnn::{forward, ModelParams, PaddedGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{select_action, EpsilonSchedule, Experience, Trainer};
use super::{compute_reward, observe_state, RewardConfig};
use crate::error::Result;
use crate::net::NodeId;
use crate::policies::{DecisionView, Directive, RoutingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    /// Uniformly random valid actions; experiences recorded, no learning.
    Collect,
    /// ε-greedy with one training step per environment step.
    Anneal,
    /// Greedy, no recording, no learning.
    Frozen,
}

#[derive(Debug, Clone)]
struct Pending {
    state: PaddedGraph<f32>,
    action: usize,
    reward: f32,
    receiver: NodeId,
    created: u64,
}

/// The shared graph-attention DDQN policy, executed independently by every
/// rover on its own local observation.
#[derive(Debug, Clone)]
pub struct GatPolicy {
    pub model: ModelParams<f32>,
    pub mode: AgentMode,
    pub trainer: Option<Trainer>,
    pub reward: RewardConfig,
    pub schedule: EpsilonSchedule,
    /// Environment steps taken in `Anneal` mode (the ε clock).
    pub anneal_steps: u64,
    rng: ChaCha8Rng,
    pending: Vec<Pending>,
}

impl GatPolicy {
    pub fn frozen(model: ModelParams<f32>) -> Self {
        Self {
            model,
            mode: AgentMode::Frozen,
            trainer: None,
            reward: RewardConfig::default(),
            schedule: EpsilonSchedule { start: 0.0, min: 0.0, decay_steps: 1.0 },
            anneal_steps: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            pending: Vec::new(),
        }
    }

    pub fn learner(model: ModelParams<f32>, trainer: Trainer, reward: RewardConfig, seed: u64) -> Self {
        Self {
            schedule: trainer.config.schedule(),
            model,
            mode: AgentMode::Collect,
            trainer: Some(trainer),
            reward,
            anneal_steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: Vec::new(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self.mode {
            AgentMode::Collect => 1.0,
            AgentMode::Anneal => self.schedule.value(self.anneal_steps),
            AgentMode::Frozen => 0.0,
        }
    }

    fn recording(&self) -> bool {
        self.mode != AgentMode::Frozen && self.trainer.is_some()
    }

    pub fn replay_len(&self) -> usize {
        self.trainer.as_ref().map_or(0, |t| t.replay.len())
    }

    /// Runs `steps` training steps on the current replay contents.
    pub fn sweep(&mut self, steps: u64) -> Result<()> {
        let eps = self.epsilon();
        if let Some(trainer) = &mut self.trainer {
            for _ in 0..steps {
                trainer.train_step(&mut self.model, eps)?;
            }
        }
        Ok(())
    }
}

impl RoutingPolicy for GatPolicy {
    fn name(&self) -> &'static str {
        "gatmarl"
    }

    fn decide(&mut self, view: &DecisionView<'_>) -> Result<Vec<Directive>> {
        let recording = self.recording();
        let ready = view.ready();
        if !recording && ready == 0 {
            return Ok(Vec::new());
        }
        let obs = observe_state(view, self.model.arch.max_nodes)?;
        if recording {
            let trainer = self.trainer.as_mut().expect("recording implies a trainer");
            let mut still = Vec::with_capacity(self.pending.len());
            for p in self.pending.drain(..) {
                if p.receiver == view.rover && p.created < view.step {
                    trainer.replay.push(Experience { state: p.state, action: p.action, reward: p.reward, next: Some(obs.graph.clone()) });
                } else {
                    still.push(p);
                }
            }
            self.pending = still;
        }
        if ready == 0 {
            return Ok(Vec::new());
        }
        let q = forward(&self.model, &obs.graph, false, 0)?;
        let action = select_action(&q, self.epsilon(), &mut self.rng);
        let target = obs.slots[action].expect("valid slots map to nodes");
        if recording {
            let reward = compute_reward(&self.reward, view, target) as f32;
            if target == view.lander() {
                let trainer = self.trainer.as_mut().expect("recording implies a trainer");
                trainer.replay.push(Experience { state: obs.graph, action, reward, next: None });
            } else {
                self.pending.push(Pending { state: obs.graph, action, reward, receiver: target, created: view.step });
            }
        }
        Ok(view.forward_batch(target))
    }

    fn end_step(&mut self, _step: u64) -> Result<()> {
        if self.mode != AgentMode::Anneal {
            return Ok(());
        }
        let eps = self.epsilon();
        if let Some(trainer) = &mut self.trainer {
            if trainer.replay.len() >= trainer.config.batch_size {
                trainer.train_step(&mut self.model, eps)?;
            }
        }
        self.anneal_steps += 1;
        Ok(())
    }

    fn end_episode(&mut self) {
        self.pending.clear();
    }
}
