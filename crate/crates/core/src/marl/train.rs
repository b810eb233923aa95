use ldtn_gnn::{backward, forward, forward_cached, ModelParams, PaddedGraph, QValues};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result, SimError};
use crate::seeds::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Time constant of the exponential ε decay, in training steps.
    pub epsilon_decay_steps: f64,
    pub batch_size: usize,
    /// Online-to-target copy period, in training steps.
    pub target_sync: u64,
    pub replay_capacity: usize,
    /// Experiences collected with random actions before learning starts.
    pub warmup: usize,
    /// Training steps run once the warm-up replay is full.
    pub initial_sweep: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
    pub optimizer: Optimizer,
    pub dropout: f32,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_min: 0.05,
            epsilon_decay_steps: 2000.0,
            batch_size: 64,
            target_sync: 500,
            replay_capacity: 50_000,
            warmup: 10_000,
            initial_sweep: 500,
            max_grad_norm: 10.0,
            optimizer: Optimizer::Sgd,
            dropout: ldtn_gnn::DEFAULT_DROPOUT,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if !(self.learning_rate > 0.0) {
            return Err(ConfigError::invalid("trainer.learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(ConfigError::invalid("trainer.gamma", "must lie in [0, 1)"));
        }
        if !(0.0 <= self.epsilon_min && self.epsilon_min <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return Err(ConfigError::invalid("trainer.epsilon_min", "need 0 <= epsilon_min <= epsilon_start <= 1"));
        }
        if !(self.epsilon_decay_steps > 0.0) {
            return Err(ConfigError::invalid("trainer.epsilon_decay_steps", "must be > 0"));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(ConfigError::invalid("trainer.batch_size", "need 0 < batch_size <= replay_capacity"));
        }
        if self.target_sync == 0 {
            return Err(ConfigError::invalid("trainer.target_sync", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::invalid("trainer.dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule { start: self.epsilon_start, min: self.epsilon_min, decay_steps: self.epsilon_decay_steps }
    }
}

/// `ε_t = ε_min + (ε_0 − ε_min)·exp(−t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub min: f64,
    pub decay_steps: f64,
}

impl EpsilonSchedule {
    pub fn value(&self, t: u64) -> f64 {
        self.min + (self.start - self.min) * (-(t as f64) / self.decay_steps).exp()
    }
}

/// Packet-centric transition: state at the sender, next state at the
/// receiver one step later (`None` once delivered to the lander).
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: PaddedGraph<f32>,
    pub action: usize,
    pub reward: f32,
    pub next: Option<PaddedGraph<f32>>,
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    items: Vec<Experience>,
    capacity: usize,
    head: usize,
}

impl Replay {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, head: 0 }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.head] = e;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&Experience>> {
        if self.items.len() < n || n == 0 {
            return Err(SimError::InsufficientData { have: self.items.len(), need: n.max(1) });
        }
        Ok((0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect())
    }
}

/// ε-greedy over the valid slots; greedy ties go to the lowest index.
pub fn select_action(q: &QValues<f32>, epsilon: f64, rng: &mut impl Rng) -> usize {
    let valid: Vec<usize> = (0..q.valid.len()).filter(|&k| q.valid[k]).collect();
    assert!(!valid.is_empty(), "hold is always a valid action");
    if valid.len() == 1 {
        return valid[0];
    }
    if rng.gen::<f64>() < epsilon {
        valid[rng.gen_range(0..valid.len())]
    } else {
        q.argmax().expect("non-empty")
    }
}

/// Double-DQN targets: `r` for terminal transitions, otherwise
/// `r + γ·Q(s', argmax_a Q(s', a; θ); θ⁻)`.
pub fn td_targets(batch: &[&Experience], online: &ModelParams<f32>, target: &ModelParams<f32>, gamma: f64) -> Result<Vec<f32>> {
    batch
        .par_iter()
        .map(|e| match &e.next {
            None => Ok(e.reward),
            Some(_) if gamma == 0.0 => Ok(e.reward),
            Some(next) => {
                let a = forward(online, next, false, 0)?.argmax().expect("self row is valid");
                let v = forward(target, next, false, 0)?.values[a];
                Ok(e.reward + gamma as f32 * v)
            }
        })
        .collect()
}

/// Mean squared TD error at the taken actions, without dropout.
pub fn batch_loss(online: &ModelParams<f32>, batch: &[&Experience], targets: &[f32]) -> Result<f32> {
    let errs: Vec<f32> = batch
        .par_iter()
        .zip(targets)
        .map(|(e, &y)| forward(online, &e.state, false, 0).map(|q| (q.values[e.action] - y).powi(2)))
        .collect::<std::result::Result<_, _>>()?;
    Ok(errs.iter().sum::<f32>() / batch.len() as f32)
}

const CHUNK: usize = 8;

/// Loss and gradient of the mean squared TD error. Dropout is active and
/// seeded per sample from `seed`. Chunks are reduced in a fixed order so the
/// result does not depend on thread scheduling.
pub fn loss_and_gradient(
    online: &ModelParams<f32>,
    batch: &[&Experience],
    targets: &[f32],
    seed: u64,
) -> Result<(f32, ModelParams<f32>)> {
    let n = batch.len() as f32;
    let parts: Vec<(f32, ModelParams<f32>)> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = ModelParams::<f32>::zeros(online.arch);
            let mut loss = 0.0f32;
            for (i, e) in chunk.iter().enumerate() {
                let idx = c * CHUNK + i;
                let (q, cache) = forward_cached(online, &e.state, true, splitmix64(seed ^ idx as u64))?;
                let delta = q.values[e.action] - targets[idx];
                loss += delta * delta;
                let mut dq = vec![0.0f32; online.arch.max_nodes];
                dq[e.action] = 2.0 * delta / n;
                grads.axpy(1.0, &backward(online, &cache, &dq)?);
            }
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;
    let mut total = ModelParams::<f32>::zeros(online.arch);
    let mut loss = 0.0f32;
    for (l, g) in &parts {
        loss += l;
        total.axpy(1.0, g);
    }
    Ok((loss / n, total))
}

/// One plain SGD step `θ ← θ − α·∇L` on `batch`; returns the loss before the
/// update.
pub fn train_step(
    online: &mut ModelParams<f32>,
    target: &ModelParams<f32>,
    batch: &[&Experience],
    config: &TrainerConfig,
    seed: u64,
) -> Result<f32> {
    let targets = td_targets(batch, online, target, config.gamma)?;
    let (loss, grads) = loss_and_gradient(online, batch, &targets, seed)?;
    online.axpy(-(config.learning_rate as f32), &grads);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub epsilon: f64,
    pub loss: f32,
    pub replay_fill: usize,
}

#[derive(Debug, Clone)]
struct AdamState {
    m: ModelParams<f32>,
    v: ModelParams<f32>,
}

/// Replay, target network and optimiser state for the shared policy.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainerConfig,
    pub target: ModelParams<f32>,
    pub replay: Replay,
    /// Training steps taken so far.
    pub steps: u64,
    pub log: Vec<TrainLogRow>,
    rng: ChaCha8Rng,
    dropout_seed: u64,
    adam: Option<AdamState>,
}

impl Trainer {
    pub fn new(config: TrainerConfig, online: &ModelParams<f32>, replay_seed: u64, dropout_seed: u64) -> Self {
        let adam = (config.optimizer == Optimizer::Adam).then(|| AdamState {
            m: ModelParams::zeros(online.arch),
            v: ModelParams::zeros(online.arch),
        });
        Self {
            replay: Replay::new(config.replay_capacity),
            config,
            target: online.clone(),
            steps: 0,
            log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(replay_seed),
            dropout_seed,
            adam,
        }
    }

    /// Samples a batch, takes one optimiser step and syncs the target network
    /// every `target_sync` steps. Returns the pre-update loss.
    pub fn train_step(&mut self, online: &mut ModelParams<f32>, epsilon: f64) -> Result<f32> {
        let batch: Vec<Experience> = self
            .replay
            .sample(self.config.batch_size, &mut self.rng)?
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let loss = self.step_on(online, &refs)?;
        self.log.push(TrainLogRow { step: self.steps, epsilon, loss, replay_fill: self.replay.len() });
        Ok(loss)
    }

    /// One optimiser step on an explicit batch.
    pub fn step_on(&mut self, online: &mut ModelParams<f32>, batch: &[&Experience]) -> Result<f32> {
        let targets = td_targets(batch, online, &self.target, self.config.gamma)?;
        let seed = splitmix64(self.dropout_seed ^ splitmix64(self.steps));
        let (loss, mut grads) = loss_and_gradient(online, batch, &targets, seed)?;
        if self.config.max_grad_norm > 0.0 {
            let norm = (grads.squared_norm() as f64).sqrt();
            if norm > self.config.max_grad_norm {
                grads.scale((self.config.max_grad_norm / norm) as f32);
            }
        }
        let lr = self.config.learning_rate as f32;
        match &mut self.adam {
            None => online.axpy(-lr, &grads),
            Some(AdamState { m, v }) => {
                let (b1, b2, eps) = (0.9f32, 0.999f32, 1e-8f32);
                let t = (self.steps + 1) as i32;
                let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
                let params = online.tensors_mut();
                let ms = m.tensors_mut();
                let vs = v.tensors_mut();
                for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        self.steps += 1;
        if self.steps % self.config.target_sync == 0 {
            self.target = online.clone();
        }
        Ok(loss)
    }

    /// Training log as CSV: `step,epsilon,loss,replay_fill`.
    pub fn write_log(&self, out: impl std::io::Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.log {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
