use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result, SimError};
use crate::explore::{ExplorationConfig, Explorer};
use crate::net::{build_snapshot, count_topology_changes, lander_contact_map, LinkParams, NetworkSnapshot, NodeId};
use crate::policies::{DecisionView, Directive, NodeInfo, RoutingPolicy};
use crate::traffic::{generation_due, Buffer, Fate, Packet, PacketFactory, PacketLedger};
use crate::world::{generate_map, CellMask, GridMap, ObstacleModel};

/// Everything needed to run one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub width: usize,
    pub height: usize,
    /// Metres per cell.
    pub resolution: f64,
    pub obstacles: ObstacleModel,
    pub rovers: usize,
    pub link: LinkParams,
    pub explore: ExplorationConfig,
    /// Packet generation interval F, in steps.
    pub interval: u64,
    /// Rover buffer capacity B, in packets.
    pub buffer_capacity: usize,
    /// Seeds region partitioning.
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            width: 40,
            height: 40,
            resolution: 1.0,
            obstacles: ObstacleModel::default(),
            rovers: 3,
            link: LinkParams::default(),
            explore: ExplorationConfig::default(),
            interval: 1,
            buffer_capacity: 50,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.rovers == 0 {
            return Err(ConfigError::invalid("run.rovers", "need at least one rover"));
        }
        if self.interval == 0 {
            return Err(ConfigError::invalid("traffic.interval", "must be >= 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(ConfigError::invalid("traffic.buffer_capacity", "must be >= 1"));
        }
        self.link.validate()?;
        self.explore.validate()?;
        self.obstacles.validate()
    }
}

/// Per-episode outcome. `created + copies = delivered_unique + duplicates +
/// dropped + still_buffered` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub policy: String,
    pub seed: u64,
    pub rovers: usize,
    pub created: u64,
    pub delivered_unique: u64,
    pub duplicates: u64,
    pub dropped: u64,
    pub ratio: f64,
    pub topology_changes: u64,
    pub steps: u64,
    pub still_buffered: u64,
    pub copies: u64,
    pub exploration_steps: u64,
    pub width: usize,
    pub height: usize,
}

/// One directive as executed, for traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub from: NodeId,
    pub to: NodeId,
    pub packets: usize,
    pub spray: bool,
}

/// Everything that happened in one step, with cumulative counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub positions: Vec<[i32; 2]>,
    pub edges: Vec<[NodeId; 2]>,
    pub ttl: Vec<u32>,
    pub transmissions: Vec<Transmission>,
    pub buffers: Vec<usize>,
    pub returning: bool,
    pub created: u64,
    pub copies: u64,
    pub delivered_unique: u64,
    pub duplicates: u64,
    pub dropped: u64,
}

/// Stepwise episode driver.
#[derive(Debug, Clone)]
pub struct Episode {
    pub config: EpisodeConfig,
    pub map: GridMap,
    pub explorer: Explorer,
    contact: CellMask,
    /// Rover buffers by id, then the lander's sink.
    pub buffers: Vec<Buffer>,
    pub ledger: PacketLedger,
    factory: PacketFactory,
    delivered: HashSet<u64>,
    nodes: Vec<NodeInfo>,
    prev: Option<NetworkSnapshot>,
    pub step: u64,
    exploration_steps: Option<u64>,
    done: bool,
    created: u64,
    copies: u64,
    unique: u64,
    duplicates: u64,
    dropped: u64,
    topology_changes: u64,
}

fn split_pair(buffers: &mut [Buffer], i: usize, j: usize) -> (&mut Buffer, &mut Buffer) {
    assert_ne!(i, j);
    if i < j {
        let (a, b) = buffers.split_at_mut(j);
        (&mut a[i], &mut b[0])
    } else {
        let (a, b) = buffers.split_at_mut(i);
        (&mut b[0], &mut a[j])
    }
}

impl Episode {
    pub fn new(config: &EpisodeConfig) -> Result<Self> {
        config.validate()?;
        let map = generate_map(&config.obstacles, config.width, config.height, config.resolution)?;
        let traversable = map.cells().filter(|&c| map.is_traversable(c)).count();
        if traversable < config.rovers {
            return Err(ConfigError::invalid("run.rovers", "more rovers than traversable cells").into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let explorer = Explorer::new(&map, config.rovers, config.explore.clone(), &mut rng)?;
        let contact = lander_contact_map(&map, &config.link);
        let mut buffers: Vec<Buffer> = (0..config.rovers).map(|_| Buffer::bounded(config.buffer_capacity)).collect();
        buffers.push(Buffer::unbounded());
        let nodes = explorer
            .rovers
            .iter()
            .map(|r| {
                let (cx, cy) = explorer.regions[r.region].centroid;
                let dx = cx - map.lander.x as f64;
                let dy = cy - map.lander.y as f64;
                NodeInfo { region_dist_m: dx.hypot(dy) * map.resolution, lander_dist_m: 0.0 }
            })
            .chain(std::iter::once(NodeInfo::default()))
            .collect();
        Ok(Self {
            config: config.clone(),
            map,
            explorer,
            contact,
            buffers,
            ledger: PacketLedger::default(),
            factory: PacketFactory::default(),
            delivered: HashSet::new(),
            nodes,
            prev: None,
            step: 0,
            exploration_steps: None,
            done: false,
            created: 0,
            copies: 0,
            unique: 0,
            duplicates: 0,
            dropped: 0,
            topology_changes: 0,
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn lander(&self) -> NodeId {
        self.config.rovers
    }

    /// Forecast lander contacts per node; the lander reports the cap.
    pub fn ttl(&self) -> Vec<u32> {
        let cap = self.config.explore.ttl_cap;
        self.explorer.rovers.iter().map(|r| r.ttl(&self.contact, cap)).chain(std::iter::once(cap)).collect()
    }

    fn exploration_cap(&self) -> u64 {
        20 * self.map.cell_count() as u64
    }

    fn violation(&self, message: String) -> SimError {
        SimError::ConstraintViolation { step: self.step, message }
    }

    fn deliver(&mut self, p: Packet) {
        if self.delivered.insert(p.lineage) {
            self.unique += 1;
        } else {
            self.duplicates += 1;
        }
        self.ledger.record(&p, Fate::Delivered, self.step);
    }

    fn drop_packet(&mut self, p: &Packet) {
        self.dropped += 1;
        self.ledger.record(p, Fate::Dropped, self.step);
    }

    fn execute(&mut self, rover: NodeId, d: Directive, snapshot: &NetworkSnapshot) -> Result<()> {
        let lander = self.lander();
        let to = d.target();
        if to == rover || to > lander {
            return Err(self.violation(format!("rover {rover} directed packets to invalid node {to}")));
        }
        match d {
            Directive::Forward { count, .. } => {
                let ready = self.buffers[rover].ready_count(self.step);
                if count > ready {
                    return Err(self.violation(format!("rover {rover} forwards {count} packets but has {ready} ready")));
                }
                let step = self.step;
                let (src, dst) = split_pair(&mut self.buffers, rover, to);
                let (moved, lost) = crate::traffic::transfer(src, dst, count, step);
                if to == lander {
                    // the sink keeps everything; record fates
                    for p in moved {
                        self.deliver(p);
                    }
                }
                for p in &lost {
                    self.drop_packet(p);
                }
            }
            Directive::Spray { packet, .. } => {
                let ready = self.buffers[rover].ready_count(self.step);
                let Some(idx) = self.buffers[rover].iter().take(ready).position(|p| p.id == packet) else {
                    return Err(self.violation(format!("rover {rover} sprays unknown or unready packet {packet}")));
                };
                let parent = self.buffers[rover].iter_mut().nth(idx).expect("index in range");
                let l = parent.copies.unwrap_or(1);
                if l < 2 {
                    return Err(self.violation(format!("rover {rover} sprays packet {packet} with L = {l}")));
                }
                let child = l / 2;
                parent.copies = Some(l - child);
                let parent = parent.clone();
                let mut copy = self.factory.copy_of(&parent, child);
                copy.hops += 1;
                copy.ready_at = self.step + 1;
                self.copies += 1;
                if to == lander {
                    self.buffers[lander].enqueue(copy.clone());
                    self.deliver(copy);
                } else if let Some(lost) = self.buffers[to].enqueue(copy) {
                    self.drop_packet(&lost);
                }
            }
        }
        let _ = snapshot;
        Ok(())
    }

    /// Runs one step of the episode loop.
    pub fn step(&mut self, policy: &mut dyn RoutingPolicy) -> Result<StepRecord> {
        if self.done {
            return Err(self.violation("episode already finished".into()));
        }
        let t = self.step;
        let lander = self.lander();

        // motion
        self.explorer.step(&self.map);
        if !self.explorer.is_returning() && (self.explorer.exploration_complete() || t >= self.exploration_cap()) {
            self.exploration_steps = Some(t);
            self.explorer.begin_return(&self.map);
        }
        let positions = self.explorer.positions();
        for (info, p) in self.nodes.iter_mut().zip(&positions) {
            *info = NodeInfo { lander_dist_m: self.map.distance_m(*p, self.map.lander), ..*info };
        }

        // network
        let snapshot = build_snapshot(t, &positions, &self.map, &self.config.link);
        if let Some(prev) = &self.prev {
            self.topology_changes += count_topology_changes(prev, &snapshot) as u64;
        }

        // traffic
        if !self.explorer.is_returning() && generation_due(t, self.config.interval) {
            let copies = policy.initial_copies(self.config.rovers);
            for r in 0..self.config.rovers {
                let p = self.factory.original(r, t, copies);
                self.created += 1;
                if let Some(lost) = self.buffers[r].enqueue(p) {
                    self.drop_packet(&lost);
                }
            }
        }

        // decisions, ascending rover id, applied immediately
        let ttl = self.ttl();
        let mut flows: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
        let mut transmissions = Vec::new();
        for r in 0..self.config.rovers {
            let directives = {
                let view = DecisionView {
                    step: t,
                    rover: r,
                    snapshot: &snapshot,
                    buffers: &self.buffers,
                    ttl: &ttl,
                    nodes: &self.nodes,
                    ttl_cap: self.config.explore.ttl_cap,
                    buffer_capacity: self.config.buffer_capacity,
                    map_diagonal_m: self.map.diagonal_m(),
                };
                policy.decide(&view)?
            };
            for d in directives {
                let to = d.target();
                let f = flows.entry((r, to)).or_default();
                *f += d.packets();
                let rate = snapshot.link_rate(r, to) as usize;
                if *f > rate {
                    return Err(self.violation(format!("flow {r}->{to} carries {f} packets, rate is {rate}")));
                }
                self.execute(r, d, &snapshot)?;
                transmissions.push(Transmission {
                    from: r,
                    to,
                    packets: d.packets(),
                    spray: matches!(d, Directive::Spray { .. }),
                });
            }
        }
        policy.end_step(t)?;

        // buffer bound
        for (r, b) in self.buffers[..lander].iter().enumerate() {
            if b.len() > self.config.buffer_capacity {
                return Err(self.violation(format!("rover {r} holds {} packets, capacity {}", b.len(), self.config.buffer_capacity)));
            }
        }

        let record = StepRecord {
            step: t,
            positions: positions.iter().map(|c| [c.x, c.y]).collect(),
            edges: snapshot.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            ttl,
            transmissions,
            buffers: self.buffers.iter().map(Buffer::len).collect(),
            returning: self.explorer.is_returning(),
            created: self.created,
            copies: self.copies,
            delivered_unique: self.unique,
            duplicates: self.duplicates,
            dropped: self.dropped,
        };
        self.prev = Some(snapshot);
        self.step += 1;

        if let Some(explored) = self.exploration_steps {
            let drained = self.buffers[..lander].iter().all(Buffer::is_empty);
            if drained || self.step >= 3 * explored.max(1) {
                self.done = true;
            }
        }
        Ok(record)
    }

    /// Final metrics; packets left in rover buffers are recorded as buffered.
    pub fn finish(&mut self, policy: &str) -> EpisodeMetrics {
        let lander = self.lander();
        let mut still = 0;
        let leftovers: Vec<Packet> = self.buffers[..lander].iter().flat_map(|b| b.iter().cloned()).collect();
        for p in &leftovers {
            self.ledger.record(p, Fate::Buffered, self.step);
            still += 1;
        }
        EpisodeMetrics {
            policy: policy.to_string(),
            seed: self.config.obstacles.seed,
            rovers: self.config.rovers,
            created: self.created,
            delivered_unique: self.unique,
            duplicates: self.duplicates,
            dropped: self.dropped,
            ratio: if self.created == 0 { 0.0 } else { self.unique as f64 / self.created as f64 },
            topology_changes: self.topology_changes,
            steps: self.step,
            still_buffered: still,
            copies: self.copies,
            exploration_steps: self.exploration_steps.unwrap_or(self.step),
            width: self.config.width,
            height: self.config.height,
        }
    }
}

/// Runs an episode to completion with `policy`.
pub fn run_episode(config: &EpisodeConfig, policy: &mut dyn RoutingPolicy) -> Result<EpisodeMetrics> {
    run_episode_traced(config, policy, |_| Ok(()))
}

/// Like [`run_episode`], handing every step record to `on_step`.
pub fn run_episode_traced(
    config: &EpisodeConfig,
    policy: &mut dyn RoutingPolicy,
    mut on_step: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<EpisodeMetrics> {
    let mut ep = Episode::new(config)?;
    while !ep.is_done() {
        let record = ep.step(policy)?;
        on_step(&record)?;
    }
    policy.end_episode();
    Ok(ep.finish(policy.name()))
}
