//! Routing-decision interface and the non-learned policies.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::net::{NetworkSnapshot, NodeId};
use crate::traffic::Buffer;

/// Static per-node context used to build observations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeInfo {
    /// Distance from the node's region centroid to the lander, metres.
    pub region_dist_m: f64,
    /// Distance from the node to the lander, metres.
    pub lander_dist_m: f64,
}

/// Everything a deciding rover may look at. Local policies restrict
/// themselves to the rover's own neighbourhood; Greedy reads the whole
/// snapshot.
#[derive(Debug, Clone, Copy)]
pub struct DecisionView<'a> {
    pub step: u64,
    pub rover: NodeId,
    pub snapshot: &'a NetworkSnapshot,
    /// Indexed by node id; the lander's buffer is last.
    pub buffers: &'a [Buffer],
    /// Forecast lander contacts per node; the lander reports `ttl_cap`.
    pub ttl: &'a [u32],
    pub nodes: &'a [NodeInfo],
    pub ttl_cap: u32,
    pub buffer_capacity: usize,
    pub map_diagonal_m: f64,
}

impl DecisionView<'_> {
    /// Packets the rover may forward this step (a FIFO prefix).
    pub fn ready(&self) -> usize {
        self.buffers[self.rover].ready_count(self.step)
    }

    pub fn lander(&self) -> NodeId {
        self.snapshot.lander()
    }

    pub fn neighbours(&self) -> Vec<NodeId> {
        self.snapshot.neighbours(self.rover)
    }

    /// Forward directive for the FIFO head batch `min(rate, ready)`, or hold
    /// when that is empty or `to` is the rover itself.
    pub fn forward_batch(&self, to: NodeId) -> Vec<Directive> {
        if to == self.rover {
            return Vec::new();
        }
        let count = (self.snapshot.link_rate(self.rover, to) as usize).min(self.ready());
        if count == 0 {
            Vec::new()
        } else {
            vec![Directive::Forward { to, count }]
        }
    }
}

/// One transmission order. An empty directive list means hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    /// Send the `count` oldest ready packets to `to`.
    Forward { to: NodeId, count: usize },
    /// Hand a copy of packet `packet` to `to`, splitting its copy counter.
    Spray { to: NodeId, packet: u64 },
}

impl Directive {
    pub fn target(&self) -> NodeId {
        match *self {
            Directive::Forward { to, .. } | Directive::Spray { to, .. } => to,
        }
    }

    pub fn packets(&self) -> usize {
        match *self {
            Directive::Forward { count, .. } => count,
            Directive::Spray { .. } => 1,
        }
    }
}

pub trait RoutingPolicy {
    /// Recorded in result files.
    fn name(&self) -> &'static str;

    /// Initial copy counter for generated packets, if the policy uses one.
    fn initial_copies(&self, _rovers: usize) -> Option<u32> {
        None
    }

    /// Called once per rover per step, in ascending rover id.
    fn decide(&mut self, view: &DecisionView<'_>) -> Result<Vec<Directive>>;

    /// Called after every rover has acted and transfers are applied.
    fn end_step(&mut self, _step: u64) -> Result<()> {
        Ok(())
    }

    fn end_episode(&mut self) {}
}

/// Uniform choice over the neighbourhood plus self.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Draws one target from `{self} ∪ N_r`.
    pub fn choose(&mut self, rover: NodeId, neighbours: &[NodeId]) -> NodeId {
        let k = self.rng.gen_range(0..=neighbours.len());
        if k == 0 {
            rover
        } else {
            neighbours[k - 1]
        }
    }
}

impl RoutingPolicy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn decide(&mut self, view: &DecisionView<'_>) -> Result<Vec<Directive>> {
        let target = self.choose(view.rover, &view.neighbours());
        Ok(view.forward_batch(target))
    }
}

/// `⌈√rovers⌉`.
pub fn snw_initial_copies(rovers: usize) -> u32 {
    let mut l = 1u32;
    while (l as usize) * (l as usize) < rovers {
        l += 1;
    }
    l
}

/// Binary Spray-and-Wait with direct delivery whenever the lander is in range.
#[derive(Debug, Clone, Default)]
pub struct SprayAndWait;

impl SprayAndWait {
    /// Copy counter split for one spray: `(child, parent)`.
    pub fn split(l: u32) -> (u32, u32) {
        let child = l / 2;
        (child, l - child)
    }
}

impl RoutingPolicy for SprayAndWait {
    fn name(&self) -> &'static str {
        "snw"
    }

    fn initial_copies(&self, rovers: usize) -> Option<u32> {
        Some(snw_initial_copies(rovers))
    }

    fn decide(&mut self, view: &DecisionView<'_>) -> Result<Vec<Directive>> {
        let neighbours = view.neighbours();
        let lander = view.lander();
        if neighbours.contains(&lander) {
            return Ok(view.forward_batch(lander));
        }
        let own = &view.buffers[view.rover];
        let ready: Vec<_> = own.iter().take(view.ready()).collect();
        // counters as they evolve through this step's sprays
        let mut counters: HashMap<u64, u32> = ready.iter().map(|p| (p.id, p.copies.unwrap_or(1))).collect();
        let mut out = Vec::new();
        for &j in &neighbours {
            let dst = &view.buffers[j];
            let room = dst.capacity().map_or(usize::MAX, |c| c.saturating_sub(dst.len()));
            let budget = (view.snapshot.link_rate(view.rover, j) as usize).min(room);
            let mut sent = 0;
            for p in &ready {
                if sent == budget {
                    break;
                }
                let l = counters[&p.id];
                if l > 1 && !dst.holds_lineage(p.lineage) {
                    let (_, parent) = Self::split(l);
                    counters.insert(p.id, parent);
                    out.push(Directive::Spray { to: j, packet: p.id });
                    sent += 1;
                }
            }
        }
        Ok(out)
    }
}

/// Hop counts to the lander over the snapshot (`None` = unreachable).
pub fn hops_to_lander(snapshot: &NetworkSnapshot) -> Vec<Option<u32>> {
    let n = snapshot.node_count();
    let mut dist = vec![None; n];
    let lander = snapshot.lander();
    dist[lander] = Some(0);
    let mut queue = VecDeque::from([lander]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for v in snapshot.neighbours(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Lowest-id neighbour on a minimum-hop path to the lander.
pub fn greedy_first_hop(snapshot: &NetworkSnapshot, from: NodeId) -> Option<NodeId> {
    let dist = hops_to_lander(snapshot);
    let d = dist[from]?;
    if d == 0 {
        return None;
    }
    snapshot.neighbours(from).into_iter().find(|&v| dist[v] == Some(d - 1))
}

/// Shortest-path forwarding on the current global snapshot.
#[derive(Debug, Clone, Default)]
pub struct Greedy;

impl RoutingPolicy for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn decide(&mut self, view: &DecisionView<'_>) -> Result<Vec<Directive>> {
        Ok(match greedy_first_hop(view.snapshot, view.rover) {
            Some(hop) => view.forward_batch(hop),
            None => Vec::new(),
        })
    }
}
