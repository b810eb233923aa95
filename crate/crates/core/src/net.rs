//! Per-step communication graph: link predicate, rates and topology changes.
//!
//! Node ids: rovers are `0..n`, the lander is `n`.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::world::{line_of_sight, Cell, CellMask, GridMap};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    /// Rover-to-rover range in metres (strict).
    pub d_max_r2r: f64,
    /// Rover-to-lander range in metres (strict).
    pub d_max_r2l: f64,
    /// Packets per step over a rover-to-rover link.
    pub rate_r2r: u32,
    /// Packets per step over a rover-to-lander link.
    pub rate_r2l: u32,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { d_max_r2r: 10.0, d_max_r2l: 15.0, rate_r2r: 2, rate_r2l: 4 }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.d_max_r2r > 0.0) || !(self.d_max_r2l >= self.d_max_r2r) {
            return Err(ConfigError::invalid("net.d_max_r2l", "need 0 < d_max_r2r <= d_max_r2l"));
        }
        if self.rate_r2r == 0 || self.rate_r2l <= self.rate_r2r {
            return Err(ConfigError::invalid("net.rate_r2l", "need 0 < rate_r2r < rate_r2l"));
        }
        Ok(())
    }

    /// `d(a, b) < d_max ∧ clear(a, b)`.
    pub fn link_up(&self, map: &GridMap, a: Cell, b: Cell, lander: bool) -> bool {
        let range = if lander { self.d_max_r2l } else { self.d_max_r2r };
        map.distance_m(a, b) < range && line_of_sight(map, a, b)
    }
}

/// Cells from which a rover has a link to the lander.
pub fn lander_contact_map(map: &GridMap, params: &LinkParams) -> CellMask {
    let mut mask = CellMask::for_map(map);
    for c in map.cells() {
        if params.link_up(map, c, map.lander, true) {
            mask.insert(c);
        }
    }
    mask
}

/// Capacity of an ordered pair for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// `i = j`: packets stay in the buffer.
    Hold,
    Transmit(u32),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSnapshot {
    pub step: u64,
    pub rovers: usize,
    adjacency: Vec<bool>,
    rate_r2r: u32,
    rate_r2l: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotExport {
    pub step: u64,
    pub nodes: usize,
    pub lander: NodeId,
    pub edges: Vec<[NodeId; 2]>,
}

impl NetworkSnapshot {
    /// Snapshot with an explicit edge list (used for replay and tests).
    pub fn from_edges(step: u64, rovers: usize, edges: &[(NodeId, NodeId)], params: &LinkParams) -> Self {
        let n = rovers + 1;
        let mut adjacency = vec![false; n * n];
        for &(i, j) in edges {
            assert!(i < n && j < n && i != j, "bad edge ({i}, {j})");
            adjacency[i * n + j] = true;
            adjacency[j * n + i] = true;
        }
        Self { step, rovers, adjacency, rate_r2r: params.rate_r2r, rate_r2l: params.rate_r2l }
    }

    pub fn node_count(&self) -> usize {
        self.rovers + 1
    }

    pub fn lander(&self) -> NodeId {
        self.rovers
    }

    pub fn is_lander(&self, i: NodeId) -> bool {
        i == self.rovers
    }

    pub fn has_edge(&self, i: NodeId, j: NodeId) -> bool {
        i != j && self.adjacency[i * self.node_count() + j]
    }

    /// Neighbours of `i` in ascending id order (the lander comes last).
    pub fn neighbours(&self, i: NodeId) -> Vec<NodeId> {
        (0..self.node_count()).filter(|&j| self.has_edge(i, j)).collect()
    }

    /// Unordered edges `(i, j)` with `i < j`, ascending.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let n = self.node_count();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| self.has_edge(i, j)).collect()
    }

    pub fn link(&self, i: NodeId, j: NodeId) -> Link {
        if i == j {
            Link::Hold
        } else if !self.has_edge(i, j) {
            Link::None
        } else if self.is_lander(i) || self.is_lander(j) {
            Link::Transmit(self.rate_r2l)
        } else {
            Link::Transmit(self.rate_r2r)
        }
    }

    /// Packets per step from `i` to `j`; 0 without an edge. Holding is not a
    /// transmission and also reports 0 (see [`NetworkSnapshot::link`]).
    pub fn link_rate(&self, i: NodeId, j: NodeId) -> u32 {
        match self.link(i, j) {
            Link::Transmit(r) => r,
            Link::Hold | Link::None => 0,
        }
    }

    pub fn export(&self) -> SnapshotExport {
        SnapshotExport {
            step: self.step,
            nodes: self.node_count(),
            lander: self.lander(),
            edges: self.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

/// Builds the graph for rover `positions`; the lander sits at `map.lander`.
pub fn build_snapshot(step: u64, positions: &[Cell], map: &GridMap, params: &LinkParams) -> NetworkSnapshot {
    let rovers = positions.len();
    let n = rovers + 1;
    let at = |i: NodeId| if i == rovers { map.lander } else { positions[i] };
    let mut adjacency = vec![false; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if params.link_up(map, at(i), at(j), j == rovers) {
                adjacency[i * n + j] = true;
                adjacency[j * n + i] = true;
            }
        }
    }
    NetworkSnapshot { step, rovers, adjacency, rate_r2r: params.rate_r2r, rate_r2l: params.rate_r2l }
}

/// 1 if the edge sets differ, else 0.
pub fn count_topology_changes(prev: &NetworkSnapshot, cur: &NetworkSnapshot) -> u32 {
    assert_eq!(prev.rovers, cur.rovers, "snapshots over different node sets");
    u32::from(prev.adjacency != cur.adjacency)
}
