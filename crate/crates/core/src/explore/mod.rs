//! Multi-rover frontier exploration: region partitioning and assignment,
//! frontier selection, motion, and the lander-contact (TTL) forecast.
//!
//! Rovers plan on the ground-truth inflated grid (orbital maps are assumed
//! available); exploration is about classifying cells by sensing them. A
//! rover's explored mask only covers its own region's reachable cells and
//! only that rover writes to it, so a rover can replay its own future exactly.
//! The TTL forecast relies on this.

mod assign;
mod kmeans;
mod path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use assign::{assign_regions_hungarian, hungarian};
pub use kmeans::{partition_kmeans, within_cluster_sse, SubRegion};
pub use path::{plan_path, BfsTree};

use crate::error::ConfigError;
use crate::world::{reachable_cells, Cell, CellMask, GridMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationConfig {
    /// Weight on the Manhattan distance to a frontier.
    pub w1: f64,
    /// Weight on the information gain along the path to a frontier.
    pub w2: f64,
    /// Chebyshev sensing radius in cells.
    pub sensor_radius: u32,
    /// Number of upcoming objectives covered by the TTL forecast (O).
    pub objective_horizon: usize,
    /// TTL cap in steps (T_max).
    pub ttl_cap: u32,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self { w1: 1.0, w2: 0.25, sensor_radius: 2, objective_horizon: 1, ttl_cap: 100 }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(ConfigError::invalid("explore.w1", "weights must be non-negative"));
        }
        if self.objective_horizon < 1 {
            return Err(ConfigError::invalid("explore.objective_horizon", "must be at least 1"));
        }
        if self.ttl_cap < 1 {
            return Err(ConfigError::invalid("explore.ttl_cap", "must be at least 1"));
        }
        Ok(())
    }
}

/// `w1·d − w2·n`; lower is better.
pub fn score_frontier(config: &ExplorationConfig, distance: u32, gain: u32) -> f64 {
    config.w1 * distance as f64 - config.w2 * gain as f64
}

/// What a rover can see of its own task: the reachable cells of its region and
/// which of them it has classified so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionView {
    pub targets: CellMask,
    pub explored: CellMask,
}

impl RegionView {
    /// Marks the region cells within `radius` of `at`; returns how many were new.
    pub fn sense(&mut self, at: Cell, radius: u32) -> usize {
        let r = radius as i32;
        let mut fresh = 0;
        for dx in -r..=r {
            for dy in -r..=r {
                let c = Cell::new(at.x + dx, at.y + dy);
                if self.targets.contains(c) && self.explored.insert(c) {
                    fresh += 1;
                }
            }
        }
        fresh
    }

    pub fn is_complete(&self) -> bool {
        self.targets.is_subset(&self.explored)
    }
}

/// Unexplored region cells 4-adjacent to an explored cell or to a reachable
/// cell outside the region, and reachable from the tree root. Sorted by
/// `(x, y)`.
///
/// The second anchor lets a rover find parts of its region that are only
/// connected through a neighbouring region.
pub fn detect_frontiers(view: &RegionView, reachable: &CellMask, tree: &BfsTree) -> Vec<Cell> {
    view.targets
        .iter()
        .filter(|&c| !view.explored.contains(c) && tree.reaches(c))
        .filter(|&c| {
            c.neighbours4()
                .iter()
                .any(|&n| view.explored.contains(n) || (reachable.contains(n) && !view.targets.contains(n)))
        })
        .collect()
}

/// Unexplored region cells within `radius` of any cell of `path`.
pub fn path_gain(view: &RegionView, path: &[Cell], radius: u32, stamp: &mut CellMask) -> u32 {
    let r = radius as i32;
    let mut gain = 0;
    for &p in path {
        for dx in -r..=r {
            for dy in -r..=r {
                let c = Cell::new(p.x + dx, p.y + dy);
                if view.targets.contains(c) && !view.explored.contains(c) && stamp.insert(c) {
                    gain += 1;
                }
            }
        }
    }
    for &p in path {
        for dx in -r..=r {
            for dy in -r..=r {
                stamp.remove(Cell::new(p.x + dx, p.y + dy));
            }
        }
    }
    gain
}

/// Picks the minimum-score reachable frontier (ties: lowest `(x, y)`) and the
/// BFS path to it, starting at `from`.
pub fn select_objective(
    map: &GridMap,
    reachable: &CellMask,
    view: &RegionView,
    from: Cell,
    config: &ExplorationConfig,
) -> Option<(Cell, Vec<Cell>)> {
    let tree = BfsTree::new(map, from);
    let mut stamp = CellMask::for_map(map);
    let mut best: Option<(f64, Cell, Vec<Cell>)> = None;
    for f in detect_frontiers(view, reachable, &tree) {
        let path = tree.path_to(f);
        let score = score_frontier(config, from.manhattan(f), path_gain(view, &path, config.sensor_radius, &mut stamp));
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, f, path));
        }
    }
    best.map(|(_, f, path)| (f, path))
}

/// Future positions of a rover that follows its plan through `horizon`
/// objectives, re-selecting frontiers greedily on a copy of its explored mask.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Forecast {
    /// First objective and the full path to it (starting at `from`).
    pub first: Option<(Cell, Vec<Cell>)>,
    /// Positions occupied at the following steps, one per step.
    pub positions: Vec<Cell>,
    /// True if the rover runs out of frontiers inside the horizon and stays put
    /// afterwards.
    pub ends_idle: bool,
}

pub fn forecast_path(
    map: &GridMap,
    reachable: &CellMask,
    view: &RegionView,
    from: Cell,
    config: &ExplorationConfig,
) -> Forecast {
    let mut sim = view.clone();
    let mut at = from;
    let mut out = Forecast::default();
    for k in 0..config.objective_horizon {
        let Some((objective, path)) = select_objective(map, reachable, &sim, at, config) else {
            out.ends_idle = true;
            break;
        };
        for &c in &path[1..] {
            sim.sense(c, config.sensor_radius);
            out.positions.push(c);
        }
        at = objective;
        if k == 0 {
            out.first = Some((objective, path));
        }
    }
    out
}

/// Counts lander contacts over the next `cap` positions. When `pad` is set the
/// rover is assumed to stay at the last position once the list runs out.
pub fn count_contacts(positions: &[Cell], current: Cell, pad: bool, contact: &CellMask, cap: u32) -> u32 {
    let cap = cap as usize;
    let mut n = positions.iter().take(cap).filter(|&&c| contact.contains(c)).count();
    if pad && positions.len() < cap && contact.contains(*positions.last().unwrap_or(&current)) {
        n += cap - positions.len();
    }
    n as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoverMode {
    Exploring,
    /// No frontier left in the rover's region.
    Idle,
    Returning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoverState {
    pub id: usize,
    pub position: Cell,
    pub region: usize,
    pub view: RegionView,
    pub objective: Option<Cell>,
    /// Cells still to enter, in order; the objective (or lander) is last.
    pub path: Vec<Cell>,
    pub mode: RoverMode,
    forecast: Forecast,
    cursor: usize,
}

impl RoverState {
    /// Positions the rover expects to occupy at the coming steps.
    pub fn future_positions(&self) -> &[Cell] {
        match self.mode {
            RoverMode::Exploring => &self.forecast.positions[self.cursor..],
            RoverMode::Returning => &self.path,
            RoverMode::Idle => &[],
        }
    }

    /// Forecast count of future steps with a lander link, capped at `cap`.
    pub fn ttl(&self, contact: &CellMask, cap: u32) -> u32 {
        let pad = self.mode != RoverMode::Exploring || self.forecast.ends_idle;
        count_contacts(self.future_positions(), self.position, pad, contact, cap)
    }

    fn choose_next(&mut self, map: &GridMap, reachable: &CellMask, config: &ExplorationConfig) {
        let forecast = forecast_path(map, reachable, &self.view, self.position, config);
        match &forecast.first {
            Some((objective, path)) => {
                self.objective = Some(*objective);
                self.path = path[1..].to_vec();
                self.mode = RoverMode::Exploring;
            }
            None => {
                self.objective = None;
                self.path.clear();
                self.mode = RoverMode::Idle;
            }
        }
        self.forecast = forecast;
        self.cursor = 0;
    }
}

/// Episode-level exploration driver.
#[derive(Debug, Clone)]
pub struct Explorer {
    pub config: ExplorationConfig,
    pub regions: Vec<SubRegion>,
    pub rovers: Vec<RoverState>,
    pub reachable: CellMask,
    returning: bool,
}

impl Explorer {
    /// Partitions the map into one region per rover, assigns regions, places
    /// every rover on the lander and picks first objectives.
    pub fn new(map: &GridMap, rover_count: usize, config: ExplorationConfig, rng: &mut impl Rng) -> Result<Self, ConfigError> {
        config.validate()?;
        if rover_count == 0 {
            return Err(ConfigError::invalid("run.rovers", "need at least one rover"));
        }
        let reachable = reachable_cells(map, map.lander);
        let regions = partition_kmeans(map, rover_count, rng);
        let start = (map.lander.x as f64, map.lander.y as f64);
        let centroids: Vec<(f64, f64)> = regions.iter().map(|r| r.centroid).collect();
        let assignment = assign_regions_hungarian(&vec![start; rover_count], &centroids);
        let rovers = assignment
            .iter()
            .enumerate()
            .map(|(id, &region)| {
                let mut view = RegionView {
                    targets: regions[region].cells.intersection(&reachable),
                    explored: CellMask::for_map(map),
                };
                view.sense(map.lander, config.sensor_radius);
                let mut rover = RoverState {
                    id,
                    position: map.lander,
                    region,
                    view,
                    objective: None,
                    path: Vec::new(),
                    mode: RoverMode::Idle,
                    forecast: Forecast::default(),
                    cursor: 0,
                };
                rover.choose_next(map, &reachable, &config);
                rover
            })
            .collect();
        Ok(Self { config, regions, rovers, reachable, returning: false })
    }

    /// Advances every rover by one cell. Exploring rovers sense after moving
    /// and pick their next objective on arrival.
    pub fn step(&mut self, map: &GridMap) {
        for rover in &mut self.rovers {
            match rover.mode {
                RoverMode::Idle => {}
                RoverMode::Returning => {
                    if !rover.path.is_empty() {
                        rover.position = rover.path.remove(0);
                    }
                }
                RoverMode::Exploring => {
                    rover.position = rover.path.remove(0);
                    rover.cursor += 1;
                    rover.view.sense(rover.position, self.config.sensor_radius);
                    if rover.path.is_empty() {
                        rover.choose_next(map, &self.reachable, &self.config);
                    }
                }
            }
        }
    }

    /// True once no rover has a frontier left.
    pub fn exploration_complete(&self) -> bool {
        self.rovers.iter().all(|r| r.mode != RoverMode::Exploring)
    }

    /// Sends every rover home along an A* path.
    pub fn begin_return(&mut self, map: &GridMap) {
        self.returning = true;
        for rover in &mut self.rovers {
            let path = plan_path(map, rover.position, map.lander);
            rover.path = path.into_iter().skip(1).collect();
            rover.objective = Some(map.lander);
            rover.mode = RoverMode::Returning;
        }
    }

    pub fn is_returning(&self) -> bool {
        self.returning
    }

    pub fn all_home(&self, map: &GridMap) -> bool {
        self.rovers.iter().all(|r| r.position == map.lander)
    }

    pub fn positions(&self) -> Vec<Cell> {
        self.rovers.iter().map(|r| r.position).collect()
    }

    /// Union of all rovers' explored cells.
    pub fn explored(&self, map: &GridMap) -> CellMask {
        let mut all = CellMask::for_map(map);
        self.rovers.iter().for_each(|r| all.union_with(&r.view.explored));
        all
    }

    /// Union of all rovers' reachable region cells.
    pub fn targets(&self, map: &GridMap) -> CellMask {
        let mut all = CellMask::for_map(map);
        self.rovers.iter().for_each(|r| all.union_with(&r.view.targets));
        all
    }
}
