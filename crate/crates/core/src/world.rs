//! Exploration map: obstacle layout, footprint inflation, line of sight and
//! reachability.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Grid cell coordinate. Ordering is by `x`, then `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn chebyshev(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    /// Euclidean distance between cell centres, in cells.
    pub fn euclidean(self, other: Cell) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        dx.hypot(dy)
    }

    /// 4-connected neighbours in the fixed order -x, -y, +y, +x (ascending
    /// `(x, y)` order).
    pub fn neighbours4(self) -> [Cell; 4] {
        [
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x, self.y - 1),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x + 1, self.y),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terrain {
    Traversable,
    Obstacle,
}

/// Dense per-cell boolean set over a map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn for_map(map: &GridMap) -> Self {
        Self::new(map.width, map.height)
    }

    fn index(&self, c: Cell) -> Option<usize> {
        (c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height)
            .then(|| c.y as usize * self.width + c.x as usize)
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.index(c).is_some_and(|i| self.bits[i])
    }

    /// Returns true if the cell was newly inserted.
    pub fn insert(&mut self, c: Cell) -> bool {
        match self.index(c) {
            Some(i) if !self.bits[i] => {
                self.bits[i] = true;
                true
            }
            _ => false,
        }
    }

    pub fn remove(&mut self, c: Cell) {
        if let Some(i) = self.index(c) {
            self.bits[i] = false;
        }
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Members in ascending `(x, y)` order.
    pub fn iter(&self) -> impl Iterator<Item = Cell> + '_ {
        let (w, h) = (self.width as i32, self.height as i32);
        (0..w).flat_map(move |x| (0..h).map(move |y| Cell::new(x, y))).filter(|&c| self.contains(c))
    }

    pub fn intersection(&self, other: &CellMask) -> CellMask {
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(&other.bits) {
            *a = *a && *b;
        }
        out
    }

    pub fn union_with(&mut self, other: &CellMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a = *a || *b;
        }
    }

    pub fn is_subset(&self, other: &CellMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Obstacle placement parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleModel {
    /// Target fraction of cells covered by obstacles, in `[0, 1)`.
    pub density: f64,
    /// `(radius in cells, weight)` pairs; weights need not be normalised.
    pub radius_distribution: Vec<(u32, f64)>,
    pub seed: u64,
    /// Chebyshev radius by which obstacles are grown for collision checks.
    pub inflation_radius: u32,
    pub max_retries: u32,
}

impl Default for ObstacleModel {
    fn default() -> Self {
        Self {
            density: 0.12,
            radius_distribution: vec![(1, 0.7), (2, 0.25), (3, 0.05)],
            seed: 0,
            inflation_radius: 1,
            max_retries: 20,
        }
    }
}

impl ObstacleModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.density) {
            return Err(ConfigError::invalid("world.density", "must lie in [0, 1)"));
        }
        if self.radius_distribution.is_empty()
            || self.radius_distribution.iter().any(|&(r, w)| r < 1 || !(w >= 0.0))
            || self.radius_distribution.iter().map(|&(_, w)| w).sum::<f64>() <= 0.0
        {
            return Err(ConfigError::invalid(
                "world.radius_distribution",
                "needs radii >= 1 and non-negative weights with a positive sum",
            ));
        }
        Ok(())
    }

    fn sample_radius(&self, rng: &mut impl Rng) -> u32 {
        let total: f64 = self.radius_distribution.iter().map(|&(_, w)| w).sum();
        let mut u = rng.gen::<f64>() * total;
        for &(r, w) in &self.radius_distribution {
            if u < w {
                return r;
            }
            u -= w;
        }
        self.radius_distribution.last().map(|&(r, _)| r).unwrap_or(1)
    }
}

/// Ground-truth exploration map.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    /// Metres per cell.
    pub resolution: f64,
    truth: Vec<Terrain>,
    inflated: Vec<bool>,
    pub lander: Cell,
    pub inflation_radius: u32,
}

/// JSON form of a map for debugging and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapExport {
    pub width: usize,
    pub height: usize,
    pub rho: f64,
    pub lander: [i32; 2],
    pub obstacles: Vec<[i32; 2]>,
}

impl GridMap {
    /// Builds a map from an explicit obstacle list. The lander must end up on a
    /// traversable, non-inflated cell.
    pub fn from_obstacles(
        width: usize,
        height: usize,
        resolution: f64,
        lander: Cell,
        obstacles: &[Cell],
        inflation_radius: u32,
    ) -> Result<Self, ConfigError> {
        if width == 0 || height == 0 {
            return Err(ConfigError::invalid("world.width", "map must have at least one cell"));
        }
        let mut truth = vec![Terrain::Traversable; width * height];
        for &c in obstacles {
            if c.x < 0 || c.y < 0 || c.x as usize >= width || c.y as usize >= height {
                return Err(ConfigError::invalid("obstacles", format!("{c:?} lies outside the map")));
            }
            truth[c.y as usize * width + c.x as usize] = Terrain::Obstacle;
        }
        let mut map = Self {
            width,
            height,
            resolution,
            truth,
            inflated: Vec::new(),
            lander,
            inflation_radius,
        };
        if !map.contains(lander) {
            return Err(ConfigError::invalid("lander", "lies outside the map"));
        }
        map.inflate();
        if !map.is_free(lander) {
            return Err(ConfigError::invalid("lander", "sits on an obstacle or inflated cell"));
        }
        Ok(map)
    }

    fn inflate(&mut self) {
        let r = self.inflation_radius as i32;
        let mut inflated = vec![false; self.width * self.height];
        for c in self.cells() {
            if self.terrain(c) != Terrain::Obstacle {
                continue;
            }
            for dx in -r..=r {
                for dy in -r..=r {
                    let n = Cell::new(c.x + dx, c.y + dy);
                    if self.contains(n) {
                        inflated[self.index(n)] = true;
                    }
                }
            }
        }
        self.inflated = inflated;
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    /// Panics if `c` is off-map.
    pub fn terrain(&self, c: Cell) -> Terrain {
        self.truth[self.index(c)]
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.contains(c) && self.terrain(c) == Terrain::Obstacle
    }

    pub fn is_traversable(&self, c: Cell) -> bool {
        self.contains(c) && self.terrain(c) == Terrain::Traversable
    }

    pub fn is_inflated(&self, c: Cell) -> bool {
        self.contains(c) && self.inflated[self.index(c)]
    }

    /// On-map, traversable and outside every inflated footprint.
    pub fn is_free(&self, c: Cell) -> bool {
        self.contains(c) && !self.inflated[self.index(c)]
    }

    /// All cells in ascending `(x, y)` order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> {
        let (w, h) = (self.width as i32, self.height as i32);
        (0..w).flat_map(move |x| (0..h).map(move |y| Cell::new(x, y)))
    }

    pub fn obstacle_count(&self) -> usize {
        self.truth.iter().filter(|&&t| t == Terrain::Obstacle).count()
    }

    /// Map diagonal in metres.
    pub fn diagonal_m(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64) * self.resolution
    }

    pub fn distance_m(&self, a: Cell, b: Cell) -> f64 {
        a.euclidean(b) * self.resolution
    }

    pub fn export(&self) -> MapExport {
        MapExport {
            width: self.width,
            height: self.height,
            rho: self.resolution,
            lander: [self.lander.x, self.lander.y],
            obstacles: self.cells().filter(|&c| self.is_obstacle(c)).map(|c| [c.x, c.y]).collect(),
        }
    }

    pub fn from_export(e: &MapExport, inflation_radius: u32) -> Result<Self, ConfigError> {
        let obstacles: Vec<Cell> = e.obstacles.iter().map(|&[x, y]| Cell::new(x, y)).collect();
        Self::from_obstacles(e.width, e.height, e.rho, Cell::new(e.lander[0], e.lander[1]), &obstacles, inflation_radius)
    }
}

/// Samples an obstacle layout with the lander at the map centre.
///
/// Filled discs are dropped at uniform centres until the covered fraction
/// reaches `density`; discs whose inflated footprint would touch the lander
/// are rejected. Layouts where fewer than half of the cells are reachable from
/// the lander are redrawn, up to `max_retries` times.
pub fn generate_map(model: &ObstacleModel, width: usize, height: usize, resolution: f64) -> Result<GridMap, ConfigError> {
    model.validate()?;
    if width < 8 || height < 8 {
        return Err(ConfigError::invalid("world.width", "maps must be at least 8x8"));
    }
    if !(resolution > 0.0) {
        return Err(ConfigError::invalid("world.resolution", "must be positive"));
    }
    let lander = Cell::new(width as i32 / 2, height as i32 / 2);
    let total = width * height;
    let target = (model.density * total as f64).ceil() as usize;
    let keep_clear = model.inflation_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);

    for _attempt in 0..=model.max_retries {
        let mut obstacles = CellMask::new(width, height);
        let mut covered = 0usize;
        let mut draws = 0usize;
        while covered < target && draws < 100 * total {
            draws += 1;
            let r = model.sample_radius(&mut rng) as i32;
            let centre = Cell::new(rng.gen_range(0..width as i32), rng.gen_range(0..height as i32));
            let disc: Vec<Cell> = (-r..=r)
                .flat_map(|dx| (-r..=r).map(move |dy| (dx, dy)))
                .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
                .map(|(dx, dy)| Cell::new(centre.x + dx, centre.y + dy))
                .filter(|c| c.x >= 0 && c.y >= 0 && (c.x as usize) < width && (c.y as usize) < height)
                .collect();
            if disc.iter().any(|c| c.chebyshev(lander) <= keep_clear) {
                continue;
            }
            for c in disc {
                if obstacles.insert(c) {
                    covered += 1;
                }
            }
        }
        let cells: Vec<Cell> = obstacles.iter().collect();
        let map = GridMap::from_obstacles(width, height, resolution, lander, &cells, model.inflation_radius)?;
        if 2 * reachable_cells(&map, lander).len() >= total {
            return Ok(map);
        }
    }
    Err(ConfigError::invalid(
        "world.density",
        format!("no layout with half of the cells reachable after {} retries", model.max_retries),
    ))
}

/// True iff the segment between the two cell centres touches no obstacle
/// cell. Cells the segment only grazes at a corner count as touched.
pub fn line_of_sight(map: &GridMap, a: Cell, b: Cell) -> bool {
    // Always walk from the smaller endpoint so the answer is symmetric.
    let (from, to) = if a <= b { (a, b) } else { (b, a) };
    supercover(from, to).into_iter().all(|c| !map.is_obstacle(c))
}

/// Cells touched by the segment between two cell centres.
pub fn supercover(a: Cell, b: Cell) -> Vec<Cell> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (nx, ny) = (dx.unsigned_abs() as i64, dy.unsigned_abs() as i64);
    let (sx, sy) = (dx.signum(), dy.signum());
    let mut p = a;
    let mut out = vec![p];
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            // passes exactly through a corner
            out.push(Cell::new(p.x + sx, p.y));
            out.push(Cell::new(p.x, p.y + sy));
            p = Cell::new(p.x + sx, p.y + sy);
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            p.x += sx;
            ix += 1;
        } else {
            p.y += sy;
            iy += 1;
        }
        out.push(p);
    }
    out
}

/// Breadth-first closure over 4-connected free cells.
pub fn reachable_cells(map: &GridMap, from: Cell) -> CellMask {
    let mut seen = CellMask::for_map(map);
    if !map.is_free(from) {
        return seen;
    }
    let mut queue = VecDeque::from([from]);
    seen.insert(from);
    while let Some(c) = queue.pop_front() {
        for n in c.neighbours4() {
            if map.is_free(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}
