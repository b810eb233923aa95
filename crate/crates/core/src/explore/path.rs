use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::world::{Cell, GridMap};

/// Shortest 4-connected path over free cells by A* with the Manhattan
/// heuristic. The result includes both endpoints; it is empty iff `to` cannot
/// be reached. Among equal `f` values the lower `(x, y)` cell is expanded
/// first.
pub fn plan_path(map: &GridMap, from: Cell, to: Cell) -> Vec<Cell> {
    if !map.is_free(from) || !map.is_free(to) {
        return Vec::new();
    }
    let w = map.width;
    let idx = |c: Cell| c.y as usize * w + c.x as usize;
    let mut g = vec![u32::MAX; map.cell_count()];
    let mut parent: Vec<Option<Cell>> = vec![None; map.cell_count()];
    let mut closed = vec![false; map.cell_count()];
    let mut open = BinaryHeap::new();
    g[idx(from)] = 0;
    open.push(Reverse((from.manhattan(to), from)));

    while let Some(Reverse((_, c))) = open.pop() {
        if closed[idx(c)] {
            continue;
        }
        closed[idx(c)] = true;
        if c == to {
            let mut path = vec![c];
            let mut cur = c;
            while let Some(p) = parent[idx(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return path;
        }
        let gc = g[idx(c)];
        for n in c.neighbours4() {
            if !map.is_free(n) || closed[idx(n)] {
                continue;
            }
            if gc + 1 < g[idx(n)] {
                g[idx(n)] = gc + 1;
                parent[idx(n)] = Some(c);
                open.push(Reverse((gc + 1 + n.manhattan(to), n)));
            }
        }
    }
    Vec::new()
}

/// Breadth-first distances and parents over free cells from `from`.
#[derive(Debug, Clone)]
pub struct BfsTree {
    width: usize,
    pub dist: Vec<u32>,
    parent: Vec<u32>,
}

impl BfsTree {
    pub fn new(map: &GridMap, from: Cell) -> Self {
        let w = map.width;
        let mut dist = vec![u32::MAX; map.cell_count()];
        let mut parent = vec![u32::MAX; map.cell_count()];
        let mut queue = std::collections::VecDeque::new();
        if map.is_free(from) {
            dist[from.y as usize * w + from.x as usize] = 0;
            queue.push_back(from);
        }
        while let Some(c) = queue.pop_front() {
            let ci = c.y as usize * w + c.x as usize;
            for n in c.neighbours4() {
                if !map.is_free(n) {
                    continue;
                }
                let ni = n.y as usize * w + n.x as usize;
                if dist[ni] == u32::MAX {
                    dist[ni] = dist[ci] + 1;
                    parent[ni] = ci as u32;
                    queue.push_back(n);
                }
            }
        }
        Self { width: w, dist, parent }
    }

    fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn reaches(&self, c: Cell) -> bool {
        self.dist[self.index(c)] != u32::MAX
    }

    /// Path from the root to `to`, both included; empty if unreachable.
    pub fn path_to(&self, to: Cell) -> Vec<Cell> {
        if !self.reaches(to) {
            return Vec::new();
        }
        let mut path = vec![to];
        let mut i = self.index(to);
        while self.parent[i] != u32::MAX {
            i = self.parent[i] as usize;
            path.push(Cell::new((i % self.width) as i32, (i / self.width) as i32));
        }
        path.reverse();
        path
    }
}
