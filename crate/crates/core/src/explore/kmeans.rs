use rand::Rng;

use crate::world::{Cell, CellMask, GridMap};

/// One exploration sub-region.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRegion {
    pub cells: CellMask,
    /// Mean of the member coordinates.
    pub centroid: (f64, f64),
    /// Member closest to `centroid` (lowest `(x, y)` on ties).
    pub centroid_cell: Cell,
}

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-6;

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn nearest(p: (f64, f64), centres: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, &c) in centres.iter().enumerate().skip(1) {
        if dist2(p, c) < dist2(p, centres[best]) {
            best = i;
        }
    }
    best
}

fn kmeans_pp(points: &[(f64, f64)], k: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let mut centres = vec![points[rng.gen_range(0..points.len())]];
    while centres.len() < k {
        let d: Vec<f64> = points.iter().map(|&p| dist2(p, centres[nearest(p, &centres)])).collect();
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        };
        centres.push(points[pick]);
    }
    centres
}

/// Reassigns the point farthest from its centre to every empty cluster.
fn fill_empty(points: &[(f64, f64)], labels: &mut [usize], centres: &mut [(f64, f64)]) {
    let k = centres.len();
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &p) in points.iter().enumerate() {
            let d = dist2(p, centres[labels[i]]);
            if counts[labels[i]] > 1 && d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= number of points");
        labels[i] = empty;
        centres[empty] = points[i];
    }
}

/// Lloyd's k-means over the traversable cells, seeded with k-means++.
///
/// Panics if `k` is zero or exceeds the number of traversable cells.
pub fn partition_kmeans(map: &GridMap, k: usize, rng: &mut impl Rng) -> Vec<SubRegion> {
    let cells: Vec<Cell> = map.cells().filter(|&c| map.is_traversable(c)).collect();
    assert!(k >= 1 && k <= cells.len(), "k = {k} with {} traversable cells", cells.len());
    let points: Vec<(f64, f64)> = cells.iter().map(|c| (c.x as f64, c.y as f64)).collect();

    let mut centres = kmeans_pp(&points, k, rng);
    let mut labels = vec![0usize; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (l, &p) in labels.iter_mut().zip(&points) {
            *l = nearest(p, &centres);
        }
        fill_empty(&points, &mut labels, &mut centres);
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&l, &p) in labels.iter().zip(&points) {
            sums[l].0 += p.0;
            sums[l].1 += p.1;
            sums[l].2 += 1;
        }
        let mut moved: f64 = 0.0;
        for (c, &(sx, sy, n)) in centres.iter_mut().zip(&sums) {
            let next = (sx / n as f64, sy / n as f64);
            moved = moved.max(dist2(*c, next).sqrt());
            *c = next;
        }
        if moved <= TOLERANCE {
            break;
        }
    }
    for (l, &p) in labels.iter_mut().zip(&points) {
        *l = nearest(p, &centres);
    }
    fill_empty(&points, &mut labels, &mut centres);

    (0..k)
        .map(|j| {
            let mut mask = CellMask::for_map(map);
            let members: Vec<usize> = (0..cells.len()).filter(|&i| labels[i] == j).collect();
            members.iter().for_each(|&i| {
                mask.insert(cells[i]);
            });
            let n = members.len() as f64;
            let centroid = (
                members.iter().map(|&i| points[i].0).sum::<f64>() / n,
                members.iter().map(|&i| points[i].1).sum::<f64>() / n,
            );
            let mut best = members[0];
            for &i in &members[1..] {
                if dist2(points[i], centroid) < dist2(points[best], centroid) {
                    best = i;
                }
            }
            SubRegion { cells: mask, centroid, centroid_cell: cells[best] }
        })
        .collect()
}

/// Within-cluster sum of squared distances to each cluster's mean.
pub fn within_cluster_sse(regions: &[SubRegion]) -> f64 {
    regions
        .iter()
        .map(|r| r.cells.iter().map(|c| dist2((c.x as f64, c.y as f64), r.centroid)).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cluster_takes_everything() {
        let map = GridMap::from_obstacles(10, 10, 1.0, Cell::new(5, 5), &[Cell::new(0, 0)], 0).unwrap();
        let regions = partition_kmeans(&map, 1, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].cells.len(), 99);
    }

    #[test]
    fn separated_blocks_split_cleanly() {
        // two 3x3 traversable blocks in opposite corners of a 12x12 map
        let open = |c: Cell| (c.x < 3 && c.y < 3) || (c.x >= 9 && c.y >= 9);
        let probe = GridMap::from_obstacles(12, 12, 1.0, Cell::new(0, 0), &[], 0).unwrap();
        let walls: Vec<Cell> = probe.cells().filter(|&c| !open(c)).collect();
        let map = GridMap::from_obstacles(12, 12, 1.0, Cell::new(1, 1), &walls, 0).unwrap();
        for seed in 0..10 {
            let regions = partition_kmeans(&map, 2, &mut ChaCha8Rng::seed_from_u64(seed));
            for r in &regions {
                assert_eq!(r.cells.len(), 9);
                let first = r.cells.iter().next().unwrap();
                assert!(r.cells.iter().all(|c| (c.x < 3) == (first.x < 3)));
            }
        }
    }
}
