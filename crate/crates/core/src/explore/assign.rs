/// Minimum-cost perfect assignment for a square cost matrix (Kuhn–Munkres
/// with potentials, O(n³)). Returns `row -> column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    assert!(cost.iter().all(|row| row.len() == n), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Assigns each rover to one region, minimising the summed Euclidean distance
/// from rover position to region centroid.
pub fn assign_regions_hungarian(rovers: &[(f64, f64)], centroids: &[(f64, f64)]) -> Vec<usize> {
    assert_eq!(rovers.len(), centroids.len());
    let cost: Vec<Vec<f64>> = rovers
        .iter()
        .map(|r| centroids.iter().map(|c| (r.0 - c.0).hypot(r.1 - c.1)).collect())
        .collect();
    hungarian(&cost)
}
