use ldtn_core::net::{build_snapshot, count_topology_changes, lander_contact_map, LinkParams, NetworkSnapshot, SnapshotExport};
use ldtn_core::world::{generate_map, line_of_sight, Cell, GridMap, ObstacleModel};
use proptest::prelude::*;

#[test]
fn wall_cuts_the_lander_link() {
    let wall: Vec<Cell> = (0..20).map(|y| Cell::new(12, y)).collect();
    let map = GridMap::from_obstacles(20, 20, 1.0, Cell::new(8, 10), &wall, 0).unwrap();
    let rover = Cell::new(16, 10);
    assert!(map.distance_m(rover, map.lander) < LinkParams::default().d_max_r2l);
    assert!(!line_of_sight(&map, rover, map.lander));
    let s = build_snapshot(0, &[rover], &map, &LinkParams::default());
    assert!(!s.has_edge(0, 1));
    let s = build_snapshot(0, &[Cell::new(10, 10)], &map, &LinkParams::default());
    assert!(s.has_edge(0, 1));
}

#[test]
fn scripted_motion_counts_two_changes() {
    let map = GridMap::from_obstacles(40, 5, 1.0, Cell::new(0, 2), &[], 0).unwrap();
    let p = LinkParams::default();
    // step 0: r0 near lander, r1 far; step 1: same links; step 2: r1 joins r0;
    // step 3: r0 leaves the lander
    let script = [
        [Cell::new(5, 2), Cell::new(30, 2)],
        [Cell::new(6, 2), Cell::new(31, 2)],
        [Cell::new(6, 2), Cell::new(12, 2)],
    ];
    let snaps: Vec<NetworkSnapshot> = script.iter().enumerate().map(|(t, pos)| build_snapshot(t as u64, pos, &map, &p)).collect();
    let total: u32 = snaps.windows(2).map(|w| count_topology_changes(&w[0], &w[1])).sum();
    assert_eq!(total, 1);
    let later = build_snapshot(3, &[Cell::new(20, 2), Cell::new(12, 2)], &map, &p);
    assert_eq!(total + count_topology_changes(&snaps[2], &later), 2);
}

#[test]
fn snapshot_json_round_trip() {
    let map = generate_map(&ObstacleModel { seed: 1, ..Default::default() }, 20, 20, 1.0).unwrap();
    let s = build_snapshot(7, &[map.lander, Cell::new(3, 3), map.lander], &map, &LinkParams::default());
    let json = serde_json::to_string(&s.export()).unwrap();
    let back: SnapshotExport = serde_json::from_str(&json).unwrap();
    let edges: Vec<(usize, usize)> = back.edges.iter().map(|e| (e[0], e[1])).collect();
    assert_eq!(NetworkSnapshot::from_edges(back.step, back.nodes - 1, &edges, &LinkParams::default()), s);
}

#[test]
fn contact_map_agrees_with_snapshots() {
    let map = generate_map(&ObstacleModel { seed: 3, ..Default::default() }, 30, 30, 1.0).unwrap();
    let p = LinkParams::default();
    let contact = lander_contact_map(&map, &p);
    for c in map.cells() {
        assert_eq!(contact.contains(c), build_snapshot(0, &[c], &map, &p).has_edge(0, 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edges_are_exactly_the_predicate(seed in 0u64..300, pos in prop::collection::vec((0i32..30, 0i32..30), 1..7)) {
        let map = generate_map(&ObstacleModel { seed, ..Default::default() }, 30, 30, 1.0).unwrap();
        let p = LinkParams::default();
        let cells: Vec<Cell> = pos.iter().map(|&(x, y)| Cell::new(x, y)).collect();
        let s = build_snapshot(0, &cells, &map, &p);
        let at = |i: usize| if i == cells.len() { map.lander } else { cells[i] };
        for i in 0..s.node_count() {
            for j in 0..s.node_count() {
                prop_assert_eq!(s.has_edge(i, j), s.has_edge(j, i));
                if i == j {
                    continue;
                }
                let lander = s.is_lander(i) || s.is_lander(j);
                let range = if lander { p.d_max_r2l } else { p.d_max_r2r };
                let expect = map.distance_m(at(i), at(j)) < range && line_of_sight(&map, at(i), at(j));
                prop_assert_eq!(s.has_edge(i, j), expect);
                prop_assert_eq!(s.link_rate(i, j) > 0, expect);
                if expect {
                    prop_assert_eq!(s.link_rate(i, j), if lander { p.rate_r2l } else { p.rate_r2r });
                }
            }
        }
    }
}
