mod common;

use common::{brute_force_cost, random_grid, GRID_N};
use conav::planner::{plan, plan_detailed, polyline_length, shortcut, PathProjector, PlannedPath};
use conav::vehicle::Pose2D;
use conav::world::{CellState, OccupancyGrid};
use conav::Error;
use proptest::prelude::*;

const N: usize = GRID_N;

#[test]
fn astar_cost_equals_brute_force_on_random_grids() {
    let mut solved = 0;
    for seed in 0..20 {
        let g = random_grid(seed);
        let oracle = brute_force_cost(&g, (0, 0), (N - 1, N - 1));
        let got = plan_detailed(&g, g.cell_center(0, 0), g.cell_center(N - 1, N - 1));
        match got {
            Ok(p) => {
                assert_eq!(p.cost, oracle, "seed {seed}");
                solved += 1;
            }
            Err(Error::UnreachableGoal { .. }) => assert!(oracle.is_infinite(), "seed {seed}"),
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
    assert!(solved >= 10, "only {solved} reachable instances");
}

#[test]
fn open_grid_straight_path() {
    let g = OccupancyGrid::new(120, 20, 0.1, Pose2D::new(-0.05, -1.05, 0.0)).unwrap();
    let p = plan(&g, (0.0, 0.0), (10.0, 0.0)).unwrap();
    assert!((p.total_length - 10.0).abs() < 1e-9);
    assert_eq!(shortcut(&p, &g).waypoints.len(), 2);
}

#[test]
fn sealed_room_is_unreachable() {
    let mut g = OccupancyGrid::new(20, 20, 0.1, Pose2D::default()).unwrap();
    for k in 5..=15 {
        for (i, j) in [(k, 5), (k, 15), (5, k), (15, k)] {
            g.set_state(i, j, CellState::Occupied);
        }
    }
    let err = plan(&g, (0.05, 0.05), g.cell_center(10, 10)).unwrap_err();
    assert!(matches!(err, Error::UnreachableGoal { .. }));
}

#[test]
fn shortcut_fixtures() {
    let g = OccupancyGrid::new(40, 40, 0.1, Pose2D::default()).unwrap();
    let straight = PlannedPath::from_waypoints([(0.5, 0.5), (1.5, 0.5)]);
    assert_eq!(shortcut(&straight, &g), straight);
    let l_shape = PlannedPath::from_waypoints([(0.5, 0.5), (1.0, 0.5), (1.5, 0.5), (1.5, 1.0), (1.5, 1.5)]);
    assert_eq!(shortcut(&l_shape, &g).waypoints, vec![(0.5, 0.5), (1.5, 1.5)]);
}

/// Sample every segment at resolution / 4 and require FREE cells.
fn segment_samples_free(g: &OccupancyGrid, a: (f64, f64), b: (f64, f64)) -> bool {
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let n = (len / (g.resolution() / 4.0)).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        g.point_is_free(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    })
}

#[test]
fn shortcut_segments_pass_sampling_oracle() {
    for seed in 0..20 {
        let g = random_grid(seed);
        let Ok(p) = plan(&g, g.cell_center(0, 0), g.cell_center(N - 1, N - 1)) else {
            continue;
        };
        let s = shortcut(&p, &g);
        assert!(s.waypoints.len() <= p.waypoints.len());
        assert!((s.total_length - polyline_length(&s.waypoints)).abs() < 1e-12);
        for w in s.waypoints.windows(2) {
            assert!(segment_samples_free(&g, w[0], w[1]), "seed {seed}: {:?}", w);
        }
    }
}

#[test]
fn reference_at_path_end_is_terminal() {
    let path = PlannedPath::from_waypoints([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
    let pr = PathProjector::new(&path);
    let r = pr.reference(pr.length(), 10, 0.1, 0.1, 0.0);
    for p in &r.poses {
        assert_eq!((p.x, p.y), (1.0, 1.0));
        assert!((p.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}

#[test]
fn reference_spacing_on_straight_path() {
    let path = PlannedPath::from_waypoints([(0.0, 0.0), (5.0, 0.0)]);
    let r = PathProjector::new(&path).reference(1.0, 10, 0.1, 0.1, 0.0);
    for (k, p) in r.poses.iter().enumerate() {
        assert!((p.x - (1.0 + 0.1 * k as f64)).abs() < 1e-12 && p.y == 0.0);
    }
}

/// Arc length of the nearest of many densely sampled path points.
fn dense_projection(path: &PlannedPath, x: f64, y: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let mut s0 = 0.0;
    for w in path.waypoints.windows(2) {
        let len = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        for k in 0..=2000 {
            let t = k as f64 / 2000.0;
            let (px, py) = (w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1));
            let d = (px - x).hypot(py - y);
            if d < best.0 {
                best = (d, s0 + t * len);
            }
        }
        s0 += len;
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_advances_with_pose(
        pts in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 2..6),
        steps in 5usize..40,
    ) {
        let path = PlannedPath::from_waypoints(pts);
        prop_assume!(path.waypoints.len() >= 2);
        let pr = PathProjector::new(&path);
        let mut last: f64 = 0.0;
        for k in 0..=steps {
            let s = pr.length() * k as f64 / steps as f64;
            let (x, y, _) = pr.sample(s);
            let got = pr.project_within(x, y, last - 1e-9, s + 1e-6);
            prop_assert!(got >= last - 1e-9);
            last = got;
        }
        let (x, y) = (5.0, 5.0);
        let got = pr.project(x, y);
        let (dp, _) = dense_projection(&path, x, y);
        let (px, py, _) = pr.sample(got);
        prop_assert!(((px - x).hypot(py - y) - dp).abs() < 1e-2);
    }
}
