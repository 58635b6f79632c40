//! Grid path planning for the global reference.
//!
//! The planner searches FREE cells only (inflated cells are forbidden) with
//! 8-connected moves. A move costs its Euclidean length times the mean
//! preference weight of the two cells it joins, so preference regions with
//! weight above 1 repel the route and weights below 1 attract it. Diagonal
//! moves may not cut past a blocked orthogonal neighbour.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{normalize_angle, Pose2D, StateTrajectory};
use crate::world::{flood_fill, OccupancyGrid, NEIGHBOURS_8};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<(f64, f64)>,
    pub total_length: f64,
}

impl PlannedPath {
    /// Build a path from waypoints, dropping consecutive duplicates.
    pub fn from_waypoints(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut waypoints: Vec<(f64, f64)> = Vec::new();
        for p in points {
            if waypoints.last() != Some(&p) {
                waypoints.push(p);
            }
        }
        let total_length = polyline_length(&waypoints);
        Self {
            waypoints,
            total_length,
        }
    }

    pub fn start(&self) -> Option<(f64, f64)> {
        self.waypoints.first().copied()
    }

    pub fn end(&self) -> Option<(f64, f64)> {
        self.waypoints.last().copied()
    }
}

pub fn polyline_length(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .sum()
}

/// Result of a grid search: the path plus the cell sequence and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPlan {
    pub path: PlannedPath,
    pub cells: Vec<usize>,
    pub cost: f64,
}

/// Cost of moving between two adjacent cells.
pub fn move_cost(grid: &OccupancyGrid, from: usize, to: usize) -> f64 {
    let (fi, fj) = grid.coords(from);
    let (ti, tj) = grid.coords(to);
    let diagonal = fi != ti && fj != tj;
    let len = if diagonal {
        std::f64::consts::SQRT_2 * grid.resolution()
    } else {
        grid.resolution()
    };
    len * 0.5 * (grid.preference_at(from) + grid.preference_at(to))
}

/// Neighbours reachable from `idx` in one move.
pub fn successors(grid: &OccupancyGrid, idx: usize) -> impl Iterator<Item = usize> + '_ {
    let (i, j) = grid.coords(idx);
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let free = move |x: isize, y: isize| {
        x >= 0 && y >= 0 && x < w && y < h && grid.is_free(x as usize, y as usize)
    };
    NEIGHBOURS_8.iter().filter_map(move |&(di, dj)| {
        let (ni, nj) = (i as isize + di, j as isize + dj);
        if !free(ni, nj) {
            return None;
        }
        if di != 0 && dj != 0 && !(free(i as isize + di, j as isize) && free(i as isize, j as isize + dj)) {
            return None;
        }
        Some(grid.index(ni as usize, nj as usize))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (f, idx)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn endpoint_cell(grid: &OccupancyGrid, which: &'static str, p: (f64, f64)) -> Result<usize> {
    match grid.cell_of(p.0, p.1) {
        Some((i, j)) if grid.is_free(i, j) => Ok(grid.index(i, j)),
        _ => Err(Error::BlockedEndpoint {
            which,
            x: p.0,
            y: p.1,
        }),
    }
}

/// Minimal-cost grid path from `start` to `goal` (meters). Waypoints are the
/// centers of the visited cells.
pub fn plan(grid: &OccupancyGrid, start: (f64, f64), goal: (f64, f64)) -> Result<PlannedPath> {
    plan_detailed(grid, start, goal).map(|p| p.path)
}

/// A* search with an admissible octile heuristic scaled by the smallest
/// preference weight. Closed cells are reopened if a cheaper route appears,
/// so the result is optimal even where float rounding breaks consistency.
pub fn plan_detailed(grid: &OccupancyGrid, start: (f64, f64), goal: (f64, f64)) -> Result<GridPlan> {
    let s = endpoint_cell(grid, "start", start)?;
    let g_idx = endpoint_cell(grid, "goal", goal)?;
    let w_min = (0..grid.len())
        .filter(|&idx| grid.state_at(idx) == crate::world::CellState::Free)
        .map(|idx| grid.preference_at(idx))
        .fold(f64::INFINITY, f64::min);
    let scale = grid.resolution() * w_min * (1.0 - 1e-9);
    let (gi, gj) = grid.coords(g_idx);
    let heuristic = |idx: usize| {
        let (i, j) = grid.coords(idx);
        let dx = i.abs_diff(gi) as f64;
        let dy = j.abs_diff(gj) as f64;
        let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
        (hi - lo + std::f64::consts::SQRT_2 * lo) * scale
    };

    let n = grid.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[s] = 0.0;
    open.push(Entry { f: heuristic(s), idx: s });

    while let Some(Entry { f, idx }) = open.pop() {
        if closed[idx] || f > g[idx] + heuristic(idx) {
            continue;
        }
        if idx == g_idx {
            break;
        }
        closed[idx] = true;
        for next in successors(grid, idx) {
            let candidate = g[idx] + move_cost(grid, idx, next);
            if candidate < g[next] {
                g[next] = candidate;
                parent[next] = idx;
                closed[next] = false;
                open.push(Entry {
                    f: candidate + heuristic(next),
                    idx: next,
                });
            }
        }
    }

    if !g[g_idx].is_finite() {
        let (region_size, _) = flood_fill(grid, start, None);
        return Err(Error::UnreachableGoal { region_size });
    }

    let mut cells = vec![g_idx];
    let mut cur = g_idx;
    while cur != s {
        cur = parent[cur];
        cells.push(cur);
    }
    cells.reverse();
    let path = PlannedPath::from_waypoints(cells.iter().map(|&c| {
        let (i, j) = grid.coords(c);
        grid.cell_center(i, j)
    }));
    Ok(GridPlan {
        path,
        cells,
        cost: g[g_idx],
    })
}

/// Greedy line-of-sight smoothing: from each kept waypoint, jump to the
/// farthest later waypoint whose connecting segment crosses only FREE cells.
pub fn shortcut(path: &PlannedPath, grid: &OccupancyGrid) -> PlannedPath {
    let pts = &path.waypoints;
    if pts.len() <= 2 {
        return path.clone();
    }
    let mut kept = vec![pts[0]];
    let mut anchor = 0;
    while anchor < pts.len() - 1 {
        let mut next = anchor + 1;
        for j in (anchor + 2..pts.len()).rev() {
            if grid.segment_free(pts[anchor], pts[j]) {
                next = j;
                break;
            }
        }
        kept.push(pts[next]);
        anchor = next;
    }
    PlannedPath::from_waypoints(kept)
}

/// Arc-length parametrisation of a path.
#[derive(Debug, Clone)]
pub struct PathProjector {
    points: Vec<(f64, f64)>,
    /// cumulative arc length at each waypoint
    cumulative: Vec<f64>,
}

impl PathProjector {
    pub fn new(path: &PlannedPath) -> Self {
        let mut cumulative = Vec::with_capacity(path.waypoints.len());
        let mut acc = 0.0;
        for (k, p) in path.waypoints.iter().enumerate() {
            if k > 0 {
                let q = path.waypoints[k - 1];
                acc += (p.0 - q.0).hypot(p.1 - q.1);
            }
            cumulative.push(acc);
        }
        Self {
            points: path.waypoints.clone(),
            cumulative,
        }
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn segment_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    /// Arc length of the closest point on the path; ties go to the earliest.
    pub fn project(&self, x: f64, y: f64) -> f64 {
        self.project_within(x, y, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Closest point restricted to segments overlapping `[lo, hi]` arc length.
    pub fn project_within(&self, x: f64, y: f64, lo: f64, hi: f64) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..self.segment_count() {
            let (s0, s1) = (self.cumulative[k], self.cumulative[k + 1]);
            if s1 < lo || s0 > hi {
                continue;
            }
            let (a, b) = (self.points[k], self.points[k + 1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let t = (((x - a.0) * dx + (y - a.1) * dy) / len2).clamp(0.0, 1.0);
            let (px, py) = (a.0 + t * dx, a.1 + t * dy);
            let d2 = (px - x) * (px - x) + (py - y) * (py - y);
            if d2 < best.0 {
                best = (d2, s0 + t * (s1 - s0));
            }
        }
        best.1
    }

    /// Point and tangent heading at arc length `s` (clamped to the path).
    /// Exactly at a vertex the outgoing segment's tangent is used; at the end
    /// the terminal tangent.
    pub fn sample(&self, s: f64) -> (f64, f64, f64) {
        match self.points.len() {
            0 => (0.0, 0.0, 0.0),
            1 => (self.points[0].0, self.points[0].1, 0.0),
            _ => {
                let s = s.clamp(0.0, self.length());
                let k = match self.cumulative.partition_point(|&c| c <= s) {
                    0 => 0,
                    p => (p - 1).min(self.segment_count() - 1),
                };
                let (a, b) = (self.points[k], self.points[k + 1]);
                let seg = self.cumulative[k + 1] - self.cumulative[k];
                let t = ((s - self.cumulative[k]) / seg).clamp(0.0, 1.0);
                let heading = (b.1 - a.1).atan2(b.0 - a.0);
                if t >= 1.0 {
                    (b.0, b.1, heading)
                } else {
                    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), heading)
                }
            }
        }
    }

    /// `horizon + 1` reference poses spaced `spacing` meters along the path
    /// starting at arc length `s0`.
    pub fn reference(&self, s0: f64, horizon: usize, spacing: f64, dt: f64, fallback_heading: f64) -> StateTrajectory {
        let poses = (0..=horizon)
            .map(|k| {
                let (x, y, heading) = self.sample(s0 + k as f64 * spacing);
                let theta = if self.points.len() < 2 {
                    fallback_heading
                } else {
                    heading
                };
                Pose2D::new(x, y, normalize_angle(theta))
            })
            .collect();
        StateTrajectory { poses, dt }
    }
}

/// Global reference for the MPC: project the pose onto the path and emit
/// `horizon + 1` poses spaced `v_ref * dt` ahead along it.
pub fn reference_from_path(
    path: &PlannedPath,
    pose: &Pose2D,
    horizon: usize,
    dt: f64,
    v_ref: f64,
) -> StateTrajectory {
    let projector = PathProjector::new(path);
    let s0 = projector.project(pose.x, pose.y);
    projector.reference(s0, horizon, v_ref * dt, dt, pose.theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::CellState;

    fn open_grid(w: usize, h: usize, res: f64) -> OccupancyGrid {
        // cell (0,0) centered on the world origin
        OccupancyGrid::new(w, h, res, Pose2D::new(-res / 2.0, -res / 2.0, 0.0)).unwrap()
    }

    #[test]
    fn straight_line_on_free_grid() {
        let grid = open_grid(120, 20, 0.1);
        let path = plan(&grid, (0.0, 0.0), (10.0, 0.0)).unwrap();
        assert!((path.total_length - 10.0).abs() < 1e-9, "{}", path.total_length);
        assert!(path.waypoints.iter().all(|p| p.1.abs() < 1e-12));
    }

    #[test]
    fn sealed_room_is_unreachable() {
        let mut grid = open_grid(20, 20, 1.0);
        for k in 10..15 {
            grid.set_state(k, 10, CellState::Occupied);
            grid.set_state(k, 14, CellState::Occupied);
            grid.set_state(10, k, CellState::Occupied);
            grid.set_state(14, k, CellState::Occupied);
        }
        let err = plan(&grid, (0.0, 0.0), (12.0, 12.0)).unwrap_err();
        match err {
            Error::UnreachableGoal { region_size } => assert_eq!(region_size, 400 - 16 - 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blocked_endpoints_rejected() {
        let mut grid = open_grid(5, 5, 1.0);
        grid.set_state(2, 2, CellState::Inflated);
        assert!(matches!(
            plan(&grid, (2.0, 2.0), (0.0, 0.0)),
            Err(Error::BlockedEndpoint { which: "start", .. })
        ));
        assert!(matches!(
            plan(&grid, (0.0, 0.0), (9.0, 0.0)),
            Err(Error::BlockedEndpoint { which: "goal", .. })
        ));
    }

    #[test]
    fn diagonal_moves_do_not_cut_corners() {
        let mut grid = open_grid(3, 3, 1.0);
        grid.set_state(1, 0, CellState::Occupied);
        let succ: Vec<_> = successors(&grid, grid.index(0, 0)).collect();
        assert_eq!(succ, vec![grid.index(0, 1)]);
    }

    #[test]
    fn preference_region_diverts_route() {
        let mut grid = open_grid(21, 11, 1.0);
        // expensive band across the direct route, open detour at the top
        for j in 0..8 {
            grid.set_preference(10, j, 50.0).unwrap();
        }
        let plan = plan_detailed(&grid, (0.0, 2.0), (20.0, 2.0)).unwrap();
        assert!(plan.cells.iter().all(|&c| grid.preference_at(c) == 1.0));
        assert!(plan.path.total_length > 20.0);
    }

    #[test]
    fn shortcut_straight_and_l_shape() {
        let grid = open_grid(20, 20, 1.0);
        let straight = PlannedPath::from_waypoints([(0.0, 0.0), (5.0, 0.0)]);
        assert_eq!(shortcut(&straight, &grid), straight);
        let l_shape = PlannedPath::from_waypoints(
            (0..10)
                .map(|i| (i as f64, 0.0))
                .chain((1..10).map(|j| (9.0, j as f64))),
        );
        let out = shortcut(&l_shape, &grid);
        assert_eq!(out.waypoints, vec![(0.0, 0.0), (9.0, 9.0)]);
        assert!(out.total_length <= l_shape.total_length);
    }

    #[test]
    fn reference_at_path_end_repeats_endpoint() {
        let path = PlannedPath::from_waypoints([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        let r = reference_from_path(&path, &Pose2D::new(1.0, 1.0, 0.0), 5, 0.1, 1.0);
        assert_eq!(r.len(), 6);
        for p in &r.poses {
            assert_eq!((p.x, p.y), (1.0, 1.0));
            assert!((p.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_spacing_on_straight_path() {
        let path = PlannedPath::from_waypoints([(0.0, 0.0), (10.0, 0.0)]);
        let r = reference_from_path(&path, &Pose2D::new(2.0, 0.3, 0.0), 10, 0.1, 1.0);
        assert_eq!(r.len(), 11);
        for (k, p) in r.poses.iter().enumerate() {
            assert!((p.x - (2.0 + 0.1 * k as f64)).abs() < 1e-12);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.theta, 0.0);
        }
    }

    #[test]
    fn single_waypoint_reference_keeps_pose_heading() {
        let path = PlannedPath::from_waypoints([(3.0, 4.0)]);
        let r = reference_from_path(&path, &Pose2D::new(0.0, 0.0, 0.7), 3, 0.1, 1.0);
        assert!(r.poses.iter().all(|p| (p.x, p.y, p.theta) == (3.0, 4.0, 0.7)));
    }
}
