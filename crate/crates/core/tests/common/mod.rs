//! Oracles shared by the integration suites.
#![allow(dead_code)]

use conav::vehicle::{Pose2D, VelocityCommand};
use conav::world::{CellState, OccupancyGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Forward Euler with substep `h`.
pub fn euler(pose: Pose2D, cmd: VelocityCommand, dt: f64, h: f64) -> (f64, f64, f64) {
    let n = (dt / h).round().max(1.0) as usize;
    let h = dt / n as f64;
    let (mut x, mut y, mut th) = (pose.x, pose.y, pose.theta);
    for _ in 0..n {
        x += cmd.v * th.cos() * h;
        y += cmd.v * th.sin() * h;
        th += cmd.omega * h;
    }
    (x, y, th)
}

/// Euler at 1e-5 and 5e-6, Richardson-extrapolated to cancel the first-order
/// error term.
pub fn euler_oracle(pose: Pose2D, cmd: VelocityCommand, dt: f64) -> (f64, f64, f64) {
    let a = euler(pose, cmd, dt, 1e-5);
    let b = euler(pose, cmd, dt, 5e-6);
    (2.0 * b.0 - a.0, 2.0 * b.1 - a.1, 2.0 * b.2 - a.2)
}

pub const GRID_N: usize = 30;

/// 30x30 grid, a quarter of the cells blocked, preference weights in [1, 3),
/// corners kept free.
pub fn random_grid(seed: u64) -> OccupancyGrid {
    let n = GRID_N;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = (0..n * n)
        .map(|_| if rng.random_bool(0.25) { CellState::Occupied } else { CellState::Free })
        .collect();
    let mut g = OccupancyGrid::from_cells(n, n, 0.1, Pose2D::default(), cells).unwrap();
    for j in 0..n {
        for i in 0..n {
            g.set_preference(i, j, rng.random_range(1.0..3.0)).unwrap();
        }
    }
    g.set_state(0, 0, CellState::Free);
    g.set_state(n - 1, n - 1, CellState::Free);
    g
}

/// Bellman-Ford relaxation to a fixed point over the 8-connected free graph,
/// no diagonal through a blocked side cell.
pub fn brute_force_cost(g: &OccupancyGrid, from: (usize, usize), to: (usize, usize)) -> f64 {
    let (w, h) = (g.width() as isize, g.height() as isize);
    let res = g.resolution();
    let free = |i: isize, j: isize| i >= 0 && j >= 0 && i < w && j < h && g.state(i as usize, j as usize) == CellState::Free;
    let mut dist = vec![vec![f64::INFINITY; g.width()]; g.height()];
    dist[from.1][from.0] = 0.0;
    loop {
        let mut changed = false;
        for j in 0..h {
            for i in 0..w {
                if !free(i, j) || !dist[j as usize][i as usize].is_finite() {
                    continue;
                }
                for di in -1..=1isize {
                    for dj in -1..=1isize {
                        if (di, dj) == (0, 0) || !free(i + di, j + dj) {
                            continue;
                        }
                        let diagonal = di != 0 && dj != 0;
                        if diagonal && !(free(i + di, j) && free(i, j + dj)) {
                            continue;
                        }
                        let len = if diagonal { std::f64::consts::SQRT_2 * res } else { res };
                        let wgt = 0.5 * (g.preference(i as usize, j as usize) + g.preference((i + di) as usize, (j + dj) as usize));
                        let d = dist[j as usize][i as usize] + len * wgt;
                        let slot = &mut dist[(j + dj) as usize][(i + di) as usize];
                        if d < *slot {
                            *slot = d;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return dist[to.1][to.0];
        }
    }
}

/// Headings on a 2^-10 grid so that adding an offset from the same grid is
/// exact.
pub fn dyadic(k: i32) -> f64 {
    k as f64 / 1024.0
}
