use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::Pose2D;

/// Slack used when comparing center distances against a radius.
const RADIUS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellState {
    Free,
    Occupied,
    /// Free space reserved by the planner around occupied cells.
    Inflated,
}

/// Axis-aligned rectangle in meters (bounds inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    Rect {
        min_x: f64,
        min_y: f64,
        max_x: f64,
        max_y: f64,
    },
    Circle {
        x: f64,
        y: f64,
        radius: f64,
    },
}

impl Obstacle {
    pub fn rect(r: Rect) -> Self {
        Obstacle::Rect {
            min_x: r.min_x,
            min_y: r.min_y,
            max_x: r.max_x,
            max_y: r.max_y,
        }
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        match *self {
            Obstacle::Rect {
                min_x,
                min_y,
                max_x,
                max_y,
            } => Rect::new(min_x, min_y, max_x, max_y).contains(px, py),
            Obstacle::Circle { x, y, radius } => {
                let (dx, dy) = (px - x, py - y);
                dx * dx + dy * dy <= radius * radius
            }
        }
    }

    /// Bounding box of the obstacle.
    pub fn bounds(&self) -> Rect {
        match *self {
            Obstacle::Rect {
                min_x,
                min_y,
                max_x,
                max_y,
            } => Rect::new(min_x, min_y, max_x, max_y),
            Obstacle::Circle { x, y, radius } => {
                Rect::new(x - radius, y - radius, x + radius, y + radius)
            }
        }
    }
}

/// Map size in meters; the map's lower-left corner sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extents {
    pub width: f64,
    pub height: f64,
}

/// Occupancy grid with an inflation layer, a traversal preference layer and a
/// precomputed distance field to the nearest occupied cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Pose2D,
    cells: Vec<CellState>,
    preference: Vec<f64>,
    inflation_radius: f64,
    /// meters from each cell center to the nearest occupied center, capped
    distance: Vec<f64>,
}

impl OccupancyGrid {
    /// All-free grid of `width x height` cells.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose2D) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        let n = width * height;
        let mut grid = Self {
            resolution,
            width,
            height,
            origin,
            cells: vec![CellState::Free; n],
            preference: vec![1.0; n],
            inflation_radius: 0.0,
            distance: Vec::new(),
        };
        grid.refresh_distance();
        Ok(grid)
    }

    /// Build a grid from raw cell states (row-major, `y` outer).
    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2D,
        cells: Vec<CellState>,
    ) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::Config(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        let mut grid = Self::new(width, height, resolution, origin)?;
        grid.cells = cells;
        grid.refresh_distance();
        Ok(grid)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn inflation_radius(&self) -> f64 {
        self.inflation_radius
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn state(&self, i: usize, j: usize) -> CellState {
        self.cells[self.index(i, j)]
    }

    pub fn preference(&self, i: usize, j: usize) -> f64 {
        self.preference[self.index(i, j)]
    }

    pub fn preference_at(&self, idx: usize) -> f64 {
        self.preference[idx]
    }

    pub fn state_at(&self, idx: usize) -> CellState {
        self.cells[idx]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing the point, if it is inside the map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin.x) / self.resolution;
        let fy = (y - self.origin.y) / self.resolution;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some()
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        self.state(i, j) == CellState::Free
    }

    /// Whether the point lies in a FREE (not occupied, not inflated) cell.
    pub fn point_is_free(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|(i, j)| self.is_free(i, j))
    }

    pub fn set_state(&mut self, i: usize, j: usize, state: CellState) {
        let idx = self.index(i, j);
        self.cells[idx] = state;
        self.refresh_distance();
    }

    /// Set the traversal weight of every cell whose center lies in `rect`.
    pub fn set_preference_rect(&mut self, rect: &Rect, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Config(format!("preference weight must be >= 0, got {weight}")));
        }
        for j in 0..self.height {
            for i in 0..self.width {
                let (cx, cy) = self.cell_center(i, j);
                if rect.contains(cx, cy) {
                    let idx = self.index(i, j);
                    self.preference[idx] = weight;
                }
            }
        }
        Ok(())
    }

    pub fn set_preference(&mut self, i: usize, j: usize, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Config(format!("preference weight must be >= 0, got {weight}")));
        }
        let idx = self.index(i, j);
        self.preference[idx] = weight;
        Ok(())
    }

    /// Center distance (meters) from cell `(i, j)` to the nearest occupied
    /// cell center; capped at the map diagonal when the map has no obstacles.
    pub fn cell_distance(&self, i: usize, j: usize) -> f64 {
        self.distance[self.index(i, j)]
    }

    /// Bilinearly interpolated distance from `(x, y)` to the nearest
    /// obstacle. Points outside the map report zero.
    pub fn obstacle_distance(&self, x: f64, y: f64) -> f64 {
        if !self.contains_point(x, y) {
            return 0.0;
        }
        let fx = ((x - self.origin.x) / self.resolution - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = ((y - self.origin.y) / self.resolution - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(self.width - 1), (j0 + 1).min(self.height - 1));
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let d00 = self.cell_distance(i0, j0);
        let d10 = self.cell_distance(i1, j0);
        let d01 = self.cell_distance(i0, j1);
        let d11 = self.cell_distance(i1, j1);
        let bottom = d00 + tx * (d10 - d00);
        let top = d01 + tx * (d11 - d01);
        bottom + ty * (top - bottom)
    }

    /// Center of the nearest occupied cell within `max_radius` of the point.
    pub fn nearest_occupied(&self, x: f64, y: f64, max_radius: f64) -> Option<(f64, f64)> {
        let mut best: Option<(f64, (f64, f64))> = None;
        self.for_cells_in_disc(x, y, max_radius, |grid, i, j, d2| {
            if grid.state(i, j) == CellState::Occupied && best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, grid.cell_center(i, j)));
            }
        });
        best.map(|(_, c)| c)
    }

    fn for_cells_in_disc(&self, x: f64, y: f64, r: f64, mut f: impl FnMut(&Self, usize, usize, f64)) {
        let res = self.resolution;
        let lo_i = ((x - r - self.origin.x) / res - 0.5).floor().max(0.0) as usize;
        let lo_j = ((y - r - self.origin.y) / res - 0.5).floor().max(0.0) as usize;
        let hi_i = ((x + r - self.origin.x) / res + 0.5).ceil();
        let hi_j = ((y + r - self.origin.y) / res + 0.5).ceil();
        if hi_i < 0.0 || hi_j < 0.0 {
            return;
        }
        let hi_i = (hi_i as usize).min(self.width - 1);
        let hi_j = (hi_j as usize).min(self.height - 1);
        let r2 = r * r;
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let (cx, cy) = self.cell_center(i, j);
                let d2 = (cx - x) * (cx - x) + (cy - y) * (cy - y);
                if d2 <= r2 {
                    f(self, i, j, d2);
                }
            }
        }
    }

    /// Whether every cell crossed by the segment `a -> b` is FREE. Uses an
    /// exact grid traversal; corner crossings check both neighbouring cells.
    pub fn segment_free(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let Some((mut i, mut j)) = self.cell_of(a.0, a.1) else {
            return false;
        };
        let Some(target) = self.cell_of(b.0, b.1) else {
            return false;
        };
        let res = self.resolution;
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let step_i: isize = if dx > 0.0 { 1 } else { -1 };
        let step_j: isize = if dy > 0.0 { 1 } else { -1 };
        let boundary = |c: usize, step: isize, origin: f64| {
            let k = if step > 0 { c as f64 + 1.0 } else { c as f64 };
            origin + k * res
        };
        let mut t_max_x = if dx != 0.0 {
            (boundary(i, step_i, self.origin.x) - a.0) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy != 0.0 {
            (boundary(j, step_j, self.origin.y) - a.1) / dy
        } else {
            f64::INFINITY
        };
        let t_delta_x = if dx != 0.0 { res / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { res / dy.abs() } else { f64::INFINITY };

        let max_steps = self.width + self.height + 4;
        for _ in 0..=max_steps * 2 {
            if !self.is_free(i, j) {
                return false;
            }
            if (i, j) == target {
                return true;
            }
            let next_t = t_max_x.min(t_max_y);
            if next_t > 1.0 {
                // numerically at the end cell's neighbour; accept the endpoint cell check
                return self.is_free(target.0, target.1);
            }
            let ni = i as isize + step_i;
            let nj = j as isize + step_j;
            if (t_max_x - t_max_y).abs() <= 1e-9 {
                // passing exactly through a corner touches both side cells
                let side_x = self.checked(ni, j as isize);
                let side_y = self.checked(i as isize, nj);
                if side_x.is_some_and(|(a, b)| !self.is_free(a, b))
                    || side_y.is_some_and(|(a, b)| !self.is_free(a, b))
                {
                    return false;
                }
                let Some(c) = self.checked(ni, nj) else {
                    return false;
                };
                (i, j) = c;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            } else if t_max_x < t_max_y {
                let Some(c) = self.checked(ni, j as isize) else {
                    return false;
                };
                (i, j) = c;
                t_max_x += t_delta_x;
            } else {
                let Some(c) = self.checked(i as isize, nj) else {
                    return false;
                };
                (i, j) = c;
                t_max_y += t_delta_y;
            }
        }
        false
    }

    fn checked(&self, i: isize, j: isize) -> Option<(usize, usize)> {
        (i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height)
            .then_some((i as usize, j as usize))
    }

    fn refresh_distance(&mut self) {
        let cap = (self.width + self.height) as f64 * self.resolution;
        let sq = squared_distance_transform(self.width, self.height, |idx| {
            self.cells[idx] == CellState::Occupied
        });
        self.distance = sq
            .into_iter()
            .map(|d2| if d2.is_finite() { (d2.sqrt() * self.resolution).min(cap) } else { cap })
            .collect();
    }
}

/// Exact squared Euclidean distance transform (in cell units) using the
/// lower-envelope-of-parabolas method, separably over columns then rows.
fn squared_distance_transform(width: usize, height: usize, seed: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..width * height)
        .map(|idx| if seed(idx) { 0.0 } else { f64::INFINITY })
        .collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for i in 0..width {
        for j in 0..height {
            f[j] = grid[j * width + i];
        }
        dt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for j in 0..height {
            grid[j * width + i] = out[j];
        }
    }
    for j in 0..height {
        f[..width].copy_from_slice(&grid[j * width..(j + 1) * width]);
        dt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        grid[j * width..(j + 1) * width].copy_from_slice(&out[..width]);
    }
    grid
}

fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // skip leading infinite samples; the envelope is undefined until a seed appears
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this never pops past the first parabola
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Rasterize obstacles onto a grid: a cell is OCCUPIED iff its center lies
/// inside at least one obstacle.
pub fn rasterize(obstacles: &[Obstacle], resolution: f64, extents: Extents) -> Result<OccupancyGrid> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
    }
    if !(extents.width > 0.0 && extents.height > 0.0) {
        return Err(Error::Config(format!(
            "extents must be positive, got {} x {}",
            extents.width, extents.height
        )));
    }
    let width = ((extents.width / resolution) - 1e-9).ceil().max(1.0) as usize;
    let height = ((extents.height / resolution) - 1e-9).ceil().max(1.0) as usize;
    let mut cells = vec![CellState::Free; width * height];
    let grid = OccupancyGrid::new(width, height, resolution, Pose2D::default())?;
    for obs in obstacles {
        let b = obs.bounds();
        let lo_i = ((b.min_x / resolution) - 0.5).floor().max(0.0) as usize;
        let lo_j = ((b.min_y / resolution) - 0.5).floor().max(0.0) as usize;
        let hi_i = (((b.max_x / resolution) - 0.5).ceil().max(0.0) as usize).min(width - 1);
        let hi_j = (((b.max_y / resolution) - 0.5).ceil().max(0.0) as usize).min(height - 1);
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let (cx, cy) = grid.cell_center(i, j);
                if obs.contains(cx, cy) {
                    cells[j * width + i] = CellState::Occupied;
                }
            }
        }
    }
    OccupancyGrid::from_cells(width, height, resolution, Pose2D::default(), cells)
}

/// Mark FREE cells within `radius` (center to center) of an OCCUPIED cell as
/// INFLATED. Existing INFLATED cells are kept.
pub fn inflate(grid: &OccupancyGrid, radius: f64) -> OccupancyGrid {
    let mut out = grid.clone();
    if radius <= 0.0 {
        return out;
    }
    let limit = radius + RADIUS_EPS;
    for (idx, cell) in out.cells.iter_mut().enumerate() {
        if *cell == CellState::Free && grid.distance[idx] <= limit {
            *cell = CellState::Inflated;
        }
    }
    out.inflation_radius = out.inflation_radius.max(radius);
    out
}

/// True iff an OCCUPIED cell center lies within `footprint_radius` of the
/// pose, or the pose is off the map. INFLATED cells never collide.
pub fn in_collision(grid: &OccupancyGrid, pose: &Pose2D, footprint_radius: f64) -> bool {
    let Some((i, j)) = grid.cell_of(pose.x, pose.y) else {
        return true;
    };
    let half_diag = grid.resolution * std::f64::consts::FRAC_1_SQRT_2;
    let d = grid.cell_distance(i, j);
    if d - half_diag > footprint_radius + RADIUS_EPS {
        return false;
    }
    if d + half_diag < footprint_radius - RADIUS_EPS {
        return true;
    }
    let mut hit = false;
    grid.for_cells_in_disc(pose.x, pose.y, footprint_radius, |g, i, j, _| {
        hit |= g.state(i, j) == CellState::Occupied;
    });
    hit
}
