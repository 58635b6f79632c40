use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{inflate, rasterize, CellState, Extents, Obstacle, OccupancyGrid, Rect};
use crate::error::{Error, Result};
use crate::vehicle::Pose2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRegion {
    pub rect: Rect,
    pub weight: f64,
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub resolution: f64,
    pub extents: Extents,
    pub obstacles: Vec<Obstacle>,
    pub start: Pose2D,
    pub goal: GoalPoint,
    pub goal_tolerance: f64,
    pub timeout_s: f64,
    #[serde(default)]
    pub preference_regions: Vec<PreferenceRegion>,
}

impl ScenarioSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Rasterize, apply preferences, inflate by `inflation_radius` and check
    /// that start and goal sit in free cells.
    pub fn build(&self, inflation_radius: f64) -> Result<Scenario> {
        if !(self.goal_tolerance > 0.0) {
            return Err(Error::Scenario("goal_tolerance must be positive".into()));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::Scenario("timeout_s must be positive".into()));
        }
        let mut raw = rasterize(&self.obstacles, self.resolution, self.extents)?;
        for region in &self.preference_regions {
            raw.set_preference_rect(&region.rect, region.weight)?;
        }
        let grid = inflate(&raw, inflation_radius);
        for (which, x, y) in [
            ("start", self.start.x, self.start.y),
            ("goal", self.goal.x, self.goal.y),
        ] {
            if !grid.point_is_free(x, y) {
                return Err(Error::Scenario(format!(
                    "{which} ({x:.3}, {y:.3}) is not in a free cell after inflation"
                )));
            }
        }
        Ok(Scenario {
            spec: self.clone(),
            grid,
        })
    }
}

/// A scenario ready to simulate: its document plus the inflated grid.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub grid: OccupancyGrid,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn start(&self) -> Pose2D {
        self.spec.start
    }

    pub fn goal(&self) -> GoalPoint {
        self.spec.goal
    }

    /// Straight-line start to goal distance, reported alongside trial results.
    pub fn straight_line_distance(&self) -> f64 {
        self.spec.start.distance_to(self.spec.goal.x, self.spec.goal.y)
    }
}

/// Count of FREE cells reachable from the cell at `(x, y)` by 8-connected
/// moves, and whether `target` is among them.
pub fn flood_fill(grid: &OccupancyGrid, from: (f64, f64), target: Option<(f64, f64)>) -> (usize, bool) {
    let Some((si, sj)) = grid.cell_of(from.0, from.1) else {
        return (0, false);
    };
    if !grid.is_free(si, sj) {
        return (0, false);
    }
    let target = target.and_then(|(x, y)| grid.cell_of(x, y));
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::from([(si, sj)]);
    seen[grid.index(si, sj)] = true;
    let mut count = 0;
    let mut found = false;
    while let Some((i, j)) = queue.pop_front() {
        count += 1;
        found |= Some((i, j)) == target;
        for (di, dj) in NEIGHBOURS_8 {
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if ni < 0 || nj < 0 || ni as usize >= grid.width() || nj as usize >= grid.height() {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            let idx = grid.index(ni, nj);
            if !seen[idx] && grid.state(ni, nj) == CellState::Free {
                seen[idx] = true;
                queue.push_back((ni, nj));
            }
        }
    }
    (count, found)
}

pub(crate) const NEIGHBOURS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Parameters of the zigzag corridor course: boards attached alternately to
/// the two side walls plus circular manikins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZigzagLayout {
    pub name: String,
    /// Straight-line distance from start to goal along the corridor axis.
    pub corridor_length: f64,
    pub corridor_width: f64,
    pub board_count: usize,
    /// How far each board protrudes from its wall into the corridor.
    pub board_length: f64,
    pub board_thickness: f64,
    pub wall_thickness: f64,
    /// Free corridor left behind the start and beyond the goal.
    pub end_margin: f64,
    /// Manikin centers in corridor coordinates: `x` from the start, `y`
    /// from the corridor centerline (positive toward the upper wall).
    pub manikin_positions: Vec<(f64, f64)>,
    pub manikin_radius: f64,
    pub resolution: f64,
    pub goal_tolerance: f64,
    pub timeout_s: f64,
}

impl Default for ZigzagLayout {
    fn default() -> Self {
        Self {
            name: "zigzag25".into(),
            corridor_length: 25.0,
            corridor_width: 3.0,
            board_count: 8,
            board_length: 1.2,
            board_thickness: 0.1,
            wall_thickness: 0.2,
            end_margin: 1.5,
            manikin_positions: vec![(9.1, -0.95), (17.5, 0.95)],
            manikin_radius: 0.25,
            resolution: 0.05,
            goal_tolerance: 0.5,
            timeout_s: 180.0,
        }
    }
}

impl ZigzagLayout {
    /// Lower edge (y) of the corridor interior.
    fn floor_y(&self) -> f64 {
        self.wall_thickness
    }

    fn centerline_y(&self) -> f64 {
        self.wall_thickness + 0.5 * self.corridor_width
    }

    /// Position along the corridor of board `i` (center of its thickness).
    pub fn board_x(&self, i: usize) -> f64 {
        self.end_margin + self.corridor_length * (i + 1) as f64 / (self.board_count + 1) as f64
    }

    /// Produce the scenario document; `min_gap` is the narrowest passage the
    /// robot needs (twice the planner inflation radius).
    pub fn to_spec(&self, min_gap: f64) -> Result<ScenarioSpec> {
        if !(self.corridor_length > 0.0 && self.corridor_width > 0.0) {
            return Err(Error::Scenario("corridor dimensions must be positive".into()));
        }
        if self.board_length < 0.0 || self.board_thickness <= 0.0 {
            return Err(Error::Scenario("board dimensions must be non-negative".into()));
        }
        let gap = self.corridor_width - self.board_length;
        if self.board_count > 0 && gap < min_gap {
            return Err(Error::Scenario(format!(
                "boards leave a {gap:.3} m gap, need at least {min_gap:.3} m"
            )));
        }
        let spacing = self.corridor_length / (self.board_count + 1) as f64;
        if self.board_count > 0 && spacing <= self.board_thickness {
            return Err(Error::Scenario(format!(
                "{} boards of thickness {} do not fit in {} m",
                self.board_count, self.board_thickness, self.corridor_length
            )));
        }

        let total_x = self.corridor_length + 2.0 * self.end_margin;
        let total_y = self.corridor_width + 2.0 * self.wall_thickness;
        let wt = self.wall_thickness;
        let mut obstacles = vec![
            Obstacle::rect(Rect::new(0.0, 0.0, total_x, wt)),
            Obstacle::rect(Rect::new(0.0, total_y - wt, total_x, total_y)),
            Obstacle::rect(Rect::new(0.0, 0.0, wt.min(0.5 * self.end_margin), total_y)),
            Obstacle::rect(Rect::new(total_x - wt.min(0.5 * self.end_margin), 0.0, total_x, total_y)),
        ];
        let floor = self.floor_y();
        let ceiling = floor + self.corridor_width;
        for i in 0..self.board_count {
            let x = self.board_x(i);
            let (lo, hi) = if i % 2 == 0 {
                (floor, floor + self.board_length)
            } else {
                (ceiling - self.board_length, ceiling)
            };
            let half = 0.5 * self.board_thickness;
            obstacles.push(Obstacle::rect(Rect::new(x - half, lo, x + half, hi)));
        }
        for &(mx, my) in &self.manikin_positions {
            obstacles.push(Obstacle::Circle {
                x: self.end_margin + mx,
                y: self.centerline_y() + my,
                radius: self.manikin_radius,
            });
        }

        Ok(ScenarioSpec {
            name: self.name.clone(),
            resolution: self.resolution,
            extents: Extents {
                width: total_x,
                height: total_y,
            },
            obstacles,
            start: Pose2D::new(self.end_margin, self.centerline_y(), 0.0),
            goal: GoalPoint {
                x: self.end_margin + self.corridor_length,
                y: self.centerline_y(),
            },
            goal_tolerance: self.goal_tolerance,
            timeout_s: self.timeout_s,
            preference_regions: Vec::new(),
        })
    }
}

/// Build the zigzag course and check that the goal is reachable on the
/// inflated grid.
pub fn zigzag_corridor(layout: &ZigzagLayout, inflation_radius: f64) -> Result<Scenario> {
    let spec = layout.to_spec(2.0 * inflation_radius)?;
    let scenario = spec.build(inflation_radius)?;
    let (_, reachable) = flood_fill(
        &scenario.grid,
        (spec.start.x, spec.start.y),
        Some((spec.goal.x, spec.goal.y)),
    );
    if !reachable {
        return Err(Error::Scenario(format!(
            "layout '{}' has no free path from start to goal",
            spec.name
        )));
    }
    Ok(scenario)
}
