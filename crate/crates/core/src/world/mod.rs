//! Occupancy grids, collision queries and the corridor course.

mod grid;
mod scenario;

pub use grid::{in_collision, inflate, rasterize, CellState, Extents, Obstacle, OccupancyGrid, Rect};
pub use scenario::{
    flood_fill, zigzag_corridor, GoalPoint, PreferenceRegion, Scenario, ScenarioSpec, ZigzagLayout,
};
pub(crate) use scenario::NEIGHBOURS_8;
