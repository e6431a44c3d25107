use serde::{Deserialize, Serialize};

use super::fmm::{fast_marching, DistanceField};
use super::grid::{build_local_map, Cell, GridParams, OccupancyGrid};
use crate::error::{Error, Result};
use crate::goal::GoalEstimate;
use crate::sim::DepthScan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiscreteAction {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl DiscreteAction {
    pub fn code(self) -> char {
        match self {
            DiscreteAction::Forward => 'F',
            DiscreteAction::TurnLeft => 'L',
            DiscreteAction::TurnRight => 'R',
            DiscreteAction::Stop => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    pub grid: GridParams,
    /// Meters; an estimate closer than this issues Stop.
    pub stop_radius: f64,
    /// Degrees; Forward is chosen when the desired bearing is within half of it.
    pub turn_deg: f64,
    pub forward_step: f64,
    /// Cells followed down the distance field to pick the desired bearing.
    pub lookahead_cells: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self { grid: GridParams::default(), stop_radius: 0.75, turn_deg: 15.0, forward_step: 0.25, lookahead_cells: 5 }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.stop_radius >= 0.0) || !(self.turn_deg > 0.0) || !(self.forward_step > 0.0) || self.lookahead_cells == 0 {
            return Err(Error::Config("policy needs stop_radius >= 0, turn_deg > 0, forward_step > 0, lookahead >= 1".into()));
        }
        Ok(())
    }
}

/// Grid cell for a target at `distance` and `heading` (right positive),
/// pulled inward along its bearing until it lies inside the grid.
pub fn waypoint_cell(grid: &OccupancyGrid, distance: f64, heading: f64) -> (usize, usize) {
    let half = (grid.extent / 2) as f64 * grid.resolution;
    let (s, c) = (-heading).sin_cos();
    let limit = half / c.abs().max(s.abs()).max(1e-12);
    let r = distance.min(limit);
    let mut d = r;
    loop {
        if let Some(cell) = grid.cell_of(d * c, d * s) {
            return cell;
        }
        d -= 0.5 * grid.resolution;
    }
}

/// Whether any cell swept by a forward step is occupied or unknown.
pub fn front_blocked(grid: &OccupancyGrid, step: f64) -> bool {
    let cells = (step / grid.resolution).ceil().max(1.0) as usize;
    let (ci, cj) = grid.center();
    (1..=cells).any(|k| ci + k >= grid.extent || grid.get((ci + k, cj)) != Cell::Free)
}

/// Bearing (left positive) toward the point reached by following the
/// steepest descent of `field` for a few cells from the agent.
pub fn descent_bearing(field: &DistanceField, grid: &OccupancyGrid, lookahead: usize) -> Option<f64> {
    let start = grid.center();
    if !field.is_reachable(start) {
        return None;
    }
    let mut cur = start;
    for _ in 0..lookahead {
        if cur == field.waypoint {
            break;
        }
        // Steepest slope, so diagonal steps are not favored for their length.
        let here = field.get(cur);
        let slope = |c: (usize, usize)| {
            let len = if c.0 != cur.0 && c.1 != cur.1 { std::f64::consts::SQRT_2 } else { 1.0 };
            (field.get(c) - here) / len
        };
        let next = grid
            .neighbors8(cur)
            .filter(|&c| field.is_reachable(c))
            .min_by(|&a, &b| slope(a).total_cmp(&slope(b)).then(a.cmp(&b)))?;
        if field.get(next) >= field.get(cur) {
            break;
        }
        cur = next;
    }
    if cur == start {
        return None;
    }
    let (f, l) = grid.position(cur);
    Some(l.atan2(f))
}

/// One local-policy decision.
pub fn select_action(
    est: &GoalEstimate,
    grid: &OccupancyGrid,
    field: &DistanceField,
    params: &PolicyParams,
) -> DiscreteAction {
    if est.at_goal || est.distance < params.stop_radius {
        return DiscreteAction::Stop;
    }
    steer(grid, field, params)
}

/// Turn-or-advance toward the descent bearing, never driving into an
/// occupied cell.
pub fn steer(grid: &OccupancyGrid, field: &DistanceField, params: &PolicyParams) -> DiscreteAction {
    let blocked = front_blocked(grid, params.forward_step);
    let Some(bearing) = descent_bearing(field, grid, params.lookahead_cells) else {
        return if blocked { DiscreteAction::TurnRight } else { DiscreteAction::Forward };
    };
    let half = 0.5 * params.turn_deg.to_radians();
    if bearing.abs() <= half + 1e-12 {
        if !blocked {
            return DiscreteAction::Forward;
        }
        return if bearing > 0.0 { DiscreteAction::TurnLeft } else { DiscreteAction::TurnRight };
    }
    if bearing > 0.0 {
        DiscreteAction::TurnLeft
    } else {
        DiscreteAction::TurnRight
    }
}

/// Local map, field and action toward a target at (`distance`, `heading`).
pub struct LocalPlan {
    pub grid: OccupancyGrid,
    pub field: DistanceField,
}

pub fn plan(scan: &DepthScan, distance: f64, heading: f64, params: &PolicyParams) -> LocalPlan {
    let grid = build_local_map(scan, &params.grid);
    let target = waypoint_cell(&grid, distance, heading);
    let waypoint = grid.nearest_free(target).unwrap_or_else(|| grid.center());
    let field = fast_marching(&grid, waypoint);
    LocalPlan { grid, field }
}

/// Full local policy step for a goal estimate.
pub fn act_on_estimate(scan: &DepthScan, est: &GoalEstimate, params: &PolicyParams) -> DiscreteAction {
    if est.at_goal || est.distance < params.stop_radius {
        return DiscreteAction::Stop;
    }
    let p = plan(scan, est.distance, est.heading, params);
    select_action(est, &p.grid, &p.field, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_policy::grid::Cell;

    fn est(distance: f64, heading: f64) -> GoalEstimate {
        GoalEstimate { distance, heading, source_pose: None, at_goal: false }
    }

    fn open_grid() -> OccupancyGrid {
        OccupancyGrid::filled(0.1, 81, Cell::Free)
    }

    #[test]
    fn close_estimate_stops() {
        let g = open_grid();
        let f = fast_marching(&g, g.center());
        assert_eq!(select_action(&est(0.5, 0.0), &g, &f, &PolicyParams::default()), DiscreteAction::Stop);
    }

    #[test]
    fn goal_ahead_moves_forward() {
        let g = open_grid();
        let w = waypoint_cell(&g, 3.0, 0.0);
        let f = fast_marching(&g, w);
        assert_eq!(select_action(&est(3.0, 0.0), &g, &f, &PolicyParams::default()), DiscreteAction::Forward);
    }

    #[test]
    fn lateral_goals_turn_toward_them() {
        let g = open_grid();
        let params = PolicyParams::default();
        // Positive heading is to the right.
        let w = waypoint_cell(&g, 2.0, 0.8);
        assert_eq!(select_action(&est(2.0, 0.8), &g, &fast_marching(&g, w), &params), DiscreteAction::TurnRight);
        let w = waypoint_cell(&g, 2.0, -0.8);
        assert_eq!(select_action(&est(2.0, -0.8), &g, &fast_marching(&g, w), &params), DiscreteAction::TurnLeft);
    }

    #[test]
    fn wall_ahead_with_opening_left_turns_left() {
        let mut g = open_grid();
        let (ci, cj) = g.center();
        // Wall 0.5 m ahead spanning from far right to just left of the agent.
        for j in 0..(cj + 6) {
            for i in (ci + 5)..=(ci + 7) {
                g.set((i, j), Cell::Occupied);
            }
        }
        let w = waypoint_cell(&g, 3.0, 0.0);
        let f = fast_marching(&g, w);
        assert_eq!(select_action(&est(3.0, 0.0), &g, &f, &PolicyParams::default()), DiscreteAction::TurnLeft);
        // Oracle: the shortest grid path leaves the agent cell toward the left.
        let bearing = descent_bearing(&f, &g, 5).unwrap();
        assert!(bearing > 0.0);
    }

    #[test]
    fn never_forward_into_occupied_cell() {
        let mut g = open_grid();
        let (ci, cj) = g.center();
        g.set((ci + 1, cj), Cell::Occupied);
        let f = fast_marching(&g, waypoint_cell(&g, 3.0, 0.0));
        assert_ne!(select_action(&est(3.0, 0.0), &g, &f, &PolicyParams::default()), DiscreteAction::Forward);
    }

    #[test]
    fn unreachable_falls_back() {
        let mut g = OccupancyGrid::filled(0.1, 21, Cell::Occupied);
        let c = g.center();
        g.set(c, Cell::Free);
        g.set((c.0 + 1, c.1), Cell::Free);
        g.set((c.0 + 2, c.1), Cell::Free);
        g.set((c.0 + 3, c.1), Cell::Free);
        let f = fast_marching(&g, (0, 0));
        let params = PolicyParams::default();
        assert_eq!(select_action(&est(2.0, 0.0), &g, &f, &params), DiscreteAction::Forward);
        g.set((c.0 + 1, c.1), Cell::Occupied);
        assert_eq!(select_action(&est(2.0, 0.0), &g, &f, &params), DiscreteAction::TurnRight);
    }

    #[test]
    fn waypoint_is_clamped_into_grid() {
        let g = open_grid();
        let w = waypoint_cell(&g, 100.0, 0.0);
        assert_eq!(w, (80, 40));
        let w = waypoint_cell(&g, 100.0, std::f64::consts::FRAC_PI_2);
        assert_eq!(w, (40, 0));
    }
}
