use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::DepthScan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Meters per cell.
    pub resolution: f64,
    /// Cells per side; odd so the agent sits on the center cell.
    pub extent: usize,
    pub agent_radius: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { resolution: 0.1, extent: 81, agent_radius: 0.18 }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || self.extent % 2 == 0 || self.extent < 3 || !(self.agent_radius >= 0.0) {
            return Err(Error::Config("policy grid needs resolution > 0, odd extent >= 3, radius >= 0".into()));
        }
        Ok(())
    }
}

/// Agent-centered grid. Cell `(i, j)` sits `i - c` cells ahead of the agent
/// and `j - c` cells to its left, where `c` is the center index.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub extent: usize,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn filled(resolution: f64, extent: usize, cell: Cell) -> Self {
        let mut g = Self { resolution, extent, cells: vec![cell; extent * extent] };
        let c = g.center();
        g.set(c, Cell::Free);
        g
    }

    pub fn center(&self) -> (usize, usize) {
        (self.extent / 2, self.extent / 2)
    }

    pub fn get(&self, (i, j): (usize, usize)) -> Cell {
        self.cells[i * self.extent + j]
    }

    pub fn set(&mut self, (i, j): (usize, usize), cell: Cell) {
        self.cells[i * self.extent + j] = cell;
    }

    pub fn index(&self, (i, j): (usize, usize)) -> usize {
        i * self.extent + j
    }

    /// Cell containing the agent-frame point (`forward`, `left`) in meters.
    pub fn cell_of(&self, forward: f64, left: f64) -> Option<(usize, usize)> {
        let c = (self.extent / 2) as f64;
        let i = (forward / self.resolution + c).round();
        let j = (left / self.resolution + c).round();
        let max = (self.extent - 1) as f64;
        ((0.0..=max).contains(&i) && (0.0..=max).contains(&j)).then(|| (i as usize, j as usize))
    }

    /// Agent-frame coordinates (forward, left) of a cell center.
    pub fn position(&self, (i, j): (usize, usize)) -> (f64, f64) {
        let c = (self.extent / 2) as f64;
        ((i as f64 - c) * self.resolution, (j as f64 - c) * self.resolution)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn neighbors8(&self, (i, j): (usize, usize)) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.extent as isize;
        (-1isize..=1)
            .flat_map(move |di| (-1isize..=1).map(move |dj| (di, dj)))
            .filter(|&(di, dj)| di != 0 || dj != 0)
            .map(move |(di, dj)| (i as isize + di, j as isize + dj))
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < n && b < n)
            .map(|(a, b)| (a as usize, b as usize))
    }

    /// Marks every cell within `radius` of an occupied cell as occupied.
    pub fn inflate(&mut self, radius: f64) {
        let r = (radius / self.resolution).floor() as isize;
        let r2 = (radius / self.resolution).powi(2);
        let occupied: Vec<(usize, usize)> = (0..self.extent)
            .flat_map(|i| (0..self.extent).map(move |j| (i, j)))
            .filter(|&c| self.get(c) == Cell::Occupied)
            .collect();
        let n = self.extent as isize;
        for (i, j) in occupied {
            for di in -r..=r {
                for dj in -r..=r {
                    if (di * di + dj * dj) as f64 > r2 + 1e-9 {
                        continue;
                    }
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a >= 0 && b >= 0 && a < n && b < n {
                        self.set((a as usize, b as usize), Cell::Occupied);
                    }
                }
            }
        }
    }

    /// Nearest free cell to `target` by Euclidean cell distance.
    pub fn nearest_free(&self, target: (usize, usize)) -> Option<(usize, usize)> {
        if self.get(target) == Cell::Free {
            return Some(target);
        }
        let (ti, tj) = (target.0 as isize, target.1 as isize);
        (0..self.extent)
            .flat_map(|i| (0..self.extent).map(move |j| (i, j)))
            .filter(|&c| self.get(c) == Cell::Free)
            .min_by_key(|&(i, j)| {
                let (di, dj) = (i as isize - ti, j as isize - tj);
                (di * di + dj * dj, i, j)
            })
    }
}

/// Ray-traces a depth scan into an agent-centered grid: cells along a ray
/// before its return are free, the return cell is occupied, rays without a
/// return are free out to the scan range. Occupied cells are then inflated
/// by the agent radius and the agent's own cell is kept free.
pub fn build_local_map(scan: &DepthScan, params: &GridParams) -> OccupancyGrid {
    let mut grid = OccupancyGrid::filled(params.resolution, params.extent, Cell::Unknown);
    let step = params.resolution * 0.25;
    let mut hits = Vec::new();
    for (b, r) in scan.bearings.iter().zip(&scan.ranges) {
        let (s, c) = b.sin_cos();
        let reach = r.unwrap_or(scan.max_range);
        let hit_cell = r.and_then(|r| grid.cell_of(r * c, r * s));
        let mut d = 0.0;
        while d < reach {
            match grid.cell_of(d * c, d * s) {
                Some(cell) if Some(cell) == hit_cell => break,
                Some(cell) => grid.set(cell, Cell::Free),
                None => break,
            }
            d += step;
        }
        if r.is_none() {
            if let Some(cell) = grid.cell_of(reach * c, reach * s) {
                grid.set(cell, Cell::Free);
            }
        }
        if let Some(cell) = hit_cell {
            hits.push(cell);
        }
    }
    for cell in hits {
        grid.set(cell, Cell::Occupied);
    }
    grid.inflate(params.agent_radius);
    let c = grid.center();
    grid.set(c, Cell::Free);
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(ranges: Vec<Option<f64>>, fov: f64) -> DepthScan {
        let n = ranges.len();
        let bearings = (0..n).map(|k| -0.5 * fov + fov * k as f64 / (n - 1) as f64).collect();
        DepthScan { bearings, ranges, max_range: 4.0 }
    }

    #[test]
    fn empty_scan_frees_the_wedge() {
        let params = GridParams::default();
        let g = build_local_map(&scan(vec![None; 121], 120f64.to_radians()), &params);
        let (ci, cj) = g.center();
        for k in 1..=39 {
            assert_eq!(g.get((ci + k, cj)), Cell::Free);
        }
        // Behind the agent stays unknown.
        assert_eq!(g.get((ci - 5, cj)), Cell::Unknown);
        assert_eq!(g.get(g.center()), Cell::Free);
    }

    #[test]
    fn single_return_ahead() {
        let params = GridParams { agent_radius: 0.0, ..Default::default() };
        let g = build_local_map(&scan(vec![Some(1.0), Some(1.0), Some(1.0)], 1e-6), &params);
        let (ci, cj) = g.center();
        for k in 0..10 {
            assert_eq!(g.get((ci + k, cj)), Cell::Free, "cell {k}");
        }
        assert_eq!(g.get((ci + 10, cj)), Cell::Occupied);

        let inflated = build_local_map(&scan(vec![Some(1.0); 3], 1e-6), &GridParams::default());
        assert_eq!(inflated.get((ci + 9, cj)), Cell::Occupied);
        assert_eq!(inflated.get((ci + 10, cj + 1)), Cell::Occupied);
        assert_eq!(inflated.get((ci + 8, cj)), Cell::Free);
    }
}
