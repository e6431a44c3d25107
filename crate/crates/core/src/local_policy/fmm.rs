use std::collections::BinaryHeap;

use super::grid::{Cell, OccupancyGrid};
use crate::heap::MinCost;

/// Arrival distance (meters) from the waypoint over free cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub extent: usize,
    pub resolution: f64,
    pub waypoint: (usize, usize),
    values: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, (i, j): (usize, usize)) -> f64 {
        self.values[i * self.extent + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_reachable(&self, cell: (usize, usize)) -> bool {
        self.get(cell).is_finite()
    }
}

/// First-order upwind solution of |∇T| = 1 from two axis neighbor minima.
pub fn eikonal_update(a: f64, b: f64, h: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !hi.is_finite() || hi - lo >= h {
        lo + h
    } else {
        0.5 * (lo + hi + (2.0 * h * h - (hi - lo).powi(2)).sqrt())
    }
}

fn axis_minima(values: &[f64], n: usize, (i, j): (usize, usize)) -> (f64, f64) {
    let at = |a: usize, b: usize| values[a * n + b];
    let up = if i > 0 { at(i - 1, j) } else { f64::INFINITY };
    let down = if i + 1 < n { at(i + 1, j) } else { f64::INFINITY };
    let left = if j > 0 { at(i, j - 1) } else { f64::INFINITY };
    let right = if j + 1 < n { at(i, j + 1) } else { f64::INFINITY };
    (up.min(down), left.min(right))
}

const SOURCE_RADIUS: isize = 2;

/// Cells within a small disc of the source, with their Euclidean distances,
/// kept only when the box spanned with the source is entirely free so the
/// straight segment stays in free space.
fn source_ring(grid: &OccupancyGrid, (wi, wj): (usize, usize)) -> Vec<((usize, usize), f64)> {
    let n = grid.extent as isize;
    let r = SOURCE_RADIUS;
    let (wi, wj) = (wi as isize, wj as isize);
    let free = |a: isize, b: isize| a >= 0 && b >= 0 && a < n && b < n && grid.get((a as usize, b as usize)) == Cell::Free;
    let mut out = Vec::new();
    for di in -r..=r {
        for dj in -r..=r {
            if di * di + dj * dj > r * r {
                continue;
            }
            let clear = (di.min(0)..=di.max(0)).all(|x| (dj.min(0)..=dj.max(0)).all(|y| free(wi + x, wj + y)));
            if clear {
                let cell = ((wi + di) as usize, (wj + dj) as usize);
                out.push((cell, grid.resolution * ((di * di + dj * dj) as f64).sqrt()));
            }
        }
    }
    out
}

/// Fast marching over free cells from `waypoint`. Occupied and unknown cells
/// stay at +∞. The waypoint should already be free (see
/// [`OccupancyGrid::nearest_free`]); a non-free waypoint yields an all-∞ field.
pub fn fast_marching(grid: &OccupancyGrid, waypoint: (usize, usize)) -> DistanceField {
    let n = grid.extent;
    let h = grid.resolution;
    let mut values = vec![f64::INFINITY; n * n];
    let mut accepted = vec![false; n * n];
    let mut heap = BinaryHeap::new();
    if grid.get(waypoint) == Cell::Free {
        // Exact distances around the source remove most of the first-order
        // error that would otherwise start there and spread outward.
        for (cell, d) in source_ring(grid, waypoint) {
            values[grid.index(cell)] = d;
            heap.push(MinCost { cost: d, item: cell });
        }
    }
    while let Some(MinCost { cost, item }) = heap.pop() {
        let k = grid.index(item);
        if accepted[k] || cost > values[k] {
            continue;
        }
        accepted[k] = true;
        let (i, j) = item;
        let candidates = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        for (a, b) in candidates {
            if a >= n || b >= n {
                continue;
            }
            let kk = a * n + b;
            if accepted[kk] || grid.get((a, b)) != Cell::Free {
                continue;
            }
            let (x, y) = axis_minima(&values, n, (a, b));
            let t = eikonal_update(x, y, h);
            if t < values[kk] {
                values[kk] = t;
                heap.push(MinCost { cost: t, item: (a, b) });
            }
        }
    }
    DistanceField { extent: n, resolution: h, waypoint, values }
}
