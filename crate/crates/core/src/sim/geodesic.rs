//! Exact shortest paths for a disc-shaped agent among inflated walls.
//!
//! Walls are inflated into convex polygons; the shortest collision-free path
//! between two free points bends only at convex polygon vertices, so a
//! visibility graph over those vertices gives exact geodesic distances.

use std::collections::BinaryHeap;

use super::plane::{Bounds, ConvexPolygon, Vec2};
use crate::heap::MinCost;

pub(crate) fn visible(obstacles: &[ConvexPolygon], p: &Vec2, q: &Vec2) -> bool {
    !obstacles.iter().any(|o| o.crosses_interior(p, q))
}

#[derive(Debug, Clone, Default)]
pub struct NavGraph {
    vertices: Vec<Vec2>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NavGraph {
    pub fn build(obstacles: &[ConvexPolygon], bounds: &Bounds) -> Self {
        let vertices: Vec<Vec2> = obstacles
            .iter()
            .flat_map(|o| o.vertices.iter().copied())
            .filter(|v| bounds.contains(v) && !obstacles.iter().any(|o| o.contains_strict(v)))
            .collect();
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for i in 0..vertices.len() {
            for j in i + 1..vertices.len() {
                if visible(obstacles, &vertices[i], &vertices[j]) {
                    let w = (vertices[i] - vertices[j]).norm();
                    adjacency[i].push((j, w));
                    adjacency[j].push((i, w));
                }
            }
        }
        Self { vertices, adjacency }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }
}

/// Geodesic distance from every free point to one fixed target.
#[derive(Debug, Clone)]
pub struct GoalField {
    goal: Vec2,
    vertex_dist: Vec<f64>,
}

impl GoalField {
    pub fn new(graph: &NavGraph, obstacles: &[ConvexPolygon], goal: Vec2) -> Self {
        let n = graph.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        for (i, v) in graph.vertices.iter().enumerate() {
            if visible(obstacles, &goal, v) {
                dist[i] = (v - goal).norm();
                heap.push(MinCost { cost: dist[i], item: i });
            }
        }
        while let Some(MinCost { cost, item }) = heap.pop() {
            if cost > dist[item] {
                continue;
            }
            for &(j, w) in &graph.adjacency[item] {
                let c = cost + w;
                if c < dist[j] {
                    dist[j] = c;
                    heap.push(MinCost { cost: c, item: j });
                }
            }
        }
        Self { goal, vertex_dist: dist }
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    /// Geodesic distance from `p` to the goal; `None` when disconnected.
    pub fn distance(&self, graph: &NavGraph, obstacles: &[ConvexPolygon], p: &Vec2) -> Option<f64> {
        if visible(obstacles, p, &self.goal) {
            return Some((p - self.goal).norm());
        }
        // Candidates in order of their optimistic total; the first visible one is optimal.
        let mut order: Vec<(f64, usize)> = graph
            .vertices
            .iter()
            .zip(&self.vertex_dist)
            .enumerate()
            .filter(|(_, (_, d))| d.is_finite())
            .map(|(i, (v, d))| ((v - p).norm() + d, i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        order.into_iter().find(|&(_, i)| visible(obstacles, p, &graph.vertices[i])).map(|(c, _)| c)
    }
}
