use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::geodesic::{visible, GoalField, NavGraph};
use super::plane::{Bounds, ConvexPolygon, Segment, Vec2};
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidPose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Landmark {
    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn floor(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Planar agent pose; `heading` is counter-clockwise from the world x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

impl AgentPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::new(self.heading.cos(), self.heading.sin())
    }

    pub fn distance_to(&self, other: &AgentPose) -> f64 {
        (self.position() - other.position()).norm()
    }

    /// Absolute yaw difference in [0, π].
    pub fn yaw_difference(&self, other: &AgentPose) -> f64 {
        wrap_angle(self.heading - other.heading).abs()
    }

    /// Rotation taking world vectors into this pose's camera frame.
    fn camera_rotation(&self) -> Matrix3<f64> {
        let (s, c) = self.heading.sin_cos();
        Matrix3::new(s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0)
    }

    fn camera_center(&self, height: f64) -> Point3 {
        Point3::new(self.x, self.y, height)
    }

    /// World-to-camera transform for a camera mounted at `height`.
    pub fn camera_from_world(&self, height: f64) -> RigidPose {
        let r = self.camera_rotation();
        RigidPose { rotation: r, translation: -(r * self.camera_center(height)) }
    }

    pub fn world_to_camera(&self, p: &Point3, height: f64) -> Point3 {
        self.camera_rotation() * (p - self.camera_center(height))
    }

    /// The transform taking this camera's points into `goal`'s camera frame.
    pub fn relative_to(&self, goal: &AgentPose, height: f64) -> RigidPose {
        let ra = self.camera_rotation();
        let rg = goal.camera_rotation();
        RigidPose {
            rotation: rg * ra.transpose(),
            translation: rg * (self.camera_center(height) - goal.camera_center(height)),
        }
    }

    /// Goal camera position expressed in this camera's frame.
    pub fn goal_offset(&self, goal: &AgentPose, height: f64) -> Point3 {
        self.world_to_camera(&goal.camera_center(height), height)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub rooms: usize,
    pub seed: u64,
    pub wall_length: f64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub id: String,
    pub walls: Vec<Segment>,
    pub landmarks: Vec<Landmark>,
    pub bounds: Bounds,
    pub camera_height: f64,
    pub agent_radius: f64,
    pub meta: SceneMeta,
    obstacles: Vec<ConvexPolygon>,
    nav: NavGraph,
}

impl Scene {
    pub fn new(
        id: impl Into<String>,
        walls: Vec<Segment>,
        landmarks: Vec<Landmark>,
        camera_height: f64,
        agent_radius: f64,
        meta: SceneMeta,
    ) -> Result<Self> {
        if walls.is_empty() {
            return Err(Error::Domain("scene has no walls".into()));
        }
        if !(agent_radius > 0.0) || !(camera_height > 0.0) {
            return Err(Error::Domain("agent radius and camera height must be positive".into()));
        }
        let mut bounds = Bounds { min: [f64::INFINITY; 2], max: [f64::NEG_INFINITY; 2] };
        for w in &walls {
            for p in [w.a, w.b] {
                bounds.min[0] = bounds.min[0].min(p.x);
                bounds.min[1] = bounds.min[1].min(p.y);
                bounds.max[0] = bounds.max[0].max(p.x);
                bounds.max[1] = bounds.max[1].max(p.y);
            }
        }
        let obstacles: Vec<ConvexPolygon> =
            walls.iter().map(|w| ConvexPolygon::inflated_segment(w, agent_radius)).collect();
        let nav = NavGraph::build(&obstacles, &bounds);
        Ok(Self { id: id.into(), walls, landmarks, bounds, camera_height, agent_radius, meta, obstacles, nav })
    }

    pub fn obstacles(&self) -> &[ConvexPolygon] {
        &self.obstacles
    }

    pub fn nav_graph(&self) -> &NavGraph {
        &self.nav
    }

    /// Inside the outer bounds and at least the agent radius from every wall.
    pub fn is_free(&self, p: &Vec2) -> bool {
        self.bounds.contains(p) && !self.obstacles.iter().any(|o| o.contains_strict(p))
    }

    pub fn clearance(&self, p: &Vec2) -> f64 {
        self.walls.iter().map(|w| w.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    /// Whether the floor-plan segment `p → q` is blocked by a wall.
    pub fn occluded(&self, p: &Vec2, q: &Vec2) -> bool {
        self.walls.iter().any(|w| w.intersects(p, q))
    }

    /// Straight-line traversability for the agent between two free points.
    pub fn traversable(&self, p: &Vec2, q: &Vec2) -> bool {
        visible(&self.obstacles, p, q)
    }

    pub fn goal_field(&self, goal: Vec2) -> GoalField {
        GoalField::new(&self.nav, &self.obstacles, goal)
    }

    pub fn field_distance(&self, field: &GoalField, p: &Vec2) -> Option<f64> {
        field.distance(&self.nav, &self.obstacles, p)
    }

    /// Shortest collision-free path length; `None` when disconnected.
    pub fn geodesic_distance(&self, a: &AgentPose, b: &AgentPose) -> Option<f64> {
        let (pa, pb) = (a.position(), b.position());
        if pa == pb {
            return Some(0.0);
        }
        let field = self.goal_field(pb);
        self.field_distance(&field, &pa)
    }

    /// Free floor area estimated on a `res`-spaced lattice.
    pub fn free_area(&self, res: f64) -> f64 {
        let nx = ((self.bounds.max[0] - self.bounds.min[0]) / res).ceil() as usize;
        let ny = ((self.bounds.max[1] - self.bounds.min[1]) / res).ceil() as usize;
        let mut count = 0usize;
        for i in 0..nx {
            for j in 0..ny {
                let p = Vec2::new(
                    self.bounds.min[0] + (i as f64 + 0.5) * res,
                    self.bounds.min[1] + (j as f64 + 0.5) * res,
                );
                if self.is_free(&p) {
                    count += 1;
                }
            }
        }
        count as f64 * res * res
    }

    pub fn landmark(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.get(id as usize).filter(|l| l.id == id).or_else(|| self.landmarks.iter().find(|l| l.id == id))
    }

    /// Total wall length.
    pub fn wall_length(&self) -> f64 {
        self.walls.iter().map(Segment::length).sum()
    }
}

/// Unit direction in the world for a bearing relative to `pose` (CCW positive).
pub fn bearing_direction(pose: &AgentPose, bearing: f64) -> Vec2 {
    let a = pose.heading + bearing;
    Vec2::new(a.cos(), a.sin())
}
