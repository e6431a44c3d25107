//! Pinhole camera algebra shared by the pose solver and the goal estimator.
//!
//! Camera frames follow the usual computer-vision convention: `x` to the right,
//! `y` down and `z` along the optical axis.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A metric 3D point or direction in some camera frame.
pub type Point3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub px: f64,
    pub py: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, px: f64, py: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self { fx, fy, px, py, width, height };
        intr.validate()?;
        Ok(intr)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn from_hfov(width: u32, height: u32, hfov: f64) -> Result<Self> {
        if !(hfov > 0.0 && hfov < std::f64::consts::PI) {
            return Err(Error::Domain(format!("horizontal fov {hfov} outside (0, pi)")));
        }
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Domain("focal lengths must be positive".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.px) || !(0.0..=self.height as f64).contains(&self.py) {
            return Err(Error::Domain("principal point outside the image".into()));
        }
        Ok(())
    }

    pub fn hfov(&self) -> f64 {
        (self.px / self.fx).atan() + ((self.width as f64 - self.px) / self.fx).atan()
    }

    pub fn contains(&self, pix: Pixel) -> bool {
        pix.u >= 0.0 && pix.v >= 0.0 && pix.u < self.width as f64 && pix.v < self.height as f64
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.px, 0.0, self.fy, self.py, 0.0, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn dist_sq(&self, other: &Pixel) -> f64 {
        let du = self.u - other.u;
        let dv = self.v - other.v;
        du * du + dv * dv
    }
}

/// A rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Builds a pose, rejecting rotations that are not proper orthonormal matrices.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self { rotation, translation };
        if !pose.is_valid() {
            return Err(Error::Domain("rotation is not a proper orthonormal matrix".into()));
        }
        Ok(pose)
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::new(axis_angle).into_inner();
        Self { rotation, translation }
    }

    pub fn is_valid(&self) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        let ortho = (gram - Matrix3::identity()).abs().max() < Self::ORTHONORMAL_TOL;
        ortho
            && (self.rotation.determinant() - 1.0).abs() < Self::ORTHONORMAL_TOL
            && self.translation.iter().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn rotation_angle_to(&self, other: &RigidPose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let cos = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        cos.acos()
    }

    pub fn translation_distance_to(&self, other: &RigidPose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Projects a matrix onto the closest rotation (polar decomposition via SVD).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

/// Where a correspondence came from. Real matchers have no provenance; the
/// synthetic matcher tags every match with its landmark and whether its goal
/// side was replaced by a random pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Inlier(u32),
    Outlier(u32),
}

impl Provenance {
    pub fn landmark(&self) -> u32 {
        match *self {
            Provenance::Inlier(id) | Provenance::Outlier(id) => id,
        }
    }

    pub fn is_outlier(&self) -> bool {
        matches!(self, Provenance::Outlier(_))
    }
}

/// Matched pixel pairs between the agent view and the goal view, plus the
/// agent-side depth of each match.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    agent_points: Vec<Pixel>,
    goal_points: Vec<Pixel>,
    agent_depths: Vec<f64>,
    provenance: Vec<Option<Provenance>>,
}

impl CorrespondenceSet {
    pub fn new(agent_points: Vec<Pixel>, goal_points: Vec<Pixel>, agent_depths: Vec<f64>) -> Result<Self> {
        let n = agent_points.len();
        Self::with_provenance(agent_points, goal_points, agent_depths, vec![None; n])
    }

    pub fn with_provenance(
        agent_points: Vec<Pixel>,
        goal_points: Vec<Pixel>,
        agent_depths: Vec<f64>,
        provenance: Vec<Option<Provenance>>,
    ) -> Result<Self> {
        let n = agent_points.len();
        if goal_points.len() != n || agent_depths.len() != n || provenance.len() != n {
            return Err(Error::Domain(format!(
                "correspondence lists differ in length: {n}, {}, {}, {}",
                goal_points.len(),
                agent_depths.len(),
                provenance.len()
            )));
        }
        if let Some(d) = agent_depths.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::Domain(format!("non-positive agent depth {d}")));
        }
        Ok(Self { agent_points, goal_points, agent_depths, provenance })
    }

    pub fn len(&self) -> usize {
        self.agent_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent_points.is_empty()
    }

    pub fn agent_points(&self) -> &[Pixel] {
        &self.agent_points
    }

    pub fn goal_points(&self) -> &[Pixel] {
        &self.goal_points
    }

    pub fn agent_depths(&self) -> &[f64] {
        &self.agent_depths
    }

    pub fn provenance(&self) -> &[Option<Provenance>] {
        &self.provenance
    }

    /// Subset selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            agent_points: idx.iter().map(|&i| self.agent_points[i]).collect(),
            goal_points: idx.iter().map(|&i| self.goal_points[i]).collect(),
            agent_depths: idx.iter().map(|&i| self.agent_depths[i]).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    /// Agent-side points lifted into the agent camera frame.
    pub fn lifted(&self, intr: &CameraIntrinsics) -> Vec<Point3> {
        self.agent_points
            .iter()
            .zip(&self.agent_depths)
            .map(|(p, &d)| lift_unchecked(*p, d, intr))
            .collect()
    }
}

#[inline]
fn lift_unchecked(pix: Pixel, depth: f64, intr: &CameraIntrinsics) -> Point3 {
    Vector3::new((pix.u - intr.px) / intr.fx * depth, (pix.v - intr.py) / intr.fy * depth, depth)
}

/// Back-projects a pixel with known depth into the camera frame.
pub fn lift_to_3d(pix: Pixel, depth: f64, intr: &CameraIntrinsics) -> Result<Point3> {
    if !(depth > 0.0) {
        return Err(Error::Domain(format!("depth must be positive, got {depth}")));
    }
    Ok(lift_unchecked(pix, depth, intr))
}

pub fn project(pt: &Point3, intr: &CameraIntrinsics) -> Result<Pixel> {
    if !(pt.z > 0.0) {
        return Err(Error::PointBehindCamera { z: pt.z });
    }
    Ok(project_unchecked(pt, intr))
}

#[inline]
pub(crate) fn project_unchecked(pt: &Point3, intr: &CameraIntrinsics) -> Pixel {
    Pixel { u: intr.fx * pt.x / pt.z + intr.px, v: intr.fy * pt.y / pt.z + intr.py }
}

#[inline]
pub fn transform_point(pose: &RigidPose, pt: &Point3) -> Point3 {
    pose.rotation * pt + pose.translation
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReprojectionError {
    /// Squared pixel error per correspondence; `inf` when the point lands behind the goal camera.
    pub per_point: Vec<f64>,
    pub mean: f64,
}

/// Squared reprojection error of one lifted point under `pose`.
#[inline]
pub(crate) fn point_error(pose: &RigidPose, lifted: &Point3, observed: &Pixel, intr: &CameraIntrinsics) -> f64 {
    let q = transform_point(pose, lifted);
    if q.z <= 0.0 {
        return f64::INFINITY;
    }
    project_unchecked(&q, intr).dist_sq(observed)
}

pub fn reprojection_error(
    corr: &CorrespondenceSet,
    pose: &RigidPose,
    intr: &CameraIntrinsics,
) -> Result<ReprojectionError> {
    if corr.is_empty() {
        return Err(Error::Domain("reprojection error of an empty correspondence set".into()));
    }
    let per_point: Vec<f64> = corr
        .lifted(intr)
        .iter()
        .zip(corr.goal_points())
        .map(|(x, g)| point_error(pose, x, g, intr))
        .collect();
    let mean = per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(ReprojectionError { per_point, mean })
}
