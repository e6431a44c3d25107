//! Depth scans and landmark visibility.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::NoiseModel;
use super::plane::Vec2;
use super::scene::{bearing_direction, AgentPose, Landmark, Scene};
use crate::error::{Error, Result};
use crate::geometry::{project_unchecked, CameraIntrinsics, Pixel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
    pub scan_rays: usize,
    /// Meters; depth returns beyond this are reported as absent.
    pub max_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { width: 640, height: 480, hfov_deg: 120.0, scan_rays: 121, max_range: 5.0 }
    }
}

impl SensorConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_hfov(self.width, self.height, self.hfov_deg.to_radians())
            .map_err(|e| Error::Config(format!("sensor: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics()?;
        if self.scan_rays < 2 || !(self.max_range > 0.0) {
            return Err(Error::Config("sensor.scan_rays must be >= 2 and sensor.max_range > 0".into()));
        }
        Ok(())
    }
}

/// Horizontal depth fan; bearings are relative to the heading, left positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthScan {
    pub bearings: Vec<f64>,
    pub ranges: Vec<Option<f64>>,
    pub max_range: f64,
}

/// Distance to the nearest wall along a ray, if any.
pub fn raycast(scene: &Scene, origin: &Vec2, dir: &Vec2) -> Option<f64> {
    scene.walls.iter().filter_map(|w| w.ray_hit(origin, dir)).min_by(f64::total_cmp)
}

pub fn render_depth_scan<R: Rng>(
    pose: &AgentPose,
    hfov: f64,
    scene: &Scene,
    rays: usize,
    max_range: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> DepthScan {
    let origin = pose.position();
    let mut bearings = Vec::with_capacity(rays);
    let mut ranges = Vec::with_capacity(rays);
    for k in 0..rays {
        let b = -0.5 * hfov + hfov * k as f64 / (rays - 1) as f64;
        let hit = raycast(scene, &origin, &bearing_direction(pose, b)).filter(|r| *r <= max_range);
        bearings.push(b);
        ranges.push(hit.map(|r| noise.perturb_depth(rng, r)));
    }
    DepthScan { bearings, ranges, max_range }
}

/// A landmark as seen from one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkView {
    pub id: u32,
    pub pixel: Pixel,
    /// Camera-frame depth (z), meters.
    pub depth: f64,
}

/// Projection of `lm` if it is in the image, within `max_range` and not
/// hidden behind a wall in the floor plan.
pub fn view_landmark(
    scene: &Scene,
    pose: &AgentPose,
    intr: &CameraIntrinsics,
    max_range: f64,
    lm: &Landmark,
) -> Option<LandmarkView> {
    let cam = pose.world_to_camera(&lm.position(), scene.camera_height);
    if cam.z <= 0.0 || cam.norm() > max_range {
        return None;
    }
    let pixel = project_unchecked(&cam, intr);
    if !intr.contains(pixel) || scene.occluded(&pose.position(), &lm.floor()) {
        return None;
    }
    Some(LandmarkView { id: lm.id, pixel, depth: cam.z })
}

/// Every landmark visible from `pose`, in id order.
pub fn visible_landmarks(
    scene: &Scene,
    pose: &AgentPose,
    intr: &CameraIntrinsics,
    max_range: f64,
) -> Vec<LandmarkView> {
    scene.landmarks.iter().filter_map(|lm| view_landmark(scene, pose, intr, max_range, lm)).collect()
}

/// What the agent senses at one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub scan: DepthScan,
    pub landmarks: Vec<LandmarkView>,
}

pub fn render_observation<R: Rng>(
    pose: &AgentPose,
    intr: &CameraIntrinsics,
    scene: &Scene,
    sensor: &SensorConfig,
    landmark_range: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Observation {
    let scan = render_depth_scan(pose, intr.hfov(), scene, sensor.scan_rays, sensor.max_range, noise, rng);
    let landmarks = visible_landmarks(scene, pose, intr, landmark_range)
        .into_iter()
        .map(|v| LandmarkView { depth: noise.perturb_depth(rng, v.depth), ..v })
        .collect();
    Observation { scan, landmarks }
}
