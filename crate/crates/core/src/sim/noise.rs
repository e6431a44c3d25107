//! Actuation and depth-sensor noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One Gaussian component of the actuation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseNoiseComponent {
    pub weight: f64,
    /// Meters, applied independently along and across the heading on Forward.
    pub trans_sigma: f64,
    /// Degrees, applied to every motion action.
    pub rot_sigma_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Mixture of actuation noise components; empty means noiseless motion.
    pub pose: Vec<PoseNoiseComponent>,
    /// Relative sigma of the multiplicative depth noise.
    pub depth_sigma_rel: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::full()
    }
}

/// Sampled actuation error for one action.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotionNoise {
    pub along: f64,
    pub across: f64,
    pub rotation: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { pose: Vec::new(), depth_sigma_rel: 0.0 }
    }

    pub fn pose_only() -> Self {
        Self {
            pose: vec![PoseNoiseComponent { weight: 1.0, trans_sigma: 0.025, rot_sigma_deg: 0.9 }],
            depth_sigma_rel: 0.0,
        }
    }

    pub fn full() -> Self {
        Self { depth_sigma_rel: 0.02, ..Self::pose_only() }
    }

    /// Every sigma multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pose: self
                .pose
                .iter()
                .map(|c| PoseNoiseComponent {
                    weight: c.weight,
                    trans_sigma: c.trans_sigma * factor,
                    rot_sigma_deg: c.rot_sigma_deg * factor,
                })
                .collect(),
            depth_sigma_rel: self.depth_sigma_rel * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.pose {
            if !(c.weight > 0.0) || !(c.trans_sigma >= 0.0) || !(c.rot_sigma_deg >= 0.0) {
                return Err(Error::Config("noise.pose components need weight > 0 and sigmas >= 0".into()));
            }
        }
        if !(self.depth_sigma_rel >= 0.0) {
            return Err(Error::Config("noise.depth_sigma_rel must be >= 0".into()));
        }
        Ok(())
    }

    pub fn pose_is_zero(&self) -> bool {
        self.pose.iter().all(|c| c.trans_sigma == 0.0 && c.rot_sigma_deg == 0.0)
    }

    pub fn sample_motion<R: Rng>(&self, rng: &mut R, translating: bool) -> MotionNoise {
        if self.pose_is_zero() {
            return MotionNoise::default();
        }
        let total: f64 = self.pose.iter().map(|c| c.weight).sum();
        let mut pick = rng.random::<f64>() * total;
        let mut comp = self.pose[self.pose.len() - 1];
        for c in &self.pose {
            if pick < c.weight {
                comp = *c;
                break;
            }
            pick -= c.weight;
        }
        let gauss = |rng: &mut R, sigma: f64| {
            if sigma > 0.0 {
                Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
            } else {
                0.0
            }
        };
        let (along, across) =
            if translating { (gauss(rng, comp.trans_sigma), gauss(rng, comp.trans_sigma)) } else { (0.0, 0.0) };
        MotionNoise { along, across, rotation: gauss(rng, comp.rot_sigma_deg.to_radians()) }
    }

    /// Multiplies a true depth by `1 + ε`, ε ~ N(0, σ_rel), keeping it positive.
    pub fn perturb_depth<R: Rng>(&self, rng: &mut R, depth: f64) -> f64 {
        if self.depth_sigma_rel == 0.0 {
            return depth;
        }
        let eps = Normal::new(0.0, self.depth_sigma_rel).map(|n| n.sample(rng)).unwrap_or(0.0);
        (depth * (1.0 + eps)).max(1e-3 * depth)
    }
}
