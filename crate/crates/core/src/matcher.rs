//! Synthetic feature matcher: correspondences from landmarks visible in both
//! views, with pixel noise, dropout and outlier injection.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CorrespondenceSet, Pixel, Provenance};
use crate::sim::render::{view_landmark, visible_landmarks, LandmarkView};
use crate::sim::{AgentPose, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// Pixels, isotropic Gaussian noise on the agent-side pixel.
    pub pixel_noise_sigma: f64,
    pub detection_rate: f64,
    /// Fraction of emitted matches whose goal pixel is replaced at random.
    pub outlier_fraction: f64,
    /// Meters from the camera beyond which landmarks are not matched.
    pub max_range: f64,
    /// Relative sigma of multiplicative noise on the agent-side depth.
    pub depth_noise_rel: f64,
    pub rng_seed: u64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            pixel_noise_sigma: 0.5,
            detection_rate: 0.9,
            outlier_fraction: 0.2,
            max_range: 8.0,
            depth_noise_rel: 0.0,
            rng_seed: 0,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_noise_sigma >= 0.0)
            || !(0.0..=1.0).contains(&self.detection_rate)
            || !(0.0..1.0).contains(&self.outlier_fraction)
            || !(self.max_range > 0.0)
            || !(self.depth_noise_rel >= 0.0)
        {
            return Err(Error::Config(
                "matcher needs sigma >= 0, detection_rate in [0,1], outlier_fraction in [0,1), max_range > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Landmarks seen from the goal pose, computed once per episode.
#[derive(Debug, Clone)]
pub struct GoalView {
    pub pose: AgentPose,
    views: Vec<LandmarkView>,
}

impl GoalView {
    pub fn new(scene: &Scene, goal: &AgentPose, intr: &CameraIntrinsics, max_range: f64) -> Self {
        Self { pose: *goal, views: visible_landmarks(scene, goal, intr, max_range) }
    }

    pub fn landmarks(&self) -> &[LandmarkView] {
        &self.views
    }

    /// Noise-free true matches from `agent`: (agent view, goal view) per shared landmark.
    pub fn true_matches(
        &self,
        scene: &Scene,
        agent: &AgentPose,
        intr: &CameraIntrinsics,
        max_range: f64,
    ) -> Vec<(LandmarkView, LandmarkView)> {
        self.views
            .iter()
            .filter_map(|g| {
                let lm = scene.landmark(g.id)?;
                view_landmark(scene, agent, intr, max_range, lm).map(|a| (a, *g))
            })
            .collect()
    }

    pub fn match_from<R: Rng>(
        &self,
        scene: &Scene,
        agent: &AgentPose,
        intr: &CameraIntrinsics,
        cfg: &MatcherConfig,
        rng: &mut R,
    ) -> CorrespondenceSet {
        let mut a_pts = Vec::new();
        let mut g_pts = Vec::new();
        let mut depths = Vec::new();
        let mut prov = Vec::new();
        let pixel_noise = (cfg.pixel_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.pixel_noise_sigma).unwrap());
        let depth_noise = (cfg.depth_noise_rel > 0.0).then(|| Normal::new(0.0, cfg.depth_noise_rel).unwrap());
        for (a, g) in self.true_matches(scene, agent, intr, cfg.max_range) {
            if cfg.detection_rate < 1.0 && rng.random::<f64>() >= cfg.detection_rate {
                continue;
            }
            let pix = match &pixel_noise {
                Some(n) => Pixel::new(a.pixel.u + n.sample(rng), a.pixel.v + n.sample(rng)),
                None => a.pixel,
            };
            let depth = match &depth_noise {
                Some(n) => (a.depth * (1.0 + n.sample(rng))).max(1e-3 * a.depth),
                None => a.depth,
            };
            a_pts.push(pix);
            g_pts.push(g.pixel);
            depths.push(depth);
            prov.push(Some(Provenance::Inlier(a.id)));
        }
        let n = a_pts.len();
        let k = (cfg.outlier_fraction * n as f64).floor() as usize;
        if k > 0 {
            let mut picked: Vec<usize> = index::sample(rng, n, k).into_vec();
            picked.sort_unstable();
            for i in picked {
                g_pts[i] = Pixel::new(
                    rng.random_range(0.0..intr.width as f64),
                    rng.random_range(0.0..intr.height as f64),
                );
                if let Some(Provenance::Inlier(id)) = prov[i] {
                    prov[i] = Some(Provenance::Outlier(id));
                }
            }
        }
        CorrespondenceSet::with_provenance(a_pts, g_pts, depths, prov).expect("matcher emits consistent lists")
    }
}

/// Correspondences between the agent and goal views; deterministic in `cfg.rng_seed`.
pub fn match_views(
    scene: &Scene,
    agent: &AgentPose,
    goal: &AgentPose,
    intr: &CameraIntrinsics,
    cfg: &MatcherConfig,
) -> CorrespondenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    GoalView::new(scene, goal, intr, cfg.max_range).match_from(scene, agent, intr, cfg, &mut rng)
}

pub fn count_matches(corr: &CorrespondenceSet) -> usize {
    corr.len()
}
