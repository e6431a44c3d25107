use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::epnp;
use super::refine::refine_points;
use crate::error::{Error, Result};
use crate::geometry::{point_error, CameraIntrinsics, CorrespondenceSet, Pixel, Point3, RigidPose};

pub const SAMPLE_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Pixels; a correspondence is an inlier when its squared error is below the square of this.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub confidence: f64,
    pub rng_seed: u64,
    /// Nonlinear refinement over the consensus set.
    pub refine: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            inlier_threshold: 2.0,
            min_inliers: 10,
            confidence: 0.999,
            rng_seed: 0,
            refine: true,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config("ransac.max_iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::Config("ransac.inlier_threshold must be > 0".into()));
        }
        if self.min_inliers < SAMPLE_SIZE {
            return Err(Error::Config(format!("ransac.min_inliers must be >= {SAMPLE_SIZE}")));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config("ransac.confidence must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    pub pose: RigidPose,
    pub inlier_mask: Vec<bool>,
    /// Mean squared reprojection error over inliers (pixels²).
    pub mean_inlier_error: f64,
    pub iterations_used: usize,
}

impl PnpResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|m| **m).count()
    }
}

/// Why pose recovery produced no usable estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnpFailure {
    InsufficientPoints { got: usize },
    TooFewInliers { best: usize },
    AllDegenerate,
}

impl std::fmt::Display for PnpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PnpFailure::InsufficientPoints { got } => write!(f, "only {got} correspondences"),
            PnpFailure::TooFewInliers { best } => write!(f, "best hypothesis had {best} inliers"),
            PnpFailure::AllDegenerate => write!(f, "every hypothesis was degenerate"),
        }
    }
}

/// Hypothesis count needed to draw one all-inlier sample with probability `confidence`.
fn adaptive_bound(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let all_inlier = inlier_ratio.powi(SAMPLE_SIZE as i32);
    if all_inlier >= 1.0 {
        return 1;
    }
    if all_inlier <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - all_inlier).ln();
    if !k.is_finite() || k >= cap as f64 {
        cap
    } else {
        (k.ceil() as usize).max(1)
    }
}

fn inlier_mask(pose: &RigidPose, pts: &[Point3], pix: &[Pixel], intr: &CameraIntrinsics, thr_sq: f64) -> Vec<bool> {
    pts.iter().zip(pix).map(|(x, p)| point_error(pose, x, p, intr) < thr_sq).collect()
}

fn masked<T: Copy>(items: &[T], mask: &[bool]) -> Vec<T> {
    items.iter().zip(mask).filter_map(|(x, m)| m.then_some(*x)).collect()
}

fn masked_cost(pose: &RigidPose, pts: &[Point3], pix: &[Pixel], mask: &[bool], intr: &CameraIntrinsics) -> f64 {
    pts.iter()
        .zip(pix)
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((x, p), _)| point_error(pose, x, p, intr))
        .sum()
}

/// Robust relative pose from correspondences: minimal ePnP hypotheses scored
/// by inlier count, then a consensus re-solve and refinement.
pub fn ransac_pnp(
    corr: &CorrespondenceSet,
    intr: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> std::result::Result<PnpResult, PnpFailure> {
    let n = corr.len();
    if n < SAMPLE_SIZE {
        return Err(PnpFailure::InsufficientPoints { got: n });
    }
    if n < cfg.min_inliers {
        return Err(PnpFailure::TooFewInliers { best: 0 });
    }
    let pts = corr.lifted(intr);
    let pix = corr.goal_points();
    let thr_sq = cfg.inlier_threshold * cfg.inlier_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut best: Option<(usize, f64, RigidPose)> = None;
    let mut bound = cfg.max_iterations;
    let mut iterations = 0;
    let mut sample_pts = [Point3::zeros(); SAMPLE_SIZE];
    let mut sample_pix = [Pixel::new(0.0, 0.0); SAMPLE_SIZE];
    while iterations < bound {
        iterations += 1;
        let sample = index::sample(&mut rng, n, SAMPLE_SIZE);
        for (slot, i) in sample.iter().enumerate() {
            sample_pts[slot] = pts[i];
            sample_pix[slot] = pix[i];
        }
        let Ok(hypothesis) = epnp::solve_within(&sample_pts, &sample_pix, intr, 0.25 * thr_sq, false) else { continue };
        let mut count = 0;
        let mut cost = 0.0;
        for (x, p) in pts.iter().zip(pix) {
            let e = point_error(&hypothesis, x, p, intr);
            if e < thr_sq {
                count += 1;
                cost += e;
            }
        }
        let better = match &best {
            None => count > 0,
            Some((c, e, _)) => count > *c || (count == *c && cost < *e),
        };
        if better {
            best = Some((count, cost, hypothesis));
            bound = adaptive_bound(count as f64 / n as f64, cfg.confidence, cfg.max_iterations);
        }
    }

    let Some((count, _, hypothesis)) = best else {
        return Err(PnpFailure::AllDegenerate);
    };
    if count < cfg.min_inliers {
        return Err(PnpFailure::TooFewInliers { best: count });
    }

    let mut mask = inlier_mask(&hypothesis, &pts, pix, intr, thr_sq);
    let mut pose = hypothesis;
    let in_pts = masked(&pts, &mask);
    let in_pix = masked(pix, &mask);
    if let Ok(consensus) = epnp::solve(&in_pts, &in_pix, intr) {
        if masked_cost(&consensus, &pts, pix, &mask, intr) < masked_cost(&pose, &pts, pix, &mask, intr) {
            pose = consensus;
        }
    }
    if cfg.refine {
        pose = refine_points(&in_pts, &in_pix, intr, &pose).pose;
        let updated = inlier_mask(&pose, &pts, pix, intr, thr_sq);
        if updated != mask && updated.iter().filter(|m| **m).count() >= cfg.min_inliers {
            let refined = refine_points(&masked(&pts, &updated), &masked(pix, &updated), intr, &pose).pose;
            mask = inlier_mask(&refined, &pts, pix, intr, thr_sq);
            pose = refined;
        } else {
            mask = updated;
        }
    }

    let inliers = mask.iter().filter(|m| **m).count();
    if inliers < cfg.min_inliers {
        return Err(PnpFailure::TooFewInliers { best: inliers });
    }
    let mean_inlier_error = masked_cost(&pose, &pts, pix, &mask, intr) / inliers as f64;
    Ok(PnpResult { pose, inlier_mask: mask, mean_inlier_error, iterations_used: iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pnp::{epnp::epnp_solve, refine::refine_pose, synth};

    fn cfg(seed: u64) -> RansacConfig {
        RansacConfig { max_iterations: 500, inlier_threshold: 2.0, min_inliers: 10, rng_seed: seed, ..Default::default() }
    }

    #[test]
    fn adaptive_bound_behaves() {
        assert_eq!(adaptive_bound(1.0, 0.999, 1000), 1);
        assert_eq!(adaptive_bound(0.0, 0.999, 1000), 1000);
        let k = adaptive_bound(0.6, 0.999, 1000);
        assert!((50..=55).contains(&k), "{k}");
    }

    #[test]
    fn robust_to_forty_percent_outliers() {
        for seed in 0..20 {
            let case = synth::Case::with_outliers(seed, 50, 0.5, 0.4);
            let res = ransac_pnp(&case.corr, &case.intr, &cfg(seed)).unwrap();
            assert!(res.pose.rotation_angle_to(&case.truth) < 1f64.to_radians(), "seed {seed}");
            assert!(res.pose.translation_distance_to(&case.truth) < 0.05, "seed {seed}");
            let true_inliers = case.inlier_truth.iter().filter(|t| **t).count();
            let recovered = case.inlier_truth.iter().zip(&res.inlier_mask).filter(|(t, m)| **t && **m).count();
            assert!(recovered as f64 >= 0.9 * true_inliers as f64, "seed {seed}: {recovered}/{true_inliers}");
            assert!(res.inlier_count() >= 10);
        }
    }

    #[test]
    fn all_outliers_fail() {
        let mut failures = 0;
        for seed in 0..100 {
            let case = synth::Case::with_outliers(seed, 50, 0.0, 1.0);
            if ransac_pnp(&case.corr, &case.intr, &cfg(seed)).is_err() {
                failures += 1;
            }
        }
        assert_eq!(failures, 100);
    }

    #[test]
    fn clean_data_matches_direct_solve() {
        let case = synth::Case::random(5, 30);
        let res = ransac_pnp(&case.corr, &case.intr, &cfg(9)).unwrap();
        assert!(res.inlier_mask.iter().all(|m| *m));
        let direct = epnp_solve(&case.corr, &case.intr).unwrap();
        let direct = refine_pose(&case.corr, &case.intr, &direct, &vec![true; case.corr.len()]).pose;
        assert!(res.pose.rotation_angle_to(&direct) < 1e-9);
        assert!(res.pose.translation_distance_to(&direct) < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let case = synth::Case::with_outliers(3, 40, 0.5, 0.3);
        let a = ransac_pnp(&case.corr, &case.intr, &cfg(42)).unwrap();
        let b = ransac_pnp(&case.corr, &case.intr, &cfg(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_points_fail_without_panicking() {
        let case = synth::Case::random(1, 3);
        assert_eq!(ransac_pnp(&case.corr, &case.intr, &cfg(0)), Err(PnpFailure::InsufficientPoints { got: 3 }));
        let case = synth::Case::random(1, 8);
        assert!(matches!(ransac_pnp(&case.corr, &case.intr, &cfg(0)), Err(PnpFailure::TooFewInliers { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(RansacConfig::default().validate().is_ok());
        assert!(RansacConfig { min_inliers: 3, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { confidence: 1.0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { inlier_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
    }
}
