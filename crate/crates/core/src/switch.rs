//! Explore/exploit phase control and the pairwise switch-accuracy study.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CorrespondenceSet};
use crate::goal::{estimate_goal_from_relative, GoalEstimate};
use crate::matcher::{GoalView, MatcherConfig};
use crate::pnp::{ransac_pnp, PnpFailure, PnpResult, RansacConfig, SAMPLE_SIZE};
use crate::seeds;
use crate::sim::generate::{sample_free, sample_goal_pose};
use crate::sim::{AgentPose, Scene, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchConfig {
    /// Explore → Exploit needs strictly more matches than this.
    pub n_th: usize,
    /// Meters; estimates farther than this are treated as implausible.
    pub d_th: f64,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        Self { n_th: 50, d_th: 4.0 }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_th < SAMPLE_SIZE || !(self.d_th > 0.0) {
            return Err(Error::Config(format!("switch needs n_th >= {SAMPLE_SIZE} and d_th > 0")));
        }
        Ok(())
    }

    /// Whether the match count opens the gate to pose recovery.
    pub fn gate(&self, n: usize) -> bool {
        n > self.n_th
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NavPhase {
    Explore,
    Exploit(GoalEstimate),
}

impl NavPhase {
    pub fn is_exploit(&self) -> bool {
        matches!(self, NavPhase::Exploit(_))
    }

    pub fn estimate(&self) -> Option<&GoalEstimate> {
        match self {
            NavPhase::Exploit(e) => Some(e),
            NavPhase::Explore => None,
        }
    }
}

/// One transition of the phase machine. `pnp` and `est` are `None` when the
/// solver was not run; a failed or missing solve inside Exploit returns to
/// Explore.
pub fn step_phase(
    phase: &NavPhase,
    corr: &CorrespondenceSet,
    pnp: Option<&std::result::Result<PnpResult, PnpFailure>>,
    est: Option<&GoalEstimate>,
    cfg: &SwitchConfig,
) -> NavPhase {
    step_phase_counts(phase, corr.len(), pnp.is_some_and(|r| r.is_ok()), est, cfg)
}

/// [`step_phase`] on a match count and a solver success flag.
pub fn step_phase_counts(
    phase: &NavPhase,
    n: usize,
    pnp_ok: bool,
    est: Option<&GoalEstimate>,
    cfg: &SwitchConfig,
) -> NavPhase {
    let plausible = match est {
        Some(e) if pnp_ok && e.distance <= cfg.d_th => Some(*e),
        _ => None,
    };
    match (phase, plausible) {
        (NavPhase::Explore, Some(e)) if cfg.gate(n) => NavPhase::Exploit(e),
        (NavPhase::Explore, _) => NavPhase::Explore,
        (NavPhase::Exploit(_), Some(e)) => NavPhase::Exploit(e),
        (NavPhase::Exploit(_), None) => NavPhase::Explore,
    }
}

/// Ground-truth last-mile label for a pair of views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLabel {
    pub euclidean: f64,
    /// Absolute yaw difference, radians.
    pub angular: f64,
    /// Infinite when unreachable.
    pub geodesic: f64,
    pub label: bool,
}

pub const PAIR_MAX_DISTANCE: f64 = 3.0;
pub const PAIR_MAX_ANGLE_DEG: f64 = 22.5;
pub const PAIR_MAX_RATIO: f64 = 1.2;

pub fn label_pair(agent: &AgentPose, goal: &AgentPose, scene: &Scene) -> PairLabel {
    let euclidean = agent.distance_to(goal);
    let angular = agent.yaw_difference(goal).abs();
    let geodesic = scene.geodesic_distance(agent, goal).unwrap_or(f64::INFINITY).max(euclidean);
    let ratio_ok = if euclidean == 0.0 { true } else { geodesic / euclidean < PAIR_MAX_RATIO };
    let label = euclidean < PAIR_MAX_DISTANCE
        && angular < PAIR_MAX_ANGLE_DEG.to_radians()
        && geodesic.is_finite()
        && ratio_ok;
    PairLabel { euclidean, angular, geodesic, label }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    pub scene: usize,
    pub agent: AgentPose,
    pub goal: AgentPose,
    pub label: PairLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSampling {
    pub pairs_per_scene: usize,
    /// Goal views must show at least this many landmarks, as for episode goals.
    pub min_goal_landmarks: usize,
    pub goal_view_range: f64,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self { pairs_per_scene: 500, min_goal_landmarks: 60, goal_view_range: 6.0 }
    }
}

/// Balanced labeled pairs for one scene: positives are perturbations of a goal
/// view inside the last-mile bounds, negatives are random views of the scene.
pub fn sample_pairs<R: Rng>(
    scene: &Scene,
    scene_index: usize,
    intr: &CameraIntrinsics,
    sampling: &PairSampling,
    rng: &mut R,
) -> Result<Vec<ViewPair>> {
    let want_pos = sampling.pairs_per_scene / 2;
    let want_neg = sampling.pairs_per_scene - want_pos;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    let budget = 200 * sampling.pairs_per_scene.max(1);
    let mut tries = 0;
    while pos.len() < want_pos || neg.len() < want_neg {
        tries += 1;
        if tries > budget {
            return Err(Error::GenerationInfeasible {
                bucket: format!("pairs for {}", scene.id),
                reason: format!("{} positives, {} negatives after {budget} draws", pos.len(), neg.len()),
            });
        }
        let Some(goal) = sample_goal_pose(scene, intr, sampling.min_goal_landmarks, sampling.goal_view_range, rng)
        else {
            continue;
        };
        if pos.len() < want_pos {
            let r = PAIR_MAX_DISTANCE * rng.random::<f64>();
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let p = goal.position() + r * Vec2::new(a.cos(), a.sin());
            let yaw = goal.heading + rng.random_range(-1.0..1.0) * PAIR_MAX_ANGLE_DEG.to_radians();
            let agent = AgentPose::new(p.x, p.y, yaw);
            if scene.is_free(&p) {
                let label = label_pair(&agent, &goal, scene);
                if label.label {
                    pos.push(ViewPair { scene: scene_index, agent, goal, label });
                }
            }
        }
        if neg.len() < want_neg {
            let Some(p) = sample_free(scene, rng, 0.0) else { continue };
            let agent = AgentPose::new(p.x, p.y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            let label = label_pair(&agent, &goal, scene);
            if !label.label {
                neg.push(ViewPair { scene: scene_index, agent, goal, label });
            }
        }
    }
    pos.extend(neg);
    Ok(pos)
}

/// Per-pair outcome of the two switch predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub matches: usize,
    /// `Some` only for pairs that passed the match gate.
    pub stays_in_exploit: Option<bool>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchAccuracy {
    pub pairs: usize,
    pub explore_to_exploit: f64,
    /// Over gated pairs; `None` when no pair passed the gate.
    pub exploit_to_explore: Option<f64>,
    pub gated_pairs: usize,
    pub per_scene: Vec<(usize, f64)>,
}

/// Runs matcher and solver on every pair and scores both switch directions.
/// The Explore → Exploit predicate is `n > n_th`; the Exploit → Explore
/// predicate, scored on pairs that pass the gate, is a successful solve
/// with distance within `d_th`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_switch_accuracy(
    pairs: &[ViewPair],
    scenes: &[Scene],
    intr: &CameraIntrinsics,
    matcher: &MatcherConfig,
    ransac: &RansacConfig,
    cfg: &SwitchConfig,
    seed: u64,
) -> Result<(SwitchAccuracy, Vec<PairOutcome>)> {
    if pairs.is_empty() {
        return Err(Error::Domain("switch accuracy needs at least one pair".into()));
    }
    let outcomes: Vec<PairOutcome> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let scene = &scenes[p.scene];
            let mut rng = seeds::stream(seed, i as u64, 0x5a1);
            let view = GoalView::new(scene, &p.goal, intr, matcher.max_range);
            let corr = view.match_from(scene, &p.agent, intr, matcher, &mut rng);
            let n = corr.len();
            let stays_in_exploit = cfg.gate(n).then(|| {
                let r = ransac_pnp(&corr, intr, &ransac.with_seed(seeds::derive_seed(seed, i as u64, 0x5a2)));
                match r {
                    Ok(res) => estimate_goal_from_relative(&res.pose).distance <= cfg.d_th,
                    Err(_) => false,
                }
            });
            PairOutcome { matches: n, stays_in_exploit, label: p.label.label }
        })
        .collect();
    Ok((summarize(pairs, &outcomes, cfg), outcomes))
}

fn summarize(pairs: &[ViewPair], outcomes: &[PairOutcome], cfg: &SwitchConfig) -> SwitchAccuracy {
    let agree = |o: &PairOutcome| cfg.gate(o.matches) == o.label;
    let correct = outcomes.iter().filter(|o| agree(o)).count();
    let gated: Vec<&PairOutcome> = outcomes.iter().filter(|o| o.stays_in_exploit.is_some()).collect();
    let exploit_to_explore = (!gated.is_empty()).then(|| {
        gated.iter().filter(|o| o.stays_in_exploit == Some(o.label)).count() as f64 / gated.len() as f64
    });
    let mut scenes: Vec<usize> = pairs.iter().map(|p| p.scene).collect();
    scenes.sort_unstable();
    scenes.dedup();
    let per_scene = scenes
        .into_iter()
        .map(|s| {
            let idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].scene == s).collect();
            let ok = idx.iter().filter(|&&i| agree(&outcomes[i])).count();
            (s, ok as f64 / idx.len() as f64)
        })
        .collect();
    SwitchAccuracy {
        pairs: pairs.len(),
        explore_to_exploit: correct as f64 / pairs.len() as f64,
        exploit_to_explore,
        gated_pairs: gated.len(),
        per_scene,
    }
}
