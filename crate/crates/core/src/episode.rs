//! Episode rollouts and parallel batches.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::explorers::Explorer;
use crate::geometry::CameraIntrinsics;
use crate::goal::{estimate_goal_from_relative, heading_and_distance};
use crate::local_policy::{act_on_estimate, DiscreteAction};
use crate::matcher::GoalView;
use crate::pnp::ransac_pnp;
use crate::seeds;
use crate::sim::generate::Difficulty;
use crate::sim::{apply_action, render_depth_scan, AgentState, Episode, Scene};
use crate::switch::{step_phase, NavPhase};

const EPISODE_STREAM: u64 = 0xe9;
const MOTION: u64 = 1;
const SCAN: u64 = 2;
const MATCH: u64 = 3;
const SOLVE: u64 = 4;

/// One Stop action and where it left the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub step: usize,
    pub path_length: f64,
    /// Geodesic distance to the goal at the Stop.
    pub distance: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub index: usize,
    pub scene_id: String,
    pub difficulty: Difficulty,
    pub success: bool,
    pub path_length: f64,
    pub shortest_path: f64,
    pub final_distance: f64,
    pub steps: usize,
    pub stop_issued: bool,
    /// One character per step: `E` explore, `X` exploit, `C` cooldown after a failed Stop.
    pub phase_trace: String,
    /// One action code per step.
    pub actions: String,
    /// (predicted, true) heading in radians for every Exploit step.
    pub heading_log: Vec<[f64; 2]>,
    pub stop_events: Vec<StopEvent>,
}

/// Outcome an episode would have had under a smaller stop budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetOutcome {
    pub success: bool,
    pub path_length: f64,
    pub final_distance: f64,
}

impl EpisodeResult {
    /// Rollouts are identical up to the Stop that exhausts a budget, so any
    /// budget up to the one used for this run can be read off its Stop log.
    pub fn at_budget(&self, budget: usize) -> BudgetOutcome {
        for (i, e) in self.stop_events.iter().enumerate() {
            if e.success || i == budget {
                return BudgetOutcome { success: e.success, path_length: e.path_length, final_distance: e.distance };
            }
        }
        BudgetOutcome { success: false, path_length: self.path_length, final_distance: self.final_distance }
    }
}

/// Rolls out one episode. Randomness depends only on `(seed, index, step)`.
pub fn run_episode(
    ep: &Episode,
    index: usize,
    scene: &Scene,
    cfg: &Config,
    intr: &CameraIntrinsics,
    seed: u64,
) -> EpisodeResult {
    let ep_seed = seeds::derive_seed(seed, index as u64, EPISODE_STREAM);
    let goal = ep.goal;
    let field = scene.goal_field(goal.position());
    let geodesic = |p: &crate::sim::AgentPose| {
        scene.field_distance(&field, &p.position()).unwrap_or_else(|| p.distance_to(&goal))
    };
    let mut matcher = cfg.matcher;
    matcher.depth_noise_rel = cfg.noise.depth_sigma_rel;
    let view = GoalView::new(scene, &goal, intr, matcher.max_range);
    let mut explorer = Explorer::new(&cfg.explorer, scene, &goal);

    let mut state = AgentState::at(ep.start);
    let mut phase = NavPhase::Explore;
    let mut budget_left = cfg.run.stop_budget;
    let mut cooldown = 0;
    let mut path_length = 0.0;
    let mut phase_trace = String::new();
    let mut actions = String::new();
    let mut heading_log = Vec::new();
    let mut stop_events = Vec::new();
    let mut success = false;
    let max_steps = ep.max_steps.min(cfg.run.max_steps);

    for step in 0..max_steps {
        let stream = |purpose: u64| seeds::stream(ep_seed, step as u64, purpose);
        let scan = render_depth_scan(
            &state.truth,
            intr.hfov(),
            scene,
            cfg.sensor.scan_rays,
            cfg.sensor.max_range,
            &cfg.noise,
            &mut stream(SCAN),
        );

        let mut naive_stop = false;
        let trace;
        if cooldown > 0 {
            cooldown -= 1;
            trace = 'C';
        } else {
            let corr = view.match_from(scene, &state.truth, intr, &matcher, &mut stream(MATCH));
            if cfg.run.sling {
                let (pnp, est) = if phase.is_exploit() || cfg.switch.gate(corr.len()) {
                    let ransac = cfg.ransac.with_seed(seeds::derive_seed(ep_seed, step as u64, SOLVE));
                    let r = ransac_pnp(&corr, intr, &ransac);
                    let est = r.as_ref().ok().map(|res| estimate_goal_from_relative(&res.pose));
                    (Some(r), est)
                } else {
                    (None, None)
                };
                phase = step_phase(&phase, &corr, pnp.as_ref(), est.as_ref(), &cfg.switch);
            } else {
                naive_stop = cfg.switch.gate(corr.len());
            }
            trace = if phase.is_exploit() { 'X' } else { 'E' };
        }

        let action = match phase {
            NavPhase::Exploit(est) => {
                let offset = state.truth.goal_offset(&goal, scene.camera_height);
                let (_, truth_heading) = heading_and_distance(&offset);
                heading_log.push([est.heading, truth_heading]);
                act_on_estimate(&scan, &est, &cfg.policy)
            }
            NavPhase::Explore if naive_stop => DiscreteAction::Stop,
            NavPhase::Explore => explorer.act(scene, &state.reported, &scan, &cfg.policy),
        };
        phase_trace.push(trace);
        actions.push(action.code());

        if action == DiscreteAction::Stop {
            let distance = geodesic(&state.truth);
            let ok = distance < cfg.run.success_radius;
            stop_events.push(StopEvent { step, path_length, distance, success: ok });
            if ok {
                success = true;
                break;
            }
            if budget_left == 0 {
                break;
            }
            budget_left -= 1;
            phase = NavPhase::Explore;
            cooldown = cfg.run.retry_cooldown;
            continue;
        }
        let next = apply_action(&state, action, scene, &cfg.kinematics, &cfg.noise, &mut stream(MOTION));
        path_length += next.truth.distance_to(&state.truth);
        state = next;
    }

    EpisodeResult {
        index,
        scene_id: ep.scene_id.clone(),
        difficulty: ep.difficulty,
        success,
        path_length,
        shortest_path: ep.geodesic_length,
        final_distance: geodesic(&state.truth),
        steps: actions.len(),
        stop_issued: !stop_events.is_empty(),
        phase_trace,
        actions,
        heading_log,
        stop_events,
    }
}

/// Runs every episode on `workers` threads; results come back in episode order.
pub fn run_batch(scenes: &[Scene], episodes: &[Episode], cfg: &Config, seed: u64, workers: usize) -> Result<Vec<EpisodeResult>> {
    use rayon::prelude::*;

    let intr = cfg.sensor.intrinsics()?;
    let by_id: HashMap<&str, &Scene> = scenes.iter().map(|s| (s.id.as_str(), s)).collect();
    let resolved = episodes
        .iter()
        .map(|e| {
            by_id
                .get(e.scene_id.as_str())
                .copied()
                .ok_or_else(|| Error::Domain(format!("episode references unknown scene `{}`", e.scene_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        episodes
            .par_iter()
            .zip(resolved.par_iter())
            .enumerate()
            .map(|(i, (ep, scene))| run_episode(ep, i, scene, cfg, &intr, seed))
            .collect()
    }))
}
