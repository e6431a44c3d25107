use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::NoiseModel;
use super::plane::Vec2;
use super::scene::{wrap_angle, AgentPose, Scene};
use crate::error::{Error, Result};
use crate::local_policy::DiscreteAction;

/// Distance kept from the first obstacle contact so that the agent never
/// ends a move touching an inflated wall.
const CONTACT_BACKOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Kinematics {
    pub forward_step: f64,
    pub turn_deg: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self { forward_step: 0.25, turn_deg: 15.0 }
    }
}

impl Kinematics {
    pub fn validate(&self) -> Result<()> {
        if !(self.forward_step > 0.0) || !(self.turn_deg > 0.0 && self.turn_deg < 180.0) {
            return Err(Error::Config("agent.forward_step must be > 0 and agent.turn_deg in (0, 180)".into()));
        }
        Ok(())
    }

    pub fn turn(&self) -> f64 {
        self.turn_deg.to_radians()
    }
}

/// The agent's true pose and what its odometry reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub truth: AgentPose,
    pub reported: AgentPose,
}

impl AgentState {
    pub fn at(pose: AgentPose) -> Self {
        Self { truth: pose, reported: pose }
    }
}

/// Moves from `from` along `disp`, stopping just short of the first inflated wall.
pub fn sweep(scene: &Scene, from: &Vec2, disp: &Vec2) -> Vec2 {
    let len = disp.norm();
    if len == 0.0 {
        return *from;
    }
    let to = from + disp;
    let hit = scene.obstacles().iter().filter_map(|o| o.entry(from, &to)).fold(f64::INFINITY, f64::min);
    if hit.is_finite() {
        let t = (hit - CONTACT_BACKOFF / len).max(0.0);
        from + t * disp
    } else {
        to
    }
}

/// Executes one action. The true pose follows the commanded motion plus a
/// noise draw and is stopped by walls; the reported pose integrates the
/// realized motion plus an independent draw.
pub fn apply_action<R: Rng>(
    state: &AgentState,
    action: DiscreteAction,
    scene: &Scene,
    kin: &Kinematics,
    noise: &NoiseModel,
    rng: &mut R,
) -> AgentState {
    let (step, turn) = match action {
        DiscreteAction::Stop => return *state,
        DiscreteAction::Forward => (kin.forward_step, 0.0),
        DiscreteAction::TurnLeft => (0.0, kin.turn()),
        DiscreteAction::TurnRight => (0.0, -kin.turn()),
    };
    let translating = step > 0.0;
    let actual = noise.sample_motion(rng, translating);
    let sensed = noise.sample_motion(rng, translating);

    let pose = state.truth;
    let (s, c) = pose.heading.sin_cos();
    let (along, across) = (step + actual.along, actual.across);
    let disp = Vec2::new(along * c - across * s, along * s + across * c);
    let from = pose.position();
    let to = if translating { sweep(scene, &from, &disp) } else { from };
    let truth = AgentPose::new(to.x, to.y, wrap_angle(pose.heading + turn + actual.rotation));

    if noise.pose_is_zero() {
        return AgentState { truth, reported: truth };
    }
    // Realized motion in the pre-action body frame, as odometry would see it.
    let moved = to - from;
    let m_along = moved.x * c + moved.y * s + if translating { sensed.along } else { 0.0 };
    let m_across = -moved.x * s + moved.y * c + if translating { sensed.across } else { 0.0 };
    let d_heading = wrap_angle(truth.heading - pose.heading) + sensed.rotation;
    let r = state.reported;
    let (rs, rc) = r.heading.sin_cos();
    let reported = AgentPose::new(
        r.x + m_along * rc - m_across * rs,
        r.y + m_along * rs + m_across * rc,
        wrap_angle(r.heading + d_heading),
    );
    AgentState { truth, reported }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::fixtures::box_room;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(state: AgentState, action: DiscreteAction, scene: &Scene, noise: &NoiseModel, seed: u64) -> AgentState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        apply_action(&state, action, scene, &Kinematics::default(), noise, &mut rng)
    }

    #[test]
    fn forward_in_open_space() {
        let scene = box_room(6.0, 6.0);
        let s = AgentState::at(AgentPose::new(3.0, 3.0, 0.7));
        let out = run(s, DiscreteAction::Forward, &scene, &NoiseModel::none(), 0);
        assert!((out.truth.distance_to(&s.truth) - 0.25).abs() < 1e-12);
        let dir = (out.truth.position() - s.truth.position()).normalize();
        assert!((dir - s.truth.forward()).norm() < 1e-12);
        assert_eq!(out.reported, out.truth);
    }

    #[test]
    fn forward_into_wall_is_blocked() {
        let scene = box_room(6.0, 6.0);
        // Wall at x = 6, agent center 0.1 m from its inflated boundary.
        let s = AgentState::at(AgentPose::new(6.0 - 0.18 - 0.1, 3.0, 0.0));
        let out = run(s, DiscreteAction::Forward, &scene, &NoiseModel::none(), 0);
        let moved = out.truth.distance_to(&s.truth);
        assert!(moved < 0.1 + 1e-9 && moved > 0.09, "{moved}");
        assert!(scene.clearance(&out.truth.position()) >= scene.agent_radius);
        let again = run(out, DiscreteAction::Forward, &scene, &NoiseModel::none(), 0);
        assert!(again.truth.distance_to(&out.truth) < 1e-5);
    }

    #[test]
    fn turns_are_inverse() {
        let scene = box_room(6.0, 6.0);
        let s = AgentState::at(AgentPose::new(3.0, 3.0, 0.3));
        let l = run(s, DiscreteAction::TurnLeft, &scene, &NoiseModel::none(), 0);
        assert!((l.truth.heading - (0.3 + 15f64.to_radians())).abs() < 1e-12);
        let back = run(l, DiscreteAction::TurnRight, &scene, &NoiseModel::none(), 0);
        assert!((back.truth.heading - 0.3).abs() < 1e-12);
        assert_eq!(back.truth.position(), s.truth.position());
    }

    #[test]
    fn stop_is_identity() {
        let scene = box_room(6.0, 6.0);
        let s = AgentState::at(AgentPose::new(3.0, 3.0, 0.3));
        assert_eq!(run(s, DiscreteAction::Stop, &scene, &NoiseModel::full(), 1), s);
    }

    #[test]
    fn noisy_motion_stays_clear_of_walls() {
        let scene = box_room(3.0, 3.0);
        let noise = NoiseModel::pose_only().scaled(4.0);
        let mut s = AgentState::at(AgentPose::new(1.5, 1.5, 0.0));
        let actions = [DiscreteAction::Forward, DiscreteAction::Forward, DiscreteAction::TurnLeft];
        for i in 0..600 {
            s = run(s, actions[i % 3], &scene, &noise, i as u64);
            assert!(scene.clearance(&s.truth.position()) >= scene.agent_radius, "step {i}");
        }
        assert_ne!(s.reported, s.truth);
    }
}
