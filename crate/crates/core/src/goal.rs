//! Distance and heading to the goal from a recovered relative pose.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::RigidPose;

/// Translations shorter than this are reported as "already at the goal".
pub const AT_GOAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalEstimate {
    /// Meters, full 3D norm of the goal-camera offset.
    pub distance: f64,
    /// Radians in (-π, π]; positive when the goal lies to the agent's right.
    pub heading: f64,
    #[serde(skip)]
    pub source_pose: Option<RigidPose>,
    pub at_goal: bool,
}

/// Distance and signed heading of a goal offset expressed in the agent
/// camera frame (x right, y down, z forward).
///
/// The heading magnitude is the angle between the offset and the optical
/// axis; its sign comes from the lateral (x) component. Vertical offset counts
/// toward the distance but never toward the sign.
pub fn heading_and_distance(offset: &Vector3<f64>) -> (f64, f64) {
    let distance = offset.norm();
    if distance < AT_GOAL_EPS {
        return (0.0, 0.0);
    }
    let cos = (offset.z / distance).clamp(-1.0, 1.0);
    let magnitude = cos.acos();
    let heading = if offset.x < 0.0 { -magnitude } else { magnitude };
    (distance, heading)
}

/// `pose` is the goal camera expressed in the agent camera frame, so its
/// translation is the goal position relative to the agent.
pub fn estimate_goal(pose: &RigidPose) -> GoalEstimate {
    let (distance, heading) = heading_and_distance(&pose.translation);
    GoalEstimate { distance, heading, source_pose: Some(*pose), at_goal: distance < AT_GOAL_EPS }
}

/// The solver returns the transform taking agent-frame points into the goal
/// frame; the goal camera's placement in the agent frame is its inverse.
pub fn estimate_goal_from_relative(agent_to_goal: &RigidPose) -> GoalEstimate {
    estimate_goal(&agent_to_goal.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn at(t: [f64; 3]) -> GoalEstimate {
        estimate_goal(&RigidPose { translation: Vector3::from(t), ..RigidPose::identity() })
    }

    #[test]
    fn straight_ahead() {
        let e = at([0.0, 0.0, 2.0]);
        assert!((e.distance - 2.0).abs() < 1e-12);
        assert!(e.heading.abs() < 1e-12);
        assert!(!e.at_goal);
    }

    #[test]
    fn forty_five_degrees_right() {
        let e = at([1.0, 0.0, 1.0]);
        assert!((e.distance - SQRT_2).abs() < 1e-12);
        assert!((e.heading - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn pure_left() {
        let e = at([-1.0, 0.0, 0.0]);
        assert!((e.distance - 1.0).abs() < 1e-12);
        assert!((e.heading + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn zero_translation_is_at_goal() {
        let e = at([0.0, 0.0, 0.0]);
        assert!(e.at_goal);
        assert_eq!((e.distance, e.heading), (0.0, 0.0));
    }

    #[test]
    fn vertical_offset_never_sets_sign() {
        let up = at([0.0, -1.0, 1.0]);
        let down = at([0.0, 1.0, 1.0]);
        assert!(up.heading > 0.0 && down.heading > 0.0);
        assert!((up.heading - down.heading).abs() < 1e-15);
    }

    #[test]
    fn relative_pose_is_inverted() {
        // Goal camera 2 m ahead of the agent: agent-frame points appear 2 m closer to it.
        let rel = RigidPose { translation: Vector3::new(0.0, 0.0, -2.0), ..RigidPose::identity() };
        let e = estimate_goal_from_relative(&rel);
        assert!((e.distance - 2.0).abs() < 1e-12 && e.heading.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mirror_symmetry(x in -10.0f64..10.0, y in -1.0f64..1.0, z in -10.0f64..10.0) {
            prop_assume!(x.abs() > 1e-12);
            let a = at([x, y, z]);
            let b = at([-x, y, z]);
            prop_assert_eq!(a.heading, -b.heading);
            prop_assert_eq!(a.distance, b.distance);
        }

        #[test]
        fn scale_invariance(x in -10.0f64..10.0, y in -1.0f64..1.0, z in -10.0f64..10.0, s in 0.01f64..100.0) {
            prop_assume!(x.abs() + z.abs() > 1e-6);
            let a = at([x, y, z]);
            let b = at([s * x, s * y, s * z]);
            prop_assert!((a.heading - b.heading).abs() < 1e-12);
            prop_assert!((b.distance - s * a.distance).abs() < 1e-9 * (1.0 + b.distance));
        }
    }
}
