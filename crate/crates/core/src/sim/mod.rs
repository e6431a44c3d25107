//! Deterministic synthetic world: floor plans, landmarks, motion and sensing.

pub mod generate;
pub mod geodesic;
pub mod io;
pub mod kinematics;
pub mod noise;
pub mod plane;
pub mod render;
pub mod scene;

pub use generate::{generate_scene, generate_scenes_and_episodes, Difficulty, Episode, GenConfig};
pub use kinematics::{apply_action, AgentState, Kinematics};
pub use noise::NoiseModel;
pub use plane::{Segment, Vec2};
pub use render::{render_depth_scan, visible_landmarks, DepthScan, SensorConfig};
pub use scene::{AgentPose, Landmark, Scene};
