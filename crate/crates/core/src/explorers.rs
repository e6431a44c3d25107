//! Goal-discovery policies for the Explore phase.
//!
//! The oracle explorer reads exact geodesic distances from the scene. Those
//! values stay inside [`TopoMap`] and never reach the switch or the solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local_policy::{plan, steer, DiscreteAction, PolicyParams};
use crate::sim::geodesic::GoalField;
use crate::sim::scene::{bearing_direction, wrap_angle};
use crate::sim::{AgentPose, DepthScan, Scene, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplorerKind {
    Straight,
    Oracle,
}

impl std::str::FromStr for ExplorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(ExplorerKind::Straight),
            "oracle" => Ok(ExplorerKind::Oracle),
            other => Err(Error::Config(format!("unknown explorer `{other}` (expected straight or oracle)"))),
        }
    }
}

impl ExplorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ExplorerKind::Straight => "straight",
            ExplorerKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorerConfig {
    pub kind: ExplorerKind,
    /// Meters; a Forward that moved less than this counts as a collision.
    pub collision_threshold: f64,
    /// Meters; a new node closer than this to an existing one is dropped.
    pub dedup_radius: f64,
    /// Meters between frontier proposals along a free ray.
    pub frontier_spacing: f64,
    /// Degrees between the scan rays used for proposals.
    pub frontier_ray_step_deg: f64,
    /// Meters; a frontier this close to the agent counts as visited.
    pub reach_radius: f64,
    /// Steps without progress before a target is abandoned.
    pub patience: usize,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        Self {
            kind: ExplorerKind::Straight,
            collision_threshold: 0.1,
            dedup_radius: 0.5,
            frontier_spacing: 1.5,
            frontier_ray_step_deg: 10.0,
            reach_radius: 0.5,
            patience: 40,
        }
    }
}

impl ExplorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.collision_threshold >= 0.0)
            || !(self.dedup_radius > 0.0)
            || !(self.frontier_spacing > 0.0)
            || !(self.frontier_ray_step_deg > 0.0)
            || !(self.reach_radius > 0.0)
            || self.patience == 0
        {
            return Err(Error::Config("explorer distances, ray step and patience must be positive".into()));
        }
        Ok(())
    }
}

/// Forward until a collision is detected from odometry, then turn right.
#[derive(Debug, Clone, PartialEq)]
pub struct StraightExplorer {
    pub last_commanded: Option<DiscreteAction>,
    pub pre_action_pose: Option<AgentPose>,
    collision_threshold: f64,
}

impl StraightExplorer {
    pub fn new(collision_threshold: f64) -> Self {
        Self { last_commanded: None, pre_action_pose: None, collision_threshold }
    }

    pub fn step(&mut self, current: &AgentPose) -> DiscreteAction {
        let collided = match (self.last_commanded, self.pre_action_pose) {
            (Some(DiscreteAction::Forward), Some(before)) => before.distance_to(current) < self.collision_threshold,
            _ => false,
        };
        let action = if collided { DiscreteAction::TurnRight } else { DiscreteAction::Forward };
        self.last_commanded = Some(action);
        self.pre_action_pose = Some(*current);
        action
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopoNode {
    pub pose: AgentPose,
    pub geodesic_to_goal: Option<f64>,
    pub frontier: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopoMap {
    nodes: Vec<TopoNode>,
    edges: Vec<(usize, usize)>,
}

impl TopoMap {
    pub fn nodes(&self) -> &[TopoNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn nearest_within(&self, p: &Vec2, radius: f64) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, (n.pose.position() - p).norm()))
            .filter(|(_, d)| *d < radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    fn push(&mut self, node: TopoNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn connect(&mut self, a: usize, b: usize) {
        let e = (a.min(b), a.max(b));
        if a != b && !self.edges.contains(&e) {
            self.edges.push(e);
        }
    }

    /// Frontier with the smallest geodesic to the goal; the agent's own
    /// distance to the node is deliberately ignored.
    pub fn best_frontier(&self) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.frontier.then_some((i, n.geodesic_to_goal?)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }
}

/// Privileged explorer: grows a topological map from depth scans and heads
/// for the frontier node closest to the goal by exact geodesic distance.
#[derive(Debug, Clone)]
pub struct OracleExplorer {
    map: TopoMap,
    field: GoalField,
    cfg: ExplorerConfig,
    target: Option<usize>,
    best_to_target: f64,
    stalled: usize,
    last_node: Option<usize>,
    /// Targets chosen so far, in order.
    pub target_history: Vec<usize>,
}

impl OracleExplorer {
    pub fn new(scene: &Scene, goal: &AgentPose, cfg: &ExplorerConfig) -> Self {
        Self {
            map: TopoMap::default(),
            field: scene.goal_field(goal.position()),
            cfg: *cfg,
            target: None,
            best_to_target: f64::INFINITY,
            stalled: 0,
            last_node: None,
            target_history: Vec::new(),
        }
    }

    pub fn map(&self) -> &TopoMap {
        &self.map
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    fn geodesic(&self, scene: &Scene, p: &Vec2) -> Option<f64> {
        scene.is_free(p).then(|| scene.field_distance(&self.field, p)).flatten()
    }

    /// Adds the current pose as a visited node, unless one is already close.
    pub fn observe_pose(&mut self, scene: &Scene, pose: &AgentPose) -> usize {
        let p = pose.position();
        let idx = match self.map.nearest_within(&p, self.cfg.dedup_radius) {
            Some(i) => i,
            None => {
                let g = self.geodesic(scene, &p);
                self.map.push(TopoNode { pose: *pose, geodesic_to_goal: g, frontier: false })
            }
        };
        if let Some(prev) = self.last_node {
            self.map.connect(prev, idx);
        }
        self.last_node = Some(idx);
        for n in &mut self.map.nodes {
            if n.frontier && (n.pose.position() - p).norm() < self.cfg.reach_radius {
                n.frontier = false;
            }
        }
        idx
    }

    /// Frontier proposals at fixed spacing along free stretches of the scan.
    pub fn propose_frontiers(&mut self, scene: &Scene, pose: &AgentPose, scan: &DepthScan) {
        if scan.bearings.len() < 2 {
            return;
        }
        let spacing = (scan.bearings[1] - scan.bearings[0]).abs().max(1e-9);
        let stride = ((self.cfg.frontier_ray_step_deg.to_radians() / spacing).round() as usize).max(1);
        let margin = scene.agent_radius + 0.2;
        let here = self.last_node;
        for k in (0..scan.bearings.len()).step_by(stride) {
            let reach = match scan.ranges[k] {
                Some(r) => r - margin,
                None => scan.max_range,
            };
            let dir = bearing_direction(pose, scan.bearings[k]);
            let mut d = self.cfg.frontier_spacing;
            while d <= reach {
                let p = pose.position() + d * dir;
                if self.map.nearest_within(&p, self.cfg.dedup_radius).is_none() {
                    if let Some(g) = self.geodesic(scene, &p) {
                        let node = TopoNode { pose: AgentPose::new(p.x, p.y, pose.heading), geodesic_to_goal: Some(g), frontier: true };
                        let i = self.map.push(node);
                        if let Some(h) = here {
                            self.map.connect(h, i);
                        }
                    }
                }
                d += self.cfg.frontier_spacing;
            }
        }
    }

    fn retarget(&mut self) {
        self.target = self.map.best_frontier();
        self.best_to_target = f64::INFINITY;
        self.stalled = 0;
        if let Some(t) = self.target {
            self.target_history.push(t);
        }
    }

    pub fn step(&mut self, scene: &Scene, pose: &AgentPose, scan: &DepthScan, policy: &PolicyParams) -> DiscreteAction {
        self.observe_pose(scene, pose);
        self.propose_frontiers(scene, pose, scan);

        let keep = self.target.is_some_and(|t| self.map.nodes[t].frontier) && self.stalled < self.cfg.patience;
        if !keep {
            if let Some(t) = self.target {
                self.map.nodes[t].frontier = false;
            }
            self.retarget();
        } else if let Some(best) = self.map.best_frontier() {
            let cur = self.target.and_then(|t| self.map.nodes[t].geodesic_to_goal).unwrap_or(f64::INFINITY);
            if self.map.nodes[best].geodesic_to_goal.is_some_and(|g| g < cur) {
                self.retarget();
            }
        }
        let Some(t) = self.target else {
            return DiscreteAction::TurnRight;
        };

        let offset = self.map.nodes[t].pose.position() - pose.position();
        let dist = offset.norm();
        if dist < self.best_to_target - 0.05 {
            self.best_to_target = dist;
            self.stalled = 0;
        } else {
            self.stalled += 1;
        }
        let bearing = wrap_angle(offset.y.atan2(offset.x) - pose.heading);
        let half_view = scan.bearings.last().copied().unwrap_or(0.0).abs();
        if bearing.abs() > (half_view - 10f64.to_radians()).max(0.0) {
            return if bearing > 0.0 { DiscreteAction::TurnLeft } else { DiscreteAction::TurnRight };
        }
        let p = plan(scan, dist, -bearing, policy);
        steer(&p.grid, &p.field, policy)
    }
}

#[derive(Debug, Clone)]
pub enum Explorer {
    Straight(StraightExplorer),
    Oracle(Box<OracleExplorer>),
}

impl Explorer {
    pub fn new(cfg: &ExplorerConfig, scene: &Scene, goal: &AgentPose) -> Self {
        match cfg.kind {
            ExplorerKind::Straight => Explorer::Straight(StraightExplorer::new(cfg.collision_threshold)),
            ExplorerKind::Oracle => Explorer::Oracle(Box::new(OracleExplorer::new(scene, goal, cfg))),
        }
    }

    /// Next exploration action from the agent's reported pose and scan.
    pub fn act(&mut self, scene: &Scene, pose: &AgentPose, scan: &DepthScan, policy: &PolicyParams) -> DiscreteAction {
        match self {
            Explorer::Straight(s) => s.step(pose),
            Explorer::Oracle(o) => o.step(scene, pose, scan, policy),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::noise::NoiseModel;
    use crate::sim::scene::fixtures::box_room;
    use crate::sim::{apply_action, render_depth_scan, AgentState, Kinematics};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn straight_rules() {
        let mut s = StraightExplorer::new(0.1);
        let p0 = AgentPose::new(1.0, 1.0, 0.0);
        assert_eq!(s.step(&p0), DiscreteAction::Forward);
        let p1 = AgentPose::new(1.25, 1.0, 0.0);
        assert_eq!(s.step(&p1), DiscreteAction::Forward);
        assert_eq!(s.step(&p1), DiscreteAction::TurnRight);
        // After a turn the next step goes forward again.
        assert_eq!(s.step(&p1), DiscreteAction::Forward);
    }

    fn rollout(scene: &Scene, start: AgentPose, goal: AgentPose, cfg: &ExplorerConfig, steps: usize) -> Vec<(DiscreteAction, AgentPose)> {
        let mut ex = Explorer::new(cfg, scene, &goal);
        let mut state = AgentState::at(start);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = PolicyParams::default();
        let none = NoiseModel::none();
        let mut out = Vec::new();
        for _ in 0..steps {
            let scan = render_depth_scan(&state.truth, 120f64.to_radians(), scene, 121, 5.0, &none, &mut rng);
            let a = ex.act(scene, &state.reported, &scan, &policy);
            state = apply_action(&state, a, scene, &Kinematics::default(), &none, &mut rng);
            out.push((a, state.truth));
        }
        out
    }

    #[test]
    fn straight_turns_right_at_walls_and_is_deterministic() {
        let s = box_room(4.0, 4.0);
        let cfg = ExplorerConfig::default();
        let a = rollout(&s, AgentPose::new(1.0, 2.0, 0.0), AgentPose::new(3.0, 3.0, 0.0), &cfg, 60);
        let b = rollout(&s, AgentPose::new(1.0, 2.0, 0.0), AgentPose::new(3.0, 3.0, 0.0), &cfg, 60);
        assert_eq!(a, b);
        assert!(a.iter().any(|(x, _)| *x == DiscreteAction::TurnRight));
        assert!(a.iter().all(|(x, _)| *x != DiscreteAction::TurnLeft));
        for (_, p) in &a {
            assert!(s.clearance(&p.position()) >= s.agent_radius - 1e-9);
        }
    }

    #[test]
    fn frontier_choice_ignores_agent_distance() {
        let mut m = TopoMap::default();
        let node = |x: f64, g: f64| TopoNode { pose: AgentPose::new(x, 0.0, 0.0), geodesic_to_goal: Some(g), frontier: true };
        m.push(node(1.0, 5.0));
        m.push(node(9.0, 3.0));
        assert_eq!(m.best_frontier(), Some(1));
    }

    #[test]
    fn revisiting_does_not_add_nodes() {
        let s = box_room(6.0, 6.0);
        let goal = AgentPose::new(5.0, 5.0, 0.0);
        let mut o = OracleExplorer::new(&s, &goal, &ExplorerConfig::default());
        o.observe_pose(&s, &AgentPose::new(2.0, 2.0, 0.0));
        let n = o.map().nodes().len();
        o.observe_pose(&s, &AgentPose::new(2.2, 2.1, 1.0));
        assert_eq!(o.map().nodes().len(), n);
        o.observe_pose(&s, &AgentPose::new(3.0, 2.0, 1.0));
        assert_eq!(o.map().nodes().len(), n + 1);
        assert_eq!(o.map().edges().len(), 1);
    }

    #[test]
    fn map_nodes_are_free_and_spread() {
        let s = box_room(8.0, 6.0);
        let cfg = ExplorerConfig { kind: ExplorerKind::Oracle, ..Default::default() };
        let goal = AgentPose::new(7.0, 5.0, 0.0);
        let mut o = OracleExplorer::new(&s, &goal, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pose = AgentPose::new(1.0, 1.0, 0.6);
        let scan = render_depth_scan(&pose, 120f64.to_radians(), &s, 121, 5.0, &NoiseModel::none(), &mut rng);
        o.observe_pose(&s, &pose);
        o.propose_frontiers(&s, &pose, &scan);
        let nodes = o.map().nodes();
        assert!(nodes.len() > 5);
        for (i, a) in nodes.iter().enumerate() {
            assert!(s.is_free(&a.pose.position()));
            for b in &nodes[i + 1..] {
                assert!((a.pose.position() - b.pose.position()).norm() >= cfg.dedup_radius);
            }
        }
    }

    #[test]
    fn oracle_targets_approach_goal_in_open_room() {
        let s = box_room(10.0, 8.0);
        let cfg = ExplorerConfig { kind: ExplorerKind::Oracle, ..Default::default() };
        let goal = AgentPose::new(8.5, 6.5, 0.0);
        let mut ex = OracleExplorer::new(&s, &goal, &cfg);
        let mut state = AgentState::at(AgentPose::new(1.5, 1.5, 0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let none = NoiseModel::none();
        let policy = PolicyParams::default();
        for _ in 0..150 {
            let scan = render_depth_scan(&state.truth, 120f64.to_radians(), &s, 121, 5.0, &none, &mut rng);
            let a = ex.step(&s, &state.reported, &scan, &policy);
            state = apply_action(&state, a, &s, &Kinematics::default(), &none, &mut rng);
            if state.truth.distance_to(&goal) < 1.0 {
                break;
            }
        }
        let g: Vec<f64> =
            ex.target_history.iter().map(|&t| ex.map().nodes()[t].geodesic_to_goal.unwrap()).collect();
        assert!(g.len() >= 2);
        for w in g.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{g:?}");
        }
        assert!(state.truth.distance_to(&goal) < 1.5);
    }
}
