//! Procedural multi-room floor plans and episode sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::plane::{Segment, Vec2};
use super::render::visible_landmarks;
use super::scene::{AgentPose, Landmark, Scene, SceneMeta};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Geodesic length band `[lo, hi)`; the hard band is closed at 10 m.
    pub fn band(self) -> (f64, f64) {
        match self {
            Difficulty::Easy => (1.5, 3.0),
            Difficulty::Medium => (3.0, 5.0),
            Difficulty::Hard => (5.0, 10.0),
        }
    }

    pub fn contains(self, geodesic: f64) -> bool {
        let (lo, hi) = self.band();
        geodesic >= lo && (geodesic < hi || (self == Difficulty::Hard && geodesic <= hi))
    }

    pub fn of(geodesic: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.contains(geodesic))
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

pub const DEFAULT_MAX_STEPS: usize = 500;

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub scene_id: String,
    pub start: AgentPose,
    pub goal: AgentPose,
    pub difficulty: Difficulty,
    pub geodesic_length: f64,
    #[serde(default = "default_max_steps", skip_serializing)]
    pub max_steps: usize,
}

impl Episode {
    /// Geodesic over straight-line distance; a curvature measure for folding.
    pub fn curvature_ratio(&self) -> f64 {
        self.geodesic_length / self.start.distance_to(&self.goal).max(1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub scenes: usize,
    /// Inclusive range of room columns per scene.
    pub rooms_x: [usize; 2],
    /// Inclusive range of room rows per scene.
    pub rooms_y: [usize; 2],
    /// Meters, range for each room column width and row depth.
    pub room_size: [f64; 2],
    pub door_width: f64,
    /// Chance of a door on each wall not already opened by the spanning tree.
    pub extra_door_probability: f64,
    /// Expected landmarks per meter of wall.
    pub landmark_density: f64,
    pub landmark_height: [f64; 2],
    /// Meters between a landmark and the wall it sits on.
    pub landmark_offset: f64,
    pub camera_height: f64,
    pub agent_radius: f64,
    pub episodes_per_difficulty: usize,
    /// Goal views must see at least this many landmarks.
    pub min_goal_landmarks: usize,
    /// Range used for the goal-view landmark count.
    pub goal_view_range: f64,
    /// Rejection-sampling attempts allowed per requested episode.
    pub attempts_per_episode: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            scenes: 13,
            rooms_x: [1, 3],
            rooms_y: [2, 3],
            room_size: [3.5, 6.0],
            door_width: 1.0,
            extra_door_probability: 0.3,
            landmark_density: 30.0,
            landmark_height: [0.1, 2.4],
            landmark_offset: 0.01,
            camera_height: 1.25,
            agent_radius: 0.18,
            episodes_per_difficulty: 300,
            min_goal_landmarks: 60,
            goal_view_range: 6.0,
            attempts_per_episode: 400,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generation.{m}")));
        if self.scenes == 0 {
            return bad("scenes must be >= 1");
        }
        if self.rooms_x[0] == 0 || self.rooms_y[0] == 0 || self.rooms_x[0] > self.rooms_x[1] || self.rooms_y[0] > self.rooms_y[1]
        {
            return bad("rooms_x and rooms_y must be non-empty ranges of at least one room");
        }
        if !(self.room_size[0] > 0.0 && self.room_size[0] <= self.room_size[1]) {
            return bad("room_size must be a positive range");
        }
        if !(self.door_width > 2.0 * self.agent_radius && self.door_width + 1.0 <= self.room_size[0]) {
            return bad("door_width must exceed the agent diameter and fit in the smallest room");
        }
        if !(0.0..=1.0).contains(&self.extra_door_probability) {
            return bad("extra_door_probability must lie in [0, 1]");
        }
        if !(self.landmark_density >= 0.0) || !(self.landmark_height[0] <= self.landmark_height[1]) {
            return bad("landmark_density must be >= 0 and landmark_height a range");
        }
        if !(self.camera_height > 0.0 && self.agent_radius > 0.0 && self.landmark_offset >= 0.0) {
            return bad("camera_height and agent_radius must be > 0");
        }
        if self.attempts_per_episode == 0 {
            return bad("attempts_per_episode must be >= 1");
        }
        Ok(())
    }
}

/// Door positions split a wall line into solid pieces.
fn split_wall(a: Vec2, b: Vec2, doors: &[(f64, f64)]) -> Vec<Segment> {
    let len = (b - a).norm();
    let dir = (b - a) / len;
    let mut cuts: Vec<(f64, f64)> = doors.to_vec();
    cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = Vec::new();
    let mut s = 0.0;
    for (lo, hi) in cuts {
        if lo > s {
            out.push(Segment::new(a + s * dir, a + lo * dir));
        }
        s = hi;
    }
    if s < len {
        out.push(Segment::new(a + s * dir, b));
    }
    out
}

/// One scene: a grid of rooms joined by doors along a random spanning tree
/// plus optional extra doors, with landmarks scattered on the wall faces.
pub fn generate_scene(cfg: &GenConfig, id: &str, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = rng.random_range(cfg.rooms_x[0]..=cfg.rooms_x[1]);
    let ny = rng.random_range(cfg.rooms_y[0]..=cfg.rooms_y[1]);
    let mut size = || {
        if cfg.room_size[0] == cfg.room_size[1] {
            cfg.room_size[0]
        } else {
            rng.random_range(cfg.room_size[0]..cfg.room_size[1])
        }
    };
    let widths: Vec<f64> = (0..nx).map(|_| size()).collect();
    let depths: Vec<f64> = (0..ny).map(|_| size()).collect();
    let xs: Vec<f64> = std::iter::once(0.0).chain(widths.iter().scan(0.0, |acc, w| { *acc += w; Some(*acc) })).collect();
    let ys: Vec<f64> = std::iter::once(0.0).chain(depths.iter().scan(0.0, |acc, d| { *acc += d; Some(*acc) })).collect();

    // Candidate doors: (vertical wall?, column/row boundary index, cell index along the wall).
    let room = |i: usize, j: usize| j * nx + i;
    let mut edges: Vec<(usize, usize, bool, usize, usize)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                edges.push((room(i, j), room(i + 1, j), true, i + 1, j));
            }
            if j + 1 < ny {
                edges.push((room(i, j), room(i, j + 1), false, j + 1, i));
            }
        }
    }
    edges.shuffle(&mut rng);
    let mut parent: Vec<usize> = (0..nx * ny).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    let mut open = vec![false; edges.len()];
    for (k, &(a, b, ..)) in edges.iter().enumerate() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            open[k] = true;
        } else if rng.random::<f64>() < cfg.extra_door_probability {
            open[k] = true;
        }
    }

    let margin = 0.5;
    let mut walls = Vec::new();
    let door_on = |vertical: bool, line: usize, cell: usize, opened: bool, rng: &mut ChaCha8Rng| {
        let (a, b) = if vertical {
            (Vec2::new(xs[line], ys[cell]), Vec2::new(xs[line], ys[cell + 1]))
        } else {
            (Vec2::new(xs[cell], ys[line]), Vec2::new(xs[cell + 1], ys[line]))
        };
        let len = (b - a).norm();
        let doors = if opened {
            let lo = margin;
            let hi = len - margin - cfg.door_width;
            let s = if hi > lo { rng.random_range(lo..hi) } else { 0.5 * (len - cfg.door_width) };
            vec![(s, s + cfg.door_width)]
        } else {
            Vec::new()
        };
        split_wall(a, b, &doors)
    };
    let mut interior = Vec::new();
    // Deterministic wall order: by edge position, not shuffle order.
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by_key(|&k| (edges[k].2, edges[k].3, edges[k].4));
    for k in order {
        let (_, _, vertical, line, cell) = edges[k];
        interior.extend(door_on(vertical, line, cell, open[k], &mut rng));
    }
    let (w, h) = (xs[nx], ys[ny]);
    let corners = [Vec2::new(0.0, 0.0), Vec2::new(w, 0.0), Vec2::new(w, h), Vec2::new(0.0, h)];
    let exterior: Vec<Segment> = (0..4).map(|i| Segment::new(corners[i], corners[(i + 1) % 4])).collect();
    walls.extend(exterior.iter().copied());
    walls.extend(interior.iter().copied());

    let mut landmarks = Vec::new();
    let center = Vec2::new(0.5 * w, 0.5 * h);
    for (k, wall) in walls.iter().enumerate() {
        let mean = cfg.landmark_density * wall.length();
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
        let normal = wall.normal();
        for _ in 0..count {
            let s: f64 = rng.random();
            let p = wall.point_at(s);
            let side = if k < 4 {
                // Exterior walls only carry landmarks on their inner face.
                if (center - p).dot(&normal) > 0.0 { 1.0 } else { -1.0 }
            } else if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            };
            let q = p + side * cfg.landmark_offset * normal;
            let z = rng.random_range(cfg.landmark_height[0]..=cfg.landmark_height[1]);
            landmarks.push(Landmark { id: landmarks.len() as u32, x: q.x, y: q.y, z });
        }
    }
    let meta = SceneMeta { rooms: nx * ny, seed, wall_length: walls.iter().map(Segment::length).sum() };
    Scene::new(id, walls, landmarks, cfg.camera_height, cfg.agent_radius, meta)
}

pub(crate) fn sample_free<R: Rng>(scene: &Scene, rng: &mut R, margin: f64) -> Option<Vec2> {
    let b = scene.bounds;
    for _ in 0..1000 {
        let p = Vec2::new(rng.random_range(b.min[0]..b.max[0]), rng.random_range(b.min[1]..b.max[1]));
        if scene.is_free(&p) && scene.clearance(&p) >= scene.agent_radius + margin {
            return Some(p);
        }
    }
    None
}

/// A random free pose whose view contains at least `min_landmarks` landmarks.
pub fn sample_goal_pose<R: Rng>(
    scene: &Scene,
    intr: &CameraIntrinsics,
    min_landmarks: usize,
    range: f64,
    rng: &mut R,
) -> Option<AgentPose> {
    for _ in 0..50 {
        let p = sample_free(scene, rng, 0.05)?;
        for _ in 0..12 {
            let pose = AgentPose::new(p.x, p.y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            if visible_landmarks(scene, &pose, intr, range).len() >= min_landmarks {
                return Some(pose);
            }
        }
    }
    None
}

pub fn sample_start_pose<R: Rng>(scene: &Scene, rng: &mut R) -> Option<AgentPose> {
    let p = sample_free(scene, rng, 0.05)?;
    Some(AgentPose::new(p.x, p.y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
}

/// Consecutive failed goal searches per scene after which a bucket is declared infeasible.
const GOAL_MISS_LIMIT: usize = 10;

/// Rejection-samples `count` episodes of one difficulty, cycling over scenes.
pub fn sample_episodes(
    scenes: &[Scene],
    difficulty: Difficulty,
    count: usize,
    cfg: &GenConfig,
    intr: &CameraIntrinsics,
    seed: u64,
) -> Result<Vec<Episode>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let budget = count.saturating_mul(cfg.attempts_per_episode);
    let mut attempts = 0;
    let mut goal_misses = 0;
    let (lo, hi) = difficulty.band();
    let infeasible_goal = |tried: usize| Error::GenerationInfeasible {
        bucket: difficulty.name().into(),
        reason: format!("no goal view sees {} landmarks after {tried} tries", cfg.min_goal_landmarks),
    };
    if count > 0 && scenes.iter().all(|s| s.landmarks.len() < cfg.min_goal_landmarks) {
        return Err(infeasible_goal(0));
    }
    while out.len() < count {
        if attempts >= budget {
            return Err(Error::GenerationInfeasible {
                bucket: difficulty.name().into(),
                reason: format!("filled {} of {count} episodes in {attempts} attempts", out.len()),
            });
        }
        attempts += 1;
        let scene = &scenes[(out.len() + attempts) % scenes.len()];
        let Some(goal) = sample_goal_pose(scene, intr, cfg.min_goal_landmarks, cfg.goal_view_range, &mut rng) else {
            goal_misses += 1;
            if goal_misses >= GOAL_MISS_LIMIT * scenes.len() {
                return Err(infeasible_goal(goal_misses));
            }
            continue;
        };
        goal_misses = 0;
        // Starts are drawn near the goal so the band is hit without scanning the whole scene.
        let field = scene.goal_field(goal.position());
        for _ in 0..20 {
            let r = rng.random_range(lo..=hi);
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let p = goal.position() + r * Vec2::new(a.cos(), a.sin());
            if !scene.is_free(&p) || scene.clearance(&p) < scene.agent_radius + 0.05 {
                continue;
            }
            let Some(g) = scene.field_distance(&field, &p) else { continue };
            if difficulty.contains(g) {
                let start = AgentPose::new(p.x, p.y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
                out.push(Episode {
                    scene_id: scene.id.clone(),
                    start,
                    goal,
                    difficulty,
                    geodesic_length: g,
                    max_steps: DEFAULT_MAX_STEPS,
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Scenes plus episodes for every difficulty, deterministic in `seed`.
pub fn generate_scenes_and_episodes(
    cfg: &GenConfig,
    intr: &CameraIntrinsics,
    seed: u64,
) -> Result<(Vec<Scene>, Vec<Episode>)> {
    cfg.validate()?;
    let scenes = (0..cfg.scenes)
        .map(|i| generate_scene(cfg, &format!("scene_{i:03}"), derive_seed(seed, i as u64, 0x5ce)))
        .collect::<Result<Vec<_>>>()?;
    let mut episodes = Vec::new();
    for (k, d) in Difficulty::ALL.into_iter().enumerate() {
        episodes.extend(sample_episodes(
            &scenes,
            d,
            cfg.episodes_per_difficulty,
            cfg,
            intr,
            derive_seed(seed, k as u64, 0xe91),
        )?);
    }
    Ok((scenes, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::from_hfov(640, 480, 120f64.to_radians()).unwrap()
    }

    #[test]
    fn bands() {
        assert_eq!(Difficulty::of(1.5), Some(Difficulty::Easy));
        assert_eq!(Difficulty::of(3.0), Some(Difficulty::Medium));
        assert_eq!(Difficulty::of(10.0), Some(Difficulty::Hard));
        assert_eq!(Difficulty::of(1.49), None);
        assert_eq!(Difficulty::of(10.01), None);
    }

    #[test]
    fn scenes_are_deterministic_and_connected() {
        let cfg = GenConfig::default();
        let a = generate_scene(&cfg, "s", 11).unwrap();
        let b = generate_scene(&cfg, "s", 11).unwrap();
        assert_eq!(a.walls, b.walls);
        assert_eq!(a.landmarks, b.landmarks);
        // Every room center reaches every other.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_start_pose(&a, &mut rng).unwrap();
        for _ in 0..20 {
            let q = sample_start_pose(&a, &mut rng).unwrap();
            assert!(a.geodesic_distance(&p, &q).is_some());
        }
    }

    #[test]
    fn landmarks_sit_on_walls() {
        let cfg = GenConfig::default();
        let s = generate_scene(&cfg, "s", 5).unwrap();
        for lm in &s.landmarks {
            let d = s.walls.iter().map(|w| w.distance_to(&lm.floor())).fold(f64::INFINITY, f64::min);
            assert!(d <= 0.05 + 1e-12);
            assert!((0.1..=2.4).contains(&lm.z));
        }
    }

    #[test]
    fn landmark_count_matches_density() {
        let cfg = GenConfig::default();
        for seed in 0..10 {
            let s = generate_scene(&cfg, "s", seed).unwrap();
            let mean = cfg.landmark_density * s.wall_length();
            let n = s.landmarks.len() as f64;
            assert!((n - mean).abs() <= 3.0 * mean.sqrt(), "seed {seed}: {n} vs {mean}");
        }
    }

    #[test]
    fn zero_rooms_is_rejected() {
        let cfg = GenConfig { rooms_x: [0, 0], ..Default::default() };
        assert!(matches!(generate_scene(&cfg, "s", 0), Err(Error::Config(_))));
    }

    #[test]
    fn episodes_fall_in_their_bands() {
        let cfg = GenConfig { scenes: 3, episodes_per_difficulty: 8, ..Default::default() };
        let (scenes, eps) = generate_scenes_and_episodes(&cfg, &intr(), 4).unwrap();
        assert_eq!(eps.len(), 24);
        for e in &eps {
            let s = scenes.iter().find(|s| s.id == e.scene_id).unwrap();
            let g = s.geodesic_distance(&e.start, &e.goal).unwrap();
            assert!((g - e.geodesic_length).abs() < 1e-9);
            assert!(e.difficulty.contains(g));
            assert!(visible_landmarks(s, &e.goal, &intr(), cfg.goal_view_range).len() >= cfg.min_goal_landmarks);
        }
    }

    #[test]
    fn tiny_scenes_cannot_host_hard_episodes() {
        let cfg = GenConfig {
            scenes: 1,
            rooms_x: [1, 1],
            rooms_y: [1, 1],
            room_size: [3.5, 3.5],
            episodes_per_difficulty: 2,
            attempts_per_episode: 50,
            ..Default::default()
        };
        match generate_scenes_and_episodes(&cfg, &intr(), 0) {
            Err(Error::GenerationInfeasible { bucket, .. }) => assert_eq!(bucket, "hard"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
}
