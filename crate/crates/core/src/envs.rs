//! Goal-conditioned environments with deterministic dynamics.
//!
//! Two variants share one [`Env`] type:
//!
//! - `point_nav`: a point in the box `[0, L]ⁿ`, actions are displacements
//!   (identity dynamics), and the goal space is the state space itself.
//! - `planar_arm`: a two-link arm whose state is the pair of joint angles;
//!   actions are angle increments and the goal is the end-effector position
//!   given by forward kinematics.
//!
//! Rewards are sparse: 1 when the achieved goal lies in the closed ball of
//! radius `goal_radius` around the commanded goal, 0 otherwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numkit::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointNav,
    PlanarArm,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointNav => "point_nav",
            EnvKind::PlanarArm => "planar_arm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub variant: EnvKind,
    /// State and goal dimension for `point_nav`; fixed at 2 for `planar_arm`.
    pub dim: usize,
    /// Side length `L` of the `point_nav` box.
    pub box_extent: f64,
    pub max_action: f64,
    pub goal_radius: f64,
    pub episode_horizon: usize,
    /// Link lengths of `planar_arm`.
    pub link_lengths: [f64; 2],
}

impl EnvConfig {
    pub fn point_nav() -> Self {
        Self {
            variant: EnvKind::PointNav,
            dim: 2,
            box_extent: 100.0,
            max_action: 10.0,
            goal_radius: 1.0,
            episode_horizon: 50,
            link_lengths: [1.0, 1.0],
        }
    }

    pub fn planar_arm() -> Self {
        Self {
            variant: EnvKind::PlanarArm,
            dim: 2,
            box_extent: 100.0,
            max_action: 0.25,
            goal_radius: 0.05,
            episode_horizon: 50,
            link_lengths: [1.0, 1.0],
        }
    }

    pub fn defaults_for(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointNav => Self::point_nav(),
            EnvKind::PlanarArm => Self::planar_arm(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.variant {
            EnvKind::PointNav => self.dim,
            EnvKind::PlanarArm => 2,
        }
    }

    pub fn goal_dim(&self) -> usize {
        self.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.state_dim()
    }

    /// Largest possible distance between two goals.
    pub fn goal_diameter(&self) -> f64 {
        match self.variant {
            EnvKind::PointNav => self.box_extent * (self.dim as f64).sqrt(),
            EnvKind::PlanarArm => 2.0 * (self.link_lengths[0] + self.link_lengths[1]),
        }
    }

    /// Checks the invariants, returning the offending field name and reason.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((name, format!("must be a positive finite number, got {v}")))
            }
        };
        positive("goal_radius", self.goal_radius)?;
        positive("max_action", self.max_action)?;
        if self.episode_horizon < 1 {
            return Err(("episode_horizon", "must be at least 1".into()));
        }
        match self.variant {
            EnvKind::PointNav => {
                positive("box_extent", self.box_extent)?;
                if self.dim < 1 {
                    return Err(("dim", "must be at least 1".into()));
                }
            }
            EnvKind::PlanarArm => {
                positive("link_lengths", self.link_lengths[0])?;
                positive("link_lengths", self.link_lengths[1])?;
                if self.dim != 2 {
                    return Err(("dim", "planar_arm is two-dimensional".into()));
                }
            }
        }
        Ok(())
    }
}

/// The pair (state, goal) a goal-conditioned policy consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub state: Vec<f64>,
    pub goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub reward: f64,
    pub reached: bool,
}

/// Full copy of an environment's mutable state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    variant: EnvKind,
    state: Vec<f64>,
    goal: Vec<f64>,
    t: usize,
}

impl EnvSnapshot {
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn goal(&self) -> &[f64] {
        &self.goal
    }

    pub fn step_index(&self) -> usize {
        self.t
    }
}

/// Fixed affine map from (state, goal) to network input so that raw
/// coordinates of very different scales reach the network in roughly
/// `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputScale {
    pub state_offset: f64,
    pub state_scale: f64,
    pub goal_offset: f64,
    pub goal_scale: f64,
}

impl InputScale {
    pub fn identity() -> Self {
        Self {
            state_offset: 0.0,
            state_scale: 1.0,
            goal_offset: 0.0,
            goal_scale: 1.0,
        }
    }

    /// Writes `concat(encode(state), encode(goal))` into `out`.
    pub fn encode_into(&self, state: &[f64], goal: &[f64], out: &mut [f64]) {
        let (a, b) = out.split_at_mut(state.len());
        for (o, s) in a.iter_mut().zip(state) {
            *o = (s - self.state_offset) / self.state_scale;
        }
        for (o, g) in b.iter_mut().zip(goal) {
            *o = (g - self.goal_offset) / self.goal_scale;
        }
    }

    pub fn encode(&self, state: &[f64], goal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; state.len() + goal.len()];
        self.encode_into(state, goal, &mut out);
        out
    }
}

/// Euclidean distance between two goal-space points.
pub fn goal_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("goal vectors", a.len(), b.len())?;
    Ok(distance(a, b))
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Scales `action` down to norm `max_norm` when it is longer.
pub fn clip_norm(action: &[f64], max_norm: f64) -> Vec<f64> {
    let norm = action.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        action.iter().map(|a| a * k).collect()
    } else {
        action.to_vec()
    }
}

/// Two-link forward kinematics: joint angles to end-effector position.
pub fn forward_kinematics(angles: &[f64], links: [f64; 2]) -> [f64; 2] {
    let (t1, t2) = (angles[0], angles[1]);
    [
        links[0] * t1.cos() + links[1] * (t1 + t2).cos(),
        links[0] * t1.sin() + links[1] * (t1 + t2).sin(),
    ]
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    state: Vec<f64>,
    goal: Vec<f64>,
    t: usize,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.check()
            .map_err(|(field, why)| Error::InvalidArgument(format!("env.{field}: {why}")))?;
        let n = cfg.state_dim();
        let state = vec![0.0; n];
        let goal = match cfg.variant {
            EnvKind::PointNav => vec![0.0; n],
            EnvKind::PlanarArm => forward_kinematics(&state, cfg.link_lengths).to_vec(),
        };
        Ok(Self {
            cfg,
            state,
            goal,
            t: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn kind(&self) -> EnvKind {
        self.cfg.variant
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn goal(&self) -> &[f64] {
        &self.goal
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.cfg.episode_horizon
    }

    pub fn input_scale(&self) -> InputScale {
        match self.cfg.variant {
            EnvKind::PointNav => {
                let half = self.cfg.box_extent / 2.0;
                InputScale {
                    state_offset: half,
                    state_scale: half,
                    goal_offset: half,
                    goal_scale: half,
                }
            }
            EnvKind::PlanarArm => InputScale {
                state_offset: 0.0,
                state_scale: PI,
                goal_offset: 0.0,
                goal_scale: self.cfg.link_lengths[0] + self.cfg.link_lengths[1],
            },
        }
    }

    /// The representation mapping from states to goals.
    pub fn achieved_goal(&self, state: &[f64]) -> Vec<f64> {
        match self.cfg.variant {
            EnvKind::PointNav => state.to_vec(),
            EnvKind::PlanarArm => forward_kinematics(state, self.cfg.link_lengths).to_vec(),
        }
    }

    /// Whether `achieved` lies in the goal ball around `goal`.
    pub fn is_reached(&self, achieved: &[f64], goal: &[f64]) -> bool {
        distance(achieved, goal) <= self.cfg.goal_radius
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        clip_norm(action, self.cfg.max_action)
    }

    fn sample_state(&self, rng: &mut SeededRng) -> Vec<f64> {
        let n = self.cfg.state_dim();
        match self.cfg.variant {
            EnvKind::PointNav => (0..n).map(|_| rng.uniform(0.0, self.cfg.box_extent)).collect(),
            EnvKind::PlanarArm => (0..n).map(|_| wrap_angle(rng.uniform(-PI, PI))).collect(),
        }
    }

    fn sample_goal(&self, rng: &mut SeededRng) -> Vec<f64> {
        match self.cfg.variant {
            EnvKind::PointNav => self.sample_state(rng),
            EnvKind::PlanarArm => {
                // Area-uniform over the reachable annulus.
                let [l1, l2] = self.cfg.link_lengths;
                let (r_min, r_max) = ((l1 - l2).abs(), l1 + l2);
                let r = rng.uniform(r_min * r_min, r_max * r_max).sqrt();
                let phi = rng.uniform(-PI, PI);
                vec![r * phi.cos(), r * phi.sin()]
            }
        }
    }

    /// Starts a new episode with a uniformly drawn state and a goal that is
    /// not already reached.
    pub fn reset(&mut self, rng: &mut SeededRng) -> ExtendedState {
        loop {
            let state = self.sample_state(rng);
            let goal = self.sample_goal(rng);
            if !self.is_reached(&self.achieved_goal(&state), &goal) {
                self.state = state;
                self.goal = goal;
                self.t = 0;
                return ExtendedState {
                    state: self.state.clone(),
                    goal: self.goal.clone(),
                };
            }
        }
    }

    /// Applies `action` (norm-clipped to `max_action`).
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_dim("action", self.cfg.action_dim(), action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("non-finite action".into()));
        }
        if self.t >= self.cfg.episode_horizon {
            return Err(Error::EpisodeOver(self.t));
        }
        let a = self.clip_action(action);
        match self.cfg.variant {
            EnvKind::PointNav => {
                let l = self.cfg.box_extent;
                for (s, d) in self.state.iter_mut().zip(&a) {
                    *s = (*s + d).clamp(0.0, l);
                }
            }
            EnvKind::PlanarArm => {
                for (s, d) in self.state.iter_mut().zip(&a) {
                    *s = wrap_angle(*s + d);
                }
            }
        }
        self.t += 1;
        let achieved_goal = self.achieved_goal(&self.state);
        let reached = self.is_reached(&achieved_goal, &self.goal);
        Ok(StepResult {
            next_state: self.state.clone(),
            achieved_goal,
            reward: if reached { 1.0 } else { 0.0 },
            reached,
        })
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            variant: self.cfg.variant,
            state: self.state.clone(),
            goal: self.goal.clone(),
            t: self.t,
        }
    }

    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<()> {
        if snap.variant != self.cfg.variant {
            return Err(Error::SnapshotMismatch(format!(
                "snapshot of {} restored into {}",
                snap.variant.name(),
                self.cfg.variant.name()
            )));
        }
        if snap.state.len() != self.state.len() || snap.goal.len() != self.goal.len() {
            return Err(Error::SnapshotMismatch(
                "snapshot dimensions differ from environment".into(),
            ));
        }
        self.state.copy_from_slice(&snap.state);
        self.goal.copy_from_slice(&snap.goal);
        self.t = snap.t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nav_at(state: &[f64]) -> Env {
        let mut env = Env::new(EnvConfig::point_nav()).unwrap();
        env.state = state.to_vec();
        env.goal = vec![99.0, 99.0];
        env
    }

    #[test]
    fn point_nav_moves_by_action() {
        let mut env = nav_at(&[0.0, 0.0]);
        let r = env.step(&[3.0, 4.0]).unwrap();
        assert_eq!(r.next_state, vec![3.0, 4.0]);
        assert_eq!(r.achieved_goal, vec![3.0, 4.0]);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn point_nav_clips_long_actions() {
        let mut env = nav_at(&[0.0, 0.0]);
        let r = env.step(&[30.0, 40.0]).unwrap();
        assert!((r.next_state[0] - 6.0).abs() < 1e-12);
        assert!((r.next_state[1] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn point_nav_clamps_to_box() {
        let mut env = nav_at(&[98.0, 1.0]);
        let r = env.step(&[5.0, -5.0]).unwrap();
        assert_eq!(r.next_state, vec![100.0, 0.0]);
    }

    #[test]
    fn arm_forward_kinematics_at_zero() {
        let env = Env::new(EnvConfig::planar_arm()).unwrap();
        assert_eq!(env.achieved_goal(&[0.0, 0.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn arm_angles_wrap() {
        let mut env = Env::new(EnvConfig::planar_arm()).unwrap();
        env.state = vec![PI - 0.1, -PI + 0.05];
        let r = env.step(&[0.2, -0.1]).unwrap();
        assert!((r.next_state[0] - (-PI + 0.1)).abs() < 1e-12);
        assert!((r.next_state[1] - (PI - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.5), 0.5);
    }

    #[test]
    fn reward_matches_reach() {
        let mut env = nav_at(&[0.0, 0.0]);
        env.goal = vec![3.5, 4.0];
        let r = env.step(&[3.0, 4.0]).unwrap();
        assert!(r.reached);
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn step_rejects_bad_actions() {
        let mut env = nav_at(&[0.0, 0.0]);
        assert!(matches!(env.step(&[1.0]), Err(Error::Dimension { .. })));
        assert!(env.step(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn step_after_horizon_fails() {
        let mut cfg = EnvConfig::point_nav();
        cfg.episode_horizon = 2;
        let mut env = Env::new(cfg).unwrap();
        env.reset(&mut SeededRng::new(0));
        env.step(&[0.0, 0.0]).unwrap();
        env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(env.step(&[0.0, 0.0]), Err(Error::EpisodeOver(2)));
    }

    #[test]
    fn reset_is_seeded_and_unsolved() {
        let mut a = Env::new(EnvConfig::point_nav()).unwrap();
        let mut b = Env::new(EnvConfig::point_nav()).unwrap();
        for seed in 0..50 {
            let qa = a.reset(&mut SeededRng::new(seed));
            let qb = b.reset(&mut SeededRng::new(seed));
            assert_eq!(qa, qb);
            assert!(qa.state.iter().chain(&qa.goal).all(|&x| (0.0..=100.0).contains(&x)));
            assert!(distance(&qa.state, &qa.goal) > 1.0);
        }
    }

    #[test]
    fn reset_is_uniform_on_average() {
        let mut env = Env::new(EnvConfig::point_nav()).unwrap();
        let mut rng = SeededRng::new(8);
        let n = 10_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let q = env.reset(&mut rng);
            sum[0] += q.state[0];
            sum[1] += q.state[1];
        }
        for s in sum {
            let mean = s / n as f64;
            assert!((mean - 50.0).abs() < 0.02 * 50.0, "mean {mean}");
        }
    }

    #[test]
    fn arm_goals_are_reachable() {
        let mut env = Env::new(EnvConfig::planar_arm()).unwrap();
        let mut rng = SeededRng::new(4);
        for _ in 0..1000 {
            let q = env.reset(&mut rng);
            let r = (q.goal[0].powi(2) + q.goal[1].powi(2)).sqrt();
            assert!(r <= 2.0 + 1e-12);
            assert!(q.state.iter().all(|a| *a > -PI && *a <= PI));
        }
    }

    #[test]
    fn snapshot_restore_replays_identically() {
        let mut env = Env::new(EnvConfig::planar_arm()).unwrap();
        let mut rng = SeededRng::new(21);
        env.reset(&mut rng);
        let snap = env.snapshot();
        let actions: Vec<Vec<f64>> = (0..5).map(|_| rng.gaussian_vec(2, 0.3).unwrap()).collect();
        let first: Vec<StepResult> = actions.iter().map(|a| env.step(a).unwrap()).collect();
        for _ in 0..2 {
            env.restore(&snap).unwrap();
            let again: Vec<StepResult> = actions.iter().map(|a| env.step(a).unwrap()).collect();
            assert_eq!(first, again);
        }
    }

    #[test]
    fn snapshot_at_reset_matches_fresh_reset() {
        let mut a = Env::new(EnvConfig::point_nav()).unwrap();
        let mut b = Env::new(EnvConfig::point_nav()).unwrap();
        a.reset(&mut SeededRng::new(5));
        let snap = a.snapshot();
        a.step(&[1.0, 1.0]).unwrap();
        b.reset(&mut SeededRng::new(5));
        assert_eq!(b.snapshot(), snap);
        assert_eq!(snap.step_index(), 0);
    }

    #[test]
    fn restore_rejects_other_variant() {
        let arm = Env::new(EnvConfig::planar_arm()).unwrap();
        let mut nav = Env::new(EnvConfig::point_nav()).unwrap();
        assert!(matches!(
            nav.restore(&arm.snapshot()),
            Err(Error::SnapshotMismatch(_))
        ));
    }

    #[test]
    fn goal_distance_basics() {
        assert_eq!(goal_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(goal_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(goal_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = EnvConfig::point_nav();
        cfg.goal_radius = 0.0;
        assert!(Env::new(cfg).is_err());
        let mut cfg = EnvConfig::planar_arm();
        cfg.dim = 3;
        assert!(Env::new(cfg).is_err());
    }
}
