//! First-hitting-time study of a biased, goal-aware random walk.
//!
//! A walker in the square `[0, N]²` moves each step along
//! `u = ε·((g - s)/‖g - s‖ + b(s)) + σ·η`, `η ~ N(0, I₂)`, rescaled to a fixed
//! step length and clamped to the region. `b` is a fixed tabular bias field.
//! An episode succeeds when the path enters the goal ball of radius `r`
//! within `T` steps. Each step is traced as a straight segment up to the
//! region boundary followed by a slide along the wall to the clamped
//! position, so a walker that passes through the ball between two recorded
//! positions counts as a hit at that step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub region_size: f64,
    pub horizon: usize,
    pub step_length: f64,
    pub goal_radius: f64,
    /// Bias components are drawn from U(0, bias_scale).
    pub bias_scale: f64,
    pub epsilon_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub episodes_per_cell: usize,
    pub bias_cell_size: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            region_size: 100.0,
            horizon: 100,
            step_length: 10.0,
            goal_radius: 1.0,
            bias_scale: 0.2,
            epsilon_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sigma_grid: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            episodes_per_cell: 10_000,
            bias_cell_size: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((name, format!("must be a positive finite number, got {v}")))
            }
        };
        positive("region_size", self.region_size)?;
        positive("step_length", self.step_length)?;
        positive("goal_radius", self.goal_radius)?;
        positive("bias_cell_size", self.bias_cell_size)?;
        if !(self.bias_scale >= 0.0 && self.bias_scale.is_finite()) {
            return Err(("bias_scale", format!("must be finite and >= 0, got {}", self.bias_scale)));
        }
        if self.epsilon_grid.is_empty() {
            return Err(("epsilon_grid", "must not be empty".into()));
        }
        if self.sigma_grid.is_empty() {
            return Err(("sigma_grid", "must not be empty".into()));
        }
        if self.epsilon_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(("epsilon_grid", "entries must be finite and >= 0".into()));
        }
        if self.sigma_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(("sigma_grid", "entries must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Fixed bias vectors on a square grid of cells covering the region.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasField {
    cells_per_side: usize,
    cell_size: f64,
    values: Vec<[f64; 2]>,
}

impl BiasField {
    pub fn new(cfg: &SimConfig, rng: &mut SeededRng) -> Self {
        let mut field = Self::zero(cfg);
        if cfg.bias_scale > 0.0 {
            for v in &mut field.values {
                *v = [rng.uniform(0.0, cfg.bias_scale), rng.uniform(0.0, cfg.bias_scale)];
            }
        }
        field
    }

    pub fn zero(cfg: &SimConfig) -> Self {
        let cells_per_side = ((cfg.region_size / cfg.bias_cell_size).ceil() as usize).max(1);
        Self {
            cells_per_side,
            cell_size: cfg.bias_cell_size,
            values: vec![[0.0; 2]; cells_per_side * cells_per_side],
        }
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    fn cell_index(&self, x: f64) -> usize {
        ((x / self.cell_size).floor().max(0.0) as usize).min(self.cells_per_side - 1)
    }

    /// Bias at a point of the region; points on the far edge use the last cell.
    pub fn at(&self, s: [f64; 2]) -> [f64; 2] {
        let (i, j) = (self.cell_index(s[0]), self.cell_index(s[1]));
        self.values[i * self.cells_per_side + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOutcome {
    pub hit: bool,
    /// Step index of the first hit; 0 when the walker starts inside the ball.
    pub fht: Option<usize>,
}

/// Whether the segment `a → b` comes within `r` of `g`.
pub fn segment_hits_ball(a: [f64; 2], b: [f64; 2], g: [f64; 2], r: f64) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((g[0] - a[0]) * d[0] + (g[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p = [a[0] + t * d[0] - g[0], a[1] + t * d[1] - g[1]];
    p[0] * p[0] + p[1] * p[1] <= r * r
}

/// Last point of the segment `a → b` inside `[0, n]²`, for `a` inside.
fn exit_point(a: [f64; 2], b: [f64; 2], n: f64) -> [f64; 2] {
    let mut t = 1.0f64;
    for i in 0..2 {
        let d = b[i] - a[i];
        if b[i] > n {
            t = t.min((n - a[i]) / d);
        } else if b[i] < 0.0 {
            t = t.min(-a[i] / d);
        }
    }
    [(a[0] + t * (b[0] - a[0])).clamp(0.0, n), (a[1] + t * (b[1] - a[1])).clamp(0.0, n)]
}

/// Runs one episode from a uniformly drawn start and goal.
pub fn walk_episode(
    cfg: &SimConfig,
    bias: &BiasField,
    epsilon: f64,
    sigma: f64,
    rng: &mut SeededRng,
) -> WalkOutcome {
    let n = cfg.region_size;
    let start = [rng.uniform(0.0, n), rng.uniform(0.0, n)];
    let goal = [rng.uniform(0.0, n), rng.uniform(0.0, n)];
    walk_from(cfg, bias, epsilon, sigma, start, goal, rng, None)
}

/// Runs one episode from a given start and goal, optionally recording every
/// visited position (start included).
#[allow(clippy::too_many_arguments)]
pub fn walk_from(
    cfg: &SimConfig,
    bias: &BiasField,
    epsilon: f64,
    sigma: f64,
    start: [f64; 2],
    goal: [f64; 2],
    rng: &mut SeededRng,
    mut trace: Option<&mut Vec<[f64; 2]>>,
) -> WalkOutcome {
    let r = cfg.goal_radius;
    let n = cfg.region_size;
    let mut s = start;
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(s);
    }
    if segment_hits_ball(s, s, goal, r) {
        return WalkOutcome { hit: true, fht: Some(0) };
    }
    if epsilon == 0.0 && sigma == 0.0 {
        // u ≡ 0: the walker never moves.
        return WalkOutcome { hit: false, fht: None };
    }
    for t in 1..=cfg.horizon {
        let to_goal = [goal[0] - s[0], goal[1] - s[1]];
        let dist = (to_goal[0] * to_goal[0] + to_goal[1] * to_goal[1]).sqrt();
        let b = bias.at(s);
        let mut u = [epsilon * (to_goal[0] / dist + b[0]), epsilon * (to_goal[1] / dist + b[1])];
        if sigma > 0.0 {
            u[0] += sigma * rng.standard_normal();
            u[1] += sigma * rng.standard_normal();
        }
        let norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let (next, wall) = if norm > 0.0 {
            let k = cfg.step_length / norm;
            let target = [s[0] + k * u[0], s[1] + k * u[1]];
            let next = [target[0].clamp(0.0, n), target[1].clamp(0.0, n)];
            (next, exit_point(s, target, n))
        } else {
            (s, s)
        };
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(next);
        }
        let hit = segment_hits_ball(s, wall, goal, r) || segment_hits_ball(wall, next, goal, r);
        s = next;
        if hit {
            return WalkOutcome { hit: true, fht: Some(t) };
        }
    }
    WalkOutcome { hit: false, fht: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridCell {
    pub episodes: usize,
    pub hits: usize,
    /// Mean first hitting time over successful episodes.
    pub mean_fht: Option<f64>,
}

impl GridCell {
    pub fn success_rate(&self) -> Option<f64> {
        (self.episodes > 0).then(|| self.hits as f64 / self.episodes as f64)
    }

    /// Binomial standard error of the success rate.
    pub fn std_error(&self) -> Option<f64> {
        self.success_rate()
            .map(|p| (p * (1.0 - p) / self.episodes as f64).sqrt())
    }
}

/// Success rates indexed by (ε index, σ index).
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessGrid {
    pub epsilons: Vec<f64>,
    pub sigmas: Vec<f64>,
    cells: Vec<GridCell>,
}

impl SuccessGrid {
    pub fn cell(&self, eps_idx: usize, sigma_idx: usize) -> &GridCell {
        &self.cells[eps_idx * self.sigmas.len() + sigma_idx]
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    /// True when no cell ran any episode.
    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(|c| c.episodes == 0)
    }

    /// Header row of σ values, then one row of success rates per ε.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon\\sigma");
        for s in &self.sigmas {
            out.push_str(&format!(",{s}"));
        }
        out.push('\n');
        for (i, e) in self.epsilons.iter().enumerate() {
            out.push_str(&format!("{e}"));
            for j in 0..self.sigmas.len() {
                out.push(',');
                if let Some(p) = self.cell(i, j).success_rate() {
                    out.push_str(&format!("{p}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Fills every (ε, σ) cell with `episodes_per_cell` walks. One bias field is
/// drawn from `(seed, stream 0)` and shared by all cells; cell `c` (row-major)
/// draws its episodes from stream `c + 1`.
pub fn success_grid(cfg: &SimConfig) -> Result<SuccessGrid> {
    cfg.check()
        .map_err(|(field, why)| Error::InvalidArgument(format!("sim.{field}: {why}")))?;
    let bias = BiasField::new(cfg, &mut SeededRng::derive(cfg.seed, 0));
    let n_sigma = cfg.sigma_grid.len();
    let mut cells = Vec::with_capacity(cfg.epsilon_grid.len() * n_sigma);
    for (i, &eps) in cfg.epsilon_grid.iter().enumerate() {
        for (j, &sigma) in cfg.sigma_grid.iter().enumerate() {
            let mut rng = SeededRng::derive(cfg.seed, (i * n_sigma + j) as u64 + 1);
            let mut hits = 0usize;
            let mut fht_sum = 0u64;
            for _ in 0..cfg.episodes_per_cell {
                let out = walk_episode(cfg, &bias, eps, sigma, &mut rng);
                if let Some(t) = out.fht {
                    hits += 1;
                    fht_sum += t as u64;
                }
            }
            cells.push(GridCell {
                episodes: cfg.episodes_per_cell,
                hits,
                mean_fht: (hits > 0).then(|| fht_sum as f64 / hits as f64),
            });
        }
    }
    Ok(SuccessGrid {
        epsilons: cfg.epsilon_grid.clone(),
        sigmas: cfg.sigma_grid.clone(),
        cells,
    })
}
