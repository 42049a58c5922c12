//! Evolution strategies baseline with parameter-space Gaussian noise,
//! mirrored sampling and centered-rank fitness shaping.

use serde::{Deserialize, Serialize};

use crate::envs::{distance, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::espd::{evaluate, GoalPolicy, Policy};
use crate::numkit::SeededRng;
use crate::record::EpisodeRecord;

const STREAM_INIT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_EVAL: u64 = 4;
const STREAM_FITNESS_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    /// Even; perturbations come in ± pairs.
    pub population_size: usize,
    pub param_sigma: f64,
    pub learning_rate: f64,
    pub generations: usize,
    pub episodes_per_fitness: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    /// Evaluate the current policy every this many generations (and after
    /// the last one).
    pub eval_every: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            param_sigma: 0.05,
            learning_rate: 0.01,
            generations: 100,
            episodes_per_fitness: 5,
            seed: 0,
            hidden_layers: vec![64, 64],
            eval_every: 5,
        }
    }
}

impl EsConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.population_size < 2 || !self.population_size.is_multiple_of(2) {
            return Err((
                "population_size",
                format!("must be even and >= 2, got {}", self.population_size),
            ));
        }
        if !(self.param_sigma > 0.0 && self.param_sigma.is_finite()) {
            return Err(("param_sigma", "must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(("learning_rate", "must be positive".into()));
        }
        if self.episodes_per_fitness < 1 {
            return Err(("episodes_per_fitness", "must be at least 1".into()));
        }
        if self.eval_every < 1 {
            return Err(("eval_every", "must be at least 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(("hidden_layers", "widths must be positive".into()));
        }
        Ok(())
    }
}

/// Centered ranks in `[-0.5, 0.5]`; tied fitnesses share their mean rank.
pub fn centered_ranks(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && fitness[order[j + 1]] == fitness[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mean_rank / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    ranks
}

/// Parameter step from mirrored noise directions and the fitnesses of
/// `[+ε₀, -ε₀, +ε₁, -ε₁, ...]`:
/// `lr / (pop·σ) · Σ_i w_i·η_i` with `w` the centered ranks.
pub fn rank_update(noise: &[Vec<f64>], fitness: &[f64], learning_rate: f64, sigma: f64) -> Vec<f64> {
    assert_eq!(fitness.len(), 2 * noise.len(), "one fitness per mirrored member");
    let dim = noise.first().map_or(0, Vec::len);
    let w = centered_ranks(fitness);
    let scale = learning_rate / (fitness.len() as f64 * sigma);
    let mut step = vec![0.0; dim];
    for (k, eps) in noise.iter().enumerate() {
        let coeff = w[2 * k] - w[2 * k + 1];
        if coeff == 0.0 {
            continue;
        }
        for (s, e) in step.iter_mut().zip(eps) {
            *s += coeff * e;
        }
    }
    for s in &mut step {
        *s *= scale;
    }
    step
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

/// One ES generation on a flat parameter vector. `fitness` is maximized.
pub fn es_generation<F>(
    theta: &mut [f64],
    cfg: &EsConfig,
    rng: &mut SeededRng,
    mut fitness: F,
) -> Result<GenerationStats>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.check()
        .map_err(|(field, why)| Error::InvalidArgument(format!("es.{field}: {why}")))?;
    let dim = theta.len();
    let half = cfg.population_size / 2;
    let mut noise = Vec::with_capacity(half);
    let mut scores = Vec::with_capacity(cfg.population_size);
    let mut probe = vec![0.0; dim];
    for _ in 0..half {
        let eps = rng.gaussian_vec(dim.max(1), 1.0)?;
        let eps = eps[..dim].to_vec();
        for sign in [1.0, -1.0] {
            for ((p, t), e) in probe.iter_mut().zip(theta.iter()).zip(&eps) {
                *p = t + sign * cfg.param_sigma * e;
            }
            scores.push(fitness(&probe)?);
        }
        noise.push(eps);
    }
    let step = rank_update(&noise, &scores, cfg.learning_rate, cfg.param_sigma);
    for (t, s) in theta.iter_mut().zip(&step) {
        *t += s;
    }
    Ok(GenerationStats {
        best_fitness: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_fitness: scores.iter().sum::<f64>() / scores.len() as f64,
    })
}

/// Mean over `episodes` of `success - final_distance / diameter`, acting
/// deterministically for the full horizon.
pub fn es_fitness<P: GoalPolicy + ?Sized>(
    env: &mut Env,
    policy: &P,
    episodes: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("es_fitness needs at least one episode".into()));
    }
    let diameter = env.config().goal_diameter();
    let mut total = 0.0;
    for _ in 0..episodes {
        let q = env.reset(rng);
        let mut state = q.state;
        let mut success = false;
        for _ in 0..env.horizon() {
            let a = policy.act(&state, &q.goal)?;
            let r = env.step(&a)?;
            success |= r.reached;
            state = r.next_state;
        }
        let final_distance = distance(&env.achieved_goal(&state), &q.goal);
        total += f64::from(u8::from(success)) - final_distance / diameter;
    }
    Ok(total / episodes as f64)
}

/// Evaluation settings shared with the ESPD driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub sigma: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone)]
pub struct EsOutcome {
    pub policy: Policy,
    pub log: Vec<EpisodeRecord>,
}

/// Trains a policy network with ES. Log rows index generations by the number
/// of environment episodes consumed: `generation × population × episodes_per_fitness`.
pub fn es_train(env_cfg: &EnvConfig, cfg: &EsConfig, eval: EvalSettings) -> Result<EsOutcome> {
    cfg.check()
        .map_err(|(field, why)| Error::InvalidArgument(format!("es.{field}: {why}")))?;
    let mut env = Env::new(env_cfg.clone())?;
    let mut policy = Policy::init(&env, &cfg.hidden_layers, &mut SeededRng::derive(cfg.seed, STREAM_INIT))?;
    let mut theta = policy.net().as_slice().to_vec();
    let mut noise_rng = SeededRng::derive(cfg.seed, STREAM_NOISE);
    let per_generation = (cfg.population_size * cfg.episodes_per_fitness) as u64;
    let mut log = Vec::with_capacity(cfg.generations);
    let mut env_steps = 0u64;

    for generation in 1..=cfg.generations as u64 {
        // Every member of a generation faces the same episodes.
        let fitness_rng = SeededRng::derive(cfg.seed, STREAM_FITNESS_BASE + generation);
        let mut member = policy.clone();
        let stats = es_generation(&mut theta, cfg, &mut noise_rng, |params| {
            member.net_mut().as_mut_slice().copy_from_slice(params);
            es_fitness(&mut env, &member, cfg.episodes_per_fitness, &mut fitness_rng.clone())
        })?;
        policy.net_mut().as_mut_slice().copy_from_slice(&theta);
        env_steps += per_generation * env.horizon() as u64;

        let due = generation % cfg.eval_every as u64 == 0 || generation == cfg.generations as u64;
        let eval_success = if due {
            let mut rng = SeededRng::derive(cfg.seed, STREAM_EVAL);
            Some(evaluate(&mut env, &policy, eval.sigma, eval.episodes, &mut rng)?)
        } else {
            None
        };
        log.push(EpisodeRecord {
            episode: generation * per_generation,
            env_steps,
            best_fitness: Some(stats.best_fitness),
            mean_fitness: Some(stats.mean_fitness),
            eval_success,
            ..Default::default()
        });
    }
    Ok(EsOutcome { policy, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::espd::GreedySolver;
    use crate::numkit::MlpParams;

    #[test]
    fn ranks_are_centered() {
        let w = centered_ranks(&[3.0, -1.0, 10.0, 0.5]);
        for (a, b) in w.iter().zip([1.0 / 6.0, -0.5, 0.5, -1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(w.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn ties_share_rank() {
        assert_eq!(centered_ranks(&[2.0, 2.0, 2.0, 2.0]), vec![0.0; 4]);
        let w = centered_ranks(&[1.0, 5.0, 5.0]);
        assert_eq!(w, vec![-0.5, 0.25, 0.25]);
    }

    #[test]
    fn equal_fitness_leaves_params() {
        let cfg = EsConfig { population_size: 8, ..Default::default() };
        let mut theta = vec![0.3, -0.2, 1.0];
        let before = theta.clone();
        es_generation(&mut theta, &cfg, &mut SeededRng::new(1), |_| Ok(4.2)).unwrap();
        assert_eq!(theta, before);
    }

    #[test]
    fn mirrored_pair_moves_toward_better_side() {
        let noise = vec![vec![1.0, -2.0]];
        let step = rank_update(&noise, &[1.0, 0.0], 0.1, 0.5);
        // w = [0.5, -0.5]; step = 0.1 / (2 * 0.5) * 1.0 * eps
        assert_eq!(step, vec![0.1, -0.2]);
    }

    #[test]
    fn quadratic_descends_toward_zero() {
        let cfg = EsConfig {
            population_size: 20,
            param_sigma: 0.1,
            learning_rate: 0.05,
            ..Default::default()
        };
        let mut theta = vec![2.0f64];
        let mut rng = SeededRng::new(12);
        let mut path = Vec::new();
        for _ in 0..200 {
            es_generation(&mut theta, &cfg, &mut rng, |p| Ok(-p[0] * p[0])).unwrap();
            path.push(theta[0]);
        }
        // Each step is at most lr/(2σ) = 0.25, so 2.0 needs at least 8 steps.
        assert!(path[9].abs() < 2.0);
        assert!(path[49].abs() < 0.5, "{}", path[49]);
        assert!(path[150..].iter().all(|t| t.abs() < 0.3));
    }

    #[test]
    fn odd_population_rejected() {
        let cfg = EsConfig { population_size: 5, ..Default::default() };
        let mut theta = vec![0.0];
        assert!(es_generation(&mut theta, &cfg, &mut SeededRng::new(0), |_| Ok(0.0)).is_err());
    }

    #[test]
    fn solver_fitness_is_near_one() {
        let mut env = Env::new(EnvConfig::point_nav()).unwrap();
        let solver = GreedySolver { max_action: 10.0 };
        let f = es_fitness(&mut env, &solver, 50, &mut SeededRng::new(3)).unwrap();
        assert!((f - 1.0).abs() < 1e-9, "fitness {f}");
    }

    #[test]
    fn zero_policy_fitness_is_mean_pair_distance() {
        // Independent Monte-Carlo estimate of E‖x - y‖ for x, y uniform in the
        // unit square (≈ 0.5214), scaled by the diameter √2.
        let mut oracle_rng = SeededRng::new(99);
        let n = 400_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (a, b, c, d) = (
                oracle_rng.uniform(0.0, 1.0),
                oracle_rng.uniform(0.0, 1.0),
                oracle_rng.uniform(0.0, 1.0),
                oracle_rng.uniform(0.0, 1.0),
            );
            sum += ((a - c).powi(2) + (b - d).powi(2)).sqrt();
        }
        let expected = -(sum / n as f64) / 2f64.sqrt();

        let mut cfg = EnvConfig::point_nav();
        cfg.episode_horizon = 1;
        let mut env = Env::new(cfg).unwrap();
        let zero = Policy::new(MlpParams::zeros(&[4, 2]).unwrap(), env.input_scale());
        let f = es_fitness(&mut env, &zero, 20_000, &mut SeededRng::new(5)).unwrap();
        assert!(f < 0.0);
        // Standard error of the fitness mean is about 0.17 / sqrt(20000).
        assert!((f - expected).abs() < 0.006, "fitness {f}, expected {expected}");
    }

    #[test]
    fn fitness_is_seeded() {
        let mut env = Env::new(EnvConfig::point_nav()).unwrap();
        let mut rng = SeededRng::new(1);
        let p = Policy::init(&env, &[8], &mut rng).unwrap();
        let a = es_fitness(&mut env, &p, 3, &mut SeededRng::new(7)).unwrap();
        let b = es_fitness(&mut env, &p, 3, &mut SeededRng::new(7)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn short_training_run_logs_episode_axis() {
        let mut env = EnvConfig::point_nav();
        env.episode_horizon = 10;
        let cfg = EsConfig {
            population_size: 4,
            generations: 3,
            episodes_per_fitness: 2,
            hidden_layers: vec![8],
            eval_every: 2,
            ..Default::default()
        };
        let eval = EvalSettings { sigma: 0.0, episodes: 5 };
        let out = es_train(&env, &cfg, eval).unwrap();
        let eps: Vec<u64> = out.log.iter().map(|r| r.episode).collect();
        assert_eq!(eps, vec![8, 16, 24]);
        assert!(out.log[0].eval_success.is_none());
        assert!(out.log[1].eval_success.is_some() && out.log[2].eval_success.is_some());
        let again = es_train(&env, &cfg, eval).unwrap();
        assert_eq!(out.log, again.log);
        assert_eq!(out.policy, again.policy);
    }
}
