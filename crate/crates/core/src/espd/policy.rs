use crate::envs::{clip_norm, Env, ExtendedState, InputScale};
use crate::error::{check_dim, Result};
use crate::numkit::{MlpParams, SeededRng};

/// Anything that maps (state, goal) to an action.
pub trait GoalPolicy {
    fn act(&self, state: &[f64], goal: &[f64]) -> Result<Vec<f64>>;
}

/// Deterministic target policy: an MLP over the scaled concatenation of state
/// and goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    net: MlpParams,
    scale: InputScale,
}

impl Policy {
    pub fn new(net: MlpParams, scale: InputScale) -> Self {
        Self { net, scale }
    }

    /// Fresh randomly initialized policy sized for `env`.
    pub fn init(env: &Env, hidden: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let cfg = env.config();
        let mut sizes = vec![cfg.state_dim() + cfg.goal_dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(cfg.action_dim());
        Ok(Self::new(MlpParams::init(&sizes, rng)?, env.input_scale()))
    }

    pub fn net(&self) -> &MlpParams {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpParams {
        &mut self.net
    }

    pub fn into_net(self) -> MlpParams {
        self.net
    }

    pub fn scale(&self) -> InputScale {
        self.scale
    }

    pub fn features(&self, state: &[f64], goal: &[f64]) -> Vec<f64> {
        self.scale.encode(state, goal)
    }
}

impl GoalPolicy for Policy {
    fn act(&self, state: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        check_dim("policy input", self.net.input_dim(), state.len() + goal.len())?;
        self.net.forward(&self.features(state, goal))
    }
}

/// Moves straight toward the goal at most `max_action` per step. Solves
/// `point_nav` exactly; used as a reference policy.
#[derive(Debug, Clone, Copy)]
pub struct GreedySolver {
    pub max_action: f64,
}

impl GoalPolicy for GreedySolver {
    fn act(&self, state: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        check_dim("goal", state.len(), goal.len())?;
        let delta: Vec<f64> = goal.iter().zip(state).map(|(g, s)| g - s).collect();
        Ok(clip_norm(&delta, self.max_action))
    }
}

/// Target action plus N(0, sigma²) per component. Clipping is left to the
/// environment.
pub fn behavior_act<P: GoalPolicy + ?Sized>(
    policy: &P,
    q: &ExtendedState,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let mut a = policy.act(&q.state, &q.goal)?;
    let noise = rng.gaussian_vec(a.len(), sigma)?;
    for (ai, ni) in a.iter_mut().zip(noise) {
        *ai += ni;
    }
    Ok(a)
}

/// Fraction of `episodes` fresh episodes in which the goal is reached at any
/// step, acting with `policy` plus N(0, sigma_eval²) action noise.
pub fn evaluate<P: GoalPolicy + ?Sized>(
    env: &mut Env,
    policy: &P,
    sigma_eval: f64,
    episodes: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if episodes == 0 {
        return Err(crate::Error::InvalidArgument(
            "evaluate needs at least one episode".into(),
        ));
    }
    let mut successes = 0usize;
    for _ in 0..episodes {
        let mut q = env.reset(rng);
        for _ in 0..env.horizon() {
            let a = behavior_act(policy, &q, sigma_eval, rng)?;
            let r = env.step(&a)?;
            if r.reached {
                successes += 1;
                break;
            }
            q.state = r.next_state;
        }
    }
    Ok(successes as f64 / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;

    fn zero_policy(env: &Env) -> Policy {
        let n = env.config().state_dim();
        Policy::new(MlpParams::zeros(&[2 * n, 8, n]).unwrap(), env.input_scale())
    }

    #[test]
    fn zero_sigma_is_target_policy() {
        let env = Env::new(EnvConfig::point_nav()).unwrap();
        let mut rng = SeededRng::new(1);
        let policy = Policy::init(&env, &[16], &mut rng).unwrap();
        let q = ExtendedState {
            state: vec![10.0, 20.0],
            goal: vec![60.0, 5.0],
        };
        let a = behavior_act(&policy, &q, 0.0, &mut rng).unwrap();
        assert_eq!(a, policy.act(&q.state, &q.goal).unwrap());
    }

    #[test]
    fn zero_policy_gives_pure_noise() {
        let env = Env::new(EnvConfig::point_nav()).unwrap();
        let policy = zero_policy(&env);
        let q = ExtendedState {
            state: vec![1.0, 2.0],
            goal: vec![3.0, 4.0],
        };
        let mut a = SeededRng::new(9);
        let mut b = SeededRng::new(9);
        let act = behavior_act(&policy, &q, 1.0, &mut a).unwrap();
        assert_eq!(act, b.gaussian_vec(2, 1.0).unwrap());
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let env = Env::new(EnvConfig::point_nav()).unwrap();
        let mut rng = SeededRng::new(3);
        let policy = Policy::init(&env, &[8], &mut rng).unwrap();
        let q = ExtendedState {
            state: vec![30.0, 70.0],
            goal: vec![50.0, 50.0],
        };
        let base = policy.act(&q.state, &q.goal).unwrap();
        let sigma = 1.7;
        let n = 100_000;
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let a = behavior_act(&policy, &q, sigma, &mut rng).unwrap();
            for d in 0..2 {
                sq[d] += (a[d] - base[d]).powi(2);
            }
        }
        for s in sq {
            let var = s / n as f64;
            assert!((var / (sigma * sigma) - 1.0).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn greedy_solver_always_succeeds() {
        let mut env = Env::new(EnvConfig::point_nav()).unwrap();
        let solver = GreedySolver { max_action: 10.0 };
        let rate = evaluate(&mut env, &solver, 0.0, 200, &mut SeededRng::new(0)).unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn zero_policy_never_succeeds() {
        let mut env = Env::new(EnvConfig::point_nav()).unwrap();
        let policy = zero_policy(&env);
        let rate = evaluate(&mut env, &policy, 0.0, 200, &mut SeededRng::new(0)).unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn evaluate_needs_episodes() {
        let mut env = Env::new(EnvConfig::point_nav()).unwrap();
        let solver = GreedySolver { max_action: 10.0 };
        assert!(evaluate(&mut env, &solver, 0.0, 0, &mut SeededRng::new(0)).is_err());
    }
}
