use serde::{Deserialize, Serialize};

use super::{evaluate, relabel, rollout, select_counted, Episode, HidBuffer, HidTuple, Policy};
use crate::envs::{Env, EnvConfig};
use crate::error::{Error, Result};
use crate::numkit::{AdamConfig, AdamState, SeededRng, Workspace};
use crate::record::EpisodeRecord;

const STREAM_INIT: u64 = 0;
const STREAM_RESET: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SAMPLE: u64 = 3;
const STREAM_EVAL: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Largest hindsight span K.
    pub horizon: usize,
    /// Behavior-policy action noise.
    pub sigma: f64,
    /// Data-collection episodes M.
    pub episodes: usize,
    /// Episode length T; the environment's horizon when unset.
    pub episode_length: Option<usize>,
    pub batch_size: usize,
    pub updates_per_episode: usize,
    pub buffer_capacity: usize,
    /// Evaluation action noise; `0.05 * max_action` when unset.
    pub eval_sigma: Option<f64>,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// At most this many relabeled candidates per episode are probed.
    pub candidate_cap: usize,
    pub hidden_layers: Vec<usize>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 8,
            sigma: 1.0,
            episodes: 2000,
            episode_length: None,
            batch_size: 128,
            updates_per_episode: 40,
            buffer_capacity: 100_000,
            eval_sigma: None,
            eval_every: 20,
            eval_episodes: 100,
            candidate_cap: 64,
            hidden_layers: vec![64, 64],
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Fills the environment-dependent defaults.
    pub fn resolved(&self, env: &EnvConfig) -> Self {
        let mut out = self.clone();
        out.episode_length.get_or_insert(env.episode_horizon);
        out.eval_sigma.get_or_insert(0.05 * env.max_action);
        out
    }

    pub fn episode_length_for(&self, env: &EnvConfig) -> usize {
        self.episode_length.unwrap_or(env.episode_horizon)
    }

    pub fn eval_sigma_for(&self, env: &EnvConfig) -> f64 {
        self.eval_sigma.unwrap_or(0.05 * env.max_action)
    }

    /// Checks the invariants, returning the offending field name and reason.
    pub fn check(&self, env: &EnvConfig) -> std::result::Result<(), (&'static str, String)> {
        let t = self.episode_length_for(env);
        if t < 1 {
            return Err(("episode_length", "must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(("horizon", "must be at least 1".into()));
        }
        if self.horizon > t {
            return Err((
                "horizon",
                format!("must not exceed the episode length {t}, got {}", self.horizon),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        let es = self.eval_sigma_for(env);
        if !(es >= 0.0 && es.is_finite()) {
            return Err(("eval_sigma", format!("must be finite and >= 0, got {es}")));
        }
        if self.batch_size < 1 {
            return Err(("batch_size", "must be at least 1".into()));
        }
        if self.buffer_capacity < 1 {
            return Err(("buffer_capacity", "must be at least 1".into()));
        }
        if self.eval_every < 1 {
            return Err(("eval_every", "must be at least 1".into()));
        }
        if self.eval_episodes < 1 {
            return Err(("eval_episodes", "must be at least 1".into()));
        }
        if self.candidate_cap < 1 {
            return Err(("candidate_cap", "must be at least 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(("hidden_layers", "widths must be positive".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.beta1 >= 0.0 && a.beta1 < 1.0 && a.beta2 >= 0.0 && a.beta2 < 1.0 && a.epsilon > 0.0) {
            return Err(("adam", "needs learning_rate > 0, betas in [0, 1), epsilon > 0".into()));
        }
        Ok(())
    }
}

/// One Adam step on the mean squared error between the policy output and the
/// stored actions over a uniformly drawn minibatch. Returns the loss before
/// the step, or `None` (and does nothing) when the buffer is empty.
pub fn spd_update(
    policy: &mut Policy,
    opt: &mut AdamState,
    buffer: &HidBuffer,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Option<f64>> {
    let mut grads = vec![0.0; policy.net().num_params()];
    let mut ws = policy.net().workspace();
    spd_step(policy, opt, buffer, batch_size, rng, &mut grads, &mut ws)
}

fn spd_step(
    policy: &mut Policy,
    opt: &mut AdamState,
    buffer: &HidBuffer,
    batch_size: usize,
    rng: &mut SeededRng,
    grads: &mut [f64],
    ws: &mut Workspace,
) -> Result<Option<f64>> {
    if buffer.is_empty() {
        return Ok(None);
    }
    let batch = buffer.sample(rng, batch_size);
    let inputs: Vec<Vec<f64>> = batch.iter().map(|h| policy.features(&h.state, &h.goal)).collect();
    let targets: Vec<&[f64]> = batch.iter().map(|h| h.action.as_slice()).collect();
    let loss = policy.net().accumulate_grad(&inputs, &targets, grads, ws)?;
    opt.step(policy.net_mut(), grads)?;
    Ok(Some(loss))
}

/// Outcome of one data-collection phase.
#[derive(Debug, Clone)]
pub struct Collected {
    pub episode: Episode,
    /// Relabeled, non-degenerate candidates before the cap.
    pub candidates: usize,
    /// Candidates actually probed by SELECT.
    pub probed: usize,
    /// Tuples that passed SELECT and entered the buffer, in insertion order.
    pub inserted: Vec<HidTuple>,
}

/// Stepwise driver of the distillation loop.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    seed: u64,
    env: Env,
    probe: Env,
    policy: Policy,
    adam: AdamState,
    buffer: HidBuffer,
    reset_rng: SeededRng,
    noise_rng: SeededRng,
    sample_rng: SeededRng,
    episodes_done: u64,
    env_steps: u64,
    grads: Vec<f64>,
    ws: Workspace,
}

impl Trainer {
    pub fn new(env_cfg: &EnvConfig, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let (env, cfg) = Self::prepare(env_cfg, cfg)?;
        let mut init_rng = SeededRng::derive(seed, STREAM_INIT);
        let policy = Policy::init(&env, &cfg.hidden_layers, &mut init_rng)?;
        Self::assemble(env, cfg, seed, policy)
    }

    /// Starts from a caller-supplied policy instead of a random one.
    pub fn with_policy(env_cfg: &EnvConfig, cfg: &TrainConfig, seed: u64, policy: Policy) -> Result<Self> {
        let (env, cfg) = Self::prepare(env_cfg, cfg)?;
        let c = env.config();
        if policy.net().input_dim() != c.state_dim() + c.goal_dim()
            || policy.net().output_dim() != c.action_dim()
        {
            return Err(Error::InvalidArgument(
                "policy network does not fit the environment".into(),
            ));
        }
        Self::assemble(env, cfg, seed, policy)
    }

    fn prepare(env_cfg: &EnvConfig, cfg: &TrainConfig) -> Result<(Env, TrainConfig)> {
        cfg.check(env_cfg)
            .map_err(|(field, why)| Error::InvalidArgument(format!("train.{field}: {why}")))?;
        let cfg = cfg.resolved(env_cfg);
        let mut env_cfg = env_cfg.clone();
        env_cfg.episode_horizon = cfg.episode_length.expect("resolved");
        Ok((Env::new(env_cfg)?, cfg))
    }

    fn assemble(env: Env, cfg: TrainConfig, seed: u64, policy: Policy) -> Result<Self> {
        let adam = AdamState::for_params(policy.net(), cfg.adam);
        let grads = vec![0.0; policy.net().num_params()];
        let ws = policy.net().workspace();
        Ok(Self {
            probe: env.clone(),
            env,
            buffer: HidBuffer::new(cfg.buffer_capacity),
            reset_rng: SeededRng::derive(seed, STREAM_RESET),
            noise_rng: SeededRng::derive(seed, STREAM_NOISE),
            sample_rng: SeededRng::derive(seed, STREAM_SAMPLE),
            cfg,
            seed,
            policy,
            adam,
            episodes_done: 0,
            env_steps: 0,
            grads,
            ws,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    pub fn buffer(&self) -> &HidBuffer {
        &self.buffer
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Rollout, relabel, cap, SELECT and insert. The policy is not touched.
    pub fn collect(&mut self) -> Result<Collected> {
        self.env.reset(&mut self.reset_rng);
        let episode = rollout(&mut self.env, &self.policy, self.cfg.sigma, &mut self.noise_rng)?;
        self.env_steps += episode.len() as u64;

        let mut candidates = relabel(&self.env, &episode, self.cfg.horizon)?;
        let total = candidates.len();
        if total > self.cfg.candidate_cap {
            let mut keep = self.sample_rng.sample_indices(total, self.cfg.candidate_cap);
            keep.sort_unstable();
            let mut all = candidates.into_iter().map(Some).collect::<Vec<_>>();
            candidates = keep.into_iter().map(|i| all[i].take().expect("distinct")).collect();
        }

        let probed = candidates.len();
        let mut inserted = Vec::new();
        for cand in candidates {
            let (keep, steps) = select_counted(
                &mut self.probe,
                &self.policy,
                &episode.snapshots[cand.t],
                &cand.goal,
                cand.span,
            )?;
            self.env_steps += steps as u64;
            if keep {
                inserted.push(cand.clone());
                self.buffer.push(cand);
            }
        }
        Ok(Collected {
            episode,
            candidates: total,
            probed,
            inserted,
        })
    }

    /// `updates_per_episode` distillation steps; mean pre-step loss, or `None`
    /// when the buffer is empty.
    pub fn update(&mut self) -> Result<Option<f64>> {
        let mut total = 0.0;
        let mut n = 0usize;
        for _ in 0..self.cfg.updates_per_episode {
            match spd_step(
                &mut self.policy,
                &mut self.adam,
                &self.buffer,
                self.cfg.batch_size,
                &mut self.sample_rng,
                &mut self.grads,
                &mut self.ws,
            )? {
                Some(loss) => {
                    total += loss;
                    n += 1;
                }
                None => break,
            }
        }
        Ok((n > 0).then(|| total / n as f64))
    }

    /// Success rate of the current target policy with `sigma_eval` noise.
    /// Every call sees the same sequence of test episodes.
    pub fn evaluate(&self, sigma_eval: f64, episodes: usize) -> Result<f64> {
        let mut env = self.env.clone();
        let mut rng = SeededRng::derive(self.seed, STREAM_EVAL);
        evaluate(&mut env, &self.policy, sigma_eval, episodes, &mut rng)
    }

    /// One full iteration of the loop, evaluating when the cadence or the
    /// final episode calls for it.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let collected = self.collect()?;
        let mean_loss = self.update()?;
        self.episodes_done += 1;
        let due = self.episodes_done.is_multiple_of(self.cfg.eval_every as u64)
            || self.episodes_done == self.cfg.episodes as u64;
        let eval_success = if due {
            let sigma = self.cfg.eval_sigma.expect("resolved");
            Some(self.evaluate(sigma, self.cfg.eval_episodes)?)
        } else {
            None
        };
        Ok(EpisodeRecord {
            episode: self.episodes_done,
            env_steps: self.env_steps,
            buffer_size: Some(self.buffer.len()),
            candidates: Some(collected.candidates),
            selected: Some(collected.inserted.len()),
            mean_loss,
            eval_success,
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub log: Vec<EpisodeRecord>,
    pub env_steps: u64,
}

/// Runs `cfg.episodes` iterations from a seeded random initialization.
pub fn train(env_cfg: &EnvConfig, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let trainer = Trainer::new(env_cfg, cfg, seed)?;
    run_trainer(trainer)
}

pub(crate) fn run_trainer(mut trainer: Trainer) -> Result<TrainOutcome> {
    let mut log = Vec::with_capacity(trainer.cfg.episodes);
    for _ in 0..trainer.cfg.episodes {
        log.push(trainer.run_episode()?);
    }
    Ok(TrainOutcome {
        env_steps: trainer.env_steps,
        policy: trainer.policy,
        log,
    })
}

impl Trainer {
    /// Runs the remaining configured episodes.
    pub fn run(self) -> Result<TrainOutcome> {
        run_trainer(self)
    }
}
