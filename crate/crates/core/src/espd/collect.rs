use super::{behavior_act, GoalPolicy, HidTuple};
use crate::envs::{Env, EnvSnapshot, ExtendedState};
use crate::error::{Error, Result};
use crate::numkit::SeededRng;

/// A recorded trajectory. `actions[i]` is the norm-clipped action the
/// environment executed in `states[i]`; `snapshots[i]` restores the
/// environment to `states[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub goal: Vec<f64>,
    pub reached: Vec<bool>,
    pub snapshots: Vec<EnvSnapshot>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn any_reached(&self) -> bool {
        self.reached.iter().any(|&r| r)
    }
}

/// Runs the behavior policy from the environment's current state until the
/// episode horizon. Episodes do not stop early on success.
pub fn rollout<P: GoalPolicy + ?Sized>(
    env: &mut Env,
    policy: &P,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<Episode> {
    let steps = env.horizon() - env.step_index();
    let mut q = ExtendedState {
        state: env.state().to_vec(),
        goal: env.goal().to_vec(),
    };
    let mut ep = Episode {
        states: Vec::with_capacity(steps + 1),
        actions: Vec::with_capacity(steps),
        goal: q.goal.clone(),
        reached: Vec::with_capacity(steps),
        snapshots: Vec::with_capacity(steps),
    };
    ep.states.push(q.state.clone());
    for _ in 0..steps {
        ep.snapshots.push(env.snapshot());
        let raw = behavior_act(policy, &q, sigma, rng)?;
        let executed = env.clip_action(&raw);
        let r = env.step(&executed)?;
        ep.actions.push(executed);
        ep.reached.push(r.reached);
        ep.states.push(r.next_state.clone());
        q.state = r.next_state;
    }
    Ok(ep)
}

/// Hindsight candidates `(s_t, m(s_{t+k}), a_t, k)` for every `t` and
/// `k in 1..=horizon` with `t + k <= T`, in `(t, k)` order. Candidates whose
/// hindsight goal is already satisfied at `s_t` are dropped.
pub fn relabel(env: &Env, episode: &Episode, horizon: usize) -> Result<Vec<HidTuple>> {
    let len = episode.len();
    if horizon < 1 || horizon > len {
        return Err(Error::InvalidArgument(format!(
            "relabel horizon must be in 1..={len}, got {horizon}"
        )));
    }
    let goals: Vec<Vec<f64>> = episode.states.iter().map(|s| env.achieved_goal(s)).collect();
    let mut out = Vec::new();
    for t in 0..len {
        for k in 1..=horizon.min(len - t) {
            let g = &goals[t + k];
            if env.is_reached(&goals[t], g) {
                continue;
            }
            out.push(HidTuple {
                t,
                state: episode.states[t].clone(),
                goal: g.clone(),
                action: episode.actions[t].clone(),
                span: k,
            });
        }
    }
    Ok(out)
}

/// True when the noise-free `policy`, started from `snapshot`, does NOT bring
/// the achieved goal into the ball around `goal` within `span` steps. The
/// environment is left in the probed state; callers that care restore it.
pub fn select<P: GoalPolicy + ?Sized>(
    env: &mut Env,
    policy: &P,
    snapshot: &EnvSnapshot,
    goal: &[f64],
    span: usize,
) -> Result<bool> {
    select_counted(env, policy, snapshot, goal, span).map(|(verdict, _)| verdict)
}

/// [`select`] that also reports how many environment steps the probe took.
pub fn select_counted<P: GoalPolicy + ?Sized>(
    env: &mut Env,
    policy: &P,
    snapshot: &EnvSnapshot,
    goal: &[f64],
    span: usize,
) -> Result<(bool, usize)> {
    if span < 1 {
        return Err(Error::InvalidArgument("select span must be >= 1".into()));
    }
    env.restore(snapshot)?;
    let mut state = snapshot.state().to_vec();
    for i in 1..=span {
        let a = policy.act(&state, goal)?;
        let r = env.step(&a)?;
        if env.is_reached(&r.achieved_goal, goal) {
            return Ok((false, i));
        }
        state = r.next_state;
    }
    Ok((true, span))
}
