//! Gaussian actor, critic with target network, and the TD, REINFORCE, GAE and
//! PPO losses built on them.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_finite, check_len, Error, Result};
use crate::net::{Architecture, HeadMap, MlpNet};

/// `½ ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn gaussian_logprob(mean: f64, std: f64, a: f64) -> f64 {
    let u = (a - mean) / std;
    -0.5 * u * u - std.ln() - HALF_LN_2PI
}

pub fn gaussian_entropy(std: f64) -> f64 {
    0.5 * (2.0 * PI * E * std * std).ln()
}

/// Shared tanh trunk feeding a mean head and a positive std head.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    trunk: MlpNet,
    mean_head: MlpNet,
    std_head: MlpNet,
}

impl GaussianPolicy {
    pub fn architectures(hidden: usize) -> [Architecture; 3] {
        [
            Architecture::linear(1, hidden).all_tanh(),
            Architecture::linear(hidden, 1),
            Architecture::linear(hidden, 1).with_head(HeadMap::Positive),
        ]
    }

    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Result<Self> {
        let [t, m, s] = Self::architectures(hidden);
        Self::from_nets(MlpNet::init(t, rng)?, MlpNet::init(m, rng)?, MlpNet::init(s, rng)?)
    }

    pub fn from_nets(trunk: MlpNet, mean_head: MlpNet, std_head: MlpNet) -> Result<Self> {
        check_len("policy trunk input", 1, trunk.input_dim())?;
        check_len("mean head input", trunk.output_dim(), mean_head.input_dim())?;
        check_len("std head input", trunk.output_dim(), std_head.input_dim())?;
        check_len("mean head output", 1, mean_head.output_dim())?;
        check_len("std head output", 1, std_head.output_dim())?;
        if std_head.architecture().head != HeadMap::Positive {
            return Err(Error::Config("std head must use the positive head map".into()));
        }
        Ok(GaussianPolicy { trunk, mean_head, std_head })
    }

    pub fn nets(&self) -> [&MlpNet; 3] {
        [&self.trunk, &self.mean_head, &self.std_head]
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    /// Trunk, mean head and std head parameters, concatenated.
    pub fn params(&self) -> Vec<f64> {
        self.nets().iter().flat_map(|n| n.params().iter().copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("policy parameters", self.param_count(), params.len())?;
        let (t, rest) = params.split_at(self.trunk.param_count());
        let (m, s) = rest.split_at(self.mean_head.param_count());
        self.trunk.set_params(t)?;
        self.mean_head.set_params(m)?;
        self.std_head.set_params(s)
    }

    fn features(&self, x: f64) -> Result<Vec<f64>> {
        self.trunk.forward(&[x])
    }

    /// Mean and standard deviation of the action distribution at `x`.
    pub fn heads(&self, x: f64) -> Result<(f64, f64)> {
        let h = self.features(x)?;
        Ok((self.mean_head.forward(&h)?[0], self.std_head.forward(&h)?[0]))
    }

    /// Action `mean + std·z` and its log-density.
    pub fn sample_with(&self, x: f64, z: f64) -> Result<(f64, f64)> {
        let (mean, std) = self.heads(x)?;
        let a = mean + std * z;
        Ok((a, gaussian_logprob(mean, std, a)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<(f64, f64)> {
        self.sample_with(x, StandardNormal.sample(rng))
    }

    pub fn logprob(&self, x: f64, a: f64) -> Result<f64> {
        let (mean, std) = self.heads(x)?;
        Ok(gaussian_logprob(mean, std, a))
    }

    pub fn entropy(&self, x: f64) -> Result<f64> {
        Ok(gaussian_entropy(self.heads(x)?.1))
    }

    /// Adds `scale · (d_mean ∂mean/∂ψ + d_std ∂std/∂ψ)` into the flat gradient.
    pub fn backward(&self, x: f64, d_mean: f64, d_std: f64, scale: f64, grad: &mut [f64]) -> Result<()> {
        check_len("policy gradient buffer", self.param_count(), grad.len())?;
        let h = self.features(x)?;
        let (gt, rest) = grad.split_at_mut(self.trunk.param_count());
        let (gm, gs) = rest.split_at_mut(self.mean_head.param_count());
        let dh_m = self.mean_head.backward(&h, &[d_mean], scale, gm)?;
        let dh_s = self.std_head.backward(&h, &[d_std], scale, gs)?;
        let dh: Vec<f64> = dh_m.iter().zip(&dh_s).map(|(a, b)| a + b).collect();
        self.trunk.backward(&[x], &dh, scale, gt)?;
        Ok(())
    }
}

/// Critic `V` and its lagged copy `T` used for bootstrapped targets.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticPair {
    pub critic: MlpNet,
    pub target: MlpNet,
    pub period: u64,
}

impl CriticPair {
    pub fn new(critic: MlpNet, period: u64) -> Result<Self> {
        check_len("critic input", 1, critic.input_dim())?;
        check_len("critic output", 1, critic.output_dim())?;
        if period == 0 {
            return Err(Error::Config("target sync period must be positive".into()));
        }
        Ok(CriticPair { target: critic.clone(), critic, period })
    }

    /// Copies the critic into the target when `step` is a multiple of the
    /// period. Returns whether a copy happened.
    pub fn target_sync(&mut self, step: u64) -> bool {
        if step.is_multiple_of(self.period) {
            self.target.params_mut().copy_from_slice(self.critic.params());
            true
        } else {
            false
        }
    }
}

/// `y = r + γ T(x')`.
pub fn td_target(r: f64, x_next: f64, target: &MlpNet, gamma: f64) -> f64 {
    r + gamma * target.eval_scalar(x_next)
}

pub fn td_error(y: f64, v: f64) -> f64 {
    y - v
}

/// Mean of `(y − V(x))²` over the batch and its gradient in the critic
/// parameters. Targets are constants.
pub fn critic_loss(critic: &MlpNet, states: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("critic targets", states.len(), targets.len())?;
    nonempty(states)?;
    check_finite("critic targets", targets)?;
    let scale = 1.0 / states.len() as f64;
    let mut grad = vec![0.0; critic.param_count()];
    let mut loss = 0.0;
    for (&x, &y) in states.iter().zip(targets) {
        let delta = td_error(y, critic.eval_scalar(x));
        loss += delta * delta;
        critic.backward(&[x], &[-2.0 * delta], scale, &mut grad)?;
    }
    finite_loss("critic loss", loss * scale, grad)
}

/// Mean of `−δ log π(a|x)`, with `δ` held constant.
pub fn reinforce_actor_loss(
    policy: &GaussianPolicy,
    states: &[f64],
    actions: &[f64],
    deltas: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_len("actions", states.len(), actions.len())?;
    check_len("TD errors", states.len(), deltas.len())?;
    nonempty(states)?;
    check_finite("TD errors", deltas)?;
    let scale = 1.0 / states.len() as f64;
    let mut grad = vec![0.0; policy.param_count()];
    let mut loss = 0.0;
    for ((&x, &a), &d) in states.iter().zip(actions).zip(deltas) {
        let (mean, std) = policy.heads(x)?;
        let u = (a - mean) / std;
        loss -= d * gaussian_logprob(mean, std, a);
        if d != 0.0 {
            policy.backward(x, -d * u / std, -d * (u * u - 1.0) / std, scale, &mut grad)?;
        }
    }
    finite_loss("actor loss", loss * scale, grad)
}

/// Clipped surrogate with entropy bonus, negated for descent.
#[allow(clippy::too_many_arguments)]
pub fn ppo_actor_loss(
    policy: &GaussianPolicy,
    states: &[f64],
    actions: &[f64],
    old_logprobs: &[f64],
    advantages: &[f64],
    eps_clip: f64,
    c_ent: f64,
) -> Result<(f64, Vec<f64>)> {
    check_len("actions", states.len(), actions.len())?;
    check_len("old log-probabilities", states.len(), old_logprobs.len())?;
    check_len("advantages", states.len(), advantages.len())?;
    nonempty(states)?;
    check_finite("advantages", advantages)?;
    let scale = 1.0 / states.len() as f64;
    let mut grad = vec![0.0; policy.param_count()];
    let (mut surrogate, mut entropy) = (0.0, 0.0);
    for i in 0..states.len() {
        let (x, a, adv) = (states[i], actions[i], advantages[i]);
        let (mean, std) = policy.heads(x)?;
        let ratio = (gaussian_logprob(mean, std, a) - old_logprobs[i]).exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite("PPO probability ratio"));
        }
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip) * adv;
        surrogate += unclipped.min(clipped);
        entropy += gaussian_entropy(std);
        let u = (a - mean) / std;
        // The clipped branch is constant in ψ; only the unclipped one carries
        // gradient.
        let w = if unclipped <= clipped { -adv * ratio } else { 0.0 };
        policy.backward(x, w * u / std, w * (u * u - 1.0) / std - c_ent / std, scale, &mut grad)?;
    }
    finite_loss("PPO loss", -(surrogate + c_ent * entropy) * scale, grad)
}

fn nonempty(states: &[f64]) -> Result<()> {
    if states.is_empty() {
        Err(Error::Config("loss needs a non-empty batch".into()))
    } else {
        Ok(())
    }
}

fn finite_loss(what: &'static str, loss: f64, grad: Vec<f64>) -> Result<(f64, Vec<f64>)> {
    if !loss.is_finite() {
        return Err(Error::NonFinite(what));
    }
    check_finite(what, &grad)?;
    Ok((loss, grad))
}

/// One environment step for `B` agents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitionBatch {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub logprobs: Vec<f64>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        check_len("actions", n, self.actions.len())?;
        check_len("rewards", n, self.rewards.len())?;
        check_len("next states", n, self.next_states.len())?;
        check_len("log-probabilities", n, self.logprobs.len())?;
        for (what, v) in [
            ("states", &self.states),
            ("actions", &self.actions),
            ("rewards", &self.rewards),
            ("next states", &self.next_states),
            ("log-probabilities", &self.logprobs),
        ] {
            check_finite(what, v)?;
        }
        Ok(())
    }
}

/// `M` consecutive transition batches.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    capacity: usize,
    batches: Vec<TransitionBatch>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("rollout length must be positive".into()));
        }
        Ok(RolloutBuffer { capacity, batches: Vec::with_capacity(capacity) })
    }

    pub fn push(&mut self, batch: TransitionBatch) -> Result<()> {
        batch.validate()?;
        if self.is_full() {
            return Err(Error::Usage("rollout buffer is full".into()));
        }
        if let Some(first) = self.batches.first() {
            check_len("rollout batch size", first.len(), batch.len())?;
        }
        self.batches.push(batch);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.batches.len() == self.capacity
    }

    pub fn batches(&self) -> &[TransitionBatch] {
        &self.batches
    }

    pub fn clear(&mut self) {
        self.batches.clear();
    }
}

/// Advantages and returns indexed `[m][i]` (rollout step, agent).
#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

/// Generalized advantage estimation over a full rollout, per agent.
pub fn gae(rollout: &RolloutBuffer, critic: &MlpNet, gamma: f64, lambda: f64) -> Result<Advantages> {
    if !rollout.is_full() {
        return Err(Error::Usage(format!(
            "GAE needs a full rollout ({} of {} steps)",
            rollout.len(),
            rollout.capacity()
        )));
    }
    let batches = rollout.batches();
    let (steps, n) = (batches.len(), batches[0].len());
    let mut advantages = vec![vec![0.0; n]; steps];
    let mut returns = vec![vec![0.0; n]; steps];
    for i in 0..n {
        let mut next = 0.0;
        for m in (0..steps).rev() {
            let b = &batches[m];
            let v = critic.eval_scalar(b.states[i]);
            let delta = b.rewards[i] + gamma * critic.eval_scalar(b.next_states[i]) - v;
            next = delta + gamma * lambda * next;
            advantages[m][i] = next;
            returns[m][i] = next + v;
        }
    }
    Ok(Advantages { advantages, returns })
}
