//! Training drivers for the four algorithm variants.
//!
//! All variants share one [`Trainer`]. Each outer step updates the two score
//! networks on the current states, refreshes the particle sets by Langevin
//! sampling, steps every agent once and then updates critic and actor (or, for
//! `drl`, stores the transition until a rollout is full).

mod config;
mod run_dir;

pub use config::{Algorithm, HiddenWidths, LearningRates, TrainConfig};
pub use run_dir::{
    latest_checkpoint, read_metrics_csv, train_to_dir, write_metrics_header, write_metrics_row, Manifest,
    RunDir, METRICS_HEADER,
};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    critic_loss, gae, gaussian_logprob, ppo_actor_loss, reinforce_actor_loss, td_error, td_target, CriticPair,
    GaussianPolicy, RolloutBuffer, TransitionBatch,
};
use crate::error::{Error, Result};
use crate::net::{adam_step, AdamState, Architecture, MlpNet, NetCheckpoint};
use crate::rng::{stream, Purpose, StreamKey};
use crate::score::{langevin_sample, score_loss_exact, score_loss_hutchinson, EmpiricalMeasure};

/// Multiplier applied to every base learning rate: linear warm-up from 1 to
/// 10 over the first tenth of training, then linear decay to 0.25 at `total`.
pub fn lr_multiplier(step: u64, total: u64) -> f64 {
    if total == 0 {
        return 1.0;
    }
    let (s, n) = (step.min(total) as f64, total as f64);
    let warm = 0.1 * n;
    if s <= warm {
        1.0 + 9.0 * s / warm
    } else {
        10.0 - 9.75 * (s - warm) / (n - warm)
    }
}

pub fn lr_schedule(step: u64, total: u64, base: f64) -> f64 {
    base * lr_multiplier(step, total)
}

/// Random permutation of `0..batch` cut into `batch / minibatch` blocks.
pub fn partition_minibatches<R: Rng + ?Sized>(batch: usize, minibatch: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if minibatch == 0 || !batch.is_multiple_of(minibatch) {
        return Err(Error::Config(format!(
            "batch size {batch} is not divisible by minibatch size {minibatch}"
        )));
    }
    let mut idx: Vec<usize> = (0..batch).collect();
    idx.shuffle(rng);
    Ok(idx.chunks(minibatch).map(<[usize]>::to_vec).collect())
}

/// The acting policy: a learned Gaussian network or a fixed affine feedback
/// with constant noise.
#[derive(Clone, Debug, PartialEq)]
pub enum Actor {
    Learned(GaussianPolicy),
    Affine { slope: f64, intercept: f64, std: f64 },
}

impl Actor {
    pub fn heads(&self, x: f64) -> Result<(f64, f64)> {
        match self {
            Actor::Learned(p) => p.heads(x),
            Actor::Affine { slope, intercept, std } => Ok((slope * x + intercept, *std)),
        }
    }

    pub fn policy(&self) -> Option<&GaussianPolicy> {
        match self {
            Actor::Learned(p) => Some(p),
            Actor::Affine { .. } => None,
        }
    }
}

/// Networks of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub actor: Actor,
    pub critic: MlpNet,
    pub score_global: MlpNet,
    pub score_local: MlpNet,
}

impl Networks {
    /// Glorot-initialized networks with the configured widths.
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        let h = cfg.hidden;
        let rng = |i| stream(cfg.seed, Purpose::NetInit(i), 0, 0);
        Ok(Networks {
            actor: Actor::Learned(GaussianPolicy::init(h.actor, &mut rng(0))?),
            critic: MlpNet::init(Architecture::mlp(1, &[h.critic], 1), &mut rng(1))?,
            score_global: MlpNet::init(Architecture::mlp(1, &[h.score], 1), &mut rng(2))?,
            score_local: MlpNet::init(Architecture::mlp(1, &[h.score], 1), &mut rng(3))?,
        })
    }
}

/// One row of the metrics history. Losses are the pre-update values of the
/// step; for `drl` the actor and critic losses carry forward between rollout
/// updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub lr_multiplier: f64,
    pub score_loss_global: f64,
    pub score_loss_local: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_global: f64,
    pub mean_local: f64,
    pub var_global: f64,
    pub var_local: f64,
}

impl StepMetrics {
    pub fn values(&self) -> [f64; 9] {
        [
            self.lr_multiplier,
            self.score_loss_global,
            self.score_loss_local,
            self.critic_loss,
            self.actor_loss,
            self.mean_global,
            self.mean_local,
            self.var_global,
            self.var_local,
        ]
    }
}

/// How often each kind of update happened.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub steps: u64,
    pub env_steps: u64,
    pub score_updates: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub langevin_refreshes: u64,
    pub target_syncs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActorCheckpoint {
    Learned {
        trunk: NetCheckpoint,
        mean_head: NetCheckpoint,
        std_head: NetCheckpoint,
        optimizer: AdamState,
    },
    Affine { slope: f64, intercept: f64, std: f64 },
}

/// Everything needed to evaluate or inspect a run at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub step: u64,
    pub actor: ActorCheckpoint,
    pub critic: NetCheckpoint,
    pub target: NetCheckpoint,
    pub score_global: NetCheckpoint,
    pub score_local: NetCheckpoint,
    pub mean_global: f64,
    pub mean_local: f64,
    pub counters: Counters,
}

impl TrainCheckpoint {
    pub fn actor(&self) -> Result<Actor> {
        Ok(match &self.actor {
            ActorCheckpoint::Learned { trunk, mean_head, std_head, .. } => Actor::Learned(GaussianPolicy::from_nets(
                trunk.clone().into_net()?.0,
                mean_head.clone().into_net()?.0,
                std_head.clone().into_net()?.0,
            )?),
            ActorCheckpoint::Affine { slope, intercept, std } => Actor::Affine {
                slope: *slope,
                intercept: *intercept,
                std: *std,
            },
        })
    }

    pub fn critic(&self) -> Result<MlpNet> {
        Ok(self.critic.clone().into_net()?.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Final state of a finished run.
#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub networks: Networks,
    pub metrics: Vec<StepMetrics>,
    pub particles_global: EmpiricalMeasure,
    pub particles_local: EmpiricalMeasure,
    pub states: Vec<f64>,
    pub counters: Counters,
}

#[derive(Clone, Copy, Debug, Default)]
struct Losses {
    score_global: f64,
    score_local: f64,
    critic: f64,
    actor: f64,
}

/// Mutable state of a training run; advance it with [`Trainer::step`].
#[derive(Clone, Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    actor: Actor,
    actor_opt: AdamState,
    critics: CriticPair,
    critic_opt: AdamState,
    score_global: MlpNet,
    score_global_opt: AdamState,
    score_local: MlpNet,
    score_local_opt: AdamState,
    particles_global: EmpiricalMeasure,
    particles_local: EmpiricalMeasure,
    means: (f64, f64),
    /// Means held fixed instead of learned; disables score updates and Langevin.
    frozen_means: Option<(f64, f64)>,
    states: Vec<f64>,
    rollout: RolloutBuffer,
    last_losses: Losses,
    last_transition: Option<TransitionBatch>,
    counters: Counters,
    step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        let nets = Networks::init(&cfg)?;
        Self::with_networks(cfg, nets)
    }

    /// Starts from the given networks instead of a fresh initialization.
    pub fn with_networks(cfg: TrainConfig, nets: Networks) -> Result<Self> {
        cfg.validate()?;
        for (what, net) in [("critic", &nets.critic), ("global score", &nets.score_global), ("local score", &nets.score_local)] {
            if net.input_dim() != 1 || net.output_dim() != 1 {
                return Err(Error::Config(format!("{what} network must map R to R")));
            }
        }
        let b = cfg.effective_batch_size();
        let states = (0..b as u64)
            .map(|i| cfg.init_mean + cfg.init_std * crate::rng::normal(cfg.seed, Purpose::InitialState, 0, i))
            .collect();
        let k = cfg.langevin.particles;
        let particles = |i| EmpiricalMeasure::gaussian(k, cfg.init_mean, cfg.init_std, StreamKey::new(cfg.seed, Purpose::ParticleInit(i), 0));
        let particles_global = particles(0)?;
        let particles_local = particles(1)?;
        let means = (particles_global.mean(), particles_local.mean());
        let actor_len = nets.actor.policy().map_or(0, GaussianPolicy::param_count);
        Ok(Trainer {
            actor_opt: AdamState::new(actor_len),
            critic_opt: AdamState::new(nets.critic.param_count()),
            score_global_opt: AdamState::new(nets.score_global.param_count()),
            score_local_opt: AdamState::new(nets.score_local.param_count()),
            critics: CriticPair::new(nets.critic, cfg.effective_target_period())?,
            actor: nets.actor,
            score_global: nets.score_global,
            score_local: nets.score_local,
            particles_global,
            particles_local,
            means,
            frozen_means: None,
            states,
            rollout: RolloutBuffer::new(cfg.rollout_len)?,
            last_losses: Losses::default(),
            last_transition: None,
            counters: Counters::default(),
            step: 0,
            cfg,
        })
    }

    /// Critic-only training of a fixed affine policy `a = slope·x + intercept`
    /// (plus `N(0, action_std²)` noise) against frozen measure means.
    pub fn policy_evaluation(
        cfg: TrainConfig,
        slope: f64,
        intercept: f64,
        action_std: f64,
        means: (f64, f64),
    ) -> Result<Self> {
        let mut nets = Networks::init(&cfg)?;
        nets.actor = Actor::Affine { slope, intercept, std: action_std };
        let mut t = Self::with_networks(cfg, nets)?;
        t.freeze_means(means);
        Ok(t)
    }

    pub fn freeze_means(&mut self, means: (f64, f64)) {
        self.frozen_means = Some(means);
        self.means = means;
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.steps
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn critics(&self) -> &CriticPair {
        &self.critics
    }

    pub fn score_nets(&self) -> (&MlpNet, &MlpNet) {
        (&self.score_global, &self.score_local)
    }

    pub fn particles(&self) -> (&EmpiricalMeasure, &EmpiricalMeasure) {
        (&self.particles_global, &self.particles_local)
    }

    /// Means of the global and local particle sets fed to the running cost.
    pub fn means(&self) -> (f64, f64) {
        self.means
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn rollout(&self) -> &RolloutBuffer {
        &self.rollout
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Transitions of the most recent step, in agent index order.
    pub fn last_transition(&self) -> Option<&TransitionBatch> {
        self.last_transition.as_ref()
    }

    pub fn networks(&self) -> Networks {
        Networks {
            actor: self.actor.clone(),
            critic: self.critics.critic.clone(),
            score_global: self.score_global.clone(),
            score_local: self.score_local.clone(),
        }
    }

    pub fn checkpoint(&self) -> TrainCheckpoint {
        let actor = match &self.actor {
            Actor::Learned(p) => {
                let [t, m, s] = p.nets();
                ActorCheckpoint::Learned {
                    trunk: t.checkpoint(None),
                    mean_head: m.checkpoint(None),
                    std_head: s.checkpoint(None),
                    optimizer: self.actor_opt.clone(),
                }
            }
            Actor::Affine { slope, intercept, std } => ActorCheckpoint::Affine {
                slope: *slope,
                intercept: *intercept,
                std: *std,
            },
        };
        TrainCheckpoint {
            step: self.step,
            actor,
            critic: self.critics.critic.checkpoint(Some(&self.critic_opt)),
            target: self.critics.target.checkpoint(None),
            score_global: self.score_global.checkpoint(Some(&self.score_global_opt)),
            score_local: self.score_local.checkpoint(Some(&self.score_local_opt)),
            mean_global: self.means.0,
            mean_local: self.means.1,
            counters: self.counters,
        }
    }

    /// Runs one outer step and returns its metrics. Numerical failures are
    /// reported as [`Error::Diverged`] at this step; the trainer state is
    /// then partially updated and should only be checkpointed for inspection.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let n = self.step;
        let result = match self.cfg.algorithm {
            Algorithm::Baseline | Algorithm::Batch => self.step_batch(n),
            Algorithm::Minibatch => self.step_minibatch(n),
            Algorithm::Drl => self.step_drl(n),
        };
        let losses = result.map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged { step: n, reason: format!("non-finite {what}") },
            Error::Diverged { reason, .. } => Error::Diverged { step: n, reason },
            other => other,
        })?;
        if self.critics.target_sync(n) {
            self.counters.target_syncs += 1;
        }
        self.step += 1;
        self.counters.steps += 1;
        let metrics = StepMetrics {
            step: n,
            lr_multiplier: lr_multiplier(n, self.cfg.steps),
            score_loss_global: losses.score_global,
            score_loss_local: losses.score_local,
            critic_loss: losses.critic,
            actor_loss: losses.actor,
            mean_global: self.means.0,
            mean_local: self.means.1,
            var_global: self.particles_global.variance(),
            var_local: self.particles_local.variance(),
        };
        if !metrics.values().iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: n, reason: "non-finite metrics".into() });
        }
        Ok(metrics)
    }

    /// Runs the remaining steps, calling `observe` after each one.
    pub fn run<F>(&mut self, mut observe: F) -> Result<()>
    where
        F: FnMut(&Trainer, &StepMetrics) -> Result<()>,
    {
        while !self.is_done() {
            let m = self.step()?;
            observe(self, &m)?;
        }
        Ok(())
    }

    pub fn into_artifacts(self, metrics: Vec<StepMetrics>) -> TrainArtifacts {
        TrainArtifacts {
            networks: self.networks(),
            metrics,
            particles_global: self.particles_global,
            particles_local: self.particles_local,
            states: self.states,
            counters: self.counters,
        }
    }

    fn rates(&self, n: u64) -> LearningRates {
        self.cfg.lr.scaled(lr_multiplier(n, self.cfg.steps))
    }

    /// Score updates on the given states, then an optional Langevin refresh.
    fn update_measures(&mut self, n: u64, indices: &[usize], xs: &[f64], hutchinson: bool, refresh: bool) -> Result<(f64, f64)> {
        if self.frozen_means.is_some() {
            return Ok((0.0, 0.0));
        }
        let rates = self.rates(n);
        let seed = self.cfg.seed;
        let mut losses = [0.0; 2];
        let slots = [
            (&mut self.score_global, &mut self.score_global_opt, rates.score_global),
            (&mut self.score_local, &mut self.score_local_opt, rates.score_local),
        ];
        for (g, (net, opt, lr)) in slots.into_iter().enumerate() {
            let (loss, grad) = if hutchinson {
                let key = StreamKey::new(seed, Purpose::Probe(g as u8), n);
                let probes: Vec<f64> = indices.iter().map(|&i| key.normal(i as u64)).collect();
                score_loss_hutchinson(net, xs, &probes)?
            } else {
                score_loss_exact(net, xs)?
            };
            adam_step(net.params_mut(), &grad, opt, lr)?;
            losses[g] = loss;
        }
        self.counters.score_updates += 1;
        if refresh {
            let cfg = self.cfg.langevin;
            let fresh = |g| EmpiricalMeasure::gaussian(cfg.particles, self.cfg.init_mean, self.cfg.init_std, StreamKey::new(seed, Purpose::ParticleInit(g), n));
            let init_g = if cfg.warm_start { self.particles_global.clone() } else { fresh(0)? };
            let init_l = if cfg.warm_start { self.particles_local.clone() } else { fresh(1)? };
            self.particles_global = langevin_sample(&self.score_global, &cfg, &init_g, StreamKey::new(seed, Purpose::Langevin(0), n))?;
            self.particles_local = langevin_sample(&self.score_local, &cfg, &init_l, StreamKey::new(seed, Purpose::Langevin(1), n))?;
            self.means = (self.particles_global.mean(), self.particles_local.mean());
            self.counters.langevin_refreshes += 1;
        }
        Ok((losses[0], losses[1]))
    }

    /// Samples actions, rewards and next states for the given agents.
    fn interact(&mut self, n: u64, indices: &[usize]) -> Result<TransitionBatch> {
        let p = self.cfg.lq;
        let (mg, ml) = self.means;
        let seed = self.cfg.seed;
        let mut batch = TransitionBatch::default();
        for &i in indices {
            let x = self.states[i];
            let (mean, std) = self.actor.heads(x)?;
            let a = mean + std * crate::rng::normal(seed, Purpose::Action, n, i as u64);
            let next = p.env_step(x, a, crate::rng::normal(seed, Purpose::Environment, n, i as u64));
            batch.states.push(x);
            batch.actions.push(a);
            batch.rewards.push(p.reward(x, mg, ml, a));
            batch.next_states.push(next);
            batch.logprobs.push(gaussian_logprob(mean, std, a));
        }
        batch.validate()?;
        self.counters.env_steps += indices.len() as u64;
        Ok(batch)
    }

    /// TD target through the target network, critic step, then actor step
    /// with the TD errors of the pre-update critic.
    fn td_update(&mut self, n: u64, batch: &TransitionBatch) -> Result<(f64, f64)> {
        let rates = self.rates(n);
        let gamma = self.cfg.lq.discount_factor();
        let targets: Vec<f64> = batch
            .rewards
            .iter()
            .zip(&batch.next_states)
            .map(|(&r, &x1)| td_target(r, x1, &self.critics.target, gamma))
            .collect();
        let deltas: Vec<f64> = batch
            .states
            .iter()
            .zip(&targets)
            .map(|(&x, &y)| td_error(y, self.critics.critic.eval_scalar(x)))
            .collect();
        let (c_loss, c_grad) = critic_loss(&self.critics.critic, &batch.states, &targets)?;
        adam_step(self.critics.critic.params_mut(), &c_grad, &mut self.critic_opt, rates.critic)?;
        self.counters.critic_updates += 1;
        let a_loss = match &mut self.actor {
            Actor::Learned(policy) => {
                let (loss, grad) = reinforce_actor_loss(policy, &batch.states, &batch.actions, &deltas)?;
                let mut params = policy.params();
                adam_step(&mut params, &grad, &mut self.actor_opt, rates.actor)?;
                policy.set_params(&params)?;
                self.counters.actor_updates += 1;
                loss
            }
            Actor::Affine { .. } => 0.0,
        };
        Ok((c_loss, a_loss))
    }

    fn store(&mut self, indices: &[usize], batch: &TransitionBatch) {
        for (k, &i) in indices.iter().enumerate() {
            self.states[i] = batch.next_states[k];
        }
    }

    fn refresh_due(&self, n: u64) -> bool {
        n.is_multiple_of(self.cfg.effective_langevin_period())
    }

    fn step_batch(&mut self, n: u64) -> Result<Losses> {
        let indices: Vec<usize> = (0..self.states.len()).collect();
        let xs = self.states.clone();
        let refresh = self.refresh_due(n);
        let (sg, sl) = self.update_measures(n, &indices, &xs, false, refresh)?;
        let batch = self.interact(n, &indices)?;
        let (critic, actor) = self.td_update(n, &batch)?;
        self.store(&indices, &batch);
        self.last_transition = Some(batch);
        Ok(Losses { score_global: sg, score_local: sl, critic, actor })
    }

    fn step_minibatch(&mut self, n: u64) -> Result<Losses> {
        let mut rng = stream(self.cfg.seed, Purpose::Permutation, n, 0);
        let blocks = partition_minibatches(self.states.len(), self.cfg.minibatch_size, &mut rng)?;
        let refresh = self.refresh_due(n);
        let mut total = Losses::default();
        let mut full = TransitionBatch::default();
        let mut order = Vec::with_capacity(self.states.len());
        for (m, block) in blocks.iter().enumerate() {
            let xs: Vec<f64> = block.iter().map(|&i| self.states[i]).collect();
            let (sg, sl) = self.update_measures(n, block, &xs, true, refresh && m == 0)?;
            let batch = self.interact(n, block)?;
            let (critic, actor) = self.td_update(n, &batch)?;
            self.store(block, &batch);
            total.score_global += sg;
            total.score_local += sl;
            total.critic += critic;
            total.actor += actor;
            order.extend_from_slice(block);
            full.states.extend(batch.states);
            full.actions.extend(batch.actions);
            full.rewards.extend(batch.rewards);
            full.next_states.extend(batch.next_states);
            full.logprobs.extend(batch.logprobs);
        }
        self.last_transition = Some(reorder(&full, &order));
        let c = blocks.len() as f64;
        Ok(Losses {
            score_global: total.score_global / c,
            score_local: total.score_local / c,
            critic: total.critic / c,
            actor: total.actor / c,
        })
    }

    fn step_drl(&mut self, n: u64) -> Result<Losses> {
        let indices: Vec<usize> = (0..self.states.len()).collect();
        let xs = self.states.clone();
        let refresh = self.refresh_due(n);
        let (sg, sl) = self.update_measures(n, &indices, &xs, false, refresh)?;
        let batch = self.interact(n, &indices)?;
        self.store(&indices, &batch);
        self.rollout.push(batch.clone())?;
        self.last_transition = Some(batch);
        let mut losses = Losses { score_global: sg, score_local: sl, ..self.last_losses };
        if (n + 1).is_multiple_of(self.cfg.rollout_len as u64) {
            let (critic, actor) = self.rollout_update(n)?;
            losses.critic = critic;
            losses.actor = actor;
        }
        self.last_losses = losses;
        Ok(losses)
    }

    /// GAE on the full rollout, critic regression on the returns, PPO actor
    /// step(s), then clears the buffer.
    fn rollout_update(&mut self, n: u64) -> Result<(f64, f64)> {
        let rates = self.rates(n);
        let gamma = self.cfg.lq.discount_factor();
        let adv = gae(&self.rollout, &self.critics.critic, gamma, self.cfg.gae_lambda)?;
        let flat = |f: fn(&TransitionBatch) -> &Vec<f64>| -> Vec<f64> {
            self.rollout.batches().iter().flat_map(|b| f(b).iter().copied()).collect()
        };
        let states = flat(|b| &b.states);
        let actions = flat(|b| &b.actions);
        let old = flat(|b| &b.logprobs);
        let advantages = adv.advantages.concat();
        let returns = adv.returns.concat();
        let (c_loss, c_grad) = critic_loss(&self.critics.critic, &states, &returns)?;
        adam_step(self.critics.critic.params_mut(), &c_grad, &mut self.critic_opt, rates.critic)?;
        self.counters.critic_updates += 1;
        let mut a_loss = 0.0;
        if let Actor::Learned(policy) = &mut self.actor {
            for epoch in 0..self.cfg.ppo_epochs.max(1) {
                let (loss, grad) =
                    ppo_actor_loss(policy, &states, &actions, &old, &advantages, self.cfg.eps_clip, self.cfg.c_ent)?;
                if epoch == 0 {
                    a_loss = loss;
                }
                let mut params = policy.params();
                adam_step(&mut params, &grad, &mut self.actor_opt, rates.actor)?;
                policy.set_params(&params)?;
            }
            self.counters.actor_updates += 1;
        }
        self.rollout.clear();
        Ok((c_loss, a_loss))
    }
}

/// Transitions sorted back into agent index order.
fn reorder(batch: &TransitionBatch, order: &[usize]) -> TransitionBatch {
    let mut pos: Vec<usize> = (0..order.len()).collect();
    pos.sort_by_key(|&k| order[k]);
    let pick = |v: &Vec<f64>| pos.iter().map(|&k| v[k]).collect();
    TransitionBatch {
        states: pick(&batch.states),
        actions: pick(&batch.actions),
        rewards: pick(&batch.rewards),
        next_states: pick(&batch.next_states),
        logprobs: pick(&batch.logprobs),
    }
}

/// Runs a full training job in memory.
pub fn train(cfg: TrainConfig) -> Result<TrainArtifacts> {
    let mut t = Trainer::new(cfg)?;
    let mut metrics = Vec::with_capacity(t.config().steps as usize);
    t.run(|_, m| {
        metrics.push(*m);
        Ok(())
    })?;
    Ok(t.into_artifacts(metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algorithm: Algorithm) -> TrainConfig {
        let mut cfg = TrainConfig::new(algorithm);
        cfg.steps = 6;
        cfg.batch_size = 8;
        cfg.minibatch_size = 4;
        cfg.rollout_len = 3;
        cfg.hidden = HiddenWidths { actor: 4, critic: 6, score: 6 };
        cfg.langevin.particles = 20;
        cfg.langevin.iterations = 5;
        cfg.seed = 3;
        cfg
    }

    #[test]
    fn schedule_endpoints_and_continuity() {
        let n = 1000;
        assert_eq!(lr_schedule(0, n, 2e-5), 2e-5);
        assert_eq!(lr_schedule(100, n, 1.0), 10.0);
        assert_eq!(lr_schedule(n, n, 1.0), 0.25);
        assert!((lr_multiplier(50, n) - 5.5).abs() < 1e-12);
        for s in 0..n {
            let (a, b) = (lr_multiplier(s, n), lr_multiplier(s + 1, n));
            if s < 100 {
                assert!(b > a);
            } else {
                assert!(b < a);
            }
            assert!((b - a).abs() < 0.1);
        }
    }

    #[test]
    fn partition_blocks() {
        let mut rng = stream(1, Purpose::Custom(0), 0, 0);
        let blocks = partition_minibatches(4, 2, &mut rng).unwrap();
        assert_eq!(blocks.len(), 2);
        let mut all: Vec<usize> = blocks.concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(partition_minibatches(5, 5, &mut rng).unwrap().len(), 1);
        assert!(partition_minibatches(5, 2, &mut rng).is_err());
        let trials = 10_000;
        let mut hits = [0usize; 4];
        for _ in 0..trials {
            for &i in &partition_minibatches(4, 2, &mut rng).unwrap()[0] {
                hits[i] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / trials as f64 - 0.5).abs() <= 0.02);
        }
    }

    #[test]
    fn zero_steps_and_zero_rates_keep_networks() {
        let mut cfg = small(Algorithm::Batch);
        cfg.steps = 0;
        let init = Networks::init(&cfg).unwrap();
        let out = train(cfg.clone()).unwrap();
        assert_eq!(out.networks, init);
        assert!(out.metrics.is_empty());

        for algo in Algorithm::ALL {
            let mut cfg = small(algo);
            cfg.lr = LearningRates::zero();
            let init = Networks::init(&cfg).unwrap();
            let out = train(cfg).unwrap();
            assert_eq!(out.networks, init, "{algo}");
            assert_eq!(out.metrics.len(), 6);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        for algo in Algorithm::ALL {
            let a = train(small(algo)).unwrap();
            let b = train(small(algo)).unwrap();
            assert_eq!(a.metrics, b.metrics, "{algo}");
            assert_eq!(a.networks, b.networks);
        }
    }

    #[test]
    fn update_cadences() {
        let out = train(small(Algorithm::Batch)).unwrap();
        let c = out.counters;
        assert_eq!((c.env_steps, c.critic_updates, c.langevin_refreshes, c.target_syncs), (48, 6, 6, 1));

        let out = train(small(Algorithm::Minibatch)).unwrap();
        let c = out.counters;
        // Two minibatches per outer step; each agent moves once per step.
        assert_eq!((c.env_steps, c.critic_updates, c.actor_updates, c.score_updates), (48, 12, 12, 12));
        assert_eq!(c.langevin_refreshes, 1);

        let mut cfg = small(Algorithm::Drl);
        cfg.steps = 7;
        let mut t = Trainer::new(cfg).unwrap();
        t.run(|t, m| {
            if (m.step + 1) % 3 == 0 {
                assert!(t.rollout().is_empty());
            }
            Ok(())
        })
        .unwrap();
        let c = t.counters();
        assert_eq!((c.actor_updates, c.critic_updates, c.score_updates), (2, 2, 7));
        assert_eq!(t.rollout().len(), 1);

        let mut cfg = small(Algorithm::Drl);
        cfg.rollout_len = 10;
        let c = train(cfg).unwrap().counters;
        assert_eq!((c.actor_updates, c.score_updates), (0, 6));

        let c = train(small(Algorithm::Baseline)).unwrap().counters;
        assert_eq!((c.env_steps, c.target_syncs), (6, 6));
    }

    #[test]
    fn batch_of_one_matches_baseline() {
        let base = small(Algorithm::Baseline);
        let mut batch = small(Algorithm::Batch);
        batch.batch_size = 1;
        batch.target_period = 1;
        let a = train(base).unwrap();
        let b = train(batch).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.networks, b.networks);
    }

    #[test]
    fn single_minibatch_collapses_to_batch() {
        // Frozen score networks remove the only algorithmic difference (the
        // trace estimator); what remains is summation order within the
        // permuted block.
        let mut mb = small(Algorithm::Minibatch);
        mb.minibatch_size = mb.batch_size;
        mb.langevin_period = Some(1);
        mb.lr.score_global = 0.0;
        mb.lr.score_local = 0.0;
        let mut batch = small(Algorithm::Batch);
        batch.lr = mb.lr;
        let a = train(mb).unwrap();
        let b = train(batch).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1.0);
        for (x, y) in a.metrics.iter().zip(&b.metrics) {
            assert!(close(x.critic_loss, y.critic_loss), "{} vs {}", x.critic_loss, y.critic_loss);
            assert!(close(x.actor_loss, y.actor_loss));
            assert_eq!((x.mean_global, x.mean_local), (y.mean_global, y.mean_local));
        }
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(close(*x, *y));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut t = Trainer::new(small(Algorithm::Drl)).unwrap();
        t.step().unwrap();
        let ck = t.checkpoint();
        let back = TrainCheckpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.actor().unwrap(), *t.actor());
        assert_eq!(back.critic().unwrap(), t.critics().critic);
    }

    #[test]
    fn frozen_policy_evaluation_touches_only_critic() {
        let cfg = small(Algorithm::Batch);
        let mut t = Trainer::policy_evaluation(cfg, -1.0, 0.2, 0.05, (0.24, 0.24)).unwrap();
        let (g0, l0) = (t.score_nets().0.clone(), t.score_nets().1.clone());
        let c0 = t.critics().critic.clone();
        for _ in 0..3 {
            let m = t.step().unwrap();
            assert_eq!((m.mean_global, m.mean_local), (0.24, 0.24));
        }
        assert_eq!((t.score_nets().0, t.score_nets().1), (&g0, &l0));
        assert_ne!(t.critics().critic, c0);
        assert_eq!(t.counters().langevin_refreshes, 0);
    }
}
