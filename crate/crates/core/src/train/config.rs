use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lq::LqParams;
use crate::score::LangevinConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Single trajectory, live critic in the TD target.
    Baseline,
    /// `B` parallel agents with a target network.
    Batch,
    /// Batch split into shuffled minibatches, Hutchinson score losses,
    /// periodic Langevin refresh.
    Minibatch,
    /// Rollouts of length `M`, GAE advantages and a clipped PPO actor.
    Drl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Baseline,
        Algorithm::Batch,
        Algorithm::Minibatch,
        Algorithm::Drl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::Batch => "batch",
            Algorithm::Minibatch => "minibatch",
            Algorithm::Drl => "drl",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown algorithm '{s}' (baseline|batch|minibatch|drl)")))
    }
}

/// Base learning rates, scaled each step by [`super::lr_multiplier`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub actor: f64,
    pub critic: f64,
    pub score_global: f64,
    pub score_local: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            actor: 5e-6,
            critic: 1e-5,
            score_global: 1e-6,
            score_local: 5e-4,
        }
    }
}

impl LearningRates {
    pub fn zero() -> Self {
        LearningRates { actor: 0.0, critic: 0.0, score_global: 0.0, score_local: 0.0 }
    }

    pub fn scaled(&self, k: f64) -> Self {
        LearningRates {
            actor: self.actor * k,
            critic: self.critic * k,
            score_global: self.score_global * k,
            score_local: self.score_local * k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HiddenWidths {
    pub actor: usize,
    pub critic: usize,
    pub score: usize,
}

impl Default for HiddenWidths {
    fn default() -> Self {
        HiddenWidths { actor: 64, critic: 128, score: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub steps: u64,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub rollout_len: usize,
    pub eps_clip: f64,
    pub c_ent: f64,
    pub gae_lambda: f64,
    pub ppo_epochs: usize,
    pub langevin: LangevinConfig,
    pub target_period: u64,
    /// Steps between Langevin refreshes; `None` picks 50 for minibatch and 1
    /// otherwise.
    pub langevin_period: Option<u64>,
    pub lr: LearningRates,
    pub lq: LqParams,
    pub seed: u64,
    /// Mean and standard deviation of the Gaussian initial law.
    pub init_mean: f64,
    pub init_std: f64,
    pub hidden: HiddenWidths,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Batch,
            steps: 100_000,
            batch_size: 8192,
            minibatch_size: 1024,
            rollout_len: 256,
            eps_clip: 0.2,
            c_ent: 0.01,
            gae_lambda: 0.95,
            ppo_epochs: 1,
            langevin: LangevinConfig::default(),
            target_period: 200,
            langevin_period: None,
            lr: LearningRates::default(),
            lq: LqParams::default(),
            seed: 0,
            init_mean: 0.0,
            init_std: 1.0,
            hidden: HiddenWidths::default(),
            checkpoint_every: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainConfig { algorithm, ..Default::default() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Batch size actually used: 1 for the single-trajectory baseline.
    pub fn effective_batch_size(&self) -> usize {
        match self.algorithm {
            Algorithm::Baseline => 1,
            _ => self.batch_size,
        }
    }

    /// Target sync period actually used: 1 (target ≡ critic) for the baseline.
    pub fn effective_target_period(&self) -> u64 {
        match self.algorithm {
            Algorithm::Baseline => 1,
            _ => self.target_period,
        }
    }

    pub fn effective_langevin_period(&self) -> u64 {
        self.langevin_period.unwrap_or(match self.algorithm {
            Algorithm::Minibatch => 50,
            _ => 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.lq.validate()?;
        self.langevin.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.effective_batch_size() == 0 {
            return bad("batch size must be positive".into());
        }
        if self.algorithm == Algorithm::Minibatch
            && (self.minibatch_size == 0 || !self.batch_size.is_multiple_of(self.minibatch_size)) {
                return bad(format!(
                    "batch size {} is not divisible by minibatch size {}",
                    self.batch_size, self.minibatch_size
                ));
            }
        if self.rollout_len == 0 {
            return bad("rollout length must be positive".into());
        }
        if self.target_period == 0 || self.effective_langevin_period() == 0 {
            return bad("sync and refresh periods must be positive".into());
        }
        let rates = [self.lr.actor, self.lr.critic, self.lr.score_global, self.lr.score_local];
        if !rates.iter().all(|r| r.is_finite() && *r >= 0.0) {
            return bad(format!("learning rates must be finite and >= 0, got {:?}", self.lr));
        }
        if !(self.eps_clip >= 0.0) || !self.c_ent.is_finite() {
            return bad("eps_clip must be >= 0 and c_ent finite".into());
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("GAE lambda {} outside [0, 1]", self.gae_lambda));
        }
        if !(self.init_std >= 0.0) || !self.init_mean.is_finite() {
            return bad("initial law needs finite mean and std >= 0".into());
        }
        let h = self.hidden;
        if h.actor == 0 || h.critic == 0 || h.score == 0 {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = TrainConfig::default();
        assert_eq!(TrainConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
        let partial = TrainConfig::from_json(r#"{"algorithm":"drl","steps":5}"#).unwrap();
        assert_eq!((partial.algorithm, partial.steps, partial.batch_size), (Algorithm::Drl, 5, 8192));
        assert!(TrainConfig::from_json(r#"{"stepz":5}"#).is_err());
    }

    #[test]
    fn effective_values() {
        let base = TrainConfig::new(Algorithm::Baseline);
        assert_eq!((base.effective_batch_size(), base.effective_target_period()), (1, 1));
        assert_eq!(TrainConfig::new(Algorithm::Minibatch).effective_langevin_period(), 50);
        assert_eq!(TrainConfig::new(Algorithm::Drl).effective_langevin_period(), 1);
    }

    #[test]
    fn validation() {
        let mut cfg = TrainConfig::new(Algorithm::Minibatch);
        cfg.batch_size = 1000;
        cfg.minibatch_size = 128;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.minibatch_size = 125;
        cfg.validate().unwrap();
        cfg.lr.actor = -1.0;
        assert!(cfg.validate().is_err());
        cfg.lr = LearningRates::zero();
        cfg.validate().unwrap();
        assert!("ppo".parse::<Algorithm>().is_err());
        assert_eq!("minibatch".parse::<Algorithm>().unwrap(), Algorithm::Minibatch);
    }
}
