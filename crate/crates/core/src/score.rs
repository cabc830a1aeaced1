//! Score matching objectives and Langevin sampling of mean-field distributions.
//!
//! A score network approximates `∇ log p` of a distribution from samples by
//! minimizing `E[tr ∇ₓΣ(X) + ½‖Σ(X)‖²]`. Sampling from the learned score uses
//! the unadjusted Langevin update `x ← x + (ε/2)Σ(x) + √ε z`.

use std::io::{BufRead, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::net::MlpNet;
use crate::rng::StreamKey;

/// Particles beyond this magnitude abort sampling.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// `k` particle locations of a one-dimensional distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    particles: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(particles: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Config("empirical measure needs at least one particle".into()));
        }
        check_finite("particles", &particles)?;
        Ok(EmpiricalMeasure { particles })
    }

    /// `k` independent draws from `N(mean, std²)`, one stream per particle.
    pub fn gaussian(k: usize, mean: f64, std: f64, key: StreamKey) -> Result<Self> {
        Self::new((0..k as u64).map(|i| mean + std * key.normal(i)).collect())
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.particles.iter().sum::<f64>() / self.particles.len() as f64
    }

    /// Unbiased sample variance; zero for a single particle.
    pub fn variance(&self) -> f64 {
        let k = self.particles.len();
        if k < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.particles.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Single-column CSV with header `x`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x")?;
        for x in &self.particles {
            writeln!(out, "{x:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut particles = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            particles.push(line.parse::<f64>().map_err(|e| Error::Parse {
                path: "particles csv".into(),
                reason: format!("line {}: {e}", i + 1),
            })?);
        }
        Self::new(particles)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LangevinConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub particles: usize,
    /// Start each call from the previous call's particles instead of fresh draws.
    pub warm_start: bool,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        LangevinConfig {
            step_size: 0.05,
            iterations: 200,
            particles: 1000,
            warm_start: true,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("Langevin step size {} must be >= 0", self.step_size)));
        }
        if self.particles == 0 {
            return Err(Error::Config("Langevin needs at least one particle".into()));
        }
        Ok(())
    }
}

fn check_scalar_net(net: &MlpNet) -> Result<()> {
    check_len("score network input", 1, net.input_dim())?;
    check_len("score network output", 1, net.output_dim())
}

/// Batch-mean of `tr ∇ₓΣ(x) + ½‖Σ(x)‖²` and its parameter gradient.
pub fn score_loss_exact(net: &MlpNet, states: &[f64]) -> Result<(f64, Vec<f64>)> {
    score_loss(net, states, None)
}

/// As [`score_loss_exact`] with the trace replaced by `z ∇ₓΣ(x) z`, one
/// probe per state.
pub fn score_loss_hutchinson(net: &MlpNet, states: &[f64], probes: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("Hutchinson probes", states.len(), probes.len())?;
    score_loss(net, states, Some(probes))
}

fn score_loss(net: &MlpNet, states: &[f64], probes: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    check_scalar_net(net)?;
    if states.is_empty() {
        return Err(Error::Config("score loss needs a non-empty batch".into()));
    }
    let scale = 1.0 / states.len() as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut loss = 0.0;
    for (i, &x) in states.iter().enumerate() {
        let z = probes.map_or(1.0, |p| p[i]);
        let eval = net.second_order_with(&[x], &[z], &[z], |y| y.to_vec(), scale, &mut grad)?;
        let y = eval.output[0];
        loss += eval.contraction + 0.5 * y * y;
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("score loss"));
    }
    Ok((loss, grad))
}

/// Runs `cfg.iterations` Langevin updates on every particle of `init`.
///
/// Particle `i` draws its noise from `key.rng(i)`, so results do not depend on
/// evaluation order.
pub fn langevin_sample(
    net: &MlpNet,
    cfg: &LangevinConfig,
    init: &EmpiricalMeasure,
    key: StreamKey,
) -> Result<EmpiricalMeasure> {
    check_scalar_net(net)?;
    cfg.validate()?;
    let eps = cfg.step_size;
    if eps == 0.0 || cfg.iterations == 0 {
        return Ok(init.clone());
    }
    let half = 0.5 * eps;
    let noise = eps.sqrt();
    let mut out = Vec::with_capacity(init.len());
    for (i, &x0) in init.particles().iter().enumerate() {
        let mut rng = key.rng(i as u64);
        let mut x = x0;
        for _ in 0..cfg.iterations {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += half * net.eval_scalar(x) + noise * z;
            if !(x.abs() <= DIVERGENCE_BOUND) {
                return Err(Error::Diverged {
                    step: key.step,
                    reason: format!("Langevin particle {i} reached {x}"),
                });
            }
        }
        out.push(x);
    }
    EmpiricalMeasure::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{adam_step, AdamState, Architecture};
    use crate::rng::Purpose;

    /// Linear score `x ↦ −(x − m)/s²` of `N(m, s²)`.
    fn gaussian_score(m: f64, s2: f64) -> MlpNet {
        MlpNet::from_params(Architecture::linear(1, 1), vec![-1.0 / s2, m / s2]).unwrap()
    }

    fn key(p: u32) -> StreamKey {
        StreamKey::new(17, Purpose::Custom(p), 0)
    }

    #[test]
    fn measure_statistics() {
        let one = EmpiricalMeasure::new(vec![3.0]).unwrap();
        assert_eq!((one.mean(), one.variance()), (3.0, 0.0));
        assert_eq!(EmpiricalMeasure::new(vec![-1.0, 1.0]).unwrap().mean(), 0.0);
        assert!(EmpiricalMeasure::new(vec![]).is_err());
        assert!(EmpiricalMeasure::new(vec![f64::NAN]).is_err());
        let big = EmpiricalMeasure::gaussian(1_000_000, 0.5, 0.2, key(1)).unwrap();
        assert!((big.mean() - 0.5).abs() <= 3.0 * 0.2 / 1e3);
    }

    #[test]
    fn zero_net_loss_is_zero() {
        let net = MlpNet::zeros(Architecture::mlp(1, &[8], 1)).unwrap();
        let (loss, grad) = score_loss_exact(&net, &[-1.0, 0.3, 2.0]).unwrap();
        assert_eq!(loss, 0.0);
        // Only the trace term can move a zero network: its gradient hits the
        // output weights through tanh'(0)·w1, which is zero for zero weights,
        // and the ½‖Σ‖² term contributes nothing.
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn true_score_loss_values() {
        let net = gaussian_score(0.0, 1.0);
        let (at_zero, _) = score_loss_exact(&net, &[0.0]).unwrap();
        assert_eq!(at_zero, -1.0);
        let sample = EmpiricalMeasure::gaussian(1_000_000, 0.0, 1.0, key(2)).unwrap();
        let (loss, _) = score_loss_exact(&net, sample.particles()).unwrap();
        assert!((loss + 0.5).abs() <= 0.01, "{loss}");
        let wider = gaussian_score(0.0, 1.0 / 1.2);
        let (loss_wider, _) = score_loss_exact(&wider, sample.particles()).unwrap();
        assert!(loss <= loss_wider);
    }

    #[test]
    fn hutchinson_special_cases() {
        let net = gaussian_score(0.0, 1.0);
        let states = [0.4, -1.2];
        // Unit probes reproduce the exact trace for d = 1.
        let exact = score_loss_exact(&net, &states).unwrap();
        assert_eq!(score_loss_hutchinson(&net, &states, &[1.0, -1.0]).unwrap(), exact);
        // Zero probes leave only ½‖Σ‖².
        let (loss, _) = score_loss_hutchinson(&net, &states, &[0.0, 0.0]).unwrap();
        assert!((loss - 0.25 * (0.16 + 1.44)).abs() < 1e-15);
        assert!(score_loss_hutchinson(&net, &states, &[1.0]).is_err());
    }

    #[test]
    fn hutchinson_estimate_of_linear_score() {
        let net = gaussian_score(0.0, 1.0);
        let n = 100_000;
        let k = key(3);
        let (mut acc, states) = (0.0, [0.0]);
        for i in 0..n {
            let z = k.normal(i);
            let (loss, _) = score_loss_hutchinson(&net, &states, &[z]).unwrap();
            assert_eq!(loss, -z * z);
            acc += loss;
        }
        assert!((acc / n as f64 + 1.0).abs() <= 0.01);
    }

    #[test]
    fn langevin_zero_step_is_identity() {
        let net = gaussian_score(0.0, 1.0);
        let init = EmpiricalMeasure::gaussian(50, 0.0, 1.0, key(4)).unwrap();
        let cfg = LangevinConfig { step_size: 0.0, ..Default::default() };
        assert_eq!(langevin_sample(&net, &cfg, &init, key(5)).unwrap(), init);
    }

    #[test]
    fn langevin_random_walk_variance() {
        let net = MlpNet::zeros(Architecture::mlp(1, &[4], 1)).unwrap();
        let init = EmpiricalMeasure::new(vec![0.0; 100_000]).unwrap();
        let cfg = LangevinConfig { step_size: 0.05, iterations: 20, particles: 100_000, warm_start: true };
        let out = langevin_sample(&net, &cfg, &init, key(6)).unwrap();
        let expect = 20.0 * 0.05;
        assert!((out.variance() / expect - 1.0).abs() <= 0.05);
    }

    #[test]
    fn langevin_stationary_law_of_exact_score() {
        let m = 0.24;
        let net = gaussian_score(m, 1.0);
        let init = EmpiricalMeasure::new(vec![m; 100_000]).unwrap();
        let cfg = LangevinConfig { step_size: 0.05, iterations: 200, particles: 100_000, warm_start: true };
        let out = langevin_sample(&net, &cfg, &init, key(7)).unwrap();
        assert!((out.mean() - m).abs() <= 0.05);
        let expect = 1.0 / (1.0 - 0.05 / 4.0);
        assert!((out.variance() / expect - 1.0).abs() <= 0.03);
    }

    #[test]
    fn langevin_divergence_guard() {
        let net = MlpNet::from_params(Architecture::linear(1, 1), vec![100.0, 0.0]).unwrap();
        let init = EmpiricalMeasure::new(vec![1.0]).unwrap();
        let cfg = LangevinConfig { step_size: 0.05, iterations: 200, particles: 1, warm_start: true };
        assert!(matches!(
            langevin_sample(&net, &cfg, &init, key(8)),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let meas = EmpiricalMeasure::gaussian(100, 0.1, 2.0, key(9)).unwrap();
        let mut buf = Vec::new();
        meas.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x\n"));
        assert_eq!(EmpiricalMeasure::read_csv(&buf[..]).unwrap(), meas);
    }

    #[test]
    fn trained_score_recovers_gaussian() {
        // Small version of the acceptance check: fit N(1, 0.25).
        let (m, s) = (1.0, 0.5);
        let data = EmpiricalMeasure::gaussian(20_000, m, s, key(10)).unwrap();
        let mut rng = key(11).rng(0);
        let mut net = MlpNet::init(Architecture::mlp(1, &[32], 1), &mut rng).unwrap();
        let mut adam = AdamState::new(net.param_count());
        for epoch in 0..150 {
            for chunk in data.particles().chunks(1000) {
                let (_, g) = score_loss_exact(&net, chunk).unwrap();
                adam_step(net.params_mut(), &g, &mut adam, if epoch < 100 { 1e-2 } else { 2e-3 }).unwrap();
            }
        }
        let worst = (0..=40)
            .map(|i| m - 2.0 * s + 0.1 * s * i as f64)
            .map(|x| (net.eval_scalar(x) + (x - m) / (s * s)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.1 * 4.0 / s, "sup error {worst}");
    }
}
