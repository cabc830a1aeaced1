//! Errors of a trained run against the closed-form benchmark solution.
//!
//! The critic is trained on rewards `−f·Δt`, so it approximates `−v`; value
//! errors compare `−V_θ` with `v`.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lq::AnalyticalSolution;
use crate::net::MlpNet;
use crate::score::EmpiricalMeasure;
use crate::train::{Actor, TrainCheckpoint};

/// Evenly spaced points `lower, lower + step, …` up to `upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower <= upper) || !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("invalid grid {lower}:{upper}:{step}")));
        }
        Ok(GridSpec { lower, upper, step })
    }

    /// `m ± 4s` around the limiting law, step 0.01.
    pub fn around_limit(sol: &AnalyticalSolution) -> Self {
        let (m, s) = (sol.limit_mean, sol.limit_std());
        GridSpec { lower: m - 4.0 * s, upper: m + 4.0 * s, step: 0.01 }
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.upper - self.lower) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lower + i as f64 * self.step).collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `lo:hi:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Usage(format!("grid must be lo:hi:step, got '{s}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Self::new(v[0], v[1], v[2]).map_err(|_| bad())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridError {
    pub sup: f64,
    /// Root mean square over the grid points.
    pub l2: f64,
}

fn grid_error<F: Fn(f64) -> f64>(f: F, grid: &GridSpec) -> GridError {
    let pts = grid.points();
    let (mut sup, mut sq) = (0.0f64, 0.0);
    for &x in &pts {
        let e = f(x).abs();
        sup = sup.max(e);
        sq += e * e;
    }
    GridError { sup, l2: (sq / pts.len() as f64).sqrt() }
}

/// Errors of an arbitrary value estimate against `v`.
pub fn eval_value_fn<F: Fn(f64) -> f64>(value: F, sol: &AnalyticalSolution, grid: &GridSpec) -> GridError {
    grid_error(|x| value(x) - sol.value(x), grid)
}

/// Errors of `−V_θ` against `v`.
pub fn eval_value(critic: &MlpNet, sol: &AnalyticalSolution, grid: &GridSpec) -> GridError {
    eval_value_fn(|x| -critic.eval_scalar(x), sol, grid)
}

/// Sup error of the actor mean against the optimal control.
pub fn eval_policy(actor: &Actor, sol: &AnalyticalSolution, grid: &GridSpec) -> Result<f64> {
    let mut sup = 0.0f64;
    for x in grid.points() {
        sup = sup.max((actor.heads(x)?.0 - sol.optimal_control(x)).abs());
    }
    Ok(sup)
}

/// Kolmogorov–Smirnov distance between the particles and a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(particles: &[f64], cdf: F) -> f64 {
    let mut xs = particles.to_vec();
    xs.sort_by(f64::total_cmp);
    let k = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / k - f).max(f - i as f64 / k)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionError {
    pub mean_error: f64,
    pub std_error: f64,
    pub ks: f64,
}

/// Moment and KS errors of a particle set against the limiting Gaussian.
pub fn eval_distribution(meas: &EmpiricalMeasure, sol: &AnalyticalSolution) -> Result<DistributionError> {
    let limit = Normal::new(sol.limit_mean, sol.limit_std())
        .map_err(|e| Error::OracleUndefined(format!("limiting law: {e}")))?;
    Ok(DistributionError {
        mean_error: (meas.mean() - sol.limit_mean).abs(),
        std_error: (meas.std() - sol.limit_std()).abs(),
        ks: ks_statistic(meas.particles(), |x| limit.cdf(x)),
    })
}

/// Evaluation of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub value_sup: f64,
    pub value_l2: f64,
    pub policy_sup: f64,
    pub mean_global_error: f64,
    pub mean_local_error: f64,
    pub std_global_error: f64,
    pub std_local_error: f64,
    pub ks_global: f64,
    pub ks_local: f64,
}

impl MetricsReport {
    pub const FIELDS: [&'static str; 9] = [
        "value_sup",
        "value_l2",
        "policy_sup",
        "mean_global_error",
        "mean_local_error",
        "std_global_error",
        "std_local_error",
        "ks_global",
        "ks_local",
    ];

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.value_sup,
            self.value_l2,
            self.policy_sup,
            self.mean_global_error,
            self.mean_local_error,
            self.std_global_error,
            self.std_local_error,
            self.ks_global,
            self.ks_local,
        ]
    }

    pub fn from_array(v: [f64; 9]) -> Self {
        MetricsReport {
            value_sup: v[0],
            value_l2: v[1],
            policy_sup: v[2],
            mean_global_error: v[3],
            mean_local_error: v[4],
            std_global_error: v[5],
            std_local_error: v[6],
            ks_global: v[7],
            ks_local: v[8],
        }
    }
}

/// Scores a checkpoint and its final particle sets.
pub fn evaluate_run(
    ck: &TrainCheckpoint,
    global: &EmpiricalMeasure,
    local: &EmpiricalMeasure,
    sol: &AnalyticalSolution,
    grid: &GridSpec,
) -> Result<MetricsReport> {
    let value = eval_value(&ck.critic()?, sol, grid);
    let policy_sup = eval_policy(&ck.actor()?, sol, grid)?;
    let g = eval_distribution(global, sol)?;
    let l = eval_distribution(local, sol)?;
    Ok(MetricsReport {
        value_sup: value.sup,
        value_l2: value.l2,
        policy_sup,
        mean_global_error: g.mean_error,
        mean_local_error: l.mean_error,
        std_global_error: g.std_error,
        std_local_error: l.std_error,
        ks_global: g.ks,
        ks_local: l.ks,
    })
}

/// Per-run reports with their field-wise mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: Vec<MetricsReport>,
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::Usage("aggregation needs at least one run".into()));
    }
    let n = reports.len() as f64;
    let mut mean = [0.0; 9];
    let mut std = [0.0; 9];
    for f in 0..9 {
        // Sorted so the result does not depend on run order.
        let mut vals: Vec<f64> = reports.iter().map(|r| r.to_array()[f]).collect();
        vals.sort_by(f64::total_cmp);
        mean[f] = vals.iter().sum::<f64>() / n;
        if reports.len() > 1 {
            std[f] = (vals.iter().map(|v| (v - mean[f]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        }
    }
    Ok(Aggregate {
        runs: reports.to_vec(),
        mean: MetricsReport::from_array(mean),
        std: MetricsReport::from_array(std),
    })
}

pub const EVAL_HEADER: &str = "x,value_learned,value_analytical,control_learned,control_analytical";

/// Plot-ready table, one row per grid point.
pub fn write_eval_csv<W: Write>(
    mut out: W,
    critic: &MlpNet,
    actor: &Actor,
    sol: &AnalyticalSolution,
    grid: &GridSpec,
) -> Result<()> {
    writeln!(out, "{EVAL_HEADER}")?;
    for x in grid.points() {
        let a = actor.heads(x)?.0;
        writeln!(
            out,
            "{x},{},{},{a},{}",
            -critic.eval_scalar(x),
            sol.value(x),
            sol.optimal_control(x)
        )?;
    }
    Ok(())
}
