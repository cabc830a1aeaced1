//! Linear-quadratic mean field control game benchmark.
//!
//! State dynamics `dX = α dt + σ dW` with running cost
//!
//! ```text
//! f(x, m, m̃, α) = ½α² + c1 (x − c2 m)² + c3 (x − c4)² + c̃1 (x − c̃2 m̃)² + c̃5 m̃²
//! ```
//!
//! where `m` is the mean of the population (game) distribution and `m̃` the
//! mean of the group's own (control) distribution. The equilibrium has the
//! closed form `v(x) = Γ₂x² + Γ₁x + Γ₀`, control `α̂(x) = −(2Γ₂x + Γ₁)` and
//! limiting law `N(−Γ₁/(2Γ₂), σ²/(4Γ₂))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Benchmark coefficients. Serialized with exactly the keys
/// `c1,c2,c3,c4,ct1,ct2,ct5,beta,sigma,dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub ct1: f64,
    pub ct2: f64,
    pub ct5: f64,
    pub beta: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl Default for LqParams {
    /// Benchmark coefficients with σ = 0.5 and Δt = 0.01.
    fn default() -> Self {
        LqParams {
            c1: 0.5,
            c2: 1.5,
            c3: 0.5,
            c4: 0.25,
            ct1: 0.3,
            ct2: 1.25,
            ct5: 0.25,
            beta: 1.0,
            sigma: 0.5,
            dt: 0.01,
        }
    }
}

impl LqParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c1, self.c2, self.c3, self.c4, self.ct1, self.ct2, self.ct5, self.beta, self.sigma,
            self.dt,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("LQ parameters must be finite".into()));
        }
        if self.beta <= 0.0 {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    /// `c1(1−c2) + c̃1(1−c̃2)² + c3 + c̃5`, the denominator of the equilibrium mean.
    pub fn mean_denominator(&self) -> f64 {
        self.c1 * (1.0 - self.c2)
            + self.ct1 * (1.0 - self.ct2).powi(2)
            + self.c3
            + self.ct5
    }

    /// Running cost at state `x`, measure means and action `a`.
    pub fn running_cost(&self, x: f64, m_global: f64, m_local: f64, a: f64) -> f64 {
        0.5 * a * a
            + self.c1 * (x - self.c2 * m_global).powi(2)
            + self.c3 * (x - self.c4).powi(2)
            + self.ct1 * (x - self.ct2 * m_local).powi(2)
            + self.ct5 * m_local * m_local
    }

    /// `−f · Δt`.
    pub fn reward(&self, x: f64, m_global: f64, m_local: f64, a: f64) -> f64 {
        -self.running_cost(x, m_global, m_local, a) * self.dt
    }

    /// Euler–Maruyama step `x + aΔt + σ√Δt z`.
    pub fn env_step(&self, x: f64, a: f64, z: f64) -> f64 {
        x + a * self.dt + self.sigma * self.dt.sqrt() * z
    }

    /// Batched [`env_step`](Self::env_step); one draw per element.
    pub fn env_step_batch(&self, xs: &[f64], actions: &[f64], draws: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("actions", xs.len(), actions.len())?;
        crate::error::check_len("normal draws", xs.len(), draws.len())?;
        Ok(xs
            .iter()
            .zip(actions)
            .zip(draws)
            .map(|((&x, &a), &z)| self.env_step(x, a, z))
            .collect())
    }

    /// `e^{−βΔt}`.
    pub fn discount_factor(&self) -> f64 {
        (-self.beta * self.dt).exp()
    }

    pub fn analytical_solution(&self) -> Result<AnalyticalSolution> {
        AnalyticalSolution::new(self)
    }
}

/// Closed-form equilibrium of the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalSolution {
    pub gamma2: f64,
    pub gamma1: f64,
    pub gamma0: f64,
    /// Equilibrium mean, shared by the global and local distributions.
    pub m: f64,
    pub limit_mean: f64,
    pub limit_variance: f64,
}

impl AnalyticalSolution {
    pub fn new(p: &LqParams) -> Result<Self> {
        let d = p.mean_denominator();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::OracleUndefined(format!("mean denominator is {d}")));
        }
        let quad = p.c1 + p.c3 + p.ct1;
        let disc = p.beta * p.beta + 8.0 * quad;
        if disc < 0.0 {
            return Err(Error::OracleUndefined(format!("negative discriminant {disc}")));
        }
        let gamma2 = (-p.beta + disc.sqrt()) / 4.0;
        if !(gamma2 > 0.0) {
            return Err(Error::OracleUndefined(format!("Γ₂ = {gamma2} is not positive")));
        }
        let m = p.c3 * p.c4 / d;
        let gamma1 = -2.0 * gamma2 * p.c3 * p.c4 / d;
        let gamma0 = (p.c1 * p.c2 * p.c2 * m * m
            + (p.ct1 * p.ct2 * p.ct2 + p.ct5) * m * m
            + p.sigma * p.sigma * gamma2
            - 0.5 * gamma1 * gamma1
            + p.c3 * p.c4 * p.c4)
            / p.beta;
        Ok(AnalyticalSolution {
            gamma2,
            gamma1,
            gamma0,
            m,
            limit_mean: -gamma1 / (2.0 * gamma2),
            limit_variance: p.sigma * p.sigma / (4.0 * gamma2),
        })
    }

    pub fn limit_std(&self) -> f64 {
        self.limit_variance.sqrt()
    }

    /// `α̂(x) = −(2Γ₂x + Γ₁)`.
    pub fn optimal_control(&self, x: f64) -> f64 {
        -(2.0 * self.gamma2 * x + self.gamma1)
    }

    /// `v(x) = Γ₂x² + Γ₁x + Γ₀`.
    pub fn value(&self, x: f64) -> f64 {
        (self.gamma2 * x + self.gamma1) * x + self.gamma0
    }

    pub fn value_derivative(&self, x: f64) -> f64 {
        2.0 * self.gamma2 * x + self.gamma1
    }

    /// Slope of the local-measure cost with respect to the local mean,
    /// `∂/∂m̃ [c̃1 E(X − c̃2 m̃)² + c̃5 m̃²]` at `E X = m̃ = m`.
    ///
    /// The group controls its own distribution, so this term enters the
    /// stationary HJB as a linear potential `κx`.
    pub fn control_correction(&self, p: &LqParams) -> f64 {
        2.0 * self.m * (p.ct5 - p.ct1 * p.ct2 * (1.0 - p.ct2))
    }

    /// Stationary HJB residual
    /// `βv(x) − [g(x) + κx − ½v′(x)² + σ²Γ₂]`, with `g` the running cost at
    /// zero action and both means at `m`, and `κ` the
    /// [`control_correction`](Self::control_correction).
    pub fn hjb_residual(&self, x: f64, p: &LqParams) -> f64 {
        let g = p.running_cost(x, self.m, self.m, 0.0);
        let dv = self.value_derivative(x);
        p.beta * self.value(x)
            - (g + self.control_correction(p) * x - 0.5 * dv * dv + p.sigma * p.sigma * self.gamma2)
    }
}

/// Value of a fixed affine Gaussian policy `a = kx + c + s·ξ` when both
/// measure means are held constant: `V(x) = Ax² + Bx + C` solves
/// `βV = E[½a²] + g(x) + (kx + c)V′ + ½σ²V″` (continuous time).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenPolicyValue {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FrozenPolicyValue {
    pub fn new(
        p: &LqParams,
        m_global: f64,
        m_local: f64,
        slope: f64,
        intercept: f64,
        action_std: f64,
    ) -> Result<Self> {
        if !(p.beta - 2.0 * slope > 0.0) {
            return Err(Error::OracleUndefined(format!(
                "policy slope {slope} does not give a finite discounted cost"
            )));
        }
        let quad = p.c1 + p.c3 + p.ct1;
        let lin = -2.0 * (p.c1 * p.c2 * m_global + p.c3 * p.c4 + p.ct1 * p.ct2 * m_local);
        let cst = p.c1 * (p.c2 * m_global).powi(2)
            + p.c3 * p.c4 * p.c4
            + p.ct1 * (p.ct2 * m_local).powi(2)
            + p.ct5 * m_local * m_local;
        let a = (0.5 * slope * slope + quad) / (p.beta - 2.0 * slope);
        let b = (slope * intercept + lin + 2.0 * intercept * a) / (p.beta - slope);
        let c = (0.5 * intercept * intercept
            + 0.5 * action_std * action_std
            + cst
            + intercept * b
            + p.sigma * p.sigma * a)
            / p.beta;
        Ok(FrozenPolicyValue { a, b, c })
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}
