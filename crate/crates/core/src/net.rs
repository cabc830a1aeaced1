//! Dense feed-forward networks with exact first and mixed second derivatives.
//!
//! The networks here are tiny (one or two hidden layers, width at most a few
//! hundred), so everything is plain `Vec<f64>` arithmetic with a fixed
//! left-to-right accumulation order. Three kinds of derivative are exposed:
//!
//! * parameter gradients of `upstream · f(x)` (reverse mode),
//! * the input Jacobian `∂f/∂x` (forward mode),
//! * parameter gradients of a contraction `uᵀ (∂f/∂x) v` (reverse over
//!   forward), which is what score matching needs for its divergence term.
//!
//! Parameters are stored flat, layer by layer: the `out × in` weight matrix in
//! row-major order followed by the `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Lower bound of the positive head map.
pub const POSITIVE_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// First and second derivative, expressed through the activated value `a`.
    #[inline]
    fn derivs(self, a: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let d1 = 1.0 - a * a;
                (d1, -2.0 * a * d1)
            }
            Activation::Identity => (1.0, 0.0),
        }
    }
}

/// Optional element-wise map applied to the network output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMap {
    Identity,
    /// `max(log(1 + eᶻ), POSITIVE_FLOOR)`.
    Positive,
}

impl HeadMap {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            HeadMap::Identity => z,
            HeadMap::Positive => softplus(z).max(POSITIVE_FLOOR),
        }
    }

    /// Value with first and second derivative. The floor has zero slope.
    #[inline]
    fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            HeadMap::Identity => (z, 1.0, 0.0),
            HeadMap::Positive => {
                let y = softplus(z);
                if y < POSITIVE_FLOOR {
                    (POSITIVE_FLOOR, 0.0, 0.0)
                } else {
                    let s = sigmoid(z);
                    (y, s, s * (1.0 - s))
                }
            }
        }
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Layer widths, one activation per layer and the output head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub head: HeadMap,
}

impl Architecture {
    /// Tanh hidden layers, identity output layer, no head map.
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = vec![Activation::Tanh; hidden.len()];
        activations.push(Activation::Identity);
        Architecture {
            widths,
            activations,
            head: HeadMap::Identity,
        }
    }

    /// Single affine layer.
    pub fn linear(input: usize, output: usize) -> Self {
        Self::mlp(input, &[], output)
    }

    pub fn with_head(mut self, head: HeadMap) -> Self {
        self.head = head;
        self
    }

    /// Every layer Tanh, including the last. Used for shared feature trunks.
    pub fn all_tanh(mut self) -> Self {
        self.activations.iter_mut().for_each(|a| *a = Activation::Tanh);
        self
    }

    pub fn layers(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "network widths must have at least two positive entries, got {:?}",
                self.widths
            )));
        }
        check_len("activations per layer", self.layers(), self.activations.len())
    }
}

/// Result of a combined primal/tangent backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderEval {
    pub output: Vec<f64>,
    /// `uᵀ (∂f/∂x) v` for the supplied left/right vectors.
    pub contraction: f64,
}

/// Parameterized dense network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet {
    arch: Architecture,
    params: Vec<f64>,
}

struct Tape {
    /// Activated values per layer; `post[0]` is the input.
    post: Vec<Vec<f64>>,
    /// Tangents of the activated values along the input direction.
    dpost: Vec<Vec<f64>>,
}

impl MlpNet {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let params = vec![0.0; arch.param_count()];
        Ok(MlpNet { arch, params })
    }

    /// Uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut offset = 0;
        for l in 0..net.arch.layers() {
            let (fan_in, fan_out) = (net.arch.widths[l], net.arch.widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-bound..=bound);
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        check_len("parameter vector", arch.param_count(), params.len())?;
        check_finite("network parameters", &params)?;
        Ok(MlpNet { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Raw parameter access for optimizers. Callers keep the values finite.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("parameter vector", self.params.len(), params.len())?;
        check_finite("network parameters", params)?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut offset = 0;
        for w in self.arch.widths.windows(2).take(l) {
            offset += (w[0] + 1) * w[1];
        }
        let (i, o) = (self.arch.widths[l], self.arch.widths[l + 1]);
        (offset, offset + i * o)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_len("network input", self.input_dim(), x.len())?;
        check_finite("network input", x)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for l in 0..self.arch.layers() {
            a = self.layer_forward(l, &a);
        }
        let head = self.arch.head;
        a.iter_mut().for_each(|v| *v = head.apply(*v));
        Ok(a)
    }

    fn layer_forward(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let (w_off, b_off) = self.layer_offsets(l);
        let n_in = input.len();
        let act = self.arch.activations[l];
        (0..self.arch.widths[l + 1])
            .map(|j| {
                let row = &self.params[w_off + j * n_in..w_off + (j + 1) * n_in];
                let mut z = self.params[b_off + j];
                for (w, a) in row.iter().zip(input) {
                    z += w * a;
                }
                act.apply(z)
            })
            .collect()
    }

    /// Scalar-in, scalar-out evaluation without allocation.
    ///
    /// Requires input and output dimension 1. Bitwise equal to `forward`.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        debug_assert!(self.input_dim() == 1 && self.output_dim() == 1);
        let w = &self.arch.widths;
        if w.len() == 3 {
            let h = w[1];
            let p = &self.params;
            let (w1, rest) = p.split_at(h);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h);
            let (a0, a1) = (self.arch.activations[0], self.arch.activations[1]);
            let mut z = b2[0];
            for j in 0..h {
                // Same association as the generic path: b + w·x.
                let hidden = a0.apply(b1[j] + w1[j] * x);
                z += w2[j] * hidden;
            }
            self.arch.head.apply(a1.apply(z))
        } else {
            self.forward(&[x]).map(|y| y[0]).unwrap_or(f64::NAN)
        }
    }

    fn tape(&self, x: &[f64], direction: Option<&[f64]>) -> Tape {
        let layers = self.arch.layers();
        let mut post = Vec::with_capacity(layers + 1);
        let mut dpost = Vec::with_capacity(layers + 1);
        post.push(x.to_vec());
        if let Some(v) = direction {
            dpost.push(v.to_vec());
        }
        for l in 0..layers {
            let (w_off, b_off) = self.layer_offsets(l);
            let n_in = self.arch.widths[l];
            let n_out = self.arch.widths[l + 1];
            let act = self.arch.activations[l];
            let input = &post[l];
            let mut out = Vec::with_capacity(n_out);
            let mut dout = Vec::with_capacity(if direction.is_some() { n_out } else { 0 });
            for j in 0..n_out {
                let row = &self.params[w_off + j * n_in..w_off + (j + 1) * n_in];
                let mut z = self.params[b_off + j];
                for (w, a) in row.iter().zip(input) {
                    z += w * a;
                }
                let a = act.apply(z);
                out.push(a);
                if direction.is_some() {
                    let mut dz = 0.0;
                    for (w, da) in row.iter().zip(&dpost[l]) {
                        dz += w * da;
                    }
                    dout.push(act.derivs(a).0 * dz);
                }
            }
            post.push(out);
            if direction.is_some() {
                dpost.push(dout);
            }
        }
        Tape { post, dpost }
    }

    /// Gradient of `upstream · f(x)` with respect to the parameters.
    pub fn param_grad(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.param_count()];
        self.backward(x, upstream, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Adds `scale · ∂(upstream · f(x))/∂θ` into `grad` and returns the
    /// gradient of `upstream · f(x)` with respect to `x` (unscaled).
    pub fn backward(
        &self,
        x: &[f64],
        upstream: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_input(x)?;
        check_len("upstream gradient", self.output_dim(), upstream.len())?;
        check_len("gradient buffer", self.param_count(), grad.len())?;
        check_finite("upstream gradient", upstream)?;
        let tape = self.tape(x, None);
        let (input_grad, _) = self.reverse(&tape, upstream, None, scale, grad);
        check_finite("parameter gradient", grad)?;
        Ok(input_grad)
    }

    /// Jacobian `J[i][j] = ∂f_j/∂x_i`, by forward-mode propagation of each
    /// input basis vector.
    pub fn input_derivative(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let d = self.input_dim();
        let mut jac = Vec::with_capacity(d);
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            let tape = self.tape(x, Some(&e));
            let last = tape.post.len() - 1;
            let row: Vec<f64> = tape.post[last]
                .iter()
                .zip(&tape.dpost[last])
                .map(|(&p, &dp)| self.arch.head.eval(p).1 * dp)
                .collect();
            jac.push(row);
        }
        check_finite("input derivative", &jac.concat())?;
        Ok(jac)
    }

    /// Divergence `tr(∂f/∂x)`. Requires input and output dimension to agree.
    pub fn divergence(&self, x: &[f64]) -> Result<f64> {
        check_len("square jacobian", self.input_dim(), self.output_dim())?;
        let jac = self.input_derivative(x)?;
        Ok((0..jac.len()).map(|i| jac[i][i]).sum())
    }

    /// Parameter gradient of `tr(∂f/∂x)` (probe `None`) or of the quadratic
    /// form `zᵀ (∂f/∂x) z` (probe `Some(z)`).
    pub fn param_grad_of_input_derivative(
        &self,
        x: &[f64],
        probe: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.param_count()];
        let zero = vec![0.0; self.output_dim()];
        match probe {
            Some(z) => {
                self.second_order(x, z, z, &zero, 1.0, &mut grad)?;
            }
            None => {
                check_len("square jacobian", self.input_dim(), self.output_dim())?;
                let d = self.input_dim();
                for i in 0..d {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    self.second_order(x, &e, &e, &zero, 1.0, &mut grad)?;
                }
            }
        }
        Ok(grad)
    }

    /// Adds `scale · ∂/∂θ [ leftᵀ (∂f/∂x) direction + upstream · f(x) ]` into
    /// `grad`. This is the single pass used by the score-matching losses.
    pub fn second_order(
        &self,
        x: &[f64],
        direction: &[f64],
        left: &[f64],
        upstream: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<SecondOrderEval> {
        check_len("upstream gradient", self.output_dim(), upstream.len())?;
        self.second_order_with(x, direction, left, |_| upstream.to_vec(), scale, grad)
    }

    /// As [`second_order`](Self::second_order), with the primal upstream
    /// computed from the network output (e.g. `|y| y.to_vec()` for `½‖f‖²`).
    pub fn second_order_with<F>(
        &self,
        x: &[f64],
        direction: &[f64],
        left: &[f64],
        upstream: F,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<SecondOrderEval>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        self.check_input(x)?;
        check_len("tangent direction", self.input_dim(), direction.len())?;
        check_len("left contraction vector", self.output_dim(), left.len())?;
        check_len("gradient buffer", self.param_count(), grad.len())?;
        check_finite("tangent direction", direction)?;
        check_finite("left contraction vector", left)?;
        let tape = self.tape(x, Some(direction));
        let last = tape.post.len() - 1;
        let head = self.arch.head;
        let mut output = Vec::with_capacity(self.output_dim());
        let mut contraction = 0.0;
        for (j, (&p, &dp)) in tape.post[last].iter().zip(&tape.dpost[last]).enumerate() {
            let (y, d1, _) = head.eval(p);
            output.push(y);
            contraction += left[j] * d1 * dp;
        }
        let upstream = upstream(&output);
        check_len("upstream gradient", self.output_dim(), upstream.len())?;
        self.reverse(&tape, &upstream, Some(left), scale, grad);
        if !contraction.is_finite() || !output.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("second-order evaluation"));
        }
        check_finite("second-order parameter gradient", grad)?;
        Ok(SecondOrderEval {
            output,
            contraction,
        })
    }

    /// Reverse sweep over the tape. With `left` set, also differentiates the
    /// tangent contraction `left · ḟ`. Returns the primal and tangent input
    /// adjoints.
    fn reverse(
        &self,
        tape: &Tape,
        upstream: &[f64],
        left: Option<&[f64]>,
        scale: f64,
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let layers = self.arch.layers();
        let head = self.arch.head;
        let second = left.is_some();
        // Adjoints with respect to the activated outputs of the last layer.
        let last = &tape.post[layers];
        let mut bar: Vec<f64> = Vec::with_capacity(last.len());
        let mut dbar: Vec<f64> = Vec::with_capacity(if second { last.len() } else { 0 });
        for (j, &p) in last.iter().enumerate() {
            let (_, d1, d2) = head.eval(p);
            match left {
                Some(u) => {
                    let dp = tape.dpost[layers][j];
                    bar.push(upstream[j] * d1 + u[j] * d2 * dp);
                    dbar.push(u[j] * d1);
                }
                None => bar.push(upstream[j] * d1),
            }
        }
        for l in (0..layers).rev() {
            let (w_off, b_off) = self.layer_offsets(l);
            let n_in = self.arch.widths[l];
            let n_out = self.arch.widths[l + 1];
            let act = self.arch.activations[l];
            let out = &tape.post[l + 1];
            let input = &tape.post[l];
            let mut zbar = vec![0.0; n_out];
            let mut dzbar = vec![0.0; if second { n_out } else { 0 }];
            for j in 0..n_out {
                let (d1, d2) = act.derivs(out[j]);
                if second {
                    // Tangent of the pre-activation: ż = ȧ / φ'(z) is avoided
                    // by recomputing W·ȧ_{l-1}.
                    let row = &self.params[w_off + j * n_in..w_off + (j + 1) * n_in];
                    let mut dz = 0.0;
                    for (w, da) in row.iter().zip(&tape.dpost[l]) {
                        dz += w * da;
                    }
                    zbar[j] = bar[j] * d1 + dbar[j] * d2 * dz;
                    dzbar[j] = dbar[j] * d1;
                } else {
                    zbar[j] = bar[j] * d1;
                }
            }
            for j in 0..n_out {
                let row = &mut grad[w_off + j * n_in..w_off + (j + 1) * n_in];
                let zb = scale * zbar[j];
                if second {
                    let dzb = scale * dzbar[j];
                    for ((g, a), da) in row.iter_mut().zip(input).zip(&tape.dpost[l]) {
                        *g += zb * a + dzb * da;
                    }
                } else {
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += zb * a;
                    }
                }
                grad[b_off + j] += zb;
            }
            let mut next_bar = vec![0.0; n_in];
            let mut next_dbar = vec![0.0; if second { n_in } else { 0 }];
            for j in 0..n_out {
                let row = &self.params[w_off + j * n_in..w_off + (j + 1) * n_in];
                for (i, w) in row.iter().enumerate() {
                    next_bar[i] += w * zbar[j];
                    if second {
                        next_dbar[i] += w * dzbar[j];
                    }
                }
            }
            bar = next_bar;
            dbar = next_dbar;
        }
        (bar, dbar)
    }

    pub fn checkpoint(&self, optimizer: Option<&AdamState>) -> NetCheckpoint {
        NetCheckpoint {
            architecture: self.arch.clone(),
            params: self.params.clone(),
            optimizer: optimizer.cloned(),
        }
    }
}

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_hyper(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam step. On error neither `params` nor `state` change.
///
/// A learning rate of zero is accepted: moments advance, parameters do not.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    check_len("gradient", params.len(), grads.len())?;
    check_len("adam moments", params.len(), state.m.len())?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    check_finite("gradient", grads)?;
    let step = state.step + 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(step.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - b2.powi(step.min(i32::MAX as u64) as i32);
    let mut m = Vec::with_capacity(params.len());
    let mut v = Vec::with_capacity(params.len());
    let mut updated = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let g = grads[i];
        let mi = b1 * state.m[i] + (1.0 - b1) * g;
        let vi = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = mi / c1;
        let v_hat = vi / c2;
        updated.push(params[i] - lr * m_hat / (v_hat.sqrt() + state.eps));
        m.push(mi);
        v.push(vi);
    }
    check_finite("updated parameters", &updated)?;
    params.copy_from_slice(&updated);
    state.m = m;
    state.v = v;
    state.step = step;
    Ok(())
}

/// Serialized network: architecture, flat parameters, optional optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub architecture: Architecture,
    pub params: Vec<f64>,
    pub optimizer: Option<AdamState>,
}

impl NetCheckpoint {
    pub fn into_net(self) -> Result<(MlpNet, Option<AdamState>)> {
        let net = MlpNet::from_params(self.architecture, self.params)?;
        if let Some(opt) = &self.optimizer {
            check_len("adam moments", net.param_count(), opt.m.len())?;
            check_len("adam moments", net.param_count(), opt.v.len())?;
        }
        Ok((net, self.optimizer))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn linear(w: f64, b: f64) -> MlpNet {
        MlpNet::from_params(Architecture::linear(1, 1), vec![w, b]).unwrap()
    }

    fn random_net(seed: u64, arch: Architecture) -> MlpNet {
        let mut rng = stream(seed, Purpose::Custom(1), 0, 0);
        let mut net = MlpNet::init(arch, &mut rng).unwrap();
        // Non-zero biases so every code path is exercised.
        let n = net.param_count();
        for (i, p) in net.params_mut().iter_mut().enumerate() {
            *p += 0.1 * ((i * 7919 % 13) as f64 / 13.0 - 0.5) * (n as f64).recip().sqrt();
        }
        net
    }

    #[test]
    fn param_count_matches_layout() {
        let arch = Architecture::mlp(3, &[5, 4], 2);
        assert_eq!(arch.param_count(), 4 * 5 + 6 * 4 + 5 * 2);
        assert_eq!(MlpNet::zeros(arch).unwrap().params().len(), 54);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNet::zeros(Architecture::mlp(1, &[8], 1)).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(net.forward(&[x]).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn affine_layer() {
        let net = linear(2.0, 1.0);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
        assert_eq!(net.param_grad(&[3.0], &[1.0]).unwrap(), vec![3.0, 1.0]);
        assert_eq!(net.input_derivative(&[3.0]).unwrap(), vec![vec![2.0]]);
        assert_eq!(net.param_grad_of_input_derivative(&[3.0], None).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_tanh_composition() {
        // x -> [tanh(0.5x - 0.2), tanh(-1.5x + 0.3)] -> 0.7 h0 - 1.1 h1 + 0.05
        let arch = Architecture::mlp(1, &[2], 1);
        let net = MlpNet::from_params(arch, vec![0.5, -1.5, -0.2, 0.3, 0.7, -1.1, 0.05]).unwrap();
        let x = 0.8_f64;
        let expect = 0.7 * (0.5 * x - 0.2).tanh() - 1.1 * (-1.5 * x + 0.3).tanh() + 0.05;
        let got = net.forward(&[x]).unwrap()[0];
        assert!((got - expect).abs() <= 1e-12);
        assert_eq!(net.eval_scalar(x), got);
    }

    #[test]
    fn tanh_derivative_at_origin() {
        let arch = Architecture::linear(1, 1).all_tanh();
        let net = MlpNet::from_params(arch, vec![1.0, 0.0]).unwrap();
        assert_eq!(net.input_derivative(&[0.0]).unwrap()[0][0], 1.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = random_net(3, Architecture::mlp(2, &[6], 3));
        let g = net.param_grad(&[0.3, -0.4], &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_network_trace_gradient_is_zero() {
        let net = MlpNet::zeros(Architecture::mlp(1, &[4], 1)).unwrap();
        let g = net.param_grad_of_input_derivative(&[0.7], None).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let net = random_net(1, Architecture::mlp(2, &[3], 1));
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(net.forward(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(net.param_grad(&[1.0, 2.0], &[1.0, 1.0]), Err(Error::Dimension { .. })));
        assert!(MlpNet::from_params(Architecture::linear(1, 1), vec![1.0]).is_err());
        assert!(MlpNet::from_params(Architecture::linear(1, 1), vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn positive_head_respects_floor() {
        let arch = Architecture::linear(1, 1).with_head(HeadMap::Positive);
        let net = MlpNet::from_params(arch, vec![0.0, -50.0]).unwrap();
        assert_eq!(net.forward(&[1.0]).unwrap()[0], POSITIVE_FLOOR);
        assert!(net.param_grad(&[1.0], &[1.0]).unwrap().iter().all(|&g| g == 0.0));
        let net = MlpNet::from_params(net.architecture().clone(), vec![0.0, 0.0]).unwrap();
        assert!((net.forward(&[1.0]).unwrap()[0] - 2f64.ln()).abs() < 1e-15);
    }

    fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(floor)
    }

    #[test]
    fn multi_dim_gradients_match_finite_differences() {
        let net = random_net(5, Architecture::mlp(3, &[7, 5], 2).with_head(HeadMap::Positive));
        let x = [0.2, -0.7, 1.1];
        let up = [0.6, -1.3];
        let g = net.param_grad(&x, &up).unwrap();
        let h = 1e-5;
        for k in 0..net.param_count() {
            let mut p = net.clone();
            p.params_mut()[k] += h;
            let fp: f64 = p.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum();
            p.params_mut()[k] -= 2.0 * h;
            let fm: f64 = p.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum();
            let fd = (fp - fm) / (2.0 * h);
            assert!(rel_err(g[k], fd, 1e-6) < 1e-5, "param {k}: {} vs {fd}", g[k]);
        }
        let jac = net.input_derivative(&x).unwrap();
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let (yp, ym) = (net.forward(&xp).unwrap(), net.forward(&xm).unwrap());
            for j in 0..2 {
                let fd = (yp[j] - ym[j]) / (2.0 * h);
                assert!(rel_err(jac[i][j], fd, 1e-6) < 1e-6);
            }
        }
    }

    #[test]
    fn quadratic_form_gradient_matches_finite_differences() {
        let net = random_net(9, Architecture::mlp(3, &[6], 3));
        let x = [0.4, 0.1, -0.9];
        let z = [1.2, -0.3, 0.5];
        let g = net.param_grad_of_input_derivative(&x, Some(&z)).unwrap();
        let quad = |n: &MlpNet| {
            let j = n.input_derivative(&x).unwrap();
            let mut s = 0.0;
            for i in 0..3 {
                for k in 0..3 {
                    s += z[k] * j[i][k] * z[i];
                }
            }
            s
        };
        let h = 1e-5;
        for k in 0..net.param_count() {
            let mut p = net.clone();
            p.params_mut()[k] += h;
            let fp = quad(&p);
            p.params_mut()[k] -= 2.0 * h;
            let fd = (fp - quad(&p)) / (2.0 * h);
            assert!(rel_err(g[k], fd, 1e-6) < 1e-4, "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut p = vec![0.5, -1.0, 2.0];
        let mut st = AdamState::new(3);
        for _ in 0..3 {
            adam_step(&mut p, &[0.0; 3], &mut st, 0.1).unwrap();
        }
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert!(st.m.iter().chain(&st.v).all(|&v| v == 0.0));
        assert_eq!(st.step, 3);
    }

    #[test]
    fn adam_hand_unrolled_steps() {
        let (lr, g, eps) = (0.01, 0.3_f64, 1e-8);
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[g], &mut st, lr).unwrap();
        // m̂ = g, v̂ = g², so the first step is lr·g/(|g| + eps).
        let first = 1.0 - lr * g / (g.abs() + eps);
        assert!((p[0] - first).abs() <= 1e-12);
        adam_step(&mut p, &[g], &mut st, lr).unwrap();
        let m2 = 0.9 * 0.1 * g + 0.1 * g;
        let v2 = 0.999 * 0.001 * g * g + 0.001 * g * g;
        let m_hat = m2 / (1.0 - 0.81);
        let v_hat = v2 / (1.0 - 0.999 * 0.999);
        let second = first - lr * m_hat / (v_hat.sqrt() + eps);
        assert!((p[0] - second).abs() <= 1e-12);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn adam_rejects_non_finite_and_leaves_state() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.1, 0.2], &mut st, 0.01).unwrap();
        let (p0, st0) = (p.clone(), st.clone());
        assert!(adam_step(&mut p, &[f64::NAN, 0.0], &mut st, 0.01).is_err());
        assert_eq!((p.clone(), st.clone()), (p0, st0));
        assert!(adam_step(&mut p, &[0.1], &mut st, 0.01).is_err());
        assert!(adam_step(&mut p, &[0.1, 0.1], &mut st, -1.0).is_err());
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let net = random_net(11, Architecture::mlp(1, &[16], 1));
        let mut st = AdamState::new(net.param_count());
        let mut params = net.params().to_vec();
        let grad = net.param_grad(&[0.3], &[1.0]).unwrap();
        adam_step(&mut params, &grad, &mut st, 1e-3).unwrap();
        let ck = net.checkpoint(Some(&st));
        let back = NetCheckpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let (net2, st2) = back.into_net().unwrap();
        assert_eq!(net2, net);
        assert_eq!(st2.unwrap(), st);
    }
}
