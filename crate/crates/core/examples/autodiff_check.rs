//! Analytic gradients of an MLP against central finite differences: the
//! parameter gradient, the input Jacobian and the parameter gradient of the
//! trace of the Jacobian.
//!
//!     cargo run --example autodiff_check -- [seed]

use mfcg::net::Architecture;
use mfcg::rng::{stream, Purpose};
use mfcg::MlpNet;

fn central<F: Fn(&[f64]) -> f64>(f: F, p: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..p.len())
        .map(|k| {
            let (mut up, mut dn) = (p.to_vec(), p.to_vec());
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> mfcg::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let arch = Architecture::mlp(2, &[16, 16], 2);
    let net = MlpNet::init(arch.clone(), &mut stream(seed, Purpose::NetInit(0), 0, 0))?;
    let x = [0.3, -0.8];
    let rebuild = |p: &[f64]| MlpNet::from_params(arch.clone(), p.to_vec()).unwrap();
    println!("{} parameters", net.param_count());

    let u = [1.0, -0.5];
    let g = net.param_grad(&x, &u)?;
    let fd = central(|p| rebuild(p).forward(&x).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum(), net.params());
    println!("param_grad: max |analytic - fd| = {:.2e}", max_abs_diff(&g, &fd));

    // Row i holds the derivatives of every output with respect to x_i.
    let jac = net.input_derivative(&x)?;
    for (i, row) in jac.iter().enumerate() {
        let fd: Vec<f64> = (0..2)
            .map(|j| central(|y| net.forward(&[y[0], y[1]]).unwrap()[j], &x)[i])
            .collect();
        println!("dy/dx_{i} = {row:?}  (fd {fd:?})");
    }

    let g = net.param_grad_of_input_derivative(&x, None)?;
    let fd = central(|p| rebuild(p).divergence(&x).unwrap(), net.params());
    println!("grad of trace: max |analytic - fd| = {:.2e}", max_abs_diff(&g, &fd));
    Ok(())
}
