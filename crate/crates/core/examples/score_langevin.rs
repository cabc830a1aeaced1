//! Fit a score network to Gaussian samples with the exact score-matching
//! loss, then sample from it with Langevin dynamics.
//!
//!     cargo run --release --example score_langevin -- [mean] [std] [epochs]

use mfcg::net::Architecture;
use mfcg::rng::{stream, Purpose, StreamKey};
use mfcg::score::{langevin_sample, score_loss_exact};
use mfcg::{adam_step, AdamState, EmpiricalMeasure, LangevinConfig, MlpNet};

fn main() -> mfcg::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: f64 = args.next().map_or(0.24, |s| s.parse().expect("mean"));
    let s: f64 = args.next().map_or(0.32, |s| s.parse().expect("std"));
    let epochs = args.next().map_or(20, |s| s.parse().expect("epochs"));

    let data = EmpiricalMeasure::gaussian(50_000, m, s, StreamKey::new(1, Purpose::Custom(0), 0))?;
    let mut net = MlpNet::init(Architecture::mlp(1, &[64], 1), &mut stream(1, Purpose::NetInit(2), 0, 0))?;
    let mut adam = AdamState::new(net.param_count());
    for epoch in 0..epochs {
        let mut total = 0.0;
        for chunk in data.particles().chunks(500) {
            let (loss, g) = score_loss_exact(&net, chunk)?;
            adam_step(net.params_mut(), &g, &mut adam, 5e-3)?;
            total += loss;
        }
        println!("epoch {epoch:>3}  loss {:+.5}", total / 100.0);
    }
    // The minimum of the loss is -1/(2 s^2).
    println!("loss floor {:+.5}", -0.5 / (s * s));

    for x in [m - 2.0 * s, m, m + 2.0 * s] {
        println!("score({x:+.3}) = {:+.4}  true {:+.4}", net.eval_scalar(x), -(x - m) / (s * s));
    }

    let cfg = LangevinConfig { step_size: 0.01, iterations: 500, particles: 5000, warm_start: true };
    let init = EmpiricalMeasure::gaussian(cfg.particles, 0.0, 1.0, StreamKey::new(1, Purpose::ParticleInit(0), 0))?;
    let out = langevin_sample(&net, &cfg, &init, StreamKey::new(1, Purpose::Langevin(0), 0))?;
    println!("Langevin sample: mean {:.4} std {:.4} (target {m} / {s})", out.mean(), out.std());
    Ok(())
}
