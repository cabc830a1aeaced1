//! Batched actor-critic training on the benchmark, evaluated against the
//! closed-form solution.
//!
//!     cargo run --release --example train_batch -- [steps] [batch] [seed]

use std::time::Instant;

use mfcg::eval::{eval_distribution, eval_policy, eval_value, GridSpec};
use mfcg::{Algorithm, TrainConfig, Trainer};

fn main() -> mfcg::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(200, |s| s.parse().expect("steps"));
    let batch = args.next().map_or(1024, |s| s.parse().expect("batch size"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));

    let cfg = TrainConfig { steps, batch_size: batch, seed, ..TrainConfig::new(Algorithm::Batch) };
    let sol = cfg.lq.analytical_solution()?;
    let grid = GridSpec::around_limit(&sol);
    let mut t = Trainer::new(cfg)?;
    let start = Instant::now();
    t.run(|_, m| {
        if (m.step + 1) % (steps / 10).max(1) == 0 {
            println!(
                "step {:>7}  lr x{:.2}  score {:+.3e}/{:+.3e}  critic {:.3e}  actor {:+.3e}  means {:+.4}/{:+.4}  {:.1}s",
                m.step + 1,
                m.lr_multiplier,
                m.score_loss_global,
                m.score_loss_local,
                m.critic_loss,
                m.actor_loss,
                m.mean_global,
                m.mean_local,
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;

    let v = eval_value(&t.critics().critic, &sol, &grid);
    let (g, l) = t.particles();
    let (dg, dl) = (eval_distribution(g, &sol)?, eval_distribution(l, &sol)?);
    println!("equilibrium mean {:.4}, limit std {:.4}", sol.m, sol.limit_std());
    println!("value sup error {:.4}, rms {:.4}", v.sup, v.l2);
    println!("policy sup error {:.4}", eval_policy(t.actor(), &sol, &grid)?);
    println!("global: mean err {:.4} std err {:.4} KS {:.3}", dg.mean_error, dg.std_error, dg.ks);
    println!("local:  mean err {:.4} std err {:.4} KS {:.3}", dl.mean_error, dl.std_error, dl.ks);
    Ok(())
}
