//! Minibatch variant: shuffled minibatches, Hutchinson score losses and a
//! Langevin refresh every 50 outer steps.
//!
//!     cargo run --release --example train_minibatch -- [steps] [batch] [minibatch] [seed]

use std::time::Instant;

use mfcg::eval::{eval_distribution, eval_value, GridSpec};
use mfcg::{Algorithm, TrainConfig, Trainer};

fn main() -> mfcg::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut next = |default: u64| args.next().map_or(default, |s| s.parse().expect("integer argument"));
    let steps = next(1000);
    let batch = next(1024) as usize;
    let minibatch = next(128) as usize;
    let seed = next(0);

    let cfg = TrainConfig {
        steps,
        batch_size: batch,
        minibatch_size: minibatch,
        seed,
        ..TrainConfig::new(Algorithm::Minibatch)
    };
    let sol = cfg.lq.analytical_solution()?;
    let grid = GridSpec::around_limit(&sol);
    let mut t = Trainer::new(cfg)?;
    let start = Instant::now();
    t.run(|_, m| {
        if (m.step + 1) % (steps / 20).max(1) == 0 {
            println!(
                "step {:>6}  critic {:.3e}  actor {:+.3e}  means {:+.4}/{:+.4}  vars {:.4}/{:.4}  {:.1}s",
                m.step + 1,
                m.critic_loss,
                m.actor_loss,
                m.mean_global,
                m.mean_local,
                m.var_global,
                m.var_local,
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    let c = t.counters();
    println!(
        "updates: critic {} actor {} score {}, Langevin refreshes {}",
        c.critic_updates, c.actor_updates, c.score_updates, c.langevin_refreshes
    );
    let (g, l) = t.particles();
    let (dg, dl) = (eval_distribution(g, &sol)?, eval_distribution(l, &sol)?);
    println!("value sup error {:.4}", eval_value(&t.critics().critic, &sol, &grid).sup);
    println!("global: mean err {:.4} std err {:.4}", dg.mean_error, dg.std_error);
    println!("local:  mean err {:.4} std err {:.4}", dl.mean_error, dl.std_error);
    Ok(())
}
