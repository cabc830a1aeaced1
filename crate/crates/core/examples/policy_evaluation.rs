//! Critic-only training of the optimal feedback against frozen equilibrium
//! means, compared with the benchmark value and with the exact value of the
//! frozen-means problem.
//!
//!     cargo run --release --example policy_evaluation -- [steps] [batch]

use std::time::Instant;

use mfcg::eval::{eval_value, eval_value_fn, GridSpec};
use mfcg::lq::FrozenPolicyValue;
use mfcg::{LqParams, TrainConfig, Trainer};

fn main() -> mfcg::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(20_000, |s| s.parse().expect("steps"));
    let batch = args.next().map_or(1024, |s| s.parse().expect("batch size"));

    let p = LqParams::default();
    let sol = p.analytical_solution()?;
    let grid = GridSpec::around_limit(&sol);
    let action_std = 0.05;
    let frozen = FrozenPolicyValue::new(&p, sol.m, sol.m, -2.0 * sol.gamma2, -sol.gamma1, action_std)?;
    let floor = eval_value_fn(|x| frozen.value(x), &sol, &grid);
    println!("frozen-means value vs benchmark value: sup {:.4}  rms {:.4}", floor.sup, floor.l2);

    let cfg = TrainConfig { steps, batch_size: batch, ..TrainConfig::default() };
    let mut t = Trainer::policy_evaluation(cfg, -2.0 * sol.gamma2, -sol.gamma1, action_std, (sol.m, sol.m))?;
    let start = Instant::now();
    t.run(|t, m| {
        if (m.step + 1) % (steps / 10).max(1) == 0 {
            let e = eval_value(&t.critics().critic, &sol, &grid);
            let own = eval_value_fn(|x| -t.critics().critic.eval_scalar(x) - frozen.value(x) + sol.value(x), &sol, &grid);
            println!(
                "step {:>6}  critic loss {:.3e}  sup vs v {:.4}  sup vs frozen value {:.4}  {:.1}s",
                m.step + 1,
                m.critic_loss,
                e.sup,
                own.sup,
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    Ok(())
}
