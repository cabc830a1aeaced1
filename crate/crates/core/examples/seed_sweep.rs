//! Short runs for several seeds written to run directories, evaluated from
//! their checkpoints and aggregated, as the `sweep` subcommand does.
//!
//!     cargo run --release --example seed_sweep -- [out_dir] [seeds] [steps]

use mfcg::eval::{aggregate_runs, evaluate_run, GridSpec, MetricsReport};
use mfcg::train::{latest_checkpoint, train_to_dir, RunDir};
use mfcg::{Algorithm, TrainConfig};

fn main() -> mfcg::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "target/seed_sweep".into());
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seeds"));
    let steps = args.next().map_or(50, |s| s.parse().expect("steps"));

    let base = TrainConfig { steps, batch_size: 256, checkpoint_every: 25, ..TrainConfig::new(Algorithm::Batch) };
    let sol = base.lq.analytical_solution()?;
    let grid = GridSpec::around_limit(&sol);
    let mut reports = Vec::new();
    for seed in 0..seeds {
        let dir = std::path::Path::new(&out).join(format!("seed_{seed}"));
        train_to_dir(TrainConfig { seed, ..base.clone() }, &dir)?;
        let run = RunDir::new(&dir);
        let ck = latest_checkpoint(&run)?;
        let report = evaluate_run(&ck, &run.read_particles("global")?, &run.read_particles("local")?, &sol, &grid)?;
        println!("seed {seed}: value sup {:.4}  policy sup {:.4}", report.value_sup, report.policy_sup);
        reports.push(report);
    }
    let agg = aggregate_runs(&reports)?;
    for (name, (m, s)) in MetricsReport::FIELDS.iter().zip(agg.mean.to_array().iter().zip(agg.std.to_array())) {
        println!("{name:>20}  {m:.4} ± {s:.4}");
    }
    Ok(())
}
