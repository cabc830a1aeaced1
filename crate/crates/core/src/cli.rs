//! Command line front end: `oracle`, `train`, `eval` and `sweep`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! divergence, 3 I/O or file format error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::{aggregate_runs, evaluate_run, write_eval_csv, GridSpec, MetricsReport};
use crate::lq::LqParams;
use crate::train::{latest_checkpoint, train_to_dir, Algorithm, RunDir, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "mfcg", version, about = "Actor-critic training for mean field control games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the closed-form benchmark solution as JSON.
    Oracle {
        /// JSON file with either benchmark parameters or a full training config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one run into a run directory.
    Train {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a run directory against the benchmark solution.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// Evaluation grid as lo:hi:step (default m ± 4 limit std, step 0.01).
        #[arg(long)]
        grid: Option<GridSpec>,
        /// Output CSV (default <run>/eval.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate several seeds, then aggregate.
    Sweep {
        #[command(flatten)]
        job: JobArgs,
        /// Number of seeds.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        grid: Option<GridSpec>,
        /// Directory receiving seed_<s>/ runs and sweep.json.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct JobArgs {
    #[arg(long)]
    algo: Option<Algorithm>,
    /// JSON training config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl JobArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => TrainConfig::default(),
        };
        if let Some(a) = self.algo {
            cfg.algorithm = a;
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)?;
    TrainConfig::from_json(&text).map_err(|e| match e {
        Error::Json(e) if e.is_data() || e.is_syntax() || e.is_eof() => {
            Error::Config(format!("{}: {e}", path.display()))
        }
        other => other,
    })
}

fn oracle_params(path: Option<&Path>) -> Result<LqParams> {
    let Some(path) = path else {
        return Ok(LqParams::default());
    };
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<LqParams>(&text) {
        Ok(p) => Ok(p),
        Err(_) => Ok(read_config(path)?.lq),
    }
}

fn oracle(path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let p = oracle_params(path)?;
    p.validate()?;
    let sol = p.analytical_solution()?;
    let grid = GridSpec::around_limit(&sol);
    let doc = json!({
        "params": p,
        "gamma2": sol.gamma2,
        "gamma1": sol.gamma1,
        "gamma0": sol.gamma0,
        "m": sol.m,
        "limit_mean": sol.limit_mean,
        "limit_variance": sol.limit_variance,
        "limit_std": sol.limit_std(),
        "control_correction": sol.control_correction(&p),
        "default_grid": grid,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn evaluate(run_dir: &Path, grid: Option<GridSpec>, csv: Option<&Path>) -> Result<MetricsReport> {
    let run = RunDir::new(run_dir);
    let cfg = run.read_config()?;
    let sol = cfg.lq.analytical_solution()?;
    let grid = grid.unwrap_or_else(|| GridSpec::around_limit(&sol));
    let ck = latest_checkpoint(&run)?;
    let report = evaluate_run(&ck, &run.read_particles("global")?, &run.read_particles("local")?, &sol, &grid)?;
    let path = csv.map_or_else(|| run.eval(), Path::to_path_buf);
    let mut f = BufWriter::new(File::create(path)?);
    write_eval_csv(&mut f, &ck.critic()?, &ck.actor()?, &sol, &grid)?;
    f.flush()?;
    Ok(report)
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Oracle { config } => oracle(config.as_deref(), out),
        Command::Train { job, seed, out: dir } => {
            let mut cfg = job.config()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            writeln!(err, "training {} for {} steps into {}", cfg.algorithm, cfg.steps, dir.display())?;
            let t = train_to_dir(cfg, &dir)?;
            let (mg, ml) = t.means();
            writeln!(out, "{}", json!({ "run": dir, "steps": t.current_step(), "mean_global": mg, "mean_local": ml }))?;
            Ok(())
        }
        Command::Eval { run, grid, out: csv } => {
            let report = evaluate(&run, grid, csv.as_deref())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(())
        }
        Command::Sweep { job, seeds, first_seed, grid, out: dir } => {
            if seeds == 0 {
                return Err(Error::Usage("--seeds must be at least 1".into()));
            }
            let base = job.config()?;
            let mut reports = Vec::new();
            for seed in first_seed..first_seed + seeds {
                let run = dir.join(format!("seed_{seed}"));
                writeln!(err, "seed {seed}: {}", run.display())?;
                train_to_dir(TrainConfig { seed, ..base.clone() }, &run)?;
                reports.push(evaluate(&run, grid, None)?);
            }
            let agg = aggregate_runs(&reports)?;
            let text = serde_json::to_string_pretty(&agg)?;
            fs::write(dir.join("sweep.json"), &text)?;
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let target: &mut dyn Write = if ok { out } else { err };
            let _ = write!(target, "{}", e.render());
            return if ok { 0 } else { 1 };
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("mfcg").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn oracle_defaults() {
        let (code, out, _) = call(&["oracle"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["m"].as_f64().unwrap() - 0.2409639).abs() < 1e-6);
        assert!((v["gamma2"].as_f64().unwrap() - 0.5940972).abs() < 1e-6);
    }

    #[test]
    fn usage_errors() {
        let (code, _, err) = call(&["oracle", "--bogus"]);
        assert_eq!(code, 1);
        assert!(err.contains("Usage"));
        assert_eq!(call(&["train", "--algo", "ppo", "--out", "x"]).0, 1);
        assert_eq!(call(&[]).0, 1);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert_eq!(call(&["eval", "--run", missing.to_str().unwrap()]).0, 3);
        assert_eq!(call(&["oracle", "--config", missing.to_str().unwrap()]).0, 3);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"batch_size": 10, "minibatch_size": 3, "algorithm": "minibatch"}"#).unwrap();
        let out = dir.path().join("run");
        let (code, _, err) = call(&["train", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 1, "{err}");
        fs::write(&path, r#"{"unknown_key": 1}"#).unwrap();
        assert_eq!(call(&["train", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 1);
    }
}
