//! On-disk layout of a training run:
//!
//! ```text
//! config.json  manifest.json  metrics.csv
//! checkpoints/step_<n>.json
//! particles_global.csv  particles_local.csv
//! eval.csv
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{StepMetrics, TrainCheckpoint, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::score::EmpiricalMeasure;

pub const METRICS_HEADER: &str = "step,lr_multiplier,score_loss_global,score_loss_local,critic_loss,actor_loss,mean_global,mean_local,var_global,var_local";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub algorithm: String,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub steps_completed: u64,
    /// `running`, `completed` or `diverged`.
    pub status: String,
    pub diverged_at: Option<u64>,
    pub message: Option<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint(&self, step: u64) -> PathBuf {
        self.checkpoints().join(format!("step_{step}.json"))
    }

    pub fn particles(&self, which: &str) -> PathBuf {
        self.root.join(format!("particles_{which}.csv"))
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval.csv")
    }

    pub fn read_config(&self) -> Result<TrainConfig> {
        read_json(&self.config())
    }

    pub fn read_manifest(&self) -> Result<Manifest> {
        read_json(&self.manifest())
    }

    pub fn read_checkpoint(&self, step: u64) -> Result<TrainCheckpoint> {
        read_json(&self.checkpoint(step))
    }

    pub fn read_particles(&self, which: &str) -> Result<EmpiricalMeasure> {
        let path = self.particles(which);
        EmpiricalMeasure::read_csv(BufReader::new(File::open(&path)?)).map_err(|e| with_path(e, &path))
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Json(e) => Error::Parse { path: path.display().to_string(), reason: e.to_string() },
        Error::Parse { reason, .. } => Error::Parse { path: path.display().to_string(), reason },
        other => other,
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| with_path(Error::Json(e), path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn write_metrics_header<W: Write>(out: &mut W) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    Ok(())
}

pub fn write_metrics_row<W: Write>(out: &mut W, m: &StepMetrics) -> Result<()> {
    write!(out, "{}", m.step)?;
    for v in m.values() {
        write!(out, ",{v}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<StepMetrics>> {
    let bad = |reason: String| Error::Parse { path: path.display().to_string(), reason };
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != METRICS_HEADER {
                return Err(bad("unexpected header".into()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(bad(format!("line {}: expected 10 fields", n + 1)));
        }
        let step = fields[0].parse::<u64>().map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        let mut v = [0.0; 9];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        }
        rows.push(StepMetrics {
            step,
            lr_multiplier: v[0],
            score_loss_global: v[1],
            score_loss_local: v[2],
            critic_loss: v[3],
            actor_loss: v[4],
            mean_global: v[5],
            mean_local: v[6],
            var_global: v[7],
            var_local: v[8],
        });
    }
    Ok(rows)
}

/// Highest-numbered checkpoint in the run directory.
pub fn latest_checkpoint(run: &RunDir) -> Result<TrainCheckpoint> {
    let mut best: Option<u64> = None;
    for entry in fs::read_dir(run.checkpoints())? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name.strip_prefix("step_").and_then(|s| s.strip_suffix(".json")) {
            if let Ok(n) = n.parse::<u64>() {
                best = best.max(Some(n));
            }
        }
    }
    let step = best.ok_or_else(|| Error::Parse {
        path: run.checkpoints().display().to_string(),
        reason: "no checkpoints".into(),
    })?;
    run.read_checkpoint(step)
}

/// Trains with `cfg`, streaming metrics and checkpoints into `dir`.
///
/// Checkpoints are written every `checkpoint_every` steps and at the end. On
/// divergence the manifest records the failing step, earlier checkpoints are
/// kept and the error is returned.
pub fn train_to_dir(cfg: TrainConfig, dir: &Path) -> Result<Trainer> {
    let run = RunDir::new(dir);
    fs::create_dir_all(run.checkpoints())?;
    write_json(&run.config(), &cfg)?;
    let mut manifest = Manifest {
        algorithm: cfg.algorithm.to_string(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: now(),
        finished_unix: None,
        steps_completed: 0,
        status: "running".into(),
        diverged_at: None,
        message: None,
    };
    write_json(&run.manifest(), &manifest)?;
    let mut metrics = BufWriter::new(File::create(run.metrics())?);
    write_metrics_header(&mut metrics)?;

    let every = cfg.checkpoint_every;
    let mut trainer = Trainer::new(cfg)?;
    let result = trainer.run(|t, m| {
        write_metrics_row(&mut metrics, m)?;
        let done = t.current_step();
        if every > 0 && done % every == 0 {
            write_json(&run.checkpoint(done), &t.checkpoint())?;
        }
        Ok(())
    });
    metrics.flush()?;
    drop(metrics);

    let (g, l) = trainer.particles();
    g.write_csv(BufWriter::new(File::create(run.particles("global"))?))?;
    l.write_csv(BufWriter::new(File::create(run.particles("local"))?))?;
    manifest.steps_completed = trainer.current_step();
    manifest.finished_unix = Some(now());
    match result {
        Ok(()) => {
            let last = run.checkpoint(trainer.current_step());
            if !last.exists() {
                write_json(&last, &trainer.checkpoint())?;
            }
            manifest.status = "completed".into();
            write_json(&run.manifest(), &manifest)?;
            Ok(trainer)
        }
        Err(e) => {
            manifest.status = if matches!(e, Error::Diverged { .. }) { "diverged" } else { "failed" }.into();
            if let Error::Diverged { step, .. } = e {
                manifest.diverged_at = Some(step);
            }
            manifest.message = Some(e.to_string());
            write_json(&run.manifest(), &manifest)?;
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{Algorithm, HiddenWidths};

    #[test]
    fn run_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = TrainConfig::new(Algorithm::Batch);
        cfg.steps = 5;
        cfg.batch_size = 4;
        cfg.checkpoint_every = 2;
        cfg.hidden = HiddenWidths { actor: 3, critic: 3, score: 3 };
        cfg.langevin.particles = 10;
        cfg.langevin.iterations = 2;
        let trainer = train_to_dir(cfg.clone(), dir.path()).unwrap();
        let run = RunDir::new(dir.path());
        assert_eq!(run.read_config().unwrap(), cfg);
        let manifest = run.read_manifest().unwrap();
        assert_eq!((manifest.status.as_str(), manifest.steps_completed), ("completed", 5));
        for step in [2, 4, 5] {
            assert!(run.checkpoint(step).exists());
        }
        assert_eq!(latest_checkpoint(&run).unwrap(), trainer.checkpoint());
        let rows = read_metrics_csv(&run.metrics()).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(run.read_particles("global").unwrap(), *trainer.particles().0);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let m = StepMetrics {
            step: 7,
            lr_multiplier: 0.1 + 0.2,
            score_loss_global: -1.0 / 3.0,
            score_loss_local: 1e-300,
            critic_loss: 2.5e-7,
            actor_loss: -0.0,
            mean_global: std::f64::consts::PI,
            mean_local: 1.0,
            var_global: 123_456_789.123_456_79,
            var_local: f64::MIN_POSITIVE,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut f = File::create(&path).unwrap();
        write_metrics_header(&mut f).unwrap();
        write_metrics_row(&mut f, &m).unwrap();
        drop(f);
        assert_eq!(read_metrics_csv(&path).unwrap(), vec![m]);
    }
}
