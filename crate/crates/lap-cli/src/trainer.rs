//! Timed training driver: runs the epoch engine, writes the epoch log and
//! the best/last checkpoints.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use lap_core::net::NetworkConfig;
use lap_core::train::{EpochRecord, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config_file::{Timing, TrainFile};

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub log_path: PathBuf,
    pub best_path: PathBuf,
    pub last_path: PathBuf,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// One epoch-log line: `epoch train_loss val_loss lr seconds`.
pub fn log_line(r: &EpochRecord, seconds: f64) -> String {
    format!(
        "{} {:.9e} {:.9e} {:.9e} {:.3}\n",
        r.epoch, r.train_loss, r.val_loss, r.lr, seconds
    )
}

pub fn run_training(
    net_cfg: &NetworkConfig,
    file: &TrainFile,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    let log_path = out_dir.join("train_log.txt");
    let best_path = out_dir.join("best.ckpt");
    let last_path = out_dir.join("last.ckpt");

    let mut trainer = Trainer::new(net_cfg, file.settings, file.data)?;
    let mut log = String::new();
    let mut records = Vec::with_capacity(file.settings.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;

    for _ in 0..file.settings.epochs {
        let start = Instant::now();
        let record = trainer.run_epoch()?;
        let seconds = match file.timing {
            Timing::Wall => start.elapsed().as_secs_f64(),
            Timing::None => 0.0,
        };
        log.push_str(&log_line(&record, seconds));
        log::info!(
            "epoch {:>3}: train {:.6e} val {:.6e} (final stack {:.6e}) lr {:.3e} [{:.2}s]",
            record.epoch,
            record.train_loss,
            record.val_loss,
            record.val_loss_final_stack,
            record.lr,
            seconds
        );
        if record.val_loss < best_val {
            best_val = record.val_loss;
            best_epoch = record.epoch;
            Checkpoint::capture(trainer.net(), record.epoch as u32, trainer.shuffle_rng())
                .save(&best_path)?;
        }
        Checkpoint::capture(trainer.net(), record.epoch as u32, trainer.shuffle_rng())
            .save(&last_path)?;
        records.push(record);
    }
    fs::write(&log_path, &log).with_context(|| format!("writing {}", log_path.display()))?;
    Ok(TrainOutcome {
        records,
        log_path,
        best_path,
        last_path,
        best_epoch,
        best_val_loss: best_val,
    })
}
