use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::trainer::{MetricsRow, Trainer};
use crate::cipher::SymbolId;
use crate::error::Result;

/// Pool sizes of the generalization sweep.
pub const POOL_SIZES: [usize; 10] = [10, 100, 250, 500, 750, 1000, 1500, 2500, 5000, 10000];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralizationRun {
    /// `None` is the unlimited (fresh cipher per example) setting.
    pub pool_size: Option<usize>,
    pub history: Vec<MetricsRow>,
    pub final_val_acc: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CurveRow {
    pool_size: String,
    step: u64,
    loss: f64,
    val_acc: Option<f64>,
}

/// Train one model per pool size with everything else fixed and record the
/// training loss and validation accuracy (on unseen ciphers) curves.
/// Per-run outputs go to `out_dir/pool-<size>/`, the combined curves to
/// `out_dir/generalization.csv`.
pub fn run_generalization_suite(
    pool_sizes: &[Option<usize>],
    base: &TrainConfig,
    train: &[Vec<SymbolId>],
    validation: &[Vec<SymbolId>],
    out_dir: Option<&Path>,
) -> Result<Vec<GeneralizationRun>> {
    let mut runs = Vec::with_capacity(pool_sizes.len());
    for &pool_size in pool_sizes {
        let label = pool_size.map_or("unlimited".to_owned(), |k| k.to_string());
        info!("generalization run with pool size {label}");
        let config = TrainConfig { cipher_pool_size: pool_size, ..base.clone() };
        let mut trainer = Trainer::new(config, train.to_vec(), validation)?;
        if let Some(dir) = out_dir {
            trainer = trainer.with_output(&dir.join(format!("pool-{label}")))?;
        }
        let summary = trainer.run()?;
        runs.push(GeneralizationRun { pool_size, history: summary.history, final_val_acc: summary.final_val_acc });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("generalization.csv"))?;
        for run in &runs {
            for row in &run.history {
                w.serialize(CurveRow {
                    pool_size: run.pool_size.map_or("unlimited".to_owned(), |k| k.to_string()),
                    step: row.step,
                    loss: row.loss,
                    val_acc: row.val_acc,
                })?;
            }
        }
        w.flush()?;
    }
    Ok(runs)
}
