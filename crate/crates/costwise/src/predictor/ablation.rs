//! Ablation grid: {learning mode} x {embedding mode} x {attention} x
//! {granularity}, trained and evaluated per shuffle.
//!
//! Cells are independent, so (cell, shuffle) tasks may run in parallel;
//! every task derives its own seed from its grid position, which makes the
//! results identical in serial and parallel runs.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::claims::{Granularity, PatientProfile};
use crate::error::{Error, Result};
use crate::metrics::{mape, PredictionRow, Shuffle};

use super::inputs::EmbeddingSet;
use super::train::{build_input_cache, predict_ids, train, InputCache, TrainSettings};
use super::{ChannelModel, EmbeddingMode, LearningMode, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AblationCell {
    pub mode: LearningMode,
    pub embedding: EmbeddingMode,
    pub attention: bool,
    pub granularity: Granularity,
}

impl AblationCell {
    pub fn label(&self) -> String {
        format!(
            "{}+{}+{}+{}",
            self.mode.as_str(),
            self.embedding.as_str(),
            if self.attention { "attention" } else { "no_attention" },
            self.granularity.as_str()
        )
    }
}

/// The full 2x2x2 grid at one granularity.
pub fn full_grid(granularity: Granularity) -> Vec<AblationCell> {
    let mut cells = Vec::new();
    for mode in [LearningMode::ChannelWise, LearningMode::SingleChannel] {
        for embedding in [EmbeddingMode::Pretrained, EmbeddingMode::Trainable] {
            for attention in [true, false] {
                cells.push(AblationCell { mode, embedding, attention, granularity });
            }
        }
    }
    cells
}

#[derive(Clone, Debug)]
pub enum AblationOutcome {
    Done {
        test_mape: f64,
        predictions: Vec<PredictionRow>,
        best_epoch: usize,
    },
    /// The cell failed; the grid run continues.
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: AblationCell,
    pub shuffle: usize,
    pub outcome: AblationOutcome,
}

impl CellResult {
    pub fn test_mape(&self) -> Option<f64> {
        match &self.outcome {
            AblationOutcome::Done { test_mape, .. } => Some(*test_mape),
            AblationOutcome::Failed(_) => None,
        }
    }
}

fn cache_key(cell: &AblationCell) -> (LearningMode, EmbeddingMode, Granularity) {
    (cell.mode, cell.embedding, cell.granularity)
}

fn run_one(
    cell: &AblationCell,
    cell_idx: usize,
    shuffle: &Shuffle,
    tables: &EmbeddingSet,
    cache: &InputCache,
    base: &ModelConfig,
    settings: &TrainSettings,
) -> AblationOutcome {
    let config = ModelConfig {
        mode: cell.mode,
        embedding: cell.embedding,
        attention: cell.attention,
        granularity: cell.granularity,
        seed: base
            .seed
            .wrapping_add(1 + cell_idx as u64 * 1009 + shuffle.index as u64 * 9176),
        ..*base
    };
    let task_settings = TrainSettings {
        seed: settings.seed.wrapping_add(cell_idx as u64 * 131 + shuffle.index as u64),
        ..*settings
    };
    let attempt = || -> Result<AblationOutcome> {
        let mut model = ChannelModel::new(config, tables)?;
        let log = train(&mut model, cache, shuffle, &task_settings)?;
        let predictions = predict_ids(&model, cache, &shuffle.test)?;
        let actuals: Vec<f64> = predictions.iter().map(|r| r.1).collect();
        let preds: Vec<f64> = predictions.iter().map(|r| r.2).collect();
        let m = mape(&actuals, &preds)?;
        Ok(AblationOutcome::Done {
            test_mape: m.value,
            predictions,
            best_epoch: log.best_epoch,
        })
    };
    match attempt() {
        Ok(outcome) => outcome,
        Err(e) => AblationOutcome::Failed(e.to_string()),
    }
}

/// Run every (cell, shuffle) combination. `tables_by_granularity` must
/// cover each granularity the grid touches.
pub fn run_ablation(
    profiles: &[PatientProfile],
    tables_by_granularity: &BTreeMap<Granularity, EmbeddingSet>,
    cells: &[AblationCell],
    shuffles: &[Shuffle],
    base: &ModelConfig,
    settings: &TrainSettings,
    parallel: bool,
) -> Result<Vec<CellResult>> {
    if cells.is_empty() || shuffles.is_empty() {
        return Err(Error::Invalid("ablation needs at least one cell and one shuffle".into()));
    }
    // shared input caches per (mode, embedding, granularity); a cell whose
    // inputs cannot be built fails alone, the grid keeps going
    let mut caches: BTreeMap<_, std::result::Result<InputCache, String>> = BTreeMap::new();
    for cell in cells {
        let key = cache_key(cell);
        if caches.contains_key(&key) {
            continue;
        }
        let built = tables_by_granularity
            .get(&cell.granularity)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "no embedding tables for {} granularity",
                    cell.granularity.as_str()
                ))
            })
            .and_then(|tables| {
                let config = ModelConfig {
                    mode: cell.mode,
                    embedding: cell.embedding,
                    attention: cell.attention,
                    granularity: cell.granularity,
                    ..*base
                };
                build_input_cache(profiles, tables, &config)
            });
        caches.insert(key, built.map_err(|e| e.to_string()));
    }

    let tasks: Vec<(usize, &AblationCell, &Shuffle)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, cell)| shuffles.iter().map(move |s| (ci, cell, s)))
        .collect();
    let run = |(ci, cell, shuffle): &(usize, &AblationCell, &Shuffle)| -> CellResult {
        let outcome = match &caches[&cache_key(cell)] {
            Ok(cache) => {
                let tables = &tables_by_granularity[&cell.granularity];
                run_one(cell, *ci, shuffle, tables, cache, base, settings)
            }
            Err(msg) => AblationOutcome::Failed(msg.clone()),
        };
        CellResult { cell: **cell, shuffle: shuffle.index, outcome }
    };
    let results: Vec<CellResult> = if parallel {
        tasks.par_iter().map(run).collect()
    } else {
        tasks.iter().map(run).collect()
    };
    Ok(results)
}
