//! Mini-batch Adam training with validation-based early stopping.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::claims::{aggregate_events, PatientProfile};
use crate::error::{Error, Result};
use crate::metrics::Shuffle;
use crate::nn::{Adam, ParamSet};

use super::inputs::{build_channel_inputs, ChannelInputs, EmbeddingSet};
use super::{ChannelModel, ModelConfig};

/// Precomputed per-patient inputs, shared across trainings of one
/// configuration family.
pub type InputCache = BTreeMap<String, ChannelInputs>;

/// Build the input cache for every profile at the model's granularity.
pub fn build_input_cache(
    profiles: &[PatientProfile],
    tables: &EmbeddingSet,
    config: &ModelConfig,
) -> Result<InputCache> {
    let mut cache = InputCache::new();
    for p in profiles {
        let aggregated;
        let at_gran = if p.granularity == config.granularity {
            p
        } else {
            aggregated = aggregate_events(p, config.granularity);
            &aggregated
        };
        cache.insert(p.patient_id.clone(), build_channel_inputs(at_gran, tables, config)?);
    }
    Ok(cache)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Coupled L2 penalty added to gradients before the update; 0 disables.
    pub weight_decay: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 40,
            batch_size: 32,
            lr: 0.01,
            patience: 5,
            seed: 7,
            grad_clip: 5.0,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainLog {
    /// (train mse, val mse) per epoch, in log-dollar space.
    pub epochs: Vec<(f64, f64)>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn mean_loss(model: &ChannelModel, cache: &InputCache, ids: &[String]) -> Result<f64> {
    let mut sum = 0.0;
    for id in ids {
        let inputs = cache
            .get(id)
            .ok_or_else(|| Error::Invalid(format!("no inputs for patient {id}")))?;
        sum += model.loss_only(inputs)?;
    }
    Ok(sum / ids.len().max(1) as f64)
}

/// Train in place on one shuffle's train/val split. Deterministic given
/// the settings seed; epoch order is a seeded permutation, gradients are
/// accumulated in batch order.
pub fn train(
    model: &mut ChannelModel,
    cache: &InputCache,
    split: &Shuffle,
    settings: &TrainSettings,
) -> Result<TrainLog> {
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Invalid("train and validation splits must be nonempty".into()));
    }
    // start the head at the mean log target of the training split
    let mean_target = split
        .train
        .iter()
        .filter_map(|id| cache.get(id))
        .map(ChannelInputs::target_log)
        .sum::<f64>()
        / split.train.len() as f64;
    model.set_head_bias(mean_target);

    let mut opt = Adam::new(&model.params, settings.lr);
    let mut grads = model.params.zero_grads();
    let mut best: Option<(f64, ParamSet, usize)> = None;
    let mut log = TrainLog { epochs: Vec::new(), best_epoch: 0, stopped_early: false };
    let mut since_best = 0usize;

    for epoch in 0..settings.epochs {
        let mut order = split.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let mut train_loss_sum = 0.0;
        for batch in order.chunks(settings.batch_size) {
            grads.zero();
            for id in batch {
                let inputs = cache
                    .get(id)
                    .ok_or_else(|| Error::Invalid(format!("no inputs for patient {id}")))?;
                train_loss_sum += model.loss_and_grads(inputs, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            if settings.weight_decay > 0.0 {
                for id in model.params.ids().collect::<Vec<_>>() {
                    let p = model.params.get(id).data().to_vec();
                    for (g, w) in grads.get_mut(id).data_mut().iter_mut().zip(p.iter()) {
                        *g += settings.weight_decay * w;
                    }
                }
            }
            if settings.grad_clip > 0.0 {
                let norm = grads.global_norm();
                if norm > settings.grad_clip {
                    grads.scale(settings.grad_clip / norm);
                }
            }
            opt.step(&mut model.params, &grads);
        }
        let train_loss = train_loss_sum / split.train.len() as f64;
        let val_loss = mean_loss(model, cache, &split.val)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss at epoch {epoch}: train {train_loss}, val {val_loss}"
            )));
        }
        log.epochs.push((train_loss, val_loss));

        let improved = best.as_ref().map(|(b, _, _)| val_loss < *b).unwrap_or(true);
        if improved {
            best = Some((val_loss, model.params.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > settings.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, params, epoch)) = best {
        model.params = params;
        log.best_epoch = epoch;
    }
    Ok(log)
}

/// Predict every listed patient.
pub fn predict_ids(
    model: &ChannelModel,
    cache: &InputCache,
    ids: &[String],
) -> Result<Vec<(String, f64, f64)>> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let inputs = cache
            .get(id)
            .ok_or_else(|| Error::Invalid(format!("no inputs for patient {id}")))?;
        let p = model.predict(inputs)?;
        out.push((id.clone(), inputs.target_cost, p.predicted_cost));
    }
    Ok(out)
}
