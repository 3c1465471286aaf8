//! Channel-wise cost model: per-channel BiGRU stacks fused through
//! attention into a dense output head, plus the single-channel and
//! one-channel-per-code ablation variants.
//!
//! The regression target is log(1 + next-year cost); predictions are
//! inverse-transformed and clamped at zero dollars.

mod ablation;
mod checkpoint;
mod inputs;
mod train;

pub use ablation::{full_grid, run_ablation, AblationCell, AblationOutcome, CellResult};
pub use checkpoint::{load_model, save_model};
pub use inputs::{build_channel_inputs, ChannelData, ChannelInputs, EmbeddingSet};
pub use train::{build_input_cache, predict_ids, train, InputCache, TrainLog, TrainSettings};

use chrono::NaiveDate;

use crate::claims::{ChannelKind, Granularity};
use crate::error::{Error, Result};
use crate::nn::{
    squared_error, AttnCache, Attention, BiGru, BiGruCache, Dense, EmbedLayer, GradSet, ParamSet,
};
use crate::Dollars;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum LearningMode {
    ChannelWise,
    SingleChannel,
    /// One channel per vocabulary code; only supported for tiny
    /// vocabularies (sparsity makes it useless at scale).
    PerCode,
}

impl LearningMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LearningMode::ChannelWise => "channel_wise",
            LearningMode::SingleChannel => "single_channel",
            LearningMode::PerCode => "per_code",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "channel_wise" | "channel-wise" => Ok(LearningMode::ChannelWise),
            "single_channel" | "single-channel" => Ok(LearningMode::SingleChannel),
            "per_code" | "per-code" => Ok(LearningMode::PerCode),
            other => Err(Error::Invalid(format!("unknown learning mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum EmbeddingMode {
    /// Frozen PV-DBOW event vectors (not counted as model parameters).
    Pretrained,
    /// A code-embedding layer learned jointly with the rest of the model.
    Trainable,
}

impl EmbeddingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EmbeddingMode::Pretrained => "pretrained",
            EmbeddingMode::Trainable => "trainable",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pretrained" => Ok(EmbeddingMode::Pretrained),
            "trainable" => Ok(EmbeddingMode::Trainable),
            other => Err(Error::Invalid(format!("unknown embedding mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub mode: LearningMode,
    pub embedding: EmbeddingMode,
    pub attention: bool,
    pub granularity: Granularity,
    /// embedding width m
    pub embed_dim: usize,
    /// GRU hidden width p (per direction)
    pub hidden: usize,
    /// attention score latent width q
    pub attn_latent: usize,
    /// attended output width r
    pub attended_dim: usize,
    /// BiGRU layers per channel
    pub layers: usize,
    /// events kept per channel (oldest truncated)
    pub seq_cap: usize,
    pub per_code_cap: usize,
    pub seed: u64,
    /// gradient steps when inferring a vector for an unseen event
    pub infer_steps: usize,
}

impl ModelConfig {
    pub fn new(mode: LearningMode, embedding: EmbeddingMode, attention: bool) -> Self {
        ModelConfig {
            mode,
            embedding,
            attention,
            granularity: Granularity::Day,
            embed_dim: 64,
            hidden: 32,
            attn_latent: 32,
            attended_dim: 64,
            layers: 2,
            seq_cap: 256,
            per_code_cap: 32,
            seed: 1,
            infer_steps: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 || self.hidden == 0 || self.attn_latent == 0 || self.attended_dim == 0
        {
            return Err(Error::Invalid("model dimensions must be positive".into()));
        }
        if self.layers == 0 || self.seq_cap == 0 {
            return Err(Error::Invalid("layers and seq_cap must be positive".into()));
        }
        Ok(())
    }

    /// Per-channel output width entering the fusion concat.
    pub fn channel_out_dim(&self) -> usize {
        if self.attention {
            self.attended_dim
        } else {
            2 * self.hidden
        }
    }
}

#[derive(Debug)]
struct ChannelStack {
    kind: ChannelKind,
    in_dim: usize,
    embed: Option<EmbedLayer>,
    layers: Vec<BiGru>,
    attn: Option<Attention>,
}

/// The assembled predictor. Parameters live in a flat named set so the
/// optimizer, checkpointing, and gradient checking can walk them.
#[derive(Debug)]
pub struct ChannelModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    stacks: Vec<ChannelStack>,
    head: Dense,
    /// Fusion concatenation order; serialized with checkpoints and
    /// validated on load.
    pub channel_order: Vec<ChannelKind>,
    /// Code vocabulary per trainable-embedding stack (None otherwise).
    trainable_vocabs: Vec<Option<Vec<String>>>,
}

/// Per-channel attention weights over event days, summing to one within
/// each channel.
pub type AttentionExport = Vec<(ChannelKind, Vec<(NaiveDate, f64)>)>;

/// Model output for one patient.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub patient_id: String,
    /// Dollars, clamped at zero.
    pub predicted_cost: Dollars,
    /// Head output in log space, before the inverse transform.
    pub raw_output: f64,
}

pub(crate) struct StackCache {
    step_inputs: Vec<Vec<f64>>,
    layer_states: Vec<Vec<Vec<f64>>>,
    layer_caches: Vec<BiGruCache>,
    attn_cache: Option<AttnCache>,
}

pub struct ModelCache {
    stacks: Vec<StackCache>,
    pub fused: Vec<f64>,
    pub raw: f64,
}

/// 2 directions x 3 gates x (input, recurrent, bias) parameters.
pub fn bigru_param_count(in_dim: usize, hidden: usize) -> usize {
    2 * 3 * (in_dim * hidden + hidden * hidden + hidden)
}

impl ChannelModel {
    /// Build a fresh model. Tables supply frozen vectors in pretrained
    /// mode and the code vocabularies in trainable mode.
    pub fn new(config: ModelConfig, tables: &EmbeddingSet) -> Result<Self> {
        config.validate()?;
        tables.validate()?;
        if tables.granularity() != config.granularity {
            return Err(Error::Invalid(format!(
                "embedding tables are at {} granularity, model expects {}",
                tables.granularity().as_str(),
                config.granularity.as_str()
            )));
        }
        if config.embedding == EmbeddingMode::Pretrained && tables.dim() != config.embed_dim {
            return Err(Error::Invalid(format!(
                "embedding tables have dimension {}, model expects {}",
                tables.dim(),
                config.embed_dim
            )));
        }
        let specs: Vec<(ChannelKind, usize, Option<&crate::embedding::EmbeddingTable>)> =
            match config.mode {
                LearningMode::ChannelWise => vec![
                    (ChannelKind::Dx, config.embed_dim + 1, Some(&tables.dx)),
                    (ChannelKind::Px, config.embed_dim + 1, Some(&tables.px)),
                    (ChannelKind::Rx, config.embed_dim + 1, Some(&tables.rx)),
                    (ChannelKind::Cost, 3, None),
                ],
                LearningMode::SingleChannel => {
                    vec![(ChannelKind::All, config.embed_dim + 2, Some(&tables.all))]
                }
                LearningMode::PerCode => {
                    let vocab = tables.all.vocab_size();
                    if vocab > config.per_code_cap {
                        return Err(Error::Invalid(format!(
                            "one-channel-per-code needs a vocabulary of at most {} codes, found {}",
                            config.per_code_cap, vocab
                        )));
                    }
                    (0..vocab).map(|_| (ChannelKind::All, 2, None)).collect()
                }
            };

        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut stacks = Vec::with_capacity(specs.len());
        let mut trainable_vocabs = Vec::with_capacity(specs.len());
        for (i, (kind, in_dim, table)) in specs.into_iter().enumerate() {
            let name = format!("ch{i}.{}", kind.as_str());
            let embed = match (config.embedding, table) {
                (EmbeddingMode::Trainable, Some(t)) => Some(EmbedLayer::new(
                    &mut params,
                    &mut rng,
                    &format!("{name}.embed"),
                    t.vocab_size(),
                    config.embed_dim,
                )),
                _ => None,
            };
            trainable_vocabs.push(match (config.embedding, table) {
                (EmbeddingMode::Trainable, Some(t)) => Some(t.codes.clone()),
                _ => None,
            });
            let mut layers = Vec::with_capacity(config.layers);
            for l in 0..config.layers {
                let layer_in = if l == 0 { in_dim } else { 2 * config.hidden };
                layers.push(BiGru::new(
                    &mut params,
                    &mut rng,
                    &format!("{name}.layer{l}"),
                    layer_in,
                    config.hidden,
                ));
            }
            let attn = config.attention.then(|| {
                Attention::new(
                    &mut params,
                    &mut rng,
                    &format!("{name}.attn"),
                    2 * config.hidden,
                    config.attn_latent,
                    config.attended_dim,
                )
            });
            stacks.push(ChannelStack { kind, in_dim, embed, layers, attn });
        }
        let fusion = stacks.len() * config.channel_out_dim();
        let head = Dense::new(&mut params, &mut rng, "head", fusion, 1);
        let channel_order = stacks.iter().map(|s| s.kind).collect();
        Ok(ChannelModel { config, params, stacks, head, channel_order, trainable_vocabs })
    }

    pub fn fusion_width(&self) -> usize {
        self.stacks.len() * self.config.channel_out_dim()
    }

    pub fn n_channels(&self) -> usize {
        self.stacks.len()
    }

    /// Exact count of trainable scalars. Frozen pretrained lookup tables
    /// are not model parameters and never enter this count.
    pub fn count_parameters(&self) -> usize {
        self.params.scalar_count()
    }

    pub(crate) fn trainable_vocab(&self, i: usize) -> Option<&[String]> {
        self.trainable_vocabs[i].as_deref()
    }

    /// Set the head bias; used to start training at the cohort mean.
    pub fn set_head_bias(&mut self, b: f64) {
        self.params.get_mut(self.head.b).data_mut()[0] = b;
    }

    pub fn forward_cached(&self, inputs: &ChannelInputs) -> Result<ModelCache> {
        forward_parts(&self.config, &self.stacks, &self.head, &self.params, inputs)
    }

    /// Reverse pass from dL/d(raw head output).
    pub fn backward(
        &self,
        inputs: &ChannelInputs,
        cache: &ModelCache,
        d_raw: f64,
        grads: &mut GradSet,
    ) {
        backward_parts(
            &self.config,
            &self.stacks,
            &self.head,
            &self.params,
            inputs,
            cache,
            d_raw,
            grads,
        );
    }

    /// Central finite-difference check of the analytic gradient at this
    /// patient's loss, over `n_samples` random parameter coordinates.
    pub fn gradient_check(
        &mut self,
        inputs: &ChannelInputs,
        n_samples: usize,
        seed: u64,
        eps: f64,
    ) -> Result<crate::nn::GradCheckReport> {
        let mut grads = self.params.zero_grads();
        self.loss_and_grads(inputs, &mut grads)?;
        let ChannelModel { config, params, stacks, head, .. } = self;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = crate::nn::sample_coordinates(params, &mut rng, n_samples);
        let target = inputs.target_log();
        let report = crate::nn::check_gradients(
            params,
            &grads,
            |ps| {
                let cache = forward_parts(config, stacks, head, ps, inputs)
                    .expect("forward succeeded once with these inputs");
                squared_error(cache.raw, target).0
            },
            &samples,
            eps,
        );
        Ok(report)
    }

    /// Loss and gradient of one patient: squared error in log space.
    pub fn loss_and_grads(
        &self,
        inputs: &ChannelInputs,
        grads: &mut GradSet,
    ) -> Result<f64> {
        let cache = self.forward_cached(inputs)?;
        let (loss, d_raw) = squared_error(cache.raw, inputs.target_log());
        self.backward(inputs, &cache, d_raw, grads);
        Ok(loss)
    }

    pub fn loss_only(&self, inputs: &ChannelInputs) -> Result<f64> {
        let cache = self.forward_cached(inputs)?;
        Ok(squared_error(cache.raw, inputs.target_log()).0)
    }

    /// The fused per-patient representation entering the output head (the
    /// concatenated per-channel vectors); exported for external plotting.
    pub fn fused_representation(&self, inputs: &ChannelInputs) -> Result<Vec<f64>> {
        Ok(self.forward_cached(inputs)?.fused)
    }

    pub fn predict(&self, inputs: &ChannelInputs) -> Result<Prediction> {
        let cache = self.forward_cached(inputs)?;
        Ok(Prediction {
            patient_id: inputs.patient_id.clone(),
            predicted_cost: raw_to_dollars(cache.raw),
            raw_output: cache.raw,
        })
    }

    /// Attention weights per channel: (event day, weight) pairs summing to
    /// one. Sentinel (empty) channels are skipped; a model built without
    /// attention has nothing to export.
    pub fn export_attention(&self, inputs: &ChannelInputs) -> Result<AttentionExport> {
        if !self.config.attention {
            return Err(Error::Invalid(
                "model was built without an attention layer; no weights to export".into(),
            ));
        }
        let cache = self.forward_cached(inputs)?;
        let mut out = Vec::new();
        for ((stack, sc), data) in
            self.stacks.iter().zip(cache.stacks.iter()).zip(inputs.channels.iter())
        {
            if !data.real {
                continue;
            }
            let ac = sc.attn_cache.as_ref().expect("attention configured");
            let weights: Vec<(NaiveDate, f64)> =
                data.days.iter().copied().zip(ac.alphas.iter().copied()).collect();
            out.push((stack.kind, weights));
        }
        Ok(out)
    }
}

/// Inverse of the training transform with overflow protection.
pub fn raw_to_dollars(raw: f64) -> Dollars {
    raw.clamp(-30.0, 30.0).exp_m1().max(0.0)
}

fn forward_parts(
    config: &ModelConfig,
    stacks: &[ChannelStack],
    head: &Dense,
    ps: &ParamSet,
    inputs: &ChannelInputs,
) -> Result<ModelCache> {
    if inputs.channels.len() != stacks.len() {
        return Err(Error::Shape(format!(
            "patient {} carries {} channels, model has {}",
            inputs.patient_id,
            inputs.channels.len(),
            stacks.len()
        )));
    }
    let mut stack_caches = Vec::with_capacity(stacks.len());
    let mut fused = Vec::with_capacity(stacks.len() * config.channel_out_dim());
    for (stack, data) in stacks.iter().zip(inputs.channels.iter()) {
        let t_max = data.xs.len();
        let mut step_inputs = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let x = match &stack.embed {
                Some(embed) => {
                    let mut v = embed.forward(ps, &data.bags[t]);
                    v.extend_from_slice(&data.xs[t]);
                    v
                }
                None => data.xs[t].clone(),
            };
            if x.len() != stack.in_dim {
                return Err(Error::Shape(format!(
                    "channel {} step {t} has width {}, stack expects {}",
                    stack.kind.as_str(),
                    x.len(),
                    stack.in_dim
                )));
            }
            step_inputs.push(x);
        }
        let mask = vec![true; t_max];
        let mut layer_states = Vec::with_capacity(stack.layers.len());
        let mut layer_caches = Vec::with_capacity(stack.layers.len());
        let mut current = step_inputs.clone();
        for layer in &stack.layers {
            let (states, cache) = layer.forward(ps, &current, &mask)?;
            current = states.clone();
            layer_states.push(states);
            layer_caches.push(cache);
        }
        let final_states = layer_states.last().expect("at least one layer");
        let (out, attn_cache) = match &stack.attn {
            Some(attn) => {
                let (o, c) = attn.fuse(ps, final_states, t_max)?;
                (o.attended, Some(c))
            }
            None => (final_states[t_max - 1].clone(), None),
        };
        fused.extend_from_slice(&out);
        stack_caches.push(StackCache { step_inputs, layer_states, layer_caches, attn_cache });
    }
    let raw = head.forward(ps, &fused)?[0];
    Ok(ModelCache { stacks: stack_caches, fused, raw })
}

#[allow(clippy::too_many_arguments)]
fn backward_parts(
    config: &ModelConfig,
    stacks: &[ChannelStack],
    head: &Dense,
    ps: &ParamSet,
    inputs: &ChannelInputs,
    cache: &ModelCache,
    d_raw: f64,
    grads: &mut GradSet,
) {
    let d_fused = head.backward(ps, grads, &cache.fused, &[d_raw]);
    let width = config.channel_out_dim();
    for (i, (stack, sc)) in stacks.iter().zip(cache.stacks.iter()).enumerate() {
        let d_out = &d_fused[i * width..(i + 1) * width];
        let t_max = sc.step_inputs.len();
        let final_states = sc.layer_states.last().expect("at least one layer");
        let mut d_states = match (&stack.attn, &sc.attn_cache) {
            (Some(attn), Some(ac)) => {
                let mut d = attn.backward(ps, final_states, t_max, ac, d_out, grads);
                d.resize(t_max, vec![0.0; 2 * config.hidden]);
                d
            }
            _ => {
                let mut d = vec![vec![0.0; 2 * config.hidden]; t_max];
                d[t_max - 1].copy_from_slice(d_out);
                d
            }
        };
        for (l, layer) in stack.layers.iter().enumerate().rev() {
            let layer_inputs: &[Vec<f64>] =
                if l == 0 { &sc.step_inputs } else { &sc.layer_states[l - 1] };
            d_states = layer.backward(ps, layer_inputs, &sc.layer_caches[l], &d_states, grads);
        }
        if let Some(embed) = &stack.embed {
            let data = &inputs.channels[i];
            for (t, d_in) in d_states.iter().enumerate() {
                embed.backward(grads, &data.bags[t], &d_in[..config.embed_dim]);
            }
        }
    }
}

#[cfg(test)]
mod tests;
