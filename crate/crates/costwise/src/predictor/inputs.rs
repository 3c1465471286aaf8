//! Per-patient model inputs: one sequence per channel of
//! [event representation; transformed gap] vectors.
//!
//! Gaps and dollar magnitudes enter as log(1+x) so they live on the same
//! unit scale as the embeddings. A patient with no events in a channel
//! gets the empty-channel sentinel: a single all-zero step.

use chrono::NaiveDate;

use crate::claims::{ChannelKind, Granularity, PatientProfile};
use crate::embedding::{event_vector, EmbeddingTable};
use crate::error::{Error, Result};

use super::{EmbeddingMode, LearningMode, ModelConfig};

/// The four tables of one cohort (per-channel plus the mixed single-channel
/// vocabulary).
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    pub dx: EmbeddingTable,
    pub px: EmbeddingTable,
    pub rx: EmbeddingTable,
    pub all: EmbeddingTable,
}

impl EmbeddingSet {
    pub fn table(&self, kind: ChannelKind) -> &EmbeddingTable {
        match kind {
            ChannelKind::Dx => &self.dx,
            ChannelKind::Px => &self.px,
            ChannelKind::Rx => &self.rx,
            ChannelKind::All => &self.all,
            ChannelKind::Cost => panic!("cost channel has no embedding table"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dx.dim
    }

    pub fn granularity(&self) -> Granularity {
        self.dx.granularity
    }

    pub fn validate(&self) -> Result<()> {
        for t in [&self.px, &self.rx, &self.all] {
            if t.dim != self.dx.dim {
                return Err(Error::Invalid(format!(
                    "embedding tables disagree on dimension: {} vs {}",
                    self.dx.dim, t.dim
                )));
            }
            if t.granularity != self.dx.granularity {
                return Err(Error::Invalid(
                    "embedding tables disagree on granularity".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One channel's input sequence for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelData {
    pub kind: ChannelKind,
    /// Numeric part of each step (always present).
    pub xs: Vec<Vec<f64>>,
    /// Code-id bags per step; used by trainable-embedding models, empty
    /// vectors otherwise.
    pub bags: Vec<Vec<usize>>,
    pub days: Vec<NaiveDate>,
    /// False marks the empty-channel sentinel step.
    pub real: bool,
}

/// All channel sequences of one patient plus the training target.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelInputs {
    pub patient_id: String,
    pub channels: Vec<ChannelData>,
    pub target_cost: f64,
}

impl ChannelInputs {
    /// log(1 + target), the value the model regresses on.
    pub fn target_log(&self) -> f64 {
        self.target_cost.ln_1p()
    }
}

/// Numeric features (dollar amounts, gaps) enter as log(1+x) scaled by
/// 1/10 so they share the unit range of the embedding components instead
/// of saturating the recurrent gates.
fn log1p(v: f64) -> f64 {
    v.ln_1p() * 0.1
}

fn sentinel(kind: ChannelKind, width: usize) -> ChannelData {
    ChannelData {
        kind,
        xs: vec![vec![0.0; width]],
        bags: vec![Vec::new()],
        days: vec![NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch exists")],
        real: false,
    }
}

fn cap_tail<T>(mut v: Vec<T>, cap: usize) -> Vec<T> {
    if v.len() > cap {
        v.drain(..v.len() - cap);
    }
    v
}

/// Width of the numeric step vector for a code channel under the given
/// embedding mode (the trainable path appends the embedding inside the
/// model, so only the gap travels here).
fn code_channel_width(config: &ModelConfig) -> usize {
    match config.embedding {
        EmbeddingMode::Pretrained => config.embed_dim + 1,
        EmbeddingMode::Trainable => 1,
    }
}

fn build_code_channel(
    profile: &PatientProfile,
    kind: ChannelKind,
    table: &EmbeddingTable,
    config: &ModelConfig,
    infer_steps: usize,
) -> ChannelData {
    let steps = cap_tail(profile.channel_steps(kind), config.seq_cap);
    if steps.is_empty() {
        return sentinel(kind, code_channel_width(config));
    }
    let mut xs = Vec::with_capacity(steps.len());
    let mut bags = Vec::with_capacity(steps.len());
    let mut days = Vec::with_capacity(steps.len());
    for (idx, gap) in steps {
        let e = &profile.events[idx];
        let bag = kind.bag_of(e);
        match config.embedding {
            EmbeddingMode::Pretrained => {
                let mut x = if bag.is_empty() {
                    vec![0.0; config.embed_dim]
                } else {
                    event_vector(table, &profile.patient_id, e.day, &bag, infer_steps)
                };
                x.push(log1p(gap));
                xs.push(x);
                bags.push(Vec::new());
            }
            EmbeddingMode::Trainable => {
                xs.push(vec![log1p(gap)]);
                bags.push(bag.iter().map(|c| table.code_id(c)).collect());
            }
        }
        days.push(e.day);
    }
    ChannelData { kind, xs, bags, days, real: true }
}

fn build_cost_channel(profile: &PatientProfile, config: &ModelConfig) -> ChannelData {
    let steps = cap_tail(profile.channel_steps(ChannelKind::Cost), config.seq_cap);
    if steps.is_empty() {
        return sentinel(ChannelKind::Cost, 3);
    }
    let mut xs = Vec::with_capacity(steps.len());
    let mut days = Vec::with_capacity(steps.len());
    for (idx, gap) in steps {
        let e = &profile.events[idx];
        xs.push(vec![log1p(e.medical_cost), log1p(e.pharmacy_cost), log1p(gap)]);
        days.push(e.day);
    }
    let bags = vec![Vec::new(); xs.len()];
    ChannelData { kind: ChannelKind::Cost, xs, bags, days, real: true }
}

fn build_all_channel(
    profile: &PatientProfile,
    table: &EmbeddingTable,
    config: &ModelConfig,
    infer_steps: usize,
) -> ChannelData {
    let steps = cap_tail(profile.channel_steps(ChannelKind::All), config.seq_cap);
    if steps.is_empty() {
        let width = match config.embedding {
            EmbeddingMode::Pretrained => config.embed_dim + 2,
            EmbeddingMode::Trainable => 2,
        };
        return sentinel(ChannelKind::All, width);
    }
    let mut xs = Vec::with_capacity(steps.len());
    let mut bags = Vec::with_capacity(steps.len());
    let mut days = Vec::with_capacity(steps.len());
    for (idx, gap) in steps {
        let e = &profile.events[idx];
        let bag = ChannelKind::All.bag_of(e);
        match config.embedding {
            EmbeddingMode::Pretrained => {
                let mut x = if bag.is_empty() {
                    vec![0.0; config.embed_dim]
                } else {
                    event_vector(table, &profile.patient_id, e.day, &bag, infer_steps)
                };
                x.push(log1p(e.total_cost()));
                x.push(log1p(gap));
                xs.push(x);
                bags.push(Vec::new());
            }
            EmbeddingMode::Trainable => {
                xs.push(vec![log1p(e.total_cost()), log1p(gap)]);
                bags.push(bag.iter().map(|c| table.code_id(c)).collect());
            }
        }
        days.push(e.day);
    }
    ChannelData { kind: ChannelKind::All, xs, bags, days, real: true }
}

fn build_per_code_channels(
    profile: &PatientProfile,
    table: &EmbeddingTable,
    config: &ModelConfig,
) -> Vec<ChannelData> {
    // one channel per vocabulary code (UNK included), day steps where the
    // code occurs, input = [log1p(count); log1p(gap)]
    let vocab = table.vocab_size();
    let mut out = Vec::with_capacity(vocab);
    for code_id in 0..vocab {
        let mut xs = Vec::new();
        let mut days = Vec::new();
        let mut prev: Option<i64> = None;
        for e in &profile.events {
            let bag = ChannelKind::All.bag_of(e);
            let count = bag.iter().filter(|c| table.code_id(c) == code_id).count();
            if count == 0 {
                continue;
            }
            let gap = prev.map(|p| (e.bucket - p) as f64).unwrap_or(0.0);
            prev = Some(e.bucket);
            xs.push(vec![log1p(count as f64), log1p(gap)]);
            days.push(e.day);
        }
        if xs.is_empty() {
            out.push(sentinel(ChannelKind::All, 2));
        } else {
            let xs = cap_tail(xs, config.seq_cap);
            let days = cap_tail(days, config.seq_cap);
            let bags = vec![Vec::new(); xs.len()];
            out.push(ChannelData { kind: ChannelKind::All, xs, bags, days, real: true });
        }
    }
    out
}

/// Build the channel sequences for one patient, matching the model mode.
/// The profile must already be aggregated at the model's granularity.
pub fn build_channel_inputs(
    profile: &PatientProfile,
    tables: &EmbeddingSet,
    config: &ModelConfig,
) -> Result<ChannelInputs> {
    if profile.granularity != config.granularity {
        return Err(Error::Invalid(format!(
            "profile {} is at {} granularity, model expects {}",
            profile.patient_id,
            profile.granularity.as_str(),
            config.granularity.as_str()
        )));
    }
    let infer_steps = config.infer_steps;
    let channels = match config.mode {
        LearningMode::ChannelWise => vec![
            build_code_channel(profile, ChannelKind::Dx, &tables.dx, config, infer_steps),
            build_code_channel(profile, ChannelKind::Px, &tables.px, config, infer_steps),
            build_code_channel(profile, ChannelKind::Rx, &tables.rx, config, infer_steps),
            build_cost_channel(profile, config),
        ],
        LearningMode::SingleChannel => {
            vec![build_all_channel(profile, &tables.all, config, infer_steps)]
        }
        LearningMode::PerCode => {
            let vocab = tables.all.vocab_size();
            if vocab > config.per_code_cap {
                return Err(Error::Invalid(format!(
                    "one-channel-per-code needs a vocabulary of at most {} codes, found {}",
                    config.per_code_cap, vocab
                )));
            }
            build_per_code_channels(profile, &tables.all, config)
        }
    };
    Ok(ChannelInputs {
        patient_id: profile.patient_id.clone(),
        channels,
        target_cost: profile.target_cost,
    })
}
