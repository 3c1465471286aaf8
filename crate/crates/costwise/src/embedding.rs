//! PV-DBOW paragraph-vector training over claim events.
//!
//! Each claim day is a document and its codes (of one channel) are the
//! words: the document vector is trained to predict its member codes with
//! negative sampling. Codes inside a day carry no order, so bags are
//! canonically sorted before any RNG is consumed; permuting a bag cannot
//! change the result.
//!
//! Table file layout (plain text, values as big-endian f64 bit hex so the
//! round trip is exact):
//!
//! ```text
//! costwise-embedding v1
//! channel <dx|px|rx|all>
//! granularity <day|week|month>
//! dim <m>
//! vocab <V>
//! docs <N>
//! seed <u64> / epochs <n> / negatives <k> / min_count <c>
//! codes:            V lines of "<id> <code> <freq>"
//! out_weights:      V lines of m hex words
//! doc_keys:         N lines of "<patient_id> <iso-date>"
//! doc_vecs:         N lines of m hex words
//! end
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::claims::{ChannelKind, Granularity, PatientProfile};
use crate::error::{Error, Result};

pub const UNK_ID: usize = 0;
pub const UNK_CODE: &str = "<unk>";

/// (patient_id, bucket label day) identifies one claim-event document.
pub type EventKey = (String, NaiveDate);

/// Training corpus: one bag of codes per claim event.
#[derive(Clone, Debug, Default)]
pub struct EventCorpus {
    pub entries: Vec<(EventKey, Vec<String>)>,
}

impl EventCorpus {
    /// Collect the per-channel bags of every profile event. Events with an
    /// empty bag for this channel are skipped.
    pub fn from_profiles(profiles: &[PatientProfile], channel: ChannelKind) -> Self {
        let mut entries = Vec::new();
        for p in profiles {
            for e in &p.events {
                let bag = channel.bag_of(e);
                if !bag.is_empty() {
                    entries.push(((p.patient_id.clone(), e.day), bag));
                }
            }
        }
        EventCorpus { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub min_count: u64,
    pub seed: u64,
    pub lr: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { dim: 64, epochs: 15, negatives: 5, min_count: 2, seed: 1, lr: 0.025 }
    }
}

/// Trained event/code embedding table for one channel.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub channel: ChannelKind,
    pub granularity: Granularity,
    pub dim: usize,
    /// id -> code string; id 0 is the UNK bucket.
    pub codes: Vec<String>,
    /// id -> corpus frequency (UNK aggregates sub-threshold codes).
    pub freqs: Vec<u64>,
    code_ids: BTreeMap<String, usize>,
    /// vocab x dim code (output) matrix
    pub out_weights: Vec<f64>,
    /// trained document vectors
    pub doc_keys: Vec<EventKey>,
    pub doc_vecs: Vec<f64>,
    doc_index: BTreeMap<EventKey, usize>,
    pub params: TrainParams,
    /// cumulative unigram^0.75 noise distribution
    noise_cdf: Vec<f64>,
}

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.codes.len()
    }

    pub fn code_id(&self, code: &str) -> usize {
        self.code_ids.get(code).copied().unwrap_or(UNK_ID)
    }

    pub fn doc_vector(&self, key: &EventKey) -> Option<&[f64]> {
        self.doc_index.get(key).map(|&i| &self.doc_vecs[i * self.dim..(i + 1) * self.dim])
    }

    fn out_row(&self, id: usize) -> &[f64] {
        &self.out_weights[id * self.dim..(id + 1) * self.dim]
    }

    fn sample_negative<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        match self.noise_cdf.binary_search_by(|c| c.partial_cmp(&u).expect("finite cdf")) {
            Ok(i) | Err(i) => i.min(self.noise_cdf.len() - 1),
        }
    }
}

fn build_noise_cdf(freqs: &[u64]) -> Vec<f64> {
    let weights: Vec<f64> = freqs.iter().map(|f| (*f as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total.max(f64::MIN_POSITIVE);
            acc
        })
        .collect()
}

/// One negative-sampling update of a (doc, target) pair; returns the error
/// signal to add to the doc vector afterwards.
#[allow(clippy::too_many_arguments)]
fn train_pair(
    doc: &[f64],
    out: &mut [f64],
    dim: usize,
    target: usize,
    label: f64,
    lr: f64,
    err: &mut [f64],
    freeze_out: bool,
) {
    let row = &mut out[target * dim..(target + 1) * dim];
    let dot: f64 = doc.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
    let f = 1.0 / (1.0 + (-dot).exp());
    let g = (label - f) * lr;
    for i in 0..dim {
        err[i] += g * row[i];
        if !freeze_out {
            row[i] += g * doc[i];
        }
    }
}

/// Train PV-DBOW document vectors over the corpus. Deterministic given the
/// seed: one serial pass order, canonical bag order, counter-seeded RNG.
pub fn train_pvdbow(
    corpus: &EventCorpus,
    channel: ChannelKind,
    granularity: Granularity,
    params: TrainParams,
) -> Result<EmbeddingTable> {
    if corpus.is_empty() {
        return Err(Error::Invalid("train_pvdbow: empty corpus".into()));
    }
    if params.dim < 2 {
        return Err(Error::Invalid(format!("embedding dim must be >= 2, got {}", params.dim)));
    }
    // vocabulary with min-count filter; sub-threshold mass goes to UNK
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for (_, bag) in &corpus.entries {
        for code in bag {
            *counts.entry(code).or_default() += 1;
        }
    }
    let mut codes = vec![UNK_CODE.to_string()];
    let mut freqs = vec![0u64];
    for (code, n) in &counts {
        if *n >= params.min_count {
            codes.push(code.to_string());
            freqs.push(*n);
        } else {
            freqs[UNK_ID] += n;
        }
    }
    if codes.len() == 1 && freqs[UNK_ID] == 0 {
        return Err(Error::Data("train_pvdbow: empty vocabulary".into()));
    }
    if codes.len() == 1 {
        return Err(Error::Data(format!(
            "train_pvdbow: no code reaches min_count {}; vocabulary is empty",
            params.min_count
        )));
    }
    let code_ids: BTreeMap<String, usize> =
        codes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();

    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let span = 0.5 / dim as f64;
    let n_docs = corpus.entries.len();
    let mut doc_vecs: Vec<f64> =
        (0..n_docs * dim).map(|_| rng.gen_range(-span..span)).collect();
    let out_weights = vec![0.0; codes.len() * dim];

    let mut table = EmbeddingTable {
        channel,
        granularity,
        dim,
        noise_cdf: build_noise_cdf(&freqs),
        codes,
        freqs,
        code_ids,
        out_weights,
        doc_keys: corpus.entries.iter().map(|(k, _)| k.clone()).collect(),
        doc_vecs: vec![0.0; n_docs * dim],
        doc_index: BTreeMap::new(),
        params,
    };

    // bags as sorted id lists, fixed once
    let bags: Vec<Vec<usize>> = corpus
        .entries
        .iter()
        .map(|(_, bag)| {
            let mut ids: Vec<usize> = bag.iter().map(|c| table.code_id(c)).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    let pairs_per_epoch: usize = bags.iter().map(Vec::len).sum();
    let total_pairs = (pairs_per_epoch * params.epochs).max(1);
    let mut seen = 0usize;
    let mut err = vec![0.0; dim];

    for _epoch in 0..params.epochs {
        for (d, ids) in bags.iter().enumerate() {
            let doc = &mut doc_vecs[d * dim..(d + 1) * dim];
            for &target in ids {
                let progress = seen as f64 / total_pairs as f64;
                let lr = (params.lr * (1.0 - progress)).max(params.lr * 1e-4);
                seen += 1;
                err.iter_mut().for_each(|v| *v = 0.0);
                train_pair(doc, &mut table.out_weights, dim, target, 1.0, lr, &mut err, false);
                for _ in 0..params.negatives {
                    let neg = table.sample_negative(&mut rng);
                    if neg == target {
                        continue;
                    }
                    train_pair(doc, &mut table.out_weights, dim, neg, 0.0, lr, &mut err, false);
                }
                for (v, e) in doc.iter_mut().zip(err.iter()) {
                    *v += e;
                }
            }
        }
    }
    table.doc_vecs = doc_vecs;
    table.doc_index =
        table.doc_keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    Ok(table)
}

/// Infer a document vector for a new bag against the frozen code matrix:
/// `steps` gradient passes with linearly decaying rate. Unseen codes map
/// to UNK; a bag that is empty (or entirely UNK) returns the zero vector.
pub fn infer_event_vector(table: &EmbeddingTable, codes: &[String], steps: usize) -> Vec<f64> {
    let dim = table.dim;
    let mut ids: Vec<usize> = codes.iter().map(|c| table.code_id(c)).collect();
    ids.sort_unstable();
    if ids.is_empty() || ids.iter().all(|&i| i == UNK_ID) {
        return vec![0.0; dim];
    }
    // deterministic per-bag stream: fold the ids into the table seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &id in &ids {
        h = (h ^ id as u64).wrapping_mul(0x1000_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(table.params.seed ^ h);
    let mut doc = vec![0.0; dim];
    let mut out = table.out_weights.clone();
    let mut err = vec![0.0; dim];
    let total = (steps * ids.len()).max(1);
    let mut seen = 0usize;
    for _ in 0..steps {
        for &target in &ids {
            let lr = (table.params.lr * (1.0 - seen as f64 / total as f64))
                .max(table.params.lr * 1e-4);
            seen += 1;
            err.iter_mut().for_each(|v| *v = 0.0);
            train_pair(&doc, &mut out, dim, target, 1.0, lr, &mut err, true);
            for _ in 0..table.params.negatives {
                let neg = table.sample_negative(&mut rng);
                if neg == target {
                    continue;
                }
                train_pair(&doc, &mut out, dim, neg, 0.0, lr, &mut err, true);
            }
            for (v, e) in doc.iter_mut().zip(err.iter()) {
                *v += e;
            }
        }
    }
    doc
}

/// Stored vector when the event was in the training corpus, otherwise a
/// fresh inference.
pub fn event_vector(
    table: &EmbeddingTable,
    patient_id: &str,
    day: NaiveDate,
    bag: &[String],
    infer_steps: usize,
) -> Vec<f64> {
    if let Some(v) = table.doc_vector(&(patient_id.to_string(), day)) {
        return v.to_vec();
    }
    infer_event_vector(table, bag, infer_steps)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

fn hex_line(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 17);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&format!("{:016x}", v.to_bits()));
    }
    s
}

fn parse_hex_line(line: &str, dim: usize, what: &str) -> Result<Vec<f64>> {
    let words: Vec<&str> = line.split_whitespace().collect();
    if words.len() != dim {
        return Err(Error::Format(format!(
            "{what}: expected {dim} values, found {}",
            words.len()
        )));
    }
    words
        .iter()
        .map(|w| {
            u64::from_str_radix(w, 16)
                .map(f64::from_bits)
                .map_err(|e| Error::Format(format!("{what}: bad hex value {w:?}: {e}")))
        })
        .collect()
}

pub fn export_table(table: &EmbeddingTable, path: &Path) -> Result<()> {
    for code in &table.codes {
        if code.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!(
                "code {code:?} contains whitespace; not representable in the table format"
            )));
        }
    }
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let w = |f: &mut dyn Write, s: String| -> Result<()> {
        writeln!(f, "{s}").map_err(|e| Error::io(path, e))
    };
    w(&mut f, "costwise-embedding v1".into())?;
    w(&mut f, format!("channel {}", table.channel.as_str()))?;
    w(&mut f, format!("granularity {}", table.granularity.as_str()))?;
    w(&mut f, format!("dim {}", table.dim))?;
    w(&mut f, format!("vocab {}", table.vocab_size()))?;
    w(&mut f, format!("docs {}", table.doc_keys.len()))?;
    w(&mut f, format!("seed {}", table.params.seed))?;
    w(&mut f, format!("epochs {}", table.params.epochs))?;
    w(&mut f, format!("negatives {}", table.params.negatives))?;
    w(&mut f, format!("min_count {}", table.params.min_count))?;
    w(&mut f, format!("lr {:016x}", table.params.lr.to_bits()))?;
    w(&mut f, "codes:".into())?;
    for (i, (code, freq)) in table.codes.iter().zip(table.freqs.iter()).enumerate() {
        w(&mut f, format!("{i} {code} {freq}"))?;
    }
    w(&mut f, "out_weights:".into())?;
    for i in 0..table.vocab_size() {
        w(&mut f, hex_line(table.out_row(i)))?;
    }
    w(&mut f, "doc_keys:".into())?;
    for (pid, day) in &table.doc_keys {
        if pid.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!("patient id {pid:?} contains whitespace")));
        }
        w(&mut f, format!("{pid} {}", day.format("%Y-%m-%d")))?;
    }
    w(&mut f, "doc_vecs:".into())?;
    for i in 0..table.doc_keys.len() {
        w(&mut f, hex_line(&table.doc_vecs[i * table.dim..(i + 1) * table.dim]))?;
    }
    w(&mut f, "end".into())?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn import_table(path: &Path) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: truncated at {what}", path.display())))
    };
    let magic = next("magic")?;
    if magic != "costwise-embedding v1" {
        return Err(Error::Format(format!(
            "{}: expected header 'costwise-embedding v1', found {magic:?}",
            path.display()
        )));
    }
    fn kv<'a>(line: &'a str, key: &str) -> Result<&'a str> {
        line.strip_prefix(key)
            .and_then(|s| s.strip_prefix(' '))
            .ok_or_else(|| Error::Format(format!("expected '{key} <value>', found {line:?}")))
    }
    let channel = ChannelKind::parse(kv(next("channel")?, "channel")?)?;
    let granularity = Granularity::parse(kv(next("granularity")?, "granularity")?)?;
    let dim: usize = kv(next("dim")?, "dim")?
        .parse()
        .map_err(|e| Error::Format(format!("bad dim: {e}")))?;
    let vocab: usize = kv(next("vocab")?, "vocab")?
        .parse()
        .map_err(|e| Error::Format(format!("bad vocab: {e}")))?;
    let docs: usize = kv(next("docs")?, "docs")?
        .parse()
        .map_err(|e| Error::Format(format!("bad docs: {e}")))?;
    let seed: u64 = kv(next("seed")?, "seed")?
        .parse()
        .map_err(|e| Error::Format(format!("bad seed: {e}")))?;
    let epochs: usize = kv(next("epochs")?, "epochs")?
        .parse()
        .map_err(|e| Error::Format(format!("bad epochs: {e}")))?;
    let negatives: usize = kv(next("negatives")?, "negatives")?
        .parse()
        .map_err(|e| Error::Format(format!("bad negatives: {e}")))?;
    let min_count: u64 = kv(next("min_count")?, "min_count")?
        .parse()
        .map_err(|e| Error::Format(format!("bad min_count: {e}")))?;
    let lr = f64::from_bits(
        u64::from_str_radix(kv(next("lr")?, "lr")?, 16)
            .map_err(|e| Error::Format(format!("bad lr: {e}")))?,
    );

    if next("codes:")? != "codes:" {
        return Err(Error::Format("expected 'codes:' block".into()));
    }
    let mut codes = Vec::with_capacity(vocab);
    let mut freqs = Vec::with_capacity(vocab);
    for i in 0..vocab {
        let line = next("code row")?;
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("code row {i}: expected 3 fields: {line:?}")));
        }
        let id: usize =
            parts[0].parse().map_err(|e| Error::Format(format!("code row {i}: {e}")))?;
        if id != i {
            return Err(Error::Format(format!("code row {i} carries id {id}")));
        }
        codes.push(parts[1].to_string());
        freqs.push(
            parts[2].parse().map_err(|e| Error::Format(format!("code row {i}: {e}")))?,
        );
    }
    if codes.first().map(String::as_str) != Some(UNK_CODE) {
        return Err(Error::Format(format!("code id 0 must be {UNK_CODE:?}")));
    }

    if next("out_weights:")? != "out_weights:" {
        return Err(Error::Format("expected 'out_weights:' block".into()));
    }
    let mut out_weights = Vec::with_capacity(vocab * dim);
    for i in 0..vocab {
        out_weights.extend(parse_hex_line(next("out row")?, dim, &format!("out row {i}"))?);
    }
    if next("doc_keys:")? != "doc_keys:" {
        return Err(Error::Format("expected 'doc_keys:' block".into()));
    }
    let mut doc_keys = Vec::with_capacity(docs);
    for i in 0..docs {
        let line = next("doc key")?;
        let (pid, day) = line
            .rsplit_once(' ')
            .ok_or_else(|| Error::Format(format!("doc key {i}: expected 2 fields: {line:?}")))?;
        let day = NaiveDate::parse_from_str(day, "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("doc key {i}: bad day: {e}")))?;
        doc_keys.push((pid.to_string(), day));
    }
    if next("doc_vecs:")? != "doc_vecs:" {
        return Err(Error::Format("expected 'doc_vecs:' block".into()));
    }
    let mut doc_vecs = Vec::with_capacity(docs * dim);
    for i in 0..docs {
        doc_vecs.extend(parse_hex_line(next("doc row")?, dim, &format!("doc row {i}"))?);
    }
    if next("end")? != "end" {
        return Err(Error::Format("expected trailing 'end'".into()));
    }
    if !out_weights.iter().chain(doc_vecs.iter()).all(|v| v.is_finite()) {
        return Err(Error::Format(format!(
            "{}: table contains non-finite values",
            path.display()
        )));
    }

    let code_ids = codes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let doc_index = doc_keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    Ok(EmbeddingTable {
        channel,
        granularity,
        dim,
        noise_cdf: build_noise_cdf(&freqs),
        codes,
        freqs,
        code_ids,
        out_weights,
        doc_keys,
        doc_vecs,
        doc_index,
        params: TrainParams { dim, epochs, negatives, min_count, seed, lr },
    })
}
