//! Model checkpoints: architecture header plus a named tensor dump with
//! f64 bit hex values, so save/load round-trips exactly.
//!
//! ```text
//! costwise-model v1
//! mode / embedding / attention / granularity / dims / seed / infer_steps
//! channel_order <kinds, comma-separated>   (validated on load)
//! vocab <i> <codes...>                     (trainable stacks only)
//! params <count>
//! <name> <d0xd1> <hex words>
//! end
//! ```

use std::io::Write;
use std::path::Path;

use crate::claims::{ChannelKind, Granularity};
use crate::error::{Error, Result};
use crate::nn::Tensor;

use super::inputs::EmbeddingSet;
use super::{ChannelModel, EmbeddingMode, LearningMode, ModelConfig};

pub fn save_model(model: &ChannelModel, path: &Path) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let w = |f: &mut dyn Write, s: String| -> Result<()> {
        writeln!(f, "{s}").map_err(|e| Error::io(path, e))
    };
    let c = &model.config;
    w(&mut f, "costwise-model v1".into())?;
    w(&mut f, format!("mode {}", c.mode.as_str()))?;
    w(&mut f, format!("embedding {}", c.embedding.as_str()))?;
    w(&mut f, format!("attention {}", c.attention))?;
    w(&mut f, format!("granularity {}", c.granularity.as_str()))?;
    w(
        &mut f,
        format!(
            "dims {} {} {} {} {} {} {}",
            c.embed_dim, c.hidden, c.attn_latent, c.attended_dim, c.layers, c.seq_cap,
            c.per_code_cap
        ),
    )?;
    w(&mut f, format!("seed {}", c.seed))?;
    w(&mut f, format!("infer_steps {}", c.infer_steps))?;
    let order: Vec<&str> = model.channel_order.iter().map(|k| k.as_str()).collect();
    w(&mut f, format!("channel_order {}", order.join(",")))?;
    for i in 0..model.n_channels() {
        if let Some(codes) = model.trainable_vocab(i) {
            w(&mut f, format!("vocab {i} {}", codes.join(" ")))?;
        }
    }
    w(&mut f, format!("params {}", model.params.len()))?;
    for (name, tensor) in model.params.iter() {
        let shape: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        let mut line = format!("{name} {}", shape.join("x"));
        for v in tensor.data() {
            line.push(' ');
            line.push_str(&format!("{:016x}", v.to_bits()));
        }
        w(&mut f, line)?;
    }
    w(&mut f, "end".into())?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Rebuild a model from a checkpoint. `tables` must be compatible: same
/// granularity, same dimension in pretrained mode, identical vocabularies
/// in trainable mode.
pub fn load_model(path: &Path, tables: &EmbeddingSet) -> Result<ChannelModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: truncated at {what}", path.display())))
    };
    if next("magic")? != "costwise-model v1" {
        return Err(Error::Format(format!(
            "{}: not a costwise-model v1 checkpoint",
            path.display()
        )));
    }
    fn kv<'a>(line: &'a str, key: &str) -> Result<&'a str> {
        line.strip_prefix(key)
            .and_then(|s| s.strip_prefix(' '))
            .ok_or_else(|| Error::Format(format!("expected '{key} <value>', found {line:?}")))
    }
    let mode = LearningMode::parse(kv(next("mode")?, "mode")?)?;
    let embedding = EmbeddingMode::parse(kv(next("embedding")?, "embedding")?)?;
    let attention: bool = kv(next("attention")?, "attention")?
        .parse()
        .map_err(|e| Error::Format(format!("bad attention flag: {e}")))?;
    let granularity = Granularity::parse(kv(next("granularity")?, "granularity")?)?;
    let dims: Vec<usize> = kv(next("dims")?, "dims")?
        .split(' ')
        .map(|s| s.parse().map_err(|e| Error::Format(format!("bad dims: {e}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 7 {
        return Err(Error::Format(format!("expected 7 dims, found {}", dims.len())));
    }
    let seed: u64 =
        kv(next("seed")?, "seed")?.parse().map_err(|e| Error::Format(format!("bad seed: {e}")))?;
    let infer_steps: usize = kv(next("infer_steps")?, "infer_steps")?
        .parse()
        .map_err(|e| Error::Format(format!("bad infer_steps: {e}")))?;
    let config = ModelConfig {
        mode,
        embedding,
        attention,
        granularity,
        embed_dim: dims[0],
        hidden: dims[1],
        attn_latent: dims[2],
        attended_dim: dims[3],
        layers: dims[4],
        seq_cap: dims[5],
        per_code_cap: dims[6],
        seed,
        infer_steps,
    };

    let order_line = kv(next("channel_order")?, "channel_order")?;
    let stored_order: Vec<ChannelKind> =
        order_line.split(',').map(ChannelKind::parse).collect::<Result<_>>()?;

    let mut model = ChannelModel::new(config, tables)?;
    if model.channel_order != stored_order {
        return Err(Error::Format(format!(
            "{}: checkpoint fuses channels as {:?}, this build would fuse {:?}",
            path.display(),
            stored_order.iter().map(|k| k.as_str()).collect::<Vec<_>>(),
            model.channel_order.iter().map(|k| k.as_str()).collect::<Vec<_>>()
        )));
    }

    let mut line = next("vocab or params")?;
    while let Some(rest) = line.strip_prefix("vocab ") {
        let (idx, codes) = rest
            .split_once(' ')
            .ok_or_else(|| Error::Format("vocab line needs an index and codes".into()))?;
        let idx: usize =
            idx.parse().map_err(|e| Error::Format(format!("bad vocab index: {e}")))?;
        let stored: Vec<&str> = codes.split(' ').collect();
        let current = model.trainable_vocab(idx).ok_or_else(|| {
            Error::Format(format!("checkpoint has a vocabulary for non-trainable stack {idx}"))
        })?;
        if current.len() != stored.len()
            || current.iter().zip(stored.iter()).any(|(a, b)| a != b)
        {
            return Err(Error::Format(format!(
                "{}: stack {idx} vocabulary mismatch: checkpoint has {} codes, tables give {}",
                path.display(),
                stored.len(),
                current.len()
            )));
        }
        line = next("vocab or params")?;
    }
    let n_params: usize = kv(line, "params")?
        .parse()
        .map_err(|e| Error::Format(format!("bad params count: {e}")))?;
    if n_params != model.params.len() {
        return Err(Error::Format(format!(
            "{}: checkpoint stores {} tensors, architecture builds {}",
            path.display(),
            n_params,
            model.params.len()
        )));
    }
    for id in model.params.ids().collect::<Vec<_>>() {
        let line = next("tensor")?;
        let mut parts = line.split(' ');
        let name = parts.next().unwrap_or("");
        if name != model.params.name(id) {
            return Err(Error::Format(format!(
                "{}: expected tensor {:?}, found {name:?}",
                path.display(),
                model.params.name(id)
            )));
        }
        let shape_s = parts
            .next()
            .ok_or_else(|| Error::Format(format!("tensor {name}: missing shape")))?;
        let shape: Vec<usize> = shape_s
            .split('x')
            .map(|s| s.parse().map_err(|e| Error::Format(format!("tensor {name}: {e}"))))
            .collect::<Result<_>>()?;
        if shape != model.params.get(id).shape() {
            return Err(Error::Format(format!(
                "{}: tensor {name} has shape {shape:?}, architecture expects {:?}",
                path.display(),
                model.params.get(id).shape()
            )));
        }
        let values: Vec<f64> = parts
            .map(|wrd| {
                u64::from_str_radix(wrd, 16)
                    .map(f64::from_bits)
                    .map_err(|e| Error::Format(format!("tensor {name}: bad value: {e}")))
            })
            .collect::<Result<_>>()?;
        let tensor = Tensor::from_vec(&shape, values)?;
        if !tensor.all_finite() {
            return Err(Error::Format(format!("tensor {name} contains non-finite values")));
        }
        *model.params.get_mut(id) = tensor;
    }
    if next("end")? != "end" {
        return Err(Error::Format("expected trailing 'end'".into()));
    }
    Ok(model)
}
