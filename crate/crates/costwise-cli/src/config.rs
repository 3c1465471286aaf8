//! Plain-text key=value run configuration with command-line overrides,
//! plus the per-command manifest writer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use costwise::claims::Granularity;
use costwise::embedding::TrainParams;
use costwise::metrics::SplitPlan;
use costwise::predictor::{EmbeddingMode, LearningMode, ModelConfig, TrainSettings};
use costwise::synth::SynthConfig;

/// Every tunable of the pipeline, with defaults. A config file holds
/// `key = value` lines (# comments allowed); CLI flags override it.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub medical: Option<PathBuf>,
    pub pharmacy: Option<PathBuf>,
    pub condition_map: Option<PathBuf>,
    pub observation_year: i32,
    pub seed: u64,
    pub serial: bool,

    // synthetic generation
    pub n_patients: usize,
    pub severity_mix: [f64; 6],
    pub signal_strength: f64,

    // embedding training
    pub embed_dim: usize,
    pub emb_epochs: usize,
    pub emb_negatives: usize,
    pub emb_min_count: u64,
    pub emb_lr: f64,

    // model
    pub mode: LearningMode,
    pub embedding: EmbeddingMode,
    pub attention: bool,
    pub granularity: Granularity,
    pub hidden: usize,
    pub attn_latent: usize,
    pub attended_dim: usize,
    pub layers: usize,
    pub seq_cap: usize,
    pub per_code_cap: usize,
    pub infer_steps: usize,

    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub grad_clip: f64,
    pub weight_decay: f64,

    // evaluation protocol
    pub shuffles: usize,
    pub shuffle_index: usize,
    pub fractions: (f64, f64, f64),
    pub group_by: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            medical: None,
            pharmacy: None,
            condition_map: None,
            observation_year: 2016,
            seed: 42,
            serial: false,
            n_patients: 1000,
            severity_mix: [0.11, 0.19, 0.26, 0.18, 0.17, 0.09],
            signal_strength: 0.0,
            embed_dim: 64,
            emb_epochs: 15,
            emb_negatives: 5,
            emb_min_count: 2,
            emb_lr: 0.025,
            mode: LearningMode::ChannelWise,
            embedding: EmbeddingMode::Pretrained,
            attention: true,
            granularity: Granularity::Day,
            hidden: 32,
            attn_latent: 32,
            attended_dim: 64,
            layers: 2,
            seq_cap: 256,
            per_code_cap: 32,
            infer_steps: 20,
            epochs: 40,
            batch_size: 32,
            lr: 0.01,
            patience: 5,
            grad_clip: 5.0,
            weight_decay: 0.0,
            shuffles: 20,
            shuffle_index: 0,
            fractions: (0.60, 0.20, 0.20),
            group_by: "severity".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key = value", path.display(), i + 1))?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "out_dir" => self.out_dir = PathBuf::from(value),
            "medical" => self.medical = Some(PathBuf::from(value)),
            "pharmacy" => self.pharmacy = Some(PathBuf::from(value)),
            "condition_map" => self.condition_map = Some(PathBuf::from(value)),
            "observation_year" => self.observation_year = value.parse()?,
            "seed" => self.seed = value.parse()?,
            "serial" => self.serial = value.parse()?,
            "n_patients" => self.n_patients = value.parse()?,
            "severity_mix" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<std::result::Result<_, _>>()?;
                if parts.len() != 6 {
                    bail!("severity_mix needs 6 comma-separated shares, got {}", parts.len());
                }
                self.severity_mix.copy_from_slice(&parts);
            }
            "signal_strength" => self.signal_strength = value.parse()?,
            "embed_dim" => self.embed_dim = value.parse()?,
            "emb_epochs" => self.emb_epochs = value.parse()?,
            "emb_negatives" => self.emb_negatives = value.parse()?,
            "emb_min_count" => self.emb_min_count = value.parse()?,
            "emb_lr" => self.emb_lr = value.parse()?,
            "mode" => self.mode = LearningMode::parse(value)?,
            "embedding" => self.embedding = EmbeddingMode::parse(value)?,
            "attention" => self.attention = value.parse()?,
            "granularity" => self.granularity = Granularity::parse(value)?,
            "hidden" => self.hidden = value.parse()?,
            "attn_latent" => self.attn_latent = value.parse()?,
            "attended_dim" => self.attended_dim = value.parse()?,
            "layers" => self.layers = value.parse()?,
            "seq_cap" => self.seq_cap = value.parse()?,
            "per_code_cap" => self.per_code_cap = value.parse()?,
            "infer_steps" => self.infer_steps = value.parse()?,
            "epochs" => self.epochs = value.parse()?,
            "batch_size" => self.batch_size = value.parse()?,
            "lr" => self.lr = value.parse()?,
            "patience" => self.patience = value.parse()?,
            "grad_clip" => self.grad_clip = value.parse()?,
            "weight_decay" => self.weight_decay = value.parse()?,
            "shuffles" => self.shuffles = value.parse()?,
            "shuffle_index" => self.shuffle_index = value.parse()?,
            "fractions" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<std::result::Result<_, _>>()?;
                if parts.len() != 3 {
                    bail!("fractions needs 3 comma-separated shares, got {}", parts.len());
                }
                self.fractions = (parts[0], parts[1], parts[2]);
            }
            "group_by" => self.group_by = value.to_string(),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn result_year(&self) -> i32 {
        self.observation_year + 1
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_patients: self.n_patients,
            severity_mix: self.severity_mix,
            seed: self.seed,
            signal_strength: self.signal_strength,
            observation_year: self.observation_year,
            ..Default::default()
        }
    }

    pub fn embed_params(&self) -> TrainParams {
        TrainParams {
            dim: self.embed_dim,
            epochs: self.emb_epochs,
            negatives: self.emb_negatives,
            min_count: self.emb_min_count,
            seed: self.seed,
            lr: self.emb_lr,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            embedding: self.embedding,
            attention: self.attention,
            granularity: self.granularity,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            attn_latent: self.attn_latent,
            attended_dim: self.attended_dim,
            layers: self.layers,
            seq_cap: self.seq_cap,
            per_code_cap: self.per_code_cap,
            seed: self.seed,
            infer_steps: self.infer_steps,
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: self.patience,
            seed: self.seed,
            grad_clip: self.grad_clip,
            weight_decay: self.weight_decay,
        }
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan { seed: self.seed, n_shuffles: self.shuffles, fractions: self.fractions }
    }

    /// Claims file paths: explicit settings or the generate-command layout
    /// under out_dir.
    pub fn claims_paths(&self) -> (PathBuf, PathBuf) {
        let medical =
            self.medical.clone().unwrap_or_else(|| self.out_dir.join("medical.csv"));
        let pharmacy =
            self.pharmacy.clone().unwrap_or_else(|| self.out_dir.join("pharmacy.csv"));
        (medical, pharmacy)
    }

    pub fn condition_map_path(&self) -> PathBuf {
        self.condition_map
            .clone()
            .unwrap_or_else(|| self.out_dir.join("condition_map.csv"))
    }

    /// Resolved key=value view, the exact content a config file would need
    /// to reproduce this run.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("out_dir", self.out_dir.display().to_string());
        if let Some(p) = &self.medical {
            put("medical", p.display().to_string());
        }
        if let Some(p) = &self.pharmacy {
            put("pharmacy", p.display().to_string());
        }
        if let Some(p) = &self.condition_map {
            put("condition_map", p.display().to_string());
        }
        put("observation_year", self.observation_year.to_string());
        put("seed", self.seed.to_string());
        put("serial", self.serial.to_string());
        put("n_patients", self.n_patients.to_string());
        put(
            "severity_mix",
            self.severity_mix.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        put("signal_strength", self.signal_strength.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("emb_epochs", self.emb_epochs.to_string());
        put("emb_negatives", self.emb_negatives.to_string());
        put("emb_min_count", self.emb_min_count.to_string());
        put("emb_lr", self.emb_lr.to_string());
        put("mode", self.mode.as_str().to_string());
        put("embedding", self.embedding.as_str().to_string());
        put("attention", self.attention.to_string());
        put("granularity", self.granularity.as_str().to_string());
        put("hidden", self.hidden.to_string());
        put("attn_latent", self.attn_latent.to_string());
        put("attended_dim", self.attended_dim.to_string());
        put("layers", self.layers.to_string());
        put("seq_cap", self.seq_cap.to_string());
        put("per_code_cap", self.per_code_cap.to_string());
        put("infer_steps", self.infer_steps.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("lr", self.lr.to_string());
        put("patience", self.patience.to_string());
        put("grad_clip", self.grad_clip.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("shuffles", self.shuffles.to_string());
        put("shuffle_index", self.shuffle_index.to_string());
        put(
            "fractions",
            format!("{},{},{}", self.fractions.0, self.fractions.1, self.fractions.2),
        );
        put("group_by", self.group_by.clone());
        m
    }
}

/// Write `<command>.manifest.txt`: resolved config, version, wall time.
/// Manifests carry timing and are the one output excluded from byte-level
/// reproducibility comparisons.
pub fn write_manifest(cfg: &RunConfig, command: &str, wall_secs: f64) -> Result<()> {
    let path = cfg.out_dir.join(format!("{command}.manifest.txt"));
    let mut text = String::new();
    text.push_str(&format!("command = {command}\n"));
    text.push_str(&format!(
        "version = {} {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    ));
    text.push_str(&format!("wall_seconds = {wall_secs:.3}\n"));
    for (k, v) in cfg.resolved() {
        text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(&path, text)
        .with_context(|| format!("cannot write manifest {}", path.display()))?;
    Ok(())
}
