//! Pipeline driver: generate -> embed -> stratify -> train -> evaluate,
//! plus the ablation grid. Every command writes its artifacts under
//! --out-dir together with a manifest of the resolved configuration.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use costwise::claims::{
    aggregate_events, build_profiles, ingest_claims, ChannelKind, Granularity, PatientProfile,
};
use costwise::embedding::{export_table, import_table, train_pvdbow, EventCorpus};
use costwise::metrics::{
    make_splits, render_report_text, stratified_report, GroupBy, ModelRuns,
};
use costwise::predictor::{
    build_channel_inputs, load_model, run_ablation, save_model, train, AblationCell,
    ChannelModel, EmbeddingSet, InputCache,
};
use costwise::strata::{read_strata, stratify_cohort, write_strata, ConditionMap};
use costwise::synth::generate_cohort;

use config::{write_manifest, RunConfig};

#[derive(Parser)]
#[command(
    name = "costwise",
    about = "Channel-wise next-year cost prediction over administrative claims",
    version
)]
struct Cli {
    /// Key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Force single-threaded execution (bit-reproducible mode).
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ModelFlags {
    /// channel_wise | single_channel | per_code
    #[arg(long)]
    mode: Option<String>,
    /// pretrained | trainable
    #[arg(long)]
    embedding: Option<String>,
    #[arg(long)]
    attention: Option<bool>,
    /// day | week | month
    #[arg(long)]
    granularity: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    shuffle: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort: claims, labels, and a demo condition map.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        /// Six comma-separated tier shares summing to 1.
        #[arg(long)]
        severity_mix: Option<String>,
        #[arg(long)]
        signal_strength: Option<f64>,
    },
    /// Train the four PV-DBOW embedding tables from claims files.
    Embed {
        #[arg(long)]
        medical: Option<PathBuf>,
        #[arg(long)]
        pharmacy: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        granularity: Option<String>,
    },
    /// Entropy index, quintiles, and need-severity categories per patient.
    Stratify {
        #[arg(long)]
        medical: Option<PathBuf>,
        #[arg(long)]
        pharmacy: Option<PathBuf>,
        #[arg(long)]
        condition_map: Option<PathBuf>,
        #[arg(long)]
        granularity: Option<String>,
    },
    /// Train one model on one shuffle; writes checkpoint, log, test
    /// predictions, and attention weights.
    Train {
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Stratified evaluation of a trained model (optionally against a
    /// baseline checkpoint).
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// severity | entropy_quintile | cost_level | need_level
        #[arg(long)]
        group_by: Option<String>,
        #[command(flatten)]
        flags: ModelFlags,
    },
    /// Train and evaluate every grid cell over every shuffle.
    Ablate {
        /// Comma-separated axes out of mode,embedding,attention,granularity.
        #[arg(long, default_value = "mode,embedding,attention")]
        grid: String,
        #[command(flatten)]
        flags: ModelFlags,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn apply_model_flags(cfg: &mut RunConfig, f: &ModelFlags) -> Result<()> {
    if let Some(v) = &f.mode {
        cfg.set("mode", v)?;
    }
    if let Some(v) = &f.embedding {
        cfg.set("embedding", v)?;
    }
    if let Some(v) = f.attention {
        cfg.set("attention", &v.to_string())?;
    }
    if let Some(v) = &f.granularity {
        cfg.set("granularity", v)?;
    }
    if let Some(v) = f.epochs {
        cfg.set("epochs", &v.to_string())?;
    }
    if let Some(v) = f.shuffle {
        cfg.set("shuffle_index", &v.to_string())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.serial = cfg.serial || cli.serial;
    if cfg.serial {
        // one worker thread makes every run bit-identical by construction
        rayon::ThreadPoolBuilder::new().num_threads(1).build_global().ok();
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create out dir {}", cfg.out_dir.display()))?;

    let started = Instant::now();
    let command_name = match &cli.command {
        Command::Generate { .. } => "generate",
        Command::Embed { .. } => "embed",
        Command::Stratify { .. } => "stratify",
        Command::Train { .. } => "train",
        Command::Evaluate { .. } => "evaluate",
        Command::Ablate { .. } => "ablate",
    };

    match cli.command {
        Command::Generate { n, severity_mix, signal_strength } => {
            if let Some(n) = n {
                cfg.n_patients = n;
            }
            if let Some(mix) = severity_mix {
                cfg.set("severity_mix", &mix)?;
            }
            if let Some(s) = signal_strength {
                cfg.signal_strength = s;
            }
            cmd_generate(&cfg)?;
        }
        Command::Embed { medical, pharmacy, dim, granularity } => {
            if let Some(p) = medical {
                cfg.medical = Some(p);
            }
            if let Some(p) = pharmacy {
                cfg.pharmacy = Some(p);
            }
            if let Some(d) = dim {
                cfg.embed_dim = d;
            }
            if let Some(g) = granularity {
                cfg.set("granularity", &g)?;
            }
            cmd_embed(&cfg)?;
        }
        Command::Stratify { medical, pharmacy, condition_map, granularity } => {
            if let Some(p) = medical {
                cfg.medical = Some(p);
            }
            if let Some(p) = pharmacy {
                cfg.pharmacy = Some(p);
            }
            if let Some(p) = condition_map {
                cfg.condition_map = Some(p);
            }
            if let Some(g) = granularity {
                cfg.set("granularity", &g)?;
            }
            cmd_stratify(&cfg)?;
        }
        Command::Train { model } => {
            apply_model_flags(&mut cfg, &model)?;
            cmd_train(&cfg)?;
        }
        Command::Evaluate { model, baseline, group_by, flags } => {
            apply_model_flags(&mut cfg, &flags)?;
            if let Some(g) = group_by {
                cfg.group_by = g;
            }
            cmd_evaluate(&cfg, model, baseline)?;
        }
        Command::Ablate { grid, flags } => {
            apply_model_flags(&mut cfg, &flags)?;
            cmd_ablate(&cfg, &grid)?;
        }
    }
    write_manifest(&cfg, command_name, started.elapsed().as_secs_f64())?;
    Ok(())
}

fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let synth = cfg.synth_config();
    synth.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let (files, labels) = generate_cohort(&synth, &cfg.out_dir)?;
    let mut tier_counts = [0usize; 6];
    for l in &labels {
        tier_counts[(l.tier - 1) as usize] += 1;
    }
    println!("generated {} patients into {}", labels.len(), cfg.out_dir.display());
    println!("  medical:       {}", files.medical.display());
    println!("  pharmacy:      {}", files.pharmacy.display());
    println!("  labels:        {}", files.labels.display());
    println!("  condition map: {}", files.condition_map.display());
    println!("  tier counts:   {tier_counts:?}");
    println!("  signal share:  {:.1}%", {
        100.0 * labels.iter().filter(|l| l.has_signal).count() as f64 / labels.len() as f64
    });
    Ok(())
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} not found at {}; run the upstream command first", path.display());
    }
    Ok(())
}

fn load_profiles(cfg: &RunConfig) -> Result<Vec<PatientProfile>> {
    let (medical, pharmacy) = cfg.claims_paths();
    require(&medical, "medical claims file")?;
    require(&pharmacy, "pharmacy claims file")?;
    let ingest = ingest_claims(&medical, &pharmacy)?;
    if !ingest.rejects.is_empty() {
        let path = cfg.out_dir.join("rejected_rows.txt");
        std::fs::write(&path, ingest.reject_report())?;
        eprintln!("{} rejected rows; see {}", ingest.rejects.len(), path.display());
    }
    let built = build_profiles(&ingest.records, cfg.observation_year, cfg.result_year())?;
    if built.excluded > 0 {
        eprintln!("{} patients excluded by the two-claim filter", built.excluded);
    }
    Ok(built.profiles)
}

fn profiles_at(profiles: &[PatientProfile], granularity: Granularity) -> Vec<PatientProfile> {
    profiles.iter().map(|p| aggregate_events(p, granularity)).collect()
}

fn table_path(cfg: &RunConfig, kind: ChannelKind, granularity: Granularity) -> PathBuf {
    cfg.out_dir.join(format!("table_{}_{}.emb", kind.as_str(), granularity.as_str()))
}

fn cmd_embed(cfg: &RunConfig) -> Result<()> {
    let profiles = load_profiles(cfg)?;
    let at_gran = profiles_at(&profiles, cfg.granularity);
    let params = cfg.embed_params();
    for kind in [ChannelKind::Dx, ChannelKind::Px, ChannelKind::Rx, ChannelKind::All] {
        let corpus = EventCorpus::from_profiles(&at_gran, kind);
        let table = train_pvdbow(&corpus, kind, cfg.granularity, params)?;
        let path = table_path(cfg, kind, cfg.granularity);
        export_table(&table, &path)?;
        println!(
            "trained {} table: {} events, {} codes -> {}",
            kind.as_str(),
            corpus.len(),
            table.vocab_size(),
            path.display()
        );
    }
    Ok(())
}

fn load_tables(cfg: &RunConfig, granularity: Granularity) -> Result<EmbeddingSet> {
    let mut tables = Vec::new();
    for kind in [ChannelKind::Dx, ChannelKind::Px, ChannelKind::Rx, ChannelKind::All] {
        let path = table_path(cfg, kind, granularity);
        require(&path, &format!("{} embedding table", kind.as_str()))?;
        tables.push(import_table(&path)?);
    }
    let mut it = tables.into_iter();
    let set = EmbeddingSet {
        dx: it.next().expect("four tables"),
        px: it.next().expect("four tables"),
        rx: it.next().expect("four tables"),
        all: it.next().expect("four tables"),
    };
    set.validate()?;
    Ok(set)
}

fn cmd_stratify(cfg: &RunConfig) -> Result<()> {
    let profiles = load_profiles(cfg)?;
    let at_gran = profiles_at(&profiles, cfg.granularity);
    let map_path = cfg.condition_map_path();
    require(&map_path, "condition map")?;
    let map = ConditionMap::load(&map_path)?;
    let (rows, skipped) = stratify_cohort(&at_gran, &map)?;
    if !skipped.is_empty() {
        eprintln!("{} eventless profiles skipped", skipped.len());
    }
    let path = cfg.out_dir.join("strata.csv");
    write_strata(&rows, &path)?;
    let mut by_quintile = [0usize; 5];
    let mut by_severity: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        by_quintile[(r.entropy_quintile - 1) as usize] += 1;
        *by_severity.entry(r.severity.as_str()).or_default() += 1;
    }
    println!("stratified {} patients -> {}", rows.len(), path.display());
    println!("  quintile sizes: {by_quintile:?}");
    for (sev, n) in by_severity {
        println!("  {sev}: {n}");
    }
    Ok(())
}

struct PipelineInputs {
    cache: InputCache,
    shuffle: costwise::metrics::Shuffle,
}

fn build_pipeline_inputs(
    cfg: &RunConfig,
    profiles: &[PatientProfile],
    tables: &EmbeddingSet,
    model_cfg: &costwise::predictor::ModelConfig,
) -> Result<PipelineInputs> {
    let at_gran = profiles_at(profiles, model_cfg.granularity);
    let mut cache = InputCache::new();
    for p in &at_gran {
        cache.insert(p.patient_id.clone(), build_channel_inputs(p, tables, model_cfg)?);
    }
    let ids: Vec<String> = at_gran.iter().map(|p| p.patient_id.clone()).collect();
    let splits = make_splits(&ids, &cfg.split_plan())?;
    let shuffle = splits
        .into_iter()
        .nth(cfg.shuffle_index)
        .with_context(|| format!("shuffle index {} outside the plan", cfg.shuffle_index))?;
    Ok(PipelineInputs { cache, shuffle })
}

fn write_predictions(path: &Path, rows: &[(String, f64, f64)]) -> Result<()> {
    let mut text = String::from("patient_id,predicted_cost,actual_cost\n");
    for (id, actual, predicted) in rows {
        text.push_str(&format!("{id},{predicted:.2},{actual:.2}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let profiles = load_profiles(cfg)?;
    let tables = load_tables(cfg, cfg.granularity)?;
    // the trained tables fix the embedding width
    let model_cfg =
        costwise::predictor::ModelConfig { embed_dim: tables.dim(), ..cfg.model_config() };
    let pipe = build_pipeline_inputs(cfg, &profiles, &tables, &model_cfg)?;
    let mut model = ChannelModel::new(model_cfg, &tables)?;
    let log = train(&mut model, &pipe.cache, &pipe.shuffle, &cfg.train_settings())?;

    let ckpt = cfg.out_dir.join("model.ckpt");
    save_model(&model, &ckpt)?;
    let mut log_text = String::from("epoch,train_mse,val_mse\n");
    for (i, (tr, va)) in log.epochs.iter().enumerate() {
        log_text.push_str(&format!("{i},{tr:.6},{va:.6}\n"));
    }
    std::fs::write(cfg.out_dir.join("train_log.csv"), log_text)?;

    let rows = costwise::predictor::predict_ids(&model, &pipe.cache, &pipe.shuffle.test)?;
    write_predictions(&cfg.out_dir.join("predictions.csv"), &rows)?;

    if model.config.attention {
        let mut text = String::from("patient_id,channel,day,weight\n");
        for id in pipe.shuffle.test.iter().take(50) {
            let inputs = &pipe.cache[id];
            for (kind, weights) in model.export_attention(inputs)? {
                for (day, w) in weights {
                    text.push_str(&format!("{id},{},{day},{w:.6}\n", kind.as_str()));
                }
            }
        }
        std::fs::write(cfg.out_dir.join("attention.csv"), text)?;
    }

    // fused patient representations, plot-ready (t-SNE and friends)
    let mut text = String::from("patient_id,representation\n");
    for id in &pipe.shuffle.test {
        let v = model.fused_representation(&pipe.cache[id])?;
        let joined: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        text.push_str(&format!("{id},{}\n", joined.join(";")));
    }
    std::fs::write(cfg.out_dir.join("representations.csv"), text)?;

    let actuals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let preds: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let m = costwise::metrics::mape(&actuals, &preds)?;
    println!(
        "trained {}+{}+{} on shuffle {}: best epoch {}, test MAPE {:.2} ({} patients)",
        model.config.mode.as_str(),
        model.config.embedding.as_str(),
        if model.config.attention { "attention" } else { "no_attention" },
        pipe.shuffle.index,
        log.best_epoch,
        m.value,
        rows.len()
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, model: Option<PathBuf>, baseline: Option<PathBuf>) -> Result<()> {
    let model_path = model.unwrap_or_else(|| cfg.out_dir.join("model.ckpt"));
    require(&model_path, "trained model checkpoint")?;
    let strata_path = cfg.out_dir.join("strata.csv");
    require(&strata_path, "strata file")?;
    let profiles = load_profiles(cfg)?;

    let mut runs = Vec::new();
    let mut first_cache: Option<InputCache> = None;
    let mut shuffle = None;
    let mut load_run = |path: &Path, name: &str| -> Result<()> {
        let first = import_model_granularity(path)?;
        let tables = load_tables(cfg, first)?;
        let model = load_model(path, &tables)?;
        let pipe = build_pipeline_inputs(cfg, &profiles, &tables, &model.config)?;
        let rows = costwise::predictor::predict_ids(&model, &pipe.cache, &pipe.shuffle.test)?;
        runs.push(ModelRuns { name: name.to_string(), shuffles: vec![rows] });
        if first_cache.is_none() {
            first_cache = Some(pipe.cache);
            shuffle = Some(pipe.shuffle);
        }
        Ok(())
    };
    if let Some(base) = &baseline {
        require(base, "baseline checkpoint")?;
        load_run(base, "baseline")?;
    }
    load_run(&model_path, "model")?;

    let strata_rows = read_strata(&strata_path)?;
    let strata: BTreeMap<String, _> =
        strata_rows.into_iter().map(|s| (s.patient_id.clone(), s)).collect();
    let cohort_actuals: Vec<f64> = profiles.iter().map(|p| p.target_cost).collect();
    let group_by = GroupBy::parse(&cfg.group_by)?;
    let report = stratified_report(&runs, &strata, &cohort_actuals, group_by)?;

    let text = render_report_text(&report);
    std::fs::write(cfg.out_dir.join("report.csv"), &text)?;
    std::fs::write(
        cfg.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    print!("{text}");
    println!("report written to {}", cfg.out_dir.join("report.csv").display());
    Ok(())
}

/// Peek at a checkpoint's granularity so the right tables can be loaded.
fn import_model_granularity(path: &Path) -> Result<Granularity> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    for line in text.lines().take(8) {
        if let Some(g) = line.strip_prefix("granularity ") {
            return Ok(Granularity::parse(g)?);
        }
    }
    bail!("{}: no granularity header found", path.display())
}

fn parse_grid(cfg: &RunConfig, spec: &str) -> Result<Vec<AblationCell>> {
    let axes: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    for a in &axes {
        if !["mode", "embedding", "attention", "granularity"].contains(a) {
            bail!("unknown grid axis {a:?}");
        }
    }
    let modes: Vec<_> = if axes.contains(&"mode") {
        vec![
            costwise::predictor::LearningMode::ChannelWise,
            costwise::predictor::LearningMode::SingleChannel,
        ]
    } else {
        vec![cfg.mode]
    };
    let embeddings: Vec<_> = if axes.contains(&"embedding") {
        vec![
            costwise::predictor::EmbeddingMode::Pretrained,
            costwise::predictor::EmbeddingMode::Trainable,
        ]
    } else {
        vec![cfg.embedding]
    };
    let attentions: Vec<bool> =
        if axes.contains(&"attention") { vec![true, false] } else { vec![cfg.attention] };
    let granularities: Vec<_> = if axes.contains(&"granularity") {
        vec![Granularity::Day, Granularity::Week, Granularity::Month]
    } else {
        vec![cfg.granularity]
    };
    let mut cells = Vec::new();
    for &mode in &modes {
        for &embedding in &embeddings {
            for &attention in &attentions {
                for &granularity in &granularities {
                    cells.push(AblationCell { mode, embedding, attention, granularity });
                }
            }
        }
    }
    Ok(cells)
}

fn cmd_ablate(cfg: &RunConfig, grid: &str) -> Result<()> {
    let cells = parse_grid(cfg, grid)?;
    let profiles = load_profiles(cfg)?;
    let mut tables_by_gran = BTreeMap::new();
    for cell in &cells {
        if let std::collections::btree_map::Entry::Vacant(slot) =
            tables_by_gran.entry(cell.granularity)
        {
            slot.insert(load_tables(cfg, cell.granularity)?);
        }
    }
    let dims: Vec<usize> = tables_by_gran.values().map(EmbeddingSet::dim).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        bail!("embedding tables disagree on dimension across granularities: {dims:?}");
    }
    let base = costwise::predictor::ModelConfig {
        embed_dim: dims[0],
        ..cfg.model_config()
    };
    let ids: Vec<String> = profiles.iter().map(|p| p.patient_id.clone()).collect();
    let shuffles = make_splits(&ids, &cfg.split_plan())?;
    let results = run_ablation(
        &profiles,
        &tables_by_gran,
        &cells,
        &shuffles,
        &base,
        &cfg.train_settings(),
        !cfg.serial,
    )?;

    let mut text = String::from("cell,shuffle,test_mape,best_epoch,error\n");
    let mut by_cell: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &results {
        match &r.outcome {
            costwise::predictor::AblationOutcome::Done { test_mape, best_epoch, .. } => {
                text.push_str(&format!(
                    "{},{},{test_mape:.4},{best_epoch},\n",
                    r.cell.label(),
                    r.shuffle
                ));
                by_cell.entry(r.cell.label()).or_default().push(*test_mape);
            }
            costwise::predictor::AblationOutcome::Failed(msg) => {
                text.push_str(&format!(
                    "{},{},,,{}\n",
                    r.cell.label(),
                    r.shuffle,
                    msg.replace(',', ";")
                ));
            }
        }
    }
    std::fs::write(cfg.out_dir.join("ablation.csv"), &text)?;

    let mut summary: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    println!("mean test MAPE over {} shuffles:", cfg.shuffles);
    for (cell, mapes) in &by_cell {
        let mean = mapes.iter().sum::<f64>() / mapes.len() as f64;
        let var =
            mapes.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / mapes.len() as f64;
        println!("  {cell}: {mean:.2} (sd {:.2}, n={})", var.sqrt(), mapes.len());
        summary.insert(
            cell.clone(),
            serde_json::json!({"mean_mape": mean, "sd": var.sqrt(), "n": mapes.len()}),
        );
    }
    std::fs::write(
        cfg.out_dir.join("ablation_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    // per-stratum means when a strata file is available
    let strata_path = cfg.out_dir.join("strata.csv");
    if strata_path.exists() {
        let strata: BTreeMap<String, _> = read_strata(&strata_path)?
            .into_iter()
            .map(|s| (s.patient_id.clone(), s))
            .collect();
        let mut text = String::from("cell,stratum,mean_mape,n_shuffles\n");
        for cell_label in by_cell.keys() {
            let mut per_stratum: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in results.iter().filter(|r| &r.cell.label() == cell_label) {
                if let costwise::predictor::AblationOutcome::Done { predictions, .. } =
                    &r.outcome
                {
                    let mut grouped: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
                    for (id, actual, pred) in predictions {
                        if let Some(s) = strata.get(id) {
                            let e = grouped
                                .entry(format!("q{}", s.entropy_quintile))
                                .or_default();
                            e.0.push(*actual);
                            e.1.push(*pred);
                        }
                    }
                    for (stratum, (a, p)) in grouped {
                        if let Ok(m) = costwise::metrics::mape(&a, &p) {
                            per_stratum.entry(stratum).or_default().push(m.value);
                        }
                    }
                }
            }
            for (stratum, vals) in per_stratum {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                text.push_str(&format!("{cell_label},{stratum},{mean:.4},{}\n", vals.len()));
            }
        }
        std::fs::write(cfg.out_dir.join("ablation_strata.csv"), text)?;
    }
    println!("ablation written to {}", cfg.out_dir.join("ablation.csv").display());
    Ok(())
}
