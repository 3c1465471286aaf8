use std::collections::BTreeMap;

use super::*;
use crate::claims::{build_profiles, ChannelKind, Granularity, PatientProfile};
use crate::embedding::{train_pvdbow, EventCorpus, TrainParams};
use crate::metrics::{SplitPlan, Shuffle};
use crate::predictor::train::{build_input_cache, predict_ids};
use crate::synth::{generate_records, SynthConfig};

fn train_tables(profiles: &[PatientProfile], dim: usize, seed: u64) -> EmbeddingSet {
    let params = TrainParams { dim, epochs: 8, seed, ..Default::default() };
    let table = |kind: ChannelKind| {
        let corpus = EventCorpus::from_profiles(profiles, kind);
        train_pvdbow(&corpus, kind, Granularity::Day, params).expect("trainable corpus")
    };
    EmbeddingSet {
        dx: table(ChannelKind::Dx),
        px: table(ChannelKind::Px),
        rx: table(ChannelKind::Rx),
        all: table(ChannelKind::All),
    }
}

fn fixture(n: usize, seed: u64, strength: f64) -> (Vec<PatientProfile>, EmbeddingSet) {
    let cfg = SynthConfig { n_patients: n, seed, signal_strength: strength, ..Default::default() };
    let (records, _) = generate_records(&cfg).unwrap();
    let profiles = build_profiles(&records, 2016, 2017).unwrap().profiles;
    let tables = train_tables(&profiles, 12, seed ^ 0xabc);
    (profiles, tables)
}

fn small_config(mode: LearningMode, embedding: EmbeddingMode, attention: bool) -> ModelConfig {
    ModelConfig {
        embed_dim: 12,
        hidden: 6,
        attn_latent: 6,
        attended_dim: 10,
        layers: 2,
        seed: 5,
        ..ModelConfig::new(mode, embedding, attention)
    }
}

#[test]
fn zero_parameters_predict_the_bias() {
    let (profiles, tables) = fixture(12, 100, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let mut model = ChannelModel::new(config, &tables).unwrap();
    for id in model.params.ids().collect::<Vec<_>>() {
        model.params.get_mut(id).fill(0.0);
    }
    model.set_head_bias(3.25);
    let cache = build_input_cache(&profiles, &tables, &config).unwrap();
    for inputs in cache.values() {
        let c = model.forward_cached(inputs).unwrap();
        assert!((c.raw - 3.25).abs() < 1e-12);
    }
}

#[test]
fn within_event_code_permutation_is_invisible() {
    let (profiles, tables) = fixture(12, 101, 0.0);
    for embedding in [EmbeddingMode::Pretrained, EmbeddingMode::Trainable] {
        let config = small_config(LearningMode::ChannelWise, embedding, true);
        let model = ChannelModel::new(config, &tables).unwrap();
        let profile = profiles.iter().find(|p| p.events[0].dx_codes.len() >= 2).unwrap();
        let mut permuted = profile.clone();
        permuted.events[0].dx_codes.reverse();
        let a = build_channel_inputs(profile, &tables, &config).unwrap();
        let b = build_channel_inputs(&permuted, &tables, &config).unwrap();
        let pa = model.predict(&a).unwrap();
        let pb = model.predict(&b).unwrap();
        assert_eq!(pa.predicted_cost, pb.predicted_cost, "{:?}", embedding);
    }
}

#[test]
fn forward_matches_independent_block_composition() {
    // Re-wire the same parameter tensors through the public nn ops by hand
    // and compare against the model's own forward path.
    let (profiles, tables) = fixture(10, 102, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let model = ChannelModel::new(config, &tables).unwrap();
    let cache = build_input_cache(&profiles, &tables, &config).unwrap();
    let inputs = cache.values().next().unwrap();
    let got = model.forward_cached(inputs).unwrap().raw;

    let mut fused = Vec::new();
    for (i, data) in inputs.channels.iter().enumerate() {
        let stack = &model.stacks[i];
        let mask = vec![true; data.xs.len()];
        let mut states = data.xs.clone();
        for layer in &stack.layers {
            states = layer.forward(&model.params, &states, &mask).unwrap().0;
        }
        let t = states.len();
        let (out, _) = stack.attn.as_ref().unwrap().fuse(&model.params, &states, t).unwrap();
        fused.extend_from_slice(&out.attended);
    }
    let expect = model.head.forward(&model.params, &fused).unwrap()[0];
    assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
}

#[test]
fn empty_pharmacy_channel_still_predicts() {
    let (profiles, tables) = fixture(40, 103, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let model = ChannelModel::new(config, &tables).unwrap();
    let no_rx = profiles.iter().find(|p| p.pharmacy_len() == 0);
    // tier-1 patients with pharmacy probability 0.25 on few events exist
    let profile = match no_rx {
        Some(p) => p.clone(),
        None => {
            let mut p = profiles[0].clone();
            for e in &mut p.events {
                e.rx_codes.clear();
                e.pharmacy_cost = 0.0;
            }
            p
        }
    };
    let inputs = build_channel_inputs(&profile, &tables, &config).unwrap();
    let rx = inputs.channels.iter().find(|c| c.kind == ChannelKind::Rx).unwrap();
    assert!(!rx.real);
    assert_eq!(rx.xs.len(), 1);
    let p = model.predict(&inputs).unwrap();
    assert!(p.predicted_cost.is_finite() && p.predicted_cost >= 0.0);
}

#[test]
fn gradients_match_finite_differences_across_variants() {
    let (profiles, tables) = fixture(10, 104, 0.0);
    let variants = [
        (LearningMode::ChannelWise, EmbeddingMode::Pretrained, true),
        (LearningMode::ChannelWise, EmbeddingMode::Trainable, true),
        (LearningMode::ChannelWise, EmbeddingMode::Pretrained, false),
        (LearningMode::SingleChannel, EmbeddingMode::Trainable, true),
        (LearningMode::SingleChannel, EmbeddingMode::Pretrained, false),
    ];
    for (mode, embedding, attention) in variants {
        let config = small_config(mode, embedding, attention);
        let mut model = ChannelModel::new(config, &tables).unwrap();
        let cache = build_input_cache(&profiles, &tables, &config).unwrap();
        let inputs = cache.values().nth(2).unwrap();
        let report = model.gradient_check(inputs, 25, 9, 1e-5).unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "{}/{}/{}: {:?}",
            mode.as_str(),
            embedding.as_str(),
            attention,
            report.worst
        );
    }
}

#[test]
fn parameter_counts_follow_the_architecture() {
    let (_, tables) = fixture(10, 105, 0.0);
    let pretrained =
        small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let trainable = small_config(LearningMode::ChannelWise, EmbeddingMode::Trainable, true);
    let mp = ChannelModel::new(pretrained, &tables).unwrap();
    let mt = ChannelModel::new(trainable, &tables).unwrap();
    assert!(mt.count_parameters() > mp.count_parameters());
    let lookup: usize = [&tables.dx, &tables.px, &tables.rx]
        .iter()
        .map(|t| t.vocab_size() * 12)
        .sum();
    assert_eq!(mt.count_parameters(), mp.count_parameters() + lookup);

    // doubling the hidden width changes one BiGRU by the closed-form amount
    let count_at = |p: usize| {
        let mut ps = crate::nn::ParamSet::new();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1u64);
        let _ = crate::nn::BiGru::new(&mut ps, &mut rng, "g", 9, p);
        ps.scalar_count()
    };
    for p in [3usize, 5, 8] {
        assert_eq!(count_at(p), bigru_param_count(9, p));
        let delta = count_at(2 * p) - count_at(p);
        assert_eq!(delta, 2 * (3 * 9 * p + 3 * 3 * p * p + 3 * p));
    }
}

#[test]
fn head_only_parameter_count_is_weights_plus_bias() {
    let mut ps = crate::nn::ParamSet::new();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1u64);
    let _ = crate::nn::Dense::new(&mut ps, &mut rng, "d", 4, 1);
    assert_eq!(ps.scalar_count(), 5);
}

fn splits_for(profiles: &[PatientProfile], seed: u64, n: usize) -> Vec<Shuffle> {
    let ids: Vec<String> = profiles.iter().map(|p| p.patient_id.clone()).collect();
    crate::metrics::make_splits(&ids, &SplitPlan::new(seed, n)).unwrap()
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (profiles, tables) = fixture(40, 106, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let mut model = ChannelModel::new(config, &tables).unwrap();
    let cache = build_input_cache(&profiles, &tables, &config).unwrap();
    let split = &splits_for(&profiles, 3, 1)[0];
    let before: Vec<Vec<f64>> = {
        let mut m = model.params.clone();
        m.get_mut(model.head.b).data_mut()[0] = 0.0; // bias is re-seeded by train
        m.iter().map(|(_, t)| t.data().to_vec()).collect()
    };
    let settings = TrainSettings { epochs: 3, lr: 0.0, ..Default::default() };
    train(&mut model, &cache, split, &settings).unwrap();
    let after: Vec<Vec<f64>> = {
        let mut m = model.params.clone();
        m.get_mut(model.head.b).data_mut()[0] = 0.0;
        m.iter().map(|(_, t)| t.data().to_vec()).collect()
    };
    assert_eq!(before, after);
}

#[test]
fn two_archetypes_overfit_to_low_validation_mape() {
    // identical inputs per archetype, distinct targets: the model must
    // separate them almost perfectly within the epoch budget
    let (profiles, tables) = fixture(60, 107, 0.0);
    let mut cheap = profiles[0].clone();
    cheap.target_cost = 900.0;
    let mut costly = profiles[1].clone();
    costly.target_cost = 21_000.0;
    let mut cohort = Vec::new();
    for i in 0..30 {
        let mut a = cheap.clone();
        a.patient_id = format!("A{i:02}");
        let mut b = costly.clone();
        b.patient_id = format!("B{i:02}");
        cohort.push(a);
        cohort.push(b);
    }
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let mut model = ChannelModel::new(config, &tables).unwrap();
    let cache = build_input_cache(&cohort, &tables, &config).unwrap();
    let split = &splits_for(&cohort, 5, 1)[0];
    let settings = TrainSettings { epochs: 60, patience: 60, lr: 0.02, ..Default::default() };
    train(&mut model, &cache, split, &settings).unwrap();
    let rows = predict_ids(&model, &cache, &split.val).unwrap();
    let actuals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let preds: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let m = crate::metrics::mape(&actuals, &preds).unwrap();
    assert!(m.value < 5.0, "validation MAPE {}", m.value);
}

#[test]
fn training_is_deterministic() {
    let (profiles, tables) = fixture(40, 108, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let cache = build_input_cache(&profiles, &tables, &config).unwrap();
    let split = &splits_for(&profiles, 11, 1)[0];
    let settings = TrainSettings { epochs: 3, ..Default::default() };
    let run = || {
        let mut model = ChannelModel::new(config, &tables).unwrap();
        train(&mut model, &cache, split, &settings).unwrap();
        model.params.iter().map(|(_, t)| t.data().to_vec()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn attention_export_weights_form_a_distribution() {
    let (profiles, tables) = fixture(20, 109, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let model = ChannelModel::new(config, &tables).unwrap();
    let cache = build_input_cache(&profiles, &tables, &config).unwrap();
    for inputs in cache.values().take(6) {
        for (kind, weights) in model.export_attention(inputs).unwrap() {
            let sum: f64 = weights.iter().map(|(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-9, "{}: sum {sum}", kind.as_str());
            assert!(weights.iter().all(|(_, w)| *w >= 0.0));
        }
    }
    // a single-event channel exports exactly [1.0]
    let mut one_rx_day = profiles[0].clone();
    let mut kept = false;
    for e in &mut one_rx_day.events {
        if !kept && e.has_pharmacy() {
            kept = true;
            continue;
        }
        e.rx_codes.clear();
        e.pharmacy_cost = 0.0;
    }
    if !kept {
        let e = &mut one_rx_day.events[0];
        e.rx_codes.push("RX0001".into());
        e.pharmacy_cost = 5.0;
    }
    let config2 = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let single = build_channel_inputs(&one_rx_day, &tables, &config2).unwrap();
    let export = model.export_attention(&single).unwrap();
    let rx = export.iter().find(|(k, _)| *k == ChannelKind::Rx).unwrap();
    assert_eq!(rx.1.len(), 1);
    assert_eq!(rx.1[0].1, 1.0);
}

#[test]
fn attention_export_requires_attention() {
    let (profiles, tables) = fixture(10, 110, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, false);
    let model = ChannelModel::new(config, &tables).unwrap();
    let cache = build_input_cache(&profiles, &tables, &config).unwrap();
    assert!(model.export_attention(cache.values().next().unwrap()).is_err());
}

#[test]
fn checkpoint_round_trips_exactly() {
    let (profiles, tables) = fixture(20, 111, 0.0);
    for (mode, embedding) in [
        (LearningMode::ChannelWise, EmbeddingMode::Pretrained),
        (LearningMode::SingleChannel, EmbeddingMode::Trainable),
    ] {
        let config = small_config(mode, embedding, true);
        let mut model = ChannelModel::new(config, &tables).unwrap();
        let cache = build_input_cache(&profiles, &tables, &config).unwrap();
        let split = &splits_for(&profiles, 13, 1)[0];
        let settings = TrainSettings { epochs: 2, ..Default::default() };
        train(&mut model, &cache, split, &settings).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&model, &path).unwrap();
        let back = load_model(&path, &tables).unwrap();
        assert_eq!(back.channel_order, model.channel_order);
        for (a, b) in back.params.iter().zip(model.params.iter()) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.data(), b.1.data());
        }
        let inputs = cache.values().next().unwrap();
        assert_eq!(
            back.predict(inputs).unwrap().predicted_cost,
            model.predict(inputs).unwrap().predicted_cost
        );
    }
}

#[test]
fn checkpoint_rejects_tampered_channel_order() {
    let (profiles, tables) = fixture(10, 112, 0.0);
    let config = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let model = ChannelModel::new(config, &tables).unwrap();
    let _ = &profiles;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_model(&model, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replace("channel_order dx,px,rx,cost", "channel_order rx,px,dx,cost");
    std::fs::write(&path, tampered).unwrap();
    let err = load_model(&path, &tables).unwrap_err().to_string();
    assert!(err.contains("fuses channels"), "{err}");
}

#[test]
fn per_code_mode_enforces_vocabulary_cap() {
    let (profiles, tables) = fixture(30, 113, 0.0);
    let config = ModelConfig {
        per_code_cap: 8,
        ..small_config(LearningMode::PerCode, EmbeddingMode::Pretrained, false)
    };
    // synthetic vocabularies are far larger than 8
    let err = ChannelModel::new(config, &tables).unwrap_err().to_string();
    assert!(err.contains("at most 8"), "{err}");
    let err2 = build_channel_inputs(&profiles[0], &tables, &config).unwrap_err().to_string();
    assert!(err2.contains("at most 8"), "{err2}");
}

#[test]
fn per_code_mode_runs_on_a_tiny_vocabulary() {
    // restrict the generator to a handful of codes so the cap holds
    let cfg = SynthConfig {
        n_patients: 24,
        seed: 114,
        dx_vocab: 4,
        px_vocab: 3,
        rx_vocab: 3,
        severity_mix: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ..Default::default()
    };
    let (records, _) = generate_records(&cfg).unwrap();
    let profiles = build_profiles(&records, 2016, 2017).unwrap().profiles;
    let tables = train_tables(&profiles, 8, 9);
    assert!(tables.all.vocab_size() <= 32);
    let config = ModelConfig {
        embed_dim: 8,
        hidden: 3,
        attn_latent: 3,
        attended_dim: 4,
        layers: 1,
        seed: 2,
        ..ModelConfig::new(LearningMode::PerCode, EmbeddingMode::Pretrained, true)
    };
    let mut model = ChannelModel::new(config, &tables).unwrap();
    let cache = build_input_cache(&profiles, &tables, &config).unwrap();
    assert_eq!(model.n_channels(), tables.all.vocab_size());
    let inputs = cache.values().next().unwrap();
    assert!(model.predict(inputs).unwrap().predicted_cost.is_finite());
    let report = model.gradient_check(inputs, 12, 3, 1e-5).unwrap();
    assert!(report.max_rel_err < 1e-4, "{:?}", report.worst);
}

#[test]
fn ablation_grid_shapes_and_failure_isolation() {
    let (profiles, tables) = fixture(40, 115, 0.0);
    let mut tables_by_gran = BTreeMap::new();
    tables_by_gran.insert(Granularity::Day, tables);
    let shuffles = splits_for(&profiles, 17, 2);
    let mut cells = full_grid(Granularity::Day);
    // a per-code cell over the full vocabulary must fail and be recorded
    cells.push(AblationCell {
        mode: LearningMode::PerCode,
        embedding: EmbeddingMode::Pretrained,
        attention: false,
        granularity: Granularity::Day,
    });
    let base = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let settings = TrainSettings { epochs: 1, ..Default::default() };
    let results =
        run_ablation(&profiles, &tables_by_gran, &cells, &shuffles, &base, &settings, true)
            .unwrap();
    assert_eq!(results.len(), 9 * 2);
    let failed: Vec<&CellResult> = results
        .iter()
        .filter(|r| matches!(r.outcome, AblationOutcome::Failed(_)))
        .collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|r| r.cell.mode == LearningMode::PerCode));
    let done = results.iter().filter(|r| r.test_mape().is_some()).count();
    assert_eq!(done, 8 * 2);
}

#[test]
fn ablation_results_are_identical_serial_and_parallel() {
    let (profiles, tables) = fixture(40, 116, 0.0);
    let mut tables_by_gran = BTreeMap::new();
    tables_by_gran.insert(Granularity::Day, tables);
    let shuffles = splits_for(&profiles, 19, 2);
    let cells = vec![
        AblationCell {
            mode: LearningMode::ChannelWise,
            embedding: EmbeddingMode::Pretrained,
            attention: true,
            granularity: Granularity::Day,
        },
        AblationCell {
            mode: LearningMode::SingleChannel,
            embedding: EmbeddingMode::Trainable,
            attention: false,
            granularity: Granularity::Day,
        },
    ];
    let base = small_config(LearningMode::ChannelWise, EmbeddingMode::Pretrained, true);
    let settings = TrainSettings { epochs: 2, ..Default::default() };
    let a = run_ablation(&profiles, &tables_by_gran, &cells, &shuffles, &base, &settings, false)
        .unwrap();
    let b = run_ablation(&profiles, &tables_by_gran, &cells, &shuffles, &base, &settings, true)
        .unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.test_mape(), y.test_mape());
    }
}
