//! End-to-end library pipeline checks on synthetic cohorts.

use std::collections::BTreeMap;

use costwise::claims::{build_profiles, ChannelKind, Granularity, PatientProfile};
use costwise::embedding::{train_pvdbow, EventCorpus, TrainParams};
use costwise::metrics::{
    make_splits, stratified_report, GroupBy, ModelRuns, SplitPlan,
};
use costwise::predictor::{
    build_input_cache, predict_ids, train, ChannelModel, EmbeddingMode, EmbeddingSet,
    LearningMode, ModelConfig, TrainSettings,
};
use costwise::strata::stratify_cohort;
use costwise::synth::{demo_condition_map, generate_records, SynthConfig};

fn tables_for(profiles: &[PatientProfile], dim: usize, epochs: usize, seed: u64) -> EmbeddingSet {
    let params = TrainParams { dim, epochs, seed, ..Default::default() };
    let t = |kind: ChannelKind| {
        let corpus = EventCorpus::from_profiles(profiles, kind);
        train_pvdbow(&corpus, kind, Granularity::Day, params).expect("nonempty corpus")
    };
    EmbeddingSet {
        dx: t(ChannelKind::Dx),
        px: t(ChannelKind::Px),
        rx: t(ChannelKind::Rx),
        all: t(ChannelKind::All),
    }
}

fn small_model(mode: LearningMode, embedding: EmbeddingMode, dim: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        embed_dim: dim,
        hidden: 8,
        attn_latent: 8,
        attended_dim: 16,
        layers: 2,
        seed,
        ..ModelConfig::new(mode, embedding, true)
    }
}

#[test]
fn full_pipeline_emits_stratified_report() {
    let synth =
        SynthConfig { n_patients: 400, seed: 7107, signal_strength: 0.5, ..Default::default() };
    let (records, _) = generate_records(&synth).unwrap();
    let profiles = build_profiles(&records, 2016, 2017).unwrap().profiles;
    let tables = tables_for(&profiles, 12, 12, 7108);
    let ids: Vec<String> = profiles.iter().map(|p| p.patient_id.clone()).collect();
    let splits = make_splits(&ids, &SplitPlan::new(5, 2)).unwrap();
    let settings =
        TrainSettings { epochs: 10, patience: 4, lr: 0.02, weight_decay: 1e-3, ..Default::default() };

    let mut runs = Vec::new();
    for (name, mode, embedding) in [
        ("single_channel", LearningMode::SingleChannel, EmbeddingMode::Trainable),
        ("channel_wise", LearningMode::ChannelWise, EmbeddingMode::Pretrained),
    ] {
        let config = small_model(mode, embedding, 12, 9 + name.len() as u64);
        let cache = build_input_cache(&profiles, &tables, &config).unwrap();
        let mut shuffles = Vec::new();
        for split in &splits {
            let mut model = ChannelModel::new(config, &tables).unwrap();
            train(&mut model, &cache, split, &settings).unwrap();
            shuffles.push(predict_ids(&model, &cache, &split.test).unwrap());
        }
        runs.push(ModelRuns { name: name.into(), shuffles });
    }

    let (strata_rows, skipped) = stratify_cohort(&profiles, &demo_condition_map()).unwrap();
    assert!(skipped.is_empty());
    let strata: BTreeMap<String, _> =
        strata_rows.into_iter().map(|s| (s.patient_id.clone(), s)).collect();
    let actuals: Vec<f64> = profiles.iter().map(|p| p.target_cost).collect();

    for group_by in
        [GroupBy::Severity, GroupBy::EntropyQuintile, GroupBy::CostLevel, GroupBy::NeedLevel]
    {
        let report = stratified_report(&runs, &strata, &actuals, group_by).unwrap();
        assert_eq!(report.models.len(), 2);
        assert_eq!(report.comparisons.len(), 1);
        let c = &report.comparisons[0];
        assert_eq!(c.per_shuffle_p.len(), 2);
        assert!(c.pooled_p >= 0.0 && c.pooled_p <= 1.0);
        // every shuffle carries a full stratum list, and predictions are
        // finite dollars
        for m in &report.models {
            for s in &m.shuffles {
                assert!(!s.strata.is_empty());
                assert!(s.overall.netpay.is_finite());
            }
        }
        let text = costwise::metrics::render_report_text(&report);
        assert!(text.lines().count() > 10);
    }
}
