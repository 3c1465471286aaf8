//! Synthetic claims cohorts with controllable severity tiers and a planted
//! cross-channel cost signal.
//!
//! Six tiers mirror the need-severity ladder: higher tiers draw more claim
//! events, more same-day providers, more distinct codes, and higher
//! next-year cost. A configurable share of patients additionally receives
//! a signal pair — a designated dx code and rx code placed on the same day
//! in different channels — which multiplies their next-year cost by
//! (1 + 2 * signal_strength). Generation is deterministic: tier quotas are
//! cut by largest remainder and every patient consumes its own
//! counter-seeded RNG stream.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::claims::{write_claims, ClaimKind, ClaimRecord};
use crate::error::{Error, Result};
use crate::strata::{ConditionCategory, ConditionMap};

pub const N_TIERS: usize = 6;

/// Size of each signal synonym family. A planted day carries two distinct
/// diagnosis-family codes and two distinct medication-family codes; any
/// family member counts, the way one therapy spans many billing codes.
/// Pairwise co-occurrence inside events lets unsupervised embeddings
/// cluster the family while each single code stays rare.
pub const N_SIGNAL_VARIANTS: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Tier population shares, summing to 1.
    pub severity_mix: [f64; N_TIERS],
    /// Acute (non-chronic) code pool sizes per channel.
    pub dx_vocab: usize,
    pub px_vocab: usize,
    pub rx_vocab: usize,
    pub seed: u64,
    /// Cross-channel signal strength in [0, 1]; the cost multiplier for
    /// signal patients is 1 + 2 * strength.
    pub signal_strength: f64,
    pub observation_year: i32,
    /// Next-year base cost per tier: (mu, sigma) of a lognormal in
    /// log-dollars.
    pub tier_cost: [(f64, f64); N_TIERS],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 1000,
            // population shares mirroring a Medicare-like severity split
            severity_mix: [0.11, 0.19, 0.26, 0.18, 0.17, 0.09],
            dx_vocab: 120,
            px_vocab: 90,
            rx_vocab: 70,
            seed: 42,
            signal_strength: 0.0,
            observation_year: 2016,
            tier_cost: [
                (1500f64.ln(), 0.35),
                (3000f64.ln(), 0.35),
                (6000f64.ln(), 0.35),
                (12000f64.ln(), 0.35),
                (22000f64.ln(), 0.35),
                (40000f64.ln(), 0.35),
            ],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.severity_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "severity_mix must sum to 1, got {sum}"
            )));
        }
        if self.severity_mix.iter().any(|p| *p < 0.0) {
            return Err(Error::Invalid("severity_mix entries must be nonnegative".into()));
        }
        if self.dx_vocab < 1 || self.px_vocab < 1 || self.rx_vocab < 1 {
            return Err(Error::Invalid("vocabulary sizes must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::Invalid(format!(
                "signal_strength must lie in [0,1], got {}",
                self.signal_strength
            )));
        }
        if self.n_patients == 0 {
            return Err(Error::Invalid("n_patients must be positive".into()));
        }
        Ok(())
    }

    pub fn result_year(&self) -> i32 {
        self.observation_year + 1
    }

    pub fn signal_multiplier(&self) -> f64 {
        1.0 + 2.0 * self.signal_strength
    }
}

/// Ground truth emitted alongside the claims files.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientLabel {
    pub patient_id: String,
    /// 1..=6
    pub tier: u8,
    /// Mean of the patient's next-year cost distribution.
    pub expected_cost: f64,
    pub has_signal: bool,
    /// Days carrying the planted signal pair (empty without signal).
    pub signal_days: Vec<NaiveDate>,
}

// Per-tier shape parameters. Index 0 = relatively healthy .. 5 = disabled.
struct TierShape {
    events: (usize, usize),
    claims_per_event_extra: f64, // mean extra medical claims beyond the first
    provider_pool: usize,
    dx_extra_mean: f64, // mean extra dx codes beyond the first per claim
    px_prob: f64,
    pharmacy_day_prob: f64,
    medical_day_prob: f64,
    claim_cost_base: f64,
    signal_prob: f64,
    ccc: (usize, usize),
    ncc: (usize, usize),
    frailty: (usize, usize),
    disabled_flag: bool,
}

const TIER_SHAPES: [TierShape; N_TIERS] = [
    TierShape {
        events: (4, 7),
        claims_per_event_extra: 0.3,
        provider_pool: 2,
        dx_extra_mean: 0.6,
        px_prob: 0.40,
        pharmacy_day_prob: 0.25,
        medical_day_prob: 0.95,
        claim_cost_base: 120.0,
        signal_prob: 0.10,
        ccc: (0, 0),
        ncc: (0, 0),
        frailty: (0, 0),
        disabled_flag: false,
    },
    TierShape {
        events: (6, 10),
        claims_per_event_extra: 0.7,
        provider_pool: 3,
        dx_extra_mean: 1.0,
        px_prob: 0.50,
        pharmacy_day_prob: 0.35,
        medical_day_prob: 0.93,
        claim_cost_base: 160.0,
        signal_prob: 0.16,
        ccc: (0, 0),
        ncc: (1, 5),
        frailty: (0, 0),
        disabled_flag: false,
    },
    TierShape {
        events: (9, 14),
        claims_per_event_extra: 1.3,
        provider_pool: 4,
        dx_extra_mean: 1.5,
        px_prob: 0.60,
        pharmacy_day_prob: 0.45,
        medical_day_prob: 0.90,
        claim_cost_base: 220.0,
        signal_prob: 0.22,
        ccc: (1, 2),
        ncc: (0, 5),
        frailty: (0, 0),
        disabled_flag: false,
    },
    TierShape {
        events: (13, 19),
        claims_per_event_extra: 2.1,
        provider_pool: 6,
        dx_extra_mean: 2.2,
        px_prob: 0.70,
        pharmacy_day_prob: 0.55,
        medical_day_prob: 0.90,
        claim_cost_base: 300.0,
        signal_prob: 0.28,
        ccc: (3, 5),
        ncc: (6, 9),
        frailty: (0, 1),
        disabled_flag: false,
    },
    TierShape {
        events: (17, 24),
        claims_per_event_extra: 3.0,
        provider_pool: 8,
        dx_extra_mean: 2.8,
        px_prob: 0.80,
        pharmacy_day_prob: 0.65,
        medical_day_prob: 0.88,
        claim_cost_base: 380.0,
        signal_prob: 0.34,
        ccc: (1, 3),
        ncc: (2, 6),
        frailty: (2, 4),
        disabled_flag: false,
    },
    TierShape {
        events: (21, 30),
        claims_per_event_extra: 4.0,
        provider_pool: 10,
        dx_extra_mean: 3.4,
        px_prob: 0.85,
        pharmacy_day_prob: 0.75,
        medical_day_prob: 0.85,
        claim_cost_base: 450.0,
        signal_prob: 0.40,
        ccc: (2, 5),
        ncc: (3, 8),
        frailty: (0, 3),
        disabled_flag: true,
    },
];

const CCC_CONDITIONS: [&str; 9] = [
    "ischemic_heart_disease",
    "chronic_kidney_disease",
    "heart_failure",
    "diabetes",
    "dementia",
    "lung_disease",
    "psychiatric_disease",
    "arrhythmia",
    "stroke",
];

const NCC_CONDITIONS: [&str; 12] = [
    "hypertension",
    "hyperlipidemia",
    "arthritis",
    "thyroid_disease",
    "osteoporosis",
    "eye_disease",
    "skin_ulcer",
    "substance_abuse",
    "cancer",
    "immune_disorder",
    "liver_disease",
    "anemia",
];

const FRAILTY_INDICATORS: [&str; 10] = [
    "gait_abnormality",
    "malnutrition",
    "failure_to_thrive",
    "cachexia",
    "debility",
    "walking_difficulty",
    "fall",
    "muscle_weakness",
    "pressure_ulcer",
    "senility",
];

const DISABLED_FLAGS: [&str; 2] = ["esrd", "disability"];

fn condition_code(condition: &str, variant: usize) -> String {
    format!("DX_{}_{}", condition.to_uppercase(), (b'A' + variant as u8) as char)
}

pub fn signal_dx_code(k: usize) -> String {
    format!("DX_SIG_{k:02}")
}

pub fn signal_rx_code(k: usize) -> String {
    format!("RX_SIG_{k:02}")
}

fn distinct_variants<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < n.min(N_SIGNAL_VARIANTS) {
        picked.insert(rng.gen_range(0..N_SIGNAL_VARIANTS));
    }
    picked.into_iter().collect()
}

/// The demo condition map matching the generator's chronic-condition codes
/// (two code variants per condition).
pub fn demo_condition_map() -> ConditionMap {
    let mut map = ConditionMap::new();
    let mut add = |names: &[&str], cat: ConditionCategory| {
        for name in names {
            for v in 0..2 {
                map.insert(name, cat, &condition_code(name, v))
                    .expect("generator conditions are distinct");
            }
        }
    };
    add(&CCC_CONDITIONS, ConditionCategory::Ccc);
    add(&NCC_CONDITIONS, ConditionCategory::Ncc);
    add(&FRAILTY_INDICATORS, ConditionCategory::Frailty);
    add(&DISABLED_FLAGS, ConditionCategory::DisabledFlag);
    map
}

/// Largest-remainder tier quotas, then a seeded shuffle of the assignment.
fn assign_tiers(cfg: &SynthConfig) -> Vec<u8> {
    let n = cfg.n_patients;
    let mut counts = [0usize; N_TIERS];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(N_TIERS);
    let mut assigned = 0usize;
    for (t, (count, share)) in counts.iter_mut().zip(cfg.severity_mix).enumerate() {
        let exact = share * n as f64;
        *count = exact.floor() as usize;
        assigned += *count;
        remainders.push((exact - exact.floor(), t));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for i in 0..n - assigned {
        counts[remainders[i % N_TIERS].1] += 1;
    }
    let mut tiers = Vec::with_capacity(n);
    for (t, c) in counts.iter().enumerate() {
        tiers.extend(std::iter::repeat_n(t as u8 + 1, *c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    use rand::seq::SliceRandom;
    tiers.shuffle(&mut rng);
    tiers
}

fn sample_range<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> usize {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// 1 + Binomial(8, extra/8): integer count with the requested mean.
fn sample_count<R: Rng>(rng: &mut R, extra_mean: f64) -> usize {
    let p = (extra_mean / 8.0).min(1.0);
    1 + (0..8).filter(|_| rng.gen::<f64>() < p).count()
}

fn distinct_days<R: Rng>(rng: &mut R, year: i32, n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("jan 1 exists");
    let mut picked = BTreeSet::new();
    while picked.len() < n.min(365) {
        picked.insert(rng.gen_range(0..365u32));
    }
    picked.into_iter().map(|d| start + chrono::Duration::days(d as i64)).collect()
}

fn cents(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

struct PatientGen<'a> {
    cfg: &'a SynthConfig,
    records: Vec<ClaimRecord>,
    claim_counter: usize,
}

impl<'a> PatientGen<'a> {
    fn claim_id(&mut self, patient_id: &str) -> String {
        self.claim_counter += 1;
        format!("{patient_id}c{}", self.claim_counter)
    }

    #[allow(clippy::too_many_arguments)]
    fn medical_row(
        &mut self,
        patient_id: &str,
        claim_id: &str,
        provider: &str,
        day: NaiveDate,
        dx: Vec<String>,
        px: Option<String>,
        paid: f64,
    ) {
        let paid = cents(paid.max(0.01));
        self.records.push(ClaimRecord {
            patient_id: patient_id.to_string(),
            claim_id: claim_id.to_string(),
            provider_id: provider.to_string(),
            kind: ClaimKind::Medical,
            service_date: day,
            dx_codes: dx,
            px_code: px,
            rx_code: None,
            amount_paid: paid,
            amount_billed: cents(paid * 1.6),
            amount_allowed: cents(paid * 1.2),
        });
    }

    fn pharmacy_row(
        &mut self,
        patient_id: &str,
        claim_id: &str,
        provider: &str,
        day: NaiveDate,
        rx: String,
        paid: f64,
    ) {
        let paid = cents(paid.max(0.01));
        self.records.push(ClaimRecord {
            patient_id: patient_id.to_string(),
            claim_id: claim_id.to_string(),
            provider_id: provider.to_string(),
            kind: ClaimKind::Pharmacy,
            service_date: day,
            dx_codes: Vec::new(),
            px_code: None,
            rx_code: Some(rx),
            amount_paid: paid,
            amount_billed: cents(paid * 1.3),
            amount_allowed: cents(paid * 1.1),
        });
    }
}

/// Generate the in-memory cohort: claim records (observation + result
/// year) and ground-truth labels.
pub fn generate_records(cfg: &SynthConfig) -> Result<(Vec<ClaimRecord>, Vec<PatientLabel>)> {
    cfg.validate()?;
    let tiers = assign_tiers(cfg);
    let mut gen = PatientGen { cfg, records: Vec::new(), claim_counter: 0 };
    let mut labels = Vec::with_capacity(cfg.n_patients);
    for (idx, &tier) in tiers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(idx as u64 + 1);
        labels.push(generate_patient(&mut gen, idx, tier, &mut rng)?);
    }
    Ok((gen.records, labels))
}

fn generate_patient(
    gen: &mut PatientGen,
    idx: usize,
    tier: u8,
    rng: &mut ChaCha8Rng,
) -> Result<PatientLabel> {
    let cfg = gen.cfg;
    let shape = &TIER_SHAPES[(tier - 1) as usize];
    let patient_id = format!("P{idx:05}");

    // patient-specific provider pool out of a global roster
    let pool: Vec<String> = {
        let mut seen = BTreeSet::new();
        while seen.len() < shape.provider_pool {
            seen.insert(rng.gen_range(0..300u32));
        }
        seen.into_iter().map(|p| format!("PR{p:03}")).collect()
    };

    // owned chronic conditions
    let pick_conditions = |rng: &mut ChaCha8Rng, pool: &[&str], lo: usize, hi: usize| {
        let n = sample_range(rng, lo, hi).min(pool.len());
        let mut chosen = BTreeSet::new();
        while chosen.len() < n {
            chosen.insert(pool[rng.gen_range(0..pool.len())]);
        }
        chosen.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let mut chronic: Vec<String> = Vec::new();
    chronic.extend(pick_conditions(rng, &CCC_CONDITIONS, shape.ccc.0, shape.ccc.1));
    chronic.extend(pick_conditions(rng, &NCC_CONDITIONS, shape.ncc.0, shape.ncc.1));
    chronic.extend(pick_conditions(rng, &FRAILTY_INDICATORS, shape.frailty.0, shape.frailty.1));
    if shape.disabled_flag {
        chronic.push(DISABLED_FLAGS[rng.gen_range(0..DISABLED_FLAGS.len())].to_string());
    }

    let n_events = sample_range(rng, shape.events.0, shape.events.1).max(2);
    let days = distinct_days(rng, cfg.observation_year, n_events);

    // signal planting happens for every cohort so RNG consumption does not
    // depend on signal_strength; the multiplier alone scales with it
    let has_signal = rng.gen::<f64>() < shape.signal_prob;
    let mut signal_day_idx = vec![rng.gen_range(0..days.len())];
    // extra planted days make the pair reliably visible in sequences
    for p_extra in [0.9, 0.5] {
        let extra = rng.gen_range(0..days.len());
        if rng.gen::<f64>() < p_extra && !signal_day_idx.contains(&extra) {
            signal_day_idx.push(extra);
        }
    }

    let mut pending_conditions: Vec<String> = chronic.clone();
    let mut medical_claims_made = 0usize;

    for (di, &day) in days.iter().enumerate() {
        let is_signal_day = has_signal && signal_day_idx.contains(&di);
        let has_pharmacy = rng.gen::<f64>() < shape.pharmacy_day_prob || is_signal_day;
        let has_medical =
            rng.gen::<f64>() < shape.medical_day_prob || !has_pharmacy || is_signal_day;

        if has_medical {
            let n_claims = sample_count(rng, shape.claims_per_event_extra).min(pool.len());
            // distinct providers within the day
            let mut providers = pool.clone();
            for i in 0..n_claims {
                let j = rng.gen_range(i..providers.len());
                providers.swap(i, j);
            }
            for (ci, provider) in providers.iter().take(n_claims).enumerate() {
                let claim_id = gen.claim_id(&patient_id);
                medical_claims_made += 1;
                let mut dx = Vec::new();
                let n_dx = sample_count(rng, shape.dx_extra_mean).min(8);
                for _ in 0..n_dx {
                    // chronic conditions echo through the year
                    if !chronic.is_empty() && rng.gen::<f64>() < 0.4 {
                        let c = &chronic[rng.gen_range(0..chronic.len())];
                        if !c.contains("SIG") {
                            dx.push(condition_code(c, rng.gen_range(0..2)));
                        }
                    } else {
                        dx.push(format!("DXA{:04}", rng.gen_range(0..cfg.dx_vocab)));
                    }
                }
                if dx.is_empty() {
                    dx.push(format!("DXA{:04}", rng.gen_range(0..cfg.dx_vocab)));
                }
                // make sure every owned condition shows up at least once
                if let Some(cond) = pending_conditions.pop() {
                    if dx.len() < crate::claims::MAX_DX_CODES {
                        dx.push(condition_code(&cond, 0));
                    } else {
                        pending_conditions.push(cond);
                    }
                }
                if is_signal_day && ci == 0 {
                    dx.truncate(crate::claims::MAX_DX_CODES - 2);
                    for k in distinct_variants(rng, 2) {
                        dx.push(signal_dx_code(k));
                    }
                }
                dx.truncate(crate::claims::MAX_DX_CODES);
                let px = (rng.gen::<f64>() < shape.px_prob)
                    .then(|| format!("PX{:04}", rng.gen_range(0..cfg.px_vocab)));
                let cost = shape.claim_cost_base
                    * Normal::new(0.0f64, 0.7).expect("valid sigma").sample(rng).exp();
                // an extra row on the same claim (a second procedure)
                if rng.gen::<f64>() < 0.25 {
                    let px2 = Some(format!("PX{:04}", rng.gen_range(0..cfg.px_vocab)));
                    let half = cost / 2.0;
                    gen.medical_row(&patient_id, &claim_id, provider, day, dx.clone(), px, half);
                    gen.medical_row(&patient_id, &claim_id, provider, day, dx, px2, half);
                } else {
                    gen.medical_row(&patient_id, &claim_id, provider, day, dx, px, cost);
                }
            }
        }

        if has_pharmacy {
            let pharmacy_provider = format!("PH{:03}", rng.gen_range(0..40u32));
            let claim_id = gen.claim_id(&patient_id);
            if is_signal_day {
                // the signal medications are filled alone that day
                for k in distinct_variants(rng, 3) {
                    gen.pharmacy_row(
                        &patient_id,
                        &claim_id,
                        &pharmacy_provider,
                        day,
                        signal_rx_code(k),
                        cents(45.0),
                    );
                }
            } else {
                let n_rx = 1 + usize::from(rng.gen::<f64>() < (tier as f64 - 1.0) / 8.0);
                for _ in 0..n_rx {
                    let rx = format!("RX{:04}", rng.gen_range(0..cfg.rx_vocab));
                    let cost = (60.0 + 20.0 * tier as f64)
                        * Normal::new(0.0f64, 0.6).expect("valid sigma").sample(rng).exp();
                    gen.pharmacy_row(&patient_id, &claim_id, &pharmacy_provider, day, rx, cost);
                }
            }
        }
    }
    // the >= 2 claims filter needs two distinct observation claims
    debug_assert!(medical_claims_made + 1 >= 1);

    // next-year cost: lognormal base, multiplied for signal carriers
    let (mu, sigma) = cfg.tier_cost[(tier - 1) as usize];
    let mult = if has_signal { cfg.signal_multiplier() } else { 1.0 };
    let noise: f64 = Normal::new(0.0, sigma).expect("valid sigma").sample(rng);
    let actual = (mu + noise).exp() * mult;
    let expected = (mu + sigma * sigma / 2.0).exp() * mult;

    {
        let n_result_claims = rng.gen_range(2..=4usize);
        let mut weights: Vec<f64> = (0..n_result_claims).map(|_| rng.gen_range(0.2..1.0)).collect();
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        let result_days = distinct_days(rng, cfg.result_year(), n_result_claims);
        let mut remaining = cents(actual);
        for (k, day) in result_days.iter().enumerate() {
            let amount = if k + 1 == n_result_claims {
                remaining
            } else {
                let a = cents(actual * weights[k]);
                remaining = cents(remaining - a);
                a
            };
            let claim_id = gen.claim_id(&patient_id);
            let provider = &pool[rng.gen_range(0..pool.len())];
            gen.medical_row(
                &patient_id,
                &claim_id,
                provider,
                *day,
                vec![format!("DXA{:04}", rng.gen_range(0..cfg.dx_vocab))],
                None,
                amount,
            );
        }
    }

    Ok(PatientLabel {
        patient_id,
        tier,
        expected_cost: cents(expected),
        has_signal,
        signal_days: if has_signal {
            signal_day_idx.iter().map(|&i| days[i]).collect()
        } else {
            Vec::new()
        },
    })
}

/// Paths produced by [`generate_cohort`].
#[derive(Clone, Debug)]
pub struct CohortFiles {
    pub medical: PathBuf,
    pub pharmacy: PathBuf,
    pub labels: PathBuf,
    pub condition_map: PathBuf,
}

pub const LABELS_HEADER: &str = "patient_id,true_tier,true_expected_cost";

/// Generate and write the four cohort files into `out_dir`.
pub fn generate_cohort(cfg: &SynthConfig, out_dir: &Path) -> Result<(CohortFiles, Vec<PatientLabel>)> {
    let (records, labels) = generate_records(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = CohortFiles {
        medical: out_dir.join("medical.csv"),
        pharmacy: out_dir.join("pharmacy.csv"),
        labels: out_dir.join("labels.csv"),
        condition_map: out_dir.join("condition_map.csv"),
    };
    write_claims(&records, &files.medical, &files.pharmacy)?;
    let mut text = String::from(LABELS_HEADER);
    text.push('\n');
    for l in &labels {
        text.push_str(&format!("{},{},{:.2}\n", l.patient_id, l.tier, l.expected_cost));
    }
    std::fs::write(&files.labels, text).map_err(|e| Error::io(&files.labels, e))?;
    demo_condition_map().save(&files.condition_map)?;
    Ok((files, labels))
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, u8, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != LABELS_HEADER {
                return Err(Error::Format(format!(
                    "{}: expected header {LABELS_HEADER:?}",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Format(format!("{}:{}: expected 3 fields", path.display(), i + 1)));
        }
        let bad = |what: &str| Error::Format(format!("{}:{}: bad {what}", path.display(), i + 1));
        out.push((
            f[0].to_string(),
            f[1].parse().map_err(|_| bad("tier"))?,
            f[2].parse().map_err(|_| bad("cost"))?,
        ));
    }
    Ok(out)
}
