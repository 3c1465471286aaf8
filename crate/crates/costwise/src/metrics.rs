//! Evaluation protocol: MAPE, monetary metrics (MAE / underpay / overpay /
//! netpay), Wilcoxon signed-rank significance, Pearson correlation,
//! repeated random sub-sampling splits, and stratified report assembly.
//!
//! Summation order is pinned: underpay and overpay are accumulated in
//! patient index order and netpay is defined as their single-addition sum,
//! so `netpay == underpay + overpay` holds bitwise and `mae == netpay / n`
//! by construction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::strata::{Severity, StrataAssignment};
use crate::Dollars;

/// MAPE in percent over patients with positive actual cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mape {
    pub value: f64,
    /// Patients included.
    pub n_used: usize,
    /// Patients excluded for a zero actual.
    pub excluded_zero: usize,
}

/// 100 * mean(|A - P| / A) over patients with A > 0. Zero-actual patients
/// are excluded and counted; a cohort with no positive actual is an error.
pub fn mape(actuals: &[Dollars], predictions: &[Dollars]) -> Result<Mape> {
    if actuals.len() != predictions.len() {
        return Err(Error::Invalid(format!(
            "mape: {} actuals vs {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    let mut sum = 0.0;
    let mut n_used = 0usize;
    let mut excluded = 0usize;
    for (a, p) in actuals.iter().zip(predictions.iter()) {
        if *a > 0.0 {
            sum += (a - p).abs() / a;
            n_used += 1;
        } else {
            excluded += 1;
        }
    }
    if n_used == 0 {
        return Err(Error::Data(
            "mape undefined: every patient has zero actual cost".into(),
        ));
    }
    Ok(Mape { value: 100.0 * sum / n_used as f64, n_used, excluded_zero: excluded })
}

/// Sign-partitioned dollar error totals.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Monetary {
    pub mae: f64,
    pub underpay: f64,
    pub overpay: f64,
    pub netpay: f64,
    pub n: usize,
}

/// Underpay sums A - P where the actual exceeds the prediction; overpay
/// sums P - A where the prediction exceeds the actual; netpay is their sum
/// and MAE is netpay / n.
pub fn monetary(actuals: &[Dollars], predictions: &[Dollars]) -> Result<Monetary> {
    if actuals.len() != predictions.len() {
        return Err(Error::Invalid(format!(
            "monetary: {} actuals vs {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    let mut underpay = 0.0;
    let mut overpay = 0.0;
    for (a, p) in actuals.iter().zip(predictions.iter()) {
        if a > p {
            underpay += a - p;
        } else if a < p {
            overpay += p - a;
        }
    }
    let netpay = underpay + overpay;
    let n = actuals.len();
    let mae = if n == 0 { 0.0 } else { netpay / n as f64 };
    Ok(Monetary { mae, underpay, overpay, netpay, n })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
    /// All paired differences were zero; p = 1 by convention.
    AllZero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wilcoxon {
    pub p_value: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Nonzero differences actually ranked.
    pub n_used: usize,
    pub method: WilcoxonMethod,
}

/// Exact-enumeration cutoff: at or below this many nonzero differences the
/// full sign-pattern distribution is evaluated.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired differences a[i] - b[i].
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "wilcoxon: {} vs {} paired values",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    wilcoxon_from_diffs(&diffs)
}

/// Same test from precomputed differences. Zero differences are dropped
/// (signed-rank convention).
pub fn wilcoxon_from_diffs(diffs: &[f64]) -> Result<Wilcoxon> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Ok(Wilcoxon {
            p_value: 1.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n_used: 0,
            method: WilcoxonMethod::AllZero,
        });
    }
    let n = nonzero.len();
    // midranks of |d|, scaled by 2 so ties stay integral
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        nonzero[i].abs().partial_cmp(&nonzero[j].abs()).expect("finite differences")
    });
    let mut scaled_ranks = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && nonzero[order[j]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        // ranks i+1 ..= j share the midrank (i+1 + j) / 2; doubled: i+1+j
        let doubled = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            scaled_ranks[k] = doubled;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    let w_plus_scaled: u64 = (0..n).filter(|&k| nonzero[k] > 0.0).map(|k| scaled_ranks[k]).sum();
    let total_scaled: u64 = scaled_ranks.iter().sum();
    let w_plus = w_plus_scaled as f64 / 2.0;
    let w_minus = (total_scaled - w_plus_scaled) as f64 / 2.0;

    let (p, method) = if n <= WILCOXON_EXACT_MAX_N {
        (exact_two_sided_p(&scaled_ranks, w_plus_scaled), WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 =
            tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        if var <= 0.0 {
            (1.0, WilcoxonMethod::NormalApproximation)
        } else {
            let d = w_plus - mean;
            // continuity correction toward the mean
            let z = (d - 0.5 * d.signum()) / var.sqrt();
            let normal = statrs::distribution::Normal::new(0.0, 1.0)
                .expect("unit normal parameters are valid");
            ((2.0 * normal.cdf(-z.abs())).min(1.0), WilcoxonMethod::NormalApproximation)
        }
    };
    Ok(Wilcoxon { p_value: p, w_plus, w_minus, n_used: n, method })
}

/// Exact two-sided p via the full distribution of W+ over all 2^n sign
/// assignments, computed by subset-sum counting on the doubled ranks.
fn exact_two_sided_p(scaled_ranks: &[u64], w_plus_scaled: u64) -> f64 {
    let total: u64 = scaled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in scaled_ranks {
        let r = r as usize;
        for s in (r..counts.len()).rev() {
            counts[s] += counts[s - r];
        }
    }
    let denom = 2f64.powi(scaled_ranks.len() as i32);
    let w = w_plus_scaled as usize;
    let lower: u64 = counts[..=w].iter().sum();
    let upper: u64 = counts[w..].iter().sum();
    let p = 2.0 * (lower.min(upper) as f64) / denom;
    p.min(1.0)
}

/// Product-moment correlation. Errors on length < 2 or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Invalid(format!(
            "pearson needs two equal-length series of >= 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Data(
            "pearson undefined: a series has zero variance".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Repeated random sub-sampling plan.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_shuffles: usize,
    pub fractions: (f64, f64, f64),
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan { seed: 0, n_shuffles: 20, fractions: (0.60, 0.20, 0.20) }
    }
}

impl SplitPlan {
    pub fn new(seed: u64, n_shuffles: usize) -> Self {
        SplitPlan { seed, n_shuffles, ..Default::default() }
    }
}

/// One shuffle's disjoint, exhaustive partition of patient ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Shuffle {
    pub index: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Build the per-shuffle partitions. Ids are sorted before shuffling so
/// the plan depends only on the id set and the seed. Each shuffle is an
/// independent permutation cut at floor(train), floor(val).
pub fn make_splits(patient_ids: &[String], plan: &SplitPlan) -> Result<Vec<Shuffle>> {
    if patient_ids.len() < 10 {
        return Err(Error::Invalid(format!(
            "make_splits needs >= 10 patients, got {}",
            patient_ids.len()
        )));
    }
    let (ft, fv, fs) = plan.fractions;
    if (ft + fv + fs - 1.0).abs() > 1e-9 || ft <= 0.0 || fv < 0.0 || fs <= 0.0 {
        return Err(Error::Invalid(format!(
            "split fractions must be positive and sum to 1, got {:?}",
            plan.fractions
        )));
    }
    let mut ids: Vec<String> = patient_ids.to_vec();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    let n_train = (ft * n as f64).floor() as usize;
    let n_val = (fv * n as f64).floor() as usize;
    let mut out = Vec::with_capacity(plan.n_shuffles);
    for s in 0..plan.n_shuffles {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(s as u64 + 1);
        let mut perm = ids.clone();
        perm.shuffle(&mut rng);
        let train = perm[..n_train].to_vec();
        let val = perm[n_train..n_train + n_val].to_vec();
        let test = perm[n_train + n_val..].to_vec();
        out.push(Shuffle { index: s, train, val, test });
    }
    Ok(out)
}

/// How a stratified report groups patients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupBy {
    Severity,
    EntropyQuintile,
    /// Top 5% of patients by actual cost vs the rest.
    CostLevel,
    /// High-need severity categories (4-6) vs the rest.
    NeedLevel,
}

impl GroupBy {
    pub fn as_str(&self) -> &'static str {
        match self {
            GroupBy::Severity => "severity",
            GroupBy::EntropyQuintile => "entropy_quintile",
            GroupBy::CostLevel => "cost_level",
            GroupBy::NeedLevel => "need_level",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "severity" => Ok(GroupBy::Severity),
            "entropy_quintile" => Ok(GroupBy::EntropyQuintile),
            "cost_level" => Ok(GroupBy::CostLevel),
            "need_level" => Ok(GroupBy::NeedLevel),
            other => Err(Error::Invalid(format!("unknown group_by {other:?}"))),
        }
    }
}

/// One prediction row: (patient, actual, predicted).
pub type PredictionRow = (String, Dollars, Dollars);

/// Test-set predictions of one model variant over every shuffle.
#[derive(Clone, Debug)]
pub struct ModelRuns {
    pub name: String,
    /// outer index = shuffle
    pub shuffles: Vec<Vec<PredictionRow>>,
}

/// Metrics of one stratum within one shuffle.
#[derive(Clone, Debug, serde::Serialize)]
pub struct StratumMetrics {
    pub stratum: String,
    pub n: usize,
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    pub mae: f64,
    pub underpay: f64,
    pub overpay: f64,
    pub netpay: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ShuffleMetrics {
    pub shuffle: usize,
    pub overall: StratumMetrics,
    pub strata: Vec<StratumMetrics>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ModelReport {
    pub model: String,
    pub shuffles: Vec<ShuffleMetrics>,
    /// stratum -> (mean MAPE over shuffles, sd)
    pub mean_mape: BTreeMap<String, (f64, f64)>,
}

/// Improvement of one model over another plus significance.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PairwiseComparison {
    pub better: String,
    pub baseline: String,
    /// stratum -> mean MAPE difference (baseline - better) in points
    pub mape_improvement: BTreeMap<String, f64>,
    /// per-shuffle two-sided p on paired per-patient absolute errors
    pub per_shuffle_p: Vec<f64>,
    /// pooled over all shuffles
    pub pooled_p: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EvaluationReport {
    pub group_by: String,
    pub models: Vec<ModelReport>,
    pub comparisons: Vec<PairwiseComparison>,
}

fn stratum_label(group_by: GroupBy, s: &StrataAssignment, cost_cut: f64, actual: f64) -> String {
    match group_by {
        GroupBy::Severity => s.severity.as_str().to_string(),
        GroupBy::EntropyQuintile => format!("q{}", s.entropy_quintile),
        GroupBy::CostLevel => {
            if actual >= cost_cut {
                "high_cost".to_string()
            } else {
                "low_cost".to_string()
            }
        }
        GroupBy::NeedLevel => {
            if s.severity.is_high_need() {
                "high_need".to_string()
            } else {
                "low_need".to_string()
            }
        }
    }
}

fn all_labels(group_by: GroupBy) -> Vec<String> {
    match group_by {
        GroupBy::Severity => Severity::all().iter().map(|s| s.as_str().to_string()).collect(),
        GroupBy::EntropyQuintile => (1..=5).map(|q| format!("q{q}")).collect(),
        GroupBy::CostLevel => vec!["low_cost".into(), "high_cost".into()],
        GroupBy::NeedLevel => vec!["low_need".into(), "high_need".into()],
    }
}

fn metrics_of(stratum: &str, rows: &[(&PredictionRow, ())]) -> StratumMetrics {
    let actuals: Vec<f64> = rows.iter().map(|(r, _)| r.1).collect();
    let preds: Vec<f64> = rows.iter().map(|(r, _)| r.2).collect();
    let m = monetary(&actuals, &preds).expect("equal lengths by construction");
    let (mape_v, excl) = match mape(&actuals, &preds) {
        Ok(mp) => (Some(mp.value), mp.excluded_zero),
        Err(_) => (None, actuals.len()),
    };
    StratumMetrics {
        stratum: stratum.to_string(),
        n: rows.len(),
        mape: mape_v,
        mape_excluded: excl,
        mae: m.mae,
        underpay: m.underpay,
        overpay: m.overpay,
        netpay: m.netpay,
    }
}

/// 95th-percentile cost cut: the threshold marking the top 5% of the
/// cohort by actual cost.
pub fn high_cost_threshold(strata_actuals: &[f64]) -> f64 {
    if strata_actuals.is_empty() {
        return f64::INFINITY;
    }
    let mut sorted = strata_actuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    let idx = ((sorted.len() as f64) * 0.95).floor() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Assemble the stratified report for one or more model variants. Every
/// predicted patient must appear in `strata`. Empty strata produce rows
/// with n = 0 and null metrics.
pub fn stratified_report(
    runs: &[ModelRuns],
    strata: &BTreeMap<String, StrataAssignment>,
    cohort_actuals: &[f64],
    group_by: GroupBy,
) -> Result<EvaluationReport> {
    for r in runs {
        for shuffle in &r.shuffles {
            for (pid, _, _) in shuffle {
                if !strata.contains_key(pid) {
                    return Err(Error::Invalid(format!(
                        "patient {pid} predicted by {} has no stratum",
                        r.name
                    )));
                }
            }
        }
    }
    let cost_cut = high_cost_threshold(cohort_actuals);
    let labels = all_labels(group_by);

    let mut models = Vec::with_capacity(runs.len());
    for r in runs {
        let mut shuffles = Vec::with_capacity(r.shuffles.len());
        for (si, rows) in r.shuffles.iter().enumerate() {
            let mut grouped: BTreeMap<String, Vec<(&PredictionRow, ())>> = BTreeMap::new();
            for label in &labels {
                grouped.insert(label.clone(), Vec::new());
            }
            let mut all_rows = Vec::with_capacity(rows.len());
            for row in rows {
                let s = &strata[&row.0];
                let label = stratum_label(group_by, s, cost_cut, row.1);
                grouped.entry(label).or_default().push((row, ()));
                all_rows.push((row, ()));
            }
            let strata_metrics: Vec<StratumMetrics> = labels
                .iter()
                .map(|label| {
                    let rows = &grouped[label];
                    if rows.is_empty() {
                        StratumMetrics {
                            stratum: label.clone(),
                            n: 0,
                            mape: None,
                            mape_excluded: 0,
                            mae: 0.0,
                            underpay: 0.0,
                            overpay: 0.0,
                            netpay: 0.0,
                        }
                    } else {
                        metrics_of(label, rows)
                    }
                })
                .collect();
            shuffles.push(ShuffleMetrics {
                shuffle: si,
                overall: metrics_of("overall", &all_rows),
                strata: strata_metrics,
            });
        }
        let mut mean_mape = BTreeMap::new();
        let mut labels_plus = labels.clone();
        labels_plus.push("overall".to_string());
        for label in &labels_plus {
            let vals: Vec<f64> = shuffles
                .iter()
                .flat_map(|s| {
                    if label == "overall" {
                        s.overall.mape
                    } else {
                        s.strata.iter().find(|m| &m.stratum == label).and_then(|m| m.mape)
                    }
                })
                .collect();
            if !vals.is_empty() {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / vals.len() as f64;
                mean_mape.insert(label.clone(), (mean, var.sqrt()));
            }
        }
        models.push(ModelReport { model: r.name.clone(), shuffles, mean_mape });
    }

    // pairwise comparisons: each later model against the first as baseline,
    // plus every ordered pair when there are exactly two
    let mut comparisons = Vec::new();
    for i in 1..runs.len() {
        comparisons.push(compare_models(&runs[0], &runs[i], &models[0], &models[i])?);
    }
    Ok(EvaluationReport { group_by: group_by.as_str().to_string(), models, comparisons })
}

fn compare_models(
    base: &ModelRuns,
    other: &ModelRuns,
    base_report: &ModelReport,
    other_report: &ModelReport,
) -> Result<PairwiseComparison> {
    if base.shuffles.len() != other.shuffles.len() {
        return Err(Error::Invalid(format!(
            "cannot compare {} ({} shuffles) with {} ({})",
            base.name,
            base.shuffles.len(),
            other.name,
            other.shuffles.len()
        )));
    }
    let mut per_shuffle_p = Vec::new();
    let mut pooled_diffs = Vec::new();
    for (sa, sb) in base.shuffles.iter().zip(other.shuffles.iter()) {
        let by_id: BTreeMap<&str, (f64, f64)> =
            sa.iter().map(|(id, a, p)| (id.as_str(), (*a, *p))).collect();
        let mut diffs = Vec::new();
        for (id, a, p) in sb {
            if let Some((a0, p0)) = by_id.get(id.as_str()) {
                debug_assert_eq!(a0, a);
                // |error under baseline| - |error under other|
                diffs.push((a0 - p0).abs() - (a - p).abs());
            }
        }
        per_shuffle_p.push(wilcoxon_from_diffs(&diffs)?.p_value);
        pooled_diffs.extend(diffs);
    }
    let pooled_p = wilcoxon_from_diffs(&pooled_diffs)?.p_value;
    let mut mape_improvement = BTreeMap::new();
    for (label, (mean_base, _)) in &base_report.mean_mape {
        if let Some((mean_other, _)) = other_report.mean_mape.get(label) {
            mape_improvement.insert(label.clone(), mean_base - mean_other);
        }
    }
    Ok(PairwiseComparison {
        better: other.name.clone(),
        baseline: base.name.clone(),
        mape_improvement,
        per_shuffle_p,
        pooled_p,
    })
}

/// Render the report as delimited text: one row per model/shuffle/stratum
/// plus cross-shuffle summary and improvement rows.
pub fn render_report_text(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("model,shuffle,stratum,n,mape,mape_excluded,mae,underpay,overpay,netpay\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "NA".into());
    for m in &report.models {
        for s in &m.shuffles {
            let mut rows = vec![&s.overall];
            rows.extend(s.strata.iter());
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{:.2},{:.2},{:.2},{:.2}\n",
                    m.model,
                    s.shuffle,
                    r.stratum,
                    r.n,
                    fmt_opt(r.mape),
                    r.mape_excluded,
                    r.mae,
                    r.underpay,
                    r.overpay,
                    r.netpay
                ));
            }
        }
        for (label, (mean, sd)) in &m.mean_mape {
            out.push_str(&format!(
                "{},mean_over_shuffles,{label},,{mean:.4},,sd={sd:.4},,,\n",
                m.model
            ));
        }
    }
    for c in &report.comparisons {
        for (label, diff) in &c.mape_improvement {
            out.push_str(&format!(
                "improvement[{} vs {}],,{label},,{diff:.4},,,,,\n",
                c.better, c.baseline
            ));
        }
        out.push_str(&format!(
            "wilcoxon[{} vs {}],pooled,,,p={:.6},,,,,\n",
            c.better, c.baseline, c.pooled_p
        ));
    }
    out
}
