//! Multi-channel entropy index, profile entropy, min-max normalization,
//! quintile bucketing, and the six-category need-severity codifier.
//!
//! Event entropy over the three code channels, with +1 smoothing so a zero
//! count never hits log(0):
//!
//!   P(E_x)  = (E_x + 1) / (Len + 3)         x in {dx, px, rx}, Len = sum E_x
//!   entropy = -Len * sum_x P(E_x) * log10(P(E_x))
//!
//! The index is nonnegative: more codes and a more even split across
//! channels both raise it. A profile's entropy is the plain mean of its
//! event entropies at the profile's granularity.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::claims::{ClaimEvent, PatientProfile};
use crate::error::{Error, Result};

/// Per-channel code counts of one claim event plus the entropy value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventEntropy {
    pub e_dx: usize,
    pub e_px: usize,
    pub e_rx: usize,
    pub len: usize,
    pub entropy: f64,
}

/// Intermediate quantities of the entropy computation, exposed so they can
/// be checked term by term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyParts {
    pub p: [f64; 3],
    pub log_p: [f64; 3],
    pub p_log_p: [f64; 3],
    pub sum: f64,
    pub entropy: f64,
}

pub fn event_entropy_parts(e_dx: usize, e_px: usize, e_rx: usize) -> EntropyParts {
    let len = (e_dx + e_px + e_rx) as f64;
    let denom = len + 3.0;
    let counts = [e_dx as f64, e_px as f64, e_rx as f64];
    let mut p = [0.0; 3];
    let mut log_p = [0.0; 3];
    let mut p_log_p = [0.0; 3];
    for i in 0..3 {
        p[i] = (counts[i] + 1.0) / denom;
        log_p[i] = p[i].log10();
        p_log_p[i] = p[i] * log_p[i];
    }
    // summing largest count first pins the float result, so permuting the
    // channels is invisible bit for bit
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| counts[j].partial_cmp(&counts[i]).expect("finite counts"));
    let sum = p_log_p[order[0]] + p_log_p[order[1]] + p_log_p[order[2]];
    // sum is <= 0, so -len * sum is the nonnegative index
    EntropyParts { p, log_p, p_log_p, sum, entropy: -len * sum }
}

/// Multi-channel event entropy from channel code counts.
pub fn event_entropy(e_dx: usize, e_px: usize, e_rx: usize) -> f64 {
    event_entropy_parts(e_dx, e_px, e_rx).entropy
}

pub fn event_entropy_of(event: &ClaimEvent) -> EventEntropy {
    let (e_dx, e_px, e_rx) = (event.dx_codes.len(), event.px_codes.len(), event.rx_codes.len());
    EventEntropy {
        e_dx,
        e_px,
        e_rx,
        len: e_dx + e_px + e_rx,
        entropy: event_entropy(e_dx, e_px, e_rx),
    }
}

/// Mean event entropy over a profile's claim events (at the profile's own
/// granularity). A profile without events has no defined entropy.
pub fn profile_entropy(profile: &PatientProfile) -> Result<f64> {
    if profile.events.is_empty() {
        return Err(Error::Invalid(format!(
            "patient {} has no claim events; profile entropy undefined",
            profile.patient_id
        )));
    }
    let sum: f64 = profile.events.iter().map(|e| event_entropy_of(e).entropy).sum();
    Ok(sum / profile.events.len() as f64)
}

/// Min-max normalization and quintile assignment over a cohort.
#[derive(Clone, Debug)]
pub struct EntropyBuckets {
    /// (patient_id, raw, normalized in [0,1], quintile 1..=5), input order.
    pub rows: Vec<(String, f64, f64, u8)>,
    /// True when the cohort had zero variance and everything collapsed to
    /// normalized 0 / quintile 1.
    pub degenerate: bool,
}

/// Scale entropies to [0,1] over the cohort and cut quintiles at the
/// 20/40/60/80th percentile ranks. Ties are broken by patient id so the
/// assignment is deterministic.
pub fn normalize_and_bucket(entropies: &[(String, f64)]) -> Result<EntropyBuckets> {
    if entropies.is_empty() {
        return Err(Error::Invalid("normalize_and_bucket: empty cohort".into()));
    }
    let min = entropies.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min);
    let max = entropies.iter().map(|(_, e)| *e).fold(f64::NEG_INFINITY, f64::max);
    let n = entropies.len();
    if !(max - min).is_normal() {
        let rows =
            entropies.iter().map(|(id, e)| (id.clone(), *e, 0.0, 1u8)).collect();
        return Ok(EntropyBuckets { rows, degenerate: true });
    }
    let span = max - min;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        entropies[a]
            .1
            .partial_cmp(&entropies[b].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| entropies[a].0.cmp(&entropies[b].0))
    });
    let mut quintile = vec![0u8; n];
    for (rank, &idx) in order.iter().enumerate() {
        quintile[idx] = (rank * 5 / n) as u8 + 1;
    }
    let rows = entropies
        .iter()
        .enumerate()
        .map(|(i, (id, e))| (id.clone(), *e, (*e - min) / span, quintile[i]))
        .collect();
    Ok(EntropyBuckets { rows, degenerate: false })
}

/// Need-severity categories in ascending order of associated cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Severity {
    RelativelyHealthy = 1,
    SimpleChronic = 2,
    MinorComplexChronic = 3,
    MajorComplexChronic = 4,
    FrailElderly = 5,
    Disabled = 6,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::RelativelyHealthy => "relatively_healthy",
            Severity::SimpleChronic => "simple_chronic",
            Severity::MinorComplexChronic => "minor_complex_chronic",
            Severity::MajorComplexChronic => "major_complex_chronic",
            Severity::FrailElderly => "frail_elderly",
            Severity::Disabled => "disabled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relatively_healthy" => Ok(Severity::RelativelyHealthy),
            "simple_chronic" => Ok(Severity::SimpleChronic),
            "minor_complex_chronic" => Ok(Severity::MinorComplexChronic),
            "major_complex_chronic" => Ok(Severity::MajorComplexChronic),
            "frail_elderly" => Ok(Severity::FrailElderly),
            "disabled" => Ok(Severity::Disabled),
            other => Err(Error::Invalid(format!("unknown severity {other:?}"))),
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Severity::RelativelyHealthy),
            2 => Ok(Severity::SimpleChronic),
            3 => Ok(Severity::MinorComplexChronic),
            4 => Ok(Severity::MajorComplexChronic),
            5 => Ok(Severity::FrailElderly),
            6 => Ok(Severity::Disabled),
            other => Err(Error::Invalid(format!("severity index {other} outside 1..=6"))),
        }
    }

    pub fn index(&self) -> u8 {
        *self as u8
    }

    /// High-need patients: the top three severity categories.
    pub fn is_high_need(&self) -> bool {
        matches!(
            self,
            Severity::MajorComplexChronic | Severity::FrailElderly | Severity::Disabled
        )
    }

    pub fn all() -> [Severity; 6] {
        [
            Severity::RelativelyHealthy,
            Severity::SimpleChronic,
            Severity::MinorComplexChronic,
            Severity::MajorComplexChronic,
            Severity::FrailElderly,
            Severity::Disabled,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConditionCategory {
    Ccc,
    Ncc,
    Frailty,
    DisabledFlag,
}

impl ConditionCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionCategory::Ccc => "CCC",
            ConditionCategory::Ncc => "NCC",
            ConditionCategory::Frailty => "frailty",
            ConditionCategory::DisabledFlag => "disabled_flag",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "CCC" => Ok(ConditionCategory::Ccc),
            "NCC" => Ok(ConditionCategory::Ncc),
            "frailty" => Ok(ConditionCategory::Frailty),
            "disabled_flag" => Ok(ConditionCategory::DisabledFlag),
            other => Err(Error::Invalid(format!("unknown condition category {other:?}"))),
        }
    }
}

/// Code-to-condition associations. Each code belongs to exactly one
/// condition name.
#[derive(Clone, Debug, Default)]
pub struct ConditionMap {
    /// code -> (condition name, category)
    codes: BTreeMap<String, (String, ConditionCategory)>,
}

impl ConditionMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        condition: &str,
        category: ConditionCategory,
        code: &str,
    ) -> Result<()> {
        if let Some((prev, _)) = self.codes.get(code) {
            return Err(Error::Invalid(format!(
                "code {code:?} mapped to both {prev:?} and {condition:?}"
            )));
        }
        self.codes.insert(code.to_string(), (condition.to_string(), category));
        Ok(())
    }

    pub fn lookup(&self, code: &str) -> Option<(&str, ConditionCategory)> {
        self.codes.get(code).map(|(name, cat)| (name.as_str(), *cat))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Load from the documented layout:
    /// `condition_name,category,codes` with codes separated by `;`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = ConditionMap::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != "condition_name,category,codes" {
                    return Err(Error::Format(format!(
                        "{}: expected header 'condition_name,category,codes', found {line:?}",
                        path.display()
                    )));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.splitn(3, ',').collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!(
                    "{}:{}: expected 3 fields, found {}",
                    path.display(),
                    i + 1,
                    parts.len()
                )));
            }
            let category = ConditionCategory::parse(parts[1].trim())?;
            for code in parts[2].split(';').map(str::trim).filter(|s| !s.is_empty()) {
                map.insert(parts[0].trim(), category, code)?;
            }
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // regroup by condition for a stable, readable layout
        let mut grouped: BTreeMap<(String, &'static str), Vec<&str>> = BTreeMap::new();
        for (code, (name, cat)) in &self.codes {
            grouped.entry((name.clone(), cat.as_str())).or_default().push(code);
        }
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        writeln!(f, "condition_name,category,codes").map_err(|e| Error::io(path, e))?;
        for ((name, cat), codes) in grouped {
            writeln!(f, "{name},{cat},{}", codes.join(";")).map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }
}

/// Outcome of the severity codifier for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct SeverityAssignment {
    pub severity: Severity,
    pub ccc_count: usize,
    pub ncc_count: usize,
    pub frailty_count: usize,
    pub esrd_or_disabled: bool,
    /// Observation-year codes with no condition mapping.
    pub unmapped_codes: usize,
}

/// Codify one profile against the condition map. Precedence, highest
/// severity first: disabled flag, >=2 frailty indicators, >=3 CCC,
/// 1-2 CCC, 0 CCC with >=1 NCC, otherwise relatively healthy. Patients
/// with 0 CCC but >= 6 NCC are treated as major complex chronic.
pub fn assign_severity(profile: &PatientProfile, map: &ConditionMap) -> SeverityAssignment {
    let mut ccc: BTreeSet<&str> = BTreeSet::new();
    let mut ncc: BTreeSet<&str> = BTreeSet::new();
    let mut frailty: BTreeSet<&str> = BTreeSet::new();
    let mut esrd_or_disabled = false;
    let mut unmapped = 0usize;
    for e in &profile.events {
        for code in e.dx_codes.iter().chain(&e.px_codes) {
            match map.lookup(code) {
                Some((name, ConditionCategory::Ccc)) => {
                    ccc.insert(name);
                }
                Some((name, ConditionCategory::Ncc)) => {
                    ncc.insert(name);
                }
                Some((name, ConditionCategory::Frailty)) => {
                    frailty.insert(name);
                }
                Some((_, ConditionCategory::DisabledFlag)) => esrd_or_disabled = true,
                None => unmapped += 1,
            }
        }
        // medication codes carry no condition semantics in the map
        unmapped += e.rx_codes.iter().filter(|c| map.lookup(c).is_none()).count();
    }
    let (ccc_count, ncc_count, frailty_count) = (ccc.len(), ncc.len(), frailty.len());
    let severity = if esrd_or_disabled {
        Severity::Disabled
    } else if frailty_count >= 2 {
        Severity::FrailElderly
    } else if ccc_count >= 3 || (ccc_count == 0 && ncc_count >= 6) {
        Severity::MajorComplexChronic
    } else if ccc_count >= 1 {
        Severity::MinorComplexChronic
    } else if ncc_count >= 1 {
        Severity::SimpleChronic
    } else {
        Severity::RelativelyHealthy
    };
    SeverityAssignment {
        severity,
        ccc_count,
        ncc_count,
        frailty_count,
        esrd_or_disabled,
        unmapped_codes: unmapped,
    }
}

/// Full stratification output for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct StrataAssignment {
    pub patient_id: String,
    pub profile_entropy: f64,
    pub normalized_entropy: f64,
    pub entropy_quintile: u8,
    pub severity: Severity,
    pub ccc_count: usize,
    pub ncc_count: usize,
    pub frailty_count: usize,
    pub esrd_or_disabled: bool,
}

/// Stratify a cohort: profile entropy + quintiles + severity in one pass.
/// Profiles without events are skipped and reported in the second return.
pub fn stratify_cohort(
    profiles: &[PatientProfile],
    map: &ConditionMap,
) -> Result<(Vec<StrataAssignment>, Vec<String>)> {
    let mut entropies = Vec::with_capacity(profiles.len());
    let mut skipped = Vec::new();
    let mut kept: Vec<&PatientProfile> = Vec::with_capacity(profiles.len());
    for p in profiles {
        match profile_entropy(p) {
            Ok(e) => {
                entropies.push((p.patient_id.clone(), e));
                kept.push(p);
            }
            Err(_) => skipped.push(p.patient_id.clone()),
        }
    }
    if kept.is_empty() {
        return Err(Error::Invalid("stratify_cohort: no profile has any events".into()));
    }
    let buckets = normalize_and_bucket(&entropies)?;
    let mut out = Vec::with_capacity(kept.len());
    for (p, (id, raw, norm, quintile)) in kept.iter().zip(buckets.rows) {
        debug_assert_eq!(p.patient_id, id);
        let sev = assign_severity(p, map);
        out.push(StrataAssignment {
            patient_id: id,
            profile_entropy: raw,
            normalized_entropy: norm,
            entropy_quintile: quintile,
            severity: sev.severity,
            ccc_count: sev.ccc_count,
            ncc_count: sev.ncc_count,
            frailty_count: sev.frailty_count,
            esrd_or_disabled: sev.esrd_or_disabled,
        });
    }
    Ok((out, skipped))
}

pub const STRATA_HEADER: &str = "patient_id,profile_entropy,normalized_entropy,entropy_quintile,severity,ccc_count,ncc_count,frailty_count,esrd_or_disabled";

pub fn write_strata(rows: &[StrataAssignment], path: &Path) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(f, "{STRATA_HEADER}").map_err(|e| Error::io(path, e))?;
    for r in rows {
        writeln!(
            f,
            "{},{:.6},{:.6},{},{},{},{},{},{}",
            r.patient_id,
            r.profile_entropy,
            r.normalized_entropy,
            r.entropy_quintile,
            r.severity.as_str(),
            r.ccc_count,
            r.ncc_count,
            r.frailty_count,
            r.esrd_or_disabled
        )
        .map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_strata(path: &Path) -> Result<Vec<StrataAssignment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != STRATA_HEADER {
                return Err(Error::Format(format!(
                    "{}: unexpected strata header {line:?}",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Format(format!(
                "{}:{}: expected 9 fields, found {}",
                path.display(),
                i + 1,
                f.len()
            )));
        }
        let parse_err =
            |what: &str, v: &str| Error::Format(format!("{}:{}: bad {what} {v:?}", path.display(), i + 1));
        out.push(StrataAssignment {
            patient_id: f[0].to_string(),
            profile_entropy: f[1].parse().map_err(|_| parse_err("entropy", f[1]))?,
            normalized_entropy: f[2].parse().map_err(|_| parse_err("normalized", f[2]))?,
            entropy_quintile: f[3].parse().map_err(|_| parse_err("quintile", f[3]))?,
            severity: Severity::parse(f[4])?,
            ccc_count: f[5].parse().map_err(|_| parse_err("ccc_count", f[5]))?,
            ncc_count: f[6].parse().map_err(|_| parse_err("ncc_count", f[6]))?,
            frailty_count: f[7].parse().map_err(|_| parse_err("frailty_count", f[7]))?,
            esrd_or_disabled: f[8].parse().map_err(|_| parse_err("flag", f[8]))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::Granularity;
    use chrono::NaiveDate;

    #[test]
    fn concentrated_twelve_codes() {
        let parts = event_entropy_parts(12, 0, 0);
        assert!((parts.p[0] - 0.867).abs() < 0.005);
        assert!((parts.p[1] - 0.067).abs() < 0.005);
        assert!((parts.log_p[0] - (-0.062)).abs() < 0.005);
        assert!((parts.log_p[1] - (-1.176)).abs() < 0.005);
        assert!((parts.sum - (-0.211)).abs() < 0.005);
        assert!((parts.entropy - 2.53).abs() < 0.01);
    }

    #[test]
    fn uniform_twelve_codes() {
        let parts = event_entropy_parts(4, 4, 4);
        for i in 0..3 {
            assert!((parts.p[i] - 0.333).abs() < 0.005);
            assert!((parts.log_p[i] - (-0.477)).abs() < 0.005);
        }
        assert!((parts.sum - (-0.477)).abs() < 0.005);
        assert!((parts.entropy - 5.73).abs() < 0.01);
    }

    #[test]
    fn empty_event_has_zero_entropy() {
        assert_eq!(event_entropy(0, 0, 0), 0.0);
    }

    #[test]
    fn entropy_is_symmetric_in_channels() {
        let perms =
            [(5, 2, 1), (5, 1, 2), (2, 5, 1), (2, 1, 5), (1, 5, 2), (1, 2, 5)];
        let first = event_entropy(perms[0].0, perms[0].1, perms[0].2);
        for (a, b, c) in perms {
            assert_eq!(event_entropy(a, b, c), first);
        }
    }

    #[test]
    fn fixed_len_maximized_at_uniform_split() {
        let uniform = event_entropy(4, 4, 4);
        for (a, b, c) in [(12, 0, 0), (10, 1, 1), (9, 2, 1), (6, 5, 1), (5, 4, 3)] {
            assert!(event_entropy(a, b, c) < uniform, "({a},{b},{c})");
        }
        // and minimized at full concentration
        for (a, b, c) in [(10, 1, 1), (9, 2, 1), (6, 5, 1), (5, 4, 3), (4, 4, 4)] {
            assert!(event_entropy(a, b, c) > event_entropy(12, 0, 0), "({a},{b},{c})");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            /// Nonnegative and invariant under channel permutation.
            #[test]
            fn entropy_symmetric_and_nonnegative(
                a in 0usize..200, b in 0usize..200, c in 0usize..200,
            ) {
                let e = event_entropy(a, b, c);
                prop_assert!(e >= 0.0);
                prop_assert_eq!(e, event_entropy(c, a, b));
                prop_assert_eq!(e, event_entropy(b, c, a));
            }

            /// For a fixed total, no split beats the uniform one.
            #[test]
            fn uniform_split_maximizes(n in 1usize..60, shift in 1usize..60) {
                let uniform = event_entropy(n, n, n);
                let shifted = event_entropy(n + shift, n.saturating_sub(shift.min(n)), n);
                // same Len only when the shift stays inside; rebuild exactly
                let a = n + shift.min(n);
                let b = n - shift.min(n);
                let skewed = event_entropy(a, b, n);
                prop_assert!(skewed <= uniform + 1e-12);
                let _ = shifted;
            }
        }
    }

    #[test]
    fn uniform_counts_match_closed_form() {
        // entropy((n,n,n)) = 3n log10(3); equality up to f64 rounding
        for n in 0..=100usize {
            let got = event_entropy(n, n, n);
            let expect = 3.0 * n as f64 * 3.0f64.log10();
            let tol = 4.0 * f64::EPSILON * expect.abs().max(1.0);
            assert!((got - expect).abs() <= tol, "n={n}: {got} vs {expect}");
        }
    }

    fn profile_with_counts(counts: &[(usize, usize, usize)]) -> PatientProfile {
        let events = counts
            .iter()
            .enumerate()
            .map(|(i, &(dx, px, rx))| {
                let day = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap()
                    + chrono::Duration::days(i as i64 * 7);
                ClaimEvent {
                    day,
                    bucket: Granularity::Day.bucket_of(day),
                    dx_codes: (0..dx).map(|k| format!("D{k}")).collect(),
                    px_codes: (0..px).map(|k| format!("P{k}")).collect(),
                    rx_codes: (0..rx).map(|k| format!("R{k}")).collect(),
                    medical_cost: 10.0,
                    pharmacy_cost: 0.0,
                    provider_ids: std::iter::once("prov".to_string()).collect(),
                    n_claims: 1,
                }
            })
            .collect();
        PatientProfile {
            patient_id: "pt".into(),
            granularity: Granularity::Day,
            events,
            target_cost: 0.0,
        }
    }

    #[test]
    fn profile_entropy_is_mean_of_event_entropies() {
        let p = profile_with_counts(&[(4, 4, 4)]);
        assert!((profile_entropy(&p).unwrap() - 5.73).abs() < 0.01);

        let p2 = profile_with_counts(&[(12, 0, 0), (4, 4, 4)]);
        let a = event_entropy(12, 0, 0);
        let b = event_entropy(4, 4, 4);
        assert_eq!(profile_entropy(&p2).unwrap(), (a + b) / 2.0);
    }

    #[test]
    fn empty_profile_entropy_is_an_error() {
        let p = profile_with_counts(&[]);
        assert!(profile_entropy(&p).is_err());
    }

    #[test]
    fn normalize_five_point_ladder() {
        let entropies: Vec<(String, f64)> =
            (1..=5).map(|i| (format!("p{i}"), i as f64)).collect();
        let out = normalize_and_bucket(&entropies).unwrap();
        assert!(!out.degenerate);
        let norm: Vec<f64> = out.rows.iter().map(|r| r.2).collect();
        assert_eq!(norm, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let quint: Vec<u8> = out.rows.iter().map(|r| r.3).collect();
        assert_eq!(quint, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn zero_variance_cohort_degenerates() {
        let entropies: Vec<(String, f64)> =
            (0..4).map(|i| (format!("p{i}"), 2.5)).collect();
        let out = normalize_and_bucket(&entropies).unwrap();
        assert!(out.degenerate);
        assert!(out.rows.iter().all(|r| r.2 == 0.0 && r.3 == 1));
    }

    #[test]
    fn quintiles_split_evenly() {
        let entropies: Vec<(String, f64)> =
            (0..10_000).map(|i| (format!("p{i:05}"), (i % 977) as f64 * 0.013)).collect();
        let out = normalize_and_bucket(&entropies).unwrap();
        let mut counts = [0usize; 5];
        for r in &out.rows {
            counts[(r.3 - 1) as usize] += 1;
        }
        for c in counts {
            assert_eq!(c, 2000);
        }
    }

    fn demo_map() -> ConditionMap {
        let mut m = ConditionMap::new();
        for (i, name) in ["heart_failure", "diabetes", "kidney_disease", "stroke"]
            .iter()
            .enumerate()
        {
            m.insert(name, ConditionCategory::Ccc, &format!("CCC{i}")).unwrap();
        }
        for (i, name) in
            ["hypertension", "hyperlipidemia", "arthritis", "thyroid", "eye", "skin", "gi"]
                .iter()
                .enumerate()
        {
            m.insert(name, ConditionCategory::Ncc, &format!("NCC{i}")).unwrap();
        }
        for (i, name) in ["fall", "gait", "weakness"].iter().enumerate() {
            m.insert(name, ConditionCategory::Frailty, &format!("FRL{i}")).unwrap();
        }
        m.insert("esrd", ConditionCategory::DisabledFlag, "ESRD").unwrap();
        m
    }

    fn profile_with_codes(dx: &[&str]) -> PatientProfile {
        let day = NaiveDate::from_ymd_opt(2016, 3, 1).unwrap();
        PatientProfile {
            patient_id: "pt".into(),
            granularity: Granularity::Day,
            events: vec![ClaimEvent {
                day,
                bucket: Granularity::Day.bucket_of(day),
                dx_codes: dx.iter().map(|s| s.to_string()).collect(),
                px_codes: vec![],
                rx_codes: vec![],
                medical_cost: 5.0,
                pharmacy_cost: 0.0,
                provider_ids: std::iter::once("prov".to_string()).collect(),
                n_claims: 1,
            }],
            target_cost: 0.0,
        }
    }

    #[test]
    fn simple_chronic_from_three_ncc() {
        let m = demo_map();
        let p = profile_with_codes(&["NCC0", "NCC1", "NCC2"]);
        let a = assign_severity(&p, &m);
        assert_eq!(a.severity, Severity::SimpleChronic);
        assert_eq!(a.ncc_count, 3);
        assert_eq!(a.ccc_count, 0);
    }

    #[test]
    fn frailty_beats_minor_chronic() {
        let m = demo_map();
        let p = profile_with_codes(&["FRL0", "FRL1", "CCC0"]);
        let a = assign_severity(&p, &m);
        assert_eq!(a.severity, Severity::FrailElderly);
        assert_eq!(a.frailty_count, 2);
        assert_eq!(a.ccc_count, 1);
    }

    #[test]
    fn disabled_flag_beats_everything() {
        let m = demo_map();
        let p = profile_with_codes(&["ESRD", "CCC0", "CCC1", "CCC2", "CCC3"]);
        let a = assign_severity(&p, &m);
        assert_eq!(a.severity, Severity::Disabled);
        assert!(a.esrd_or_disabled);
    }

    #[test]
    fn many_ncc_without_ccc_count_as_major() {
        let m = demo_map();
        let p = profile_with_codes(&["NCC0", "NCC1", "NCC2", "NCC3", "NCC4", "NCC5"]);
        assert_eq!(assign_severity(&p, &m).severity, Severity::MajorComplexChronic);
    }

    #[test]
    fn duplicate_condition_codes_count_once() {
        let m = demo_map();
        let p = profile_with_codes(&["CCC0", "CCC0", "CCC1"]);
        let a = assign_severity(&p, &m);
        assert_eq!(a.ccc_count, 2);
        assert_eq!(a.severity, Severity::MinorComplexChronic);
    }

    #[test]
    fn unmapped_codes_are_ignored_but_counted() {
        let m = demo_map();
        let p = profile_with_codes(&["WHAT", "EVER", "NCC0"]);
        let a = assign_severity(&p, &m);
        assert_eq!(a.severity, Severity::SimpleChronic);
        assert_eq!(a.unmapped_codes, 2);
    }

    #[test]
    fn condition_map_rejects_duplicate_codes() {
        let mut m = ConditionMap::new();
        m.insert("a", ConditionCategory::Ccc, "X1").unwrap();
        assert!(m.insert("b", ConditionCategory::Ncc, "X1").is_err());
    }

    #[test]
    fn condition_map_round_trips() {
        let m = demo_map();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        m.save(&path).unwrap();
        let back = ConditionMap::load(&path).unwrap();
        assert_eq!(back.len(), m.len());
        assert_eq!(back.lookup("CCC0"), m.lookup("CCC0"));
        assert_eq!(back.lookup("ESRD"), m.lookup("ESRD"));
    }

    #[test]
    fn strata_file_round_trips() {
        let rows = vec![StrataAssignment {
            patient_id: "pt1".into(),
            profile_entropy: 2.53,
            normalized_entropy: 0.4,
            entropy_quintile: 3,
            severity: Severity::FrailElderly,
            ccc_count: 1,
            ncc_count: 4,
            frailty_count: 2,
            esrd_or_disabled: false,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("strata.csv");
        write_strata(&rows, &path).unwrap();
        let back = read_strata(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].severity, Severity::FrailElderly);
        assert_eq!(back[0].entropy_quintile, 3);
    }
}
