//! Administrative-claims data model: file ingestion, day-level event
//! construction, granularity aggregation, and journey statistics.
//!
//! File layouts (comma-separated, quoted strings allowed, ISO-8601 dates):
//!
//! medical:  `patient_id,claim_id,provider_id,service_date,dx1..dx10,px_code,amount_paid,amount_billed,amount_allowed`
//! pharmacy: `patient_id,claim_id,provider_id,service_date,rx_code,amount_paid,amount_billed,amount_allowed`
//!
//! Empty code cells mean "absent". Amounts are dollars with two decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::Dollars;

pub const MAX_DX_CODES: usize = 10;

pub const MEDICAL_HEADER: [&str; 18] = [
    "patient_id",
    "claim_id",
    "provider_id",
    "service_date",
    "dx1",
    "dx2",
    "dx3",
    "dx4",
    "dx5",
    "dx6",
    "dx7",
    "dx8",
    "dx9",
    "dx10",
    "px_code",
    "amount_paid",
    "amount_billed",
    "amount_allowed",
];

pub const PHARMACY_HEADER: [&str; 8] = [
    "patient_id",
    "claim_id",
    "provider_id",
    "service_date",
    "rx_code",
    "amount_paid",
    "amount_billed",
    "amount_allowed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ClaimKind {
    Medical,
    Pharmacy,
}

/// One row of a claims file. Medical rows never carry an rx code; pharmacy
/// rows never carry dx or px codes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimRecord {
    pub patient_id: String,
    pub claim_id: String,
    pub provider_id: String,
    pub kind: ClaimKind,
    pub service_date: NaiveDate,
    pub dx_codes: Vec<String>,
    pub px_code: Option<String>,
    pub rx_code: Option<String>,
    pub amount_paid: Dollars,
    pub amount_billed: Dollars,
    pub amount_allowed: Dollars,
}

/// All claims of one patient on one day (or one week/month bucket under
/// coarser granularity), split per code channel. Code lists are multisets
/// kept in canonical sorted order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimEvent {
    /// Bucket label day: the service day itself at day granularity, the
    /// ISO-week Monday at week granularity, the 1st at month granularity.
    pub day: NaiveDate,
    /// Bucket index in the granularity unit; consecutive-event gaps are
    /// differences of these.
    pub bucket: i64,
    pub dx_codes: Vec<String>,
    pub px_codes: Vec<String>,
    pub rx_codes: Vec<String>,
    pub medical_cost: Dollars,
    pub pharmacy_cost: Dollars,
    pub provider_ids: BTreeSet<String>,
    /// Distinct claim ids merged into this event.
    pub n_claims: usize,
}

impl ClaimEvent {
    pub fn total_cost(&self) -> Dollars {
        self.medical_cost + self.pharmacy_cost
    }

    pub fn has_medical(&self) -> bool {
        !self.dx_codes.is_empty() || !self.px_codes.is_empty() || self.medical_cost > 0.0
    }

    pub fn has_pharmacy(&self) -> bool {
        !self.rx_codes.is_empty() || self.pharmacy_cost > 0.0
    }

    pub fn code_count(&self) -> usize {
        self.dx_codes.len() + self.px_codes.len() + self.rx_codes.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Granularity {
    Day,
    Week,
    Month,
}

impl Granularity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Day => "day",
            Granularity::Week => "week",
            Granularity::Month => "month",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "day" => Ok(Granularity::Day),
            "week" => Ok(Granularity::Week),
            "month" => Ok(Granularity::Month),
            other => Err(Error::Invalid(format!("unknown granularity {other:?}"))),
        }
    }

    /// Bucket index of a day in this granularity: day number from CE,
    /// week number anchored to Mondays, or calendar-month number.
    pub fn bucket_of(&self, day: NaiveDate) -> i64 {
        match self {
            Granularity::Day => day.num_days_from_ce() as i64,
            Granularity::Week => {
                let shift = day.weekday().num_days_from_monday() as i64;
                (day.num_days_from_ce() as i64 - shift).div_euclid(7)
            }
            Granularity::Month => day.year() as i64 * 12 + (day.month0() as i64),
        }
    }

    /// Representative label day of the bucket containing `day`.
    pub fn bucket_label(&self, day: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Day => day,
            Granularity::Week => {
                let shift = day.weekday().num_days_from_monday() as i64;
                day - chrono::Duration::days(shift)
            }
            Granularity::Month => NaiveDate::from_ymd_opt(day.year(), day.month(), 1)
                .expect("first of month is always valid"),
        }
    }

    /// Buckets spanned by one calendar year, used as the denominator for
    /// per-bucket claim rates.
    pub fn buckets_per_year(&self) -> f64 {
        match self {
            Granularity::Day => 365.0,
            Granularity::Week => 52.0,
            Granularity::Month => 12.0,
        }
    }
}

/// Per-patient multi-channel event history over the observation year plus
/// the result-year cost target.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientProfile {
    pub patient_id: String,
    pub granularity: Granularity,
    /// Strictly increasing by day.
    pub events: Vec<ClaimEvent>,
    /// Sum of result-year paid amounts (medical + pharmacy); 0 if none.
    pub target_cost: Dollars,
}

impl PatientProfile {
    /// Event indices that carry the given channel, each with the gap (in
    /// granularity units) to that channel's previous event; the first event
    /// of a channel gets gap 0.
    pub fn channel_steps(&self, channel: ChannelKind) -> Vec<(usize, f64)> {
        let mut steps = Vec::new();
        let mut prev: Option<i64> = None;
        for (i, e) in self.events.iter().enumerate() {
            let present = match channel {
                ChannelKind::Dx | ChannelKind::Px => e.has_medical(),
                ChannelKind::Rx => e.has_pharmacy(),
                ChannelKind::Cost | ChannelKind::All => true,
            };
            if present {
                let gap = prev.map(|p| (e.bucket - p) as f64).unwrap_or(0.0);
                steps.push((i, gap));
                prev = Some(e.bucket);
            }
        }
        steps
    }

    /// Number of medical event buckets (diagnosis and procedure sequences
    /// share this length).
    pub fn medical_len(&self) -> usize {
        self.events.iter().filter(|e| e.has_medical()).count()
    }

    pub fn pharmacy_len(&self) -> usize {
        self.events.iter().filter(|e| e.has_pharmacy()).count()
    }

    pub fn total_observed_cost(&self) -> Dollars {
        self.events.iter().map(ClaimEvent::total_cost).sum()
    }
}

/// Input stream identity. `All` is the single-channel ablation: one mixed
/// bag of every code type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum ChannelKind {
    Dx,
    Px,
    Rx,
    Cost,
    All,
}

impl ChannelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::Dx => "dx",
            ChannelKind::Px => "px",
            ChannelKind::Rx => "rx",
            ChannelKind::Cost => "cost",
            ChannelKind::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dx" => Ok(ChannelKind::Dx),
            "px" => Ok(ChannelKind::Px),
            "rx" => Ok(ChannelKind::Rx),
            "cost" => Ok(ChannelKind::Cost),
            "all" => Ok(ChannelKind::All),
            other => Err(Error::Invalid(format!("unknown channel {other:?}"))),
        }
    }

    /// Codes of this channel within an event, in canonical order.
    pub fn bag_of(&self, e: &ClaimEvent) -> Vec<String> {
        let mut bag = match self {
            ChannelKind::Dx => e.dx_codes.clone(),
            ChannelKind::Px => e.px_codes.clone(),
            ChannelKind::Rx => e.rx_codes.clone(),
            ChannelKind::Cost => Vec::new(),
            ChannelKind::All => {
                let mut all = e.dx_codes.clone();
                all.extend_from_slice(&e.px_codes);
                all.extend_from_slice(&e.rx_codes);
                all
            }
        };
        bag.sort();
        bag
    }
}

/// One rejected input row.
#[derive(Clone, Debug, PartialEq)]
pub struct RejectedRow {
    pub file: String,
    /// 1-based line number including the header line.
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct IngestResult {
    pub records: Vec<ClaimRecord>,
    pub rejects: Vec<RejectedRow>,
}

impl IngestResult {
    pub fn reject_report(&self) -> String {
        let mut out = String::new();
        for r in &self.rejects {
            out.push_str(&format!("{}:{}: {}\n", r.file, r.line, r.reason));
        }
        out
    }
}

/// Read both claim files. Malformed rows are rejected and reported with
/// line numbers; more than 1% rejected rows is fatal.
pub fn ingest_claims(medical_path: &Path, pharmacy_path: &Path) -> Result<IngestResult> {
    let mut out = IngestResult::default();
    let mut total_rows = 0usize;
    ingest_file(medical_path, ClaimKind::Medical, &mut out, &mut total_rows)?;
    ingest_file(pharmacy_path, ClaimKind::Pharmacy, &mut out, &mut total_rows)?;
    if total_rows > 0 && out.rejects.len() * 100 > total_rows {
        return Err(Error::Data(format!(
            "{} of {} rows rejected (>1%); first: {}",
            out.rejects.len(),
            total_rows,
            out.rejects.first().map(|r| r.reason.as_str()).unwrap_or("")
        )));
    }
    Ok(out)
}

fn ingest_file(
    path: &Path,
    kind: ClaimKind,
    out: &mut IngestResult,
    total_rows: &mut usize,
) -> Result<()> {
    let file_name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;

    let expected: &[&str] = match kind {
        ClaimKind::Medical => &MEDICAL_HEADER,
        ClaimKind::Pharmacy => &PHARMACY_HEADER,
    };
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Format(format!("{}: unreadable header: {e}", path.display())))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Format(format!(
                "{}: header mismatch: expected {:?}, found {:?}",
                path.display(),
                expected,
                got
            )));
        }
    }

    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        *total_rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(RejectedRow {
                    file: file_name.clone(),
                    line,
                    reason: format!("unparseable row: {e}"),
                });
                continue;
            }
        };
        match parse_row(&row, kind) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => {
                out.rejects.push(RejectedRow { file: file_name.clone(), line, reason })
            }
        }
    }
    Ok(())
}

fn parse_row(row: &csv::StringRecord, kind: ClaimKind) -> std::result::Result<ClaimRecord, String> {
    let expected_len = match kind {
        ClaimKind::Medical => MEDICAL_HEADER.len(),
        ClaimKind::Pharmacy => PHARMACY_HEADER.len(),
    };
    if row.len() != expected_len {
        return Err(format!("expected {} fields, found {}", expected_len, row.len()));
    }
    let field = |i: usize| row.get(i).unwrap_or("").trim().to_string();
    let patient_id = field(0);
    let claim_id = field(1);
    let provider_id = field(2);
    if patient_id.is_empty() || claim_id.is_empty() {
        return Err("empty patient_id or claim_id".into());
    }
    let service_date = NaiveDate::parse_from_str(&field(3), "%Y-%m-%d")
        .map_err(|e| format!("bad service_date {:?}: {e}", field(3)))?;

    let amount = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let s = field(i);
        let v: f64 = s.parse().map_err(|e| format!("bad {name} {s:?}: {e}"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("{name} must be a finite nonnegative amount, got {s}"));
        }
        Ok(v)
    };

    let (dx_codes, px_code, rx_code, base) = match kind {
        ClaimKind::Medical => {
            let mut dx = Vec::new();
            for i in 4..4 + MAX_DX_CODES {
                let c = field(i);
                if !c.is_empty() {
                    dx.push(c);
                }
            }
            let px = field(14);
            (dx, if px.is_empty() { None } else { Some(px) }, None, 15)
        }
        ClaimKind::Pharmacy => {
            let rx = field(4);
            (Vec::new(), None, if rx.is_empty() { None } else { Some(rx) }, 5)
        }
    };
    let amount_paid = amount(base, "amount_paid")?;
    let amount_billed = amount(base + 1, "amount_billed")?;
    let amount_allowed = amount(base + 2, "amount_allowed")?;

    let has_codes = !dx_codes.is_empty() || px_code.is_some() || rx_code.is_some();
    if !has_codes && amount_paid == 0.0 {
        return Err("row carries neither codes nor a positive paid amount".into());
    }

    Ok(ClaimRecord {
        patient_id,
        claim_id,
        provider_id,
        kind,
        service_date,
        dx_codes,
        px_code,
        rx_code,
        amount_paid,
        amount_billed,
        amount_allowed,
    })
}

/// Write records back out in the documented layout (used by the synthetic
/// generator and by round-trip tests). Records are split by kind.
pub fn write_claims(
    records: &[ClaimRecord],
    medical_path: &Path,
    pharmacy_path: &Path,
) -> Result<()> {
    let mut med = std::io::BufWriter::new(
        std::fs::File::create(medical_path).map_err(|e| Error::io(medical_path, e))?,
    );
    let mut pha = std::io::BufWriter::new(
        std::fs::File::create(pharmacy_path).map_err(|e| Error::io(pharmacy_path, e))?,
    );
    writeln!(med, "{}", MEDICAL_HEADER.join(",")).map_err(|e| Error::io(medical_path, e))?;
    writeln!(pha, "{}", PHARMACY_HEADER.join(",")).map_err(|e| Error::io(pharmacy_path, e))?;
    for r in records {
        match r.kind {
            ClaimKind::Medical => {
                let mut dx = r.dx_codes.clone();
                dx.resize(MAX_DX_CODES, String::new());
                writeln!(
                    med,
                    "{},{},{},{},{},{},{:.2},{:.2},{:.2}",
                    r.patient_id,
                    r.claim_id,
                    r.provider_id,
                    r.service_date.format("%Y-%m-%d"),
                    dx.join(","),
                    r.px_code.clone().unwrap_or_default(),
                    r.amount_paid,
                    r.amount_billed,
                    r.amount_allowed
                )
                .map_err(|e| Error::io(medical_path, e))?;
            }
            ClaimKind::Pharmacy => {
                writeln!(
                    pha,
                    "{},{},{},{},{},{:.2},{:.2},{:.2}",
                    r.patient_id,
                    r.claim_id,
                    r.provider_id,
                    r.service_date.format("%Y-%m-%d"),
                    r.rx_code.clone().unwrap_or_default(),
                    r.amount_paid,
                    r.amount_billed,
                    r.amount_allowed
                )
                .map_err(|e| Error::io(pharmacy_path, e))?;
            }
        }
    }
    med.flush().map_err(|e| Error::io(medical_path, e))?;
    pha.flush().map_err(|e| Error::io(pharmacy_path, e))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ProfilesResult {
    pub profiles: Vec<PatientProfile>,
    /// Patients dropped by the >= 2 observation-year claims filter.
    pub excluded: usize,
}

/// Group records into day-level claim events per patient and attach the
/// result-year cost target. Patients need at least two distinct
/// observation-year claims to be kept.
pub fn build_profiles(
    records: &[ClaimRecord],
    observation_year: i32,
    result_year: i32,
) -> Result<ProfilesResult> {
    if result_year != observation_year + 1 {
        return Err(Error::Invalid(format!(
            "result year {result_year} must directly follow observation year {observation_year}"
        )));
    }
    // patient -> day -> event accumulator
    let mut by_patient: BTreeMap<&str, BTreeMap<NaiveDate, ClaimEvent>> = BTreeMap::new();
    let mut obs_claims: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut claims_per_day: BTreeMap<(&str, NaiveDate), BTreeSet<&str>> = BTreeMap::new();
    let mut targets: BTreeMap<&str, f64> = BTreeMap::new();

    for r in records {
        let year = r.service_date.year();
        if year == result_year {
            *targets.entry(&r.patient_id).or_insert(0.0) += r.amount_paid;
            continue;
        }
        if year != observation_year {
            continue;
        }
        obs_claims.entry(&r.patient_id).or_default().insert(&r.claim_id);
        claims_per_day
            .entry((&r.patient_id, r.service_date))
            .or_default()
            .insert(&r.claim_id);
        let day_map = by_patient.entry(&r.patient_id).or_default();
        let ev = day_map.entry(r.service_date).or_insert_with(|| ClaimEvent {
            day: r.service_date,
            bucket: Granularity::Day.bucket_of(r.service_date),
            dx_codes: Vec::new(),
            px_codes: Vec::new(),
            rx_codes: Vec::new(),
            medical_cost: 0.0,
            pharmacy_cost: 0.0,
            provider_ids: BTreeSet::new(),
            n_claims: 0,
        });
        ev.dx_codes.extend(r.dx_codes.iter().cloned());
        if let Some(px) = &r.px_code {
            ev.px_codes.push(px.clone());
        }
        if let Some(rx) = &r.rx_code {
            ev.rx_codes.push(rx.clone());
        }
        match r.kind {
            ClaimKind::Medical => ev.medical_cost += r.amount_paid,
            ClaimKind::Pharmacy => ev.pharmacy_cost += r.amount_paid,
        }
        ev.provider_ids.insert(r.provider_id.clone());
    }

    let mut profiles = Vec::new();
    let mut excluded = 0usize;
    for (patient, day_map) in by_patient {
        let n_claims = obs_claims.get(patient).map(BTreeSet::len).unwrap_or(0);
        if n_claims < 2 {
            excluded += 1;
            continue;
        }
        let mut events: Vec<ClaimEvent> = day_map.into_values().collect();
        for e in &mut events {
            e.dx_codes.sort();
            e.px_codes.sort();
            e.rx_codes.sort();
            e.n_claims =
                claims_per_day.get(&(patient, e.day)).map(BTreeSet::len).unwrap_or(0);
        }
        profiles.push(PatientProfile {
            patient_id: patient.to_string(),
            granularity: Granularity::Day,
            events,
            target_cost: targets.get(patient).copied().unwrap_or(0.0),
        });
    }
    Ok(ProfilesResult { profiles, excluded })
}

/// Re-bucket a profile's events at the requested granularity. Day is the
/// identity; week/month merge events sharing an ISO week / calendar month,
/// unioning code multisets and summing costs.
pub fn aggregate_events(profile: &PatientProfile, granularity: Granularity) -> PatientProfile {
    if granularity == Granularity::Day && profile.granularity == Granularity::Day {
        return profile.clone();
    }
    let mut buckets: BTreeMap<i64, ClaimEvent> = BTreeMap::new();
    for e in &profile.events {
        let b = granularity.bucket_of(e.day);
        let slot = buckets.entry(b).or_insert_with(|| ClaimEvent {
            day: granularity.bucket_label(e.day),
            bucket: b,
            dx_codes: Vec::new(),
            px_codes: Vec::new(),
            rx_codes: Vec::new(),
            medical_cost: 0.0,
            pharmacy_cost: 0.0,
            provider_ids: BTreeSet::new(),
            n_claims: 0,
        });
        slot.dx_codes.extend(e.dx_codes.iter().cloned());
        slot.px_codes.extend(e.px_codes.iter().cloned());
        slot.rx_codes.extend(e.rx_codes.iter().cloned());
        slot.medical_cost += e.medical_cost;
        slot.pharmacy_cost += e.pharmacy_cost;
        slot.provider_ids.extend(e.provider_ids.iter().cloned());
        slot.n_claims += e.n_claims;
    }
    let mut events: Vec<ClaimEvent> = buckets.into_values().collect();
    for e in &mut events {
        e.dx_codes.sort();
        e.px_codes.sort();
        e.rx_codes.sort();
    }
    PatientProfile {
        patient_id: profile.patient_id.clone(),
        granularity,
        events,
        target_cost: profile.target_cost,
    }
}

/// Per-patient journey statistics at one granularity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GranularityStats {
    /// Mean distinct providers per nonempty bucket.
    pub avg_providers: f64,
    /// Mean distinct clinical codes per nonempty bucket.
    pub avg_unique_codes: f64,
    /// Claims per bucket over the whole year (claims / buckets-per-year).
    pub claims_rate: f64,
    /// Day-level claim events per bucket over the whole year.
    pub event_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JourneyStats {
    pub patient_id: String,
    pub day: GranularityStats,
    pub week: GranularityStats,
    pub month: GranularityStats,
}

/// Cohort-level averages of [`JourneyStats`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CohortJourneyStats {
    pub n_patients: usize,
    pub day: GranularityStats,
    pub week: GranularityStats,
    pub month: GranularityStats,
}

pub fn journey_stats(profiles: &[PatientProfile]) -> Result<(Vec<JourneyStats>, CohortJourneyStats)> {
    if profiles.is_empty() {
        return Err(Error::Invalid("journey_stats: empty cohort".into()));
    }
    let mut per_patient = Vec::with_capacity(profiles.len());
    for p in profiles {
        let mut js = JourneyStats { patient_id: p.patient_id.clone(), ..Default::default() };
        for g in [Granularity::Day, Granularity::Week, Granularity::Month] {
            let agg = aggregate_events(p, g);
            let n_buckets = agg.events.len().max(1) as f64;
            let providers: usize = agg.events.iter().map(|e| e.provider_ids.len()).sum();
            let codes: usize = agg
                .events
                .iter()
                .map(|e| {
                    let mut set: BTreeSet<&String> = BTreeSet::new();
                    set.extend(e.dx_codes.iter());
                    set.extend(e.px_codes.iter());
                    set.extend(e.rx_codes.iter());
                    set.len()
                })
                .sum();
            let claims: usize = p.events.iter().map(|e| e.n_claims).sum();
            let st = GranularityStats {
                avg_providers: providers as f64 / n_buckets,
                avg_unique_codes: codes as f64 / n_buckets,
                claims_rate: claims as f64 / g.buckets_per_year(),
                event_rate: p.events.len() as f64 / g.buckets_per_year(),
            };
            match g {
                Granularity::Day => js.day = st,
                Granularity::Week => js.week = st,
                Granularity::Month => js.month = st,
            }
        }
        per_patient.push(js);
    }
    let n = per_patient.len() as f64;
    let mut cohort = CohortJourneyStats { n_patients: per_patient.len(), ..Default::default() };
    let avg = |f: &dyn Fn(&JourneyStats) -> GranularityStats| {
        let mut acc = GranularityStats::default();
        for js in &per_patient {
            let s = f(js);
            acc.avg_providers += s.avg_providers;
            acc.avg_unique_codes += s.avg_unique_codes;
            acc.claims_rate += s.claims_rate;
            acc.event_rate += s.event_rate;
        }
        GranularityStats {
            avg_providers: acc.avg_providers / n,
            avg_unique_codes: acc.avg_unique_codes / n,
            claims_rate: acc.claims_rate / n,
            event_rate: acc.event_rate / n,
        }
    };
    cohort.day = avg(&|j| j.day);
    cohort.week = avg(&|j| j.week);
    cohort.month = avg(&|j| j.month);
    Ok((per_patient, cohort))
}
