//! Dashboard aggregates: activity ranking, learner drilldown, weekly quiz and
//! meeting matrices, and underperforming-outlier detection.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::par;
use crate::retry::RetryPolicy;
use crate::xapi::{render_sentence, verbs, Statement};

pub const RECENT_LIMIT: usize = 50;
pub const MIN_COHORT: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("term must span at least one week")]
    EmptyTerm,
    #[error("percentile parameter must lie in (0, 1), got {0}")]
    BadPercentile(f64),
    #[error("z-score parameter must be negative, got {0}")]
    BadZscore(f64),
    #[error("window since {since} is after until {until}")]
    InvertedWindow { since: DateTime<Utc>, until: DateTime<Utc> },
}

/// Inclusive time window; open on either side when a bound is absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub since: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
}

impl TimeWindow {
    pub fn new(since: Option<DateTime<Utc>>, until: Option<DateTime<Utc>>) -> Result<Self, AnalyticsError> {
        if let (Some(since), Some(until)) = (since, until) {
            if since > until {
                return Err(AnalyticsError::InvertedWindow { since, until });
            }
        }
        Ok(TimeWindow { since, until })
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        self.since.is_none_or(|s| ts >= s) && self.until.is_none_or(|u| ts <= u)
    }
}

fn actor_key(s: &Statement) -> String {
    s.actor.key().unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub actor: String,
    pub display_name: String,
    pub count: u64,
}

/// Per-learner statement counts, most active first, ties by actor ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySummary {
    pub rows: Vec<ActivityRow>,
}

impl ActivitySummary {
    fn from_counts(counts: HashMap<String, (String, u64)>) -> Self {
        let mut rows: Vec<ActivityRow> = counts
            .into_iter()
            .map(|(actor, (display_name, count))| ActivityRow { actor, display_name, count })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.actor.cmp(&b.actor)));
        ActivitySummary { rows }
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }

    /// Adds zero-count rows for rostered learners with no statements.
    pub fn include_roster<'a>(self, roster: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut counts: HashMap<String, (String, u64)> =
            self.rows.into_iter().map(|r| (r.actor, (r.display_name, r.count))).collect();
        for (key, name) in roster {
            counts.entry(key.to_string()).or_insert_with(|| (name.to_string(), 0));
        }
        Self::from_counts(counts)
    }
}

type Counts = HashMap<String, (String, u64)>;

fn merge_counts(mut a: Counts, b: Counts) -> Counts {
    for (k, (name, n)) in b {
        let e = a.entry(k).or_insert_with(|| (name.clone(), 0));
        if name < e.0 {
            e.0 = name;
        }
        e.1 += n;
    }
    a
}

pub fn activity_by_learner(stmts: &[Statement], window: Option<&TimeWindow>) -> ActivitySummary {
    let counts = par::fold_merge(
        stmts,
        Counts::new,
        |mut acc, s| {
            if window.is_none_or(|w| w.contains(s.timestamp)) {
                let name = &s.actor.display_name;
                let e = acc.entry(actor_key(s)).or_insert_with(|| (name.clone(), 0));
                if *name < e.0 {
                    e.0 = name.clone();
                }
                e.1 += 1;
            }
            acc
        },
        merge_counts,
    );
    ActivitySummary::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectCount {
    pub object_id: String,
    pub name: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecentStatement {
    pub id: uuid::Uuid,
    pub timestamp: DateTime<Utc>,
    pub verb: String,
    pub object: String,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerDetail {
    pub actor: String,
    /// False when the actor has no statements in scope.
    pub found: bool,
    pub display_name: Option<String>,
    pub total: u64,
    pub by_verb: BTreeMap<String, u64>,
    pub by_object: Vec<ObjectCount>,
    pub recent: Vec<RecentStatement>,
}

pub fn learner_detail(stmts: &[Statement], actor: &str) -> LearnerDetail {
    let mut mine: Vec<&Statement> = stmts.iter().filter(|s| s.actor.key().as_deref() == Some(actor)).collect();
    let mut by_verb = BTreeMap::new();
    let mut objects: HashMap<&str, (&str, u64)> = HashMap::new();
    for s in &mine {
        *by_verb.entry(s.verb.display.clone()).or_insert(0) += 1;
        objects.entry(s.object.id.as_str()).or_insert((s.object.name.as_str(), 0)).1 += 1;
    }
    let mut by_object: Vec<ObjectCount> = objects
        .into_iter()
        .map(|(id, (name, count))| ObjectCount { object_id: id.to_string(), name: name.to_string(), count })
        .collect();
    by_object.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.object_id.cmp(&b.object_id)));
    mine.sort_by_key(|s| Reverse((s.timestamp, s.id)));
    let display_name = mine.first().map(|s| s.actor.display_name.clone());
    let recent = mine
        .iter()
        .take(RECENT_LIMIT)
        .map(|s| RecentStatement {
            id: s.id,
            timestamp: s.timestamp,
            verb: s.verb.display.clone(),
            object: s.object.name.clone(),
            sentence: render_sentence(s),
        })
        .collect();
    LearnerDetail {
        actor: actor.to_string(),
        found: !mine.is_empty(),
        display_name,
        total: mine.len() as u64,
        by_verb,
        by_object,
        recent,
    }
}

/// A course term: `weeks` seven-day bins starting at midnight UTC on `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub start: NaiveDate,
    pub weeks: u32,
}

impl Term {
    pub fn new(start: NaiveDate, weeks: u32) -> Result<Self, AnalyticsError> {
        if weeks == 0 {
            return Err(AnalyticsError::EmptyTerm);
        }
        Ok(Term { start, weeks })
    }

    pub fn start_instant(&self) -> DateTime<Utc> {
        self.start.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
    }

    /// 1-based week number, or `None` outside the term.
    pub fn week_of(&self, ts: DateTime<Utc>) -> Option<u32> {
        let offset = ts - self.start_instant();
        if offset < Duration::zero() {
            return None;
        }
        let week = offset.num_seconds() / (7 * 24 * 3600) + 1;
        (week <= self.weeks as i64).then_some(week as u32)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassFail {
    pub passed: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meetings {
    pub attended: u64,
    pub registered: u64,
}

/// actor -> week -> counts. Weeks absent from the inner map have zero counts.
pub type WeeklyCells<T> = BTreeMap<String, BTreeMap<u32, T>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyQuizSummary {
    pub term: Term,
    pub cells: WeeklyCells<PassFail>,
    pub meetings: WeeklyCells<Meetings>,
}

impl WeeklyQuizSummary {
    /// (passed, failed) over the whole term per actor.
    pub fn quiz_totals(&self) -> BTreeMap<&str, PassFail> {
        self.cells
            .iter()
            .map(|(actor, weeks)| {
                let total = weeks.values().fold(PassFail::default(), |acc, c| PassFail {
                    passed: acc.passed + c.passed,
                    failed: acc.failed + c.failed,
                });
                (actor.as_str(), total)
            })
            .collect()
    }

    /// passed / (passed + failed); absent for actors without quiz attempts.
    pub fn pass_rate(&self, actor: &str) -> Option<f64> {
        let weeks = self.cells.get(actor)?;
        let (p, f) = weeks.values().fold((0u64, 0u64), |(p, f), c| (p + c.passed, f + c.failed));
        (p + f > 0).then(|| p as f64 / (p + f) as f64)
    }
}

#[derive(Default)]
struct WeeklyAcc {
    cells: WeeklyCells<PassFail>,
    meetings: WeeklyCells<Meetings>,
}

fn merge_cells<T: Copy + Default>(
    into: &mut WeeklyCells<T>,
    from: WeeklyCells<T>,
    add: impl Fn(&mut T, T),
) {
    for (actor, weeks) in from {
        let target = into.entry(actor).or_default();
        for (week, cell) in weeks {
            add(target.entry(week).or_default(), cell);
        }
    }
}

pub fn weekly_summary(stmts: &[Statement], term: Term) -> WeeklyQuizSummary {
    let acc = par::fold_merge(
        stmts,
        WeeklyAcc::default,
        |mut acc, s| {
            let verb = s.verb.id.as_str();
            if !matches!(verb, verbs::PASSED | verbs::FAILED | verbs::ATTENDED | verbs::REGISTERED) {
                return acc;
            }
            let Some(week) = term.week_of(s.timestamp) else {
                return acc;
            };
            let actor = actor_key(s);
            match verb {
                verbs::PASSED => acc.cells.entry(actor).or_default().entry(week).or_default().passed += 1,
                verbs::FAILED => acc.cells.entry(actor).or_default().entry(week).or_default().failed += 1,
                verbs::ATTENDED => acc.meetings.entry(actor).or_default().entry(week).or_default().attended += 1,
                _ => acc.meetings.entry(actor).or_default().entry(week).or_default().registered += 1,
            }
            acc
        },
        |mut a, b| {
            merge_cells(&mut a.cells, b.cells, |t, c| {
                t.passed += c.passed;
                t.failed += c.failed;
            });
            merge_cells(&mut a.meetings, b.meetings, |t, c| {
                t.attended += c.attended;
                t.registered += c.registered;
            });
            a
        },
    );
    WeeklyQuizSummary { term, cells: acc.cells, meetings: acc.meetings }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierMethod {
    Percentile,
    Zscore,
}

/// How the activity and pass-rate tests combine under the percentile method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conjunction {
    #[default]
    Or,
    And,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub method: OutlierMethod,
    pub parameter: f64,
    #[serde(default)]
    pub conjunction: Conjunction,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        OutlierSpec { method: OutlierMethod::Percentile, parameter: 0.10, conjunction: Conjunction::Or }
    }
}

impl OutlierSpec {
    pub fn percentile(p: f64) -> Self {
        OutlierSpec { method: OutlierMethod::Percentile, parameter: p, conjunction: Conjunction::Or }
    }

    pub fn zscore(z: f64) -> Self {
        OutlierSpec { method: OutlierMethod::Zscore, parameter: z, conjunction: Conjunction::Or }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        match self.method {
            OutlierMethod::Percentile if !(self.parameter > 0.0 && self.parameter < 1.0) => {
                Err(AnalyticsError::BadPercentile(self.parameter))
            }
            OutlierMethod::Zscore if !(self.parameter < 0.0) => Err(AnalyticsError::BadZscore(self.parameter)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedLearner {
    pub actor: String,
    pub display_name: String,
    pub activity_count: u64,
    pub pass_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub threshold_spec: OutlierSpec,
    pub cohort_size: usize,
    pub flagged: Vec<FlaggedLearner>,
    pub generated_at: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Nearest-rank quantile of an ascending slice: element `ceil(p*n) - 1`.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    let rank = (p * n as f64 - 1e-9).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Lower-tail test used by the percentile method: at or below the
/// `p`-quantile and strictly below the (lower) median, so a cohort without a
/// lower tail flags no one.
fn in_lower_tail<T: Copy + PartialOrd>(value: T, sorted: &[T], p: f64) -> bool {
    value <= nearest_rank(sorted, p) && value < nearest_rank(sorted, 0.5)
}

/// Flags underperforming learners.
///
/// Percentile: activity in the lower tail `OR` (configurable `AND`) pass rate in
/// the lower tail of the learners that have a pass rate. Z-score: standardized
/// activity strictly below the (negative) parameter; zero variance flags no one.
pub fn detect_outliers(
    summary: &ActivitySummary,
    quiz: &WeeklyQuizSummary,
    spec: OutlierSpec,
    generated_at: DateTime<Utc>,
) -> Result<OutlierReport, AnalyticsError> {
    spec.validate()?;
    let cohort = &summary.rows;
    let mut report =
        OutlierReport { threshold_spec: spec, cohort_size: cohort.len(), flagged: Vec::new(), generated_at, note: None };
    if cohort.len() < MIN_COHORT {
        report.note = Some(format!("cohort too small ({} < {MIN_COHORT})", cohort.len()));
        return Ok(report);
    }
    let rates: Vec<Option<f64>> = cohort.iter().map(|r| quiz.pass_rate(&r.actor)).collect();
    let flags: Vec<bool> = match spec.method {
        OutlierMethod::Percentile => {
            let mut counts: Vec<u64> = cohort.iter().map(|r| r.count).collect();
            counts.sort_unstable();
            let mut known: Vec<f64> = rates.iter().flatten().copied().collect();
            known.sort_by(f64::total_cmp);
            cohort
                .iter()
                .zip(&rates)
                .map(|(row, rate)| {
                    let low_activity = in_lower_tail(row.count, &counts, spec.parameter);
                    let low_rate = rate.is_some_and(|r| !known.is_empty() && in_lower_tail(r, &known, spec.parameter));
                    match spec.conjunction {
                        Conjunction::Or => low_activity || low_rate,
                        Conjunction::And => low_activity && low_rate,
                    }
                })
                .collect()
        }
        OutlierMethod::Zscore => {
            // z = d * sqrt(n / ss) with d = n*x - sum and ss = sum of d^2. For a
            // negative threshold t, z < t  <=>  d < 0 and d^2 * n > t^2 * ss, which
            // stays in integers up to the final comparison, so flags are exactly
            // invariant to shifting every count.
            let n = cohort.len() as i128;
            let sum: i128 = cohort.iter().map(|r| r.count as i128).sum();
            let devs: Vec<i128> = cohort.iter().map(|r| n * r.count as i128 - sum).collect();
            let ss: i128 = devs.iter().map(|d| d * d).sum();
            if ss == 0 {
                vec![false; cohort.len()]
            } else {
                let bound = spec.parameter * spec.parameter * ss as f64;
                devs.iter().map(|d| *d < 0 && (d * d * n) as f64 > bound).collect()
            }
        }
    };
    report.flagged = cohort
        .iter()
        .zip(rates)
        .zip(flags)
        .filter(|(_, flagged)| *flagged)
        .map(|((row, pass_rate), _)| FlaggedLearner {
            actor: row.actor.clone(),
            display_name: row.display_name.clone(),
            activity_count: row.count,
            pass_rate,
        })
        .collect();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeliveryError {
    #[error("transient delivery failure: {0}")]
    Transient(String),
    #[error("delivery failed: {0}")]
    Permanent(String),
}

/// Destination for instructor notifications.
pub trait NotificationSink {
    fn describe(&self) -> String;
    fn deliver(&self, payload: &[u8]) -> Result<(), DeliveryError>;
}

#[derive(Debug, Clone)]
pub struct FileSink {
    pub path: PathBuf,
}

impl NotificationSink for FileSink {
    fn describe(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn deliver(&self, payload: &[u8]) -> Result<(), DeliveryError> {
        std::fs::write(&self.path, payload).map_err(|e| DeliveryError::Permanent(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub sink: String,
    pub delivered_at: DateTime<Utc>,
    pub payload_digest: String,
    pub flagged_count: usize,
    pub attempts: u32,
    pub delivered: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Serialize)]
struct NotificationPayload<'a> {
    kind: &'static str,
    flagged_count: usize,
    report: &'a OutlierReport,
}

pub fn notification_payload(report: &OutlierReport) -> Vec<u8> {
    serde_json::to_vec(&NotificationPayload {
        kind: "underperforming_outliers",
        flagged_count: report.flagged.len(),
        report,
    })
    .expect("report serializes")
}

pub fn payload_digest(payload: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(payload)))
}

/// Sends the report to `sink`, retrying transient failures per `policy`. An
/// empty flagged list is still delivered.
pub fn emit_notification(
    report: &OutlierReport,
    sink: &dyn NotificationSink,
    policy: &RetryPolicy,
    now: DateTime<Utc>,
) -> DeliveryRecord {
    let payload = notification_payload(report);
    let mut record = DeliveryRecord {
        sink: sink.describe(),
        delivered_at: now,
        payload_digest: payload_digest(&payload),
        flagged_count: report.flagged.len(),
        attempts: 0,
        delivered: false,
        error: None,
    };
    let max = policy.max_attempts.max(1);
    loop {
        record.attempts += 1;
        match sink.deliver(&payload) {
            Ok(()) => {
                record.delivered = true;
                record.error = None;
                return record;
            }
            Err(DeliveryError::Transient(e)) if record.attempts < max => {
                tracing::warn!(sink = %record.sink, attempt = record.attempts, "notification delivery failed: {e}");
                record.error = Some(e);
                std::thread::sleep(policy.delay_after(record.attempts));
            }
            Err(e) => {
                record.error = Some(e.to_string());
                return record;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xapi::fixtures;
    use chrono::TimeZone;
    use std::cell::Cell;

    fn summary(counts: &[(&str, u64)]) -> ActivitySummary {
        ActivitySummary::from_counts(
            counts.iter().map(|(a, c)| (a.to_string(), (a.to_string(), *c))).collect(),
        )
    }

    fn empty_quiz() -> WeeklyQuizSummary {
        WeeklyQuizSummary {
            term: Term::new(NaiveDate::from_ymd_opt(2025, 1, 6).unwrap(), 10).unwrap(),
            cells: BTreeMap::new(),
            meetings: BTreeMap::new(),
        }
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn empty_inputs() {
        assert!(activity_by_learner(&[], None).rows.is_empty());
        let w = TimeWindow::new(Some(t0()), Some(t0())).unwrap();
        assert!(activity_by_learner(&[fixtures::susan_viewed()], Some(&w)).rows.is_empty());
        assert!(TimeWindow::new(Some(t0()), Some(t0() - Duration::seconds(1))).is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_actor() {
        let s = summary(&[("c", 3), ("a", 5), ("b", 3)]);
        let order: Vec<&str> = s.rows.iter().map(|r| r.actor.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        let s = summary(&[("z", 3), ("y", 3), ("x", 5)]);
        let order: Vec<&str> = s.rows.iter().map(|r| r.actor.as_str()).collect();
        assert_eq!(order, ["x", "y", "z"]);
    }

    #[test]
    fn learner_detail_counts() {
        let mut stmts = vec![fixtures::susan_passed_quiz(), fixtures::admin_asked()];
        let mut again = fixtures::admin_asked();
        again.id = uuid::Uuid::from_u128(99);
        stmts.push(again);
        let admin = fixtures::admin_asked().actor.key().unwrap();
        let d = learner_detail(&stmts, &admin);
        assert!(d.found);
        assert_eq!(d.by_verb, BTreeMap::from([("asked".to_string(), 2)]));
        assert_eq!(d.by_verb.values().sum::<u64>(), d.total);
        assert_eq!(d.by_object[0].count, 2);
        let missing = learner_detail(&stmts, "mailto:nobody@example.org");
        assert!(!missing.found);
        assert_eq!(missing.total, 0);
    }

    #[test]
    fn week_bucketing() {
        let term = Term::new(NaiveDate::from_ymd_opt(2024, 4, 1).unwrap(), 10).unwrap();
        let mut s = fixtures::susan_passed_quiz(); // 2024-04-10, day 9 -> week 2
        let w = weekly_summary(std::slice::from_ref(&s), term);
        let key = s.actor.key().unwrap();
        assert_eq!(w.cells[&key][&2], PassFail { passed: 1, failed: 0 });
        s.timestamp = Utc.with_ymd_and_hms(2024, 3, 31, 23, 59, 59).unwrap();
        assert!(weekly_summary(&[s], term).cells.is_empty());
        assert_eq!(term.week_of(Utc.with_ymd_and_hms(2024, 4, 1, 0, 0, 0).unwrap()), Some(1));
        assert_eq!(term.week_of(Utc.with_ymd_and_hms(2024, 6, 10, 0, 0, 0).unwrap()), None);
        assert_eq!(Term::new(term.start, 0), Err(AnalyticsError::EmptyTerm));
    }

    #[test]
    fn nearest_rank_quantiles() {
        let v = [0u64, 3, 4, 5, 6, 7, 8, 9, 10, 11];
        assert_eq!(nearest_rank(&v, 0.1), 0);
        assert_eq!(nearest_rank(&v, 0.5), 6);
        assert_eq!(nearest_rank(&v, 0.11), 3);
        assert_eq!(nearest_rank(&[7u64], 0.3), 7);
    }

    #[test]
    fn zero_activity_learner_is_flagged() {
        let mut counts: Vec<(String, u64)> = (1..=9).map(|i| (format!("l{i}"), 10 + i)).collect();
        counts.push(("idle".into(), 0));
        let s = summary(&counts.iter().map(|(a, c)| (a.as_str(), *c)).collect::<Vec<_>>());
        let r = detect_outliers(&s, &empty_quiz(), OutlierSpec::percentile(0.1), t0()).unwrap();
        let flagged: Vec<&str> = r.flagged.iter().map(|f| f.actor.as_str()).collect();
        assert_eq!(flagged, ["idle"]);
    }

    #[test]
    fn uniform_cohort_flags_nobody() {
        let s = summary(&[("a", 4), ("b", 4), ("c", 4), ("d", 4)]);
        for spec in [OutlierSpec::zscore(-1.0), OutlierSpec::percentile(0.1)] {
            assert!(detect_outliers(&s, &empty_quiz(), spec, t0()).unwrap().flagged.is_empty());
        }
    }

    #[test]
    fn small_cohort_note() {
        let s = summary(&[("a", 1), ("b", 9)]);
        let r = detect_outliers(&s, &empty_quiz(), OutlierSpec::default(), t0()).unwrap();
        assert!(r.flagged.is_empty());
        assert!(r.note.unwrap().contains("too small"));
    }

    #[test]
    fn bad_parameters() {
        let s = summary(&[("a", 1), ("b", 2), ("c", 3)]);
        assert!(detect_outliers(&s, &empty_quiz(), OutlierSpec::percentile(1.0), t0()).is_err());
        assert!(detect_outliers(&s, &empty_quiz(), OutlierSpec::zscore(0.5), t0()).is_err());
    }

    #[test]
    fn pass_rate_joins_under_or_and_and() {
        let s = summary(&[("a", 10), ("b", 10), ("c", 10), ("d", 1)]);
        let mut quiz = empty_quiz();
        for (actor, p, f) in [("a", 3, 0), ("b", 3, 0), ("c", 0, 3)] {
            quiz.cells.entry(actor.into()).or_default().insert(1, PassFail { passed: p, failed: f });
        }
        let or = detect_outliers(&s, &quiz, OutlierSpec::percentile(0.25), t0()).unwrap();
        let names: Vec<&str> = or.flagged.iter().map(|f| f.actor.as_str()).collect();
        assert_eq!(names, ["c", "d"]);
        let and = OutlierSpec { conjunction: Conjunction::And, ..OutlierSpec::percentile(0.25) };
        assert!(detect_outliers(&s, &quiz, and, t0()).unwrap().flagged.is_empty());
        assert_eq!(quiz.pass_rate("d"), None);
    }

    struct Flaky {
        failures_left: Cell<u32>,
        received: Cell<usize>,
    }

    impl NotificationSink for Flaky {
        fn describe(&self) -> String {
            "flaky".into()
        }
        fn deliver(&self, payload: &[u8]) -> Result<(), DeliveryError> {
            if self.failures_left.get() > 0 {
                self.failures_left.set(self.failures_left.get() - 1);
                return Err(DeliveryError::Transient("HTTP 500".into()));
            }
            self.received.set(payload.len());
            Ok(())
        }
    }

    fn sample_report() -> OutlierReport {
        OutlierReport { threshold_spec: OutlierSpec::default(), cohort_size: 5, flagged: vec![], generated_at: t0(), note: None }
    }

    #[test]
    fn file_sink_writes_payload_with_matching_digest() {
        let dir = tempfile::tempdir().unwrap();
        let sink = FileSink { path: dir.path().join("alert.json") };
        let record = emit_notification(&sample_report(), &sink, &RetryPolicy::immediate(3), t0());
        assert!(record.delivered);
        assert_eq!(record.flagged_count, 0);
        let written = std::fs::read(&sink.path).unwrap();
        assert_eq!(record.payload_digest, payload_digest(&written));
        let v: serde_json::Value = serde_json::from_slice(&written).unwrap();
        assert_eq!(v["flagged_count"], 0);
    }

    #[test]
    fn transient_failures_are_retried() {
        let sink = Flaky { failures_left: Cell::new(1), received: Cell::new(0) };
        let record = emit_notification(&sample_report(), &sink, &RetryPolicy::immediate(5), t0());
        assert!(record.delivered);
        assert_eq!(record.attempts, 2);
        let sink = Flaky { failures_left: Cell::new(10), received: Cell::new(0) };
        let record = emit_notification(&sample_report(), &sink, &RetryPolicy::immediate(3), t0());
        assert!(!record.delivered);
        assert_eq!(record.attempts, 3);
        assert_eq!(sink.received.get(), 0);
    }
}
