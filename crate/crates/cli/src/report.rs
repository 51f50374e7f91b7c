//! `vita report`: analytics and the CSV export computed from a data
//! directory (read-only) or from a running service's statements.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use clap::ValueEnum;
use vita_core::analytics::{
    activity_by_learner, detect_outliers, emit_notification, ActivitySummary, FileSink, NotificationSink, OutlierReport,
    Term, WeeklyQuizSummary,
};
use vita_core::export::{export_csv, EXPORT_FILE_NAME};
use vita_core::retry::RetryPolicy;
use vita_core::xapi::{parse_timestamp, statement_from_value, GranularityTier, Statement};
use vita_ingest::{redact_url, WebhookSink};
use vita_lrs::http::outlier_spec;
use vita_lrs::service::load_registry;
use vita_lrs::{QueryFilter, TieredLrs};

use crate::commands::CliError;
use crate::config::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Activity,
    Weekly,
    Outliers,
    ExportCsv,
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    /// Read from this service instead of the data directory.
    pub endpoint: Option<String>,
    pub tier: Option<String>,
    pub agent: Option<String>,
    pub verb: Option<String>,
    pub since: Option<String>,
    pub until: Option<String>,
    pub start: Option<NaiveDate>,
    pub weeks: Option<u32>,
    pub method: Option<String>,
    pub param: Option<String>,
    pub conjunction: Option<String>,
    pub out: Option<PathBuf>,
    pub notify: Option<String>,
    pub json: bool,
    /// Timestamp for the outlier report; now when absent.
    pub now: Option<DateTime<Utc>>,
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn filter(opts: &ReportOptions) -> Result<QueryFilter, CliError> {
    let ts = |name: &str, v: &Option<String>| {
        v.as_deref().map(|s| parse_timestamp(s).map_err(|e| usage(format!("--{name}: {e}")))).transpose()
    };
    let f = QueryFilter {
        agent: opts.agent.clone(),
        verb: opts.verb.clone(),
        since: ts("since", &opts.since)?,
        until: ts("until", &opts.until)?,
        limit: usize::MAX,
        cursor: None,
    };
    f.validate().map_err(usage)?;
    Ok(f)
}

fn local_statements(settings: &Settings, tier: GranularityTier, f: &QueryFilter) -> Result<Vec<Statement>, CliError> {
    let dir = &settings.data_dir;
    if !dir.is_dir() {
        return Err(usage(format!("data directory {} does not exist", dir.display())));
    }
    let reg = load_registry(settings.registry.as_deref()).map_err(usage)?;
    let lrs = TieredLrs::load_read_only(dir, reg).map_err(|e| CliError::Data(e.to_string()))?;
    lrs.query_all(tier, f).map_err(usage)
}

/// Pages through `GET /xapi/statements`.
fn remote_statements(endpoint: &str, tier: GranularityTier, f: &QueryFilter) -> Result<Vec<Statement>, CliError> {
    let url = format!("{}/xapi/statements", endpoint.trim_end_matches('/'));
    let shown = redact_url(endpoint);
    let client = reqwest::blocking::Client::new();
    let mut base: Vec<(&str, String)> = vec![("tier", tier.as_str().to_string()), ("limit", "1000".into())];
    if let Some(a) = &f.agent {
        base.push(("agent", a.clone()));
    }
    if let Some(v) = &f.verb {
        base.push(("verb", v.clone()));
    }
    if let Some(t) = f.since {
        base.push(("since", vita_core::xapi::format_timestamp(&t)));
    }
    if let Some(t) = f.until {
        base.push(("until", vita_core::xapi::format_timestamp(&t)));
    }
    let mut out = Vec::new();
    let mut cursor: Option<String> = None;
    loop {
        let mut params = base.clone();
        if let Some(c) = &cursor {
            params.push(("cursor", c.clone()));
        }
        let u = reqwest::Url::parse_with_params(&url, &params).map_err(|e| usage(format!("--endpoint: {e}")))?;
        let resp = client.get(u).send().map_err(|e| CliError::Data(format!("{shown}: {}", e.without_url())))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| CliError::Data(e.without_url().to_string()))?;
        if !status.is_success() {
            return Err(CliError::Data(format!("{shown}: HTTP {status}: {text}")));
        }
        let mut body: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Data(e.to_string()))?;
        let stmts = match body["statements"].take() {
            serde_json::Value::Array(items) => items,
            _ => return Err(CliError::Data(format!("{shown}: response has no statements array"))),
        };
        for v in stmts {
            out.push(statement_from_value(v).map_err(|e| CliError::Data(e.to_string()))?);
        }
        match body["more"].as_str() {
            Some(c) => cursor = Some(c.to_string()),
            None => return Ok(out),
        }
    }
}

fn term(settings: &Settings, opts: &ReportOptions) -> Result<Term, CliError> {
    let start = opts.start.or(settings.term_start).unwrap_or(NaiveDate::from_ymd_opt(2025, 1, 6).expect("valid date"));
    let weeks = opts.weeks.or(settings.term_weeks).unwrap_or(vita_core::demo::DEMO_WEEKS);
    Term::new(start, weeks).map_err(usage)
}

pub fn activity_table(summary: &ActivitySummary) -> String {
    let mut s = format!("{:<5} {:>7}  {:<24} {}\n", "rank", "count", "name", "learner");
    for (i, r) in summary.rows.iter().enumerate() {
        let _ = writeln!(s, "{:<5} {:>7}  {:<24} {}", i + 1, r.count, r.display_name, r.actor);
    }
    s
}

/// One line per learner; each week cell is `passed/failed`.
pub fn weekly_table(w: &WeeklyQuizSummary) -> String {
    let mut s = String::from("learner");
    for week in 1..=w.term.weeks {
        let _ = write!(s, "\tw{week}");
    }
    s.push('\n');
    for (actor, weeks) in &w.cells {
        s.push_str(actor);
        for week in 1..=w.term.weeks {
            let c = weeks.get(&week).copied().unwrap_or_default();
            let _ = write!(s, "\t{}/{}", c.passed, c.failed);
        }
        s.push('\n');
    }
    s
}

pub fn outlier_table(r: &OutlierReport) -> String {
    let spec = &r.threshold_spec;
    let mut s = format!(
        "cohort {} | method {:?} param {} conjunction {:?} | flagged {}\n",
        r.cohort_size,
        spec.method,
        spec.parameter,
        spec.conjunction,
        r.flagged.len()
    )
    .to_lowercase();
    if let Some(note) = &r.note {
        let _ = writeln!(s, "note: {note}");
    }
    for f in &r.flagged {
        let rate = f.pass_rate.map_or("-".to_string(), |p| format!("{p:.3}"));
        let _ = writeln!(s, "{:>7}  {:>6}  {:<24} {}", f.activity_count, rate, f.display_name, f.actor);
    }
    s
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Data(e.to_string())),
        Some(p) => std::fs::write(p, bytes).map_err(|e| usage(format!("{}: {e}", p.display()))),
    }
}

fn notify(target: &str, report: &OutlierReport, policy: &RetryPolicy, now: DateTime<Utc>) -> Result<(), CliError> {
    let sink: Box<dyn NotificationSink> = if target.starts_with("http://") || target.starts_with("https://") {
        Box::new(WebhookSink::new(target).map_err(usage)?)
    } else {
        Box::new(FileSink { path: PathBuf::from(target) })
    };
    let record = emit_notification(report, sink.as_ref(), policy, now);
    eprintln!("{}", serde_json::to_string(&record).expect("record serializes"));
    if record.delivered {
        Ok(())
    } else {
        Err(CliError::Data(format!("notification to {} not delivered", record.sink)))
    }
}

pub fn run(kind: ReportKind, settings: &Settings, opts: &ReportOptions) -> Result<(), CliError> {
    let tier = match &opts.tier {
        Some(t) => t.parse().map_err(usage)?,
        None => GranularityTier::Noise,
    };
    let mut params = std::collections::BTreeMap::new();
    for (k, v) in [("method", &opts.method), ("param", &opts.param), ("conjunction", &opts.conjunction)] {
        if let Some(v) = v {
            params.insert(k.to_string(), v.clone());
        }
    }
    let spec = outlier_spec(&params).map_err(usage)?;
    if opts.notify.is_some() && kind != ReportKind::Outliers {
        return Err(usage("--notify only applies to the outliers report"));
    }
    let term = term(settings, opts)?;
    let f = filter(opts)?;
    let stmts = match &opts.endpoint {
        Some(e) => remote_statements(e, tier, &f)?,
        None => local_statements(settings, tier, &f)?,
    };

    let json = |v: serde_json::Value| serde_json::to_vec_pretty(&v).expect("serializes");
    match kind {
        ReportKind::Activity => {
            let summary = activity_by_learner(&stmts, None);
            let body = if opts.json {
                json(serde_json::json!({"total": summary.total(), "rows": summary.rows}))
            } else {
                activity_table(&summary).into_bytes()
            };
            write_out(opts.out.as_deref(), &body)
        }
        ReportKind::Weekly => {
            let w = vita_core::analytics::weekly_summary(&stmts, term);
            let body = if opts.json { json(serde_json::to_value(&w).expect("serializes")) } else { weekly_table(&w).into_bytes() };
            write_out(opts.out.as_deref(), &body)
        }
        ReportKind::Outliers => {
            let now = opts.now.unwrap_or_else(Utc::now);
            let summary = activity_by_learner(&stmts, None);
            let weekly = vita_core::analytics::weekly_summary(&stmts, term);
            let report = detect_outliers(&summary, &weekly, spec, now).map_err(usage)?;
            let body =
                if opts.json { json(serde_json::to_value(&report).expect("serializes")) } else { outlier_table(&report).into_bytes() };
            write_out(opts.out.as_deref(), &body)?;
            match &opts.notify {
                Some(target) => notify(target, &report, &settings.retry, now),
                None => Ok(()),
            }
        }
        ReportKind::ExportCsv => {
            let csv = export_csv(&stmts);
            let path = match opts.out.as_deref() {
                Some(p) if p == Path::new("-") => return write_out(None, &csv),
                Some(p) if p.is_dir() => p.join(EXPORT_FILE_NAME),
                Some(p) => p.to_path_buf(),
                None => PathBuf::from(EXPORT_FILE_NAME),
            };
            write_out(Some(&path), &csv)?;
            eprintln!("wrote {} rows to {}", stmts.len(), path.display());
            Ok(())
        }
    }
}
