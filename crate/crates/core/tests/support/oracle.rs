//! Brute-force reference implementations for the analytics aggregates.
//! Deliberately naive: single pass, exact integer and rational arithmetic.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use vita_core::xapi::Statement;

const PASSED: &str = "http://adlnet.gov/expapi/verbs/passed";
const FAILED: &str = "http://adlnet.gov/expapi/verbs/failed";
const ATTENDED: &str = "http://adlnet.gov/expapi/verbs/attended";
const REGISTERED: &str = "http://adlnet.gov/expapi/verbs/registered";

pub fn key(s: &Statement) -> String {
    match (&s.actor.mbox, &s.actor.account) {
        (Some(m), _) => m.clone(),
        (None, Some(a)) => format!("account:{}@{}", a.name, a.home_page),
        _ => String::new(),
    }
}

/// (actor, count), count descending then actor ascending.
pub fn activity(stmts: &[Statement], since: Option<DateTime<Utc>>, until: Option<DateTime<Utc>>) -> Vec<(String, u64)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in stmts {
        if since.is_some_and(|t| s.timestamp < t) || until.is_some_and(|t| s.timestamp > t) {
            continue;
        }
        *counts.entry(key(s)).or_default() += 1;
    }
    let mut rows: Vec<(String, u64)> = counts.into_iter().collect();
    // stable sort on count keeps the BTreeMap's ascending actor order for ties
    rows.sort_by(|a, b| b.1.cmp(&a.1));
    rows
}

pub type Cell = (u64, u64);

/// ((actor, week) -> (passed, failed), (actor, week) -> (attended, registered)).
pub fn weekly(stmts: &[Statement], start: NaiveDate, weeks: u32) -> (BTreeMap<(String, u32), Cell>, BTreeMap<(String, u32), Cell>) {
    let t0 = start.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
    let mut quiz = BTreeMap::new();
    let mut meet = BTreeMap::new();
    for s in stmts {
        let secs = s.timestamp.timestamp() - t0;
        if secs < 0 {
            continue;
        }
        let week = (secs / 604_800) as u32 + 1;
        if week > weeks {
            continue;
        }
        let k = (key(s), week);
        match s.verb.id.as_str() {
            PASSED => quiz.entry(k).or_insert((0, 0)).0 += 1,
            FAILED => quiz.entry(k).or_insert((0, 0)).1 += 1,
            ATTENDED => meet.entry(k).or_insert((0, 0)).0 += 1,
            REGISTERED => meet.entry(k).or_insert((0, 0)).1 += 1,
            _ => {}
        }
    }
    (quiz, meet)
}

/// Term-wide (passed, failed) per actor with at least one attempt.
pub fn attempts(quiz: &BTreeMap<(String, u32), Cell>) -> BTreeMap<String, Cell> {
    let mut out: BTreeMap<String, Cell> = BTreeMap::new();
    for ((actor, _), (p, f)) in quiz {
        let e = out.entry(actor.clone()).or_default();
        e.0 += p;
        e.1 += f;
    }
    out.retain(|_, (p, f)| *p + *f > 0);
    out
}

/// Nearest rank for p = percent/100: the k-th smallest with k = ceil(percent*n/100).
fn nearest_rank<T: Clone>(sorted: &[T], percent: u64) -> T {
    let n = sorted.len() as u64;
    let k = (percent * n).div_ceil(100).max(1);
    sorted[(k - 1) as usize].clone()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Ratio(u64, u64);

impl Ratio {
    fn le(self, o: Ratio) -> bool {
        (self.0 as u128) * (o.1 as u128) <= (o.0 as u128) * (self.1 as u128)
    }
    fn lt(self, o: Ratio) -> bool {
        (self.0 as u128) * (o.1 as u128) < (o.0 as u128) * (self.1 as u128)
    }
}

/// Percentile predicate: count in the lower tail (<= p-quantile and < lower
/// median) combined with the same test on pass rates.
pub fn percentile_flags(
    rows: &[(String, u64)],
    rates: &BTreeMap<String, Cell>,
    percent: u64,
    and: bool,
) -> BTreeSet<String> {
    if rows.len() < 3 {
        return BTreeSet::new();
    }
    let mut counts: Vec<u64> = rows.iter().map(|r| r.1).collect();
    counts.sort();
    let q = nearest_rank(&counts, percent);
    let med = nearest_rank(&counts, 50);
    let mut known: Vec<Ratio> = rows
        .iter()
        .filter_map(|(a, _)| rates.get(a).map(|(p, f)| Ratio(*p, p + f)))
        .collect();
    // sort by value, exact
    known.sort_by(|a, b| ((a.0 as u128) * (b.1 as u128)).cmp(&((b.0 as u128) * (a.1 as u128))));
    let mut out = BTreeSet::new();
    for (actor, c) in rows {
        let low_c = *c <= q && *c < med;
        let low_r = match rates.get(actor) {
            Some((p, f)) if !known.is_empty() => {
                let r = Ratio(*p, p + f);
                r.le(nearest_rank(&known, percent)) && r.lt(nearest_rank(&known, 50))
            }
            _ => false,
        };
        if if and { low_c && low_r } else { low_c || low_r } {
            out.insert(actor.clone());
        }
    }
    out
}

/// z-score predicate for threshold -quarters/4: population z strictly below it.
pub fn zscore_flags(rows: &[(String, u64)], quarters: u64) -> BTreeSet<String> {
    if rows.len() < 3 {
        return BTreeSet::new();
    }
    let n = rows.len() as i128;
    let sum: i128 = rows.iter().map(|r| r.1 as i128).sum();
    let ss: i128 = rows.iter().map(|r| (n * r.1 as i128 - sum).pow(2)).sum();
    let a = quarters as i128;
    rows.iter()
        .filter(|(_, c)| {
            let d = n * *c as i128 - sum;
            // (d/n) / sqrt(ss/n^3) < -a/4  <=>  d < 0 and 16 d^2 n > a^2 ss
            ss > 0 && d < 0 && 16 * d * d * n > a * a * ss
        })
        .map(|(a, _)| a.clone())
        .collect()
}
