mod support;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::oracle;
use vita_core::analytics::{
    activity_by_learner, detect_outliers, learner_detail, weekly_summary, ActivitySummary, Conjunction, OutlierSpec,
    Term, TimeWindow, WeeklyQuizSummary,
};
use vita_core::demo::{generate_cohort, DemoConfig};
use vita_core::xapi::fixtures::StatementGen;
use vita_core::xapi::{Statement, VerbRegistry};

fn store(seed: u64, n: usize) -> Vec<Statement> {
    let reg = VerbRegistry::standard();
    let gen = StatementGen::new(&reg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| gen.statement(&mut rng)).collect()
}

fn rows(summary: &ActivitySummary) -> Vec<(String, u64)> {
    summary.rows.iter().map(|r| (r.actor.clone(), r.count)).collect()
}

fn flatten<T: Copy>(cells: &BTreeMap<String, BTreeMap<u32, T>>, f: impl Fn(T) -> (u64, u64)) -> BTreeMap<(String, u32), (u64, u64)> {
    cells
        .iter()
        .flat_map(|(a, weeks)| weeks.iter().map(move |(w, c)| ((a.clone(), *w), c)))
        .map(|(k, c)| (k, f(*c)))
        .filter(|(_, v)| *v != (0, 0))
        .collect()
}

fn check_weekly(stmts: &[Statement], term: Term) -> WeeklyQuizSummary {
    let got = weekly_summary(stmts, term);
    let (quiz, meet) = oracle::weekly(stmts, term.start, term.weeks);
    assert_eq!(flatten(&got.cells, |c| (c.passed, c.failed)), quiz);
    assert_eq!(flatten(&got.meetings, |c| (c.attended, c.registered)), meet);
    got
}

fn flagged(stmts: &[Statement], summary: &ActivitySummary, quiz: &WeeklyQuizSummary, spec: OutlierSpec) -> BTreeSet<String> {
    let _ = stmts;
    let at = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    detect_outliers(summary, quiz, spec, at).unwrap().flagged.into_iter().map(|f| f.actor).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn activity_matches_oracle(seed in any::<u64>(), n in 0usize..3000, lo in 0i64..200, len in 0i64..200) {
        let stmts = store(seed, n);
        prop_assert_eq!(rows(&activity_by_learner(&stmts, None)), oracle::activity(&stmts, None, None));
        let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let (since, until) = (t0 + Duration::days(lo), t0 + Duration::days(lo + len));
        let w = TimeWindow::new(Some(since), Some(until)).unwrap();
        let got = activity_by_learner(&stmts, Some(&w));
        prop_assert_eq!(rows(&got), oracle::activity(&stmts, Some(since), Some(until)));
        prop_assert_eq!(got.total() as usize, stmts.iter().filter(|s| w.contains(s.timestamp)).count());
    }

    #[test]
    fn weekly_matches_oracle(seed in any::<u64>(), n in 0usize..3000, offset in 0i64..300, weeks in 1u32..20) {
        let stmts = store(seed, n);
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Duration::days(offset);
        check_weekly(&stmts, Term::new(start, weeks).unwrap());
    }

    #[test]
    fn outliers_match_oracle(seed in any::<u64>(), n in 0usize..1500, percent in 1u64..100, quarters in 1u64..12, and in any::<bool>()) {
        let stmts = store(seed, n);
        let term = Term::new(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 53).unwrap();
        let summary = activity_by_learner(&stmts, None);
        let quiz = weekly_summary(&stmts, term);
        let (q, _) = oracle::weekly(&stmts, term.start, term.weeks);
        let rates = oracle::attempts(&q);
        let r = rows(&summary);
        let mut spec = OutlierSpec::percentile(percent as f64 / 100.0);
        if and {
            spec.conjunction = Conjunction::And;
        }
        prop_assert_eq!(flagged(&stmts, &summary, &quiz, spec), oracle::percentile_flags(&r, &rates, percent, and));
        let spec = OutlierSpec::zscore(-(quarters as f64) / 4.0);
        prop_assert_eq!(flagged(&stmts, &summary, &quiz, spec), oracle::zscore_flags(&r, quarters));
    }

    #[test]
    fn zscore_flags_are_shift_invariant(counts in proptest::collection::vec(0u64..50, 3..40), shift in 0u64..10_000, quarters in 1u64..12) {
        let base: Vec<(String, u64)> = counts.iter().enumerate().map(|(i, c)| (format!("a{i:03}"), *c)).collect();
        let shifted: Vec<(String, u64)> = base.iter().map(|(a, c)| (a.clone(), c + shift)).collect();
        let mk = |r: &[(String, u64)]| ActivitySummary {
            rows: r.iter().map(|(a, c)| vita_core::analytics::ActivityRow { actor: a.clone(), display_name: a.clone(), count: *c }).collect(),
        };
        let quiz = weekly_summary(&[], Term::new(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 1).unwrap());
        let spec = OutlierSpec::zscore(-(quarters as f64) / 4.0);
        let a = flagged(&[], &mk(&base), &quiz, spec);
        prop_assert_eq!(&a, &flagged(&[], &mk(&shifted), &quiz, spec));
        prop_assert_eq!(a, oracle::zscore_flags(&base, quarters));
    }

    #[test]
    fn learner_detail_conserves_counts(seed in any::<u64>(), n in 0usize..800, pick in 0usize..25) {
        let stmts = store(seed, n);
        let reg = VerbRegistry::standard();
        let actors = StatementGen::new(&reg).actors().to_vec();
        let actor = actors.get(pick).and_then(|a| a.key()).unwrap_or_else(|| "mailto:nobody@example.org".into());
        let d = learner_detail(&stmts, &actor);
        let mine: Vec<&Statement> = stmts.iter().filter(|s| oracle::key(s) == actor).collect();
        prop_assert_eq!(d.total as usize, mine.len());
        prop_assert_eq!(d.found, !mine.is_empty());
        prop_assert_eq!(d.by_verb.values().sum::<u64>(), d.total);
        prop_assert_eq!(d.by_object.iter().map(|o| o.count).sum::<u64>(), d.total);
        let mut verbs: BTreeMap<String, u64> = BTreeMap::new();
        for s in &mine {
            *verbs.entry(s.verb.display.clone()).or_default() += 1;
        }
        prop_assert_eq!(&d.by_verb, &verbs);
        prop_assert!(d.recent.len() <= 50);
        prop_assert!(d.recent.windows(2).all(|w| (w[0].timestamp, w[0].id) > (w[1].timestamp, w[1].id)));
    }
}

#[test]
fn ten_thousand_statement_store_matches() {
    let stmts = store(99, 10_000);
    assert_eq!(rows(&activity_by_learner(&stmts, None)), oracle::activity(&stmts, None, None));
    check_weekly(&stmts, Term::new(NaiveDate::from_ymd_opt(2024, 2, 5).unwrap(), 30).unwrap());
}

#[test]
fn demo_cohort_matches_oracle() {
    let reg = VerbRegistry::standard();
    let cohort = generate_cohort(&DemoConfig::default(), &reg);
    let summary = activity_by_learner(&cohort.statements, None);
    assert_eq!(summary.rows.len(), 50);
    assert_eq!(rows(&summary), oracle::activity(&cohort.statements, None, None));
    let quiz = check_weekly(&cohort.statements, cohort.term);
    let (q, _) = oracle::weekly(&cohort.statements, cohort.term.start, cohort.term.weeks);
    let rates = oracle::attempts(&q);
    let got = flagged(&cohort.statements, &summary, &quiz, OutlierSpec::default());
    assert_eq!(got, oracle::percentile_flags(&rows(&summary), &rates, 10, false));
    assert!(!got.is_empty());
}

#[test]
fn zero_activity_learner_is_flagged() {
    let mk = |counts: &[u64]| ActivitySummary {
        rows: counts
            .iter()
            .enumerate()
            .map(|(i, c)| vita_core::analytics::ActivityRow { actor: format!("a{i}"), display_name: format!("A{i}"), count: *c })
            .collect(),
    };
    let quiz = weekly_summary(&[], Term::new(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 1).unwrap());
    let counts = [12, 9, 15, 11, 10, 14, 13, 9, 12, 0];
    let got = flagged(&[], &mk(&counts), &quiz, OutlierSpec::percentile(0.1));
    assert_eq!(got, BTreeSet::from(["a9".to_string()]));
    // uniform cohort, nobody flagged under either method
    let flat = mk(&[5; 10]);
    assert!(flagged(&[], &flat, &quiz, OutlierSpec::zscore(-1.0)).is_empty());
    assert!(flagged(&[], &flat, &quiz, OutlierSpec::percentile(0.1)).is_empty());
}
