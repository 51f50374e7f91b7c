//! End-to-end uploads into a real in-process LRS.

mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use support::*;
use vita_core::demo::demo_chat_log;
use vita_core::retry::RetryPolicy;
use vita_core::xapi::{GranularityTier, VerbRegistry};
use vita_ingest::{default_report_path, run_pipeline, upload_batch, LrsCredentials, PipelineError, UploadReport};

fn creds(base: &str) -> LrsCredentials {
    LrsCredentials::new(base, "ingest", SECRET)
}

#[test]
fn ten_statements_then_all_duplicates() {
    let rt = runtime();
    let (base, state) = spawn_lrs(&rt);
    let stmts = demo_statements(5, 1);
    assert_eq!(stmts.len(), 10);
    let policy = RetryPolicy::immediate(3);
    let first = rt.block_on(upload_batch(&stmts, &creds(&base), &policy));
    assert_eq!((first.attempted, first.stored, first.duplicates, first.failed.len()), (10, 10, 0, 0));
    let again = rt.block_on(upload_batch(&stmts, &creds(&base), &policy));
    assert_eq!((again.attempted, again.stored, again.duplicates, again.failed.len()), (10, 0, 10, 0));
    assert_eq!(state.lrs.len(GranularityTier::Noise), 10);
    assert!(again.results.iter().all(|r| r.attempts == 1));
}

#[test]
fn three_entry_log_writes_report() {
    let rt = runtime();
    let (base, _state) = spawn_lrs(&rt);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("chat.json");
    std::fs::write(&input, demo_chat_log(3, 9)).unwrap();
    let reg = VerbRegistry::standard();
    let out = rt
        .block_on(run_pipeline(&input, &creds(&base), &reg, &RetryPolicy::immediate(3), None))
        .unwrap();
    assert_eq!(out.report.attempted, 6);
    assert_eq!(out.report_path, default_report_path(&input));
    let on_disk: UploadReport = serde_json::from_slice(&std::fs::read(&out.report_path).unwrap()).unwrap();
    assert_eq!(on_disk, out.report);
    assert_eq!(out.report.summary_line(), "attempted=6 stored=6 duplicates=0 failed=0");
}

#[test]
fn empty_log_succeeds_with_nothing_attempted() {
    let rt = runtime();
    let (base, _state) = spawn_lrs(&rt);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.json");
    std::fs::write(&input, r#"{"version":1,"entries":[]}"#).unwrap();
    let out = rt
        .block_on(run_pipeline(&input, &creds(&base), &VerbRegistry::standard(), &RetryPolicy::immediate(1), None))
        .unwrap();
    assert_eq!(out.report.attempted, 0);
    assert!(out.report.failed.is_empty());
}

#[test]
fn unreadable_or_malformed_input_writes_no_report() {
    let rt = runtime();
    let (base, state) = spawn_lrs(&rt);
    let dir = tempfile::tempdir().unwrap();
    let reg = VerbRegistry::standard();
    let policy = RetryPolicy::immediate(1);

    let missing = dir.path().join("nope.json");
    let err = rt.block_on(run_pipeline(&missing, &creds(&base), &reg, &policy, None)).unwrap_err();
    assert!(matches!(err, PipelineError::Read { .. }));
    assert!(!default_report_path(&missing).exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"[{"user":"A","userid":1,"message":"ok","time":"2025-01-06T00:00:00Z","courseid":1,"sessionid":"s"},{"user":"B"}]"#).unwrap();
    let err = rt.block_on(run_pipeline(&bad, &creds(&base), &reg, &policy, None)).unwrap_err();
    assert!(err.to_string().contains("entry 1"), "{err}");
    assert!(!default_report_path(&bad).exists());
    assert!(state.lrs.is_empty());
}

#[test]
fn thousand_entries_conserve_and_repeat_as_duplicates() {
    let rt = runtime();
    let (base, state) = spawn_lrs(&rt);
    let stmts = demo_statements(1000, 4);
    let policy = RetryPolicy::immediate(3);
    let first = rt.block_on(upload_batch(&stmts, &creds(&base), &policy));
    assert_eq!((first.attempted, first.stored, first.duplicates), (2000, 2000, 0));
    let again = rt.block_on(upload_batch(&stmts, &creds(&base), &policy));
    assert_eq!((again.attempted, again.stored, again.duplicates), (2000, 0, 2000));
    assert_eq!(state.lrs.len(GranularityTier::Noise), 2000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn uploading_twice_stores_each_unique_id_once(
        entries in 0usize..20,
        seed in any::<u64>(),
        repeats in proptest::collection::vec(any::<prop::sample::Index>(), 0..10),
        in_flight in 1usize..6,
    ) {
        let rt = runtime();
        let (base, state) = spawn_lrs(&rt);
        let mut batch = demo_statements(entries, seed);
        if !batch.is_empty() {
            let extra: Vec<_> = repeats.iter().map(|i| batch[i.index(batch.len())].clone()).collect();
            batch.extend(extra);
        }
        let unique: BTreeSet<_> = batch.iter().map(|s| s.id).collect();
        let policy = RetryPolicy { max_in_flight: in_flight, ..RetryPolicy::immediate(3) };
        let first = rt.block_on(upload_batch(&batch, &creds(&base), &policy));
        let second = rt.block_on(upload_batch(&batch, &creds(&base), &policy));
        prop_assert_eq!(state.lrs.len(GranularityTier::Noise), unique.len());
        prop_assert_eq!(first.stored, unique.len());
        prop_assert_eq!(second.stored, 0);
        prop_assert_eq!(second.duplicates, first.stored + first.duplicates);
        prop_assert!(first.is_conserved() && second.is_conserved());
    }
}
