use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use vita_core::adaptive::{
    adapt_quiz_difficulty, next_content, route, score_assessment, Catalog, CompetencyThresholds, ContentNode,
    ContentRole, EngineError, LearnerState, LearningPath, PathDecision, Principal,
};
use vita_core::xapi::Agent;

fn thresholds() -> impl Strategy<Value = CompetencyThresholds> {
    (1u32..100, 1u32..100)
        .prop_filter("distinct", |(a, b)| a != b)
        .prop_map(|(a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            CompetencyThresholds::new(hi as f64 / 100.0, lo as f64 / 100.0).unwrap()
        })
}

fn band(score: f64, t: &CompetencyThresholds) -> LearningPath {
    if score < t.reinforcement_min {
        LearningPath::Remediation
    } else if score < t.progression_min {
        LearningPath::Reinforcement
    } else {
        LearningPath::Progression
    }
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 2, 3, 9, 0, 0).unwrap()
}

fn learner() -> Agent {
    Agent::account("Kim", "https://lms.vita.local", "kim")
}

/// Random DAG: node i may only depend on nodes with a smaller index.
fn catalog() -> impl Strategy<Value = Vec<ContentNode>> {
    proptest::collection::vec((0u8..3, 1u8..=5, 0usize..4, proptest::collection::vec(any::<prop::sample::Index>(), 0..3)), 2..14)
        .prop_map(|specs| {
            specs
                .iter()
                .enumerate()
                .map(|(i, (role, diff, topic, pre))| {
                    let prerequisites: BTreeSet<String> =
                        if i == 0 { BTreeSet::new() } else { pre.iter().map(|ix| format!("n{:02}", ix.index(i))).collect() };
                    ContentNode {
                        id: format!("n{i:02}"),
                        title: format!("Node {i}"),
                        topic: format!("t{topic}"),
                        difficulty: *diff,
                        role: [ContentRole::Advance, ContentRole::Practice, ContentRole::Review][*role as usize],
                        prerequisites: prerequisites.into_iter().collect(),
                    }
                })
                .collect()
        })
}

/// Straight from the selection rules, with none of the engine's helpers.
fn expected_next(nodes: &[ContentNode], current: &str, mastered: &BTreeSet<String>, path: LearningPath) -> Option<String> {
    let by_id: BTreeMap<&str, &ContentNode> = nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let cur = by_id[current];
    let best = |c: Vec<&ContentNode>| c.into_iter().min_by_key(|n| (n.difficulty, n.id.clone())).map(|n| n.id.clone());
    match path {
        LearningPath::Progression => best(
            nodes
                .iter()
                .filter(|n| n.role == ContentRole::Advance && n.id != current && !mastered.contains(&n.id))
                .filter(|n| n.prerequisites.iter().all(|p| p == current || mastered.contains(p)))
                .collect(),
        ),
        LearningPath::Reinforcement => {
            best(nodes.iter().filter(|n| n.role == ContentRole::Practice && n.topic == cur.topic).collect())
        }
        LearningPath::Remediation => {
            // level = longest prerequisite chain; closure by repeated expansion
            fn level(id: &str, by_id: &BTreeMap<&str, &ContentNode>) -> usize {
                by_id[id].prerequisites.iter().map(|p| level(p, by_id) + 1).max().unwrap_or(0)
            }
            let mut closure: BTreeSet<String> = BTreeSet::new();
            let mut frontier: Vec<String> = cur.prerequisites.clone();
            while let Some(p) = frontier.pop() {
                if closure.insert(p.clone()) {
                    frontier.extend(by_id[p.as_str()].prerequisites.iter().cloned());
                }
            }
            let gap = closure
                .iter()
                .filter(|p| !mastered.contains(*p))
                .min_by_key(|p| (level(p, &by_id), (*p).clone()))
                .map(|p| by_id[p.as_str()])
                .unwrap_or(cur);
            best(nodes.iter().filter(|n| n.role == ContentRole::Review && n.topic == gap.topic).collect())
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Assess(u32),
    Override(LearningPath),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    let path = prop_oneof![
        Just(LearningPath::Remediation),
        Just(LearningPath::Reinforcement),
        Just(LearningPath::Progression)
    ];
    proptest::collection::vec(prop_oneof![(0u32..=100).prop_map(Op::Assess), path.prop_map(Op::Override)], 1..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn route_is_the_band_definition(t in thresholds(), s in 0u32..=1000) {
        let score = s as f64 / 1000.0;
        prop_assert_eq!(route(score, &t), band(score, &t));
        prop_assert_eq!(route(t.progression_min, &t), LearningPath::Progression);
        prop_assert_eq!(route(t.reinforcement_min, &t), LearningPath::Reinforcement);
    }

    #[test]
    fn route_is_monotone(t in thresholds(), a in 0u32..=1000, b in 0u32..=1000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(route(lo as f64 / 1000.0, &t) <= route(hi as f64 / 1000.0, &t));
    }

    #[test]
    fn scoring_is_fraction_correct(answers in proptest::collection::vec((0u8..4, 0u8..4), 1..30)) {
        let key: BTreeMap<String, String> =
            answers.iter().enumerate().map(|(i, (k, _))| (format!("q{i}"), ["a", "b", "c", "d"][*k as usize].into())).collect();
        let responses: Vec<(String, String)> =
            answers.iter().enumerate().map(|(i, (_, r))| (format!("q{i}"), ["a", "b", "c", "d"][*r as usize].into())).collect();
        let correct = answers.iter().filter(|(k, r)| k == r).count();
        prop_assert_eq!(score_assessment(&responses, &key).unwrap(), correct as f64 / answers.len() as f64);
    }

    #[test]
    fn difficulty_stays_in_range(scores in proptest::collection::vec(0u32..=100, 0..10), cur in 1u8..=5) {
        let h: Vec<f64> = scores.iter().map(|s| *s as f64 / 100.0).collect();
        let next = adapt_quiz_difficulty(&h, cur);
        prop_assert!((1..=5).contains(&next));
        prop_assert!((next as i16 - cur as i16).abs() <= 1);
    }

    #[test]
    fn next_content_matches_selection_rules(
        nodes in catalog(),
        cur in any::<prop::sample::Index>(),
        passed in proptest::collection::vec(any::<prop::sample::Index>(), 0..6),
        p in 0u8..3,
    ) {
        let cat = Catalog::new(nodes.clone()).unwrap();
        let th = CompetencyThresholds::default();
        let mut st = LearnerState::new(learner(), "n00");
        let mut mastered = BTreeSet::new();
        for (i, ix) in passed.iter().enumerate() {
            let id = nodes[ix.index(nodes.len())].id.clone();
            st.record_assessment("quiz", &id, 0.95, &th, t0() + Duration::minutes(i as i64)).unwrap();
            mastered.insert(id);
        }
        let current = nodes[cur.index(nodes.len())].id.clone();
        st.advance_to(&cat, &current).unwrap();
        let path = [LearningPath::Remediation, LearningPath::Reinforcement, LearningPath::Progression][p as usize];
        let decision = PathDecision::override_to(path, "prof", 0.5, t0() + Duration::hours(1));
        let got = next_content(&st, &cat, &decision).map(|n| n.id.clone());
        match expected_next(&nodes, &current, &mastered, path) {
            Some(id) => prop_assert_eq!(got, Ok(id)),
            None => prop_assert_eq!(got, Err(EngineError::PathExhausted(path))),
        }
    }

    #[test]
    fn override_holds_until_next_assessment(t in thresholds(), script in ops()) {
        let mut st = LearnerState::new(learner(), "a1-foundations");
        let prof = Principal::Instructor("prof".into());
        for (i, op) in script.iter().enumerate() {
            let at = t0() + Duration::minutes(i as i64);
            let expected = match op {
                Op::Assess(s) => {
                    let score = *s as f64 / 100.0;
                    st.record_assessment("quiz", "a1-foundations", score, &t, at).unwrap();
                    band(score, &t)
                }
                Op::Override(path) => {
                    st.apply_override(PathDecision::override_to(*path, "prof", 0.0, at), &prof).unwrap();
                    *path
                }
            };
            prop_assert_eq!(st.effective_decision().map(|d| d.path), Some(expected));
        }
        prop_assert_eq!(st.history.len(), script.len());
        prop_assert!(st.history.windows(2).all(|w| w[0].decision.decided_at <= w[1].decision.decided_at));
    }
}

#[test]
fn boundary_grid_has_no_mismatches() {
    for (p, r) in [(0.8, 0.6), (0.9, 0.5), (0.75, 0.74), (1.0, 0.0), (0.55, 0.35)] {
        let t = CompetencyThresholds::new(p, r).unwrap();
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            assert_eq!(route(s, &t), band(s, &t), "score {s} thresholds {p}/{r}");
        }
    }
}
