use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use vita_core::tutor::{
    render_prompt, Awaiting, CourseContext, DialogueSession, FailingClient, ScriptedMock, SocraticScript,
    SourceOfTruth, TemplateCatalog,
};
use vita_core::xapi::{Agent, VerbRegistry};

fn slot_value() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,.'-]{1,24}".prop_filter("non-blank", |s| !s.trim().is_empty())
}

fn ctx(objectives: Vec<String>, vocab: Vec<String>) -> CourseContext {
    CourseContext {
        course_id: "https://lms.vita.local/course/ds-ethics".into(),
        objectives,
        vocabulary: vocab,
        source_of_truth: vec![SourceOfTruth { pattern: "privacy".into(), answer: "Lesson 1, section 2.".into() }],
    }
}

fn session() -> DialogueSession {
    DialogueSession::new("s", Agent::account("Mo", "https://lms.vita.local", "mo"), "https://lms.vita.local/course/ds-ethics")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rendering_is_total(values in proptest::collection::vec(slot_value(), 4)) {
        let cat = TemplateCatalog::seed();
        for t in cat.iter() {
            let slots: BTreeMap<String, String> =
                t.slots().iter().zip(values.iter().cycle()).map(|(s, v)| (s.name.clone(), v.clone())).collect();
            let out = render_prompt(t, &slots, None).unwrap();
            prop_assert!(!out.contains('['), "{}", out);
            for v in slots.values() {
                prop_assert!(out.contains(v.as_str()));
            }
        }
    }

    #[test]
    fn context_keeps_instruction_as_suffix(
        topic in slot_value(),
        objectives in proptest::collection::vec("[a-z ]{1,20}", 0..4),
        vocab in proptest::collection::vec("[a-z]{1,10}", 0..4),
    ) {
        let cat = TemplateCatalog::seed();
        let t = cat.get("summarization").unwrap();
        let slots = BTreeMap::from([("Topic".to_string(), topic)]);
        let plain = render_prompt(t, &slots, None).unwrap();
        let c = ctx(objectives.clone(), vocab);
        let rich = render_prompt(t, &slots, Some(&c)).unwrap();
        prop_assert!(rich.len() > plain.len());
        let suffix = format!("Instruction:\n{}", plain);
        prop_assert!(rich.ends_with(&suffix));
        let instr = rich.rfind("Instruction:\n").unwrap();
        for o in &objectives {
            prop_assert!(rich[..instr].contains(o.as_str()));
        }
    }

    #[test]
    fn socratic_order_ignores_answer_content(answers in proptest::collection::vec("[\\PC]{1,40}", 5)) {
        let answers: Vec<String> = answers.into_iter().map(|a| if a.trim().is_empty() { format!("x{a}") } else { a }).collect();
        let reg = VerbRegistry::standard();
        let script = SocraticScript::consent();
        let mut s = session();
        let t0 = Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap();
        let first = s.start_socratic(script.clone(), t0).unwrap();
        let mut seen = vec![(first, s.socratic_state().unwrap())];
        for (i, a) in answers.iter().enumerate() {
            let out = s.advance_socratic(a, &reg, t0 + Duration::seconds(i as i64 + 1)).unwrap();
            prop_assert_eq!(out.emitted.len(), 2);
            seen.push((out.utterance, (out.step, out.awaiting)));
        }
        let expected = vec![
            (script.steps[0].question.clone(), (0, Awaiting::Answer)),
            (script.steps[0].follow_up.clone(), (0, Awaiting::FollowUpAnswer)),
            (script.steps[1].question.clone(), (1, Awaiting::Answer)),
            (script.steps[1].follow_up.clone(), (1, Awaiting::FollowUpAnswer)),
            (script.reflection.clone(), (1, Awaiting::Reflection)),
            (vita_core::tutor::CLOSING.to_string(), (1, Awaiting::Complete)),
        ];
        prop_assert_eq!(seen, expected);
        prop_assert!(s.transcript.windows(2).all(|w| w[0].at < w[1].at));
    }

    #[test]
    fn turns_emit_two_or_zero(msgs in proptest::collection::vec(("[a-z ?]{1,30}", any::<bool>()), 1..8)) {
        let reg = VerbRegistry::standard();
        let mut s = session();
        let ok = ScriptedMock::new();
        let bad = FailingClient("timeout".into());
        // same instant for every turn: the transcript must still stay strictly ordered
        let at = Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap();
        for (m, fail) in &msgs {
            let m = format!("q {m}");
            let res = if *fail { s.run_turn(&m, &bad, &reg, at) } else { s.run_turn(&m, &ok, &reg, at) };
            match res {
                Ok(out) => prop_assert_eq!(out.emitted.len(), 2),
                Err(_) => prop_assert!(*fail),
            }
        }
        prop_assert_eq!(s.transcript.len(), msgs.len() * 2);
        prop_assert!(s.transcript.windows(2).all(|w| w[0].at < w[1].at));
    }

    #[test]
    fn mock_is_pure(prompt in "\\PC{0,80}", temp in 0u32..10) {
        use vita_core::tutor::{LlmClient, LlmParams};
        let p = LlmParams { max_tokens: 256, temperature: temp as f32 / 10.0 };
        let m = ScriptedMock::new();
        prop_assert_eq!(m.send(&prompt, &p).unwrap(), m.send(&prompt, &p).unwrap());
    }
}
