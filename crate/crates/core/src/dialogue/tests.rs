use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::partition::{enumerate_partitions, fold_judgments, Judgment, Partition};
use crate::session::{create_session, Action, AiPrediction, ScentSequence, Session};
use Judgment::*;

fn doc(id: &str, modes: &[Mode], body: &str) -> KnowledgeDoc {
    KnowledgeDoc { doc_id: id.into(), mode_tags: modes.to_vec(), title: id.into(), body: body.into() }
}

fn pred(round: u8, class: usize) -> AiPrediction {
    let mut probs = [0.0; 5];
    probs[class] = 1.0;
    let mut votes = [0; 5];
    votes[class] = 3;
    AiPrediction { round, probs, votes, windows: 3, low_confidence: false }
}

#[test]
fn tokenizer_lowercases_alphanumeric_runs() {
    assert_eq!(tokenize("Agar-wood, TVOC_ppb 42!"), vec!["agar", "wood", "tvoc", "ppb", "42"]);
}

#[test]
fn unique_term_ranks_first_and_mode_filters() {
    let store = StaticStore::index([
        doc("a", &[Mode::Round], "smoke and resin"),
        doc("b", &[Mode::Round], "sandalwood calm warmth"),
        doc("c", &[Mode::Briefing], "sandalwood history"),
    ])
    .unwrap();
    let hits = store.retrieve("sandalwood", Mode::Round, 3);
    assert_eq!(hits[0].doc_id, "b");
    assert_eq!(hits.len(), 1);
    assert!(store.retrieve("history sandalwood", Mode::Debrief, 3).is_empty());
    assert_eq!(store.retrieve("history", Mode::Briefing, 3)[0].doc_id, "c");
}

#[test]
fn bm25_matches_hand_computation() {
    let store = StaticStore::index([
        doc("hi", &[Mode::Round], "cedar cedar cedar pine"),
        doc("lo", &[Mode::Round], "cedar pine pine pine"),
        doc("zz", &[Mode::Round], "rose rose rose rose"),
    ])
    .unwrap();
    let hits = store.retrieve("cedar", Mode::Round, 5);
    assert_eq!(hits.iter().map(|h| h.doc_id.as_str()).collect::<Vec<_>>(), ["hi", "lo"]);
    // N = 3, n = 2, |d| = avgdl = 5 (title token included)
    let idf = libm::log((3.0 - 2.0 + 0.5) / (2.0 + 0.5) + 1.0);
    let s = |f: f64| idf * f * 2.2 / (f + 1.2);
    assert!((hits[0].score - s(3.0)).abs() < 1e-12);
    assert!((hits[1].score - s(1.0)).abs() < 1e-12);
}

#[test]
fn index_rejects_bad_docs() {
    assert_eq!(StaticStore::index([doc("x", &[], "body")]).unwrap_err(), DialogueError::NoModeTags("x".into()));
    assert_eq!(StaticStore::index([doc("x", &[Mode::Round], "  ")]).unwrap_err(), DialogueError::EmptyBody("x".into()));
    assert_eq!(
        StaticStore::index([doc("x", &[Mode::Round], "a"), doc("x", &[Mode::Round], "b")]).unwrap_err(),
        DialogueError::DuplicateDoc("x".into())
    );
    assert!(StaticStore::index([]).unwrap().retrieve("anything", Mode::Round, 3).is_empty());
}

#[test]
fn ai_match_examples() {
    assert_eq!(ai_match_from_classes(&[3, 3], 2), Ok(MatchRound(1)));
    assert_eq!(ai_match_from_classes(&[3, 1], 2), Ok(New));
    assert_eq!(ai_match_from_classes(&[2, 0, 2, 0], 4), Ok(MatchRound(2)));
    let preds = [Some(pred(1, 3)), None, None, None, None];
    assert_eq!(ai_match_judgment(&preds, 2, None), Err(DialogueError::MissingPrediction(2)));
}

#[test]
fn margin_gate_turns_unsure_matches_new() {
    let mut unsure = pred(2, 1);
    unsure.probs = [0.0, 0.45, 0.40, 0.15, 0.0];
    let preds = [Some(pred(1, 1)), Some(unsure), None, None, None];
    assert_eq!(ai_match_judgment(&preds, 2, None), Ok(MatchRound(1)));
    assert_eq!(ai_match_judgment(&preds, 2, Some(0.1)), Ok(New));
}

#[test]
fn alignment_examples() {
    let p1 = Partition::singleton();
    assert_eq!(compute_alignment(New, New, &p1).unwrap().kind, AlignmentKind::Aligned);
    assert_eq!(compute_alignment(MatchRound(1), New, &p1).unwrap().kind, AlignmentKind::Divergent);
    let p3 = Partition::parse("010").unwrap();
    let a = compute_alignment(MatchRound(1), MatchRound(2), &p3).unwrap();
    assert_eq!(a.kind, AlignmentKind::PartiallyAligned);
    assert_eq!((a.human_group, a.ai_group), (0, 1));
    // rounds 1 and 3 share a group, so matching either is the same step
    assert_eq!(compute_alignment(MatchRound(1), MatchRound(3), &p3).unwrap().kind, AlignmentKind::Aligned);
    assert!(compute_alignment(MatchRound(4), New, &p3).is_err());
}

#[test]
fn alignment_is_symmetric() {
    for n in 1..=4 {
        for prefix in enumerate_partitions(n).unwrap() {
            let mut options = vec![New];
            options.extend((1..=n as u8).map(MatchRound));
            for &h in &options {
                for &a in &options {
                    let x = compute_alignment(h, a, &prefix).unwrap();
                    let y = compute_alignment(a, h, &prefix).unwrap();
                    assert_eq!(x.kind, y.kind);
                    assert_eq!((x.human_group, x.ai_group), (y.ai_group, y.human_group));
                }
            }
        }
    }
}

#[test]
fn ai_judgments_fold_to_argmax_partition() {
    for code in 0..5usize.pow(5) {
        let mut c = code;
        let classes: Vec<usize> = (0..5)
            .map(|_| {
                let v = c % 5;
                c /= 5;
                v
            })
            .collect();
        let js: Vec<Judgment> = (2..=5).map(|r| ai_match_from_classes(&classes, r).unwrap()).collect();
        assert_eq!(fold_judgments(&js).unwrap(), Partition::from_labels(&classes).unwrap());
    }
}

fn completed(store: &mut DynamicStore, id: &str, seq: &str, rgs: &str) {
    store
        .apply(DynamicEntry::Completed {
            session_id: id.into(),
            sequence_id: seq.into(),
            partition: Partition::parse(rgs).unwrap(),
        })
        .unwrap();
}

#[test]
fn aggregate_examples() {
    let mut store = DynamicStore::new();
    assert_eq!(aggregate_stats(&store, "S1"), Aggregates::empty());
    completed(&mut store, "a", "S1", "00123");
    completed(&mut store, "b", "S1", "00123");
    assert_eq!(aggregate_stats(&store, "S1").fraction(1, 2), Some(1.0));
    completed(&mut store, "c", "S1", "00123");
    completed(&mut store, "d", "S1", "01234");
    completed(&mut store, "e", "S2", "00000");
    let agg = aggregate_stats(&store, "S1");
    assert_eq!(agg.count, 4);
    assert_eq!(agg.fraction(1, 2), Some(0.75));
    assert_eq!(agg.fraction(2, 1), Some(0.75));
    assert_eq!(agg.fraction(3, 4), Some(0.0));
}

#[test]
fn pair_indices_cover_ten_pairs() {
    let mut seen = Vec::new();
    for i in 1..=5 {
        for j in i + 1..=5 {
            seen.push(pair_index(i, j).unwrap());
        }
    }
    assert_eq!(seen, (0..10).collect::<Vec<_>>());
    assert_eq!(pair_index(2, 2), None);
    assert_eq!(pair_index(0, 1), None);
}

#[test]
fn round_one_records_carry_no_judgment() {
    let mut r = DynamicRecord::new("s", 1);
    r.human = Some(New);
    assert!(DynamicStore::new().apply(DynamicEntry::Round { record: r }).is_err());
    let mut r = DynamicRecord::new("s", 3);
    r.human = Some(MatchRound(2));
    r.ai = Some(New);
    let mut store = DynamicStore::new();
    store.apply(DynamicEntry::Round { record: r.clone() }).unwrap();
    assert_eq!(store.session("s").unwrap().rounds[&3], r);
}

fn registry() -> BTreeMap<String, ScentSequence> {
    let mut r = BTreeMap::new();
    r.insert("T".to_string(), ScentSequence::new("S1", [3, 3, 1, 3, 1]).unwrap());
    r
}

fn persona() -> Persona {
    Persona {
        name: "Kaori".into(),
        preamble: "You are a calm companion who smells alongside the player.".into(),
        class_names: ["aloeswood", "sandalwood", "clove", "cinnamon", "camphor"].map(String::from).to_vec(),
    }
}

fn store() -> StaticStore {
    StaticStore::index([
        doc("brief-1", &[Mode::Briefing], "The game asks you to listen to five scents."),
        doc("round-1", &[Mode::Round], "When tvoc is rising the scent is opening."),
        doc("round-2", &[Mode::Round], "Agreement and divergence are both worth noticing."),
        doc("debrief-1", &[Mode::Debrief], "Each pattern has a name from the tale."),
    ])
    .unwrap()
}

/// Plays to `RoundDialogue(2)` with predictions `[3, 3]` and a player
/// judgment of new.
fn at_round_two() -> Session {
    let mut s = create_session("g", "T", &registry(), 0).unwrap();
    s.apply(Action::StartCalibration, 1).unwrap();
    for _ in 1..5 {
        s.apply(Action::NextCalibration { baseline_recording: None }, 1).unwrap();
    }
    s.apply(Action::FinishCalibration { baseline_recording: None }, 1).unwrap();
    s.apply(Action::RecordPrediction { prediction: pred(1, 3) }, 2).unwrap();
    s.apply(Action::DoneSmelling, 2).unwrap();
    s.apply(Action::FinishDialogue, 2).unwrap();
    s.confirm_judgment(3).unwrap();
    s.apply(Action::RecordPrediction { prediction: pred(2, 3) }, 4).unwrap();
    s.apply(Action::DoneSmelling, 4).unwrap();
    s.propose_judgment(New, 5).unwrap();
    s
}

#[test]
fn round_prompt_carries_alignment_and_facts() {
    let s = at_round_two();
    let slopes = [0.0, 0.02, -0.5, 1.0, 0.0, 0.0, 0.0, 0.0, -0.009];
    let bundle = assemble_prompt(
        Mode::Round,
        &s,
        Some(&slopes),
        &store(),
        &Aggregates::empty(),
        &persona(),
        &PromptConfig::default(),
    )
    .unwrap();
    let al = bundle.facts.alignment.unwrap();
    assert_eq!(al.kind, AlignmentKind::Divergent);
    assert_eq!(bundle.facts.ai, Some(MatchRound(1)));
    let text = bundle.render();
    assert!(text.contains("vote distribution: 0.00 0.00 0.00 1.00 0.00"));
    assert!(text.contains("tvoc_ppb rising"));
    assert!(text.contains("pressure_hpa falling"));
    assert!(text.contains("co_raw flat"));
    assert_eq!(bundle.snippets[0].doc_id, "round-1");
    assert!(bundle.snippets.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(bundle.snippets.iter().all(|s| s.doc_id.starts_with("round")));
    assert!(assemble_prompt(
        Mode::Debrief,
        &s,
        None,
        &store(),
        &Aggregates::empty(),
        &persona(),
        &PromptConfig::default()
    )
    .is_err());
}

#[test]
fn aggregates_respect_privacy_floor() {
    let s = at_round_two();
    let mut dyn_store = DynamicStore::new();
    completed(&mut dyn_store, "a", "S1", "00101");
    completed(&mut dyn_store, "b", "S1", "00101");
    let two = aggregate_stats(&dyn_store, "S1");
    let cfg = PromptConfig::default();
    let b = assemble_prompt(Mode::Round, &s, None, &store(), &two, &persona(), &cfg).unwrap();
    assert!(b.facts.aggregates.is_none());
    completed(&mut dyn_store, "c", "S1", "01234");
    let three = aggregate_stats(&dyn_store, "S1");
    let b = assemble_prompt(Mode::Round, &s, None, &store(), &three, &persona(), &cfg).unwrap();
    assert_eq!(b.facts.aggregates.as_ref().unwrap().count, 3);
    assert!(b.render().contains("1-2 0.67"));
}

#[test]
fn budget_drops_snippets_first() {
    let s = at_round_two();
    let full =
        assemble_prompt(Mode::Round, &s, None, &store(), &Aggregates::empty(), &persona(), &PromptConfig::default())
            .unwrap();
    let snippet_line =
        alloc::format!("- {}: {}\n", full.snippets.last().unwrap().title, full.snippets.last().unwrap().text);
    let budget = full.rendered_len() - 1;
    let cfg = PromptConfig { budget, ..PromptConfig::default() };
    let b = assemble_prompt(Mode::Round, &s, None, &store(), &Aggregates::empty(), &persona(), &cfg).unwrap();
    assert_eq!(b.snippets.len(), full.snippets.len() - 1);
    assert!(b.rendered_len() <= budget);
    assert!(b.rendered_len() <= full.rendered_len() - snippet_line.chars().count());
    let tiny = PromptConfig { budget: 10, ..PromptConfig::default() };
    assert_eq!(
        assemble_prompt(Mode::Round, &s, None, &store(), &Aggregates::empty(), &persona(), &tiny).unwrap_err(),
        DialogueError::BudgetTooSmall { budget: 10 }
    );
}

#[test]
fn stub_round_and_debrief_templates() {
    let mut s = at_round_two();
    s.revise_judgment(MatchRound(1), 6).unwrap();
    let cfg = PromptConfig::default();
    let bundle = assemble_prompt(Mode::Round, &s, None, &store(), &Aggregates::empty(), &persona(), &cfg).unwrap();
    assert_eq!(bundle.facts.alignment.unwrap().kind, AlignmentKind::Aligned);
    let text = StubGenerator.render(&bundle);
    assert!(text.contains("we agree"));
    assert!(text.contains("Round 2"));
    assert_eq!(text, StubGenerator.render(&bundle));

    let mut dyn_store = DynamicStore::new();
    let u = generate(&StubGenerator, &bundle, "g", &mut dyn_store).unwrap();
    assert_eq!(u.round, Some(2));
    assert_eq!(dyn_store.session("g").unwrap().rounds[&2].utterances, vec![text.clone()]);

    // finish the game
    s.apply(Action::FinishDialogue, 7).unwrap();
    s.confirm_judgment(8).unwrap();
    for (r, (class, j)) in [(3u8, (1usize, New)), (4, (3, MatchRound(1))), (5, (1, MatchRound(3)))] {
        s.apply(Action::RecordPrediction { prediction: pred(r, class) }, 9).unwrap();
        s.apply(Action::DoneSmelling, 9).unwrap();
        s.propose_judgment(j, 9).unwrap();
        s.apply(Action::FinishDialogue, 9).unwrap();
        s.confirm_judgment(9).unwrap();
    }
    let report = s.reveal(10).unwrap();
    assert!(report.score.exact);
    let bundle = assemble_prompt(Mode::Debrief, &s, None, &store(), &Aggregates::empty(), &persona(), &cfg).unwrap();
    assert_eq!(bundle.facts.rounds.len(), 5);
    assert_eq!(bundle.facts.score, Some(report.score));
    let text = StubGenerator.render(&bundle);
    for (r, name) in [(1, "cinnamon"), (2, "cinnamon"), (3, "sandalwood"), (4, "cinnamon"), (5, "sandalwood")] {
        assert!(text.contains(&alloc::format!("Round {r}: I voted {name}.")), "{text}");
    }
    assert!(text.contains("10 of 10 pairs"));
}

#[test]
fn trend_threshold() {
    assert_eq!(TrendWord::from_slope(0.0099), TrendWord::Flat);
    assert_eq!(TrendWord::from_slope(-0.0099), TrendWord::Flat);
    assert_eq!(TrendWord::from_slope(0.01), TrendWord::Rising);
    assert_eq!(TrendWord::from_slope(-0.01), TrendWord::Falling);
}

#[test]
fn modes_parse_and_map_phases() {
    use crate::session::SessionPhase as P;
    for m in Mode::ALL {
        assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
    }
    assert!("lunch".parse::<Mode>().is_err());
    assert_eq!(Mode::for_phase(P::RoundDialogue(3)), Some(Mode::Round));
    assert_eq!(Mode::for_phase(P::RoundSmelling(3)), None);
}

proptest! {
    #[test]
    fn retrieval_ignores_insertion_order(
        bodies in proptest::collection::vec(proptest::collection::vec(0usize..6, 1..8), 1..8),
        query in proptest::collection::vec(0usize..6, 1..4),
        seed in any::<u64>(),
    ) {
        const WORDS: [&str; 6] = ["cedar", "pine", "rose", "smoke", "resin", "musk"];
        let docs: Vec<KnowledgeDoc> = bodies
            .iter()
            .enumerate()
            .map(|(i, ws)| {
                let body: Vec<&str> = ws.iter().map(|&w| WORDS[w]).collect();
                doc(&alloc::format!("d{i}"), &[Mode::Round], &body.join(" "))
            })
            .collect();
        let mut shuffled = docs.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let q: Vec<&str> = query.iter().map(|&w| WORDS[w]).collect();
        let q = q.join(" ");
        let a = StaticStore::index(docs).unwrap().retrieve(&q, Mode::Round, 10);
        let b = StaticStore::index(shuffled).unwrap().retrieve(&q, Mode::Round, 10);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn adding_a_session_moves_fractions_little(
        ids in proptest::collection::vec(0usize..52, 1..12),
        extra in 0usize..52,
    ) {
        let all = enumerate_partitions(5).unwrap();
        let before: Vec<&Partition> = ids.iter().map(|&i| &all[i]).collect();
        let a = aggregate_partitions(before.iter().copied());
        let mut after = before.clone();
        after.push(&all[extra]);
        let b = aggregate_partitions(after.iter().copied());
        let fa = a.fractions.unwrap();
        let fb = b.fractions.unwrap();
        for k in 0..PAIRS {
            prop_assert!((0.0..=1.0).contains(&fa[k]));
            prop_assert!((fa[k] - fb[k]).abs() <= 1.0 / (a.count as f64 + 1.0) + 1e-12);
        }
    }
}
