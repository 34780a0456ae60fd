//! End-to-end acceptance suite. Each test prints one PASS line with the
//! numbers behind the verdict so a full run doubles as a report.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use sqlward_core::corpus::{build_corpus, generate_valid, random_schema};
use sqlward_core::experiment::{build_ensemble, run_experiment, ExperimentConfig};
use sqlward_core::fixtures::{car_1, dog_kennels, pets};
use sqlward_core::lexer::lex_full;
use sqlward_core::parser::{parse_feed, parse_finalize, parse_full, ParseState};
use sqlward_core::server::Server;
use sqlward_core::{
    beam_search, check_full, feed_token, Checkpoint, FeedOutcome, LexOutcome, Mode, ParseOutcome,
    ParseReason, ScriptedModel, SearchParams, SqlSchema, Timing, Vocabulary,
};

fn guards_params(beam: usize, k: usize, max_length: usize) -> SearchParams {
    SearchParams {
        mode: Mode::ParsingWithGuards,
        beam_size: beam,
        k,
        max_length,
        timing: Timing::Incremental,
        use_cache: true,
    }
}

/// 1. Soundness: every hypothesis returned under guards+incremental passes
/// the full-string oracle. Zero tolerance, >=1000 seeded runs.
#[test]
fn criterion_1_soundness() {
    let started = Instant::now();
    let instances = build_ensemble(0x50de, 1000);
    let mut runs = 0usize;
    let mut hypotheses = 0usize;
    for inst in &instances {
        let finished = beam_search(
            &inst.model,
            &inst.schema,
            &inst.vocab,
            &guards_params(2, 4, 24),
        )
        .expect("search must not error");
        runs += 1;
        for hyp in &finished {
            hypotheses += 1;
            assert!(
                check_full(&inst.schema, Mode::ParsingWithGuards, &hyp.text),
                "unsound hypothesis {:?}",
                hyp.text
            );
        }
    }
    assert!(runs >= 1000);
    println!(
        "PASS criterion 1: {} runs, {} hypotheses, 0 oracle rejections, {:.1}s",
        runs,
        hypotheses,
        started.elapsed().as_secs_f64()
    );
}

/// 2. Off mode produces invalid output at a strictly positive rate on the
/// same ensemble; guards drive the invalid rate to exactly zero, trading it
/// for a reported unusable rate.
#[test]
fn criterion_2_invalid_vs_unusable() {
    let instances = build_ensemble(0xbead, 300);
    let mut off_invalid = 0usize;
    let mut guards_invalid = 0usize;
    let mut guards_unusable = 0usize;
    for inst in &instances {
        let off = beam_search(
            &inst.model,
            &inst.schema,
            &inst.vocab,
            &SearchParams {
                mode: Mode::Off,
                ..guards_params(2, 4, 24)
            },
        )
        .unwrap();
        match off.first() {
            Some(best) if check_full(&inst.schema, Mode::ParsingWithGuards, &best.text) => {}
            _ => off_invalid += 1,
        }
        let guarded = beam_search(
            &inst.model,
            &inst.schema,
            &inst.vocab,
            &guards_params(2, 4, 24),
        )
        .unwrap();
        match guarded.first() {
            None => guards_unusable += 1,
            Some(best) => {
                if !check_full(&inst.schema, Mode::ParsingWithGuards, &best.text) {
                    guards_invalid += 1;
                }
            }
        }
    }
    let n = instances.len() as f64;
    assert!(off_invalid > 0, "Off mode should emit invalid output");
    assert_eq!(guards_invalid, 0, "guards must never emit invalid output");
    println!(
        "PASS criterion 2: off invalid {:.1}%, guards invalid 0%, guards unusable {:.1}%",
        100.0 * off_invalid as f64 / n,
        100.0 * guards_unusable as f64 / n
    );
}

/// 3. Reference goldens: exact pass/fail, no tolerance.
#[test]
fn criterion_3_reference_goldens() {
    // (a) cell_phone is not a name in the dog_kennels fragment
    let text = "select cell_phone from professionals";
    let out = lex_full(&dog_kennels(), text);
    match out {
        LexOutcome::Reject { offset, .. } => {
            assert_eq!(offset, text.find("cell_phone").unwrap());
        }
        LexOutcome::Accept(_) => panic!("cell_phone must fail lexing"),
    }

    // (b) maker/model needs the bare-column guards to be rejected
    let text = "select maker, model from car_makers";
    assert!(parse_full(&car_1(), text, false).is_complete());
    let from_end = text.len();
    match parse_full(&car_1(), text, true) {
        ParseOutcome::Reject { reason, offset } => {
            assert_eq!(reason, ParseReason::GuardViolation);
            assert!(offset <= from_end, "offset {offset} past from clause");
        }
        other => panic!("guards must reject, got {other:?}"),
    }

    // (c) duplicate alias rejected; rebinding in a nested scope accepted
    let dup = "select t1.name from people as t1 join pet as t1 on t1.id = t1.id";
    match parse_full(&pets(), dup, true) {
        ParseOutcome::Reject { reason, .. } => {
            assert_eq!(reason, ParseReason::DuplicateAlias)
        }
        other => panic!("duplicate alias must reject, got {other:?}"),
    }
    let shadow = "select t1.name from people as t1 \
                  where t1.id in ( select t1.id from pet as t1 )";
    assert!(
        parse_full(&pets(), shadow, true).is_complete(),
        "nested rebinding of t1 must be accepted"
    );
    println!("PASS criterion 3: cell_phone, maker/model, duplicate alias, shadowing");
}

/// 4. Mode monotonicity: accept(guards) subset of accept(no-guards) subset of
/// accept(lexing), over valid, mutated, and random strings.
#[test]
fn criterion_4_mode_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut strings = Vec::new();
    while strings.len() < 9000 {
        let schema = random_schema(&mut rng, 5);
        let items = build_corpus(&schema, &mut rng, 12);
        strings.extend(items.into_iter().map(|item| (schema.clone(), item.text)));
    }
    let junk_schema = random_schema(&mut rng, 3);
    let alphabet: Vec<char> = "select from where abc,.()*>=1 '".chars().collect();
    for _ in 0..1500 {
        let len = rng.gen_range(1..40);
        let text: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        strings.push((junk_schema.clone(), text));
    }
    assert!(strings.len() >= 10_000);
    for (schema, text) in &strings {
        let lex = check_full(schema, Mode::Lexing, text);
        let parse = check_full(schema, Mode::ParsingNoGuards, text);
        let guards = check_full(schema, Mode::ParsingWithGuards, text);
        assert!(!guards || parse, "guards-accept must parse-accept: {text:?}");
        assert!(!parse || lex, "parse-accept must lex-accept: {text:?}");
    }
    println!(
        "PASS criterion 4: {} strings, zero monotonicity violations",
        strings.len()
    );
}

fn chunked_verdict(
    schema: &SqlSchema,
    text: &str,
    rng: &mut impl Rng,
) -> Result<(), (ParseReason, usize)> {
    let mut state = ParseState::new(true);
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    while pos < chars.len() {
        let take = rng.gen_range(1..=5.min(chars.len() - pos));
        let chunk: String = chars[pos..pos + take].iter().collect();
        pos += take;
        match parse_feed(&state, schema, &chunk) {
            ParseOutcome::Accept(next) => state = next,
            ParseOutcome::Reject { reason, offset } => return Err((reason, offset)),
            ParseOutcome::Complete(_) => unreachable!(),
        }
    }
    match parse_finalize(&state, schema) {
        ParseOutcome::Complete(_) => Ok(()),
        ParseOutcome::Reject { reason, offset } => Err((reason, offset)),
        ParseOutcome::Accept(_) => unreachable!(),
    }
}

/// 5. Chunking independence: every random chunking agrees with the one-shot
/// oracle, for valid and invalid queries alike.
#[test]
fn criterion_5_incremental_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut valid = 0usize;
    let mut invalid = 0usize;
    let mut pool = Vec::new();
    while valid < 500 || invalid < 500 {
        let schema = random_schema(&mut rng, 5);
        for item in build_corpus(&schema, &mut rng, 8) {
            let ok = parse_full(&schema, &item.text, true).is_complete();
            if ok && valid < 500 {
                valid += 1;
                pool.push((schema.clone(), item.text));
            } else if !ok && invalid < 500 {
                invalid += 1;
                pool.push((schema.clone(), item.text));
            }
        }
    }
    for (schema, text) in &pool {
        let oracle = match parse_full(schema, text, true) {
            ParseOutcome::Complete(_) => Ok(()),
            ParseOutcome::Reject { reason, offset } => Err((reason, offset)),
            ParseOutcome::Accept(_) => unreachable!(),
        };
        for _ in 0..5 {
            let chunked = chunked_verdict(schema, text, &mut rng);
            assert_eq!(chunked, oracle, "chunking divergence on {text:?}");
        }
    }
    println!(
        "PASS criterion 5: {} valid + {} invalid queries x 5 chunkings each",
        valid, invalid
    );
}

/// Exhaustive enumeration of valid token sequences with their scores, plus
/// the widest admissible-prefix frontier seen at any depth.
fn enumerate_valid(
    model: &ScriptedModel,
    schema: &SqlSchema,
    vocab: &Vocabulary,
    max_length: usize,
) -> (Vec<(Vec<u32>, f64)>, usize) {
    use sqlward_core::scoring::ScoringModel;
    let mut valid = Vec::new();
    let mut depth_counts = vec![0usize; max_length + 1];
    let mut stack = vec![(Vec::<u32>::new(), 0.0f64, Checkpoint::new(Mode::ParsingWithGuards))];
    while let Some((prefix, score, checkpoint)) = stack.pop() {
        depth_counts[prefix.len()] += 1;
        if prefix.len() >= max_length {
            continue;
        }
        let row = model.next_scores(&prefix);
        for token in 0..vocab.len() as u32 {
            match feed_token(&checkpoint, schema, vocab, token).unwrap() {
                FeedOutcome::Accepted(next) => {
                    let mut seq = prefix.clone();
                    seq.push(token);
                    stack.push((seq, score + row[token as usize], next));
                }
                FeedOutcome::Finished => {
                    let mut seq = prefix.clone();
                    seq.push(token);
                    valid.push((seq, score + row[token as usize]));
                }
                FeedOutcome::Rejected { .. } => {}
            }
        }
    }
    (valid, depth_counts.into_iter().max().unwrap_or(0))
}

/// 6. Beam search equals brute force on micro-instances once the beam is wide
/// enough to hold every admissible prefix.
#[test]
fn criterion_6_brute_force_beam_equivalence() {
    let schema = SqlSchema::build("micro", &[("t", &["a", "b"])]).unwrap();
    let pool = [
        "\u{2581}a", "\u{2581}b", "\u{2581}from", "\u{2581}t", ",", "\u{2581}where",
        "\u{2581}1", "\u{2581}>",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut checked = 0usize;
    let mut seed = 0u64;
    while checked < 50 {
        seed += 1;
        let mut picks: Vec<&str> = pool.to_vec();
        picks.shuffle(&mut rng);
        let mut pieces = vec!["", "\u{2581}select"];
        pieces.extend(picks.into_iter().take(4));
        let vocab = Vocabulary::from_pieces(&pieces, 0).unwrap();
        let model = ScriptedModel::new(pieces.len(), seed);
        let (mut valid, frontier) = enumerate_valid(&model, &schema, &vocab, 8);
        if valid.is_empty() {
            continue;
        }
        valid.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        // each live prefix contributes at most one eos candidate on top of
        // its admissible extensions, so twice the widest frontier is enough
        // for the beam to hold every candidate
        let beam = (2 * frontier).max(valid.len()).max(2);
        let finished = beam_search(&model, &schema, &vocab, &guards_params(beam, pieces.len(), 8))
            .unwrap();
        let best = finished.first().expect("beam must find the valid sequences");
        assert!(
            (best.log_score - valid[0].1).abs() < 1e-9,
            "score mismatch: beam {} vs oracle {}",
            best.log_score,
            valid[0].1
        );
        assert_eq!(best.token_ids, valid[0].0, "sequence mismatch at seed {seed}");
        checked += 1;
    }
    println!("PASS criterion 6: {checked} micro-instances, beam == brute force");
}

/// 7. Ablation shape: valid rate is monotone in mode at every beam size, and
/// incremental beats finalize-only for guards at beams 2 and 4.
#[test]
fn criterion_7_ablation_shape() {
    let config = ExperimentConfig::default();
    let report = run_experiment(&config);
    let mean_valid = |mode: Mode, beam: usize, timing: Timing| -> f64 {
        let rows: Vec<f64> = config
            .ks
            .iter()
            .map(|&k| report.row(mode, beam, k, timing).unwrap().valid_rate)
            .collect();
        rows.iter().sum::<f64>() / rows.len() as f64
    };
    for &beam in &config.beams {
        let chain = [
            Mode::Off,
            Mode::Lexing,
            Mode::ParsingNoGuards,
            Mode::ParsingWithGuards,
        ]
        .map(|m| mean_valid(m, beam, Timing::Incremental));
        for pair in chain.windows(2) {
            assert!(
                pair[0] <= pair[1] + 1e-12,
                "mode ordering broken at beam {beam}: {chain:?}"
            );
        }
    }
    for beam in [2, 4] {
        let inc = mean_valid(Mode::ParsingWithGuards, beam, Timing::Incremental);
        let fin = mean_valid(Mode::ParsingWithGuards, beam, Timing::FinalizeOnly);
        assert!(
            inc >= fin,
            "incremental ({inc}) must beat finalize-only ({fin}) at beam {beam}"
        );
    }
    println!("PASS criterion 7: mode chain monotone at all beams; incremental >= finalize-only");
}

/// 8. Throughput: mean feed_token latency under 1 ms over the valid corpus.
#[test]
fn criterion_8_throughput() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut total = std::time::Duration::ZERO;
    let mut feeds = 0usize;
    for _ in 0..100 {
        let schema = random_schema(&mut rng, 5);
        let text = generate_valid(&schema, &mut rng);
        let mut pieces: Vec<String> = vec![String::new()];
        for word in text.split_whitespace() {
            let piece = format!("\u{2581}{word}");
            if !pieces.contains(&piece) {
                pieces.push(piece);
            }
        }
        let vocab = Vocabulary::from_pieces(&pieces, 0).unwrap();
        let mut checkpoint = Checkpoint::new(Mode::ParsingWithGuards);
        for word in text.split_whitespace() {
            let piece = format!("\u{2581}{word}");
            let id = (1..pieces.len() as u32)
                .find(|&i| vocab.piece(i) == Some(piece.as_str()))
                .unwrap();
            let begun = Instant::now();
            let outcome = feed_token(&checkpoint, &schema, &vocab, id).unwrap();
            total += begun.elapsed();
            feeds += 1;
            match outcome {
                FeedOutcome::Accepted(next) => checkpoint = next,
                other => panic!("valid corpus feed rejected: {other:?} in {text:?}"),
            }
        }
        let begun = Instant::now();
        let outcome = feed_token(&checkpoint, &schema, &vocab, 0).unwrap();
        total += begun.elapsed();
        feeds += 1;
        assert!(matches!(outcome, FeedOutcome::Finished), "eos must finish {text:?}");
    }
    let mean = total.as_secs_f64() / feeds as f64;
    assert!(mean < 1e-3, "mean feed latency {mean:.6}s exceeds 1 ms");
    println!(
        "PASS criterion 8: mean feed_token latency {:.1} us over {} feeds",
        mean * 1e6,
        feeds
    );
}

/// 9. Protocol equivalence: serve verdicts match in-process feed_token over
/// random sessions.
#[test]
fn criterion_9_protocol_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let modes = Mode::ALL;
    for session in 0..100 {
        let inst = &build_ensemble(9000 + session, 1)[0];
        let mode = modes[session as usize % modes.len()];
        let mut server = Server::new();
        let init = server.handle(
            &inst.schema,
            &inst.vocab,
            &format!(r#"{{"op":"init","session":"s","mode":"{mode}"}}"#),
        );
        assert_eq!(init["ok"], true);
        let mut parent: Option<String> = None;
        let mut checkpoint = Checkpoint::new(mode);
        for _ in 0..30 {
            let token = rng.gen_range(0..inst.vocab.len() as u32);
            let req = serde_json::json!({
                "op": "feed", "session": "s", "parent": parent, "token_id": token,
            });
            let resp = server.handle(&inst.schema, &inst.vocab, &req.to_string());
            let local = feed_token(&checkpoint, &inst.schema, &inst.vocab, token).unwrap();
            match local {
                FeedOutcome::Accepted(next) => {
                    assert_eq!(resp["result"], "accepted", "session {session}");
                    parent = Some(resp["state"].as_str().unwrap().to_string());
                    checkpoint = next;
                }
                FeedOutcome::Rejected { .. } => {
                    assert_eq!(resp["result"], "rejected", "session {session}");
                }
                FeedOutcome::Finished => {
                    assert_eq!(resp["result"], "finished", "session {session}");
                    break;
                }
            }
        }
    }
    println!("PASS criterion 9: 100 serve sessions match in-process verdicts");
}
