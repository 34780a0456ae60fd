//! Ablation experiment harness: seeded ensembles of scripted decoding
//! instances, a brute-force oracle over valid sequences, and a sweep runner
//! emitting one CSV row per (mode, beam, k, timing) cell.
//!
//! Each instance scripts a model whose greedy path may branch into flawed
//! continuations at several steps. Flaws are classed by the lowest mode able
//! to reject them, so the ensemble reproduces the qualitative mode and
//! timing orderings at desk scale.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::random_schema;
use crate::decoder::{
    beam_search, check_full, feed_token, Checkpoint, FeedOutcome, Mode, SearchParams, Timing,
};
use crate::schema::SqlSchema;
use crate::scoring::{ScoringModel, ScriptedModel};
use crate::vocab::Vocabulary;

/// Flaw class: the lowest mode that rejects the flawed continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlawClass {
    Lex,
    Parse,
    Guard,
}

/// Flaw mix of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Flawless,
    LexOnly,
    LexParse,
    All,
}

#[derive(Debug, Clone)]
struct Mutant {
    step: usize,
    token: u32,
}

/// One scripted decoding problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub schema: SqlSchema,
    pub vocab: Vocabulary,
    pub model: ScriptedModel,
    /// The intended valid token sequence, eos included.
    pub target_ids: Vec<u32>,
    pub profile: Profile,
}

fn target_words(schema: &SqlSchema, rng: &mut impl Rng) -> Vec<String> {
    let tables = schema.tables();
    let candidates: Vec<usize> = (0..tables.len())
        .filter(|&i| tables[i].1.len() >= 2)
        .collect();
    let ti = candidates[rng.gen_range(0..candidates.len())];
    let (table, cols) = &tables[ti];
    let a = cols[0].as_str();
    let b = cols[1].as_str();
    let t = table.as_str();
    let mut words = vec![
        "select".into(),
        format!("{t}.{a}"),
        "from".into(),
        t.to_string(),
        "where".into(),
        format!("{t}.{b}"),
        ">".into(),
        rng.gen_range(1..90).to_string(),
    ];
    if rng.gen_bool(0.5) {
        words.extend([
            "order".into(),
            "by".into(),
            format!("{t}.{a}"),
            "desc".into(),
        ]);
    }
    if rng.gen_bool(0.3) {
        words.extend(["limit".into(), rng.gen_range(1..9).to_string()]);
    }
    words
}

/// Build one instance: vocabulary from the target words plus one flaw piece
/// per class, and a score table making each flaw outrank the valid token at
/// its divergence step.
pub fn build_instance(seed: u64, profile: Profile) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = loop {
        let s = random_schema(&mut rng, 4);
        if s.tables().iter().any(|(_, cols)| cols.len() >= 2) {
            break s;
        }
    };
    let words = target_words(&schema, &mut rng);

    let mut pieces: Vec<String> = vec![String::new()];
    let id_of = |piece: String, pieces: &mut Vec<String>| -> u32 {
        match pieces.iter().position(|p| p == &piece) {
            Some(i) => i as u32,
            None => {
                pieces.push(piece);
                (pieces.len() - 1) as u32
            }
        }
    };
    let target_word_ids: Vec<u32> = words
        .iter()
        .map(|w| id_of(format!("\u{2581}{w}"), &mut pieces))
        .collect();

    // flaw pieces: a dead word for the lexer, a stray paren for the parser,
    // an alias never brought into scope for the guards
    let guard_col = words[1].split_once('.').unwrap().1.to_string();
    let lex_tok = id_of("\u{2581}zqxw".into(), &mut pieces);
    let parse_tok = id_of("\u{2581})".into(), &mut pieces);
    let guard_tok = id_of(format!("\u{2581}t9.{guard_col}"), &mut pieces);

    let mutants: Vec<Mutant> = match profile {
        Profile::Flawless => vec![],
        Profile::LexOnly => vec![
            Mutant { step: 1, token: lex_tok },
            Mutant { step: 3, token: lex_tok },
        ],
        Profile::LexParse => vec![
            Mutant { step: 1, token: lex_tok },
            Mutant { step: 2, token: parse_tok },
            Mutant { step: 6, token: parse_tok },
        ],
        Profile::All => vec![
            Mutant { step: 1, token: lex_tok },
            Mutant { step: 2, token: parse_tok },
            Mutant { step: 3, token: lex_tok },
            Mutant { step: 5, token: guard_tok },
            Mutant { step: 6, token: parse_tok },
        ],
    };

    let vocab = Vocabulary::from_pieces(&pieces, 0).expect("constructed vocabulary");
    let v = vocab.len();
    let eos = 0u32;
    let len = target_word_ids.len();

    let prob_row = |main: &[(u32, f64)]| -> Vec<f64> {
        let main_mass: f64 = main.iter().map(|(_, p)| p).sum();
        let rest = (1.0 - main_mass) / (v - main.len()) as f64;
        let mut p = vec![rest; v];
        for &(tok, mass) in main {
            p[tok as usize] = mass;
        }
        p.iter().map(|x| x.ln()).collect()
    };

    let mut model = ScriptedModel::new(v, seed);
    // rows along the valid path
    for step in 0..=len {
        let expected = if step < len { target_word_ids[step] } else { eos };
        let row = match mutants.iter().find(|m| m.step == step) {
            Some(m) => prob_row(&[(m.token, 0.55), (expected, 0.35)]),
            None => prob_row(&[(expected, 0.9)]),
        };
        let prefix: Vec<u32> = target_word_ids[..step].to_vec();
        model = model.with_row(&prefix, &row);
    }
    // rows along each flawed continuation: finish the rest of the target
    for m in &mutants {
        let mut prefix: Vec<u32> = target_word_ids[..m.step].to_vec();
        prefix.push(m.token);
        for step in m.step + 1..=len {
            let expected = if step < len { target_word_ids[step] } else { eos };
            model = model.with_row(&prefix, &prob_row(&[(expected, 0.9)]));
            prefix.push(expected);
        }
    }

    let mut target_ids = target_word_ids;
    target_ids.push(eos);
    Instance {
        schema,
        vocab,
        model,
        target_ids,
        profile,
    }
}

/// Deterministic ensemble: roughly 10% flawless, the rest split over the
/// flawed profiles.
pub fn build_ensemble(seed: u64, n: usize) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let profile = match i % 10 {
                0 => Profile::Flawless,
                1..=3 => Profile::LexOnly,
                4..=6 => Profile::LexParse,
                _ => Profile::All,
            };
            build_instance(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), profile)
        })
        .collect()
}

/// Exhaustive best valid sequence by branch and bound: log-scores only
/// decrease, so any prefix scoring below the incumbent is pruned, and any
/// prefix the guards validator rejects has no valid completion.
pub fn best_valid_sequence(
    model: &dyn ScoringModel,
    schema: &SqlSchema,
    vocab: &Vocabulary,
    max_length: usize,
) -> Option<(Vec<u32>, f64)> {
    struct Search<'a> {
        model: &'a dyn ScoringModel,
        schema: &'a SqlSchema,
        vocab: &'a Vocabulary,
        max_length: usize,
        best: Option<(Vec<u32>, f64)>,
        nodes: usize,
    }

    impl Search<'_> {
        fn visit(&mut self, prefix: &mut Vec<u32>, score: f64, checkpoint: &Checkpoint) {
            self.nodes += 1;
            if self.nodes > 2_000_000 {
                return;
            }
            if let Some((_, best)) = &self.best {
                if score <= *best {
                    return;
                }
            }
            let row = self.model.next_scores(prefix);
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| {
                row[b]
                    .partial_cmp(&row[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for idx in order {
                let token = idx as u32;
                let new_score = score + row[idx];
                if let Some((_, best)) = &self.best {
                    if new_score <= *best {
                        // ordered descending, nothing further can win
                        break;
                    }
                }
                if token == self.vocab.eos_id() {
                    if checkpoint.finalize(self.schema).is_ok() {
                        let mut ids = prefix.clone();
                        ids.push(token);
                        self.best = Some((ids, new_score));
                    }
                    continue;
                }
                if prefix.len() + 1 >= self.max_length {
                    continue;
                }
                match feed_token(checkpoint, self.schema, self.vocab, token) {
                    Ok(FeedOutcome::Accepted(next)) => {
                        prefix.push(token);
                        self.visit(prefix, new_score, &next);
                        prefix.pop();
                    }
                    _ => {}
                }
            }
        }
    }

    let mut search = Search {
        model,
        schema,
        vocab,
        max_length,
        best: None,
        nodes: 0,
    };
    let root = Checkpoint::new(Mode::ParsingWithGuards);
    search.visit(&mut Vec::new(), 0.0, &root);
    search.best
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub modes: Vec<Mode>,
    pub beams: Vec<usize>,
    pub ks: Vec<usize>,
    pub timings: Vec<Timing>,
    pub repetitions: usize,
    pub instances: usize,
    pub max_length: usize,
    pub seed: u64,
    /// Latency is wall clock and breaks byte-for-byte CSV determinism, so it
    /// is opt-in; the column reads 0 when disabled.
    pub measure_latency: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            modes: Mode::ALL.to_vec(),
            beams: vec![1, 2, 4, 8],
            ks: vec![2, 4, 8],
            timings: vec![Timing::Incremental, Timing::FinalizeOnly],
            repetitions: 1,
            instances: 40,
            max_length: 24,
            seed: 0,
            measure_latency: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub mode: Mode,
    pub beam: usize,
    pub k: usize,
    pub timing: Timing,
    pub valid_rate: f64,
    pub oracle_match_rate: f64,
    pub unusable_rate: f64,
    pub mean_feed_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("mode,beam,k,timing,valid_rate,oracle_match_rate,unusable_rate,mean_feed_latency_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6},{:.9}\n",
                r.mode,
                r.beam,
                r.k,
                r.timing,
                r.valid_rate,
                r.oracle_match_rate,
                r.unusable_rate,
                r.mean_feed_latency_s
            ));
        }
        out
    }

    pub fn row(&self, mode: Mode, beam: usize, k: usize, timing: Timing) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.beam == beam && r.k == k && r.timing == timing)
    }
}

/// Run the full sweep. Deterministic given the seed (latency measurement off).
pub fn run_experiment(config: &ExperimentConfig) -> ExperimentReport {
    let mut instances = Vec::new();
    for rep in 0..config.repetitions.max(1) {
        instances.extend(build_ensemble(
            config.seed.wrapping_add(rep as u64),
            config.instances,
        ));
    }
    let oracles: Vec<Option<(Vec<u32>, f64)>> = instances
        .iter()
        .map(|inst| best_valid_sequence(&inst.model, &inst.schema, &inst.vocab, config.max_length))
        .collect();

    let mut rows = Vec::new();
    for &mode in &config.modes {
        for &beam in &config.beams {
            for &k in &config.ks {
                for &timing in &config.timings {
                    let mut valid = 0usize;
                    let mut matched = 0usize;
                    let mut unusable = 0usize;
                    let mut elapsed = 0.0f64;
                    let mut tokens = 0usize;
                    for (inst, oracle) in instances.iter().zip(&oracles) {
                        let params = SearchParams {
                            mode,
                            beam_size: beam,
                            k,
                            max_length: config.max_length,
                            timing,
                            use_cache: true,
                        };
                        let start = Instant::now();
                        let results =
                            beam_search(&inst.model, &inst.schema, &inst.vocab, &params)
                                .expect("sweep parameters are valid");
                        if config.measure_latency {
                            elapsed += start.elapsed().as_secs_f64();
                        }
                        match results.first() {
                            None => unusable += 1,
                            Some(top) => {
                                tokens += top.token_ids.len();
                                if check_full(&inst.schema, Mode::ParsingWithGuards, &top.text) {
                                    valid += 1;
                                }
                                if let Some((best_ids, _)) = oracle {
                                    if &top.token_ids == best_ids {
                                        matched += 1;
                                    }
                                }
                            }
                        }
                    }
                    let n = instances.len() as f64;
                    rows.push(ReportRow {
                        mode,
                        beam,
                        k,
                        timing,
                        valid_rate: valid as f64 / n,
                        oracle_match_rate: matched as f64 / n,
                        unusable_rate: unusable as f64 / n,
                        mean_feed_latency_s: if config.measure_latency && tokens > 0 {
                            elapsed / tokens as f64
                        } else {
                            0.0
                        },
                    });
                }
            }
        }
    }
    ExperimentReport { rows }
}
