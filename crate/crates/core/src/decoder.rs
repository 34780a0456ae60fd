//! Constrained decoding: per-hypothesis validator checkpoints, top-k
//! restriction, score warping to −∞, and greedy/beam search over a scoring
//! model.
//!
//! Accepted tokens keep their raw model score bit-for-bit; warping only ever
//! introduces −∞. A hypothesis whose every continuation is warped drops out
//! of the beam and the beam refills from the remaining candidates at the same
//! step.

use std::collections::HashMap;

use thiserror::Error;

use crate::lexer::{lex_feed, lex_finalize, lex_full, LexOutcome, LexState};
use crate::parser::{parse_feed, parse_finalize, parse_full, ParseOutcome, ParseState};
use crate::schema::SqlSchema;
use crate::scoring::ScoringModel;
use crate::vocab::Vocabulary;

/// Checking strictness, totally ordered from no checking to full guards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Off,
    Lexing,
    ParsingNoGuards,
    ParsingWithGuards,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Off,
        Mode::Lexing,
        Mode::ParsingNoGuards,
        Mode::ParsingWithGuards,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Off => "off",
            Mode::Lexing => "lex",
            Mode::ParsingNoGuards => "parse",
            Mode::ParsingWithGuards => "parse-guards",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Mode::Off),
            "lex" | "lexing" => Ok(Mode::Lexing),
            "parse" => Ok(Mode::ParsingNoGuards),
            "parse-guards" => Ok(Mode::ParsingWithGuards),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// When checking happens: at every token, or only at end-of-sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Timing {
    Incremental,
    FinalizeOnly,
}

impl Timing {
    pub fn as_str(&self) -> &'static str {
        match self {
            Timing::Incremental => "incremental",
            Timing::FinalizeOnly => "final",
        }
    }
}

impl std::fmt::Display for Timing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Timing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "incremental" => Ok(Timing::Incremental),
            "final" | "finalize-only" => Ok(Timing::FinalizeOnly),
            other => Err(format!("unknown timing {other:?}")),
        }
    }
}

/// Full-string oracle for one mode: the non-incremental ground truth used by
/// soundness checks and finalize-only decoding.
pub fn check_full(schema: &SqlSchema, mode: Mode, text: &str) -> bool {
    match mode {
        Mode::Off => true,
        Mode::Lexing => lex_full(schema, text).is_accept(),
        Mode::ParsingNoGuards => parse_full(schema, text, false).is_complete(),
        Mode::ParsingWithGuards => parse_full(schema, text, true).is_complete(),
    }
}

#[derive(Debug, Clone)]
enum CheckpointInner {
    Off { consumed: usize },
    Lex(LexState),
    Parse(ParseState),
}

/// Resumable validator state for one hypothesis. Immutable value; feeding
/// returns a new checkpoint, so duplicates diverge independently.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    mode: Mode,
    inner: CheckpointInner,
}

impl Checkpoint {
    pub fn new(mode: Mode) -> Self {
        let inner = match mode {
            Mode::Off => CheckpointInner::Off { consumed: 0 },
            Mode::Lexing => CheckpointInner::Lex(LexState::new()),
            Mode::ParsingNoGuards => CheckpointInner::Parse(ParseState::new(false)),
            Mode::ParsingWithGuards => CheckpointInner::Parse(ParseState::new(true)),
        };
        Checkpoint { mode, inner }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Detokenized byte length consumed so far.
    pub fn consumed(&self) -> usize {
        match &self.inner {
            CheckpointInner::Off { consumed } => *consumed,
            CheckpointInner::Lex(lex) => lex.consumed(),
            CheckpointInner::Parse(parse) => parse.consumed(),
        }
    }

    /// Feed a chunk of already-detokenized text.
    pub fn feed_text(&self, schema: &SqlSchema, chunk: &str) -> Result<Checkpoint, String> {
        match &self.inner {
            CheckpointInner::Off { consumed } => Ok(Checkpoint {
                mode: self.mode,
                inner: CheckpointInner::Off {
                    consumed: consumed + chunk.len(),
                },
            }),
            CheckpointInner::Lex(lex) => match lex_feed(lex, schema, chunk) {
                LexOutcome::Accept(next) => Ok(Checkpoint {
                    mode: self.mode,
                    inner: CheckpointInner::Lex(next),
                }),
                LexOutcome::Reject { reason, .. } => Err(reason.as_str().to_string()),
            },
            CheckpointInner::Parse(parse) => match parse_feed(parse, schema, chunk) {
                ParseOutcome::Accept(next) => Ok(Checkpoint {
                    mode: self.mode,
                    inner: CheckpointInner::Parse(next),
                }),
                ParseOutcome::Reject { reason, .. } => Err(reason.as_str().to_string()),
                ParseOutcome::Complete(_) => unreachable!("feed cannot complete"),
            },
        }
    }

    /// End-of-sequence check.
    pub fn finalize(&self, schema: &SqlSchema) -> Result<(), String> {
        match &self.inner {
            CheckpointInner::Off { .. } => Ok(()),
            CheckpointInner::Lex(lex) => match lex_finalize(lex, schema) {
                LexOutcome::Accept(_) => Ok(()),
                LexOutcome::Reject { reason, .. } => Err(reason.as_str().to_string()),
            },
            CheckpointInner::Parse(parse) => match parse_finalize(parse, schema) {
                ParseOutcome::Complete(_) => Ok(()),
                ParseOutcome::Reject { reason, .. } => Err(reason.as_str().to_string()),
                ParseOutcome::Accept(_) => unreachable!("finalize cannot accept"),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum FeedOutcome {
    Accepted(Checkpoint),
    Rejected { reason: String },
    Finished,
}

impl FeedOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, FeedOutcome::Accepted(_))
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("unknown token id {0}")]
    UnknownToken(u32),
    #[error("score vector has {got} entries, expected {expected}")]
    ScoreLength { got: usize, expected: usize },
    #[error("beam search requires top-k >= 2; k = 1 is only valid for greedy search")]
    TopKTooSmall,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Feed one token into a checkpoint. The eos token triggers finalization and
/// yields `Finished` iff the sequence so far is complete and valid.
pub fn feed_token(
    checkpoint: &Checkpoint,
    schema: &SqlSchema,
    vocabulary: &Vocabulary,
    token_id: u32,
) -> Result<FeedOutcome, DecodeError> {
    if !vocabulary.contains(token_id) {
        return Err(DecodeError::UnknownToken(token_id));
    }
    if token_id == vocabulary.eos_id() {
        return Ok(match checkpoint.finalize(schema) {
            Ok(()) => FeedOutcome::Finished,
            Err(reason) => FeedOutcome::Rejected { reason },
        });
    }
    let chunk = vocabulary.detokenize_piece(token_id);
    Ok(match checkpoint.feed_text(schema, &chunk) {
        Ok(next) => FeedOutcome::Accepted(next),
        Err(reason) => FeedOutcome::Rejected { reason },
    })
}

/// One beam-search hypothesis.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub token_ids: Vec<u32>,
    pub log_score: f64,
    pub checkpoint: Checkpoint,
    pub text: String,
    pub finished: bool,
    uid: u64,
}

impl Hypothesis {
    pub fn root(mode: Mode) -> Self {
        Hypothesis {
            token_ids: Vec::new(),
            log_score: 0.0,
            checkpoint: Checkpoint::new(mode),
            text: String::new(),
            finished: false,
            uid: 0,
        }
    }
}

/// Cache of accepted checkpoints keyed by (hypothesis identity, token id).
/// A pure optimization: decoding with and without it is identical.
#[derive(Debug, Default)]
pub struct CheckpointCache {
    map: HashMap<(u64, u32), Checkpoint>,
    enabled: bool,
}

impl CheckpointCache {
    pub fn new(enabled: bool) -> Self {
        CheckpointCache {
            map: HashMap::new(),
            enabled,
        }
    }

    fn put(&mut self, key: (u64, u32), checkpoint: &Checkpoint) {
        if self.enabled {
            self.map.insert(key, checkpoint.clone());
        }
    }

    fn take(&mut self, key: (u64, u32)) -> Option<Checkpoint> {
        if self.enabled {
            self.map.remove(&key)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Indices of the top-k entries by raw score, ties broken by lower token id.
fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

fn warp_with(
    hypothesis: &Hypothesis,
    scores: &[f64],
    k: usize,
    schema: &SqlSchema,
    vocabulary: &Vocabulary,
    timing: Timing,
    cache: &mut CheckpointCache,
) -> Vec<f64> {
    if hypothesis.checkpoint.mode() == Mode::Off {
        // no top-k truncation and no checks at all
        return scores.to_vec();
    }
    let mut warped = vec![f64::NEG_INFINITY; scores.len()];
    for idx in top_k_indices(scores, k) {
        let token = idx as u32;
        let admissible = match timing {
            Timing::Incremental => {
                match feed_token(&hypothesis.checkpoint, schema, vocabulary, token) {
                    Ok(FeedOutcome::Accepted(next)) => {
                        cache.put((hypothesis.uid, token), &next);
                        true
                    }
                    Ok(FeedOutcome::Finished) => true,
                    Ok(FeedOutcome::Rejected { .. }) => false,
                    Err(_) => false,
                }
            }
            Timing::FinalizeOnly => {
                if token == vocabulary.eos_id() {
                    check_full(schema, hypothesis.checkpoint.mode(), &hypothesis.text)
                } else {
                    true
                }
            }
        };
        if admissible {
            warped[idx] = scores[idx];
        }
    }
    warped
}

/// Restrict to the top-k raw scores, then warp inadmissible tokens to −∞.
/// Mode Off returns the scores untouched.
pub fn warp_scores(
    hypothesis: &Hypothesis,
    scores: &[f64],
    k: usize,
    schema: &SqlSchema,
    vocabulary: &Vocabulary,
) -> Vec<f64> {
    let mut cache = CheckpointCache::new(false);
    warp_with(
        hypothesis,
        scores,
        k,
        schema,
        vocabulary,
        Timing::Incremental,
        &mut cache,
    )
}

pub struct SearchParams {
    pub mode: Mode,
    pub beam_size: usize,
    pub k: usize,
    pub max_length: usize,
    pub timing: Timing,
    pub use_cache: bool,
}

/// Length-unnormalized beam search over warped scores. Returns finished
/// hypotheses sorted by score descending; empty means no valid prediction.
pub fn beam_search(
    model: &dyn ScoringModel,
    schema: &SqlSchema,
    vocabulary: &Vocabulary,
    params: &SearchParams,
) -> Result<Vec<Hypothesis>, DecodeError> {
    if params.beam_size == 0 || params.max_length == 0 || params.k == 0 {
        return Err(DecodeError::InvalidParameter(
            "beam_size, k, and max_length must be positive",
        ));
    }
    if params.beam_size > 1 && params.k < 2 {
        return Err(DecodeError::TopKTooSmall);
    }
    if model.vocab_size() != vocabulary.len() {
        return Err(DecodeError::ScoreLength {
            got: model.vocab_size(),
            expected: vocabulary.len(),
        });
    }

    let mut cache = CheckpointCache::new(params.use_cache);
    let mut next_uid: u64 = 1;
    let mut active = vec![Hypothesis::root(params.mode)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _step in 0..params.max_length {
        if active.is_empty() {
            break;
        }
        // (total score, token id, parent index): independent per hypothesis
        let mut candidates: Vec<(f64, u32, usize)> = Vec::new();
        for (i, hyp) in active.iter().enumerate() {
            let scores = model.next_scores(&hyp.token_ids);
            if scores.len() != vocabulary.len() {
                return Err(DecodeError::ScoreLength {
                    got: scores.len(),
                    expected: vocabulary.len(),
                });
            }
            let warped = warp_with(
                hyp,
                &scores,
                params.k,
                schema,
                vocabulary,
                params.timing,
                &mut cache,
            );
            for (idx, &s) in warped.iter().enumerate() {
                if s.is_finite() {
                    candidates.push((hyp.log_score + s, idx as u32, i));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates.truncate(params.beam_size);

        let mut next_active = Vec::new();
        for (score, token, parent_idx) in candidates {
            let parent = &active[parent_idx];
            let mut token_ids = parent.token_ids.clone();
            token_ids.push(token);
            if token == vocabulary.eos_id() {
                finished.push(Hypothesis {
                    token_ids,
                    log_score: score,
                    checkpoint: parent.checkpoint.clone(),
                    text: parent.text.clone(),
                    finished: true,
                    uid: next_uid,
                });
                next_uid += 1;
                continue;
            }
            let checkpoint = match cache.take((parent.uid, token)) {
                Some(cp) => cp,
                None => match feed_token(&parent.checkpoint, schema, vocabulary, token)? {
                    FeedOutcome::Accepted(cp) => cp,
                    // FinalizeOnly reaches here for unchecked tokens; a dead
                    // checkpoint in Off/FinalizeOnly cannot happen for Off,
                    // and FinalizeOnly carries the unchecked text forward
                    FeedOutcome::Rejected { .. } | FeedOutcome::Finished => {
                        parent.checkpoint.clone()
                    }
                },
            };
            let mut text = parent.text.clone();
            text.push_str(&vocabulary.detokenize_piece(token));
            next_active.push(Hypothesis {
                token_ids,
                log_score: score,
                checkpoint,
                text,
                finished: false,
                uid: next_uid,
            });
            next_uid += 1;
        }
        active = next_active;
    }

    finished.sort_by(|a, b| {
        b.log_score
            .partial_cmp(&a.log_score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(finished)
}

/// Constrained greedy search: beam search with a beam of one.
pub fn greedy_search(
    model: &dyn ScoringModel,
    schema: &SqlSchema,
    vocabulary: &Vocabulary,
    mode: Mode,
    k: usize,
    max_length: usize,
) -> Result<Option<Hypothesis>, DecodeError> {
    let params = SearchParams {
        mode,
        beam_size: 1,
        k,
        max_length,
        timing: Timing::Incremental,
        use_cache: true,
    };
    Ok(beam_search(model, schema, vocabulary, &params)?.into_iter().next())
}
