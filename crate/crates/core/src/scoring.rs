//! Scoring models producing per-step log-softmax score vectors.
//!
//! The scripted model replays a table keyed by the space-joined token-id
//! prefix; any prefix absent from the table falls back to a uniform
//! distribution perturbed by seeded noise, so whole decodes stay replayable
//! without scripting every reachable prefix.

use std::collections::HashMap;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

/// Abstract interface over a language-model head: log-softmax scores for the
/// next token given the ids emitted so far.
pub trait ScoringModel {
    fn vocab_size(&self) -> usize;
    fn next_scores(&self, prefix: &[u32]) -> Vec<f64>;
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalize arbitrary finite weights into a valid log-softmax vector.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    xs.iter().map(|x| x - z).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn prefix_key(prefix: &[u32]) -> String {
    prefix
        .iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Deserialize)]
struct ScriptedDocument {
    vocab_size: usize,
    #[serde(default)]
    seed: u64,
    scores: HashMap<String, Vec<f64>>,
}

/// Deterministic scripted model: explicit score rows for listed prefixes,
/// seeded uniform-plus-noise rows everywhere else.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    vocab_size: usize,
    seed: u64,
    table: HashMap<String, Vec<f64>>,
}

impl ScriptedModel {
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        ScriptedModel {
            vocab_size,
            seed,
            table: HashMap::new(),
        }
    }

    /// Script one prefix row; weights may be unnormalized and are
    /// log-softmaxed here.
    pub fn with_row(mut self, prefix: &[u32], weights: &[f64]) -> Self {
        assert_eq!(
            weights.len(),
            self.vocab_size,
            "row length must equal vocabulary size"
        );
        self.table.insert(prefix_key(prefix), log_softmax(weights));
        self
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self, ModelError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json_str(&text)
    }

    /// Accepts either the structured form `{"vocab_size":N,"seed":S,"scores":{...}}`
    /// or a bare prefix→weights map (vocab size taken from the rows, seed 0).
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let doc: ScriptedDocument = match serde_json::from_str(text) {
            Ok(doc) => doc,
            Err(_) => {
                let bare: HashMap<String, Vec<f64>> = serde_json::from_str(text)
                    .map_err(|e| ModelError::Format(e.to_string()))?;
                let vocab_size = bare
                    .values()
                    .next()
                    .map(Vec::len)
                    .ok_or_else(|| ModelError::Format("empty score table".into()))?;
                ScriptedDocument {
                    vocab_size,
                    seed: 0,
                    scores: bare,
                }
            }
        };
        if doc.vocab_size == 0 {
            return Err(ModelError::Format("vocab_size must be positive".into()));
        }
        let mut model = ScriptedModel::new(doc.vocab_size, doc.seed);
        for (key, weights) in doc.scores {
            if weights.len() != doc.vocab_size {
                return Err(ModelError::Format(format!(
                    "row {key:?} has {} entries, expected {}",
                    weights.len(),
                    doc.vocab_size
                )));
            }
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(ModelError::Format(format!("row {key:?} is not finite")));
            }
            model.table.insert(key, log_softmax(&weights));
        }
        Ok(model)
    }

    fn fallback_row(&self, key: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(key.as_bytes()));
        let weights: Vec<f64> = (0..self.vocab_size)
            .map(|_| rng.gen_range(0.0..0.5))
            .collect();
        log_softmax(&weights)
    }
}

impl ScoringModel for ScriptedModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_scores(&self, prefix: &[u32]) -> Vec<f64> {
        let key = prefix_key(prefix);
        match self.table.get(&key) {
            Some(row) => row.clone(),
            None => self.fallback_row(&key),
        }
    }
}
