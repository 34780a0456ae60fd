//! Schema-aware incremental validation of SQL emitted token-by-token, plus
//! the constrained decoding machinery built on top of it.

pub mod ast;
pub mod corpus;
pub mod decoder;
pub mod experiment;
pub mod fixtures;
pub mod guards;
pub mod keywords;
pub mod lexer;
pub mod parser;
pub mod schema;
pub mod scoring;
pub mod server;
pub mod vocab;

pub use ast::Query;
pub use decoder::{
    beam_search, check_full, feed_token, greedy_search, warp_scores, Checkpoint, DecodeError,
    FeedOutcome, Hypothesis, Mode, SearchParams, Timing,
};
pub use lexer::{lex_feed, lex_finalize, lex_full, LexItem, LexKind, LexOutcome, LexReason, LexState};
pub use parser::{parse_feed, parse_finalize, parse_full, ParseOutcome, ParseReason, ParseState};
pub use schema::{SchemaError, SqlSchema};
pub use scoring::{ScoringModel, ScriptedModel};
pub use vocab::{VocabError, Vocabulary};
