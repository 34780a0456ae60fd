//! Incremental lexing of partial SQL text.
//!
//! `lex_feed` consumes arbitrary chunks of detokenized model output and keeps
//! a resumable [`LexState`]. A chunk is accepted iff some continuation of the
//! text so far could still form a valid lexical stream: completed items must
//! classify as keywords, punctuation, operators, literals, or schema-valid
//! identifiers, and the trailing fragment must be a prefix of at least one
//! admissible item. Order of items is deliberately not checked here.
//!
//! Rejection offsets point at the start of the offending item, so the prefix
//! of the text up to the reported offset is always itself accepted.

use serde::Serialize;

use crate::keywords;
use crate::schema::SqlSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LexKind {
    Keyword,
    Punctuation,
    Operator,
    NumberLiteral,
    StringLiteral,
    Identifier,
    QualifiedIdentifier,
    Star,
}

/// One completed lexical item with its byte span in the detokenized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LexItem {
    pub kind: LexKind,
    pub text: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexReason {
    UnknownKeyword,
    InvalidIdentifier,
    MalformedNumber,
    UnterminatedConstructImpossible,
    IllegalCharacter,
    IncompleteItem,
}

impl LexReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            LexReason::UnknownKeyword => "unknown-keyword",
            LexReason::InvalidIdentifier => "invalid-identifier",
            LexReason::MalformedNumber => "malformed-number",
            LexReason::UnterminatedConstructImpossible => "unterminated-construct-impossible",
            LexReason::IllegalCharacter => "illegal-character",
            LexReason::IncompleteItem => "incomplete-item",
        }
    }
}

impl std::fmt::Display for LexReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Machine {
    Idle,
    /// Inside a word; `dot` is the byte index (within pending) of the separator.
    Word { dot: Option<usize> },
    Number { has_dot: bool },
    Str,
    StrQuote,
    Lt,
    Gt,
    Bang,
}

/// Which admissibility routes were still live for the current word at the
/// previous character; used only to pick a rejection reason.
#[derive(Debug, Clone, Copy, Default)]
struct Live {
    keyword: bool,
    name: bool,
    alias: bool,
}

/// Resumable lexer state. Immutable value; `lex_feed` returns a new state.
#[derive(Debug, Clone)]
pub struct LexState {
    items: Vec<LexItem>,
    pending: String,
    consumed: usize,
    machine: Machine,
    item_start: usize,
    live: Live,
}

impl Default for LexState {
    fn default() -> Self {
        Self::new()
    }
}

impl LexState {
    pub fn new() -> Self {
        LexState {
            items: Vec::new(),
            pending: String::new(),
            consumed: 0,
            machine: Machine::Idle,
            item_start: 0,
            live: Live::default(),
        }
    }

    pub fn items(&self) -> &[LexItem] {
        &self.items
    }

    pub fn pending(&self) -> &str {
        &self.pending
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// If the trailing fragment is a qualified identifier in progress,
    /// returns `(qualifier, column_fragment_so_far)`.
    pub fn pending_qualified(&self) -> Option<(&str, &str)> {
        match self.machine {
            Machine::Word { dot: Some(d) } => Some((&self.pending[..d], &self.pending[d + 1..])),
            _ => None,
        }
    }

    pub fn pending_item_start(&self) -> usize {
        self.item_start
    }
}

#[derive(Debug, Clone)]
pub enum LexOutcome {
    Accept(LexState),
    Reject { reason: LexReason, offset: usize },
}

impl LexOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, LexOutcome::Accept(_))
    }

    pub fn unwrap_accept(self) -> LexState {
        match self {
            LexOutcome::Accept(s) => s,
            LexOutcome::Reject { reason, offset } => {
                panic!("expected accept, got reject({reason}) at {offset}")
            }
        }
    }
}

type Step = Result<(), (LexReason, usize)>;

fn is_word_start(c: char) -> bool {
    c.is_ascii_lowercase() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

impl LexState {
    fn push_item(&mut self, kind: LexKind, text: String, end: usize) {
        self.items.push(LexItem {
            kind,
            text,
            span: (self.item_start, end),
        });
        self.pending.clear();
        self.machine = Machine::Idle;
        self.live = Live::default();
    }

    /// Classify the pending word as a complete item, or report why it cannot be one.
    fn classify_word(&self, schema: &SqlSchema) -> Result<LexKind, LexReason> {
        match self.machine {
            Machine::Word { dot: Some(d) } => {
                let column = &self.pending[d + 1..];
                if column == "*" || schema.is_column(column) {
                    Ok(LexKind::QualifiedIdentifier)
                } else {
                    Err(LexReason::InvalidIdentifier)
                }
            }
            Machine::Word { dot: None } => {
                let word = self.pending.as_str();
                if keywords::is_keyword(word) {
                    Ok(LexKind::Keyword)
                } else if schema.is_alias(word) || schema.is_table(word) || schema.is_column(word) {
                    Ok(LexKind::Identifier)
                } else if self.live.keyword && !self.live.name && !self.live.alias {
                    Err(LexReason::UnknownKeyword)
                } else {
                    Err(LexReason::InvalidIdentifier)
                }
            }
            _ => unreachable!("classify_word outside word state"),
        }
    }

    /// Close the pending word at a boundary and append it as an item.
    fn complete_word(&mut self, schema: &SqlSchema, end: usize) -> Step {
        match self.classify_word(schema) {
            Ok(kind) => {
                let text = std::mem::take(&mut self.pending);
                self.push_item(kind, text, end);
                Ok(())
            }
            Err(reason) => Err((reason, self.item_start)),
        }
    }

    fn complete_number(&mut self, end: usize) -> Step {
        if self.pending.ends_with('.') {
            return Err((LexReason::MalformedNumber, self.item_start));
        }
        let text = std::mem::take(&mut self.pending);
        self.push_item(LexKind::NumberLiteral, text, end);
        Ok(())
    }

    fn process_char(&mut self, schema: &SqlSchema, raw: char, offset: usize) -> Step {
        let c = raw.to_ascii_lowercase();
        loop {
            match self.machine {
                Machine::Idle => {
                    self.item_start = offset;
                    match c {
                        c if c.is_whitespace() => {}
                        '(' | ')' | ',' | ';' | '.' => {
                            self.push_item(LexKind::Punctuation, c.to_string(), offset + 1);
                        }
                        '*' => self.push_item(LexKind::Star, "*".into(), offset + 1),
                        '=' | '+' | '-' | '/' => {
                            self.push_item(LexKind::Operator, c.to_string(), offset + 1);
                        }
                        '<' => self.machine = Machine::Lt,
                        '>' => self.machine = Machine::Gt,
                        '!' => self.machine = Machine::Bang,
                        '\'' => {
                            self.machine = Machine::Str;
                            self.pending.push('\'');
                        }
                        c if is_word_start(c) => {
                            self.machine = Machine::Word { dot: None };
                            self.pending.push(c);
                            let live = self.word_live(schema);
                            if !live.keyword && !live.name && !live.alias {
                                return Err((LexReason::InvalidIdentifier, self.item_start));
                            }
                            self.live = live;
                        }
                        c if c.is_ascii_digit() => {
                            self.machine = Machine::Number { has_dot: false };
                            self.pending.push(c);
                        }
                        _ => return Err((LexReason::IllegalCharacter, offset)),
                    }
                    return Ok(());
                }
                Machine::Word { dot } => {
                    if is_word_char(c) {
                        self.pending.push(c);
                        match dot {
                            None => {
                                let live = self.word_live(schema);
                                if !live.keyword && !live.name && !live.alias {
                                    let reason = if self.live.keyword && !self.live.name {
                                        LexReason::UnknownKeyword
                                    } else {
                                        LexReason::InvalidIdentifier
                                    };
                                    return Err((reason, self.item_start));
                                }
                                self.live = live;
                            }
                            Some(d) => {
                                let column = &self.pending[d + 1..];
                                if !schema.is_column_prefix(column) {
                                    return Err((LexReason::InvalidIdentifier, self.item_start));
                                }
                            }
                        }
                        return Ok(());
                    }
                    if c == '.' && dot.is_none() {
                        let qualifier = self.pending.as_str();
                        if !schema.is_table(qualifier) && !schema.is_alias(qualifier) {
                            return Err((LexReason::InvalidIdentifier, self.item_start));
                        }
                        let d = self.pending.len();
                        self.pending.push('.');
                        self.machine = Machine::Word { dot: Some(d) };
                        return Ok(());
                    }
                    if c == '*' {
                        if let Some(d) = dot {
                            if d + 1 == self.pending.len() {
                                // qualified star: `t1.*`
                                self.pending.push('*');
                                let text = std::mem::take(&mut self.pending);
                                self.push_item(LexKind::QualifiedIdentifier, text, offset + 1);
                                return Ok(());
                            }
                        }
                    }
                    // boundary: close the word and reprocess the char
                    self.complete_word(schema, offset)?;
                    continue;
                }
                Machine::Number { has_dot } => {
                    if c.is_ascii_digit() {
                        self.pending.push(c);
                        return Ok(());
                    }
                    if c == '.' && !has_dot {
                        self.pending.push('.');
                        self.machine = Machine::Number { has_dot: true };
                        return Ok(());
                    }
                    if is_word_char(c) || c == '.' {
                        return Err((LexReason::MalformedNumber, self.item_start));
                    }
                    self.complete_number(offset)?;
                    continue;
                }
                Machine::Str => {
                    self.pending.push(raw);
                    if raw == '\'' {
                        self.machine = Machine::StrQuote;
                    }
                    return Ok(());
                }
                Machine::StrQuote => {
                    if raw == '\'' {
                        // escaped quote, still inside the literal
                        self.pending.push(raw);
                        self.machine = Machine::Str;
                        return Ok(());
                    }
                    let text = std::mem::take(&mut self.pending);
                    self.push_item(LexKind::StringLiteral, text, offset);
                    continue;
                }
                Machine::Lt => {
                    if c == '=' || c == '>' {
                        let text = if c == '=' { "<=" } else { "<>" };
                        self.push_item(LexKind::Operator, text.into(), offset + 1);
                        return Ok(());
                    }
                    self.push_item(LexKind::Operator, "<".into(), offset);
                    continue;
                }
                Machine::Gt => {
                    if c == '=' {
                        self.push_item(LexKind::Operator, ">=".into(), offset + 1);
                        return Ok(());
                    }
                    self.push_item(LexKind::Operator, ">".into(), offset);
                    continue;
                }
                Machine::Bang => {
                    if c == '=' {
                        self.push_item(LexKind::Operator, "!=".into(), offset + 1);
                        return Ok(());
                    }
                    return Err((LexReason::IllegalCharacter, self.item_start));
                }
            }
        }
    }

    fn word_live(&self, schema: &SqlSchema) -> Live {
        let frag = self.pending.as_str();
        Live {
            keyword: keywords::is_keyword_prefix(frag),
            name: schema.is_identifier_prefix(frag),
            alias: schema.is_alias_prefix(frag),
        }
    }
}

/// Feed a chunk of text. Accepts iff the whole text so far is still
/// extensible to a valid lexical stream.
pub fn lex_feed(state: &LexState, schema: &SqlSchema, chunk: &str) -> LexOutcome {
    let mut next = state.clone();
    for raw in chunk.chars() {
        let offset = next.consumed;
        if let Err((reason, offset)) = next.process_char(schema, raw, offset) {
            return LexOutcome::Reject { reason, offset };
        }
        next.consumed += raw.len_utf8();
    }
    LexOutcome::Accept(next)
}

/// End-of-sequence: the trailing fragment must form a complete item on its own.
pub fn lex_finalize(state: &LexState, schema: &SqlSchema) -> LexOutcome {
    let mut next = state.clone();
    let end = next.consumed;
    let result: Step = match next.machine {
        Machine::Idle => Ok(()),
        Machine::Word { .. } => match next.classify_word(schema) {
            Ok(kind) => {
                let text = std::mem::take(&mut next.pending);
                next.push_item(kind, text, end);
                Ok(())
            }
            Err(_) => Err((LexReason::IncompleteItem, next.item_start)),
        },
        Machine::Number { .. } => {
            if next.pending.ends_with('.') {
                Err((LexReason::IncompleteItem, next.item_start))
            } else {
                next.complete_number(end)
            }
        }
        Machine::Str => Err((LexReason::UnterminatedConstructImpossible, next.item_start)),
        Machine::StrQuote => {
            let text = std::mem::take(&mut next.pending);
            next.push_item(LexKind::StringLiteral, text, end);
            Ok(())
        }
        Machine::Lt => {
            next.push_item(LexKind::Operator, "<".into(), end);
            Ok(())
        }
        Machine::Gt => {
            next.push_item(LexKind::Operator, ">".into(), end);
            Ok(())
        }
        Machine::Bang => Err((LexReason::IncompleteItem, next.item_start)),
    };
    match result {
        Ok(()) => LexOutcome::Accept(next),
        Err((reason, offset)) => LexOutcome::Reject { reason, offset },
    }
}

/// Lex a complete string in one pass, including finalization.
pub fn lex_full(schema: &SqlSchema, text: &str) -> LexOutcome {
    match lex_feed(&LexState::new(), schema, text) {
        LexOutcome::Accept(state) => lex_finalize(&state, schema),
        reject => reject,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{dog_kennels, pets};
    use proptest::prelude::*;

    fn feed(schema: &SqlSchema, text: &str) -> LexOutcome {
        lex_feed(&LexState::new(), schema, text)
    }

    #[test]
    fn rejects_cell_phone() {
        let schema = dog_kennels();
        let text = "select email_address, cell_phone";
        match feed(&schema, text) {
            LexOutcome::Reject { reason, offset } => {
                assert_eq!(reason, LexReason::InvalidIdentifier);
                assert_eq!(offset, text.find("cell_phone").unwrap());
            }
            LexOutcome::Accept(_) => panic!("cell_phone must be rejected"),
        }
    }

    #[test]
    fn accepts_identifier_prefix() {
        let schema = dog_kennels();
        let state = feed(&schema, "select email_").unwrap_accept();
        assert_eq!(state.pending(), "email_");
        assert_eq!(state.items().len(), 1);
    }

    #[test]
    fn rejects_keyword_typo() {
        let schema = dog_kennels();
        match feed(&schema, "selct * from professionals") {
            LexOutcome::Reject { reason, offset } => {
                assert_eq!(reason, LexReason::UnknownKeyword);
                assert_eq!(offset, 0);
            }
            LexOutcome::Accept(_) => panic!("selct must be rejected"),
        }
    }

    #[test]
    fn order_insensitive() {
        let schema = pets();
        assert!(feed(&schema, "from people select id").is_accept());
        assert!(lex_full(&schema, "from people select id").is_accept());
    }

    #[test]
    fn finalize_rejects_incomplete_identifier() {
        let schema = dog_kennels();
        let state = feed(&schema, "select email_").unwrap_accept();
        match lex_finalize(&state, &schema) {
            LexOutcome::Reject { reason, .. } => assert_eq!(reason, LexReason::IncompleteItem),
            LexOutcome::Accept(_) => panic!("email_ is not a complete name"),
        }
    }

    #[test]
    fn finalize_accepts_complete_name_and_empty_pending() {
        let schema = dog_kennels();
        let state = feed(&schema, "select cell_number").unwrap_accept();
        assert!(lex_finalize(&state, &schema).is_accept());
        let state = feed(&schema, "select cell_number ").unwrap_accept();
        assert!(lex_finalize(&state, &schema).is_accept());
    }

    #[test]
    fn qualified_identifiers() {
        let schema = dog_kennels();
        let state = lex_full(&schema, "professionals.cell_number").unwrap_accept();
        assert_eq!(state.items().len(), 1);
        assert_eq!(state.items()[0].kind, LexKind::QualifiedIdentifier);
        // unknown column part
        assert!(!feed(&schema, "professionals.cell_phone ").is_accept());
        // qualifier must be a table or alias
        assert!(!feed(&schema, "cell_number.age").is_accept());
        // alias qualifier is always admissible at lex level
        assert!(lex_full(&schema, "t1.age").is_accept());
        // qualified star
        let state = lex_full(&schema, "t1.*").unwrap_accept();
        assert_eq!(state.items()[0].text, "t1.*");
    }

    #[test]
    fn literals_and_operators() {
        let schema = pets();
        let state = lex_full(&schema, "age >= 18 and name != 'o''brien' + 1.5").unwrap_accept();
        let kinds: Vec<LexKind> = state.items().iter().map(|i| i.kind).collect();
        assert_eq!(
            kinds,
            vec![
                LexKind::Identifier,
                LexKind::Operator,
                LexKind::NumberLiteral,
                LexKind::Keyword,
                LexKind::Identifier,
                LexKind::Operator,
                LexKind::StringLiteral,
                LexKind::Operator,
                LexKind::NumberLiteral,
            ]
        );
        assert_eq!(state.items()[6].text, "'o''brien'");
    }

    #[test]
    fn unterminated_string_is_pending_then_incomplete() {
        let schema = pets();
        let state = feed(&schema, "name = 'abc").unwrap_accept();
        match lex_finalize(&state, &schema) {
            LexOutcome::Reject { reason, .. } => {
                assert_eq!(reason, LexReason::UnterminatedConstructImpossible)
            }
            LexOutcome::Accept(_) => panic!("unterminated string at EOS"),
        }
    }

    #[test]
    fn malformed_number() {
        let schema = pets();
        assert!(matches!(
            feed(&schema, "select 1a"),
            LexOutcome::Reject {
                reason: LexReason::MalformedNumber,
                ..
            }
        ));
        assert!(matches!(
            feed(&schema, "select 1.2.3"),
            LexOutcome::Reject {
                reason: LexReason::MalformedNumber,
                ..
            }
        ));
    }

    #[test]
    fn illegal_character() {
        let schema = pets();
        assert!(matches!(
            feed(&schema, "select id @"),
            LexOutcome::Reject {
                reason: LexReason::IllegalCharacter,
                ..
            }
        ));
    }

    #[test]
    fn case_insensitive_input() {
        let schema = pets();
        let state = lex_full(&schema, "SELECT Id FROM People").unwrap_accept();
        assert_eq!(state.items()[0].text, "select");
        assert_eq!(state.items()[1].text, "id");
    }

    #[test]
    fn spans_are_monotone() {
        let schema = pets();
        let state = lex_full(&schema, "select id, name from people where age > 1").unwrap_accept();
        let mut last = 0;
        for item in state.items() {
            assert!(item.span.0 >= last);
            assert!(item.span.1 > item.span.0);
            last = item.span.1;
        }
    }

    fn arb_chunking(text: String) -> impl Strategy<Value = Vec<String>> {
        let len = text.len();
        proptest::collection::vec(0..=len, 0..6).prop_map(move |mut cuts| {
            cuts.retain(|c| text.is_char_boundary(*c));
            cuts.sort_unstable();
            cuts.dedup();
            let mut chunks = Vec::new();
            let mut prev = 0;
            for c in cuts {
                chunks.push(text[prev..c].to_string());
                prev = c;
            }
            chunks.push(text[prev..].to_string());
            chunks
        })
    }

    proptest! {
        /// Chunk boundaries never change the outcome or the item stream.
        #[test]
        fn chunking_independence(chunks in arb_chunking(
            "select id, name from people where age >= 'x' and id <= 1.5".to_string()
        )) {
            let schema = pets();
            let whole: String = chunks.concat();
            let mut state = LexState::new();
            let mut rejected = None;
            for chunk in &chunks {
                match lex_feed(&state, &schema, chunk) {
                    LexOutcome::Accept(s) => state = s,
                    LexOutcome::Reject { reason, offset } => {
                        rejected = Some((reason, offset));
                        break;
                    }
                }
            }
            let oracle = feed(&schema, &whole);
            match (rejected, oracle) {
                (None, LexOutcome::Accept(full)) => {
                    prop_assert_eq!(state.items(), full.items());
                    prop_assert_eq!(state.pending(), full.pending());
                }
                (Some((r, o)), LexOutcome::Reject { reason, offset }) => {
                    prop_assert_eq!(r, reason);
                    prop_assert_eq!(o, offset);
                }
                (a, b) => prop_assert!(false, "divergence: {:?} vs {:?}", a, b.is_accept()),
            }
        }

        /// Every prefix of an accepted text is accepted (prefix closure).
        #[test]
        fn prefix_closure(cut in 0usize..60) {
            let schema = pets();
            let text = "select id, name from people where age >= 'x' and id <= 1.5";
            prop_assume!(cut <= text.len() && text.is_char_boundary(cut));
            prop_assert!(feed(&schema, &text[..cut]).is_accept());
        }
    }

    #[test]
    fn permuted_items_still_accepted() {
        let schema = pets();
        // whitespace-separated complete items of an accepted stream, permuted
        let permutations = [
            "select id from people where age > 1",
            "where select from 1 age people id >",
            "1 > age people from id select where",
        ];
        for text in permutations {
            assert!(lex_full(&schema, text).is_accept(), "{text}");
        }
    }
}
