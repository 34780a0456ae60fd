//! Incremental, resumable parsing of partial SQL into an AST.
//!
//! `parse_feed` accepts a chunk iff some continuation of the text so far can
//! still become a grammatical query under the structural rules: clause order,
//! `tid.cid` column membership, alias-binding consistency, and duplicate-alias
//! prohibition with scope shadowing. With guards enabled, deferred semantic
//! obligations are additionally discharged as soon as each `from` clause
//! completes (see [`crate::guards`]).
//!
//! The parse is re-driven over the completed lexical items whenever a new item
//! appears, with end-of-input mapped to "needs more input" rather than
//! failure. This makes the outcome a pure function of the text, independent
//! of how it was chunked.

use crate::ast::*;
use crate::guards::{BindTarget, Binding, GuardLedger, RefEvent};
use crate::lexer::{lex_finalize, LexItem, LexKind, LexOutcome, LexReason, LexState};
use crate::schema::SqlSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseReason {
    Syntax,
    UnknownTable,
    ColumnNotInTable,
    AliasColumnMismatch,
    DuplicateAlias,
    GuardViolation,
    IncompleteQuery,
}

impl ParseReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParseReason::Syntax => "syntax",
            ParseReason::UnknownTable => "unknown-table",
            ParseReason::ColumnNotInTable => "column-not-in-table",
            ParseReason::AliasColumnMismatch => "alias-column-mismatch",
            ParseReason::DuplicateAlias => "duplicate-alias",
            ParseReason::GuardViolation => "guard-violation",
            ParseReason::IncompleteQuery => "incomplete-query",
        }
    }
}

impl std::fmt::Display for ParseReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum ParseOutcome {
    Accept(ParseState),
    Complete(Query),
    Reject { reason: ParseReason, offset: usize },
}

impl ParseOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, ParseOutcome::Accept(_))
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, ParseOutcome::Complete(_))
    }

    pub fn unwrap_accept(self) -> ParseState {
        match self {
            ParseOutcome::Accept(s) => s,
            other => panic!("expected accept, got {other:?}"),
        }
    }

    pub fn unwrap_complete(self) -> Query {
        match self {
            ParseOutcome::Complete(q) => q,
            other => panic!("expected complete, got {other:?}"),
        }
    }

    pub fn reject_reason(&self) -> Option<(ParseReason, usize)> {
        match self {
            ParseOutcome::Reject { reason, offset } => Some((*reason, *offset)),
            _ => None,
        }
    }
}

/// Visible bindings of one select scope, captured at the resume point so that
/// partially emitted qualified identifiers can be checked eagerly.
#[derive(Debug, Clone)]
struct FrameSnapshot {
    bindings: Vec<Binding>,
}

/// Resumable parser state. Immutable value; feeding returns a new state.
#[derive(Debug, Clone)]
pub struct ParseState {
    lex: LexState,
    guards: bool,
    rejected: Option<(ParseReason, usize)>,
    scopes: Vec<FrameSnapshot>,
}

impl ParseState {
    pub fn new(guards: bool) -> Self {
        ParseState {
            lex: LexState::new(),
            guards,
            rejected: None,
            scopes: Vec::new(),
        }
    }

    pub fn with_guards(&self) -> bool {
        self.guards
    }

    pub fn consumed(&self) -> usize {
        self.lex.consumed()
    }
}

type PResult<T> = Result<T, Halt>;

#[derive(Debug, Clone)]
enum Halt {
    Incomplete,
    Fail { reason: ParseReason, offset: usize },
}

fn fail<T>(reason: ParseReason, offset: usize) -> PResult<T> {
    Err(Halt::Fail { reason, offset })
}

// ---------------------------------------------------------------------------
// token cursor
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    items: &'a [LexItem],
    pos: usize,
    final_input: bool,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> PResult<Option<&'a LexItem>> {
        match self.items.get(self.pos) {
            Some(item) => Ok(Some(item)),
            None if self.final_input => Ok(None),
            None => Err(Halt::Incomplete),
        }
    }

    fn next(&mut self) -> PResult<LexItem> {
        match self.items.get(self.pos) {
            Some(item) => {
                self.pos += 1;
                Ok(item.clone())
            }
            None => Err(Halt::Incomplete),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<LexItem> {
        let tok = self.next()?;
        if tok.is_kw(kw) {
            Ok(tok)
        } else {
            fail(ParseReason::Syntax, tok.span.0)
        }
    }

    fn expect_punct(&mut self, p: char) -> PResult<LexItem> {
        let tok = self.next()?;
        if tok.punct() == Some(p) {
            Ok(tok)
        } else {
            fail(ParseReason::Syntax, tok.span.0)
        }
    }

    fn eat_kw(&mut self, kw: &str) -> PResult<bool> {
        if matches!(self.peek()?, Some(t) if t.is_kw(kw)) {
            self.pos += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }

}

trait ItemExt {
    fn kw(&self) -> Option<&str>;
    fn is_kw(&self, kw: &str) -> bool;
    fn punct(&self) -> Option<char>;
    fn op(&self) -> Option<&str>;
}

impl ItemExt for LexItem {
    fn kw(&self) -> Option<&str> {
        (self.kind == LexKind::Keyword).then_some(self.text.as_str())
    }

    fn is_kw(&self, kw: &str) -> bool {
        self.kw() == Some(kw)
    }

    fn punct(&self) -> Option<char> {
        (self.kind == LexKind::Punctuation).then(|| self.text.chars().next().unwrap())
    }

    fn op(&self) -> Option<&str> {
        (self.kind == LexKind::Operator).then_some(self.text.as_str())
    }
}

// ---------------------------------------------------------------------------
// semantic context
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Frame {
    bindings: Vec<Binding>,
    discharged: bool,
    /// `alias.cid` (or `alias.*`) references recorded before the alias was
    /// bound in any visible scope; column None for the star form.
    pending_refs: Vec<(String, Option<String>, usize)>,
}

struct Ctx<'a> {
    schema: &'a SqlSchema,
    guards_mode: bool,
    frames: Vec<Frame>,
    ledger: GuardLedger,
}

impl<'a> Ctx<'a> {
    fn new(schema: &'a SqlSchema, guards_mode: bool) -> Self {
        Ctx {
            schema,
            guards_mode,
            frames: Vec::new(),
            ledger: GuardLedger::new(),
        }
    }

    fn push_scope(&mut self) {
        self.frames.push(Frame {
            bindings: Vec::new(),
            discharged: false,
            pending_refs: Vec::new(),
        });
        self.ledger.push_scope();
    }

    fn pop_scope(&mut self) -> Frame {
        self.ledger.pop_scope();
        self.frames.pop().expect("scope underflow")
    }

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("no active scope")
    }

    /// Innermost-first binding lookup with shadowing.
    fn lookup(&self, name: &str) -> Option<&Binding> {
        self.frames
            .iter()
            .rev()
            .find_map(|f| f.bindings.iter().find(|b| b.name == name))
    }

    /// Bind a from-clause name in the current scope, resolving any references
    /// recorded for it earlier in the same scope.
    fn bind(&mut self, name: String, target: BindTarget, offset: usize) -> PResult<()> {
        let schema = self.schema;
        let frame = self.frame();
        if !name.is_empty() && frame.bindings.iter().any(|b| b.name == name) {
            return fail(ParseReason::DuplicateAlias, offset);
        }
        let mut resolved_err = None;
        frame.pending_refs.retain(|(alias, column, _)| {
            if alias != &name {
                return true;
            }
            if let Some(col) = column {
                if !target.exports_column(schema, col) && resolved_err.is_none() {
                    resolved_err = Some(offset);
                }
            }
            false
        });
        if let Some(off) = resolved_err {
            return fail(ParseReason::AliasColumnMismatch, off);
        }
        frame.bindings.push(Binding { name, target });
        Ok(())
    }

    /// Handle a column/table reference event: immediate checks where the
    /// scope allows them, guard registration where they must be deferred.
    fn handle_ref(
        &mut self,
        qualifier: Option<&str>,
        column: Option<&str>,
        offset: usize,
    ) -> PResult<()> {
        let schema = self.schema;
        match qualifier {
            Some(q) => {
                if let Some(binding) = self.lookup(q) {
                    if let Some(col) = column {
                        if !binding.target.exports_column(schema, col) {
                            let reason = match &binding.target {
                                BindTarget::Table(t) if t == q => ParseReason::ColumnNotInTable,
                                _ => ParseReason::AliasColumnMismatch,
                            };
                            return fail(reason, offset);
                        }
                    }
                    return Ok(());
                }
                if schema.is_table(q) {
                    if let Some(col) = column {
                        if !schema.table_has(q, col) {
                            return fail(ParseReason::ColumnNotInTable, offset);
                        }
                    }
                    if self.guards_mode {
                        let discharged = self.frame().discharged;
                        if discharged {
                            return fail(ParseReason::GuardViolation, offset);
                        }
                        let event = match column {
                            Some(col) => RefEvent::Qualified {
                                qualifier: q.into(),
                                column: col.into(),
                                offset,
                            },
                            None => RefEvent::QualifiedStar {
                                qualifier: q.into(),
                                offset,
                            },
                        };
                        self.ledger.register(schema, &event);
                    }
                    Ok(())
                } else {
                    // forward alias reference
                    let discharged = self.frame().discharged;
                    if discharged {
                        if self.guards_mode {
                            return fail(ParseReason::GuardViolation, offset);
                        }
                        // without guards an unbound alias is tolerated
                    }
                    self.frame()
                        .pending_refs
                        .push((q.into(), column.map(str::to_string), offset));
                    if self.guards_mode {
                        let event = match column {
                            Some(col) => RefEvent::Qualified {
                                qualifier: q.into(),
                                column: col.into(),
                                offset,
                            },
                            None => RefEvent::QualifiedStar {
                                qualifier: q.into(),
                                offset,
                            },
                        };
                        self.ledger.register(schema, &event);
                    }
                    Ok(())
                }
            }
            None => {
                // bare column: only the uniqueness guard applies, and only with guards on
                if !self.guards_mode {
                    return Ok(());
                }
                let col = column.expect("bare reference has a column");
                let frame = self.frames.last().expect("no active scope");
                if frame.discharged {
                    let count = frame
                        .bindings
                        .iter()
                        .filter(|b| b.target.exports_column(schema, col))
                        .count();
                    if count != 1 {
                        return fail(ParseReason::GuardViolation, offset);
                    }
                    Ok(())
                } else {
                    self.ledger.register(
                        schema,
                        &RefEvent::Bare {
                            column: col.into(),
                            offset,
                        },
                    );
                    Ok(())
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// grammar
// ---------------------------------------------------------------------------

fn parse_query(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Query> {
    let first = parse_atom(cur, ctx)?;
    let mut rest = Vec::new();
    loop {
        let op = match cur.peek()? {
            Some(t) if t.is_kw("union") => SetOp::Union,
            Some(t) if t.is_kw("except") => SetOp::Except,
            Some(t) if t.is_kw("intersect") => SetOp::Intersect,
            _ => break,
        };
        cur.next()?;
        let atom = parse_atom(cur, ctx)?;
        rest.push((op, atom));
    }
    Ok(Query { first, rest })
}

fn parse_atom(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<SelectAtom> {
    match cur.peek()? {
        Some(t) if t.is_kw("select") => {
            let (core, _) = parse_select_core(cur, ctx)?;
            Ok(SelectAtom::Core(core))
        }
        Some(t) if t.punct() == Some('(') => {
            cur.next()?;
            let inner = parse_query(cur, ctx)?;
            cur.expect_punct(')')?;
            Ok(SelectAtom::Paren(Box::new(inner)))
        }
        Some(t) => fail(ParseReason::Syntax, t.span.0),
        None => Err(Halt::Incomplete),
    }
}

/// Parse one select core; returns the core and its exported column names.
fn parse_select_core(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<(SelectCore, Vec<String>)> {
    cur.expect_kw("select")?;
    ctx.push_scope();
    let result = parse_select_core_body(cur, ctx);
    match result {
        Ok(core) => {
            let frame = ctx.pop_scope();
            let exports = exports_of(&core.items, &frame.bindings, ctx.schema);
            Ok((core, exports))
        }
        Err(halt) => {
            // leave frames in place for resume-point inspection on Incomplete
            if matches!(halt, Halt::Fail { .. }) {
                ctx.pop_scope();
            }
            Err(halt)
        }
    }
}

fn parse_select_core_body(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<SelectCore> {
    let distinct = cur.eat_kw("distinct")?;

    let mut items = vec![parse_select_item(cur, ctx)?];
    while matches!(cur.peek()?, Some(t) if t.punct() == Some(',')) {
        cur.next()?;
        items.push(parse_select_item(cur, ctx)?);
    }

    cur.expect_kw("from")?;
    let mut from = vec![parse_from_item(cur, ctx, JoinKind::Comma)?];
    loop {
        match cur.peek()? {
            Some(t) if t.punct() == Some(',') => {
                cur.next()?;
                from.push(parse_from_item(cur, ctx, JoinKind::Comma)?);
            }
            Some(t) if t.is_kw("join") => {
                cur.next()?;
                let mut item = parse_from_item(cur, ctx, JoinKind::Join)?;
                if cur.eat_kw("on")? {
                    item.on = Some(parse_expr(cur, ctx)?);
                }
                from.push(item);
            }
            _ => break,
        }
    }

    // from clause complete: discharge guards eagerly
    if ctx.guards_mode {
        let bindings = ctx.frames.last().expect("scope").bindings.clone();
        if let Err(violation) = ctx.ledger.discharge_at_from(ctx.schema, &bindings) {
            return fail(ParseReason::GuardViolation, violation.offset);
        }
    }
    ctx.frame().discharged = true;

    let where_clause = if cur.eat_kw("where")? {
        Some(parse_expr(cur, ctx)?)
    } else {
        None
    };

    let mut group_by = Vec::new();
    if cur.eat_kw("group")? {
        cur.expect_kw("by")?;
        group_by.push(parse_col_ref(cur, ctx)?);
        while matches!(cur.peek()?, Some(t) if t.punct() == Some(',')) {
            cur.next()?;
            group_by.push(parse_col_ref(cur, ctx)?);
        }
    }

    let having = if cur.eat_kw("having")? {
        Some(parse_expr(cur, ctx)?)
    } else {
        None
    };

    let mut order_by = Vec::new();
    if cur.eat_kw("order")? {
        cur.expect_kw("by")?;
        order_by.push(parse_order_item(cur, ctx)?);
        while matches!(cur.peek()?, Some(t) if t.punct() == Some(',')) {
            cur.next()?;
            order_by.push(parse_order_item(cur, ctx)?);
        }
    }

    let limit = if cur.eat_kw("limit")? {
        let tok = cur.next()?;
        if tok.kind != LexKind::NumberLiteral || tok.text.contains('.') {
            return fail(ParseReason::Syntax, tok.span.0);
        }
        Some(tok.text.parse::<u64>().map_err(|_| Halt::Fail {
            reason: ParseReason::Syntax,
            offset: tok.span.0,
        })?)
    } else {
        None
    };

    Ok(SelectCore {
        distinct,
        items,
        from,
        where_clause,
        group_by,
        having,
        order_by,
        limit,
    })
}

fn split_qualified(text: &str) -> (&str, &str) {
    let dot = text.find('.').expect("qualified identifier has a dot");
    (&text[..dot], &text[dot + 1..])
}

fn parse_select_item(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<SelectItem> {
    match cur.peek()? {
        Some(t) if t.kind == LexKind::Star => {
            cur.next()?;
            Ok(SelectItem::Star)
        }
        Some(t) if t.kind == LexKind::QualifiedIdentifier && t.text.ends_with(".*") => {
            let tok = cur.next()?;
            let (q, _) = split_qualified(&tok.text);
            ctx.handle_ref(Some(q), None, tok.span.0)?;
            Ok(SelectItem::QualifiedStar(q.to_string()))
        }
        _ => {
            let expr = parse_expr(cur, ctx)?;
            let alias = if cur.eat_kw("as")? {
                let tok = cur.next()?;
                if tok.kind != LexKind::Identifier {
                    return fail(ParseReason::Syntax, tok.span.0);
                }
                Some(tok.text)
            } else {
                None
            };
            Ok(SelectItem::Expr { expr, alias })
        }
    }
}

fn parse_from_item(cur: &mut Cursor, ctx: &mut Ctx, joined: JoinKind) -> PResult<FromItem> {
    let tok = cur.next()?;
    let (source, target) = match tok.kind {
        LexKind::Identifier => {
            if !ctx.schema.is_table(&tok.text) {
                return fail(ParseReason::UnknownTable, tok.span.0);
            }
            (
                FromSource::Table(tok.text.clone()),
                BindTarget::Table(tok.text.clone()),
            )
        }
        LexKind::Punctuation if tok.text == "(" => {
            let exports = {
                match cur.peek()? {
                    Some(t) if t.is_kw("select") || t.punct() == Some('(') => {}
                    Some(t) => return fail(ParseReason::Syntax, t.span.0),
                    None => return Err(Halt::Incomplete),
                }
                let (query, exports) = parse_subquery(cur, ctx)?;
                cur.expect_punct(')')?;
                (query, exports)
            };
            (
                FromSource::Subquery(Box::new(exports.0)),
                BindTarget::Subquery { exports: exports.1 },
            )
        }
        _ => return fail(ParseReason::Syntax, tok.span.0),
    };
    let alias = if cur.eat_kw("as")? {
        let atok = cur.next()?;
        if atok.kind != LexKind::Identifier {
            return fail(ParseReason::Syntax, atok.span.0);
        }
        Some((atok.text, atok.span.0))
    } else {
        None
    };
    let (bind_name, bind_offset) = match &alias {
        Some((name, off)) => (name.clone(), *off),
        None => match &source {
            FromSource::Table(name) => (name.clone(), tok.span.0),
            FromSource::Subquery(_) => (String::new(), tok.span.0),
        },
    };
    ctx.bind(bind_name, target, bind_offset)?;
    Ok(FromItem {
        source,
        alias: alias.map(|(n, _)| n),
        joined,
        on: None,
    })
}

/// Parse a nested query together with its export list.
fn parse_subquery(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<(Query, Vec<String>)> {
    match cur.peek()? {
        Some(t) if t.is_kw("select") => {
            let (core, exports) = parse_select_core(cur, ctx)?;
            let mut rest = Vec::new();
            loop {
                let op = match cur.peek()? {
                    Some(t) if t.is_kw("union") => SetOp::Union,
                    Some(t) if t.is_kw("except") => SetOp::Except,
                    Some(t) if t.is_kw("intersect") => SetOp::Intersect,
                    _ => break,
                };
                cur.next()?;
                let atom = parse_atom(cur, ctx)?;
                rest.push((op, atom));
            }
            Ok((
                Query {
                    first: SelectAtom::Core(core),
                    rest,
                },
                exports,
            ))
        }
        Some(t) if t.punct() == Some('(') => {
            cur.next()?;
            let (inner, exports) = parse_subquery(cur, ctx)?;
            cur.expect_punct(')')?;
            Ok((
                Query {
                    first: SelectAtom::Paren(Box::new(inner)),
                    rest: Vec::new(),
                },
                exports,
            ))
        }
        Some(t) => fail(ParseReason::Syntax, t.span.0),
        None => Err(Halt::Incomplete),
    }
}

fn exports_of(items: &[SelectItem], bindings: &[Binding], schema: &SqlSchema) -> Vec<String> {
    let mut exports = Vec::new();
    for item in items {
        match item {
            SelectItem::Star => {
                for b in bindings {
                    exports.extend(b.target.exports(schema));
                }
            }
            SelectItem::QualifiedStar(q) => {
                if let Some(b) = bindings.iter().find(|b| &b.name == q) {
                    exports.extend(b.target.exports(schema));
                }
            }
            SelectItem::Expr { expr, alias } => match (alias, expr) {
                (Some(a), _) => exports.push(a.clone()),
                (None, Expr::Column(col)) => exports.push(col.column.clone()),
                _ => {}
            },
        }
    }
    exports
}

fn parse_col_ref(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<ColRef> {
    let tok = cur.next()?;
    match tok.kind {
        LexKind::Identifier => {
            ctx.handle_ref(None, Some(&tok.text), tok.span.0)?;
            Ok(ColRef {
                qualifier: None,
                column: tok.text,
            })
        }
        LexKind::QualifiedIdentifier if !tok.text.ends_with(".*") => {
            let (q, c) = split_qualified(&tok.text);
            ctx.handle_ref(Some(q), Some(c), tok.span.0)?;
            Ok(ColRef {
                qualifier: Some(q.to_string()),
                column: c.to_string(),
            })
        }
        _ => fail(ParseReason::Syntax, tok.span.0),
    }
}

fn parse_order_item(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<OrderItem> {
    let expr = parse_expr(cur, ctx)?;
    let direction = if cur.eat_kw("asc")? {
        Some(Direction::Asc)
    } else if cur.eat_kw("desc")? {
        Some(Direction::Desc)
    } else {
        None
    };
    Ok(OrderItem { expr, direction })
}

// expression precedence: or < and < not < predicate < additive < multiplicative < unary

fn parse_expr(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    let mut left = parse_and(cur, ctx)?;
    while cur.eat_kw("or")? {
        let right = parse_and(cur, ctx)?;
        left = Expr::Binary {
            op: BinOp::Or,
            left: Box::new(left),
            right: Box::new(right),
        };
    }
    Ok(left)
}

fn parse_and(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    let mut left = parse_not(cur, ctx)?;
    while cur.eat_kw("and")? {
        let right = parse_not(cur, ctx)?;
        left = Expr::Binary {
            op: BinOp::And,
            left: Box::new(left),
            right: Box::new(right),
        };
    }
    Ok(left)
}

fn parse_not(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    if cur.eat_kw("not")? {
        Ok(Expr::Not(Box::new(parse_not(cur, ctx)?)))
    } else {
        parse_predicate(cur, ctx)
    }
}

fn cmp_op(text: &str) -> Option<BinOp> {
    match text {
        "=" => Some(BinOp::Eq),
        "!=" | "<>" => Some(BinOp::NotEq),
        "<" => Some(BinOp::Lt),
        "<=" => Some(BinOp::LtEq),
        ">" => Some(BinOp::Gt),
        ">=" => Some(BinOp::GtEq),
        _ => None,
    }
}

fn parse_predicate(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    let left = parse_additive(cur, ctx)?;
    match cur.peek()? {
        Some(t) if t.op().and_then(cmp_op).is_some() => {
            let op = cmp_op(t.op().unwrap()).unwrap();
            cur.next()?;
            let right = parse_additive(cur, ctx)?;
            Ok(Expr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        Some(t) if t.is_kw("between") => {
            cur.next()?;
            parse_between_tail(cur, ctx, left, false)
        }
        Some(t) if t.is_kw("in") => {
            cur.next()?;
            parse_in_tail(cur, ctx, left, false)
        }
        Some(t) if t.is_kw("like") => {
            cur.next()?;
            let pattern = parse_additive(cur, ctx)?;
            Ok(Expr::Like {
                expr: Box::new(left),
                pattern: Box::new(pattern),
                negated: false,
            })
        }
        Some(t) if t.is_kw("not") => {
            cur.next()?;
            let tok = cur.next()?;
            if tok.is_kw("in") {
                parse_in_tail(cur, ctx, left, true)
            } else if tok.is_kw("like") {
                let pattern = parse_additive(cur, ctx)?;
                Ok(Expr::Like {
                    expr: Box::new(left),
                    pattern: Box::new(pattern),
                    negated: true,
                })
            } else if tok.is_kw("between") {
                parse_between_tail(cur, ctx, left, true)
            } else {
                fail(ParseReason::Syntax, tok.span.0)
            }
        }
        Some(t) if t.is_kw("is") => {
            cur.next()?;
            let tok = cur.next()?;
            let negated = if tok.is_kw("not") {
                cur.expect_kw("null")?;
                true
            } else if tok.is_kw("null") {
                false
            } else {
                return fail(ParseReason::Syntax, tok.span.0);
            };
            Ok(Expr::IsNull {
                expr: Box::new(left),
                negated,
            })
        }
        _ => Ok(left),
    }
}

fn parse_between_tail(cur: &mut Cursor, ctx: &mut Ctx, left: Expr, negated: bool) -> PResult<Expr> {
    let low = parse_additive(cur, ctx)?;
    cur.expect_kw("and")?;
    let high = parse_additive(cur, ctx)?;
    Ok(Expr::Between {
        expr: Box::new(left),
        low: Box::new(low),
        high: Box::new(high),
        negated,
    })
}

fn parse_in_tail(cur: &mut Cursor, ctx: &mut Ctx, left: Expr, negated: bool) -> PResult<Expr> {
    cur.expect_punct('(')?;
    match cur.peek()? {
        Some(t) if t.is_kw("select") || t.punct() == Some('(') => {
            let (query, _) = parse_subquery(cur, ctx)?;
            cur.expect_punct(')')?;
            Ok(Expr::InQuery {
                expr: Box::new(left),
                query: Box::new(query),
                negated,
            })
        }
        _ => {
            let mut list = vec![parse_expr(cur, ctx)?];
            while matches!(cur.peek()?, Some(t) if t.punct() == Some(',')) {
                cur.next()?;
                list.push(parse_expr(cur, ctx)?);
            }
            cur.expect_punct(')')?;
            Ok(Expr::InList {
                expr: Box::new(left),
                list,
                negated,
            })
        }
    }
}

fn parse_additive(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    let mut left = parse_mult(cur, ctx)?;
    loop {
        let op = match cur.peek()? {
            Some(t) if t.op() == Some("+") => BinOp::Add,
            Some(t) if t.op() == Some("-") => BinOp::Sub,
            _ => break,
        };
        cur.next()?;
        let right = parse_mult(cur, ctx)?;
        left = Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        };
    }
    Ok(left)
}

fn parse_mult(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    let mut left = parse_unary(cur, ctx)?;
    loop {
        let op = match cur.peek()? {
            Some(t) if t.kind == LexKind::Star => BinOp::Mul,
            Some(t) if t.op() == Some("/") => BinOp::Div,
            _ => break,
        };
        cur.next()?;
        let right = parse_unary(cur, ctx)?;
        left = Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        };
    }
    Ok(left)
}

fn parse_unary(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    match cur.peek()? {
        Some(t) if t.op() == Some("-") => {
            cur.next()?;
            Ok(Expr::Unary {
                negate: true,
                operand: Box::new(parse_unary(cur, ctx)?),
            })
        }
        Some(t) if t.op() == Some("+") => {
            cur.next()?;
            Ok(Expr::Unary {
                negate: false,
                operand: Box::new(parse_unary(cur, ctx)?),
            })
        }
        _ => parse_primary(cur, ctx),
    }
}

fn agg_func(kw: &str) -> Option<AggFunc> {
    match kw {
        "count" => Some(AggFunc::Count),
        "sum" => Some(AggFunc::Sum),
        "avg" => Some(AggFunc::Avg),
        "min" => Some(AggFunc::Min),
        "max" => Some(AggFunc::Max),
        _ => None,
    }
}

fn parse_primary(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Expr> {
    let tok = cur.next()?;
    match tok.kind {
        LexKind::NumberLiteral => Ok(Expr::Number(tok.text)),
        LexKind::StringLiteral => Ok(Expr::String(tok.text)),
        LexKind::Identifier => {
            ctx.handle_ref(None, Some(&tok.text), tok.span.0)?;
            Ok(Expr::Column(ColRef {
                qualifier: None,
                column: tok.text,
            }))
        }
        LexKind::QualifiedIdentifier => {
            if tok.text.ends_with(".*") {
                return fail(ParseReason::Syntax, tok.span.0);
            }
            let (q, c) = split_qualified(&tok.text);
            ctx.handle_ref(Some(q), Some(c), tok.span.0)?;
            Ok(Expr::Column(ColRef {
                qualifier: Some(q.to_string()),
                column: c.to_string(),
            }))
        }
        LexKind::Keyword if agg_func(&tok.text).is_some() => {
            let func = agg_func(&tok.text).unwrap();
            cur.expect_punct('(')?;
            let distinct = cur.eat_kw("distinct")?;
            let arg = match cur.peek()? {
                Some(t) if t.kind == LexKind::Star => {
                    cur.next()?;
                    AggArg::Star
                }
                _ => AggArg::Expr(Box::new(parse_expr(cur, ctx)?)),
            };
            cur.expect_punct(')')?;
            Ok(Expr::Aggregate {
                func,
                distinct,
                arg,
            })
        }
        LexKind::Keyword if tok.text == "exists" => {
            cur.expect_punct('(')?;
            let (query, _) = parse_subquery(cur, ctx)?;
            cur.expect_punct(')')?;
            Ok(Expr::Exists(Box::new(query)))
        }
        LexKind::Punctuation if tok.text == "(" => match cur.peek()? {
            Some(t) if t.is_kw("select") => {
                let (query, _) = parse_subquery(cur, ctx)?;
                cur.expect_punct(')')?;
                Ok(Expr::Subquery(Box::new(query)))
            }
            _ => {
                let expr = parse_expr(cur, ctx)?;
                cur.expect_punct(')')?;
                Ok(expr)
            }
        },
        _ => fail(ParseReason::Syntax, tok.span.0),
    }
}

// ---------------------------------------------------------------------------
// driving the parse over the lexical items
// ---------------------------------------------------------------------------

enum RunResult {
    Done(Query),
    Incomplete(Vec<FrameSnapshot>),
    Fail { reason: ParseReason, offset: usize },
}

fn run(schema: &SqlSchema, items: &[LexItem], final_input: bool, guards_mode: bool) -> RunResult {
    let mut cur = Cursor {
        items,
        pos: 0,
        final_input,
    };
    let mut ctx = Ctx::new(schema, guards_mode);
    match run_top(&mut cur, &mut ctx) {
        Ok(query) => RunResult::Done(query),
        Err(Halt::Incomplete) => RunResult::Incomplete(
            ctx.frames
                .iter()
                .map(|f| FrameSnapshot {
                    bindings: f.bindings.clone(),
                })
                .collect(),
        ),
        Err(Halt::Fail { reason, offset }) => RunResult::Fail { reason, offset },
    }
}

fn run_top(cur: &mut Cursor, ctx: &mut Ctx) -> PResult<Query> {
    let query = parse_query(cur, ctx)?;
    if matches!(cur.peek()?, Some(t) if t.punct() == Some(';')) {
        cur.next()?;
    }
    match cur.peek()? {
        None => Ok(query),
        Some(t) => fail(ParseReason::Syntax, t.span.0),
    }
}

/// Check a partially emitted qualified identifier against the resolved scope
/// chain: the column fragment must extend to some column of the qualifier's
/// target. Unbound alias-like qualifiers stay admissible until bound.
fn check_pending_qualified(
    schema: &SqlSchema,
    scopes: &[FrameSnapshot],
    qualifier: &str,
    fragment: &str,
    offset: usize,
) -> Result<(), (ParseReason, usize)> {
    if fragment.is_empty() {
        return Ok(());
    }
    let binding = scopes
        .iter()
        .rev()
        .find_map(|f| f.bindings.iter().find(|b| b.name == qualifier));
    match binding {
        Some(b) => {
            let extensible = b
                .target
                .exports(schema)
                .iter()
                .any(|col| col.starts_with(fragment));
            if extensible {
                Ok(())
            } else {
                let reason = match &b.target {
                    BindTarget::Table(t) if t == qualifier => ParseReason::ColumnNotInTable,
                    _ => ParseReason::AliasColumnMismatch,
                };
                Err((reason, offset))
            }
        }
        None if schema.is_table(qualifier) => {
            let extensible = schema
                .columns_of(qualifier)
                .is_some_and(|cols| cols.iter().any(|c| c.as_str().starts_with(fragment)));
            if extensible {
                Ok(())
            } else {
                Err((ParseReason::ColumnNotInTable, offset))
            }
        }
        // unbound alias: nothing to check against yet
        None => Ok(()),
    }
}

fn map_lex_reason(was_qualified: bool) -> ParseReason {
    if was_qualified {
        ParseReason::ColumnNotInTable
    } else {
        ParseReason::Syntax
    }
}

/// Feed a chunk of text through the parser's own lexing and grammar checks.
pub fn parse_feed(state: &ParseState, schema: &SqlSchema, chunk: &str) -> ParseOutcome {
    if let Some((reason, offset)) = state.rejected {
        return ParseOutcome::Reject { reason, offset };
    }
    let mut next = state.clone();
    for raw in chunk.chars() {
        let was_qualified = next.lex.pending_qualified().is_some();
        let items_before = next.lex.items().len();
        match crate::lexer::lex_feed(&next.lex, schema, &raw.to_string()) {
            LexOutcome::Accept(lex) => next.lex = lex,
            LexOutcome::Reject { offset, .. } => {
                return ParseOutcome::Reject {
                    reason: map_lex_reason(was_qualified),
                    offset,
                };
            }
        }
        if next.lex.items().len() != items_before {
            match run(schema, next.lex.items(), false, next.guards) {
                RunResult::Incomplete(scopes) => next.scopes = scopes,
                RunResult::Fail { reason, offset } => {
                    return ParseOutcome::Reject { reason, offset };
                }
                RunResult::Done(_) => unreachable!("open stream cannot complete"),
            }
        }
        if let Some((q, frag)) = next.lex.pending_qualified() {
            if let Err((reason, offset)) = check_pending_qualified(
                schema,
                &next.scopes,
                q,
                frag,
                next.lex.pending_item_start(),
            ) {
                return ParseOutcome::Reject { reason, offset };
            }
        }
    }
    ParseOutcome::Accept(next)
}

/// End-of-sequence: the text so far must form one complete query.
pub fn parse_finalize(state: &ParseState, schema: &SqlSchema) -> ParseOutcome {
    if let Some((reason, offset)) = state.rejected {
        return ParseOutcome::Reject { reason, offset };
    }
    let lex = match lex_finalize(&state.lex, schema) {
        LexOutcome::Accept(lex) => lex,
        LexOutcome::Reject { reason, offset } => {
            let mapped = match reason {
                LexReason::IncompleteItem | LexReason::UnterminatedConstructImpossible => {
                    ParseReason::IncompleteQuery
                }
                _ => ParseReason::Syntax,
            };
            return ParseOutcome::Reject {
                reason: mapped,
                offset,
            };
        }
    };
    if lex.items().is_empty() {
        return ParseOutcome::Reject {
            reason: ParseReason::IncompleteQuery,
            offset: 0,
        };
    }
    match run(schema, lex.items(), true, state.guards) {
        RunResult::Done(query) => ParseOutcome::Complete(query),
        RunResult::Incomplete(_) => ParseOutcome::Reject {
            reason: ParseReason::IncompleteQuery,
            offset: lex.consumed(),
        },
        RunResult::Fail { reason, offset } => ParseOutcome::Reject { reason, offset },
    }
}

/// Non-incremental oracle: feed the whole text in one chunk, then finalize.
pub fn parse_full(schema: &SqlSchema, text: &str, guards: bool) -> ParseOutcome {
    match parse_feed(&ParseState::new(guards), schema, text) {
        ParseOutcome::Accept(state) => parse_finalize(&state, schema),
        other => other,
    }
}
