//! Abstract syntax tree for the supported SQL subset.
//!
//! The tree serializes to JSON for golden tests and debugging; structural
//! equality is the notion of AST equality used throughout the test suite.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    pub first: SelectAtom,
    pub rest: Vec<(SetOp, SelectAtom)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SetOp {
    Union,
    Except,
    Intersect,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SelectAtom {
    Core(SelectCore),
    Paren(Box<Query>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectCore {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub where_clause: Option<Expr>,
    pub group_by: Vec<ColRef>,
    pub having: Option<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SelectItem {
    Star,
    QualifiedStar(String),
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FromItem {
    pub source: FromSource,
    pub alias: Option<String>,
    pub joined: JoinKind,
    pub on: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FromSource {
    Table(String),
    Subquery(Box<Query>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JoinKind {
    /// First item of the from list, or a comma-separated item.
    Comma,
    /// `join ... [on ...]`
    Join,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColRef {
    pub qualifier: Option<String>,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderItem {
    pub expr: Expr,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Column(ColRef),
    Number(String),
    String(String),
    Unary {
        negate: bool,
        operand: Box<Expr>,
    },
    Not(Box<Expr>),
    Binary {
        op: BinOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Aggregate {
        func: AggFunc,
        distinct: bool,
        arg: AggArg,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    InQuery {
        expr: Box<Expr>,
        query: Box<Query>,
        negated: bool,
    },
    Like {
        expr: Box<Expr>,
        pattern: Box<Expr>,
        negated: bool,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    Exists(Box<Query>),
    Subquery(Box<Query>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AggArg {
    Star,
    Expr(Box<Expr>),
}

impl Query {
    /// JSON debug form mirroring the tree structure.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("AST serialization cannot fail")
    }
}
