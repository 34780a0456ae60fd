//! The fixed SQL keyword set recognized by the lexer and parser.

/// Keywords of the supported SQL subset, lowercase, sorted.
pub const KEYWORDS: &[&str] = &[
    "and", "as", "asc", "avg", "between", "by", "count", "desc", "distinct", "except", "exists",
    "from", "group", "having", "in", "intersect", "is", "join", "like", "limit", "max", "min",
    "not", "null", "on", "or", "order", "select", "sum", "union", "where",
];

/// Aggregate function keywords.
pub const AGGREGATES: &[&str] = &["avg", "count", "max", "min", "sum"];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

pub fn is_keyword_prefix(fragment: &str) -> bool {
    let idx = KEYWORDS.partition_point(|kw| *kw < fragment);
    KEYWORDS.get(idx).is_some_and(|kw| kw.starts_with(fragment))
}

pub fn is_aggregate(word: &str) -> bool {
    AGGREGATES.contains(&word)
}
