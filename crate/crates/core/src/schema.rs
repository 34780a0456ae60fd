//! SQL schema model: table and column names plus column-to-table membership.
//!
//! All names are case-folded to lowercase at load time; every lookup is
//! case-insensitive by folding its argument the same way. The schema is
//! immutable after construction and can be shared freely between sessions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keywords;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed schema document at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema integrity error: {0}")]
    Integrity(String),
    #[error("invalid identifier {0:?}: identifiers must match [a-z_][a-z0-9_]* after case folding")]
    InvalidIdentifier(String),
    #[error("identifier {0:?} collides with a SQL keyword")]
    KeywordCollision(String),
    #[error("schema read error: {0}")]
    Io(#[from] std::io::Error),
}

/// A table name, lowercase, unique within its schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TableId(String);

impl TableId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for TableId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A column name, lowercase, unique within its owning table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnId(String);

impl ColumnId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ColumnId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Deserialize)]
struct SchemaDoc {
    db_id: String,
    tables: Vec<TableDoc>,
}

#[derive(Debug, Deserialize)]
struct TableDoc {
    name: String,
    columns: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SchemaDocOut<'a> {
    db_id: &'a str,
    tables: Vec<TableDocOut<'a>>,
}

#[derive(Debug, Serialize)]
struct TableDocOut<'a> {
    name: &'a str,
    columns: Vec<&'a str>,
}

/// Immutable schema: tables with their columns and the inverted column index.
#[derive(Debug, Clone)]
pub struct SqlSchema {
    db_id: String,
    tables: Vec<(TableId, Vec<ColumnId>)>,
    column_index: BTreeMap<String, BTreeSet<TableId>>,
    // Sorted name lists for prefix queries.
    table_names: Vec<String>,
    column_names: Vec<String>,
    all_names: Vec<String>,
    alias_stem: String,
}

fn fold(name: &str) -> String {
    name.to_ascii_lowercase()
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn sorted_dedup(mut v: Vec<String>) -> Vec<String> {
    v.sort_unstable();
    v.dedup();
    v
}

fn has_prefix(sorted: &[String], fragment: &str) -> bool {
    let idx = sorted.partition_point(|name| name.as_str() < fragment);
    sorted.get(idx).is_some_and(|name| name.starts_with(fragment))
}

impl SqlSchema {
    /// Build a schema from in-memory parts. Used by tests and generators; the
    /// same validation as [`SqlSchema::load`] applies.
    pub fn build(db_id: &str, tables: &[(&str, &[&str])]) -> Result<Self, SchemaError> {
        let doc = SchemaDoc {
            db_id: db_id.to_string(),
            tables: tables
                .iter()
                .map(|(name, columns)| TableDoc {
                    name: name.to_string(),
                    columns: columns.iter().map(|c| c.to_string()).collect(),
                })
                .collect(),
        };
        Self::from_doc(doc)
    }

    /// Load a schema from its canonical JSON representation.
    pub fn load<R: Read>(mut source: R) -> Result<Self, SchemaError> {
        let mut buf = String::new();
        source.read_to_string(&mut buf)?;
        Self::from_json_str(&buf)
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchemaError> {
        let doc: SchemaDoc = serde_json::from_str(text).map_err(|e| SchemaError::Format {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: SchemaDoc) -> Result<Self, SchemaError> {
        if doc.tables.is_empty() {
            return Err(SchemaError::Integrity("schema has no tables".into()));
        }
        let mut tables = Vec::with_capacity(doc.tables.len());
        let mut column_index: BTreeMap<String, BTreeSet<TableId>> = BTreeMap::new();
        let mut seen_tables: BTreeSet<String> = BTreeSet::new();
        for table in doc.tables {
            let tname = fold(&table.name);
            check_identifier(&tname)?;
            if !seen_tables.insert(tname.clone()) {
                return Err(SchemaError::Integrity(format!(
                    "duplicate table name {tname:?}"
                )));
            }
            if table.columns.is_empty() {
                return Err(SchemaError::Integrity(format!(
                    "table {tname:?} has no columns"
                )));
            }
            let tid = TableId(tname.clone());
            let mut columns = Vec::with_capacity(table.columns.len());
            let mut seen_cols: BTreeSet<String> = BTreeSet::new();
            for col in table.columns {
                let cname = fold(&col);
                check_identifier(&cname)?;
                if !seen_cols.insert(cname.clone()) {
                    return Err(SchemaError::Integrity(format!(
                        "duplicate column {cname:?} in table {tname:?}"
                    )));
                }
                column_index
                    .entry(cname.clone())
                    .or_default()
                    .insert(tid.clone());
                columns.push(ColumnId(cname));
            }
            tables.push((tid, columns));
        }

        let table_names: Vec<String> = tables.iter().map(|(t, _)| t.0.clone()).collect();
        let column_names: Vec<String> = column_index.keys().cloned().collect();
        let mut all_names = table_names.clone();
        all_names.extend(column_names.iter().cloned());

        Ok(SqlSchema {
            db_id: doc.db_id,
            tables,
            column_index,
            table_names: sorted_dedup(table_names),
            column_names: sorted_dedup(column_names),
            all_names: sorted_dedup(all_names),
            alias_stem: "t".to_string(),
        })
    }

    pub fn db_id(&self) -> &str {
        &self.db_id
    }

    pub fn tables(&self) -> &[(TableId, Vec<ColumnId>)] {
        &self.tables
    }

    /// Set of tables whose column list contains the given (case-folded) name.
    pub fn tables_containing(&self, column: &str) -> BTreeSet<TableId> {
        self.column_index
            .get(&fold(column))
            .cloned()
            .unwrap_or_default()
    }

    /// True iff `fragment` is a case-insensitive prefix of any table or column name.
    pub fn is_identifier_prefix(&self, fragment: &str) -> bool {
        has_prefix(&self.all_names, &fold(fragment))
    }

    pub fn is_table_prefix(&self, fragment: &str) -> bool {
        has_prefix(&self.table_names, &fold(fragment))
    }

    pub fn is_column_prefix(&self, fragment: &str) -> bool {
        has_prefix(&self.column_names, &fold(fragment))
    }

    pub fn is_table(&self, name: &str) -> bool {
        self.table_names.binary_search(&fold(name)).is_ok()
    }

    pub fn is_column(&self, name: &str) -> bool {
        self.column_names.binary_search(&fold(name)).is_ok()
    }

    /// Columns of the named table, or `None` if the table does not exist.
    pub fn columns_of(&self, table: &str) -> Option<&[ColumnId]> {
        let folded = fold(table);
        self.tables
            .iter()
            .find(|(t, _)| t.0 == folded)
            .map(|(_, cols)| cols.as_slice())
    }

    pub fn table_has(&self, table: &str, column: &str) -> bool {
        let folded = fold(column);
        self.columns_of(table)
            .is_some_and(|cols| cols.iter().any(|c| c.0 == folded))
    }

    /// The alias convention: `<stem><digits>`, default stem "t" (t1, t2, ...).
    pub fn with_alias_stem(mut self, stem: &str) -> Self {
        self.alias_stem = fold(stem);
        self
    }

    pub fn is_alias(&self, word: &str) -> bool {
        let folded = fold(word);
        folded
            .strip_prefix(self.alias_stem.as_str())
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    }

    pub fn is_alias_prefix(&self, fragment: &str) -> bool {
        let folded = fold(fragment);
        if self.alias_stem.starts_with(&folded) {
            return true;
        }
        folded
            .strip_prefix(self.alias_stem.as_str())
            .is_some_and(|rest| rest.bytes().all(|b| b.is_ascii_digit()))
    }

    /// Canonical JSON serialization; `load(serialize(s))` reproduces `s`.
    pub fn to_json(&self) -> String {
        let doc = SchemaDocOut {
            db_id: &self.db_id,
            tables: self
                .tables
                .iter()
                .map(|(t, cols)| TableDocOut {
                    name: t.as_str(),
                    columns: cols.iter().map(|c| c.as_str()).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("schema serialization cannot fail")
    }
}

fn check_identifier(name: &str) -> Result<(), SchemaError> {
    if !valid_identifier(name) {
        return Err(SchemaError::InvalidIdentifier(name.to_string()));
    }
    if keywords::is_keyword(name) {
        return Err(SchemaError::KeywordCollision(name.to_string()));
    }
    Ok(())
}
