//! Deferred semantic obligations registered while assembling the AST.
//!
//! Column and table references seen before the `from` clause of their select
//! scope cannot be resolved yet; they are recorded as guards and discharged
//! eagerly as soon as the `from` clause completes. A violated guard rejects
//! the hypothesis at that point. References seen after discharge are checked
//! synchronously by the parser and never create a pending guard.

use crate::schema::SqlSchema;

/// What a from-clause name is bound to.
#[derive(Debug, Clone, PartialEq)]
pub enum BindTarget {
    Table(String),
    Subquery { exports: Vec<String> },
}

impl BindTarget {
    /// Column names this target makes addressable through its binding.
    pub fn exports(&self, schema: &SqlSchema) -> Vec<String> {
        match self {
            BindTarget::Table(name) => schema
                .columns_of(name)
                .map(|cols| cols.iter().map(|c| c.as_str().to_string()).collect())
                .unwrap_or_default(),
            BindTarget::Subquery { exports } => exports.clone(),
        }
    }

    pub fn exports_column(&self, schema: &SqlSchema, column: &str) -> bool {
        match self {
            BindTarget::Table(name) => schema.table_has(name, column),
            BindTarget::Subquery { exports } => exports.iter().any(|e| e == column),
        }
    }
}

/// One name bound in a from clause: either an explicit alias or the table's own name.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub name: String,
    pub target: BindTarget,
}

/// A reference event emitted by the parser while assembling the AST.
#[derive(Debug, Clone)]
pub enum RefEvent {
    /// `qualifier.column` where the qualifier is not (yet) bound in any visible scope.
    Qualified {
        qualifier: String,
        column: String,
        offset: usize,
    },
    /// `qualifier.*`
    QualifiedStar { qualifier: String, offset: usize },
    /// bare `column`
    Bare { column: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuardKind {
    TableInScope { table: String },
    AliasInScope { alias: String, required_column: Option<String> },
    AliasHasColumn { alias: String, column: String },
    BareColumnUnique { column: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub kind: GuardKind,
    pub origin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardViolation {
    pub description: String,
    pub offset: usize,
}

/// Pending guards, one frame per select scope, parallel to the parser's
/// scope stack. Guards of an inner scope never leak outward.
#[derive(Debug, Clone, Default)]
pub struct GuardLedger {
    frames: Vec<Vec<Guard>>,
}

impl GuardLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_scope(&mut self) {
        self.frames.push(Vec::new());
    }

    pub fn pop_scope(&mut self) -> Vec<Guard> {
        self.frames.pop().unwrap_or_default()
    }

    pub fn current(&self) -> &[Guard] {
        self.frames.last().map(|f| f.as_slice()).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.frames.iter().all(|f| f.is_empty())
    }

    /// Record the guards arising from one reference event in the current scope.
    pub fn register(&mut self, schema: &SqlSchema, event: &RefEvent) {
        let frame = self.frames.last_mut().expect("register outside any scope");
        match event {
            RefEvent::Qualified {
                qualifier,
                column,
                offset,
            } => {
                if schema.is_table(qualifier) {
                    frame.push(Guard {
                        kind: GuardKind::TableInScope {
                            table: qualifier.clone(),
                        },
                        origin: *offset,
                    });
                } else {
                    frame.push(Guard {
                        kind: GuardKind::AliasInScope {
                            alias: qualifier.clone(),
                            required_column: Some(column.clone()),
                        },
                        origin: *offset,
                    });
                    frame.push(Guard {
                        kind: GuardKind::AliasHasColumn {
                            alias: qualifier.clone(),
                            column: column.clone(),
                        },
                        origin: *offset,
                    });
                }
            }
            RefEvent::QualifiedStar { qualifier, offset } => {
                let kind = if schema.is_table(qualifier) {
                    GuardKind::TableInScope {
                        table: qualifier.clone(),
                    }
                } else {
                    GuardKind::AliasInScope {
                        alias: qualifier.clone(),
                        required_column: None,
                    }
                };
                frame.push(Guard { kind, origin: *offset });
            }
            RefEvent::Bare { column, offset } => {
                frame.push(Guard {
                    kind: GuardKind::BareColumnUnique {
                        column: column.clone(),
                    },
                    origin: *offset,
                });
            }
        }
    }

    /// Discharge the current scope's guards against its completed from clause.
    /// Satisfied guards are removed; the first violated guard rejects.
    pub fn discharge_at_from(
        &mut self,
        schema: &SqlSchema,
        bindings: &[Binding],
    ) -> Result<(), GuardViolation> {
        let frame = self
            .frames
            .last_mut()
            .expect("discharge outside any scope");
        let guards = std::mem::take(frame);
        for guard in &guards {
            check_guard(schema, guard, bindings)?;
        }
        Ok(())
    }
}

/// Evaluate one guard against a from clause's bindings.
pub fn check_guard(
    schema: &SqlSchema,
    guard: &Guard,
    bindings: &[Binding],
) -> Result<(), GuardViolation> {
    let fail = |description: String| {
        Err(GuardViolation {
            description,
            offset: guard.origin,
        })
    };
    match &guard.kind {
        GuardKind::TableInScope { table } => {
            if bindings.iter().any(|b| &b.name == table) {
                Ok(())
            } else {
                fail(format!("table {table} is not brought into scope"))
            }
        }
        GuardKind::AliasInScope {
            alias,
            required_column,
        } => match bindings.iter().find(|b| &b.name == alias) {
            Some(binding) => match required_column {
                Some(col) if !binding.target.exports_column(schema, col) => fail(format!(
                    "alias {alias} does not resolve to a target with column {col}"
                )),
                _ => Ok(()),
            },
            None => fail(format!("alias {alias} is never brought into scope")),
        },
        GuardKind::AliasHasColumn { alias, column } => {
            match bindings.iter().find(|b| &b.name == alias) {
                Some(binding) if binding.target.exports_column(schema, column) => Ok(()),
                Some(_) => fail(format!("alias {alias} has no column {column}")),
                None => fail(format!("alias {alias} is never brought into scope")),
            }
        }
        GuardKind::BareColumnUnique { column } => {
            let count = bindings
                .iter()
                .filter(|b| b.target.exports_column(schema, column))
                .count();
            match count {
                1 => Ok(()),
                0 => fail(format!("no table in scope contains column {column}")),
                n => fail(format!("column {column} is ambiguous: {n} targets in scope")),
            }
        }
    }
}
