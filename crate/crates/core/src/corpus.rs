//! Schema-driven query corpus: random schemas, guaranteed-valid query
//! generation, and targeted mutators producing invalid queries labeled with
//! the lowest checking mode expected to catch them.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::decoder::Mode;
use crate::schema::SqlSchema;

const TABLE_POOL: &[&str] = &[
    "people", "pets", "cars", "owners", "students", "courses", "visits", "flights", "airports",
    "singers", "concerts", "stadiums", "employees", "shops", "invoices", "albums",
];

const COLUMN_POOL: &[&str] = &[
    "id", "name", "age", "price", "owner_id", "year", "city", "total", "weight", "height",
    "capacity", "salary", "grade", "code", "title", "duration",
];

/// Random schema with up to `max_tables` tables. Column names repeat across
/// tables often enough to exercise bare-column ambiguity.
pub fn random_schema(rng: &mut impl Rng, max_tables: usize) -> SqlSchema {
    let n_tables = rng.gen_range(1..=max_tables.max(1));
    let mut table_names: Vec<&str> = TABLE_POOL.to_vec();
    table_names.shuffle(rng);
    table_names.truncate(n_tables);

    let mut tables: Vec<(String, Vec<String>)> = Vec::new();
    for name in table_names {
        let n_cols = rng.gen_range(2..=5);
        let mut cols: Vec<&str> = COLUMN_POOL.to_vec();
        cols.shuffle(rng);
        cols.truncate(n_cols);
        tables.push((
            name.to_string(),
            cols.into_iter().map(str::to_string).collect(),
        ));
    }
    let borrowed: Vec<(&str, Vec<&str>)> = tables
        .iter()
        .map(|(t, cs)| (t.as_str(), cs.iter().map(String::as_str).collect()))
        .collect();
    let slices: Vec<(&str, &[&str])> = borrowed
        .iter()
        .map(|(t, cs)| (*t, cs.as_slice()))
        .collect();
    SqlSchema::build("synthetic", &slices).expect("pool names are valid identifiers")
}

struct ScopeBinding {
    name: String,
    columns: Vec<String>,
}

fn columns_of(schema: &SqlSchema, table: &str) -> Vec<String> {
    schema
        .columns_of(table)
        .map(|cols| cols.iter().map(|c| c.as_str().to_string()).collect())
        .unwrap_or_default()
}

fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

/// A column reference that is always guard-safe: qualified, or bare when the
/// column is unambiguous among the in-scope bindings.
fn safe_ref(rng: &mut impl Rng, scope: &[ScopeBinding]) -> String {
    let binding = pick(rng, scope);
    let col = pick(rng, &binding.columns);
    let unique = scope
        .iter()
        .filter(|b| b.columns.iter().any(|c| c == col))
        .count()
        == 1;
    if unique && rng.gen_bool(0.4) {
        col.clone()
    } else {
        format!("{}.{}", binding.name, col)
    }
}

fn literal(rng: &mut impl Rng) -> String {
    if rng.gen_bool(0.7) {
        rng.gen_range(0..100).to_string()
    } else {
        format!("'v{}'", rng.gen_range(0..10))
    }
}

fn comparison(rng: &mut impl Rng, scope: &[ScopeBinding]) -> String {
    let op = pick(rng, &["=", ">", "<", ">=", "<=", "!="]);
    format!("{} {} {}", safe_ref(rng, scope), op, literal(rng))
}

/// Generate a random query that is valid in every mode, guards included.
pub fn generate_valid(schema: &SqlSchema, rng: &mut impl Rng) -> String {
    let tables: Vec<String> = schema
        .tables()
        .iter()
        .map(|(t, _)| t.as_str().to_string())
        .collect();
    let two = tables.len() > 1 && rng.gen_bool(0.5);
    let table_a = pick(rng, &tables).clone();
    let table_b = if two {
        loop {
            let t = pick(rng, &tables).clone();
            if t != table_a {
                break Some(t);
            }
        }
    } else {
        None
    };
    let aliased = rng.gen_bool(0.5);

    let mut scope = Vec::new();
    let mut from = String::new();
    let bind_a = if aliased { "t1".to_string() } else { table_a.clone() };
    scope.push(ScopeBinding {
        name: bind_a.clone(),
        columns: columns_of(schema, &table_a),
    });
    from.push_str(&table_a);
    if aliased {
        from.push_str(" as t1");
    }
    if let Some(table_b) = &table_b {
        let bind_b = if aliased { "t2".to_string() } else { table_b.clone() };
        scope.push(ScopeBinding {
            name: bind_b.clone(),
            columns: columns_of(schema, table_b),
        });
        let on = format!(
            "{}.{} = {}.{}",
            bind_a,
            pick(rng, &scope[0].columns),
            bind_b,
            pick(rng, &scope[1].columns),
        );
        from.push_str(" join ");
        from.push_str(table_b);
        if aliased {
            from.push_str(" as t2");
        }
        from.push_str(" on ");
        from.push_str(&on);
    }

    let n_items = rng.gen_range(1..=3);
    let mut items = Vec::new();
    for _ in 0..n_items {
        let item = match rng.gen_range(0..6) {
            0 => "count(*)".to_string(),
            1 => format!("{}({})", pick(rng, &["sum", "avg", "min", "max"]), safe_ref(rng, scope.as_slice())),
            2 if n_items == 1 => "*".to_string(),
            _ => safe_ref(rng, &scope),
        };
        items.push(item);
    }

    let mut query = format!("select {} from {}", items.join(", "), from);

    if rng.gen_bool(0.55) {
        let mut predicate = comparison(rng, &scope);
        if rng.gen_bool(0.25) {
            predicate = format!(
                "{} {} {}",
                predicate,
                pick(rng, &["and", "or"]),
                comparison(rng, &scope)
            );
        } else if rng.gen_bool(0.2) {
            // nested sub-query, optionally shadowing an outer alias
            let inner_table = pick(rng, &tables).clone();
            let inner_cols = columns_of(schema, &inner_table);
            let inner_col = pick(rng, &inner_cols).clone();
            // a qualified t1.col here would resolve against the outer t1
            // before the inner rebinding, so the shadowed form stays bare
            let shadow = aliased && rng.gen_bool(0.5);
            let inner = if shadow {
                format!("select {inner_col} from {inner_table} as t1")
            } else {
                format!("select {inner_col} from {inner_table}")
            };
            predicate = format!("{} in ({})", safe_ref(rng, &scope), inner);
        }
        query.push_str(" where ");
        query.push_str(&predicate);
    }

    if rng.gen_bool(0.3) {
        query.push_str(" group by ");
        let binding = pick(rng, &scope);
        query.push_str(&format!("{}.{}", binding.name, pick(rng, &binding.columns)));
        if rng.gen_bool(0.5) {
            query.push_str(&format!(" having count(*) > {}", rng.gen_range(1..5)));
        }
    }

    if rng.gen_bool(0.3) {
        query.push_str(" order by ");
        if rng.gen_bool(0.3) {
            query.push_str("count(*)");
        } else {
            query.push_str(&safe_ref(rng, &scope));
        }
        if rng.gen_bool(0.6) {
            query.push_str(if rng.gen_bool(0.5) { " desc" } else { " asc" });
        }
    }

    if rng.gen_bool(0.3) {
        query.push_str(&format!(" limit {}", rng.gen_range(1..20)));
    }

    query
}

/// Corrupt one keyword so no lexical route (keyword, identifier, alias)
/// survives; caught by Lexing. The marker digraph "zq" appears in no pool name.
pub fn mutate_keyword_typo(text: &str, rng: &mut impl Rng) -> Option<String> {
    let words: Vec<&str> = text.split(' ').collect();
    let keyword_positions: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| crate::keywords::is_keyword(w))
        .map(|(i, _)| i)
        .collect();
    if keyword_positions.is_empty() {
        return None;
    }
    let pos = *pick(rng, &keyword_positions);
    let mut mutated: Vec<String> = words.iter().map(|w| w.to_string()).collect();
    mutated[pos] = format!("{}zq", words[pos]);
    Some(mutated.join(" "))
}

/// Replace the column of one qualified reference with a schema column the
/// target table lacks; lexes fine, caught by ParsingNoGuards.
pub fn mutate_column_swap(schema: &SqlSchema, text: &str, rng: &mut impl Rng) -> Option<String> {
    let words: Vec<&str> = text.split(' ').collect();
    let mut qualified: Vec<(usize, &str, &str)> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        if let Some((q, c)) = w.split_once('.') {
            if !c.is_empty() && c != "*" && !c.ends_with(')') {
                qualified.push((i, q, c));
            }
        }
    }
    if qualified.is_empty() {
        return None;
    }
    let (pos, qualifier, _) = *pick(rng, &qualified);
    // every table the qualifier may refer to: its own name, or any
    // `<table> as <qualifier>` binding (shadowing can produce several)
    let mut targets: Vec<String> = Vec::new();
    if schema.is_table(qualifier) {
        targets.push(qualifier.to_string());
    }
    for w in words.windows(3) {
        if w[1] == "as" && w[2].trim_end_matches([',', ')']) == qualifier {
            targets.push(w[0].trim_start_matches('(').to_string());
        }
    }
    if targets.is_empty() {
        return None;
    }
    let wrong: Vec<String> = schema
        .tables()
        .iter()
        .flat_map(|(_, cols)| cols.iter())
        .map(|c| c.as_str().to_string())
        .filter(|c| targets.iter().all(|t| !schema.table_has(t, c)))
        .collect();
    if wrong.is_empty() {
        return None;
    }
    let mut mutated: Vec<String> = words.iter().map(|w| w.to_string()).collect();
    let suffix: String = words[pos]
        .chars()
        .rev()
        .take_while(|c| *c == ',' || *c == ')')
        .collect();
    mutated[pos] = format!("{}.{}{}", qualifier, pick(rng, &wrong), suffix);
    Some(mutated.join(" "))
}

/// Move the from clause out of order; lexing is order-insensitive so this is
/// caught first by ParsingNoGuards.
pub fn mutate_clause_reorder(text: &str, _rng: &mut impl Rng) -> Option<String> {
    Some(format!("from {text}"))
}

/// A fresh query binding the same alias twice in one scope; caught by
/// ParsingNoGuards at the second binding.
pub fn make_duplicate_alias(schema: &SqlSchema, rng: &mut impl Rng) -> Option<String> {
    let tables = schema.tables();
    if tables.len() < 2 {
        return None;
    }
    let a = rng.gen_range(0..tables.len());
    let b = loop {
        let b = rng.gen_range(0..tables.len());
        if b != a {
            break b;
        }
    };
    let (ta, cols_a) = (&tables[a].0, &tables[a].1);
    let (tb, cols_b) = (&tables[b].0, &tables[b].1);
    Some(format!(
        "select t1.{} from {} as t1 join {} as t1 on t1.{} = t1.{}",
        cols_a[0].as_str(),
        ta.as_str(),
        tb.as_str(),
        cols_a[0].as_str(),
        cols_b[0].as_str(),
    ))
}

/// A query every lower mode accepts but guards reject: a bare column no
/// in-scope table exports, or an alias never brought into scope.
pub fn make_guard_violation(schema: &SqlSchema, rng: &mut impl Rng) -> Option<String> {
    let tables = schema.tables();
    let mut pairs = Vec::new();
    for (t, _) in tables {
        for (other, cols) in tables {
            if other == t {
                continue;
            }
            for c in cols {
                if !schema.table_has(t.as_str(), c.as_str()) {
                    pairs.push((t.as_str().to_string(), c.as_str().to_string()));
                }
            }
        }
    }
    if let Some((table, col)) = pairs.choose(rng) {
        if rng.gen_bool(0.5) {
            return Some(format!("select {col} from {table}"));
        }
    }
    let (table, _) = pick(rng, tables);
    let col = &columns_of(schema, table.as_str())[0];
    Some(format!("select t9.{col} from {}", table.as_str()))
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub text: String,
    /// Lowest mode expected to reject; None for valid queries.
    pub catch_mode: Option<Mode>,
}

/// Build a labeled corpus: `n_valid` valid queries plus roughly matching
/// numbers of each invalid class.
pub fn build_corpus(schema: &SqlSchema, rng: &mut impl Rng, n_valid: usize) -> Vec<CorpusItem> {
    let mut items = Vec::new();
    let mut valids = Vec::new();
    for _ in 0..n_valid {
        let text = generate_valid(schema, rng);
        valids.push(text.clone());
        items.push(CorpusItem {
            text,
            catch_mode: None,
        });
    }
    let per_class = n_valid / 4 + 1;
    for i in 0..per_class {
        let base = &valids[i % valids.len()];
        if let Some(text) = mutate_keyword_typo(base, rng) {
            items.push(CorpusItem {
                text,
                catch_mode: Some(Mode::Lexing),
            });
        }
        if let Some(text) = mutate_column_swap(schema, base, rng) {
            items.push(CorpusItem {
                text,
                catch_mode: Some(Mode::ParsingNoGuards),
            });
        }
        if let Some(text) = mutate_clause_reorder(base, rng) {
            items.push(CorpusItem {
                text,
                catch_mode: Some(Mode::ParsingNoGuards),
            });
        }
        if let Some(text) = make_duplicate_alias(schema, rng) {
            items.push(CorpusItem {
                text,
                catch_mode: Some(Mode::ParsingNoGuards),
            });
        }
        if let Some(text) = make_guard_violation(schema, rng) {
            items.push(CorpusItem {
                text,
                catch_mode: Some(Mode::ParsingWithGuards),
            });
        }
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::check_full;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn valid_queries_pass_all_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..200 {
            let schema = random_schema(&mut rng, 6);
            let text = generate_valid(&schema, &mut rng);
            for mode in Mode::ALL {
                assert!(
                    check_full(&schema, mode, &text),
                    "case {i}: {mode} rejected {text:?}"
                );
            }
        }
    }

    #[test]
    fn labels_match_oracle_verdicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for i in 0..20 {
            let schema = random_schema(&mut rng, 6);
            let corpus = build_corpus(&schema, &mut rng, 10);
            for item in corpus {
                for mode in Mode::ALL {
                    let expect = match item.catch_mode {
                        None => true,
                        Some(catch) => mode < catch,
                    };
                    assert_eq!(
                        check_full(&schema, mode, &item.text),
                        expect,
                        "case {i}, {mode}, label {:?}: {:?}",
                        item.catch_mode,
                        item.text
                    );
                }
            }
        }
    }

    #[test]
    fn mutators_are_deterministic_under_seed() {
        let schema = crate::fixtures::pets();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            build_corpus(&schema, &mut rng, 8)
                .into_iter()
                .map(|i| i.text)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
