//! Shipped statement corpora and the differential runner that checks the
//! encrypted pipeline against the plaintext reference executor.

use std::time::{Duration, Instant};

use cipherdb_cloud::EncryptedStore;

use crate::manifest::OWNER_PRINCIPAL;
use crate::oracle::{self, compare_results, Comparison, OracleOutcome};
use crate::owner::{Owner, PlainDatabase};
use crate::sql;

/// Differential statements over the generated data.
pub const DIFFERENTIAL_SQL: &str = include_str!("../corpus/differential.sql");
/// Dataset parameters the differential corpus literals were chosen for.
pub const DIFFERENTIAL_SEED: u64 = 7;
pub const DIFFERENTIAL_SCALE: f64 = 0.0002;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: String,
    pub sql: String,
}

/// Splits corpus text into entries. An entry starts at a `-- name: <id>`
/// line and runs to the next one; other comment lines are dropped.
pub fn parse_corpus(text: &str) -> Vec<CorpusEntry> {
    let mut out: Vec<CorpusEntry> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix("-- name:") {
            out.push(CorpusEntry { name: name.trim().to_string(), sql: String::new() });
        } else if trimmed.starts_with("--") || trimmed.is_empty() {
            continue;
        } else if let Some(e) = out.last_mut() {
            if !e.sql.is_empty() {
                e.sql.push('\n');
            }
            e.sql.push_str(line);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiffOutcome {
    Query(Comparison),
    Mutation {
        expected: u64,
        actual: u64,
        /// The decrypted target table equals the reference table row by row.
        table_matches: bool,
    },
    /// Either pipeline failed; the message names which.
    Error(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffReport {
    pub name: String,
    pub sql: String,
    pub outcome: DiffOutcome,
    pub elapsed: Duration,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        match &self.outcome {
            DiffOutcome::Query(c) => c.exact(),
            DiffOutcome::Mutation { expected, actual, table_matches } => expected == actual && *table_matches,
            DiffOutcome::Error(_) => false,
        }
    }

    /// Precision and recall; mutations count as 1.0 when they agree.
    pub fn precision_recall(&self) -> (f64, f64) {
        match &self.outcome {
            DiffOutcome::Query(c) => (c.precision(), c.recall()),
            _ if self.passed() => (1.0, 1.0),
            _ => (0.0, 0.0),
        }
    }
}

fn target_table(stmt: &sql::Statement) -> Option<&str> {
    match stmt {
        sql::Statement::Insert(i) => Some(&i.table),
        sql::Statement::Update(u) => Some(&u.table),
        sql::Statement::Delete(d) => Some(&d.table),
        sql::Statement::Select(_) => None,
    }
}

/// Runs one statement through both pipelines, mutating both databases.
pub fn diff_statement(owner: &mut Owner, store: &mut EncryptedStore, db: &mut PlainDatabase, entry: &CorpusEntry) -> DiffReport {
    let start = Instant::now();
    let outcome = diff_inner(owner, store, db, &entry.sql).unwrap_or_else(DiffOutcome::Error);
    DiffReport { name: entry.name.clone(), sql: entry.sql.clone(), outcome, elapsed: start.elapsed() }
}

fn diff_inner(owner: &mut Owner, store: &mut EncryptedStore, db: &mut PlainDatabase, text: &str) -> Result<DiffOutcome, String> {
    let tokens = sql::tokenize(text).map_err(|e| format!("lex: {e}"))?;
    let parsed = sql::parse_statement(&tokens).map_err(|e| format!("parse: {e}"))?;
    let stmt = sql::validate_statement(&parsed, owner.manifest(), OWNER_PRINCIPAL).map_err(|e| format!("validate: {e}"))?;
    let expected = oracle::run_statement(owner.manifest(), db, &stmt).map_err(|e| format!("reference: {e}"))?;
    let actual = owner.run(store, text, OWNER_PRINCIPAL).map_err(|e| format!("encrypted pipeline ({}): {e}", e.stage()))?;
    match expected {
        OracleOutcome::Rows(exp) => {
            let got = actual.result.ok_or("encrypted pipeline returned no rows")?;
            if got.headers.len() != exp.headers.len() {
                return Err(format!("arity {} vs reference {}", got.headers.len(), exp.headers.len()));
            }
            Ok(DiffOutcome::Query(compare_results(&exp, &got)))
        }
        OracleOutcome::Affected(n) => {
            let table = target_table(&stmt).expect("mutation");
            let decrypted = owner.decrypt_table(store, table).map_err(|e| format!("decrypt {table}: {e}"))?;
            let mut a = PlainDatabase::new();
            a.insert(table.to_string(), decrypted);
            let mut b = PlainDatabase::new();
            b.insert(table.to_string(), db.get(table).cloned().unwrap_or_default());
            Ok(DiffOutcome::Mutation {
                expected: n,
                actual: actual.affected.unwrap_or(0),
                table_matches: oracle::databases_equal(&a, &b),
            })
        }
    }
}

/// Runs every entry in order.
pub fn run_differential(
    owner: &mut Owner,
    store: &mut EncryptedStore,
    db: &mut PlainDatabase,
    entries: &[CorpusEntry],
) -> Vec<DiffReport> {
    entries.iter().map(|e| diff_statement(owner, store, db, e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_splits_into_named_entries() {
        let entries = parse_corpus(DIFFERENTIAL_SQL);
        assert!(entries.len() >= 48);
        assert!(entries.iter().all(|e| e.sql.trim_end().ends_with(';')));
        let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), entries.len(), "duplicate entry names");
    }
}
