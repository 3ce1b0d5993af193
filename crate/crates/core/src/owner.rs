//! The data owner: encrypts tables, drives queries through the cloud and
//! decrypts what comes back.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use cipherdb_cloud::{
    execute_plan, sum_equality_com, CipherCell, CipherPlan, CloudError, ColumnDef, EncryptedResultSet,
    EncryptedStore, EncryptedTable, ExecOutcome, Slot,
};
use num_bigint::BigUint;
use num_rational::Ratio;
use thiserror::Error;

use crate::codec::{self, CodecError, EncodingRule};
use crate::keyring::{KeyError, KeyRing};
use crate::manifest::Manifest;
use crate::opea::{self, DomainKey, OpeaError};
use crate::rng::{self, CipherRng};
use crate::sql::{self, SqlError, Statement};
use crate::translator::{self, OutputColumn, ResultMapping, TranslateError, Translation};
use crate::value::{ResultTable, Value};

/// Plaintext tables keyed by manifest table name; rows follow the manifest
/// column order.
pub type PlainDatabase = BTreeMap<String, Vec<Vec<Value>>>;

#[derive(Debug, Error)]
pub enum OwnerError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Opea(#[from] OpeaError),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("row of {table} has {got} values, expected {expected}")]
    Arity { table: String, expected: usize, got: usize },
    #[error("encrypted sums decrypt to inconsistent bounds {lower}..{upper}")]
    InconsistentSum { lower: u64, upper: u64 },
    #[error("no probe confirmed a sum between {lower} and {upper}")]
    SumNotFound { lower: u64, upper: u64 },
    #[error("group of {count} rows exceeds the domain's group bound {limit}")]
    GroupTooLarge { count: u64, limit: u64 },
    #[error("malformed result: {0}")]
    Result(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

/// Outcome of the sum-decryption protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SumDecryption {
    /// Sum of the plaintext codes.
    pub value: u64,
    /// Bounds from decrypting the two sums.
    pub lower: u64,
    pub upper: u64,
    /// `SumEqualityCom` probes sent to the cloud.
    pub probes: u32,
}

/// Decrypts a sum of standard ciphertexts with the help of the matching
/// sum of extension ciphertexts. Standard decryption of `sum` gives a
/// lower bound `d`, extended decryption of `ext` an upper bound `d'`, with
/// `d' - d <= 2`; when that does not settle the value, `probe(L[v], U'[v])`
/// asks the cloud for `SumEqualityCom` at candidate `v`.
pub fn secure_sum(
    key: &DomainKey,
    sum: &BigUint,
    ext: &BigUint,
    mut probe: impl FnMut(&BigUint, &BigUint) -> Result<i8, CloudError>,
) -> Result<SumDecryption, OwnerError> {
    let lower = opea::decrypt(key, sum)?;
    let upper = match opea::decrypt_ext(key, ext) {
        Ok(v) => v,
        Err(OpeaError::AboveDomain(_)) => key.t_max() + 1,
        Err(e) => return Err(e.into()),
    };
    if upper < lower || upper - lower > 2 {
        return Err(OwnerError::InconsistentSum { lower, upper });
    }
    let settled = |value| SumDecryption { value, lower, upper, probes: 0 };
    match upper - lower {
        0 => return Ok(settled(lower)),
        2 => return Ok(settled(lower + 1)),
        _ => {}
    }
    for (sent, v) in (lower..=upper.min(key.t_max())).enumerate() {
        let l = opea::boundary_pair(key, v)?.lower;
        let u = opea::ext_boundary_pair(key, v)?.upper;
        if probe(&l, &u)? == 0 {
            return Ok(SumDecryption { value: v, lower, upper, probes: sent as u32 + 1 });
        }
    }
    Err(OwnerError::SumNotFound { lower, upper })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Lex,
    Parse,
    Validate,
    Translate,
    Execute,
    Decrypt,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Lex => "lex",
            Stage::Parse => "parse",
            Stage::Validate => "validate",
            Stage::Translate => "translate",
            Stage::Execute => "execute",
            Stage::Decrypt => "decrypt",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Decrypt(#[from] OwnerError),
}

impl QueryError {
    pub fn stage(&self) -> Stage {
        match self {
            QueryError::Sql(SqlError::Lex { .. }) => Stage::Lex,
            QueryError::Sql(SqlError::Parse { .. }) => Stage::Parse,
            QueryError::Sql(_) => Stage::Validate,
            QueryError::Translate(TranslateError::Sql(_)) => Stage::Validate,
            QueryError::Translate(_) => Stage::Translate,
            QueryError::Cloud(_) => Stage::Execute,
            QueryError::Decrypt(_) => Stage::Decrypt,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QueryOutcome {
    /// Decrypted rows for queries.
    pub result: Option<ResultTable>,
    /// Rows touched by INSERT/UPDATE/DELETE.
    pub affected: Option<u64>,
    pub plan: CipherPlan,
    pub timings: Vec<(Stage, Duration)>,
}

/// Owner-side state: manifest, keys and the randomness for encryption.
pub struct Owner {
    manifest: Manifest,
    keys: KeyRing,
    rng: CipherRng,
}

impl Owner {
    pub fn new(manifest: Manifest, keys: KeyRing, rng: CipherRng) -> Self {
        Owner { manifest, keys, rng }
    }

    /// Fresh keys from a seed, for tests and experiments.
    pub fn from_seed(manifest: Manifest, seed: u64) -> Result<Self, OwnerError> {
        let mut r = rng::seeded(seed);
        let master = KeyRing::generate_master(&mut r);
        let keys = KeyRing::derive(master, &manifest)?;
        Ok(Owner { manifest, keys, rng: r })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn keys(&self) -> &KeyRing {
        &self.keys
    }

    pub fn rng(&mut self) -> &mut CipherRng {
        &mut self.rng
    }

    pub fn encrypt_database(&mut self, db: &PlainDatabase) -> Result<EncryptedStore, OwnerError> {
        for name in db.keys() {
            if self.manifest.table(name).is_none() {
                return Err(OwnerError::UnknownTable(name.clone()));
            }
        }
        let mut store = EncryptedStore::default();
        for info in &self.manifest.tables {
            let columns: Vec<ColumnDef> = translator::stored_columns(info, &self.keys)
                .into_iter()
                .map(|(name, kind)| ColumnDef { name, kind })
                .collect();
            let extensions = info
                .columns
                .iter()
                .filter(|c| c.extension)
                .map(|c| self.keys.anon_column(&info.name, &c.name))
                .collect();
            let mut rows = Vec::new();
            for row in db.get(&info.name).map(Vec::as_slice).unwrap_or(&[]) {
                if row.len() != info.columns.len() {
                    return Err(OwnerError::Arity { table: info.name.clone(), expected: info.columns.len(), got: row.len() });
                }
                let mut cells = Vec::with_capacity(columns.len());
                for (spec, v) in info.columns.iter().zip(row) {
                    let key = self.keys.domain(&spec.domain)?;
                    let cell = codec::encrypt_cell(spec, key, v, &mut self.rng)?;
                    cells.push(cell.base);
                    cells.extend(cell.ext);
                }
                rows.push(cells);
            }
            store.insert_table(EncryptedTable { name: self.keys.anon_table(&info.name), columns, extensions, rows });
        }
        Ok(store)
    }

    /// Decrypts one table of the store.
    pub fn decrypt_table(&self, store: &EncryptedStore, table: &str) -> Result<Vec<Vec<Value>>, OwnerError> {
        let info = self.manifest.table(table).ok_or_else(|| OwnerError::UnknownTable(table.to_string()))?;
        let t = store.table(&self.keys.anon_table(&info.name))?;
        let mut idx = Vec::new();
        for c in &info.columns {
            let name = self.keys.anon_column(&info.name, &c.name);
            idx.push(t.column_index(&name).ok_or(CloudError::MissingColumn(name))?);
        }
        let mut rows = Vec::with_capacity(t.rows.len());
        for r in &t.rows {
            let mut vals = Vec::with_capacity(idx.len());
            for (spec, &i) in info.columns.iter().zip(&idx) {
                vals.push(codec::decrypt_cell(spec, self.keys.domain(&spec.domain)?, &r[i])?);
            }
            rows.push(vals);
        }
        Ok(rows)
    }

    /// Decrypts every table of the store back into plaintext.
    pub fn decrypt_store(&self, store: &EncryptedStore) -> Result<PlainDatabase, OwnerError> {
        let mut out = PlainDatabase::new();
        for info in &self.manifest.tables {
            out.insert(info.name.clone(), self.decrypt_table(store, &info.name)?);
        }
        Ok(out)
    }

    /// Lexes, parses, validates and translates one statement.
    pub fn prepare(
        &mut self,
        text: &str,
        principal: &str,
        timings: &mut Vec<(Stage, Duration)>,
    ) -> Result<(Statement, Translation), QueryError> {
        let t = Instant::now();
        let tokens = sql::tokenize(text)?;
        timings.push((Stage::Lex, t.elapsed()));
        let t = Instant::now();
        let parsed = sql::parse_statement(&tokens)?;
        timings.push((Stage::Parse, t.elapsed()));
        let t = Instant::now();
        let stmt = sql::validate_statement(&parsed, &self.manifest, principal)?;
        timings.push((Stage::Validate, t.elapsed()));
        let t = Instant::now();
        let tr = translator::translate(&stmt, &self.manifest, &self.keys, &mut self.rng)?;
        timings.push((Stage::Translate, t.elapsed()));
        Ok((stmt, tr))
    }

    /// Runs one statement end to end against `store`.
    pub fn run(&mut self, store: &mut EncryptedStore, text: &str, principal: &str) -> Result<QueryOutcome, QueryError> {
        let mut timings = Vec::new();
        let (_, tr) = self.prepare(text, principal, &mut timings)?;
        let t = Instant::now();
        let outcome = execute_plan(store, &tr.plan)?;
        timings.push((Stage::Execute, t.elapsed()));
        let t = Instant::now();
        let (result, affected) = match outcome {
            ExecOutcome::Rows(rs) => (Some(self.decrypt_result(&tr.mapping, &rs)?), None),
            ExecOutcome::Affected(n) => (None, Some(n)),
        };
        timings.push((Stage::Decrypt, t.elapsed()));
        Ok(QueryOutcome { result, affected, plan: tr.plan, timings })
    }

    pub fn decrypt_result(&self, mapping: &ResultMapping, rs: &EncryptedResultSet) -> Result<ResultTable, OwnerError> {
        let width: usize = mapping.columns.iter().map(OutputColumn::width).sum();
        if rs.columns.len() != width {
            return Err(OwnerError::Result(format!("{} columns, mapping needs {width}", rs.columns.len())));
        }
        let mut rows = Vec::with_capacity(rs.rows.len());
        for r in &rs.rows {
            let mut vals = Vec::with_capacity(mapping.columns.len());
            let mut i = 0;
            for col in &mapping.columns {
                vals.push(self.decrypt_output(col, &r[i..i + col.width()])?);
                i += col.width();
            }
            rows.push(vals);
        }
        let headers = mapping.columns.iter().map(|c| c.header().to_string()).collect();
        Ok(ResultTable { headers, rows, ordered: mapping.ordered })
    }

    fn decrypt_output(&self, col: &OutputColumn, slots: &[Slot]) -> Result<Value, OwnerError> {
        let spec_of = |table: &str, column: &str| {
            self.manifest
                .table(table)
                .and_then(|t| t.column(column))
                .ok_or_else(|| OwnerError::UnknownTable(format!("{table}.{column}")))
        };
        match col {
            OutputColumn::Cell { table, column, .. } => {
                let spec = spec_of(table, column)?;
                match &slots[0] {
                    Slot::Null => Ok(Value::Null),
                    Slot::Cell(c) => Ok(codec::decrypt_cell(spec, self.keys.domain(&spec.domain)?, c)?),
                    other => Err(OwnerError::Result(format!("expected a cell, got {other:?}"))),
                }
            }
            OutputColumn::Count { .. } => match &slots[0] {
                Slot::Count(n) => Ok(Value::Int(i128::from(*n))),
                other => Err(OwnerError::Result(format!("expected a count, got {other:?}"))),
            },
            OutputColumn::Sum { table, column, avg, .. } => {
                let spec = spec_of(table, column)?;
                let (Slot::Cell(CipherCell::Int(sum)), Slot::Cell(CipherCell::Int(ext)), Slot::Count(n)) =
                    (&slots[0], &slots[1], &slots[2])
                else {
                    return Err(OwnerError::Result("malformed sum columns".into()));
                };
                if *n == 0 {
                    return Ok(Value::Null);
                }
                let key = self.keys.domain(&spec.domain)?;
                let limit = self.manifest.domain(&spec.domain).map_or(1, |d| d.max_group);
                if *n > limit {
                    return Err(OwnerError::GroupTooLarge { count: *n, limit });
                }
                let d = secure_sum(key, sum, ext, |l, u| sum_equality_com(sum, ext, l, u))?;
                debug_assert_eq!(spec.rule, EncodingRule::Numeric);
                let units = i128::from(d.value) - i128::from(*n) * spec.offset;
                let scale = spec.sem.scale();
                Ok(if *avg {
                    Value::Ratio(Ratio::new(units, i128::from(*n) * 10i128.pow(scale)))
                } else if scale == 0 {
                    Value::Int(units)
                } else {
                    Value::Decimal { units, scale }
                })
            }
        }
    }
}
