//! Rewrites validated statements into ciphertext plans.
//!
//! Column values are compared with `EqualityCom` under one threshold per
//! domain, LIKE runs as a ciphertext matcher, SUM/AVG comparisons become
//! `SumEqualityCom` probes against precomputed partition boundaries, and
//! COUNT stays in the clear. The owner receives a [`ResultMapping`] telling
//! how to decrypt each output column.

mod like;
mod render;

use std::collections::{BTreeSet, HashMap, HashSet};

use cipherdb_cloud::{
    AggFunc, AggSpec, AssignValue, CipherCell, CipherPlan, CmpKind, CountOperand, InsertSource as PlanInsert,
    JoinKind, Operand, PlanOutput, Pred, SortKey, Step, StorageKind, SumTarget, SumTargets, Test,
};
use num_bigint::BigUint;
use num_rational::Ratio;
use rand::RngCore;
use thiserror::Error;

use crate::codec::{self, CodecError, ColumnSpec, EncodingRule};
use crate::keyring::{KeyError, KeyRing};
use crate::manifest::{Manifest, TableInfo};
use crate::opea::{self, DomainKey, OpeaError};
use crate::sql::{self, ast::*, literal_value, parse_like_pattern, SqlError};
use crate::value::parse_scaled;

pub use like::compile_like;
pub use render::render_plan;

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Opea(#[from] OpeaError),
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error("SUM/AVG of {column} compared with {value}: code sum {code_sum} exceeds the supported maximum {limit}")]
    SumRange { column: String, value: String, code_sum: i128, limit: u64 },
}

type TResult<T> = Result<T, TranslateError>;

fn unsupported<T>(msg: impl Into<String>) -> TResult<T> {
    Err(SqlError::UnsupportedFeature(sql::Feature::Other(msg.into())).into())
}

/// How the owner turns one output position back into plaintext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutputColumn {
    /// A stored cell of `table.column`.
    Cell { header: String, table: String, column: String },
    /// A plaintext count.
    Count { header: String },
    /// Three relation columns: sum of ciphertexts, sum of extension
    /// ciphertexts, non-NULL count.
    Sum { header: String, table: String, column: String, avg: bool },
}

impl OutputColumn {
    pub fn header(&self) -> &str {
        match self {
            OutputColumn::Cell { header, .. } | OutputColumn::Count { header } | OutputColumn::Sum { header, .. } => {
                header
            }
        }
    }

    /// Number of relation columns consumed.
    pub fn width(&self) -> usize {
        match self {
            OutputColumn::Sum { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResultMapping {
    pub columns: Vec<OutputColumn>,
    /// The query has ORDER BY, so row order is significant.
    pub ordered: bool,
}

#[derive(Clone, Debug)]
pub struct Translation {
    pub plan: CipherPlan,
    pub mapping: ResultMapping,
}

pub fn storage_kind(spec: &ColumnSpec) -> StorageKind {
    match spec.rule {
        EncodingRule::Numeric | EncodingRule::Packed => StorageKind::Int,
        EncodingRule::Fuzzy | EncodingRule::Fixed { .. } => StorageKind::Text,
    }
}

pub fn cmp_kind(spec: &ColumnSpec) -> CmpKind {
    match spec.rule {
        EncodingRule::Numeric | EncodingRule::Packed => CmpKind::Integer,
        EncodingRule::Fuzzy => CmpKind::Fuzzy,
        EncodingRule::Fixed { width } => CmpKind::Fixed { width },
    }
}

/// Anonymized stored columns of a table in store order: each column,
/// followed by its extension companion when it has one.
pub fn stored_columns(info: &TableInfo, keys: &KeyRing) -> Vec<(String, StorageKind)> {
    let mut out = Vec::new();
    for c in &info.columns {
        out.push((keys.anon_column(&info.name, &c.name), storage_kind(c)));
        if c.extension {
            out.push((keys.anon_extension(&info.name, &c.name), StorageKind::Int));
        }
    }
    out
}

/// Translates a statement that has passed [`sql::validate_statement`].
pub fn translate(stmt: &Statement, manifest: &Manifest, keys: &KeyRing, rng: &mut impl RngCore) -> TResult<Translation> {
    let mut t = Translator {
        m: manifest,
        keys,
        rng,
        thresholds: Vec::new(),
        domain_idx: HashMap::new(),
        steps: Vec::new(),
        columns: HashMap::new(),
        next: 0,
        live_temps: HashSet::new(),
        group_temps: 0,
    };
    let (output, mapping) = match stmt {
        Statement::Select(q) => t.top_select(q)?,
        Statement::Insert(i) => (t.insert(i)?, ResultMapping::default()),
        Statement::Update(u) => (t.update(u)?, ResultMapping::default()),
        Statement::Delete(d) => (t.delete(d)?, ResultMapping::default()),
    };
    let plan = CipherPlan { thresholds: t.thresholds, steps: t.steps, output };
    Ok(Translation { plan, mapping })
}

/// A translated expression, located in the current relation.
#[derive(Clone)]
enum Op<'m> {
    Cell { operand: Operand, spec: &'m ColumnSpec, table: String, nullable: bool },
    Lit(Literal),
    Count(CountOperand),
    Sum { sum: String, ext: String, count: String, spec: &'m ColumnSpec, table: String, avg: bool },
}

enum Scope<'m> {
    Plain,
    /// Grouped relation: rendered expression to its output columns.
    Grouped(HashMap<String, Op<'m>>),
}

struct Cx<'s, 'm> {
    /// Relations the predicate reads; LIKE matchers are added to the one
    /// holding the column, which renames it.
    sides: Vec<String>,
    scope: &'s Scope<'m>,
    padded: &'s HashSet<String>,
    level: usize,
    /// Subquery temps to drop once the consuming step has run.
    temps: Vec<String>,
}

struct Translator<'m, 'r, R> {
    m: &'m Manifest,
    keys: &'m KeyRing,
    rng: &'r mut R,
    thresholds: Vec<BigUint>,
    domain_idx: HashMap<String, usize>,
    steps: Vec<Step>,
    columns: HashMap<String, Vec<String>>,
    next: usize,
    live_temps: HashSet<String>,
    group_temps: usize,
}

fn cmp_test(op: CmpOp) -> Test {
    match op {
        CmpOp::Eq => Test::Eq,
        CmpOp::Ne => Test::Ne,
        CmpOp::Lt => Test::Lt,
        CmpOp::Le => Test::Le,
        CmpOp::Gt => Test::Gt,
        CmpOp::Ge => Test::Ge,
    }
}

fn and(mut preds: Vec<Pred>) -> Pred {
    match preds.len() {
        0 => Pred::Const(true),
        1 => preds.pop().expect("one"),
        _ => Pred::And(preds),
    }
}

fn or(mut preds: Vec<Pred>) -> Pred {
    match preds.len() {
        0 => Pred::Const(false),
        1 => preds.pop().expect("one"),
        _ => Pred::Or(preds),
    }
}

fn conjuncts<'c>(c: &'c Cond, out: &mut Vec<&'c Cond>) {
    match c {
        Cond::And(l, r) => {
            conjuncts(l, out);
            conjuncts(r, out);
        }
        other => out.push(other),
    }
}

fn expr_tables(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Column(c) => {
            if let Some(t) = &c.table {
                out.insert(t.clone());
            }
        }
        Expr::Aggregate { arg, .. } => expr_tables(arg, out),
        Expr::Arith { left, right, .. } => {
            expr_tables(left, out);
            expr_tables(right, out);
        }
        Expr::Neg(x) => expr_tables(x, out),
        Expr::Star => {}
        Expr::Function { args, .. } => args.iter().for_each(|a| expr_tables(a, out)),
        Expr::Literal(_) | Expr::Subquery(_) => {}
    }
}

/// Tables referenced directly by a condition; uncorrelated subqueries
/// contribute none.
fn cond_tables(c: &Cond, out: &mut BTreeSet<String>) {
    match c {
        Cond::And(l, r) | Cond::Or(l, r) => {
            cond_tables(l, out);
            cond_tables(r, out);
        }
        Cond::Compare { left, right, .. } => {
            expr_tables(left, out);
            expr_tables(right, out);
        }
        Cond::Between { expr, low, high, .. } => {
            expr_tables(expr, out);
            expr_tables(low, out);
            expr_tables(high, out);
        }
        Cond::InList { expr, list, .. } => {
            expr_tables(expr, out);
            list.iter().for_each(|e| expr_tables(e, out));
        }
        Cond::IsNull { expr, .. } | Cond::Like { expr, .. } => expr_tables(expr, out),
        Cond::Exists { .. } => {}
    }
}

fn cond_aggregates<'c>(c: &'c Cond, out: &mut Vec<&'c Expr>) {
    let mut visit = |e: &'c Expr| {
        if matches!(e, Expr::Aggregate { .. }) {
            out.push(e);
        }
    };
    match c {
        Cond::And(l, r) | Cond::Or(l, r) => {
            cond_aggregates(l, out);
            cond_aggregates(r, out);
        }
        Cond::Compare { left, right, .. } => {
            visit(left);
            visit(right);
        }
        Cond::Between { expr, low, high, .. } => {
            visit(expr);
            visit(low);
            visit(high);
        }
        Cond::InList { expr, list, .. } => {
            visit(expr);
            list.iter().for_each(visit);
        }
        Cond::IsNull { expr, .. } | Cond::Like { expr, .. } => visit(expr),
        Cond::Exists { .. } => {}
    }
}

/// Exact value of a numeric literal.
fn literal_ratio(text: &str) -> Option<Ratio<i128>> {
    let frac = text.split_once('.').map_or(0, |(_, f)| f.len() as u32);
    let units = parse_scaled(text, frac)?;
    Some(Ratio::new(units, 10i128.checked_pow(frac)?))
}

fn count_literal(l: &Literal) -> TResult<u64> {
    match l {
        Literal::Number(n) => match parse_scaled(n, 0).and_then(|v| u64::try_from(v).ok()) {
            Some(v) => Ok(v),
            None => Err(SqlError::Type(format!("{n} is not a count")).into()),
        },
        _ => Err(SqlError::Type("COUNT compares with a number".into()).into()),
    }
}

/// Where a literal falls relative to a column's stored codes.
enum LitCell {
    Cell(CipherCell),
    /// Below every stored value.
    Below,
    /// Above every stored value.
    Above,
}

impl<'m, R: RngCore> Translator<'m, '_, R> {
    fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn key(&self, domain: &str) -> TResult<&'m DomainKey> {
        Ok(self.keys.domain(domain)?)
    }

    fn threshold(&mut self, domain: &str) -> TResult<usize> {
        if let Some(&i) = self.domain_idx.get(domain) {
            return Ok(i);
        }
        let key = self.key(domain)?;
        self.thresholds.push(opea::pick_equality_threshold(key, self.rng));
        let i = self.thresholds.len() - 1;
        self.domain_idx.insert(domain.to_string(), i);
        Ok(i)
    }

    fn table_info(&self, table: &str) -> &'m TableInfo {
        self.m.table(table).expect("validated table")
    }

    fn spec(&self, c: &ColumnRef) -> (&'m ColumnSpec, String) {
        let table = c.table.as_deref().expect("validated columns are qualified");
        let spec = self.table_info(table).column(&c.column).expect("validated column");
        (spec, table.to_string())
    }

    fn rel_column(&self, table: &str, column: &str) -> String {
        format!("{}.{}", self.keys.anon_table(table), self.keys.anon_column(table, column))
    }

    fn rel_ext(&self, table: &str, column: &str) -> String {
        format!("{}.{}", self.keys.anon_table(table), self.keys.anon_extension(table, column))
    }

    fn row_id_column(&self, table: &str) -> String {
        format!("{}.#rowid", self.keys.anon_table(table))
    }

    fn emit(&mut self, step: Step, into: &str, columns: Vec<String>) {
        self.steps.push(step);
        self.columns.insert(into.to_string(), columns);
    }

    fn cols(&self, rel: &str) -> Vec<String> {
        self.columns.get(rel).cloned().unwrap_or_default()
    }

    fn scan(&mut self, table: &str, row_ids: bool) -> String {
        let info = self.table_info(table);
        let anon = self.keys.anon_table(table);
        let mut columns: Vec<String> =
            stored_columns(info, self.keys).into_iter().map(|(c, _)| format!("{anon}.{c}")).collect();
        if row_ids {
            columns.push(self.row_id_column(table));
        }
        let into = self.fresh("r");
        self.emit(Step::Scan { table: anon, row_ids, into: into.clone() }, &into, columns);
        into
    }

    fn filter(&mut self, input: &str, pred: Pred) -> String {
        let into = self.fresh("r");
        let columns = self.cols(input);
        self.emit(Step::Filter { input: input.to_string(), pred, into: into.clone() }, &into, columns);
        into
    }

    fn join(&mut self, left: &str, right: &str, kind: JoinKind, on: Option<Pred>) -> String {
        let into = self.fresh("r");
        let mut columns = self.cols(left);
        columns.extend(self.cols(right));
        let step = Step::Join { left: left.to_string(), right: right.to_string(), kind, on, into: into.clone() };
        self.emit(step, &into, columns);
        into
    }

    fn project(&mut self, input: &str, columns: Vec<(String, String)>) -> String {
        let into = self.fresh("r");
        let names = columns.iter().map(|(_, o)| o.clone()).collect();
        self.emit(Step::Project { input: input.to_string(), columns, into: into.clone() }, &into, names);
        into
    }

    fn make_temp(&mut self, base: &str, from: &str) -> String {
        let mut name = base.to_string();
        let mut k = 2;
        while self.live_temps.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.live_temps.insert(name.clone());
        let columns = self.columns.remove(from).unwrap_or_default();
        self.emit(Step::CreateTemp { name: name.clone(), from: from.to_string() }, &name, columns);
        name
    }

    fn drop_temps(&mut self, temps: Vec<String>) {
        for name in temps {
            self.live_temps.remove(&name);
            self.columns.remove(&name);
            self.steps.push(Step::DropTemp { name });
        }
    }

    // ---- literals ----

    fn encrypt_literal(&mut self, spec: &ColumnSpec, lit: &Literal) -> TResult<LitCell> {
        let v = literal_value(spec.sem, lit)?;
        let key = self.key(&spec.domain)?;
        if spec.rule == EncodingRule::Numeric {
            let code = spec.scaled_units(&v)? + spec.offset;
            if code < 1 {
                return Ok(LitCell::Below);
            }
            if code > i128::from(key.t()) {
                return Ok(LitCell::Above);
            }
            let c = opea::encrypt(key, code as u64, self.rng)?;
            return Ok(LitCell::Cell(CipherCell::Int(c)));
        }
        Ok(LitCell::Cell(codec::encrypt_cell(spec, key, &v, self.rng)?.base))
    }

    fn null_literal(spec: &ColumnSpec) -> Operand {
        Operand::Literal(CipherCell::null(storage_kind(spec)))
    }

    // ---- operands and predicates ----

    fn operand(&mut self, e: &Expr, cx: &mut Cx<'_, 'm>) -> TResult<Op<'m>> {
        if let Scope::Grouped(map) = cx.scope {
            if matches!(e, Expr::Column(_) | Expr::Aggregate { .. }) {
                let key = sql::render_expr(e);
                return map.get(&key).cloned().ok_or_else(|| SqlError::UnknownIdentifier(key).into());
            }
        }
        match e {
            Expr::Column(c) => {
                let (spec, table) = self.spec(c);
                let nullable = spec.nullable || cx.padded.contains(&table);
                let operand = Operand::Column(self.rel_column(&table, &spec.name));
                Ok(Op::Cell { operand, spec, table, nullable })
            }
            Expr::Literal(l) => Ok(Op::Lit(l.clone())),
            Expr::Subquery(q) => {
                let out = self.select(q, cx.level + 1, None)?;
                let (_, op) = out.items.into_iter().next().expect("scalar subquery has one column");
                let source = match &op {
                    Op::Cell { operand: Operand::Column(n), .. } | Op::Count(CountOperand::Column(n)) => n.clone(),
                    _ => return unsupported("this subquery value"),
                };
                let rel = self.project(&out.rel, vec![(source, "value".to_string())]);
                let temp = self.make_temp(&format!("#INTER_TABLE{}", cx.level + 1), &rel);
                cx.temps.push(temp.clone());
                Ok(match op {
                    Op::Cell { spec, table, .. } => {
                        Op::Cell { operand: Operand::Scalar(temp), spec, table, nullable: true }
                    }
                    _ => Op::Count(CountOperand::Scalar(temp)),
                })
            }
            Expr::Aggregate { .. } | Expr::Star => unsupported("aggregate outside a grouped query"),
            Expr::Function { name, .. } => Err(SqlError::UnsupportedFeature(sql::Feature::BuiltinFunction(name.clone())).into()),
            Expr::Arith { .. } | Expr::Neg(_) => Err(SqlError::UnsupportedFeature(sql::Feature::Arithmetic).into()),
        }
    }

    fn guard(&mut self, op: &Op<'m>) -> TResult<Option<Pred>> {
        match op {
            Op::Cell { operand, spec, nullable: true, .. } => Ok(Some(Pred::Cmp {
                threshold: self.threshold(&spec.domain)?,
                kind: cmp_kind(spec),
                left: operand.clone(),
                right: Self::null_literal(spec),
                test: Test::Ne,
            })),
            _ => Ok(None),
        }
    }

    fn compare(&mut self, a: &Op<'m>, op: CmpOp, b: &Op<'m>) -> TResult<Pred> {
        let test = cmp_test(op);
        match (a, b) {
            (Op::Lit(_), Op::Lit(_)) => unsupported("comparison between two constants"),
            (Op::Lit(_), _) => self.compare(b, op.flip(), a),
            (Op::Cell { operand: l, spec, .. }, Op::Cell { operand: r, .. }) => {
                let mut preds = vec![Pred::Cmp {
                    threshold: self.threshold(&spec.domain)?,
                    kind: cmp_kind(spec),
                    left: l.clone(),
                    right: r.clone(),
                    test,
                }];
                preds.extend(self.guard(a)?);
                preds.extend(self.guard(b)?);
                Ok(and(preds))
            }
            (Op::Cell { operand, spec, .. }, Op::Lit(lit)) => {
                let core = match self.encrypt_literal(spec, lit)? {
                    LitCell::Cell(cell) => Pred::Cmp {
                        threshold: self.threshold(&spec.domain)?,
                        kind: cmp_kind(spec),
                        left: operand.clone(),
                        right: Operand::Literal(cell),
                        test,
                    },
                    LitCell::Below => Pred::Const(test.holds(1)),
                    LitCell::Above => Pred::Const(test.holds(-1)),
                };
                let mut preds = vec![core];
                preds.extend(self.guard(a)?);
                Ok(and(preds))
            }
            (Op::Count(l), Op::Count(r)) => Ok(Pred::CountCmp { left: l.clone(), right: r.clone(), test }),
            (Op::Count(l), Op::Lit(lit)) => {
                Ok(Pred::CountCmp { left: l.clone(), right: CountOperand::Value(count_literal(lit)?), test })
            }
            (Op::Sum { .. }, Op::Lit(Literal::Number(n))) => self.sum_compare(a, test, n),
            _ => unsupported("this comparison"),
        }
    }

    /// Boundary constants for comparing a group's code sum with the
    /// rational `target` when the group has `n` non-NULL rows.
    fn sum_target(&self, key: &DomainKey, target: Ratio<i128>, n: u64, limit_card: u64, what: (&str, &str)) -> TResult<SumTarget> {
        if !target.is_integer() {
            let floor = self.sum_target(key, target.floor(), n, limit_card, what)?;
            return Ok(SumTarget::Between(Box::new(floor)));
        }
        let v = target.to_integer();
        let n_i = i128::from(n);
        // Every stored code is at least 1 and at most T.
        if v < n_i {
            return Ok(SumTarget::Known(1));
        }
        if v > n_i * i128::from(key.t()) {
            return Ok(SumTarget::Known(-1));
        }
        let v = v as u64;
        if n == 1 {
            let b = opea::boundary_pair(key, v)?;
            return Ok(SumTarget::Single { lo: b.lower, hi: b.upper });
        }
        self.probe(key, v, limit_card, what)
    }

    fn probe(&self, key: &DomainKey, v: u64, limit_card: u64, what: (&str, &str)) -> TResult<SumTarget> {
        let limit = opea::max_supported_sum(key, limit_card).min(key.t_max());
        if v > limit {
            return Err(TranslateError::SumRange {
                column: what.0.to_string(),
                value: what.1.to_string(),
                code_sum: i128::from(v),
                limit,
            });
        }
        let l = opea::boundary_pair(key, v)?.lower;
        let u_ext = opea::ext_boundary_pair(key, v)?.upper;
        Ok(SumTarget::Probe { l, u_ext })
    }

    fn sum_compare(&mut self, op: &Op<'m>, test: Test, literal: &str) -> TResult<Pred> {
        let Op::Sum { sum, ext, count, spec, avg, .. } = op else { unreachable!("sum operand") };
        let value = literal_ratio(literal).ok_or_else(|| SqlError::Type(format!("{literal} is not a number")))?;
        let key = self.key(&spec.domain)?;
        let max_group = self.m.domain(&spec.domain).map_or(1, |d| d.max_group);
        let scaled = value * Ratio::from_integer(10i128.pow(spec.sem.scale()));
        let what = (spec.name.as_str(), literal);
        let targets = if !avg && spec.offset == 0 {
            if !scaled.is_integer() {
                return Err(SqlError::Type(format!("{literal} has more decimals than {}", spec.name)).into());
            }
            SumTargets::Uniform {
                single: self.sum_target(key, scaled, 1, max_group, what)?,
                multi: self.uniform_multi(key, scaled, max_group, what)?,
                max_count: max_group,
            }
        } else {
            let mut v = Vec::with_capacity(max_group as usize);
            for n in 1..=max_group {
                let per_row = if *avg { scaled * Ratio::from_integer(i128::from(n)) } else { scaled };
                let code_sum = per_row + Ratio::from_integer(i128::from(n) * spec.offset);
                v.push(self.sum_target(key, code_sum, n, n, what)?);
            }
            SumTargets::PerCount(v)
        };
        Ok(Pred::SumCmp { sum: sum.clone(), ext: ext.clone(), count: count.clone(), targets, test })
    }

    /// Target shared by every group size from 2 to `max_group`.
    fn uniform_multi(&self, key: &DomainKey, v: Ratio<i128>, max_group: u64, what: (&str, &str)) -> TResult<SumTarget> {
        let v = v.to_integer();
        if v < 2 {
            return Ok(SumTarget::Known(1));
        }
        if max_group < 2 {
            return Ok(SumTarget::Known(0));
        }
        if v > i128::from(max_group) * i128::from(key.t()) {
            return Ok(SumTarget::Known(-1));
        }
        self.probe(key, v as u64, max_group, what)
    }

    fn cond(&mut self, c: &Cond, cx: &mut Cx<'_, 'm>) -> TResult<Pred> {
        match c {
            Cond::And(_, _) => {
                let mut parts = Vec::new();
                conjuncts(c, &mut parts);
                let preds = parts.into_iter().map(|p| self.cond(p, cx)).collect::<TResult<Vec<_>>>()?;
                Ok(and(preds))
            }
            Cond::Or(l, r) => {
                let l = self.cond(l, cx)?;
                let r = self.cond(r, cx)?;
                let mut preds = Vec::new();
                for p in [l, r] {
                    match p {
                        Pred::Or(inner) => preds.extend(inner),
                        p => preds.push(p),
                    }
                }
                Ok(or(preds))
            }
            Cond::Compare { left, op, right } => {
                let a = self.operand(left, cx)?;
                let b = self.operand(right, cx)?;
                self.compare(&a, *op, &b)
            }
            Cond::Between { expr, negated, low, high } => {
                let e = self.operand(expr, cx)?;
                let lo = self.operand(low, cx)?;
                let hi = self.operand(high, cx)?;
                if *negated {
                    Ok(or(vec![self.compare(&e, CmpOp::Lt, &lo)?, self.compare(&e, CmpOp::Gt, &hi)?]))
                } else {
                    Ok(and(vec![self.compare(&e, CmpOp::Ge, &lo)?, self.compare(&e, CmpOp::Le, &hi)?]))
                }
            }
            Cond::InList { expr, negated, list } => {
                let e = self.operand(expr, cx)?;
                let mut preds = Vec::new();
                for item in list {
                    let v = self.operand(item, cx)?;
                    preds.push(self.compare(&e, if *negated { CmpOp::Ne } else { CmpOp::Eq }, &v)?);
                }
                Ok(if *negated { and(preds) } else { or(preds) })
            }
            Cond::IsNull { expr, negated } => {
                let e = self.operand(expr, cx)?;
                let test = if *negated { Test::Ne } else { Test::Eq };
                match e {
                    Op::Cell { operand, spec, .. } => Ok(Pred::Cmp {
                        threshold: self.threshold(&spec.domain)?,
                        kind: cmp_kind(spec),
                        left: operand,
                        right: Self::null_literal(spec),
                        test,
                    }),
                    Op::Count(CountOperand::Scalar(rel)) => Ok(Pred::Exists { relation: rel, negated: !*negated }),
                    Op::Count(_) => Ok(Pred::Const(*negated)),
                    Op::Sum { count, .. } => Ok(Pred::CountCmp {
                        left: CountOperand::Column(count),
                        right: CountOperand::Value(0),
                        test,
                    }),
                    Op::Lit(_) => unsupported("IS NULL on a constant"),
                }
            }
            Cond::Like { expr, negated, pattern, escape } => {
                let e = self.operand(expr, cx)?;
                let Op::Cell { operand: Operand::Column(col), spec, .. } = &e else {
                    return unsupported("LIKE on a subquery value");
                };
                let parsed = parse_like_pattern(pattern, *escape)?;
                let key = self.key(&spec.domain)?;
                let program = compile_like(&parsed, spec, key, self.rng)?;
                let threshold = self.threshold(&spec.domain)?;
                let side = cx
                    .sides
                    .iter()
                    .position(|s| self.columns.get(s).is_some_and(|cs| cs.contains(col)))
                    .ok_or_else(|| SqlError::UnknownIdentifier(col.clone()))?;
                let input = cx.sides[side].clone();
                let flag = self.fresh("like");
                let into = self.fresh("r");
                let mut columns = self.cols(&input);
                columns.push(flag.clone());
                let step = Step::MatchLike {
                    input,
                    column: col.clone(),
                    threshold,
                    program,
                    flag: flag.clone(),
                    into: into.clone(),
                };
                self.emit(step, &into, columns);
                cx.sides[side] = into;
                let mut preds = vec![Pred::Flag { column: flag, value: !*negated }];
                if *negated {
                    preds.extend(self.guard(&e)?);
                }
                Ok(and(preds))
            }
            Cond::Exists { negated, query } => {
                let out = self.select(query, cx.level + 1, None)?;
                let temp = self.make_temp(&format!("#INTER_TABLE{}", cx.level + 1), &out.rel);
                cx.temps.push(temp.clone());
                Ok(Pred::Exists { relation: temp, negated: *negated })
            }
        }
    }

    /// Filters `input` by the given conditions.
    fn apply_filter(
        &mut self,
        input: String,
        conds: &[&Cond],
        scope: &Scope<'m>,
        padded: &HashSet<String>,
        level: usize,
    ) -> TResult<String> {
        if conds.is_empty() {
            return Ok(input);
        }
        let mut cx = Cx { sides: vec![input], scope, padded, level, temps: Vec::new() };
        let mut preds = Vec::new();
        for c in conds {
            preds.push(self.cond(c, &mut cx)?);
        }
        let input = cx.sides.pop().expect("one side");
        let out = self.filter(&input, and(preds));
        self.drop_temps(cx.temps);
        Ok(out)
    }

    // ---- FROM and WHERE ----

    fn table_ref(
        &mut self,
        t: &TableRef,
        level: usize,
        row_ids: Option<&str>,
        padded: &mut HashSet<String>,
    ) -> TResult<(String, BTreeSet<String>)> {
        match t {
            TableRef::Table(name) => {
                let rel = self.scan(name, row_ids == Some(name.as_str()));
                Ok((rel, BTreeSet::from([name.clone()])))
            }
            TableRef::Join { left, kind, right, on } => {
                let (l, mut tables) = self.table_ref(left, level, row_ids, padded)?;
                let r = self.scan(right, row_ids == Some(right.as_str()));
                match kind {
                    JoinType::Inner => {}
                    JoinType::Left => {
                        padded.insert(right.clone());
                    }
                    JoinType::Right => padded.extend(tables.iter().cloned()),
                    JoinType::Full => {
                        padded.extend(tables.iter().cloned());
                        padded.insert(right.clone());
                    }
                }
                tables.insert(right.clone());
                let scope = Scope::Plain;
                let snapshot = padded.clone();
                let mut cx = Cx { sides: vec![l, r], scope: &scope, padded: &snapshot, level, temps: Vec::new() };
                let pred = self.cond(on, &mut cx)?;
                let (r, l) = (cx.sides.pop().expect("right"), cx.sides.pop().expect("left"));
                let temps = std::mem::take(&mut cx.temps);
                let kind = match kind {
                    JoinType::Inner => JoinKind::Inner,
                    JoinType::Left => JoinKind::Left,
                    JoinType::Right => JoinKind::Right,
                    JoinType::Full => JoinKind::Full,
                };
                let rel = self.join(&l, &r, kind, Some(pred));
                self.drop_temps(temps);
                Ok((rel, tables))
            }
        }
    }

    /// Builds the FROM relation with the WHERE filter applied. Conjuncts
    /// are evaluated as soon as the tables they mention are joined in; the
    /// result equals filtering the full product, in the same row order.
    fn filtered_from(
        &mut self,
        from: &[TableRef],
        where_: Option<&Cond>,
        level: usize,
        row_ids: Option<&str>,
    ) -> TResult<(String, HashSet<String>)> {
        let mut parts = Vec::new();
        if let Some(w) = where_ {
            conjuncts(w, &mut parts);
        }
        let mut pending: Vec<(&Cond, BTreeSet<String>)> = parts
            .into_iter()
            .map(|c| {
                let mut t = BTreeSet::new();
                cond_tables(c, &mut t);
                (c, t)
            })
            .collect();
        let mut padded = HashSet::new();
        let mut acc: Option<(String, BTreeSet<String>)> = None;
        let plain = Scope::Plain;
        for item in from {
            let (rel, tables) = self.table_ref(item, level, row_ids, &mut padded)?;
            let local: Vec<&Cond> = take_covered(&mut pending, &tables);
            let rel = self.apply_filter(rel, &local, &plain, &padded, level)?;
            acc = Some(match acc {
                None => (rel, tables),
                Some((left, mut seen)) => {
                    seen.extend(tables);
                    let linking = take_covered(&mut pending, &seen);
                    let joined = if linking.is_empty() {
                        self.join(&left, &rel, JoinKind::Cross, None)
                    } else {
                        let mut cx =
                            Cx { sides: vec![left, rel], scope: &plain, padded: &padded, level, temps: Vec::new() };
                        let mut preds = Vec::new();
                        for c in &linking {
                            preds.push(self.cond(c, &mut cx)?);
                        }
                        let (r, l) = (cx.sides.pop().expect("right"), cx.sides.pop().expect("left"));
                        let temps = std::mem::take(&mut cx.temps);
                        let out = self.join(&l, &r, JoinKind::Inner, Some(and(preds)));
                        self.drop_temps(temps);
                        out
                    };
                    (joined, seen)
                }
            });
        }
        let (rel, _) = acc.ok_or_else(|| SqlError::Type("empty FROM list".into()))?;
        let rest: Vec<&Cond> = pending.into_iter().map(|(c, _)| c).collect();
        let rel = self.apply_filter(rel, &rest, &plain, &padded, level)?;
        Ok((rel, padded))
    }

    // ---- SELECT ----

    fn select(&mut self, q: &Select, level: usize, row_ids: Option<&str>) -> TResult<SelectOut<'m>> {
        let (rel, padded) = self.filtered_from(&q.from, q.where_.as_ref(), level, row_ids)?;
        let mut aggs: Vec<&Expr> = Vec::new();
        for item in &q.items {
            if let SelectItem::Expr(e @ Expr::Aggregate { .. }) = item {
                aggs.push(e);
            }
        }
        if let Some(h) = &q.having {
            cond_aggregates(h, &mut aggs);
        }
        let aggregated = !q.group_by.is_empty() || q.having.is_some() || !aggs.is_empty();
        let (mut rel, scope) = if aggregated {
            self.group(rel, &q.group_by, &aggs, &padded)?
        } else {
            (rel, Scope::Plain)
        };
        if let Some(h) = &q.having {
            rel = self.apply_filter(rel, &[h], &scope, &padded, level)?;
        }
        if !q.order_by.is_empty() {
            let mut keys = Vec::new();
            let mut cx = Cx { sides: vec![rel.clone()], scope: &scope, padded: &padded, level, temps: Vec::new() };
            for o in &q.order_by {
                let op = self.operand(&Expr::Column(o.column.clone()), &mut cx)?;
                let Op::Cell { operand: Operand::Column(column), spec, .. } = op else {
                    return unsupported("ORDER BY on this expression");
                };
                keys.push(SortKey {
                    column,
                    threshold: self.threshold(&spec.domain)?,
                    kind: cmp_kind(spec),
                    descending: o.direction == Some(Direction::Desc),
                });
            }
            let into = self.fresh("r");
            let columns = self.cols(&rel);
            self.emit(Step::Sort { input: rel, keys, into: into.clone() }, &into, columns);
            rel = into;
        }
        let mut items = Vec::new();
        let mut cx = Cx { sides: vec![rel.clone()], scope: &scope, padded: &padded, level, temps: Vec::new() };
        for item in &q.items {
            match item {
                SelectItem::All => unreachable!("validation expands *"),
                SelectItem::AllOf(t) => {
                    for c in &self.table_info(t).columns {
                        let op = self.operand(&Expr::Column(ColumnRef::new(Some(t), &c.name)), &mut cx)?;
                        items.push((c.name.clone(), op));
                    }
                }
                SelectItem::Expr(e) => {
                    let op = self.operand(e, &mut cx)?;
                    items.push((String::new(), op));
                }
            }
        }
        Ok(SelectOut { rel, items })
    }

    fn group(
        &mut self,
        mut rel: String,
        keys: &[ColumnRef],
        aggs: &[&Expr],
        padded: &HashSet<String>,
    ) -> TResult<(String, Scope<'m>)> {
        let mut map: HashMap<String, Op<'m>> = HashMap::new();
        let mut key_columns = Vec::new();
        for c in keys {
            let (spec, table) = self.spec(c);
            let column = self.rel_column(&table, &spec.name);
            let group_column = format!("{column}_Group");
            let threshold = self.threshold(&spec.domain)?;
            let into = self.fresh("r");
            let mut columns = self.cols(&rel);
            columns.push(group_column.clone());
            let step = Step::Canonicalize {
                input: rel,
                column,
                threshold,
                kind: cmp_kind(spec),
                group_column: group_column.clone(),
                into: into.clone(),
            };
            self.emit(step, &into, columns);
            rel = into;
            let nullable = spec.nullable || padded.contains(&table);
            map.insert(
                sql::render_expr(&Expr::Column(c.clone())),
                Op::Cell { operand: Operand::Column(group_column.clone()), spec, table, nullable },
            );
            key_columns.push(group_column);
        }
        self.group_temps += 1;
        let temp = self.make_temp(&format!("#TEMPORARY_TABLE{}", self.group_temps), &rel);
        let mut specs = Vec::new();
        let mut out_columns = key_columns.clone();
        for e in aggs {
            let key = sql::render_expr(e);
            if map.contains_key(&key) {
                continue;
            }
            let Expr::Aggregate { func, arg } = e else { unreachable!("aggregate") };
            let (agg, op) = match (func, &**arg) {
                (AggFn::Count, Expr::Literal(_) | Expr::Star) => {
                    let into = self.fresh("agg");
                    let spec = AggSpec {
                        func: AggFunc::CountRows,
                        column: None,
                        ext_column: None,
                        kind: CmpKind::Integer,
                        threshold: 0,
                        into: vec![into.clone()],
                    };
                    (spec, Op::Count(CountOperand::Column(into)))
                }
                (_, Expr::Column(c)) => {
                    let (spec, table) = self.spec(c);
                    let column = self.rel_column(&table, &spec.name);
                    let threshold = self.threshold(&spec.domain)?;
                    let kind = cmp_kind(spec);
                    match func {
                        AggFn::Min | AggFn::Max => {
                            let into = self.fresh("agg");
                            let f = if *func == AggFn::Min { AggFunc::Min } else { AggFunc::Max };
                            let a = AggSpec {
                                func: f,
                                column: Some(column),
                                ext_column: None,
                                kind,
                                threshold,
                                into: vec![into.clone()],
                            };
                            (a, Op::Cell { operand: Operand::Column(into), spec, table, nullable: true })
                        }
                        AggFn::Count => {
                            let into = self.fresh("agg");
                            let a = AggSpec {
                                func: AggFunc::Count,
                                column: Some(column),
                                ext_column: None,
                                kind,
                                threshold,
                                into: vec![into.clone()],
                            };
                            (a, Op::Count(CountOperand::Column(into)))
                        }
                        AggFn::Sum | AggFn::Avg => {
                            let sum = self.fresh("agg");
                            let ext = format!("{sum}_Extension");
                            let count = format!("{sum}_Count");
                            let a = AggSpec {
                                func: AggFunc::SumPair,
                                column: Some(column),
                                ext_column: Some(self.rel_ext(&table, &spec.name)),
                                kind,
                                threshold,
                                into: vec![sum.clone(), ext.clone(), count.clone()],
                            };
                            (a, Op::Sum { sum, ext, count, spec, table, avg: *func == AggFn::Avg })
                        }
                    }
                }
                _ => return unsupported("aggregate over this expression"),
            };
            out_columns.extend(agg.into.iter().cloned());
            specs.push(agg);
            map.insert(key, op);
        }
        let into = self.fresh("r");
        let step = Step::GroupAggregate { input: temp.clone(), keys: key_columns, aggs: specs, into: into.clone() };
        self.emit(step, &into, out_columns);
        self.drop_temps(vec![temp]);
        Ok((into, Scope::Grouped(map)))
    }

    fn top_select(&mut self, q: &Select) -> TResult<(PlanOutput, ResultMapping)> {
        let out = self.select(q, 0, None)?;
        let headers = sql::item_headers(&q.items, self.m);
        let mut projection = Vec::new();
        let mut columns = Vec::new();
        for (k, ((_, op), header)) in out.items.iter().zip(headers).enumerate() {
            let name = format!("c{}", k + 1);
            match op {
                Op::Cell { operand: Operand::Column(c), spec, table, .. } => {
                    projection.push((c.clone(), name));
                    columns.push(OutputColumn::Cell { header, table: table.clone(), column: spec.name.clone() });
                }
                Op::Count(CountOperand::Column(c)) => {
                    projection.push((c.clone(), name));
                    columns.push(OutputColumn::Count { header });
                }
                Op::Sum { sum, ext, count, spec, table, avg } => {
                    projection.push((sum.clone(), format!("{name}_sum")));
                    projection.push((ext.clone(), format!("{name}_ext")));
                    projection.push((count.clone(), format!("{name}_count")));
                    columns.push(OutputColumn::Sum {
                        header,
                        table: table.clone(),
                        column: spec.name.clone(),
                        avg: *avg,
                    });
                }
                _ => return unsupported("this select-list item"),
            }
        }
        let rel = self.project(&out.rel, projection);
        Ok((PlanOutput::Relation(rel), ResultMapping { columns, ordered: !q.order_by.is_empty() }))
    }

    // ---- DML ----

    fn insert(&mut self, i: &Insert) -> TResult<PlanOutput> {
        let info = self.table_info(&i.table);
        let specs: Vec<&'m ColumnSpec> = i.columns.iter().map(|c| info.column(c).expect("validated")).collect();
        let mut columns = Vec::new();
        for s in &specs {
            columns.push(self.keys.anon_column(&info.name, &s.name));
            if s.extension {
                columns.push(self.keys.anon_extension(&info.name, &s.name));
            }
        }
        let source = match &i.source {
            InsertSource::Values(rows) => {
                let mut out = Vec::with_capacity(rows.len());
                for row in rows {
                    let mut cells = Vec::with_capacity(columns.len());
                    for (s, e) in specs.iter().zip(row) {
                        let Expr::Literal(l) = e else { return unsupported("non-constant INSERT values") };
                        let v = literal_value(s.sem, l)?;
                        let key = self.key(&s.domain)?;
                        let cell = codec::encrypt_cell(s, key, &v, self.rng)?;
                        cells.push(cell.base);
                        cells.extend(cell.ext);
                    }
                    out.push(cells);
                }
                PlanInsert::Values(out)
            }
            InsertSource::Select(q) => {
                let out = self.select(q, 0, None)?;
                let mut sources = Vec::new();
                for (s, (_, op)) in specs.iter().zip(&out.items) {
                    let Op::Cell { operand: Operand::Column(c), spec: src, table, .. } = op else {
                        return unsupported("aggregates in an INSERT source");
                    };
                    sources.push(Some(c.clone()));
                    if s.extension {
                        if !src.extension {
                            return unsupported(format!(
                                "inserting {} into {}, which needs an extension column",
                                src.name, s.name
                            ));
                        }
                        sources.push(Some(self.rel_ext(table, &src.name)));
                    }
                }
                PlanInsert::Relation { name: out.rel, columns: sources }
            }
        };
        let table = self.keys.anon_table(&info.name);
        self.steps.push(Step::InsertRows { table, columns, source });
        Ok(PlanOutput::Affected)
    }

    fn update(&mut self, u: &Update) -> TResult<PlanOutput> {
        let from = if u.from.is_empty() { vec![TableRef::Table(u.table.clone())] } else { u.from.clone() };
        let (rel, _) = self.filtered_from(&from, u.where_.as_ref(), 0, Some(&u.table))?;
        let info = self.table_info(&u.table);
        let mut assignments = Vec::new();
        for (col, e) in &u.assignments {
            let spec = info.column(col).expect("validated");
            let base = self.keys.anon_column(&info.name, &spec.name);
            let ext = self.keys.anon_extension(&info.name, &spec.name);
            match e {
                Expr::Literal(l) => {
                    let v = literal_value(spec.sem, l)?;
                    let key = self.key(&spec.domain)?;
                    let cell = codec::encrypt_cell(spec, key, &v, self.rng)?;
                    assignments.push((base, AssignValue::Cell(cell.base)));
                    if let Some(x) = cell.ext {
                        assignments.push((ext, AssignValue::Cell(x)));
                    }
                }
                Expr::Column(c) => {
                    let (src, table) = self.spec(c);
                    assignments.push((base, AssignValue::Column(self.rel_column(&table, &src.name))));
                    if spec.extension {
                        if !src.extension {
                            return unsupported(format!(
                                "assigning {} to {}, which needs an extension column",
                                src.name, spec.name
                            ));
                        }
                        assignments.push((ext, AssignValue::Column(self.rel_ext(&table, &src.name))));
                    }
                }
                _ => return unsupported("UPDATE values other than constants and columns"),
            }
        }
        let step = Step::UpdateRows {
            table: self.keys.anon_table(&info.name),
            input: rel,
            row_id: self.row_id_column(&info.name),
            assignments,
        };
        self.steps.push(step);
        Ok(PlanOutput::Affected)
    }

    fn delete(&mut self, d: &Delete) -> TResult<PlanOutput> {
        let from = vec![TableRef::Table(d.table.clone())];
        let (rel, _) = self.filtered_from(&from, d.where_.as_ref(), 0, Some(&d.table))?;
        let step = Step::DeleteRows {
            table: self.keys.anon_table(&d.table),
            input: rel,
            row_id: self.row_id_column(&d.table),
        };
        self.steps.push(step);
        Ok(PlanOutput::Affected)
    }
}

struct SelectOut<'m> {
    rel: String,
    items: Vec<(String, Op<'m>)>,
}

/// Removes and returns the pending conjuncts whose tables are all in
/// `tables` (conjuncts mentioning no table stay for the final filter).
fn take_covered<'c>(pending: &mut Vec<(&'c Cond, BTreeSet<String>)>, tables: &BTreeSet<String>) -> Vec<&'c Cond> {
    let mut taken = Vec::new();
    pending.retain(|(c, t)| {
        if !t.is_empty() && t.is_subset(tables) {
            taken.push(*c);
            false
        } else {
            true
        }
    });
    taken
}
