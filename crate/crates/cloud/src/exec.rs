use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;
use num_traits::Zero;

use crate::cell::{CipherCell, Slot, StorageKind};
use crate::plan::*;
use crate::store::EncryptedStore;
use crate::udf::{compare_cells, equality_com, split_encoded, sum_equality_com, FUZZY_DELIMITER};
use crate::{CloudError, Result};

/// An intermediate or final relation: named columns over slots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncryptedResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Slot>>,
}

impl EncryptedResultSet {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CloudError::MissingColumn(name.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExecOutcome {
    Rows(EncryptedResultSet),
    Affected(u64),
}

type Relation = EncryptedResultSet;

enum StoreRef<'a> {
    Read(&'a EncryptedStore),
    Write(&'a mut EncryptedStore),
}

impl StoreRef<'_> {
    fn get(&self) -> &EncryptedStore {
        match self {
            StoreRef::Read(s) => s,
            StoreRef::Write(s) => s,
        }
    }

    fn get_mut(&mut self) -> Result<&mut EncryptedStore> {
        match self {
            StoreRef::Read(_) => Err(CloudError::ReadOnly),
            StoreRef::Write(s) => Ok(s),
        }
    }
}

/// Runs a plan, applying any row mutations to `store`.
pub fn execute_plan(store: &mut EncryptedStore, plan: &CipherPlan) -> Result<ExecOutcome> {
    Executor::new(StoreRef::Write(store), plan).run()
}

/// Runs a plan that must not mutate the store.
pub fn execute_read(store: &EncryptedStore, plan: &CipherPlan) -> Result<ExecOutcome> {
    if !plan.is_read_only() {
        return Err(CloudError::ReadOnly);
    }
    Executor::new(StoreRef::Read(store), plan).run()
}

struct Executor<'a> {
    store: StoreRef<'a>,
    plan: &'a CipherPlan,
    env: HashMap<String, Relation>,
    affected: u64,
}

/// A row seen through a join: left slots followed by right slots.
#[derive(Clone, Copy)]
struct RowView<'r> {
    a: &'r [Slot],
    b: &'r [Slot],
}

impl<'r> RowView<'r> {
    fn one(a: &'r [Slot]) -> Self {
        RowView { a, b: &[] }
    }

    fn get(&self, i: usize) -> &'r Slot {
        if i < self.a.len() {
            &self.a[i]
        } else {
            &self.b[i - self.a.len()]
        }
    }
}

enum COp {
    Col(usize),
    Value(Slot),
}

enum CCount {
    Col(usize),
    Value(Option<u64>),
}

enum CPred<'p> {
    Const(bool),
    And(Vec<CPred<'p>>),
    Or(Vec<CPred<'p>>),
    Cmp { x: &'p BigUint, kind: CmpKind, l: COp, r: COp, test: Test },
    SumCmp { s: usize, e: usize, c: usize, targets: &'p SumTargets, test: Test },
    CountCmp { l: CCount, r: CCount, test: Test },
    Flag { col: usize, value: bool },
}

static NULL_CELL: std::sync::LazyLock<CipherCell> =
    std::sync::LazyLock::new(|| CipherCell::Int(BigUint::zero()));

fn slot_cell<'s>(slot: &'s Slot, what: &str) -> Result<&'s CipherCell> {
    match slot {
        Slot::Cell(c) => Ok(c),
        Slot::Null => Ok(&NULL_CELL),
        _ => Err(CloudError::SlotType(what.to_string())),
    }
}

fn slot_int<'s>(slot: &'s Slot, what: &str) -> Result<&'s BigUint> {
    match slot {
        Slot::Cell(CipherCell::Int(v)) => Ok(v),
        Slot::Null => Ok(NULL_CELL.as_int().expect("int")),
        _ => Err(CloudError::SlotType(what.to_string())),
    }
}

fn slot_count(slot: &Slot, what: &str) -> Result<Option<u64>> {
    match slot {
        Slot::Count(n) => Ok(Some(*n)),
        Slot::Null => Ok(None),
        _ => Err(CloudError::SlotType(what.to_string())),
    }
}

fn eval_target(target: &SumTarget, sum: &BigUint, ext: &BigUint) -> Result<i8> {
    match target {
        SumTarget::Known(r) => Ok(*r),
        SumTarget::Single { lo, hi } => Ok(if sum < lo {
            -1
        } else if sum > hi {
            1
        } else {
            0
        }),
        SumTarget::Probe { l, u_ext } => sum_equality_com(sum, ext, l, u_ext),
        SumTarget::Between(floor) => Ok(if eval_target(floor, sum, ext)? <= 0 { -1 } else { 1 }),
    }
}

impl CPred<'_> {
    fn eval(&self, row: RowView<'_>) -> Result<bool> {
        match self {
            CPred::Const(b) => Ok(*b),
            CPred::And(ps) => {
                for p in ps {
                    if !p.eval(row)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            CPred::Or(ps) => {
                for p in ps {
                    if p.eval(row)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            CPred::Cmp { x, kind, l, r, test } => {
                let a = match l {
                    COp::Col(i) => row.get(*i),
                    COp::Value(s) => s,
                };
                let b = match r {
                    COp::Col(i) => row.get(*i),
                    COp::Value(s) => s,
                };
                let res = compare_cells(x, *kind, slot_cell(a, "comparison")?, slot_cell(b, "comparison")?)?;
                Ok(test.holds(res))
            }
            CPred::SumCmp { s, e, c, targets, test } => {
                let count = slot_count(row.get(*c), "sum count")?.unwrap_or(0);
                if count == 0 {
                    return Ok(false);
                }
                let sum = slot_int(row.get(*s), "sum")?;
                let ext = slot_int(row.get(*e), "extension sum")?;
                let target = match targets {
                    SumTargets::Uniform { single, multi, max_count } => {
                        if count > *max_count {
                            return Err(CloudError::SumGroupTooLarge { count, limit: *max_count });
                        }
                        if count == 1 {
                            single
                        } else {
                            multi
                        }
                    }
                    SumTargets::PerCount(v) => v.get(count as usize - 1).ok_or(
                        CloudError::SumGroupTooLarge { count, limit: v.len() as u64 },
                    )?,
                };
                Ok(test.holds(eval_target(target, sum, ext)?))
            }
            CPred::CountCmp { l, r, test } => {
                let get = |o: &CCount| -> Result<Option<u64>> {
                    match o {
                        CCount::Col(i) => slot_count(row.get(*i), "count"),
                        CCount::Value(v) => Ok(*v),
                    }
                };
                match (get(l)?, get(r)?) {
                    (Some(a), Some(b)) => Ok(test.holds(match a.cmp(&b) {
                        Ordering::Less => -1,
                        Ordering::Equal => 0,
                        Ordering::Greater => 1,
                    })),
                    _ => Ok(false),
                }
            }
            CPred::Flag { col, value } => match row.get(*col) {
                Slot::Flag(b) => Ok(b == value),
                _ => Err(CloudError::SlotType("match flag".into())),
            },
        }
    }
}

impl<'a> Executor<'a> {
    fn new(store: StoreRef<'a>, plan: &'a CipherPlan) -> Self {
        Executor { store, plan, env: HashMap::new(), affected: 0 }
    }

    fn run(mut self) -> Result<ExecOutcome> {
        for step in &self.plan.steps {
            self.step(step)?;
        }
        let outcome = match &self.plan.output {
            PlanOutput::Relation(name) => ExecOutcome::Rows(self.take(name)?),
            PlanOutput::Affected | PlanOutput::Nothing => ExecOutcome::Affected(self.affected),
        };
        if let Some(name) = self.env.keys().find(|k| k.starts_with('#')) {
            return Err(CloudError::LeakedTemp(name.clone()));
        }
        Ok(outcome)
    }

    fn rel(&self, name: &str) -> Result<&Relation> {
        self.env.get(name).ok_or_else(|| CloudError::MissingRelation(name.to_string()))
    }

    fn take(&mut self, name: &str) -> Result<Relation> {
        self.env.remove(name).ok_or_else(|| CloudError::MissingRelation(name.to_string()))
    }

    fn put(&mut self, name: &str, rel: Relation) -> Result<()> {
        if self.env.contains_key(name) {
            return Err(CloudError::DuplicateRelation(name.to_string()));
        }
        self.env.insert(name.to_string(), rel);
        Ok(())
    }

    fn threshold(&self, i: usize) -> Result<&'a BigUint> {
        self.plan
            .thresholds
            .get(i)
            .ok_or_else(|| CloudError::Format(format!("threshold index {i} out of range")))
    }

    fn scalar(&self, name: &str) -> Result<Slot> {
        let rel = self.rel(name)?;
        if rel.columns.len() != 1 {
            return Err(CloudError::ScalarColumns(name.to_string()));
        }
        match rel.rows.len() {
            0 => Ok(Slot::Null),
            1 => Ok(rel.rows[0][0].clone()),
            n => Err(CloudError::ScalarRows(name.to_string(), n)),
        }
    }

    fn compile(&self, pred: &'a Pred, columns: &[String]) -> Result<CPred<'a>> {
        let col = |name: &str| {
            columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| CloudError::MissingColumn(name.to_string()))
        };
        let operand = |o: &Operand| -> Result<COp> {
            Ok(match o {
                Operand::Column(n) => COp::Col(col(n)?),
                Operand::Literal(c) => COp::Value(Slot::Cell(c.clone())),
                Operand::Scalar(r) => COp::Value(self.scalar(r)?),
            })
        };
        let count = |o: &CountOperand| -> Result<CCount> {
            Ok(match o {
                CountOperand::Column(n) => CCount::Col(col(n)?),
                CountOperand::Value(v) => CCount::Value(Some(*v)),
                CountOperand::Scalar(r) => CCount::Value(slot_count(&self.scalar(r)?, "scalar count")?),
            })
        };
        Ok(match pred {
            Pred::Const(b) => CPred::Const(*b),
            Pred::And(ps) => CPred::And(ps.iter().map(|p| self.compile(p, columns)).collect::<Result<_>>()?),
            Pred::Or(ps) => CPred::Or(ps.iter().map(|p| self.compile(p, columns)).collect::<Result<_>>()?),
            Pred::Cmp { threshold, kind, left, right, test } => CPred::Cmp {
                x: self.threshold(*threshold)?,
                kind: *kind,
                l: operand(left)?,
                r: operand(right)?,
                test: *test,
            },
            Pred::SumCmp { sum, ext, count: c, targets, test } => CPred::SumCmp {
                s: col(sum)?,
                e: col(ext)?,
                c: col(c)?,
                targets,
                test: *test,
            },
            Pred::CountCmp { left, right, test } => {
                CPred::CountCmp { l: count(left)?, r: count(right)?, test: *test }
            }
            Pred::Flag { column, value } => CPred::Flag { col: col(column)?, value: *value },
            Pred::Exists { relation, negated } => {
                CPred::Const(self.rel(relation)?.rows.is_empty() == *negated)
            }
        })
    }

    fn step(&mut self, step: &'a Step) -> Result<()> {
        match step {
            Step::Scan { table, row_ids, into } => {
                let t = self.store.get().table(table)?;
                let mut columns: Vec<String> =
                    t.columns.iter().map(|c| format!("{}.{}", t.name, c.name)).collect();
                if *row_ids {
                    columns.push(format!("{}.#rowid", t.name));
                }
                let rows = t
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let mut row: Vec<Slot> = r.iter().cloned().map(Slot::Cell).collect();
                        if *row_ids {
                            row.push(Slot::RowId(i));
                        }
                        row
                    })
                    .collect();
                self.put(into, Relation { columns, rows })
            }
            Step::Join { left, right, kind, on, into } => {
                let rel = self.join(left, right, *kind, on.as_ref())?;
                self.put(into, rel)
            }
            Step::Filter { input, pred, into } => {
                let rel = self.rel(input)?;
                let p = self.compile(pred, &rel.columns)?;
                let mut rows = Vec::new();
                for row in &rel.rows {
                    if p.eval(RowView::one(row))? {
                        rows.push(row.clone());
                    }
                }
                let out = Relation { columns: rel.columns.clone(), rows };
                self.put(into, out)
            }
            Step::MatchLike { input, column, threshold, program, flag, into } => {
                let x = self.threshold(*threshold)?;
                let rel = self.rel(input)?;
                let ci = rel.column_index(column)?;
                let mut out = Relation { columns: rel.columns.clone(), rows: Vec::with_capacity(rel.rows.len()) };
                out.columns.push(flag.clone());
                for row in &rel.rows {
                    let m = match &row[ci] {
                        Slot::Null => false,
                        Slot::Cell(c) if c.is_null() => false,
                        Slot::Cell(CipherCell::Text(t)) => {
                            let mut parts = split_encoded(t, FUZZY_DELIMITER)?;
                            let blanks = parts.pop().expect("non-empty split");
                            let blanks: usize = blanks
                                .try_into()
                                .map_err(|_| CloudError::MalformedCell(t.clone()))?;
                            run_match(x, program, &parts, blanks)
                        }
                        _ => return Err(CloudError::SlotType("LIKE on non-text cell".into())),
                    };
                    let mut r = row.clone();
                    r.push(Slot::Flag(m));
                    out.rows.push(r);
                }
                self.put(into, out)
            }
            Step::Canonicalize { input, column, threshold, kind, group_column, into } => {
                let x = self.threshold(*threshold)?;
                let rel = self.rel(input)?;
                let ci = rel.column_index(column)?;
                let reps = canonical_reps(x, *kind, &rel.rows, ci)?;
                let mut out = Relation { columns: rel.columns.clone(), rows: Vec::with_capacity(rel.rows.len()) };
                out.columns.push(group_column.clone());
                for (row, rep) in rel.rows.iter().zip(reps) {
                    let mut r = row.clone();
                    let slot = &rel.rows[rep][ci];
                    r.push(if slot.is_null() { Slot::Null } else { slot.clone() });
                    out.rows.push(r);
                }
                self.put(into, out)
            }
            Step::GroupAggregate { input, keys, aggs, into } => {
                let rel = self.rel(input)?;
                let out = group_aggregate(rel, keys, aggs, &self.plan.thresholds)?;
                self.put(into, out)
            }
            Step::Sort { input, keys, into } => {
                let rel = self.rel(input)?;
                let mut compiled = Vec::new();
                for k in keys {
                    compiled.push((rel.column_index(&k.column)?, self.threshold(k.threshold)?, k.kind, k.descending));
                }
                let err: RefCell<Option<CloudError>> = RefCell::new(None);
                let mut rows = rel.rows.clone();
                rows.sort_by(|a, b| {
                    for &(ci, x, kind, desc) in &compiled {
                        let r = match slot_compare(x, kind, &a[ci], &b[ci]) {
                            Ok(r) => r,
                            Err(e) => {
                                err.borrow_mut().get_or_insert(e);
                                0
                            }
                        };
                        let r = if desc { -r } else { r };
                        if r != 0 {
                            return if r < 0 { Ordering::Less } else { Ordering::Greater };
                        }
                    }
                    Ordering::Equal
                });
                if let Some(e) = err.into_inner() {
                    return Err(e);
                }
                let out = Relation { columns: rel.columns.clone(), rows };
                self.put(into, out)
            }
            Step::Project { input, columns, into } => {
                let rel = self.rel(input)?;
                let idx = columns.iter().map(|(src, _)| rel.column_index(src)).collect::<Result<Vec<_>>>()?;
                let rows = rel.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
                let out = Relation { columns: columns.iter().map(|(_, o)| o.clone()).collect(), rows };
                self.put(into, out)
            }
            Step::SetOp { left, right, op, columns, into } => {
                let out = self.set_op(left, right, *op, columns)?;
                self.put(into, out)
            }
            Step::CreateTemp { name, from } => {
                let rel = self.take(from)?;
                self.put(name, rel)
            }
            Step::DropTemp { name } => self.take(name).map(|_| ()),
            Step::InsertRows { table, columns, source } => self.insert(table, columns, source),
            Step::UpdateRows { table, input, row_id, assignments } => {
                self.update(table, input, row_id, assignments)
            }
            Step::DeleteRows { table, input, row_id } => {
                let rel = self.rel(input)?;
                let ri = rel.column_index(row_id)?;
                let ids: HashSet<usize> = rel
                    .rows
                    .iter()
                    .filter_map(|r| match r[ri] {
                        Slot::RowId(id) => Some(id),
                        _ => None,
                    })
                    .collect();
                let t = self.store.get_mut()?.table_mut(table)?;
                let mut i = 0;
                t.rows.retain(|_| {
                    let keep = !ids.contains(&i);
                    i += 1;
                    keep
                });
                self.affected += ids.len() as u64;
                Ok(())
            }
        }
    }

    fn join(&self, left: &str, right: &str, kind: JoinKind, on: Option<&'a Pred>) -> Result<Relation> {
        let l = self.rel(left)?;
        let r = self.rel(right)?;
        let mut columns = l.columns.clone();
        columns.extend(r.columns.iter().cloned());
        let pred = match on {
            Some(p) => Some(self.compile(p, &columns)?),
            None => None,
        };
        let band = match on {
            Some(p) => self.band_key(p, &columns, l.columns.len())?,
            None => None,
        };
        // Sorted right-side keys for the band search.
        let index: Option<Vec<(BigUint, usize)>> = match &band {
            Some((_, ri, _)) => {
                let mut v = Vec::with_capacity(r.rows.len());
                for (j, row) in r.rows.iter().enumerate() {
                    v.push((slot_int(&row[*ri], "join key")?.clone(), j));
                }
                v.sort();
                Some(v)
            }
            None => None,
        };
        let mut rows = Vec::new();
        let mut right_matched = vec![false; r.rows.len()];
        let null_right = vec![Slot::Null; r.columns.len()];
        for lrow in &l.rows {
            let mut matched = false;
            let mut candidates: Vec<usize> = match (&band, &index) {
                (Some((li, _, x)), Some(idx)) => {
                    let c = slot_int(&lrow[*li], "join key")?;
                    let lo = if c > *x { c - *x } else { BigUint::zero() };
                    let hi = c + *x;
                    let start = idx.partition_point(|(v, _)| *v < lo);
                    idx[start..].iter().take_while(|(v, _)| *v <= hi).map(|&(_, j)| j).collect()
                }
                _ => (0..r.rows.len()).collect(),
            };
            candidates.sort_unstable();
            for j in candidates {
                let rrow = &r.rows[j];
                let ok = match &pred {
                    Some(p) => p.eval(RowView { a: lrow, b: rrow })?,
                    None => true,
                };
                if ok {
                    matched = true;
                    right_matched[j] = true;
                    let mut row = lrow.clone();
                    row.extend(rrow.iter().cloned());
                    rows.push(row);
                }
            }
            if !matched && matches!(kind, JoinKind::Left | JoinKind::Full) {
                let mut row = lrow.clone();
                row.extend(null_right.iter().cloned());
                rows.push(row);
            }
        }
        if matches!(kind, JoinKind::Right | JoinKind::Full) {
            for (j, rrow) in r.rows.iter().enumerate() {
                if !right_matched[j] {
                    let mut row = vec![Slot::Null; l.columns.len()];
                    row.extend(rrow.iter().cloned());
                    rows.push(row);
                }
            }
        }
        Ok(Relation { columns, rows })
    }

    /// Finds an integer equality conjunct linking the two join sides, which
    /// lets the join search a sorted band `[c - x, c + x]` instead of every
    /// right row. Results are identical to the nested loop.
    fn band_key(&self, pred: &Pred, columns: &[String], split: usize) -> Result<Option<(usize, usize, &'a BigUint)>> {
        let conjuncts: Vec<&Pred> = match pred {
            Pred::And(ps) => ps.iter().collect(),
            p => vec![p],
        };
        for p in conjuncts {
            if let Pred::Cmp {
                threshold,
                kind: CmpKind::Integer,
                left: Operand::Column(a),
                right: Operand::Column(b),
                test: Test::Eq,
            } = p
            {
                let ia = columns.iter().position(|c| c == a);
                let ib = columns.iter().position(|c| c == b);
                if let (Some(ia), Some(ib)) = (ia, ib) {
                    let x = self.threshold(*threshold)?;
                    if ia < split && ib >= split {
                        return Ok(Some((ia, ib - split, x)));
                    }
                    if ib < split && ia >= split {
                        return Ok(Some((ib, ia - split, x)));
                    }
                }
            }
        }
        Ok(None)
    }

    fn set_op(&self, left: &str, right: &str, op: SetOpKind, kinds: &[(usize, CmpKind)]) -> Result<Relation> {
        let l = self.rel(left)?;
        let r = self.rel(right)?;
        if l.columns.len() != r.columns.len() {
            return Err(CloudError::ArityMismatch { left: l.columns.len(), right: r.columns.len() });
        }
        if kinds.len() != l.columns.len() {
            return Err(CloudError::ArityMismatch { left: l.columns.len(), right: kinds.len() });
        }
        let kinds: Vec<(&BigUint, CmpKind)> =
            kinds.iter().map(|(t, k)| Ok((self.threshold(*t)?, *k))).collect::<Result<_>>()?;
        let row_eq = |p: &[Slot], q: &[Slot]| -> Result<bool> {
            for ((a, b), (x, k)) in p.iter().zip(q).zip(&kinds) {
                if slot_compare(x, *k, a, b)? != 0 {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        let any_eq = |p: &[Slot], set: &[Vec<Slot>]| -> Result<bool> {
            for q in set {
                if row_eq(p, q)? {
                    return Ok(true);
                }
            }
            Ok(false)
        };
        let mut rows: Vec<Vec<Slot>> = Vec::new();
        match op {
            SetOpKind::Union => {
                for p in l.rows.iter().chain(&r.rows) {
                    if !any_eq(p, &rows)? {
                        rows.push(p.clone());
                    }
                }
            }
            SetOpKind::Intersect => {
                for p in &l.rows {
                    if any_eq(p, &r.rows)? {
                        rows.push(p.clone());
                    }
                }
            }
            SetOpKind::Except => {
                for p in &l.rows {
                    if !any_eq(p, &r.rows)? {
                        rows.push(p.clone());
                    }
                }
            }
        }
        Ok(Relation { columns: l.columns.clone(), rows })
    }

    fn insert(&mut self, table: &str, columns: &[String], source: &InsertSource) -> Result<()> {
        let t = self.store.get().table(table)?;
        let targets = columns
            .iter()
            .map(|c| t.column_index(c).ok_or_else(|| CloudError::MissingColumn(c.clone())))
            .collect::<Result<Vec<_>>>()?;
        let kinds: Vec<StorageKind> = t.columns.iter().map(|c| c.kind).collect();
        let blank: Vec<CipherCell> = kinds.iter().map(|k| CipherCell::null(*k)).collect();
        let mut new_rows = Vec::new();
        match source {
            InsertSource::Values(rows) => {
                for vals in rows {
                    if vals.len() != targets.len() {
                        return Err(CloudError::ArityMismatch { left: targets.len(), right: vals.len() });
                    }
                    let mut row = blank.clone();
                    for (&ti, v) in targets.iter().zip(vals) {
                        row[ti] = v.clone();
                    }
                    new_rows.push(row);
                }
            }
            InsertSource::Relation { name, columns: srcs } => {
                let rel = self.rel(name)?;
                if srcs.len() != targets.len() {
                    return Err(CloudError::ArityMismatch { left: targets.len(), right: srcs.len() });
                }
                let idx = srcs
                    .iter()
                    .map(|s| s.as_ref().map(|n| rel.column_index(n)).transpose())
                    .collect::<Result<Vec<_>>>()?;
                for r in &rel.rows {
                    let mut row = blank.clone();
                    for (&ti, si) in targets.iter().zip(&idx) {
                        if let Some(si) = si {
                            row[ti] = match &r[*si] {
                                Slot::Cell(c) => c.clone(),
                                Slot::Null => CipherCell::null(kinds[ti]),
                                _ => return Err(CloudError::SlotType("insert source".into())),
                            };
                        }
                    }
                    new_rows.push(row);
                }
            }
        }
        for row in &new_rows {
            for (cell, kind) in row.iter().zip(&kinds) {
                if cell.kind() != *kind {
                    return Err(CloudError::SlotType(format!("insert into {table}")));
                }
            }
        }
        self.affected += new_rows.len() as u64;
        self.store.get_mut()?.table_mut(table)?.rows.extend(new_rows);
        Ok(())
    }

    fn update(&mut self, table: &str, input: &str, row_id: &str, assignments: &[(String, AssignValue)]) -> Result<()> {
        let rel = self.rel(input)?;
        let ri = rel.column_index(row_id)?;
        let t = self.store.get().table(table)?;
        let mut compiled = Vec::new();
        for (col, val) in assignments {
            let ti = t.column_index(col).ok_or_else(|| CloudError::MissingColumn(col.clone()))?;
            let src = match val {
                AssignValue::Column(c) => Some(rel.column_index(c)?),
                _ => None,
            };
            compiled.push((ti, val, src));
        }
        let kinds: Vec<StorageKind> = t.columns.iter().map(|c| c.kind).collect();
        let mut seen = HashSet::new();
        let mut changes: Vec<(usize, usize, CipherCell)> = Vec::new();
        for row in &rel.rows {
            let Slot::RowId(id) = row[ri] else { continue };
            if !seen.insert(id) {
                continue;
            }
            for (ti, val, src) in &compiled {
                let cell = match val {
                    AssignValue::Cell(c) => c.clone(),
                    AssignValue::Null => CipherCell::null(kinds[*ti]),
                    AssignValue::Column(_) => match &row[src.expect("resolved")] {
                        Slot::Cell(c) => c.clone(),
                        Slot::Null => CipherCell::null(kinds[*ti]),
                        _ => return Err(CloudError::SlotType("update source".into())),
                    },
                };
                if cell.kind() != kinds[*ti] {
                    return Err(CloudError::SlotType(format!("update of {table}")));
                }
                changes.push((id, *ti, cell));
            }
        }
        let t = self.store.get_mut()?.table_mut(table)?;
        for (id, ti, cell) in changes {
            let row = t.rows.get_mut(id).ok_or_else(|| CloudError::Format(format!("row id {id}")))?;
            row[ti] = cell;
        }
        self.affected += seen.len() as u64;
        Ok(())
    }
}

fn slot_compare(x: &BigUint, kind: CmpKind, a: &Slot, b: &Slot) -> Result<i8> {
    match (a, b) {
        (Slot::Count(p), Slot::Count(q)) => Ok(match p.cmp(q) {
            Ordering::Less => -1,
            Ordering::Equal => 0,
            Ordering::Greater => 1,
        }),
        _ => compare_cells(x, kind, slot_cell(a, "compare")?, slot_cell(b, "compare")?),
    }
}

/// For each row, the index of the first row whose cell is equal to it
/// under `EqualityCom`.
fn canonical_reps(x: &BigUint, kind: CmpKind, rows: &[Vec<Slot>], ci: usize) -> Result<Vec<usize>> {
    if kind == CmpKind::Integer {
        // Equal under EqualityCom exactly when within the band [c - x, c + x].
        let mut sorted = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            sorted.push((slot_int(&r[ci], "group key")?.clone(), i));
        }
        sorted.sort();
        let mut reps = vec![0; rows.len()];
        for (pos, (c, i)) in sorted.iter().enumerate() {
            let lo = if c > x { c - x } else { BigUint::zero() };
            let hi = c + x;
            let start = sorted[..=pos].partition_point(|(v, _)| *v < lo);
            let first = sorted[start..]
                .iter()
                .take_while(|(v, _)| *v <= hi)
                .map(|&(_, j)| j)
                .min()
                .expect("band contains the row itself");
            reps[*i] = first;
        }
        return Ok(reps);
    }
    // Plaintext equality is transitive, so the first row of a class is the
    // first row equal to any member.
    let mut firsts: Vec<usize> = Vec::new();
    let mut reps = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let cell = slot_cell(&r[ci], "group key")?;
        let mut found = None;
        for &f in &firsts {
            if compare_cells(x, kind, slot_cell(&rows[f][ci], "group key")?, cell)? == 0 {
                found = Some(f);
                break;
            }
        }
        let rep = found.unwrap_or_else(|| {
            firsts.push(i);
            i
        });
        reps.push(rep);
    }
    Ok(reps)
}

fn group_aggregate(rel: &Relation, keys: &[String], aggs: &[AggSpec], thresholds: &[BigUint]) -> Result<Relation> {
    let key_idx = keys.iter().map(|k| rel.column_index(k)).collect::<Result<Vec<_>>>()?;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut lookup: HashMap<Vec<Slot>, usize> = HashMap::new();
    for (i, row) in rel.rows.iter().enumerate() {
        let key: Vec<Slot> = key_idx
            .iter()
            .map(|&k| if row[k].is_null() { Slot::Null } else { row[k].clone() })
            .collect();
        let g = *lookup.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    if keys.is_empty() && groups.is_empty() {
        groups.push(Vec::new());
    }
    let mut columns: Vec<String> = keys.to_vec();
    for a in aggs {
        let expected = if a.func == AggFunc::SumPair { 3 } else { 1 };
        if a.into.len() != expected {
            return Err(CloudError::Format(format!("aggregate {:?} needs {expected} outputs", a.func)));
        }
        columns.extend(a.into.iter().cloned());
    }
    let mut rows = Vec::with_capacity(groups.len());
    for members in &groups {
        let mut out: Vec<Slot> = match members.first() {
            Some(&f) => key_idx.iter().map(|&k| rel.rows[f][k].clone()).collect(),
            None => Vec::new(),
        };
        for a in aggs {
            let ci = match &a.column {
                Some(c) => Some(rel.column_index(c)?),
                None => None,
            };
            let cells = || members.iter().map(move |&m| &rel.rows[m][ci.expect("aggregate column")]);
            match a.func {
                AggFunc::CountRows => out.push(Slot::Count(members.len() as u64)),
                AggFunc::Count => out.push(Slot::Count(cells().filter(|s| !s.is_null()).count() as u64)),
                AggFunc::Min | AggFunc::Max => {
                    let x = thresholds
                        .get(a.threshold)
                        .ok_or_else(|| CloudError::Format(format!("threshold index {} out of range", a.threshold)))?;
                    let mut best: Option<&CipherCell> = None;
                    for s in cells() {
                        if s.is_null() {
                            continue;
                        }
                        let c = slot_cell(s, "min/max")?;
                        best = Some(match best {
                            None => c,
                            Some(b) => {
                                let ord = compare_cells(x, a.kind, c, b)?;
                                let better = if a.func == AggFunc::Min { ord < 0 } else { ord > 0 };
                                if better {
                                    c
                                } else {
                                    b
                                }
                            }
                        });
                    }
                    out.push(best.map_or(Slot::Null, |c| Slot::Cell(c.clone())));
                }
                AggFunc::SumPair => {
                    let ei = rel.column_index(a.ext_column.as_deref().ok_or_else(|| {
                        CloudError::Format("SUM without extension column".into())
                    })?)?;
                    let mut sum = BigUint::zero();
                    let mut ext = BigUint::zero();
                    let mut n = 0u64;
                    for &m in members {
                        let row = &rel.rows[m];
                        let s = &row[ci.expect("sum column")];
                        if s.is_null() {
                            continue;
                        }
                        sum += slot_int(s, "sum")?;
                        ext += slot_int(&row[ei], "extension sum")?;
                        n += 1;
                    }
                    out.push(Slot::Cell(CipherCell::Int(sum)));
                    out.push(Slot::Cell(CipherCell::Int(ext)));
                    out.push(Slot::Count(n));
                }
            }
        }
        rows.push(out);
    }
    Ok(Relation { columns, rows })
}

fn run_match(x: &BigUint, program: &MatchProgram, codes: &[BigUint], blanks: usize) -> bool {
    let n = codes.len() + blanks;
    if n < program.min_len {
        return false;
    }
    let atom_at = |atom: &MatchAtom, pos: usize| -> bool {
        if pos < codes.len() {
            let c = &codes[pos];
            let eq = |cell: &CipherCell| cell.as_int().is_some_and(|e| equality_com(x, c, e) == 0);
            match atom {
                MatchAtom::Literal { cipher, .. } => cipher.as_ref().is_some_and(eq),
                MatchAtom::AnyOne => true,
                MatchAtom::Class { members, negated, .. } => members.iter().any(eq) != *negated,
            }
        } else {
            match atom {
                MatchAtom::Literal { blank, .. } => *blank,
                MatchAtom::AnyOne => true,
                MatchAtom::Class { negated, blank, .. } => *blank != *negated,
            }
        }
    };
    let seg_at = |seg: &MatchSegment, start: usize| seg.atoms.iter().enumerate().all(|(i, a)| atom_at(a, start + i));
    let mut lo = 0;
    let mut hi = n;
    for seg in &program.segments {
        let len = seg.atoms.len();
        match seg.anchor {
            SegmentAnchor::Whole => {
                if n != len || !seg_at(seg, 0) {
                    return false;
                }
                lo = n;
            }
            SegmentAnchor::Start => {
                if len > hi || !seg_at(seg, 0) {
                    return false;
                }
                lo = len;
            }
            SegmentAnchor::End => {
                if n < len || n - len < lo || !seg_at(seg, n - len) {
                    return false;
                }
                hi = n - len;
            }
            SegmentAnchor::Floating => {}
        }
    }
    for seg in program.segments.iter().filter(|s| s.anchor == SegmentAnchor::Floating) {
        let len = seg.atoms.len();
        let mut found = None;
        let mut p = lo;
        while p + len <= hi {
            if seg_at(seg, p) {
                found = Some(p);
                break;
            }
            p += 1;
        }
        match found {
            Some(p) => lo = p + len,
            None => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ColumnDef, EncryptedTable};

    fn int(v: u64) -> CipherCell {
        CipherCell::Int(BigUint::from(v))
    }

    fn store_with(rows: Vec<Vec<CipherCell>>) -> EncryptedStore {
        let mut s = EncryptedStore::default();
        let ncols = rows.first().map_or(1, |r| r.len());
        s.insert_table(EncryptedTable {
            name: "t".into(),
            columns: (0..ncols).map(|i| ColumnDef { name: format!("c{i}"), kind: StorageKind::Int }).collect(),
            extensions: vec![],
            rows,
        });
        s
    }

    #[test]
    fn filter_keeps_equal_partition() {
        // K1: E(1) in [100, 101], E(2) in [202, 203].
        let store = store_with(vec![vec![int(101)], vec![int(202)]]);
        let plan = CipherPlan {
            thresholds: vec![BigUint::from(50u32)],
            steps: vec![
                Step::Scan { table: "t".into(), row_ids: false, into: "$0".into() },
                Step::Filter {
                    input: "$0".into(),
                    pred: Pred::Cmp {
                        threshold: 0,
                        kind: CmpKind::Integer,
                        left: Operand::Column("t.c0".into()),
                        right: Operand::Literal(int(203)),
                        test: Test::Eq,
                    },
                    into: "$1".into(),
                },
            ],
            output: PlanOutput::Relation("$1".into()),
        };
        let ExecOutcome::Rows(rs) = execute_read(&store, &plan).unwrap() else { panic!() };
        assert_eq!(rs.rows, vec![vec![Slot::Cell(int(202))]]);
    }

    #[test]
    fn empty_table_gives_empty_result() {
        let mut store = store_with(vec![]);
        store.tables.get_mut("t").unwrap().rows.clear();
        let plan = CipherPlan {
            thresholds: vec![BigUint::from(50u32)],
            steps: vec![Step::Scan { table: "t".into(), row_ids: false, into: "$0".into() }],
            output: PlanOutput::Relation("$0".into()),
        };
        let ExecOutcome::Rows(rs) = execute_read(&store, &plan).unwrap() else { panic!() };
        assert!(rs.rows.is_empty());
    }

    #[test]
    fn canonicalize_picks_first_equal_row() {
        let rows = vec![
            vec![Slot::Cell(int(203))],
            vec![Slot::Cell(int(101))],
            vec![Slot::Cell(int(202))],
            vec![Slot::Cell(int(100))],
        ];
        let reps = canonical_reps(&BigUint::from(50u32), CmpKind::Integer, &rows, 0).unwrap();
        assert_eq!(reps, vec![0, 1, 0, 1]);
        let text_rows: Vec<Vec<Slot>> = ["09892", "09995", "09893"]
            .iter()
            .map(|s| vec![Slot::Cell(CipherCell::Text(s.to_string()))])
            .collect();
        let reps = canonical_reps(&BigUint::from(50u32), CmpKind::Fixed { width: 5 }, &text_rows, 0).unwrap();
        assert_eq!(reps, vec![0, 1, 0]);
    }

    #[test]
    fn leaked_temp_is_reported() {
        let store = store_with(vec![vec![int(100)]]);
        let plan = CipherPlan {
            thresholds: vec![],
            steps: vec![
                Step::Scan { table: "t".into(), row_ids: false, into: "$0".into() },
                Step::CreateTemp { name: "#INTER_TABLE2".into(), from: "$0".into() },
            ],
            output: PlanOutput::Nothing,
        };
        assert!(matches!(execute_read(&store, &plan), Err(CloudError::LeakedTemp(_))));
    }

    #[test]
    fn read_only_rejects_mutation() {
        let store = store_with(vec![vec![int(100)]]);
        let plan = CipherPlan {
            thresholds: vec![],
            steps: vec![Step::InsertRows {
                table: "t".into(),
                columns: vec!["c0".into()],
                source: InsertSource::Values(vec![vec![int(202)]]),
            }],
            output: PlanOutput::Affected,
        };
        assert!(matches!(execute_read(&store, &plan), Err(CloudError::ReadOnly)));
    }

    fn lit(v: u64) -> MatchAtom {
        MatchAtom::Literal { cipher: Some(int(v)), blank: false }
    }

    fn program(segments: Vec<(SegmentAnchor, Vec<MatchAtom>)>) -> MatchProgram {
        let min_len = segments.iter().map(|s| s.1.len()).sum();
        MatchProgram {
            segments: segments.into_iter().map(|(anchor, atoms)| MatchSegment { anchor, atoms }).collect(),
            min_len,
        }
    }

    #[test]
    fn match_program_segments() {
        // Codes 1..=5 encrypted under K1 as L[t] = 102t - 2.
        let x = BigUint::from(50u32);
        let e = |t: u64| BigUint::from(102 * t - 2);
        let s: Vec<BigUint> = [1, 2, 3, 2, 5].iter().map(|&t| e(t)).collect();
        let p = program(vec![(SegmentAnchor::Start, vec![lit(100)]), (SegmentAnchor::End, vec![lit(508)])]);
        assert!(run_match(&x, &p, &s, 0));
        assert!(!run_match(&x, &p, &s, 1));
        let p = program(vec![(SegmentAnchor::Floating, vec![lit(202), lit(304)])]);
        assert!(run_match(&x, &p, &s, 0));
        let p = program(vec![(SegmentAnchor::Floating, vec![lit(304), lit(100)])]);
        assert!(!run_match(&x, &p, &s, 0));
        let p = program(vec![(
            SegmentAnchor::End,
            vec![MatchAtom::AnyOne, MatchAtom::Literal { cipher: None, blank: true }],
        )]);
        assert!(run_match(&x, &p, &s, 1));
        assert!(!run_match(&x, &p, &s, 0));
    }
}
