//! Plaintext reference executor for validated statements, used to check
//! the encrypted pipeline.
//!
//! Conventions shared with the cloud executor, so that results can be
//! compared row by row: joins enumerate left rows in order and, for each,
//! matching right rows in order; LEFT/FULL padding appears in place,
//! unmatched right rows of RIGHT/FULL joins come last; groups appear in
//! order of their first row; ORDER BY is stable with NULL lowest. Everything
//! else is standard SQL with three-valued logic.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use num_rational::Ratio;
use thiserror::Error;

use crate::manifest::Manifest;
use crate::owner::PlainDatabase;
use crate::sql::{ast::*, item_headers, literal_value};
use crate::value::{parse_scaled, ResultTable, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("subquery used as a value returned {0} rows")]
    ScalarRows(usize),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("unsupported in the reference executor: {0}")]
    Unsupported(String),
}

type OResult<T> = Result<T, OracleError>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleOutcome {
    Rows(ResultTable),
    Affected(u64),
}

/// Runs a validated statement; DML modifies `db` in place.
pub fn run_statement(manifest: &Manifest, db: &mut PlainDatabase, stmt: &Statement) -> OResult<OracleOutcome> {
    match stmt {
        Statement::Select(q) => {
            let o = Oracle::new(manifest, db);
            let rows = o.select(q, None)?.rows;
            let headers = item_headers(&q.items, manifest);
            Ok(OracleOutcome::Rows(ResultTable { headers, rows, ordered: !q.order_by.is_empty() }))
        }
        Statement::Insert(i) => {
            let info = manifest.table(&i.table).ok_or_else(|| OracleError::UnknownColumn(i.table.clone()))?;
            let positions: Vec<usize> = i
                .columns
                .iter()
                .map(|c| info.column_index(c).ok_or_else(|| OracleError::UnknownColumn(c.clone())))
                .collect::<OResult<_>>()?;
            let mut new_rows = Vec::new();
            match &i.source {
                InsertSource::Values(rows) => {
                    for r in rows {
                        let mut row = vec![Value::Null; info.columns.len()];
                        for (&p, e) in positions.iter().zip(r) {
                            let Expr::Literal(l) = e else { return Err(OracleError::Unsupported("INSERT value".into())) };
                            row[p] = literal_value(info.columns[p].sem, l)
                                .map_err(|e| OracleError::Unsupported(e.to_string()))?;
                        }
                        new_rows.push(row);
                    }
                }
                InsertSource::Select(q) => {
                    let src = Oracle::new(manifest, db).select(q, None)?;
                    for r in src.rows {
                        let mut row = vec![Value::Null; info.columns.len()];
                        for (&p, v) in positions.iter().zip(r) {
                            row[p] = v;
                        }
                        new_rows.push(row);
                    }
                }
            }
            let n = new_rows.len() as u64;
            db.entry(info.name.clone()).or_default().extend(new_rows);
            Ok(OracleOutcome::Affected(n))
        }
        Statement::Update(u) => {
            let info = manifest.table(&u.table).ok_or_else(|| OracleError::UnknownColumn(u.table.clone()))?;
            let from = if u.from.is_empty() { vec![TableRef::Table(u.table.clone())] } else { u.from.clone() };
            let (rel, changes) = {
                let o = Oracle::new(manifest, db);
                let rel = o.filtered_from(&from, u.where_.as_ref(), Some(&u.table))?;
                let rid = rel.index(ROWID, &u.table)?;
                let mut seen = HashSet::new();
                let mut changes = Vec::new();
                for row in &rel.rows {
                    let Value::Int(id) = row[rid] else { continue };
                    if !seen.insert(id) {
                        continue;
                    }
                    for (c, e) in &u.assignments {
                        let p = info.column_index(c).ok_or_else(|| OracleError::UnknownColumn(c.clone()))?;
                        let v = match e {
                            Expr::Literal(l) => literal_value(info.columns[p].sem, l)
                                .map_err(|e| OracleError::Unsupported(e.to_string()))?,
                            Expr::Column(src) => row[rel.column(src)?].clone(),
                            _ => return Err(OracleError::Unsupported("UPDATE value".into())),
                        };
                        changes.push((id as usize, p, v));
                    }
                }
                (seen.len() as u64, changes)
            };
            let rows = db.entry(info.name.clone()).or_default();
            for (id, p, v) in changes {
                rows[id][p] = v;
            }
            Ok(OracleOutcome::Affected(rel))
        }
        Statement::Delete(d) => {
            let ids: HashSet<i128> = {
                let o = Oracle::new(manifest, db);
                let rel = o.filtered_from(&[TableRef::Table(d.table.clone())], d.where_.as_ref(), Some(&d.table))?;
                let rid = rel.index(ROWID, &d.table)?;
                rel.rows
                    .iter()
                    .filter_map(|r| match r[rid] {
                        Value::Int(i) => Some(i),
                        _ => None,
                    })
                    .collect()
            };
            let rows = db.entry(d.table.clone()).or_default();
            let mut i = 0i128;
            rows.retain(|_| {
                let keep = !ids.contains(&i);
                i += 1;
                keep
            });
            Ok(OracleOutcome::Affected(ids.len() as u64))
        }
    }
}

const ROWID: &str = "#rowid";

#[derive(Clone, Debug, Default)]
struct Rel {
    /// (table, column) per position.
    cols: Vec<(String, String)>,
    rows: Vec<Vec<Value>>,
}

impl Rel {
    fn index(&self, column: &str, table: &str) -> OResult<usize> {
        self.cols
            .iter()
            .position(|(t, c)| t == table && c == column)
            .ok_or_else(|| OracleError::UnknownColumn(format!("{table}.{column}")))
    }

    fn column(&self, c: &ColumnRef) -> OResult<usize> {
        let t = c.table.as_deref().ok_or_else(|| OracleError::UnknownColumn(c.column.clone()))?;
        self.index(&c.column, t)
    }
}

struct Oracle<'a> {
    m: &'a Manifest,
    db: &'a PlainDatabase,
    scalars: RefCell<HashMap<*const Select, Value>>,
    exists: RefCell<HashMap<*const Select, bool>>,
}

/// Evaluation context: one row, or one group of rows.
#[derive(Clone, Copy)]
struct Ctx<'r> {
    cols: &'r [(String, String)],
    row: Option<&'r [Value]>,
    group: Option<&'r [&'r Vec<Value>]>,
}

fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn or3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

fn holds(op: CmpOp, ord: Ordering) -> bool {
    match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

/// SQL comparison; `None` when either side is NULL.
fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    if a.is_null() || b.is_null() {
        return None;
    }
    a.sql_cmp(b)
}

/// Total order for sorting: NULL lowest.
fn sort_cmp(a: &Value, b: &Value) -> Ordering {
    match (a.is_null(), b.is_null()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        _ => a.sql_cmp(b).unwrap_or(Ordering::Equal),
    }
}

/// Grouping key with numeric values normalized.
#[derive(Clone, PartialEq, Eq, Hash)]
enum KeyVal {
    Null,
    Num(Ratio<i128>),
    Text(String),
}

fn key_val(v: &Value) -> KeyVal {
    match v {
        Value::Null => KeyVal::Null,
        Value::Text(s) => KeyVal::Text(s.clone()),
        other => KeyVal::Num(other.as_ratio().expect("numeric")),
    }
}

enum LikeTok {
    Many,
    One,
    Char(char),
    Class(Vec<char>, bool),
}

fn like_tokens(pattern: &str, escape: Option<char>) -> Vec<LikeTok> {
    let chars: Vec<char> = pattern.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if Some(c) == escape && i + 1 < chars.len() {
            out.push(LikeTok::Char(chars[i + 1]));
            i += 2;
            continue;
        }
        match c {
            '%' => out.push(LikeTok::Many),
            '_' => out.push(LikeTok::One),
            '[' => {
                // A ']' directly after '[' or '[^' is a member.
                let mut j = i + 1;
                let neg = chars.get(j) == Some(&'^');
                if neg {
                    j += 1;
                }
                let start = j;
                j += 1;
                while j < chars.len() && chars[j] != ']' {
                    j += 1;
                }
                let body = &chars[start..j.min(chars.len())];
                let mut set = Vec::new();
                let mut k = 0;
                while k < body.len() {
                    if k + 2 < body.len() && body[k + 1] == '-' {
                        let (lo, hi) = (body[k] as u32, body[k + 2] as u32);
                        set.extend((lo..=hi).filter_map(char::from_u32));
                        k += 3;
                    } else {
                        set.push(body[k]);
                        k += 1;
                    }
                }
                out.push(LikeTok::Class(set, neg));
                i = j;
            }
            c => out.push(LikeTok::Char(c)),
        }
        i += 1;
    }
    out
}

/// Dynamic-programming LIKE match over the whole string.
pub fn like_match(text: &str, pattern: &str, escape: Option<char>) -> bool {
    let toks = like_tokens(pattern, escape);
    let s: Vec<char> = text.chars().collect();
    // reach[j]: pattern prefix matches text prefix of length j.
    let mut reach = vec![false; s.len() + 1];
    reach[0] = true;
    for t in &toks {
        let mut next = vec![false; s.len() + 1];
        match t {
            LikeTok::Many => {
                let mut any = false;
                for j in 0..=s.len() {
                    any |= reach[j];
                    next[j] = any;
                }
            }
            _ => {
                for j in 0..s.len() {
                    if reach[j] {
                        let ok = match t {
                            LikeTok::One => true,
                            LikeTok::Char(c) => s[j] == *c,
                            LikeTok::Class(set, neg) => set.contains(&s[j]) != *neg,
                            LikeTok::Many => unreachable!(),
                        };
                        next[j + 1] = ok;
                    }
                }
            }
        }
        reach = next;
    }
    reach[s.len()]
}

fn literal(l: &Literal) -> Value {
    match l {
        Literal::Number(n) => {
            let frac = n.split_once('.').map_or(0, |(_, f)| f.len() as u32);
            let units = parse_scaled(n, frac).expect("validated number");
            Value::Ratio(Ratio::new(units, 10i128.pow(frac)))
        }
        Literal::Str(s) => Value::Text(s.clone()),
        Literal::Null | Literal::Default => Value::Null,
    }
}

fn conjuncts<'c>(c: &'c Cond, out: &mut Vec<&'c Cond>) {
    if let Cond::And(l, r) = c {
        conjuncts(l, out);
        conjuncts(r, out);
    } else {
        out.push(c);
    }
}

fn mentions(c: &Cond) -> BTreeSet<String> {
    fn expr(e: &Expr, out: &mut BTreeSet<String>) {
        match e {
            Expr::Column(c) => {
                out.extend(c.table.clone());
            }
            Expr::Aggregate { arg, .. } => expr(arg, out),
            _ => {}
        }
    }
    fn cond(c: &Cond, out: &mut BTreeSet<String>) {
        match c {
            Cond::And(l, r) | Cond::Or(l, r) => {
                cond(l, out);
                cond(r, out);
            }
            Cond::Compare { left, right, .. } => {
                expr(left, out);
                expr(right, out);
            }
            Cond::Between { expr: e, low, high, .. } => {
                expr(e, out);
                expr(low, out);
                expr(high, out);
            }
            Cond::InList { expr: e, list, .. } => {
                expr(e, out);
                list.iter().for_each(|x| expr(x, out));
            }
            Cond::IsNull { expr: e, .. } | Cond::Like { expr: e, .. } => expr(e, out),
            Cond::Exists { .. } => {}
        }
    }
    let mut out = BTreeSet::new();
    cond(c, &mut out);
    out
}

impl<'a> Oracle<'a> {
    fn new(m: &'a Manifest, db: &'a PlainDatabase) -> Self {
        Oracle { m, db, scalars: RefCell::default(), exists: RefCell::default() }
    }

    fn table(&self, name: &str, row_ids: bool) -> OResult<Rel> {
        let info = self.m.table(name).ok_or_else(|| OracleError::UnknownColumn(name.to_string()))?;
        let mut cols: Vec<(String, String)> = info.columns.iter().map(|c| (name.to_string(), c.name.clone())).collect();
        if row_ids {
            cols.push((name.to_string(), ROWID.to_string()));
        }
        let rows = self
            .db
            .get(name)
            .map(|rows| {
                rows.iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let mut r = r.clone();
                        if row_ids {
                            r.push(Value::Int(i as i128));
                        }
                        r
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Rel { cols, rows })
    }

    /// Joins with `on` evaluated over the concatenated row.
    fn join(&self, l: Rel, r: Rel, kind: Option<JoinType>, on: &[&Cond]) -> OResult<Rel> {
        let mut cols = l.cols.clone();
        cols.extend(r.cols.iter().cloned());
        let mut rows = Vec::new();
        let mut right_hit = vec![false; r.rows.len()];
        for lr in &l.rows {
            let mut hit = false;
            for (j, rr) in r.rows.iter().enumerate() {
                let mut row = lr.clone();
                row.extend(rr.iter().cloned());
                let ctx = Ctx { cols: &cols, row: Some(&row), group: None };
                let mut ok = Some(true);
                for c in on {
                    ok = and3(ok, self.cond(c, ctx)?);
                    if ok == Some(false) {
                        break;
                    }
                }
                if ok == Some(true) {
                    hit = true;
                    right_hit[j] = true;
                    rows.push(row);
                }
            }
            if !hit && matches!(kind, Some(JoinType::Left | JoinType::Full)) {
                let mut row = lr.clone();
                row.extend(std::iter::repeat_n(Value::Null, r.cols.len()));
                rows.push(row);
            }
        }
        if matches!(kind, Some(JoinType::Right | JoinType::Full)) {
            for (j, rr) in r.rows.iter().enumerate() {
                if !right_hit[j] {
                    let mut row = vec![Value::Null; l.cols.len()];
                    row.extend(rr.iter().cloned());
                    rows.push(row);
                }
            }
        }
        Ok(Rel { cols, rows })
    }

    fn table_ref(&self, t: &TableRef, row_ids: Option<&str>) -> OResult<(Rel, BTreeSet<String>)> {
        match t {
            TableRef::Table(n) => Ok((self.table(n, row_ids == Some(n.as_str()))?, BTreeSet::from([n.clone()]))),
            TableRef::Join { left, kind, right, on } => {
                let (l, mut names) = self.table_ref(left, row_ids)?;
                let r = self.table(right, row_ids == Some(right.as_str()))?;
                names.insert(right.clone());
                Ok((self.join(l, r, Some(*kind), &[on])?, names))
            }
        }
    }

    fn filter(&self, rel: Rel, conds: &[&Cond]) -> OResult<Rel> {
        if conds.is_empty() {
            return Ok(rel);
        }
        let mut rows = Vec::new();
        for row in rel.rows {
            let ctx = Ctx { cols: &rel.cols, row: Some(&row), group: None };
            let mut ok = Some(true);
            for c in conds {
                ok = and3(ok, self.cond(c, ctx)?);
            }
            if ok == Some(true) {
                rows.push(row);
            }
        }
        Ok(Rel { cols: rel.cols, rows })
    }

    fn filtered_from(&self, from: &[TableRef], where_: Option<&Cond>, row_ids: Option<&str>) -> OResult<Rel> {
        let mut parts = Vec::new();
        if let Some(w) = where_ {
            conjuncts(w, &mut parts);
        }
        let mut pending: Vec<(&Cond, BTreeSet<String>)> = parts.into_iter().map(|c| (c, mentions(c))).collect();
        let mut take = |have: &BTreeSet<String>| -> Vec<&Cond> {
            let mut out = Vec::new();
            pending.retain(|(c, t)| {
                let ready = !t.is_empty() && t.is_subset(have);
                if ready {
                    out.push(*c);
                }
                !ready
            });
            out
        };
        let mut acc: Option<(Rel, BTreeSet<String>)> = None;
        for item in from {
            let (rel, names) = self.table_ref(item, row_ids)?;
            let rel = self.filter(rel, &take(&names))?;
            acc = Some(match acc {
                None => (rel, names),
                Some((l, mut have)) => {
                    have.extend(names);
                    let on = take(&have);
                    (self.join(l, rel, None, &on)?, have)
                }
            });
        }
        let (rel, _) = acc.ok_or_else(|| OracleError::Unsupported("empty FROM".into()))?;
        let rest: Vec<&Cond> = pending.into_iter().map(|(c, _)| c).collect();
        self.filter(rel, &rest)
    }

    fn select(&self, q: &Select, row_ids: Option<&str>) -> OResult<Rel> {
        let rel = self.filtered_from(&q.from, q.where_.as_ref(), row_ids)?;
        let has_agg = q.items.iter().any(|i| matches!(i, SelectItem::Expr(Expr::Aggregate { .. })));
        let aggregated = !q.group_by.is_empty() || q.having.is_some() || has_agg;
        let mut out_cols = Vec::new();
        for item in &q.items {
            match item {
                SelectItem::AllOf(t) => {
                    for c in &self.m.table(t).expect("validated").columns {
                        out_cols.push((t.clone(), c.name.clone()));
                    }
                }
                SelectItem::Expr(e) => out_cols.push((String::new(), crate::sql::render_expr(e))),
                SelectItem::All => return Err(OracleError::Unsupported("unexpanded *".into())),
            }
        }
        let order_of = |cols: &[(String, String)]| -> OResult<Vec<(usize, bool)>> {
            q.order_by
                .iter()
                .map(|o| {
                    let t = o.column.table.as_deref().unwrap_or_default();
                    let i = cols
                        .iter()
                        .position(|(ct, cc)| ct == t && *cc == o.column.column)
                        .ok_or_else(|| OracleError::UnknownColumn(o.column.column.clone()))?;
                    Ok((i, o.direction == Some(Direction::Desc)))
                })
                .collect()
        };
        let sort_by = |rows: &mut Vec<&Vec<Value>>, keys: &[(usize, bool)]| {
            rows.sort_by(|a, b| {
                for &(i, desc) in keys {
                    let o = sort_cmp(&a[i], &b[i]);
                    let o = if desc { o.reverse() } else { o };
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            });
        };
        let mut rows_out = Vec::new();
        if !aggregated {
            let mut rows: Vec<&Vec<Value>> = rel.rows.iter().collect();
            let keys = order_of(&rel.cols)?;
            sort_by(&mut rows, &keys);
            for row in rows {
                let ctx = Ctx { cols: &rel.cols, row: Some(row), group: None };
                rows_out.push(self.items(&q.items, ctx)?);
            }
            return Ok(Rel { cols: out_cols, rows: rows_out });
        }
        let key_idx: Vec<usize> = q.group_by.iter().map(|c| rel.column(c)).collect::<OResult<_>>()?;
        let mut groups: Vec<Vec<&Vec<Value>>> = Vec::new();
        let mut lookup: HashMap<Vec<KeyVal>, usize> = HashMap::new();
        for row in &rel.rows {
            let k: Vec<KeyVal> = key_idx.iter().map(|&i| key_val(&row[i])).collect();
            let g = *lookup.entry(k).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(row);
        }
        if key_idx.is_empty() && groups.is_empty() {
            groups.push(Vec::new());
        }
        let mut kept = Vec::new();
        for g in &groups {
            let ctx = Ctx { cols: &rel.cols, row: g.first().map(|r| r.as_slice()), group: Some(g) };
            let ok = match &q.having {
                Some(h) => self.cond(h, ctx)? == Some(true),
                None => true,
            };
            if ok {
                kept.push(g);
            }
        }
        let keys = order_of(&rel.cols)?;
        kept.sort_by(|a, b| {
            for &(i, desc) in &keys {
                let o = sort_cmp(&a[0][i], &b[0][i]);
                let o = if desc { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        });
        for g in kept {
            let ctx = Ctx { cols: &rel.cols, row: g.first().map(|r| r.as_slice()), group: Some(g) };
            rows_out.push(self.items(&q.items, ctx)?);
        }
        Ok(Rel { cols: out_cols, rows: rows_out })
    }

    fn items(&self, items: &[SelectItem], ctx: Ctx<'_>) -> OResult<Vec<Value>> {
        let mut out = Vec::new();
        for item in items {
            match item {
                SelectItem::AllOf(t) => {
                    for c in &self.m.table(t).expect("validated").columns {
                        out.push(self.expr(&Expr::Column(ColumnRef::new(Some(t), &c.name)), ctx)?);
                    }
                }
                SelectItem::Expr(e) => out.push(self.expr(e, ctx)?),
                SelectItem::All => return Err(OracleError::Unsupported("unexpanded *".into())),
            }
        }
        Ok(out)
    }

    fn column_value(&self, c: &ColumnRef, cols: &[(String, String)], row: &[Value]) -> OResult<Value> {
        let t = c.table.as_deref().unwrap_or_default();
        let i = cols
            .iter()
            .position(|(ct, cc)| ct == t && *cc == c.column)
            .ok_or_else(|| OracleError::UnknownColumn(format!("{t}.{}", c.column)))?;
        Ok(row[i].clone())
    }

    fn expr(&self, e: &Expr, ctx: Ctx<'_>) -> OResult<Value> {
        match e {
            Expr::Column(c) => match ctx.row {
                Some(row) => self.column_value(c, ctx.cols, row),
                None => Ok(Value::Null),
            },
            Expr::Literal(l) => Ok(literal(l)),
            Expr::Aggregate { func, arg } => {
                let members = ctx.group.ok_or_else(|| OracleError::Unsupported("aggregate outside a group".into()))?;
                if let (AggFn::Count, Expr::Literal(_) | Expr::Star) = (func, &**arg) {
                    return Ok(Value::Int(members.len() as i128));
                }
                let Expr::Column(c) = &**arg else { return Err(OracleError::Unsupported("aggregate argument".into())) };
                let mut vals = Vec::new();
                for m in members {
                    let v = self.column_value(c, ctx.cols, m)?;
                    if !v.is_null() {
                        vals.push(v);
                    }
                }
                Ok(match func {
                    AggFn::Count => Value::Int(vals.len() as i128),
                    AggFn::Min => vals.into_iter().min_by(sort_cmp).unwrap_or(Value::Null),
                    AggFn::Max => vals.into_iter().reduce(|a, b| if sort_cmp(&b, &a) == Ordering::Greater { b } else { a }).unwrap_or(Value::Null),
                    AggFn::Sum | AggFn::Avg => {
                        if vals.is_empty() {
                            Value::Null
                        } else {
                            let n = vals.len() as i128;
                            let total: Ratio<i128> = vals.iter().map(|v| v.as_ratio().expect("numeric")).sum();
                            Value::Ratio(if *func == AggFn::Avg { total / Ratio::from_integer(n) } else { total })
                        }
                    }
                })
            }
            Expr::Subquery(q) => {
                let k = &**q as *const Select;
                if let Some(v) = self.scalars.borrow().get(&k) {
                    return Ok(v.clone());
                }
                let rel = self.select(q, None)?;
                let v = match rel.rows.len() {
                    0 => Value::Null,
                    1 => rel.rows[0][0].clone(),
                    n => return Err(OracleError::ScalarRows(n)),
                };
                self.scalars.borrow_mut().insert(k, v.clone());
                Ok(v)
            }
            other => Err(OracleError::Unsupported(crate::sql::render_expr(other))),
        }
    }

    fn cmp_exprs(&self, a: &Expr, op: CmpOp, b: &Expr, ctx: Ctx<'_>) -> OResult<Option<bool>> {
        let x = self.expr(a, ctx)?;
        let y = self.expr(b, ctx)?;
        Ok(compare(&x, &y).map(|o| holds(op, o)))
    }

    fn cond(&self, c: &Cond, ctx: Ctx<'_>) -> OResult<Option<bool>> {
        Ok(match c {
            Cond::And(l, r) => and3(self.cond(l, ctx)?, self.cond(r, ctx)?),
            Cond::Or(l, r) => or3(self.cond(l, ctx)?, self.cond(r, ctx)?),
            Cond::Compare { left, op, right } => self.cmp_exprs(left, *op, right, ctx)?,
            Cond::Between { expr, negated, low, high } => {
                let v = and3(self.cmp_exprs(expr, CmpOp::Ge, low, ctx)?, self.cmp_exprs(expr, CmpOp::Le, high, ctx)?);
                if *negated {
                    v.map(|b| !b)
                } else {
                    v
                }
            }
            Cond::InList { expr, negated, list } => {
                let mut v = Some(false);
                for item in list {
                    v = or3(v, self.cmp_exprs(expr, CmpOp::Eq, item, ctx)?);
                }
                if *negated {
                    v.map(|b| !b)
                } else {
                    v
                }
            }
            Cond::IsNull { expr, negated } => Some(self.expr(expr, ctx)?.is_null() != *negated),
            Cond::Like { expr, negated, pattern, escape } => match self.expr(expr, ctx)? {
                Value::Text(s) => Some(like_match(&s, pattern, *escape) != *negated),
                _ => None,
            },
            Cond::Exists { negated, query } => {
                let k = &**query as *const Select;
                let cached = self.exists.borrow().get(&k).copied();
                let any = match cached {
                    Some(b) => b,
                    None => {
                        let b = !self.select(query, None)?.rows.is_empty();
                        self.exists.borrow_mut().insert(k, b);
                        b
                    }
                };
                Some(any != *negated)
            }
        })
    }
}

/// Value equality for result comparison: numbers by exact value.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Null, _) | (_, Value::Null) => false,
        (Value::Text(x), Value::Text(y)) => x == y,
        _ => matches!((a.as_ratio(), b.as_ratio()), (Some(x), Some(y)) if x == y),
    }
}

/// Agreement between a reference result and an actual one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub expected: usize,
    pub actual: usize,
    /// Rows matched one-to-one as a multiset.
    pub matched: usize,
    /// For ordered results: rows agree position by position.
    pub order_ok: bool,
}

impl Comparison {
    pub fn precision(&self) -> f64 {
        if self.actual == 0 {
            1.0
        } else {
            self.matched as f64 / self.actual as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.expected == 0 {
            1.0
        } else {
            self.matched as f64 / self.expected as f64
        }
    }

    pub fn exact(&self) -> bool {
        self.matched == self.expected && self.matched == self.actual && self.order_ok
    }
}

fn rows_equal(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_equal(x, y))
}

pub fn compare_results(expected: &ResultTable, actual: &ResultTable) -> Comparison {
    let mut used = vec![false; actual.rows.len()];
    let mut matched = 0;
    for e in &expected.rows {
        if let Some(j) = (0..actual.rows.len()).find(|&j| !used[j] && rows_equal(e, &actual.rows[j])) {
            used[j] = true;
            matched += 1;
        }
    }
    let order_ok = !expected.ordered
        || (expected.rows.len() == actual.rows.len()
            && expected.rows.iter().zip(&actual.rows).all(|(a, b)| rows_equal(a, b)));
    Comparison { expected: expected.rows.len(), actual: actual.rows.len(), matched, order_ok }
}

/// Compares two plaintext databases table by table, row by row.
pub fn databases_equal(a: &PlainDatabase, b: &PlainDatabase) -> bool {
    let names: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    names.into_iter().all(|n| {
        let x = a.get(n).map(Vec::as_slice).unwrap_or(&[]);
        let y = b.get(n).map(Vec::as_slice).unwrap_or(&[]);
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| rows_equal(p, q))
    })
}
