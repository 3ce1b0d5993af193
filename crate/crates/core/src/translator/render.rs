//! Prints a plan as ciphertext SQL in the UDF dialect (`dbo.EqualityCom`,
//! `dbo.SumEqualityCom`, `#TEMPORARY_TABLEk`, cursor-based LIKE).
//!
//! The text is informational: the executor runs the plan, not this output.
//! Consecutive steps are folded into one statement where SQL allows it, so
//! a scan followed by a filter prints as a single `SELECT ... WHERE`.

use std::collections::HashMap;
use std::fmt::Write;

use cipherdb_cloud::{
    AggFunc, AggSpec, AssignValue, CipherPlan, CountOperand, InsertSource, JoinKind, MatchAtom, MatchProgram,
    Operand, PlanOutput, Pred, SegmentAnchor, SetOpKind, SortKey, Step, SumTarget, SumTargets,
};

/// `PerCount` targets listed before the rest are elided.
const CASES_SHOWN: usize = 3;

#[derive(Clone, Debug)]
struct Query {
    select: Option<String>,
    from: String,
    wheres: Vec<String>,
    group: Option<String>,
    having: Vec<String>,
    order: Option<String>,
    /// Output alias to aggregate expression, while the select list is the
    /// one a GROUP BY produced and HAVING/projection can still refer to it.
    aggregates: Option<HashMap<String, String>>,
}

impl Query {
    fn table(from: impl Into<String>) -> Self {
        Query {
            select: None,
            from: from.into(),
            wheres: Vec::new(),
            group: None,
            having: Vec::new(),
            order: None,
            aggregates: None,
        }
    }

    fn is_bare(&self) -> bool {
        self.select.is_none() && self.wheres.is_empty() && self.group.is_none() && self.order.is_none()
    }

    /// A single table with at most a WHERE clause.
    fn is_filtered_table(&self) -> bool {
        self.select.is_none()
            && self.group.is_none()
            && self.order.is_none()
            && !self.from.contains(' ')
            && !self.from.starts_with('(')
    }

    fn text(&self, into: Option<&str>) -> String {
        let mut s = format!("SELECT {}", self.select.as_deref().unwrap_or("*"));
        if let Some(t) = into {
            let _ = write!(s, " INTO {t}");
        }
        let _ = write!(s, " FROM {}", self.from);
        if !self.wheres.is_empty() {
            let _ = write!(s, " WHERE {}", self.wheres.join(" AND "));
        }
        if let Some(g) = &self.group {
            let _ = write!(s, " GROUP BY {g}");
        }
        if !self.having.is_empty() {
            let _ = write!(s, " HAVING {}", self.having.join(" AND "));
        }
        if let Some(o) = &self.order {
            let _ = write!(s, " ORDER BY {o}");
        }
        s
    }
}

struct Printer<'p> {
    plan: &'p CipherPlan,
    rels: HashMap<String, Query>,
    out: Vec<String>,
    epilogue: Vec<String>,
}

pub fn render_plan(plan: &CipherPlan) -> String {
    if plan.steps.is_empty() {
        return String::new();
    }
    let mut p = Printer { plan, rels: HashMap::new(), out: Vec::new(), epilogue: Vec::new() };
    for (i, x) in plan.thresholds.iter().enumerate() {
        p.out.push(format!("-- {} = {x}", p.x(i)));
    }
    for step in &plan.steps {
        p.step(step);
    }
    if let PlanOutput::Relation(r) = &plan.output {
        let q = p.query(r);
        p.out.push(format!("{};", q.text(None)));
    }
    let Printer { mut out, epilogue, .. } = p;
    out.extend(epilogue);
    let mut text = out.join("\n");
    text.push('\n');
    text
}

impl Printer<'_> {
    fn x(&self, i: usize) -> String {
        if self.plan.thresholds.len() == 1 {
            "x".to_string()
        } else {
            format!("x{}", i + 1)
        }
    }

    fn query(&self, rel: &str) -> Query {
        self.rels.get(rel).cloned().unwrap_or_else(|| Query::table(rel))
    }

    /// The relation as a FROM item.
    fn source(&self, rel: &str) -> String {
        let q = self.query(rel);
        if q.is_bare() {
            q.from
        } else {
            format!("({}) AS {rel}", q.text(None))
        }
    }

    fn wrapped(&self, rel: &str) -> Query {
        Query::table(self.source(rel))
    }

    fn step(&mut self, step: &Step) {
        match step {
            Step::Scan { table, into, .. } => {
                self.rels.insert(into.clone(), Query::table(table));
            }
            Step::Join { left, right, kind, on, into } => {
                let (l, r) = (self.query(left), self.query(right));
                let keep_left = l.select.is_none() && l.group.is_none() && l.order.is_none();
                let keep_right = r.select.is_none() && r.group.is_none() && r.order.is_none();
                // A WHERE on one input can move above the join when that
                // input's rows are never padded.
                let mut wheres = Vec::new();
                let left_from = if keep_left && matches!(kind, JoinKind::Inner | JoinKind::Cross | JoinKind::Left) {
                    wheres.extend(l.wheres.clone());
                    l.from.clone()
                } else {
                    self.source(left)
                };
                let right_from =
                    if keep_right && matches!(kind, JoinKind::Inner | JoinKind::Cross | JoinKind::Right) {
                        wheres.extend(r.wheres.clone());
                        r.from.clone()
                    } else {
                        self.source(right)
                    };
                let from = match (kind, on) {
                    (JoinKind::Cross, None) => format!("{left_from} CROSS JOIN {right_from}"),
                    (_, on) => {
                        let word = match kind {
                            JoinKind::Inner | JoinKind::Cross => "INNER",
                            JoinKind::Left => "LEFT OUTER",
                            JoinKind::Right => "RIGHT OUTER",
                            JoinKind::Full => "FULL OUTER",
                        };
                        let cond = on.as_ref().map_or("1 = 1".to_string(), |p| self.pred(p));
                        format!("{left_from} {word} JOIN {right_from} ON {cond}")
                    }
                };
                let mut q = Query::table(from);
                q.wheres = wheres;
                self.rels.insert(into.clone(), q);
            }
            Step::Filter { input, pred, into } => {
                let mut q = self.query(input);
                if let (Some(aliases), None) = (&q.aggregates, &q.order) {
                    let text = self.pred_in(pred, aliases);
                    q.having.push(text);
                } else if q.select.is_none() && q.group.is_none() && q.order.is_none() {
                    q.wheres.push(self.pred(pred));
                } else {
                    q = self.wrapped(input);
                    q.wheres.push(self.pred(pred));
                }
                self.rels.insert(into.clone(), q);
            }
            Step::MatchLike { input, column, threshold, program, flag, into } => {
                let mut q = self.query(input);
                let table = if q.is_filtered_table() {
                    q.from.clone()
                } else {
                    let temp = format!("#{into}");
                    self.out.push(format!("{};", q.text(Some(&temp))));
                    q = Query::table(temp.clone());
                    temp
                };
                let x = self.x(*threshold);
                self.out.push(format!("ALTER TABLE {table} ADD {flag} BIT NOT NULL DEFAULT 0;"));
                self.out.push(format!("DECLARE STRCUR CURSOR FOR SELECT {column} FROM {table};"));
                self.out.push(format!(
                    "-- per row: dbo.EqualityCom({x}, code, pattern code) over dbo.Split(@StrCol, ',') against {}",
                    match_program(program)
                ));
                self.out.push(format!("UPDATE {table} SET {flag} = 1 WHERE CURRENT OF STRCUR;"));
                self.out.push("CLOSE STRCUR; DEALLOCATE STRCUR;".to_string());
                self.epilogue.push(format!("ALTER TABLE {table} DROP COLUMN {flag};"));
                self.rels.insert(into.clone(), q);
            }
            Step::Canonicalize { input, column, threshold, group_column, into, .. } => {
                let mut q = self.query(input);
                let extends = q.select.as_deref().is_none_or(|s| s.starts_with("*, "));
                if !extends || q.group.is_some() || q.order.is_some() {
                    q = self.wrapped(input);
                }
                let bare = column.rsplit('.').next().unwrap_or(column);
                let source = self.query(input);
                let inner_from = if source.is_bare() { source.from } else { format!("({})", source.text(None)) };
                let item = format!(
                    "(SELECT TOP 1 A.{bare} FROM {inner_from} A WHERE dbo.EqualityCom({}, A.{bare}, {column}) = 0) AS {group_column}",
                    self.x(*threshold)
                );
                q.select = Some(match q.select.take() {
                    Some(s) => format!("{s}, {item}"),
                    None => format!("*, {item}"),
                });
                self.rels.insert(into.clone(), q);
            }
            Step::GroupAggregate { input, keys, aggs, into } => {
                let mut q = self.query(input);
                if q.select.is_some() || q.group.is_some() || q.order.is_some() {
                    q = self.wrapped(input);
                }
                let mut items: Vec<String> = keys.clone();
                let mut aliases = HashMap::new();
                for a in aggs {
                    for (alias, expr) in a.into.iter().zip(aggregate(a)) {
                        items.push(format!("{expr} AS {alias}"));
                        aliases.insert(alias.clone(), expr);
                    }
                }
                q.select = Some(items.join(", "));
                q.group = (!keys.is_empty()).then(|| keys.join(", "));
                q.aggregates = Some(aliases);
                self.rels.insert(into.clone(), q);
            }
            Step::Sort { input, keys, into } => {
                let mut q = self.query(input);
                if q.order.is_some() {
                    q = self.wrapped(input);
                }
                q.order = Some(keys.iter().map(|k| self.sort_key(k)).collect::<Vec<_>>().join(", "));
                self.rels.insert(into.clone(), q);
            }
            Step::Project { input, columns, into } => {
                let mut q = self.query(input);
                let grouped = q.aggregates.take();
                if q.select.is_some() && grouped.is_none() {
                    q = self.wrapped(input);
                }
                let aliases = grouped.unwrap_or_default();
                let items: Vec<String> = columns
                    .iter()
                    .map(|(src, out)| {
                        let src = aliases.get(src).unwrap_or(src);
                        if src == out {
                            src.clone()
                        } else {
                            format!("{src} AS {out}")
                        }
                    })
                    .collect();
                q.select = Some(items.join(", "));
                self.rels.insert(into.clone(), q);
            }
            Step::SetOp { left, right, op, into, .. } => {
                let word = match op {
                    SetOpKind::Union => "UNION",
                    SetOpKind::Intersect => "INTERSECT",
                    SetOpKind::Except => "EXCEPT",
                };
                let l = self.query(left).text(None);
                let r = self.query(right).text(None);
                self.rels.insert(into.clone(), Query::table(format!("({l} {word} {r}) AS {into}")));
            }
            Step::CreateTemp { name, from } => {
                let q = self.query(from);
                self.out.push(format!("{};", q.text(Some(name))));
                self.rels.insert(name.clone(), Query::table(name));
            }
            Step::DropTemp { name } => {
                self.epilogue.push(format!("DROP TABLE {name};"));
            }
            Step::InsertRows { table, columns, source } => {
                let target = format!("INSERT INTO {table}({})", columns.join(", "));
                match source {
                    InsertSource::Values(rows) => {
                        let rows: Vec<String> = rows
                            .iter()
                            .map(|r| format!("({})", r.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")))
                            .collect();
                        self.out.push(format!("{target} VALUES {};", rows.join(", ")));
                    }
                    InsertSource::Relation { name, columns } => {
                        let mut q = self.query(name);
                        if q.select.is_some() {
                            q = self.wrapped(name);
                        }
                        let items: Vec<String> =
                            columns.iter().map(|c| c.clone().unwrap_or_else(|| "NULL".to_string())).collect();
                        q.select = Some(items.join(", "));
                        self.out.push(format!("{target} {};", q.text(None)));
                    }
                }
            }
            Step::UpdateRows { table, input, assignments, .. } => {
                let sets: Vec<String> = assignments
                    .iter()
                    .map(|(c, v)| {
                        let v = match v {
                            AssignValue::Cell(cell) => cell.to_string(),
                            AssignValue::Column(c) => c.clone(),
                            AssignValue::Null => "NULL".to_string(),
                        };
                        format!("{c} = {v}")
                    })
                    .collect();
                let mut s = format!("UPDATE {table} SET {}", sets.join(", "));
                let (from, wheres) = self.dml_source(table, input);
                if let Some(f) = from {
                    let _ = write!(s, " FROM {f}");
                }
                if !wheres.is_empty() {
                    let _ = write!(s, " WHERE {}", wheres.join(" AND "));
                }
                s.push(';');
                self.out.push(s);
            }
            Step::DeleteRows { table, input, .. } => {
                let (from, wheres) = self.dml_source(table, input);
                let mut s = match from {
                    Some(f) => format!("DELETE {table} FROM {f}"),
                    None => format!("DELETE FROM {table}"),
                };
                if !wheres.is_empty() {
                    let _ = write!(s, " WHERE {}", wheres.join(" AND "));
                }
                s.push(';');
                self.out.push(s);
            }
        }
    }

    /// FROM clause (when the rows come from more than the target table) and
    /// WHERE conjuncts of a mutation's row source.
    fn dml_source(&self, table: &str, input: &str) -> (Option<String>, Vec<String>) {
        let q = self.query(input);
        if q.is_filtered_table() && q.from == table {
            (None, q.wheres)
        } else if q.select.is_none() && q.group.is_none() && q.order.is_none() {
            (Some(q.from), q.wheres)
        } else {
            (Some(self.source(input)), Vec::new())
        }
    }

    fn sort_key(&self, k: &SortKey) -> String {
        format!("{} {}", k.column, if k.descending { "DESC" } else { "ASC" })
    }

    fn operand(&self, o: &Operand, aliases: &HashMap<String, String>) -> String {
        match o {
            Operand::Column(c) => aliases.get(c).unwrap_or(c).clone(),
            Operand::Literal(cell) => cell.to_string(),
            Operand::Scalar(rel) => format!("(SELECT * FROM {})", self.source(rel)),
        }
    }

    fn count_operand(&self, o: &CountOperand, aliases: &HashMap<String, String>) -> String {
        match o {
            CountOperand::Column(c) => aliases.get(c).unwrap_or(c).clone(),
            CountOperand::Scalar(rel) => format!("(SELECT * FROM {})", self.source(rel)),
            CountOperand::Value(v) => v.to_string(),
        }
    }

    fn pred(&self, p: &Pred) -> String {
        self.pred_in(p, &HashMap::new())
    }

    /// Renders `p` with aggregate aliases replaced by their expressions.
    fn pred_in(&self, p: &Pred, aliases: &HashMap<String, String>) -> String {
        let name = |c: &String| aliases.get(c).unwrap_or(c).clone();
        match p {
            Pred::Const(true) => "1 = 1".to_string(),
            Pred::Const(false) => "1 = 0".to_string(),
            Pred::And(ps) => {
                format!("({})", ps.iter().map(|p| self.pred_in(p, aliases)).collect::<Vec<_>>().join(" AND "))
            }
            Pred::Or(ps) => format!("({})", ps.iter().map(|p| self.pred_in(p, aliases)).collect::<Vec<_>>().join(" OR ")),
            Pred::Cmp { threshold, left, right, test, .. } => format!(
                "dbo.EqualityCom({}, {}, {}) {} 0",
                self.x(*threshold),
                self.operand(left, aliases),
                self.operand(right, aliases),
                test.sql()
            ),
            Pred::SumCmp { sum, ext, count, targets, test } => {
                format!("{} {} 0", sum_targets(targets, &name(sum), &name(ext), &name(count)), test.sql())
            }
            Pred::CountCmp { left, right, test } => format!(
                "{} {} {}",
                self.count_operand(left, aliases),
                test.sql(),
                self.count_operand(right, aliases)
            ),
            Pred::Flag { column, value } => format!("{column} = {}", u8::from(*value)),
            Pred::Exists { relation, negated } => {
                format!("{}EXISTS (SELECT * FROM {})", if *negated { "NOT " } else { "" }, self.source(relation))
            }
        }
    }
}

/// One expression per output alias of `a`.
fn aggregate(a: &AggSpec) -> Vec<String> {
    let col = a.column.as_deref().unwrap_or("*");
    match a.func {
        AggFunc::Min => vec![format!("MIN({col})")],
        AggFunc::Max => vec![format!("MAX({col})")],
        AggFunc::Count => vec![format!("COUNT({col})")],
        AggFunc::CountRows => vec!["COUNT(*)".to_string()],
        AggFunc::SumPair => vec![
            format!("SUM({col})"),
            format!("SUM({})", a.ext_column.as_deref().unwrap_or(col)),
            format!("COUNT({col})"),
        ],
    }
}

fn sum_target(t: &SumTarget, sum: &str, ext: &str) -> String {
    match t {
        SumTarget::Known(r) => r.to_string(),
        SumTarget::Single { lo, hi } => format!("dbo.PartitionCom({sum}, {lo}, {hi})"),
        SumTarget::Probe { l, u_ext } => format!("dbo.SumEqualityCom({sum}, {ext}, {l}, {u_ext})"),
        SumTarget::Between(inner) => format!("(CASE WHEN {} > 0 THEN 1 ELSE -1 END)", sum_target(inner, sum, ext)),
    }
}

fn sum_targets(t: &SumTargets, sum: &str, ext: &str, count: &str) -> String {
    match t {
        SumTargets::Uniform { single, multi, .. } => {
            let (s, m) = (sum_target(single, sum, ext), sum_target(multi, sum, ext));
            if s == m {
                m
            } else {
                format!("(CASE WHEN {count} = 1 THEN {s} ELSE {m} END)")
            }
        }
        SumTargets::PerCount(list) => {
            let mut s = format!("(CASE {count}");
            for (i, t) in list.iter().take(CASES_SHOWN).enumerate() {
                let _ = write!(s, " WHEN {} THEN {}", i + 1, sum_target(t, sum, ext));
            }
            if list.len() > CASES_SHOWN {
                let _ = write!(s, " /* {} more */", list.len() - CASES_SHOWN);
            }
            s.push_str(" END)");
            s
        }
    }
}

fn match_program(p: &MatchProgram) -> String {
    let segments: Vec<String> = p
        .segments
        .iter()
        .map(|seg| {
            let anchor = match seg.anchor {
                SegmentAnchor::Whole => "WHOLE",
                SegmentAnchor::Start => "START",
                SegmentAnchor::Floating => "FLOATING",
                SegmentAnchor::End => "END",
            };
            let atoms: Vec<String> = seg.atoms.iter().map(atom).collect();
            format!("{anchor}[{}]", atoms.join(", "))
        })
        .collect();
    format!("{}, at least {} characters", segments.join(" "), p.min_len)
}

fn atom(a: &MatchAtom) -> String {
    match a {
        MatchAtom::Literal { cipher: Some(c), .. } => c.to_string(),
        MatchAtom::Literal { cipher: None, .. } => "NONE".to_string(),
        MatchAtom::AnyOne => "_".to_string(),
        MatchAtom::Class { members, negated, .. } => {
            let m: Vec<String> = members.iter().map(|c| c.to_string()).collect();
            format!("[{}{}]", if *negated { "^" } else { "" }, m.join(" "))
        }
    }
}
