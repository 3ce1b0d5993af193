//! Name resolution, permission checks and the restrictions of the
//! ciphertext translation.
//!
//! The validated statement has canonical table and column spelling, every
//! column qualified with its table, the INSERT column list spelled out,
//! `DEFAULT` replaced by `NULL`, and an UPDATE's FROM list either empty or
//! containing the target table.

use crate::codec::{encode_plain, ColumnSpec, EncodingRule, SemType};
use crate::manifest::Manifest;
use crate::value::{parse_scaled, Value};

use super::ast::*;
use super::like::parse_like_pattern;
use super::{Feature, SqlError};

type VResult<T> = Result<T, SqlError>;

/// Fractional digits accepted in constants compared with AVG.
const AVG_LITERAL_DIGITS: u32 = 12;

fn unsupported<T>(f: Feature) -> VResult<T> {
    Err(SqlError::UnsupportedFeature(f))
}

fn other<T>(msg: &str) -> VResult<T> {
    unsupported(Feature::Other(msg.to_string()))
}

fn type_error<T>(msg: impl Into<String>) -> VResult<T> {
    Err(SqlError::Type(msg.into()))
}

/// Typed value of a literal for a column of semantic type `sem`.
pub fn literal_value(sem: SemType, lit: &Literal) -> VResult<Value> {
    match (lit, sem) {
        (Literal::Null | Literal::Default, _) => Ok(Value::Null),
        (Literal::Number(n), SemType::Integer) => match parse_scaled(n, 0) {
            Some(v) => Ok(Value::Int(v)),
            None => type_error(format!("{n} is not an integer")),
        },
        (Literal::Number(n), SemType::Decimal { scale }) => match parse_scaled(n, scale) {
            Some(units) => Ok(Value::Decimal { units, scale }),
            None => type_error(format!("{n} has more than {scale} fractional digits")),
        },
        (Literal::Str(s), SemType::Char { .. } | SemType::Varchar { .. }) => Ok(Value::Text(s.clone())),
        (Literal::Number(n), _) => type_error(format!("number {n} used with a character column")),
        (Literal::Str(s), _) => type_error(format!("string '{s}' used with a numeric column")),
    }
}

/// Output column headers of a validated select list.
pub fn item_headers(items: &[SelectItem], manifest: &Manifest) -> Vec<String> {
    let mut out = Vec::new();
    for item in items {
        match item {
            SelectItem::AllOf(t) => {
                if let Some(info) = manifest.table(t) {
                    out.extend(info.columns.iter().map(|c| c.name.clone()));
                }
            }
            SelectItem::Expr(e) => out.push(expr_header(e)),
            SelectItem::All => {}
        }
    }
    out
}

fn expr_header(e: &Expr) -> String {
    match e {
        Expr::Column(c) => c.column.clone(),
        Expr::Aggregate { func, arg } => format!("{}({})", func.name(), expr_header(arg)),
        Expr::Literal(Literal::Number(n)) => n.clone(),
        other => super::render_expr(other),
    }
}

pub fn validate_statement(stmt: &Statement, manifest: &Manifest, principal: &str) -> VResult<Statement> {
    let v = Validator { m: manifest, principal };
    match stmt {
        Statement::Select(q) => Ok(Statement::Select(v.select(q, &[], Role::Top)?.0)),
        Statement::Insert(i) => v.insert(i),
        Statement::Update(u) => v.update(u),
        Statement::Delete(d) => {
            let table = v.table(&d.table)?;
            let scope = vec![table.clone()];
            let where_ = d.where_.as_ref().map(|c| v.cond(c, &Env::plain(&scope, &[]))).transpose()?;
            Ok(Statement::Delete(Delete { table, where_ }))
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Top,
    Scalar,
    Exists,
    InsertSource,
}

#[derive(Clone, Copy)]
enum Ty<'m> {
    Col(&'m ColumnSpec),
    Count,
    Sum(&'m ColumnSpec),
    Avg(&'m ColumnSpec),
    Lit,
    Null,
}

struct Env<'a> {
    scope: &'a [String],
    outer: &'a [Vec<String>],
    aggregates: bool,
    /// In an aggregated query, plain columns must be grouping columns.
    groups: Option<&'a [ColumnRef]>,
}

impl<'a> Env<'a> {
    fn plain(scope: &'a [String], outer: &'a [Vec<String>]) -> Self {
        Env { scope, outer, aggregates: false, groups: None }
    }

    fn nested_outer(&self) -> Vec<Vec<String>> {
        let mut v = self.outer.to_vec();
        v.push(self.scope.to_vec());
        v
    }
}

struct Validator<'m> {
    m: &'m Manifest,
    principal: &'m str,
}

fn contains_aggregate(e: &Expr) -> bool {
    match e {
        Expr::Aggregate { .. } => true,
        Expr::Arith { left, right, .. } => contains_aggregate(left) || contains_aggregate(right),
        Expr::Neg(x) => contains_aggregate(x),
        Expr::Function { args, .. } => args.iter().any(contains_aggregate),
        _ => false,
    }
}

impl<'m> Validator<'m> {
    fn table(&self, name: &str) -> VResult<String> {
        let info = self.m.table(name).ok_or_else(|| SqlError::UnknownIdentifier(name.to_string()))?;
        if !self.m.allows(self.principal, &info.name) {
            return Err(SqlError::PermissionDenied { principal: self.principal.to_string(), table: info.name.clone() });
        }
        Ok(info.name.clone())
    }

    fn spec(&self, table: &str, column: &str) -> Option<&'m ColumnSpec> {
        self.m.table(table)?.column(column)
    }

    fn resolve(&self, c: &ColumnRef, scope: &[String], outer: &[Vec<String>]) -> VResult<(ColumnRef, &'m ColumnSpec)> {
        let full = super::render::render_column(c);
        let in_tables = |tables: &[String]| -> VResult<Option<(String, &'m ColumnSpec)>> {
            let mut found: Option<(String, &'m ColumnSpec)> = None;
            for t in tables {
                if let Some(want) = &c.table {
                    if !t.eq_ignore_ascii_case(want) {
                        continue;
                    }
                }
                if let Some(spec) = self.spec(t, &c.column) {
                    if found.is_some() {
                        return Err(SqlError::Ambiguous(full.clone()));
                    }
                    found = Some((t.clone(), spec));
                }
            }
            Ok(found)
        };
        if let Some((t, spec)) = in_tables(scope)? {
            return Ok((ColumnRef { table: Some(t), column: spec.name.clone() }, spec));
        }
        for o in outer.iter().rev() {
            if in_tables(o)?.is_some() {
                return unsupported(Feature::CorrelatedSubquery);
            }
        }
        Err(SqlError::UnknownIdentifier(full))
    }

    fn resolve_from(&self, from: &[TableRef], outer: &[Vec<String>]) -> VResult<(Vec<TableRef>, Vec<String>)> {
        let mut scope: Vec<String> = Vec::new();
        let mut out = Vec::new();
        for t in from {
            out.push(self.table_ref(t, &mut scope, outer)?);
        }
        Ok((out, scope))
    }

    fn add_table(&self, name: &str, scope: &mut Vec<String>) -> VResult<String> {
        let canon = self.table(name)?;
        if scope.contains(&canon) {
            return unsupported(Feature::SelfJoin);
        }
        scope.push(canon.clone());
        Ok(canon)
    }

    fn table_ref(&self, t: &TableRef, scope: &mut Vec<String>, outer: &[Vec<String>]) -> VResult<TableRef> {
        match t {
            TableRef::Table(n) => Ok(TableRef::Table(self.add_table(n, scope)?)),
            TableRef::Join { left, kind, right, on } => {
                let left = self.table_ref(left, scope, outer)?;
                let right = self.add_table(right, scope)?;
                // ON sees only the tables of its own join tree.
                let mut local: Vec<String> = left.tables().into_iter().map(str::to_string).collect();
                local.push(right.clone());
                let on = self.cond(on, &Env::plain(&local, outer))?;
                Ok(TableRef::Join { left: Box::new(left), kind: *kind, right, on })
            }
        }
    }

    fn select(&self, q: &Select, outer: &[Vec<String>], role: Role) -> VResult<(Select, Vec<Ty<'m>>)> {
        if q.distinct {
            return unsupported(Feature::Distinct);
        }
        if q.group_all {
            return unsupported(Feature::GroupByAll);
        }
        if role != Role::Top && !q.order_by.is_empty() {
            return other("ORDER BY in a subquery");
        }
        let (from, scope) = self.resolve_from(&q.from, outer)?;
        let where_ = q.where_.as_ref().map(|c| self.cond(c, &Env::plain(&scope, outer))).transpose()?;
        let mut group_by = Vec::new();
        for g in &q.group_by {
            group_by.push(self.resolve(g, &scope, outer)?.0);
        }
        let aggregated = !group_by.is_empty()
            || q.having.is_some()
            || q.items.iter().any(|i| matches!(i, SelectItem::Expr(e) if contains_aggregate(e)));
        let env = Env {
            scope: &scope,
            outer,
            aggregates: true,
            groups: if aggregated { Some(&group_by) } else { None },
        };
        let expanded: Vec<SelectItem> = q
            .items
            .iter()
            .flat_map(|i| match i {
                SelectItem::All => scope.iter().map(|t| SelectItem::AllOf(t.clone())).collect(),
                other => vec![other.clone()],
            })
            .collect();
        let mut items = Vec::new();
        let mut types = Vec::new();
        for item in &expanded {
            match item {
                SelectItem::All => unreachable!("expanded above"),
                SelectItem::AllOf(t) => {
                    let canon = scope
                        .iter()
                        .find(|s| s.eq_ignore_ascii_case(t))
                        .ok_or_else(|| SqlError::UnknownIdentifier(format!("{t}.*")))?;
                    if aggregated {
                        return other("table.* in an aggregated query");
                    }
                    if role == Role::Scalar || role == Role::InsertSource {
                        return other("table.* in a subquery used as a value or INSERT source");
                    }
                    for c in &self.m.table(canon).expect("resolved").columns {
                        types.push(Ty::Col(c));
                    }
                    items.push(SelectItem::AllOf(canon.clone()));
                }
                SelectItem::Expr(e) => {
                    match e {
                        Expr::Column(_) | Expr::Aggregate { .. } => {}
                        Expr::Literal(_) => return other("constants in the select list"),
                        Expr::Subquery(_) => return other("subqueries in the select list"),
                        _ => {}
                    }
                    let (e, ty) = self.expr(e, &env)?;
                    if role == Role::InsertSource && !matches!(e, Expr::Column(_)) {
                        return other("aggregates in an INSERT source");
                    }
                    items.push(SelectItem::Expr(e));
                    types.push(ty);
                }
            }
        }
        if role == Role::Scalar {
            if types.len() != 1 {
                return type_error("a subquery used as a value must return one column");
            }
            if matches!(types[0], Ty::Sum(_) | Ty::Avg(_)) {
                return other("SUM/AVG in a subquery used as a value");
            }
        }
        let having = q.having.as_ref().map(|c| self.cond(c, &env)).transpose()?;
        let mut order_by = Vec::new();
        for o in &q.order_by {
            let (c, _) = self.resolve(&o.column, &scope, outer)?;
            if aggregated && !group_by.contains(&c) {
                return type_error(format!("ORDER BY column {} is not a grouping column", c.column));
            }
            order_by.push(OrderItem { column: c, direction: o.direction });
        }
        let out = Select { distinct: false, items, from, where_, group_all: false, group_by, having, order_by };
        Ok((out, types))
    }

    fn expr(&self, e: &Expr, env: &Env<'_>) -> VResult<(Expr, Ty<'m>)> {
        match e {
            Expr::Column(c) => {
                let (c, spec) = self.resolve(c, env.scope, env.outer)?;
                if let Some(groups) = env.groups {
                    if !groups.contains(&c) {
                        return type_error(format!("column {} must appear in GROUP BY", c.column));
                    }
                }
                Ok((Expr::Column(c), Ty::Col(spec)))
            }
            Expr::Literal(Literal::Null) => Ok((e.clone(), Ty::Null)),
            Expr::Literal(Literal::Default) => type_error("DEFAULT outside INSERT/UPDATE values"),
            Expr::Star => other("* outside COUNT(*)"),
            Expr::Literal(_) => Ok((e.clone(), Ty::Lit)),
            Expr::Aggregate { func, arg } => {
                if !env.aggregates {
                    return type_error(format!("{} outside the select list and HAVING", func.name()));
                }
                match (&**arg, func) {
                    (Expr::Column(c), _) => {
                        let (c, spec) = self.resolve(c, env.scope, env.outer)?;
                        let ty = match func {
                            AggFn::Min | AggFn::Max => Ty::Col(spec),
                            AggFn::Count => Ty::Count,
                            AggFn::Sum | AggFn::Avg => {
                                if spec.rule != EncodingRule::Numeric || !spec.extension {
                                    return unsupported(Feature::SumWithoutExtension(c.column.clone()));
                                }
                                if *func == AggFn::Sum {
                                    Ty::Sum(spec)
                                } else {
                                    Ty::Avg(spec)
                                }
                            }
                        };
                        Ok((Expr::Aggregate { func: *func, arg: Box::new(Expr::Column(c)) }, ty))
                    }
                    (Expr::Star, AggFn::Count) => Ok((e.clone(), Ty::Count)),
                    (Expr::Literal(Literal::Number(n)), AggFn::Count) if parse_scaled(n, 0).is_some() => {
                        Ok((e.clone(), Ty::Count))
                    }
                    (a, _) if contains_aggregate(a) => other("nested aggregates"),
                    (Expr::Arith { .. } | Expr::Neg(_), _) => unsupported(Feature::Arithmetic),
                    (Expr::Function { name, .. }, _) => unsupported(Feature::BuiltinFunction(name.clone())),
                    _ => type_error(format!("{} takes a column", func.name())),
                }
            }
            Expr::Subquery(q) => {
                let (q, types) = self.select(q, &env.nested_outer(), Role::Scalar)?;
                let ty = match types[0] {
                    Ty::Col(s) => Ty::Col(s),
                    Ty::Count => Ty::Count,
                    _ => return other("this subquery value"),
                };
                Ok((Expr::Subquery(Box::new(q)), ty))
            }
            Expr::Function { name, .. } => unsupported(Feature::BuiltinFunction(name.to_ascii_uppercase())),
            Expr::Arith { .. } | Expr::Neg(_) => unsupported(Feature::Arithmetic),
        }
    }

    fn check_literal(&self, spec: &ColumnSpec, lit: &Expr) -> VResult<()> {
        let Expr::Literal(l) = lit else { unreachable!("literal operand") };
        let v = literal_value(spec.sem, l)?;
        if let Value::Text(s) = &v {
            let limit = spec.max_code.min(crate::codec::MAX_CHAR_CODE);
            if let Some(c) = s.chars().find(|&c| !crate::codec::is_codable(c, limit)) {
                return type_error(format!("character {c:?} cannot be encoded for {}", spec.name));
            }
            if spec.rule == EncodingRule::Packed {
                let SemType::Char { len } = spec.sem else { unreachable!("packed needs CHAR") };
                if s.chars().count() != len as usize {
                    return other(&format!("comparing {} with a literal of length other than {len}", spec.name));
                }
            }
            if spec.rule == EncodingRule::Fuzzy && s.is_empty() {
                return type_error(format!("the empty string cannot be compared with {}", spec.name));
            }
        }
        if let (Value::Int(i), Some(d)) = (&v, spec.digits) {
            if *i < 0 || *i >= 10i128.pow(d) {
                return type_error(format!("{i} does not fit the {d} digits of {}", spec.name));
            }
        }
        Ok(())
    }

    fn compatible(&self, a: &ColumnSpec, b: &ColumnSpec) -> VResult<()> {
        if a.domain != b.domain {
            return unsupported(Feature::CrossDomain(format!("{} in {}, {} in {}", a.name, a.domain, b.name, b.domain)));
        }
        let same = match (a.rule, b.rule) {
            (EncodingRule::Numeric, EncodingRule::Numeric) | (EncodingRule::Fuzzy, EncodingRule::Fuzzy) => true,
            (EncodingRule::Fixed { width: w1 }, EncodingRule::Fixed { width: w2 }) => {
                w1 == w2 && a.sem.is_text() == b.sem.is_text() && a.digits == b.digits
            }
            (EncodingRule::Packed, EncodingRule::Packed) => a.sem == b.sem,
            _ => false,
        };
        if !same {
            return unsupported(Feature::CrossDomain(format!("{} and {} use different encodings", a.name, b.name)));
        }
        Ok(())
    }

    fn check_pair(&self, a: (&Expr, Ty<'m>), b: (&Expr, Ty<'m>)) -> VResult<()> {
        let count_literal = |e: &Expr| -> VResult<()> {
            match e {
                Expr::Literal(Literal::Number(n)) if parse_scaled(n, 0).is_some_and(|v| v >= 0) => Ok(()),
                _ => type_error("COUNT compares with a non-negative integer"),
            }
        };
        let sum_literal = |spec: &ColumnSpec, e: &Expr, avg: bool| -> VResult<()> {
            match e {
                Expr::Literal(Literal::Number(n)) => {
                    let ok = if avg { parse_scaled(n, AVG_LITERAL_DIGITS).is_some() } else { parse_scaled(n, spec.sem.scale()).is_some() };
                    if ok {
                        Ok(())
                    } else {
                        type_error(format!("{n} is not a valid constant for SUM/AVG of {}", spec.name))
                    }
                }
                _ => type_error("SUM/AVG compares with a number"),
            }
        };
        match (a.1, b.1) {
            (Ty::Null, _) | (_, Ty::Null) => type_error("comparison with NULL; use IS [NOT] NULL"),
            (Ty::Col(x), Ty::Col(y)) => self.compatible(x, y),
            (Ty::Col(x), Ty::Lit) => self.check_literal(x, b.0),
            (Ty::Lit, Ty::Col(y)) => self.check_literal(y, a.0),
            (Ty::Count, Ty::Count) => Ok(()),
            (Ty::Count, Ty::Lit) => count_literal(b.0),
            (Ty::Lit, Ty::Count) => count_literal(a.0),
            (Ty::Sum(_) | Ty::Avg(_), Ty::Sum(_) | Ty::Avg(_)) => unsupported(Feature::SumVsSum),
            (Ty::Sum(s), Ty::Lit) => sum_literal(s, b.0, false),
            (Ty::Avg(s), Ty::Lit) => sum_literal(s, b.0, true),
            (Ty::Lit, Ty::Sum(s)) => sum_literal(s, a.0, false),
            (Ty::Lit, Ty::Avg(s)) => sum_literal(s, a.0, true),
            (Ty::Sum(_) | Ty::Avg(_), _) | (_, Ty::Sum(_) | Ty::Avg(_)) => {
                other("SUM/AVG compared with anything but a constant")
            }
            (Ty::Lit, Ty::Lit) => other("comparison between two constants"),
            _ => type_error("COUNT compared with a column value"),
        }
    }

    fn cond(&self, c: &Cond, env: &Env<'_>) -> VResult<Cond> {
        Ok(match c {
            Cond::And(l, r) => Cond::And(Box::new(self.cond(l, env)?), Box::new(self.cond(r, env)?)),
            Cond::Or(l, r) => Cond::Or(Box::new(self.cond(l, env)?), Box::new(self.cond(r, env)?)),
            Cond::Compare { left, op, right } => {
                let (l, lt) = self.expr(left, env)?;
                let (r, rt) = self.expr(right, env)?;
                self.check_pair((&l, lt), (&r, rt))?;
                Cond::Compare { left: l, op: *op, right: r }
            }
            Cond::Between { expr, negated, low, high } => {
                let (e, et) = self.expr(expr, env)?;
                let (lo, lot) = self.expr(low, env)?;
                let (hi, hit) = self.expr(high, env)?;
                self.check_pair((&e, et), (&lo, lot))?;
                self.check_pair((&e, et), (&hi, hit))?;
                Cond::Between { expr: e, negated: *negated, low: lo, high: hi }
            }
            Cond::InList { expr, negated, list } => {
                let (e, et) = self.expr(expr, env)?;
                let mut out = Vec::new();
                for item in list {
                    let (i, it) = self.expr(item, env)?;
                    self.check_pair((&e, et), (&i, it))?;
                    out.push(i);
                }
                Cond::InList { expr: e, negated: *negated, list: out }
            }
            Cond::IsNull { expr, negated } => {
                let (e, et) = self.expr(expr, env)?;
                if matches!(et, Ty::Lit | Ty::Null) {
                    return other("IS NULL on a constant");
                }
                Cond::IsNull { expr: e, negated: *negated }
            }
            Cond::Like { expr, negated, pattern, escape } => {
                let (e, et) = self.expr(expr, env)?;
                let Ty::Col(spec) = et else { return type_error("LIKE applies to a column") };
                if !matches!(e, Expr::Column(_)) {
                    return type_error("LIKE applies to a column");
                }
                if spec.rule != EncodingRule::Fuzzy {
                    return unsupported(Feature::LikeEncoding(spec.name.clone()));
                }
                parse_like_pattern(pattern, *escape)?;
                Cond::Like { expr: e, negated: *negated, pattern: pattern.clone(), escape: *escape }
            }
            Cond::Exists { negated, query } => {
                let (q, _) = self.select(query, &env.nested_outer(), Role::Exists)?;
                Cond::Exists { negated: *negated, query: Box::new(q) }
            }
        })
    }

    fn value_for(&self, spec: &ColumnSpec, e: &Expr) -> VResult<Expr> {
        let Expr::Literal(l) = e else { return other("non-constant INSERT values") };
        let v = literal_value(spec.sem, l)?;
        if v.is_null() && !spec.nullable {
            return type_error(format!("{} is NOT NULL", spec.name));
        }
        encode_plain(spec, &v).map_err(|err| SqlError::Type(err.to_string()))?;
        Ok(if matches!(l, Literal::Default) { Expr::Literal(Literal::Null) } else { e.clone() })
    }

    fn insert(&self, i: &Insert) -> VResult<Statement> {
        let table = self.table(&i.table)?;
        let info = self.m.table(&table).expect("resolved");
        let mut columns: Vec<String> = Vec::new();
        if i.columns.is_empty() {
            columns = info.columns.iter().map(|c| c.name.clone()).collect();
        } else {
            for c in &i.columns {
                let spec = info.column(c).ok_or_else(|| SqlError::UnknownIdentifier(format!("{table}.{c}")))?;
                if columns.contains(&spec.name) {
                    return type_error(format!("column {} listed twice", spec.name));
                }
                columns.push(spec.name.clone());
            }
        }
        for c in &info.columns {
            if !columns.contains(&c.name) && !c.nullable {
                return type_error(format!("{} is NOT NULL and has no value", c.name));
            }
        }
        let specs: Vec<&ColumnSpec> = columns.iter().map(|c| info.column(c).expect("resolved")).collect();
        let source = match &i.source {
            InsertSource::Values(rows) => {
                let mut out = Vec::new();
                for row in rows {
                    if row.len() != specs.len() {
                        return type_error(format!("{} values for {} columns", row.len(), specs.len()));
                    }
                    out.push(specs.iter().zip(row).map(|(s, e)| self.value_for(s, e)).collect::<VResult<Vec<_>>>()?);
                }
                InsertSource::Values(out)
            }
            InsertSource::Select(q) => {
                let (q, types) = self.select(q, &[], Role::InsertSource)?;
                if types.len() != specs.len() {
                    return type_error(format!("{} selected columns for {} target columns", types.len(), specs.len()));
                }
                for (t, s) in types.iter().zip(&specs) {
                    let Ty::Col(src) = t else { return other("aggregates in an INSERT source") };
                    self.compatible(src, s)?;
                    if src.sem != s.sem {
                        return type_error(format!("{} and {} have different types", src.name, s.name));
                    }
                    if src.nullable && !s.nullable {
                        return type_error(format!("nullable {} inserted into NOT NULL {}", src.name, s.name));
                    }
                }
                InsertSource::Select(Box::new(q))
            }
        };
        Ok(Statement::Insert(Insert { table, columns, source }))
    }

    fn update(&self, u: &Update) -> VResult<Statement> {
        let table = self.table(&u.table)?;
        let (mut from, mut scope) = self.resolve_from(&u.from, &[])?;
        if !from.is_empty() && !scope.contains(&table) {
            from.insert(0, TableRef::Table(table.clone()));
            scope.insert(0, table.clone());
        }
        if from.is_empty() {
            scope.push(table.clone());
        }
        let info = self.m.table(&table).expect("resolved");
        let mut assignments = Vec::new();
        for (c, e) in &u.assignments {
            let spec = info.column(c).ok_or_else(|| SqlError::UnknownIdentifier(format!("{table}.{c}")))?;
            if assignments.iter().any(|(n, _): &(String, Expr)| *n == spec.name) {
                return type_error(format!("column {} assigned twice", spec.name));
            }
            let value = match e {
                Expr::Column(src) => {
                    let (src, src_spec) = self.resolve(src, &scope, &[])?;
                    self.compatible(src_spec, spec)?;
                    if src_spec.sem != spec.sem {
                        return type_error(format!("{} and {} have different types", src_spec.name, spec.name));
                    }
                    if src_spec.nullable && !spec.nullable {
                        return type_error(format!("nullable {} assigned to NOT NULL {}", src_spec.name, spec.name));
                    }
                    Expr::Column(src)
                }
                Expr::Literal(_) => self.value_for(spec, e)?,
                Expr::Arith { .. } | Expr::Neg(_) => return unsupported(Feature::Arithmetic),
                Expr::Function { name, .. } => return unsupported(Feature::BuiltinFunction(name.clone())),
                _ => return other("UPDATE values other than constants and columns"),
            };
            assignments.push((spec.name.clone(), value));
        }
        let where_ = u.where_.as_ref().map(|c| self.cond(c, &Env::plain(&scope, &[]))).transpose()?;
        Ok(Statement::Update(Update { table, assignments, from, where_ }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;

    const MANIFEST: &str = r#"
version = 1
[[domain]]
id = "key"
kind = "numeric"
min = "0"
max = "999"
[[domain]]
id = "qty"
kind = "numeric"
min = "1"
max = "50"
max_group = 100
max_sum = 5000
[[domain]]
id = "text"
kind = "text"
[[table]]
name = "T"
[[table.column]]
name = "A"
type = "integer"
domain = "key"
[[table.column]]
name = "Q"
type = "integer"
domain = "qty"
extension = true
nullable = true
[[table.column]]
name = "S"
type = "varchar"
length = 10
encoding = "fuzzy"
domain = "text"
nullable = true
[[table.column]]
name = "F"
type = "char"
length = 4
encoding = "fixed"
width = 6
domain = "text"
[[table]]
name = "U"
[[table.column]]
name = "A"
type = "integer"
domain = "key"
[[table.column]]
name = "B"
type = "integer"
domain = "qty"
[principals.limited]
tables = ["U"]
"#;

    fn m() -> Manifest {
        Manifest::from_toml(MANIFEST).unwrap()
    }

    fn check(sql: &str) -> VResult<Statement> {
        validate_statement(&parse(sql).unwrap(), &m(), "owner")
    }

    fn feature(sql: &str) -> Feature {
        match check(sql) {
            Err(SqlError::UnsupportedFeature(f)) => f,
            other => panic!("{sql}: {other:?}"),
        }
    }

    #[test]
    fn canonicalizes_names() {
        let Statement::Select(s) = check("select a, q from t where s = 'x' order by a desc").unwrap() else { panic!() };
        assert_eq!(s.items[0], SelectItem::Expr(Expr::Column(ColumnRef::new(Some("T"), "A"))));
        assert_eq!(s.order_by[0].column, ColumnRef::new(Some("T"), "A"));
    }

    #[test]
    fn rejects_unsupported_constructs() {
        assert_eq!(feature("SELECT A * 2 FROM T"), Feature::Arithmetic);
        assert_eq!(feature("SELECT A FROM T WHERE A + 1 > 3"), Feature::Arithmetic);
        assert_eq!(feature("SELECT ABS(A) FROM T"), Feature::BuiltinFunction("ABS".into()));
        assert_eq!(feature("SELECT DISTINCT A FROM T"), Feature::Distinct);
        assert_eq!(feature("SELECT A FROM T GROUP BY A HAVING SUM(Q) > SUM(Q)"), Feature::SumVsSum);
        assert!(matches!(feature("SELECT T.A FROM T, U WHERE T.Q = U.A"), Feature::CrossDomain(_)));
        assert_eq!(feature("SELECT A FROM T WHERE EXISTS (SELECT B FROM U WHERE U.A = T.A)"), Feature::CorrelatedSubquery);
        assert_eq!(feature("SELECT A FROM T GROUP BY ALL A"), Feature::GroupByAll);
        assert_eq!(feature("SELECT T.A FROM T, T"), Feature::SelfJoin);
        assert!(matches!(feature("SELECT SUM(A) FROM T"), Feature::SumWithoutExtension(_)));
        assert!(matches!(feature("SELECT A FROM T WHERE F LIKE 'a%'"), Feature::LikeEncoding(_)));
    }

    #[test]
    fn name_and_type_errors() {
        assert!(matches!(check("SELECT Z FROM T"), Err(SqlError::UnknownIdentifier(_))));
        assert!(matches!(check("SELECT A FROM T, U"), Err(SqlError::Ambiguous(_))));
        assert!(matches!(check("SELECT A FROM T WHERE S = 5"), Err(SqlError::Type(_))));
        assert!(matches!(check("SELECT A FROM T WHERE A = NULL"), Err(SqlError::Type(_))));
        assert!(matches!(check("SELECT A FROM T WHERE MIN(A) = 1"), Err(SqlError::Type(_))));
        assert!(matches!(check("SELECT A, COUNT(Q) FROM T"), Err(SqlError::Type(_))));
        assert!(matches!(check("INSERT INTO T (A) VALUES (1)"), Err(SqlError::Type(_))));
        assert!(matches!(check("INSERT INTO T VALUES (1, 2, NULL, 'abcdefg')"), Err(SqlError::Type(_))));
        assert!(matches!(check("INSERT INTO T VALUES (1000, 2, NULL, 'ab')"), Err(SqlError::Type(_))));
        assert!(check("INSERT INTO T VALUES (999, DEFAULT, NULL, 'ab')").is_ok());
        assert!(check("SELECT A FROM T WHERE A > 5000").is_ok());
    }

    #[test]
    fn permissions() {
        let stmt = parse("SELECT A FROM T").unwrap();
        assert!(matches!(validate_statement(&stmt, &m(), "limited"), Err(SqlError::PermissionDenied { .. })));
        let stmt = parse("SELECT A FROM U").unwrap();
        assert!(validate_statement(&stmt, &m(), "limited").is_ok());
        assert!(matches!(validate_statement(&stmt, &m(), "nobody"), Err(SqlError::PermissionDenied { .. })));
    }

    #[test]
    fn update_from_includes_target() {
        let Statement::Update(u) = check("UPDATE T SET A = U.A FROM U WHERE U.B = T.Q").unwrap() else { panic!() };
        assert_eq!(u.from.len(), 2);
        assert_eq!(u.from[0], TableRef::Table("T".into()));
    }

    #[test]
    fn headers() {
        let Statement::Select(s) = check("SELECT MIN(Q), COUNT(1), A FROM T GROUP BY A").unwrap() else { panic!() };
        assert_eq!(item_headers(&s.items, &m()), vec!["MIN(Q)", "COUNT(1)", "A"]);
    }
}
