//! Canonical text for statement trees. Rendering then parsing gives back
//! an equal tree.

use std::fmt::Write;

use super::ast::*;

pub fn render_statement(s: &Statement) -> String {
    match s {
        Statement::Select(q) => render_select(q),
        Statement::Insert(i) => {
            let mut out = format!("INSERT INTO {}", i.table);
            if !i.columns.is_empty() {
                let _ = write!(out, " ({})", i.columns.join(", "));
            }
            match &i.source {
                InsertSource::Values(rows) => {
                    let rows: Vec<String> =
                        rows.iter().map(|r| format!("({})", r.iter().map(render_expr).collect::<Vec<_>>().join(", "))).collect();
                    let _ = write!(out, " VALUES {}", rows.join(", "));
                }
                InsertSource::Select(q) => {
                    let _ = write!(out, " {}", render_select(q));
                }
            }
            out
        }
        Statement::Update(u) => {
            let sets: Vec<String> = u.assignments.iter().map(|(c, e)| format!("{c} = {}", render_expr(e))).collect();
            let mut out = format!("UPDATE {} SET {}", u.table, sets.join(", "));
            if !u.from.is_empty() {
                let _ = write!(out, " FROM {}", render_from(&u.from));
            }
            if let Some(w) = &u.where_ {
                let _ = write!(out, " WHERE {}", render_cond(w));
            }
            out
        }
        Statement::Delete(d) => {
            let mut out = format!("DELETE FROM {}", d.table);
            if let Some(w) = &d.where_ {
                let _ = write!(out, " WHERE {}", render_cond(w));
            }
            out
        }
    }
}

pub fn render_select(q: &Select) -> String {
    let items: Vec<String> = q
        .items
        .iter()
        .map(|i| match i {
            SelectItem::All => "*".to_string(),
            SelectItem::AllOf(t) => format!("{t}.*"),
            SelectItem::Expr(e) => render_expr(e),
        })
        .collect();
    let mut out = String::from("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    let _ = write!(out, "{} FROM {}", items.join(", "), render_from(&q.from));
    if let Some(w) = &q.where_ {
        let _ = write!(out, " WHERE {}", render_cond(w));
    }
    if !q.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        if q.group_all {
            out.push_str("ALL ");
        }
        out.push_str(&q.group_by.iter().map(render_column).collect::<Vec<_>>().join(", "));
    }
    if let Some(h) = &q.having {
        let _ = write!(out, " HAVING {}", render_cond(h));
    }
    if !q.order_by.is_empty() {
        let keys: Vec<String> = q
            .order_by
            .iter()
            .map(|o| match o.direction {
                None => render_column(&o.column),
                Some(Direction::Asc) => format!("{} ASC", render_column(&o.column)),
                Some(Direction::Desc) => format!("{} DESC", render_column(&o.column)),
            })
            .collect();
        let _ = write!(out, " ORDER BY {}", keys.join(", "));
    }
    out
}

fn render_from(from: &[TableRef]) -> String {
    from.iter().map(render_table_ref).collect::<Vec<_>>().join(", ")
}

fn render_table_ref(t: &TableRef) -> String {
    match t {
        TableRef::Table(n) => n.clone(),
        TableRef::Join { left, kind, right, on } => {
            format!("{} {} {} ON {}", render_table_ref(left), kind.keyword(), right, render_cond(on))
        }
    }
}

pub fn render_column(c: &ColumnRef) -> String {
    match &c.table {
        Some(t) => format!("{t}.{}", c.column),
        None => c.column.clone(),
    }
}

pub fn quote_string(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

pub fn render_expr(e: &Expr) -> String {
    match e {
        Expr::Column(c) => render_column(c),
        Expr::Literal(Literal::Number(n)) => n.clone(),
        Expr::Literal(Literal::Str(s)) => quote_string(s),
        Expr::Literal(Literal::Null) => "NULL".into(),
        Expr::Literal(Literal::Default) => "DEFAULT".into(),
        Expr::Aggregate { func, arg } => format!("{}({})", func.name(), render_expr(arg)),
        Expr::Star => "*".to_string(),
        Expr::Subquery(q) => format!("({})", render_select(q)),
        Expr::Function { name, args } => {
            format!("{name}({})", args.iter().map(render_expr).collect::<Vec<_>>().join(", "))
        }
        Expr::Arith { op, left, right } => format!("({} {} {})", render_expr(left), op.symbol(), render_expr(right)),
        Expr::Neg(inner) => format!("-{}", render_expr(inner)),
    }
}

pub fn render_cond(c: &Cond) -> String {
    match c {
        Cond::And(l, r) => format!("{} AND {}", child(l, true, true), child(r, true, false)),
        Cond::Or(l, r) => format!("{} OR {}", child(l, false, true), child(r, false, false)),
        Cond::Compare { left, op, right } => format!("{} {} {}", render_expr(left), op.symbol(), render_expr(right)),
        Cond::Between { expr, negated, low, high } => format!(
            "{} {}BETWEEN {} AND {}",
            render_expr(expr),
            not(*negated),
            render_expr(low),
            render_expr(high)
        ),
        Cond::IsNull { expr, negated } => {
            format!("{} IS {}NULL", render_expr(expr), not(*negated))
        }
        Cond::InList { expr, negated, list } => format!(
            "{} {}IN ({})",
            render_expr(expr),
            not(*negated),
            list.iter().map(render_expr).collect::<Vec<_>>().join(", ")
        ),
        Cond::Like { expr, negated, pattern, escape } => {
            let mut s = format!("{} {}LIKE {}", render_expr(expr), not(*negated), quote_string(pattern));
            if let Some(e) = escape {
                let _ = write!(s, " ESCAPE {}", quote_string(&e.to_string()));
            }
            s
        }
        Cond::Exists { negated, query } => format!("{}EXISTS ({})", not(*negated), render_select(query)),
    }
}

fn not(negated: bool) -> &'static str {
    if negated {
        "NOT "
    } else {
        ""
    }
}

/// Child of an AND (`in_and`) or OR node. A same-operator left child needs
/// no parentheses because both operators associate to the left.
fn child(c: &Cond, in_and: bool, left: bool) -> String {
    let needs = match c {
        Cond::And(..) => !(in_and && left),
        Cond::Or(..) => !(!in_and && left),
        _ => false,
    };
    if needs {
        format!("({})", render_cond(c))
    } else {
        render_cond(c)
    }
}
