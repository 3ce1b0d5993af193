use super::ast::*;
use super::lexer::{tokenize, Span, Token, TokenKind};
use super::SqlError;

/// Deepest allowed SELECT nesting; the outermost statement is level 1.
pub const MAX_NESTING: usize = 32;

pub fn parse(text: &str) -> Result<Statement, SqlError> {
    parse_statement(&tokenize(text)?)
}

pub fn parse_statement(tokens: &[Token]) -> Result<Statement, SqlError> {
    let mut p = Parser { toks: tokens, pos: 0, depth: 0 };
    let stmt = p.statement()?;
    p.eat_punct(";");
    if let Some(t) = p.peek() {
        return Err(p.error_at("end of statement", t));
    }
    Ok(stmt)
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, SqlError>;

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&'t Token> {
        self.toks.get(self.pos + k)
    }

    fn eof_span(&self) -> Span {
        let end = self.toks.last().map_or(0, |t| t.span.end);
        Span { start: end, end }
    }

    fn error_at(&self, expected: &str, t: &Token) -> SqlError {
        SqlError::Parse { expected: expected.to_string(), found: format!("{:?}", t.lexeme), span: t.span }
    }

    fn error(&self, expected: &str) -> SqlError {
        match self.peek() {
            Some(t) => self.error_at(expected, t),
            None => SqlError::Parse { expected: expected.to_string(), found: "end of input".into(), span: self.eof_span() },
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&format!("'{p}'")))
        }
    }

    fn identifier(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(t.lexeme.clone())
            }
            _ => Err(self.error(what)),
        }
    }

    fn statement(&mut self) -> PResult<Statement> {
        match self.peek() {
            Some(t) if t.is_keyword("SELECT") => Ok(Statement::Select(self.select()?)),
            Some(t) if t.is_keyword("INSERT") => self.insert(),
            Some(t) if t.is_keyword("UPDATE") => self.update(),
            Some(t) if t.is_keyword("DELETE") => self.delete(),
            _ => Err(self.error("SELECT, INSERT, UPDATE or DELETE")),
        }
    }

    fn select(&mut self) -> PResult<Select> {
        let start = self.peek().cloned();
        self.expect_keyword("SELECT")?;
        self.depth += 1;
        if self.depth > MAX_NESTING {
            let t = start.expect("SELECT token");
            return Err(SqlError::Parse {
                expected: format!("at most {MAX_NESTING} nesting levels"),
                found: format!("level {}", self.depth),
                span: t.span,
            });
        }
        let distinct = self.eat_keyword("DISTINCT");
        let mut items = vec![self.select_item()?];
        while self.eat_punct(",") {
            items.push(self.select_item()?);
        }
        self.expect_keyword("FROM")?;
        let from = self.table_source()?;
        let where_ = if self.eat_keyword("WHERE") { Some(self.cond()?) } else { None };
        let mut group_all = false;
        let mut group_by = Vec::new();
        if self.eat_keyword("GROUP") {
            self.expect_keyword("BY")?;
            group_all = self.eat_keyword("ALL");
            group_by.push(self.column_ref()?);
            while self.eat_punct(",") {
                group_by.push(self.column_ref()?);
            }
        }
        let having = if self.eat_keyword("HAVING") { Some(self.cond()?) } else { None };
        let mut order_by = Vec::new();
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            loop {
                let column = self.column_ref()?;
                let direction = if self.eat_keyword("ASC") {
                    Some(Direction::Asc)
                } else if self.eat_keyword("DESC") {
                    Some(Direction::Desc)
                } else {
                    None
                };
                order_by.push(OrderItem { column, direction });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.depth -= 1;
        Ok(Select { distinct, items, from, where_, group_all, group_by, having, order_by })
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if let (Some(a), Some(b), Some(c)) = (self.peek(), self.peek_at(1), self.peek_at(2)) {
            if a.kind == TokenKind::Identifier && b.is_punct(".") && c.is_punct("*") {
                self.pos += 3;
                return Ok(SelectItem::AllOf(a.lexeme.clone()));
            }
        }
        if self.eat_punct("*") {
            return Ok(SelectItem::All);
        }
        if self.at_keyword("FROM") || self.peek().is_none() {
            return Err(self.error("select list item"));
        }
        Ok(SelectItem::Expr(self.expr()?))
    }

    fn column_ref(&mut self) -> PResult<ColumnRef> {
        let first = self.identifier("column name")?;
        if self.eat_punct(".") {
            let col = self.identifier("column name")?;
            Ok(ColumnRef { table: Some(first), column: col })
        } else {
            Ok(ColumnRef { table: None, column: first })
        }
    }

    fn table_source(&mut self) -> PResult<Vec<TableRef>> {
        let mut v = vec![self.table_ref()?];
        while self.eat_punct(",") {
            v.push(self.table_ref()?);
        }
        Ok(v)
    }

    fn join_type(&mut self) -> PResult<Option<JoinType>> {
        let kind = match self.peek() {
            Some(t) if t.is_keyword("JOIN") => JoinType::Inner,
            Some(t) if t.is_keyword("INNER") => JoinType::Inner,
            Some(t) if t.is_keyword("LEFT") => JoinType::Left,
            Some(t) if t.is_keyword("RIGHT") => JoinType::Right,
            Some(t) if t.is_keyword("FULL") => JoinType::Full,
            _ => return Ok(None),
        };
        if !self.eat_keyword("JOIN") {
            self.pos += 1;
            if kind != JoinType::Inner {
                self.eat_keyword("OUTER");
            }
            self.expect_keyword("JOIN")?;
        }
        Ok(Some(kind))
    }

    fn table_ref(&mut self) -> PResult<TableRef> {
        let mut t = TableRef::Table(self.identifier("table name")?);
        while let Some(kind) = self.join_type()? {
            let right = self.identifier("table name")?;
            self.expect_keyword("ON")?;
            let on = self.cond()?;
            t = TableRef::Join { left: Box::new(t), kind, right, on };
        }
        Ok(t)
    }

    fn cond(&mut self) -> PResult<Cond> {
        let mut c = self.and_cond()?;
        while self.eat_keyword("OR") {
            let r = self.and_cond()?;
            c = Cond::Or(Box::new(c), Box::new(r));
        }
        Ok(c)
    }

    fn and_cond(&mut self) -> PResult<Cond> {
        let mut c = self.primary_cond()?;
        while self.eat_keyword("AND") {
            let r = self.primary_cond()?;
            c = Cond::And(Box::new(c), Box::new(r));
        }
        Ok(c)
    }

    fn primary_cond(&mut self) -> PResult<Cond> {
        if self.at_punct("(") && !self.peek_at(1).is_some_and(|t| t.is_keyword("SELECT")) {
            let save = self.pos;
            self.pos += 1;
            let nested = self.cond().and_then(|c| {
                self.expect_punct(")")?;
                Ok(c)
            });
            match nested {
                Ok(c) => return Ok(c),
                Err(e1) => {
                    let reached = self.pos;
                    self.pos = save;
                    return match self.predicate() {
                        Ok(c) => Ok(c),
                        Err(e2) => Err(if reached > self.pos { e1 } else { e2 }),
                    };
                }
            }
        }
        self.predicate()
    }

    fn predicate(&mut self) -> PResult<Cond> {
        if self.at_keyword("EXISTS") || (self.at_keyword("NOT") && self.peek_at(1).is_some_and(|t| t.is_keyword("EXISTS"))) {
            let negated = self.eat_keyword("NOT");
            self.expect_keyword("EXISTS")?;
            self.expect_punct("(")?;
            let query = self.select()?;
            self.expect_punct(")")?;
            return Ok(Cond::Exists { negated, query: Box::new(query) });
        }
        let expr = self.expr()?;
        if let Some(op) = self.cmp_op() {
            let right = self.expr()?;
            return Ok(Cond::Compare { left: expr, op, right });
        }
        if self.eat_keyword("IS") {
            let negated = self.eat_keyword("NOT");
            self.expect_keyword("NULL")?;
            return Ok(Cond::IsNull { expr, negated });
        }
        let negated = self.eat_keyword("NOT");
        if self.eat_keyword("BETWEEN") {
            let low = self.expr()?;
            self.expect_keyword("AND")?;
            let high = self.expr()?;
            return Ok(Cond::Between { expr, negated, low, high });
        }
        if self.eat_keyword("IN") {
            self.expect_punct("(")?;
            let mut list = vec![self.expr()?];
            while self.eat_punct(",") {
                list.push(self.expr()?);
            }
            self.expect_punct(")")?;
            return Ok(Cond::InList { expr, negated, list });
        }
        if self.eat_keyword("LIKE") {
            let pattern = self.string("pattern string")?;
            let escape = if self.eat_keyword("ESCAPE") {
                let t = self.peek().cloned();
                let e = self.string("escape character")?;
                let mut chars = e.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Some(c),
                    _ => return Err(self.error_at("single escape character", &t.expect("string token"))),
                }
            } else {
                None
            };
            return Ok(Cond::Like { expr, negated, pattern, escape });
        }
        Err(self.error(if negated { "BETWEEN, IN or LIKE" } else { "comparison operator, BETWEEN, IN, IS or LIKE" }))
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::String => {
                self.pos += 1;
                Ok(t.lexeme.clone())
            }
            _ => Err(self.error(what)),
        }
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        let t = self.peek()?;
        if t.kind != TokenKind::Operator {
            return None;
        }
        let op = match t.lexeme.as_str() {
            "=" => CmpOp::Eq,
            "<>" | "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" | "!>" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" | "!<" => CmpOp::Ge,
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.term()?;
        loop {
            let op = if self.at_punct("+") {
                ArithOp::Add
            } else if self.at_punct("-") {
                ArithOp::Sub
            } else {
                return Ok(e);
            };
            self.pos += 1;
            let r = self.term()?;
            e = Expr::Arith { op, left: Box::new(e), right: Box::new(r) };
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = if self.at_punct("*") {
                ArithOp::Mul
            } else if self.at_punct("/") {
                ArithOp::Div
            } else if self.at_punct("%") {
                ArithOp::Mod
            } else {
                return Ok(e);
            };
            self.pos += 1;
            let r = self.unary()?;
            e = Expr::Arith { op, left: Box::new(e), right: Box::new(r) };
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            if let Some(t) = self.peek().filter(|t| t.kind == TokenKind::Number) {
                self.pos += 1;
                return Ok(Expr::Literal(Literal::Number(format!("-{}", t.lexeme))));
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let Some(t) = self.peek() else { return Err(self.error("expression")) };
        match t.kind {
            TokenKind::Number => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Number(t.lexeme.clone())))
            }
            TokenKind::String => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Str(t.lexeme.clone())))
            }
            TokenKind::Keyword => {
                let func = match t.lexeme.as_str() {
                    "NULL" => {
                        self.pos += 1;
                        return Ok(Expr::Literal(Literal::Null));
                    }
                    "DEFAULT" => {
                        self.pos += 1;
                        return Ok(Expr::Literal(Literal::Default));
                    }
                    "MIN" => AggFn::Min,
                    "MAX" => AggFn::Max,
                    "COUNT" => AggFn::Count,
                    "SUM" => AggFn::Sum,
                    "AVG" => AggFn::Avg,
                    _ => return Err(self.error("expression")),
                };
                self.pos += 1;
                self.expect_punct("(")?;
                let arg = if func == AggFn::Count && self.eat_punct("*") { Expr::Star } else { self.expr()? };
                self.expect_punct(")")?;
                Ok(Expr::Aggregate { func, arg: Box::new(arg) })
            }
            TokenKind::Identifier => {
                if self.peek_at(1).is_some_and(|n| n.is_punct("(")) {
                    let name = t.lexeme.clone();
                    self.pos += 2;
                    let mut args = Vec::new();
                    if !self.eat_punct(")") {
                        args.push(self.expr()?);
                        while self.eat_punct(",") {
                            args.push(self.expr()?);
                        }
                        self.expect_punct(")")?;
                    }
                    return Ok(Expr::Function { name, args });
                }
                Ok(Expr::Column(self.column_ref()?))
            }
            TokenKind::Punct if t.lexeme == "(" => {
                self.pos += 1;
                if self.at_keyword("SELECT") {
                    let q = self.select()?;
                    self.expect_punct(")")?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => Err(self.error("expression")),
        }
    }

    fn insert(&mut self) -> PResult<Statement> {
        self.expect_keyword("INSERT")?;
        self.eat_keyword("INTO");
        let table = self.identifier("table name")?;
        let mut columns = Vec::new();
        if self.eat_punct("(") {
            columns.push(self.identifier("column name")?);
            while self.eat_punct(",") {
                columns.push(self.identifier("column name")?);
            }
            self.expect_punct(")")?;
        }
        let source = if self.eat_keyword("VALUES") {
            let mut rows = Vec::new();
            loop {
                self.expect_punct("(")?;
                let mut row = vec![self.expr()?];
                while self.eat_punct(",") {
                    row.push(self.expr()?);
                }
                self.expect_punct(")")?;
                rows.push(row);
                if !self.eat_punct(",") {
                    break;
                }
            }
            InsertSource::Values(rows)
        } else if self.at_keyword("SELECT") {
            InsertSource::Select(Box::new(self.select()?))
        } else {
            return Err(self.error("VALUES or SELECT"));
        };
        Ok(Statement::Insert(Insert { table, columns, source }))
    }

    fn update(&mut self) -> PResult<Statement> {
        self.expect_keyword("UPDATE")?;
        let table = self.identifier("table name")?;
        self.expect_keyword("SET")?;
        let mut assignments = Vec::new();
        loop {
            let col = self.identifier("column name")?;
            if !self.at_punct("=") {
                return Err(self.error("'='"));
            }
            self.pos += 1;
            assignments.push((col, self.expr()?));
            if !self.eat_punct(",") {
                break;
            }
        }
        let from = if self.eat_keyword("FROM") { self.table_source()? } else { Vec::new() };
        let where_ = if self.eat_keyword("WHERE") { Some(self.cond()?) } else { None };
        Ok(Statement::Update(Update { table, assignments, from, where_ }))
    }

    fn delete(&mut self) -> PResult<Statement> {
        self.expect_keyword("DELETE")?;
        self.eat_keyword("FROM");
        let table = self.identifier("table name")?;
        let where_ = if self.eat_keyword("WHERE") { Some(self.cond()?) } else { None };
        Ok(Statement::Delete(Delete { table, where_ }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(c: &str) -> Expr {
        Expr::Column(ColumnRef::new(None, c))
    }

    fn num(n: &str) -> Expr {
        Expr::Literal(Literal::Number(n.into()))
    }

    #[test]
    fn parses_aggregation_with_having() {
        let s = parse(
            "SELECT PS_PARTKEY, SUM(PS_AVAILQTY) FROM PARTSUPP WHERE PS_SUPPKEY < 10 \
             GROUP BY PS_PARTKEY HAVING SUM(PS_AVAILQTY) > 100",
        )
        .unwrap();
        let Statement::Select(s) = s else { panic!() };
        assert_eq!(s.items.len(), 2);
        assert_eq!(s.where_, Some(Cond::Compare { left: col("PS_SUPPKEY"), op: CmpOp::Lt, right: num("10") }));
        assert_eq!(s.group_by, vec![ColumnRef::new(None, "PS_PARTKEY")]);
        assert_eq!(
            s.having,
            Some(Cond::Compare {
                left: Expr::Aggregate { func: AggFn::Sum, arg: Box::new(col("PS_AVAILQTY")) },
                op: CmpOp::Gt,
                right: num("100"),
            })
        );
    }

    #[test]
    fn precedence_and_parentheses() {
        let Statement::Select(s) = parse("SELECT a FROM t WHERE a = 1 OR b = 2 AND (c = 3 OR c BETWEEN 1 AND 2)").unwrap() else {
            panic!()
        };
        let Some(Cond::Or(_, r)) = s.where_ else { panic!() };
        let Cond::And(_, inner) = *r else { panic!() };
        assert!(matches!(*inner, Cond::Or(..)));
    }

    #[test]
    fn parenthesized_expression_backtracks() {
        let Statement::Select(s) = parse("SELECT a FROM t WHERE (a + 1) > 2").unwrap() else { panic!() };
        assert!(matches!(s.where_, Some(Cond::Compare { left: Expr::Arith { .. }, .. })));
        let Statement::Select(s) = parse("SELECT a FROM t WHERE (SELECT MAX(b) FROM u) > a").unwrap() else { panic!() };
        assert!(matches!(s.where_, Some(Cond::Compare { left: Expr::Subquery(_), .. })));
    }

    #[test]
    fn errors() {
        assert!(matches!(parse("SELECT FROM t"), Err(SqlError::Parse { .. })));
        assert!(matches!(parse("SELECT a FROM"), Err(SqlError::Parse { .. })));
        assert!(matches!(parse("SELECT a FROM t WHERE a"), Err(SqlError::Parse { .. })));
        assert!(matches!(parse("SELECT a FROM t extra"), Err(SqlError::Parse { .. })));
        assert!(matches!(parse("SELECT a FROM t WHERE a LIKE 'x' ESCAPE 'ab'"), Err(SqlError::Parse { .. })));
    }

    fn nested(levels: usize) -> String {
        let mut q = "SELECT a FROM t".to_string();
        for _ in 1..levels {
            q = format!("SELECT a FROM t WHERE a = ({q})");
        }
        q
    }

    #[test]
    fn nesting_limit() {
        assert!(parse(&nested(MAX_NESTING)).is_ok());
        match parse(&nested(MAX_NESTING + 1)) {
            Err(SqlError::Parse { expected, .. }) => assert!(expected.contains("32 nesting levels")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dml_forms() {
        let Statement::Insert(i) = parse("INSERT INTO t (a, b) VALUES (1, 'x'), (DEFAULT, NULL)").unwrap() else { panic!() };
        assert_eq!(i.columns, vec!["a", "b"]);
        let InsertSource::Values(rows) = i.source else { panic!() };
        assert_eq!(rows[1], vec![Expr::Literal(Literal::Default), Expr::Literal(Literal::Null)]);
        let Statement::Update(u) = parse("UPDATE t SET a = -5, b = c WHERE d IS NOT NULL").unwrap() else { panic!() };
        assert_eq!(u.assignments[0], ("a".into(), num("-5")));
        assert!(matches!(parse("DELETE t").unwrap(), Statement::Delete(Delete { where_: None, .. })));
        assert!(matches!(parse("INSERT t SELECT a FROM u;").unwrap(), Statement::Insert(_)));
    }

    #[test]
    fn joins_chain_left_to_right() {
        let Statement::Select(s) =
            parse("SELECT a.x FROM a INNER JOIN b ON a.x = b.x LEFT OUTER JOIN c ON b.y = c.y, d").unwrap()
        else {
            panic!()
        };
        assert_eq!(s.from.len(), 2);
        assert_eq!(s.from[0].tables(), vec!["a", "b", "c"]);
        let TableRef::Join { kind, .. } = &s.from[0] else { panic!() };
        assert_eq!(*kind, JoinType::Left);
    }
}
