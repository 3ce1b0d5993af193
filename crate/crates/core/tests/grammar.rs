//! Parse/render fixpoint over a statement corpus and over generated trees,
//! plus the rejection kinds for malformed and unsupported input.

use cipherdb_core::dataset::{self, DatasetSpec};
use cipherdb_core::manifest::OWNER_PRINCIPAL;
use cipherdb_core::sql::*;
use proptest::prelude::*;

const CORPUS: &str = include_str!("data/grammar.sql");

fn corpus() -> Vec<&'static str> {
    CORPUS.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("--")).collect()
}

#[test]
fn corpus_reaches_a_fixpoint() {
    let lines = corpus();
    assert!(lines.len() >= 100, "{} statements", lines.len());
    for text in lines {
        let first = parse(text).unwrap_or_else(|e| panic!("{text}: {e}"));
        let rendered = render_statement(&first);
        let second = parse(&rendered).unwrap_or_else(|e| panic!("{rendered}: {e}"));
        assert_eq!(first, second, "{text}\n  rendered as {rendered}");
        assert_eq!(render_statement(&second), rendered);
    }
}

fn parse_error(text: &str) -> SqlError {
    parse(text).expect_err(text)
}

#[test]
fn syntax_violations() {
    for text in [
        "SELECT FROM t",
        "SELECT a FROM",
        "SELECT a t",
        "SELECT a FROM t WHERE",
        "SELECT a FROM t WHERE a BETWEEN 1",
        "SELECT a FROM t WHERE a IN ()",
        "SELECT a FROM t WHERE a LIKE b",
        "SELECT a FROM t GROUP a",
        "SELECT a FROM t ORDER BY",
        "SELECT a FROM t JOIN u",
        "INSERT INTO t VALUES 1",
        "UPDATE t a = 1",
        "DELETE FROM WHERE a = 1",
        "DROP TABLE t",
        "SELECT a FROM t extra",
        "SELECT (a FROM t",
    ] {
        assert!(matches!(parse_error(text), SqlError::Parse { .. }), "{text}: {:?}", parse(text));
    }
    for text in ["SELECT a FROM t WHERE b = 'open", "SELECT a FROM t WHERE b = #"] {
        assert!(matches!(parse_error(text), SqlError::Lex { .. }), "{text}");
    }
}

#[test]
fn nesting_limit_is_enforced() {
    let nest = |levels: usize| {
        let mut q = "SELECT A FROM T".to_string();
        for _ in 1..levels {
            q = format!("SELECT A FROM T WHERE A = ({q})");
        }
        q
    };
    parse(&nest(MAX_NESTING)).unwrap();
    assert!(matches!(parse_error(&nest(MAX_NESTING + 1)), SqlError::Parse { .. }));
}

#[test]
fn unsupported_features_are_named() {
    let manifest = dataset::manifest(&DatasetSpec { scale: 0.0001, seed: 1 });
    let check = |text: &str| validate_statement(&parse(text).unwrap(), &manifest, OWNER_PRINCIPAL);
    type Case = (&'static str, fn(&Feature) -> bool);
    let cases: [Case; 6] = [
        ("SELECT O_TOTALPRICE * 2 FROM ORDERS", |f| *f == Feature::Arithmetic),
        ("SELECT DISTINCT O_ORDERSTATUS FROM ORDERS", |f| *f == Feature::Distinct),
        ("SELECT ABS(O_TOTALPRICE) FROM ORDERS", |f| matches!(f, Feature::BuiltinFunction(_))),
        (
            "SELECT L_RETURNFLAG FROM LINEITEM GROUP BY L_RETURNFLAG HAVING SUM(L_TAX) > SUM(L_DISCOUNT)",
            |f| *f == Feature::SumVsSum,
        ),
        ("SELECT O_ORDERSTATUS FROM ORDERS GROUP BY ALL O_ORDERSTATUS", |f| *f == Feature::GroupByAll),
        ("SELECT N_NAME FROM NATION, NATION", |f| *f == Feature::SelfJoin),
    ];
    for (text, is) in cases {
        match check(text) {
            Err(SqlError::UnsupportedFeature(f)) => assert!(is(&f), "{text}: {f:?}"),
            other => panic!("{text}: {other:?}"),
        }
    }
    assert!(matches!(check("SELECT NO_SUCH FROM ORDERS"), Err(SqlError::UnknownIdentifier(_))));
    assert!(matches!(check("SELECT A FROM NO_SUCH"), Err(SqlError::UnknownIdentifier(_))));
}

// Generated trees. Only shapes the renderer writes canonically are drawn:
// unsigned number literals, DEFAULT only in value positions, `*` only
// inside COUNT.

const TABLES: [&str; 4] = ["ORDERS", "PART", "T1", "ITEMS"];
const COLUMNS: [&str; 6] = ["A", "B", "QTY", "PRICE", "O_NAME", "X9"];

fn ident(pool: &'static [&'static str]) -> impl Strategy<Value = String> {
    prop::sample::select(pool).prop_map(str::to_string)
}

fn column() -> impl Strategy<Value = ColumnRef> {
    (prop::option::of(ident(&TABLES)), ident(&COLUMNS)).prop_map(|(table, column)| ColumnRef { table, column })
}

fn number() -> impl Strategy<Value = String> {
    prop_oneof![(0u32..100_000).prop_map(|n| n.to_string()), (0u32..1000, 0u32..100).prop_map(|(a, b)| format!("{a}.{b:02}"))]
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        3 => number().prop_map(Literal::Number),
        2 => "[a-zA-Z0-9 '%_#-]{0,8}".prop_map(Literal::Str),
        1 => Just(Literal::Null),
    ]
}

fn agg() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (prop::sample::select(vec![AggFn::Min, AggFn::Max, AggFn::Count, AggFn::Sum, AggFn::Avg]), column())
            .prop_map(|(func, c)| Expr::Aggregate { func, arg: Box::new(Expr::Column(c)) }),
        Just(Expr::Aggregate { func: AggFn::Count, arg: Box::new(Expr::Star) }),
    ]
}

fn scalar() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![4 => column().prop_map(Expr::Column), 3 => literal().prop_map(Expr::Literal), 1 => agg()];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (
                prop::sample::select(vec![ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div, ArithOp::Mod]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Expr::Arith { op, left: Box::new(l), right: Box::new(r) }),
            column().prop_map(|c| Expr::Neg(Box::new(Expr::Column(c)))),
            (prop::sample::select(vec!["ABS", "ROUND"]), prop::collection::vec(inner, 1..3))
                .prop_map(|(n, args)| Expr::Function { name: n.to_string(), args }),
        ]
    })
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge])
}

fn cond_with(sub: BoxedStrategy<Select>) -> impl Strategy<Value = Cond> {
    let sub2 = sub.clone();
    let leaf = prop_oneof![
        4 => (scalar(), cmp_op(), scalar()).prop_map(|(left, op, right)| Cond::Compare { left, op, right }),
        1 => (scalar(), any::<bool>(), scalar(), scalar())
            .prop_map(|(expr, negated, low, high)| Cond::Between { expr, negated, low, high }),
        1 => (scalar(), any::<bool>()).prop_map(|(expr, negated)| Cond::IsNull { expr, negated }),
        1 => (scalar(), any::<bool>(), prop::collection::vec(scalar(), 1..4))
            .prop_map(|(expr, negated, list)| Cond::InList { expr, negated, list }),
        1 => (column(), any::<bool>(), "[a-z%_]{0,6}", prop::option::of(prop::sample::select(vec!['!', '\\', '^'])))
            .prop_map(|(c, negated, pattern, escape)| Cond::Like { expr: Expr::Column(c), negated, pattern, escape }),
        1 => (any::<bool>(), sub).prop_map(|(negated, q)| Cond::Exists { negated, query: Box::new(q) }),
        1 => (column(), cmp_op(), sub2).prop_map(|(c, op, q)| Cond::Compare {
            left: Expr::Column(c),
            op,
            right: Expr::Subquery(Box::new(q)),
        }),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Cond::And(Box::new(l), Box::new(r))),
            (inner.clone(), inner).prop_map(|(l, r)| Cond::Or(Box::new(l), Box::new(r))),
        ]
    })
}

fn table_ref(sub: BoxedStrategy<Select>) -> impl Strategy<Value = TableRef> {
    let kind = prop::sample::select(vec![JoinType::Inner, JoinType::Left, JoinType::Right, JoinType::Full]);
    (ident(&TABLES), prop::collection::vec((kind, ident(&TABLES), cond_with(sub)), 0..3)).prop_map(|(first, joins)| {
        joins.into_iter().fold(TableRef::Table(first), |left, (kind, right, on)| TableRef::Join {
            left: Box::new(left),
            kind,
            right,
            on,
        })
    })
}

fn select_item() -> impl Strategy<Value = SelectItem> {
    prop_oneof![1 => Just(SelectItem::All), 1 => ident(&TABLES).prop_map(SelectItem::AllOf), 5 => scalar().prop_map(SelectItem::Expr)]
}

fn order_item() -> impl Strategy<Value = OrderItem> {
    (column(), prop::option::of(prop::sample::select(vec![Direction::Asc, Direction::Desc])))
        .prop_map(|(column, direction)| OrderItem { column, direction })
}

fn select_over(sub: BoxedStrategy<Select>) -> BoxedStrategy<Select> {
    (
        any::<bool>(),
        prop::collection::vec(select_item(), 1..4),
        prop::collection::vec(table_ref(sub.clone()), 1..3),
        prop::option::of(cond_with(sub.clone())),
        (any::<bool>(), prop::collection::vec(column(), 0..3), prop::option::of(cond_with(sub))),
        prop::collection::vec(order_item(), 0..3),
    )
        .prop_map(|(distinct, items, from, where_, (all, group_by, having), order_by)| Select {
            distinct,
            items,
            from,
            where_,
            group_all: all && !group_by.is_empty(),
            group_by,
            having,
            order_by,
        })
        .boxed()
}

/// A select whose subqueries are at most `depth` levels deep.
fn select(depth: u32) -> BoxedStrategy<Select> {
    let flat = (prop::collection::vec(select_item(), 1..3), ident(&TABLES)).prop_map(|(items, t)| Select {
        distinct: false,
        items,
        from: vec![TableRef::Table(t)],
        where_: None,
        group_all: false,
        group_by: vec![],
        having: None,
        order_by: vec![],
    });
    let mut s = flat.boxed();
    for _ in 0..depth {
        s = select_over(s);
    }
    s
}

fn value_expr() -> impl Strategy<Value = Expr> {
    prop_oneof![5 => scalar(), 1 => Just(Expr::Literal(Literal::Default))]
}

fn statement() -> impl Strategy<Value = Statement> {
    prop_oneof![
        3 => select(2).prop_map(Statement::Select),
        1 => (
            ident(&TABLES),
            prop::collection::vec(ident(&COLUMNS), 0..3),
            prop_oneof![
                prop::collection::vec(prop::collection::vec(value_expr(), 1..4), 1..3).prop_map(InsertSource::Values),
                select(1).prop_map(|q| InsertSource::Select(Box::new(q))),
            ]
        )
            .prop_map(|(table, columns, source)| Statement::Insert(Insert { table, columns, source })),
        1 => (
            ident(&TABLES),
            prop::collection::vec((ident(&COLUMNS), value_expr()), 1..3),
            prop::collection::vec(table_ref(select(0)), 0..2),
            prop::option::of(cond_with(select(1)))
        )
            .prop_map(|(table, assignments, from, where_)| Statement::Update(Update { table, assignments, from, where_ })),
        1 => (ident(&TABLES), prop::option::of(cond_with(select(1))))
            .prop_map(|(table, where_)| Statement::Delete(Delete { table, where_ })),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn generated_trees_survive_rendering(stmt in statement()) {
        let text = render_statement(&stmt);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, stmt, "{}", text);
    }
}
