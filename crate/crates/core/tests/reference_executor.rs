//! Hand-computed results on two tiny tables, checked against the reference
//! executor and then against the encrypted pipeline.

use cipherdb_core::manifest::{Manifest, OWNER_PRINCIPAL};
use cipherdb_core::oracle::{compare_results, run_statement, OracleOutcome};
use cipherdb_core::owner::{Owner, PlainDatabase};
use cipherdb_core::sql::{parse, validate_statement};
use cipherdb_core::{ResultTable, Value};

const MANIFEST: &str = r#"
version = 1
[[domain]]
id = "id"
kind = "numeric"
min = "1"
max = "20"
[[domain]]
id = "dept"
kind = "numeric"
min = "1"
max = "5"
[[domain]]
id = "sal"
kind = "numeric"
min = "1"
max = "100"
max_group = 10
max_sum = 1000
[[domain]]
id = "text"
kind = "text"
[[table]]
name = "EMP"
[[table.column]]
name = "ID"
type = "integer"
domain = "id"
[[table.column]]
name = "DEPT"
type = "integer"
domain = "dept"
nullable = true
[[table.column]]
name = "SAL"
type = "integer"
domain = "sal"
extension = true
nullable = true
[[table.column]]
name = "NAME"
type = "varchar"
length = 10
encoding = "fuzzy"
domain = "text"
[[table]]
name = "DEPT"
[[table.column]]
name = "DID"
type = "integer"
domain = "dept"
[[table.column]]
name = "DNAME"
type = "varchar"
length = 10
encoding = "fuzzy"
domain = "text"
"#;

fn t(s: &str) -> Value {
    Value::Text(s.into())
}

fn i(v: i128) -> Value {
    Value::Int(v)
}

const N: Value = Value::Null;

fn database() -> PlainDatabase {
    let mut db = PlainDatabase::new();
    db.insert(
        "EMP".into(),
        vec![
            vec![i(1), i(1), i(10), t("ann")],
            vec![i(2), i(1), i(20), t("bob")],
            vec![i(3), i(2), i(30), t("cat")],
            vec![i(4), N, i(40), t("dan")],
            vec![i(5), i(2), N, t("eve")],
        ],
    );
    db.insert("DEPT".into(), vec![vec![i(1), t("eng")], vec![i(2), t("ops")], vec![i(3), t("hr")]]);
    db
}

fn manifest() -> Manifest {
    Manifest::from_toml(MANIFEST).unwrap()
}

fn reference(db: &mut PlainDatabase, sql: &str) -> OracleOutcome {
    let m = manifest();
    let stmt = validate_statement(&parse(sql).unwrap(), &m, OWNER_PRINCIPAL).unwrap();
    run_statement(&m, db, &stmt).unwrap()
}

fn rows(sql: &str) -> Vec<Vec<Value>> {
    match reference(&mut database(), sql) {
        OracleOutcome::Rows(r) => r.rows,
        other => panic!("{sql}: {other:?}"),
    }
}

fn names(list: &[&str]) -> Vec<Vec<Value>> {
    list.iter().map(|n| vec![t(n)]).collect()
}

fn ratio(n: i128, d: i128) -> Value {
    Value::Ratio(num_rational::Ratio::new(n, d))
}

/// (statement, expected rows in the order the executor must produce them)
fn micro_queries() -> Vec<(&'static str, Vec<Vec<Value>>)> {
    vec![
        ("SELECT NAME FROM EMP WHERE SAL > 15", names(&["bob", "cat", "dan"])),
        ("SELECT NAME FROM EMP WHERE DEPT <> 1", names(&["cat", "eve"])),
        ("SELECT NAME FROM EMP WHERE DEPT IS NULL", names(&["dan"])),
        ("SELECT NAME FROM EMP WHERE DEPT NOT IN (1)", names(&["cat", "eve"])),
        ("SELECT NAME FROM EMP WHERE SAL BETWEEN 20 AND 30", names(&["bob", "cat"])),
        ("SELECT NAME FROM EMP WHERE SAL NOT BETWEEN 20 AND 30", names(&["ann", "dan"])),
        ("SELECT NAME FROM EMP WHERE DEPT = 1 OR SAL > 35", names(&["ann", "bob", "dan"])),
        (
            "SELECT DEPT, COUNT(*), COUNT(SAL), SUM(SAL) FROM EMP GROUP BY DEPT",
            vec![vec![i(1), i(2), i(2), i(30)], vec![i(2), i(2), i(1), i(30)], vec![N, i(1), i(1), i(40)]],
        ),
        ("SELECT AVG(SAL) FROM EMP", vec![vec![ratio(25, 1)]]),
        ("SELECT AVG(SAL) FROM EMP WHERE ID < 3 OR ID = 4", vec![vec![ratio(70, 3)]]),
        ("SELECT MIN(NAME), MAX(NAME) FROM EMP", vec![vec![t("ann"), t("eve")]]),
        (
            "SELECT NAME, DNAME FROM EMP JOIN DEPT ON DEPT = DID",
            vec![vec![t("ann"), t("eng")], vec![t("bob"), t("eng")], vec![t("cat"), t("ops")], vec![t("eve"), t("ops")]],
        ),
        (
            "SELECT NAME, DNAME FROM EMP LEFT JOIN DEPT ON DEPT = DID",
            vec![
                vec![t("ann"), t("eng")],
                vec![t("bob"), t("eng")],
                vec![t("cat"), t("ops")],
                vec![t("dan"), N],
                vec![t("eve"), t("ops")],
            ],
        ),
        (
            "SELECT NAME, DNAME FROM EMP RIGHT JOIN DEPT ON DEPT = DID",
            vec![
                vec![t("ann"), t("eng")],
                vec![t("bob"), t("eng")],
                vec![t("cat"), t("ops")],
                vec![t("eve"), t("ops")],
                vec![N, t("hr")],
            ],
        ),
        (
            "SELECT NAME, DNAME FROM EMP FULL JOIN DEPT ON DEPT = DID",
            vec![
                vec![t("ann"), t("eng")],
                vec![t("bob"), t("eng")],
                vec![t("cat"), t("ops")],
                vec![t("dan"), N],
                vec![t("eve"), t("ops")],
                vec![N, t("hr")],
            ],
        ),
        ("SELECT NAME FROM EMP ORDER BY SAL DESC", names(&["dan", "cat", "bob", "ann", "eve"])),
        ("SELECT NAME FROM EMP ORDER BY DEPT", names(&["dan", "ann", "bob", "cat", "eve"])),
        ("SELECT NAME FROM EMP WHERE NAME LIKE '_a%'", names(&["cat", "dan"])),
        ("SELECT NAME FROM EMP WHERE NAME LIKE '%[ab]%'", names(&["ann", "bob", "cat", "dan"])),
        ("SELECT NAME FROM EMP WHERE SAL > (SELECT SAL FROM EMP WHERE ID = 2)", names(&["cat", "dan"])),
        ("SELECT NAME FROM EMP WHERE SAL = (SELECT SAL FROM EMP WHERE ID = 19)", vec![]),
        ("SELECT NAME FROM EMP WHERE EXISTS (SELECT DID FROM DEPT WHERE DNAME = 'zzz')", vec![]),
        ("SELECT DEPT FROM EMP GROUP BY DEPT HAVING SUM(SAL) > 30", vec![vec![N]]),
        ("SELECT DNAME FROM DEPT WHERE DID < (SELECT MAX(DEPT) FROM EMP)", names(&["eng"])),
    ]
}

#[test]
fn hand_computed_micro_queries() {
    let list = micro_queries();
    assert!(list.len() >= 20);
    for (sql, expected) in list {
        let got = rows(sql);
        assert_eq!(got.len(), expected.len(), "{sql}: {got:?}");
        let ordered = ResultTable { headers: vec![], rows: expected.clone(), ordered: true };
        let actual = ResultTable { headers: vec![], rows: got.clone(), ordered: true };
        assert!(compare_results(&ordered, &actual).exact(), "{sql}: got {got:?}, expected {expected:?}");
    }
}

#[test]
fn hand_computed_mutations() {
    let mut db = database();
    assert_eq!(reference(&mut db, "UPDATE EMP SET SAL = 50 WHERE DEPT = 2"), OracleOutcome::Affected(2));
    assert_eq!(db["EMP"][2][2], i(50));
    assert_eq!(db["EMP"][4][2], i(50));
    assert_eq!(reference(&mut db, "DELETE FROM EMP WHERE DEPT IS NULL"), OracleOutcome::Affected(1));
    assert_eq!(db["EMP"].len(), 4);
    assert_eq!(reference(&mut db, "INSERT INTO EMP (ID, NAME) VALUES (9, 'zed')"), OracleOutcome::Affected(1));
    assert_eq!(db["EMP"][4], vec![i(9), N, N, t("zed")]);
    assert_eq!(
        reference(&mut db, "UPDATE EMP SET DEPT = 3 FROM EMP, DEPT WHERE DEPT = DID AND DNAME = 'eng'"),
        OracleOutcome::Affected(2)
    );
    assert_eq!(db["EMP"][0][1], i(3));
}

#[test]
fn encrypted_pipeline_agrees_on_micro_queries() {
    let db = database();
    let mut owner = Owner::from_seed(manifest(), 5).unwrap();
    let mut store = owner.encrypt_database(&db).unwrap();
    for (sql, expected) in micro_queries() {
        let got = owner.run(&mut store, sql, OWNER_PRINCIPAL).unwrap().result.unwrap();
        let exp = ResultTable { headers: got.headers.clone(), rows: expected, ordered: true };
        let c = compare_results(&exp, &got);
        assert!(c.exact(), "{sql}: got {:?}", got.rows);
    }
}
