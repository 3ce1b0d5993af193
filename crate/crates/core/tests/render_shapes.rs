//! Shape checks on the ciphertext SQL printed for the headline statements.

use cipherdb_core::corpus::{DIFFERENTIAL_SCALE, DIFFERENTIAL_SEED};
use cipherdb_core::dataset::{manifest, DatasetSpec};
use cipherdb_core::manifest::OWNER_PRINCIPAL;
use cipherdb_core::owner::Owner;
use cipherdb_core::translator::render_plan;

fn render(sql: &str) -> String {
    let spec = DatasetSpec { scale: DIFFERENTIAL_SCALE, seed: DIFFERENTIAL_SEED };
    let mut owner = Owner::from_seed(manifest(&spec), 3).unwrap();
    let (_, tr) = owner.prepare(sql, OWNER_PRINCIPAL, &mut Vec::new()).unwrap();
    let text = render_plan(&tr.plan);
    println!("{sql}\n{text}");
    text
}

#[test]
fn equi_join_uses_equality_udf_in_on_clause() {
    let text =
        render("SELECT S_SUPPKEY, S_NATIONKEY, N_REGIONKEY FROM SUPPLIER JOIN NATION ON S_NATIONKEY = N_NATIONKEY");
    assert!(text.contains("INNER JOIN"), "{text}");
    assert!(text.contains("ON dbo.EqualityCom(x, "), "{text}");
    assert!(text.contains(") = 0"), "{text}");
    assert!(!text.contains("SUPPLIER"), "plaintext table name leaked: {text}");
}

#[test]
fn between_becomes_two_sided_comparison_with_order() {
    let text = render("SELECT C_CUSTKEY FROM CUSTOMER WHERE C_NATIONKEY BETWEEN 5 AND 9 ORDER BY C_NATIONKEY");
    assert!(text.contains(") >= 0 AND dbo.EqualityCom("), "{text}");
    assert!(text.contains(") <= 0"), "{text}");
    assert!(text.contains("ORDER BY "), "{text}");
    assert!(text.contains(" ASC"), "{text}");
}

#[test]
fn grouping_goes_through_a_temporary_table() {
    let text = render(
        "SELECT PS_PARTKEY FROM PARTSUPP WHERE PS_PARTKEY < 60 GROUP BY PS_PARTKEY HAVING SUM(PS_AVAILQTY) > 20000",
    );
    assert!(text.contains("SELECT TOP 1"), "{text}");
    assert!(text.contains("INTO #TEMPORARY_TABLE1"), "{text}");
    assert!(text.contains("GROUP BY "), "{text}");
    assert!(text.contains("HAVING "), "{text}");
    assert!(text.contains("dbo.SumEqualityCom(SUM("), "{text}");
    assert!(text.trim_end().ends_with("DROP TABLE #TEMPORARY_TABLE1;"), "{text}");
}

#[test]
fn like_prints_cursor_skeleton() {
    let text = render("SELECT O_ORDERSTATUS FROM ORDERS WHERE O_ORDERKEY <= 400 AND O_ORDERPRIORITY LIKE '%URGENT'");
    assert!(text.contains("DECLARE STRCUR CURSOR"), "{text}");
    assert!(text.contains("END["), "{text}");
    assert!(text.contains(" = 1"), "{text}");
    assert!(text.contains("DROP COLUMN"), "{text}");
}

#[test]
fn mutations_render_as_single_statements() {
    let ins = render("INSERT INTO REGION(R_REGIONKEY, R_NAME) VALUES (7, 'ANTARCTICA')");
    assert!(ins.starts_with("INSERT INTO ") && ins.contains(" VALUES ("), "{ins}");
    let upd = render("UPDATE REGION SET R_NAME = 'POLAR' WHERE R_REGIONKEY = 7");
    assert!(upd.contains("UPDATE ") && upd.contains(" SET ") && upd.contains(" WHERE dbo.EqualityCom(x, "), "{upd}");
    let del = render("DELETE FROM REGION WHERE R_REGIONKEY = 7");
    let line = del.lines().find(|l| l.starts_with("DELETE")).expect("delete line");
    assert!(line.starts_with("DELETE FROM ") && line.contains(" WHERE dbo.EqualityCom(x, ") && line.ends_with(") = 0;"), "{del}");
}

#[test]
fn nested_subquery_uses_inter_table() {
    let text = render("SELECT N_NAME FROM NATION WHERE EXISTS (SELECT R_REGIONKEY FROM REGION WHERE R_REGIONKEY = 2)");
    assert!(text.contains("INTO #INTER_TABLE1"), "{text}");
    assert!(text.contains("EXISTS (SELECT * FROM #INTER_TABLE1)"), "{text}");
}

#[test]
fn rendering_is_deterministic() {
    let sql = "SELECT MIN(L_QUANTITY), MAX(L_QUANTITY), COUNT(L_QUANTITY) FROM LINEITEM WHERE L_SUPPKEY = 3";
    assert_eq!(render(sql), render(sql));
}

#[test]
fn every_corpus_statement_renders() {
    let spec = DatasetSpec { scale: DIFFERENTIAL_SCALE, seed: DIFFERENTIAL_SEED };
    let mut owner = Owner::from_seed(manifest(&spec), 3).unwrap();
    for e in cipherdb_core::corpus::parse_corpus(cipherdb_core::corpus::DIFFERENTIAL_SQL) {
        let (_, tr) = owner.prepare(&e.sql, OWNER_PRINCIPAL, &mut Vec::new()).unwrap();
        let text = render_plan(&tr.plan);
        assert!(!text.is_empty(), "{}", e.name);
        assert!(text.lines().filter(|l| !l.starts_with("--")).all(|l| l.ends_with(';')), "{}:\n{text}", e.name);
    }
}
