//! Encrypted pipeline against direct computation: LIKE over fuzzy cells and
//! aggregates over numeric cells.

use std::collections::BTreeSet;

use cipherdb_core::manifest::{Manifest, OWNER_PRINCIPAL};
use cipherdb_core::oracle::like_match;
use cipherdb_core::owner::{Owner, PlainDatabase};
use cipherdb_core::Value;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

const MANIFEST: &str = r#"
version = 1
[[domain]]
id = "id"
kind = "numeric"
min = "1"
max = "500"
[[domain]]
id = "qty"
kind = "numeric"
min = "1"
max = "50"
max_group = 40
max_sum = 2000
[[domain]]
id = "text"
kind = "text"
[[table]]
name = "W"
[[table.column]]
name = "ID"
type = "integer"
domain = "id"
[[table.column]]
name = "QTY"
type = "integer"
domain = "qty"
extension = true
nullable = true
[[table.column]]
name = "NAME"
type = "varchar"
length = 6
encoding = "fuzzy"
domain = "text"
"#;

#[derive(Clone, Debug)]
enum Atom {
    Lit(char),
    One,
    Many,
    Class(Vec<char>, bool),
}

const ALPHABET: [char; 4] = ['a', 'b', '%', ' '];

fn atom() -> impl Strategy<Value = Atom> {
    prop_oneof![
        4 => prop::sample::select(&ALPHABET[..]).prop_map(Atom::Lit),
        2 => Just(Atom::One),
        3 => Just(Atom::Many),
        1 => (prop::sample::subsequence(vec!['a', 'b', ' '], 1..=2), any::<bool>()).prop_map(|(s, n)| Atom::Class(s, n)),
    ]
}

/// Pattern text with `!` as the escape for literal `%`.
fn pattern_text(atoms: &[Atom]) -> String {
    let mut s = String::new();
    for a in atoms {
        match a {
            Atom::Lit('%') => s.push_str("!%"),
            Atom::Lit(c) => s.push(*c),
            Atom::One => s.push('_'),
            Atom::Many => s.push('%'),
            Atom::Class(set, neg) => {
                s.push('[');
                if *neg {
                    s.push('^');
                }
                s.extend(set);
                s.push(']');
            }
        }
    }
    s
}

/// Backtracking matcher over the atoms themselves.
fn matches(atoms: &[Atom], text: &[char]) -> bool {
    match atoms.split_first() {
        None => text.is_empty(),
        Some((Atom::Many, rest)) => (0..=text.len()).any(|k| matches(rest, &text[k..])),
        Some((a, rest)) => {
            let Some((&c, tail)) = text.split_first() else { return false };
            let ok = match a {
                Atom::Lit(l) => *l == c,
                Atom::One => true,
                Atom::Class(set, neg) => set.contains(&c) != *neg,
                Atom::Many => unreachable!(),
            };
            ok && matches(rest, tail)
        }
    }
}

fn word() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&ALPHABET[..]), 1..=6).prop_map(|v| v.into_iter().collect())
}

fn owner() -> Owner {
    Owner::from_seed(Manifest::from_toml(MANIFEST).unwrap(), 9).unwrap()
}

fn table(rows: &[(Option<i128>, String)]) -> PlainDatabase {
    let mut db = PlainDatabase::new();
    let rows = rows
        .iter()
        .enumerate()
        .map(|(i, (q, n))| vec![Value::Int(i as i128 + 1), q.map_or(Value::Null, Value::Int), Value::Text(n.clone())])
        .collect();
    db.insert("W".into(), rows);
    db
}

fn ids(owner: &mut Owner, store: &mut cipherdb_cloud::EncryptedStore, sql: &str) -> BTreeSet<i128> {
    let out = owner.run(store, sql, OWNER_PRINCIPAL).unwrap_or_else(|e| panic!("{sql}: {e}"));
    out.result
        .unwrap()
        .rows
        .into_iter()
        .map(|r| match r[0] {
            Value::Int(i) => i,
            ref v => panic!("{v:?}"),
        })
        .collect()
}

#[test]
fn like_equivalence_over_random_patterns() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let words: Vec<String> = (0..60).map(|_| word().new_tree(&mut runner).unwrap().current()).collect();
    let rows: Vec<(Option<i128>, String)> = words.iter().map(|w| (Some(1), w.clone())).collect();
    let mut owner = owner();
    let mut store = owner.encrypt_database(&table(&rows)).unwrap();
    let pattern = prop::collection::vec(atom(), 1..=5);
    let mut cases = 0;
    for _ in 0..200 {
        let atoms = pattern.new_tree(&mut runner).unwrap().current();
        let p = pattern_text(&atoms);
        for negated in [false, true] {
            let sql = format!("SELECT ID FROM W WHERE NAME {}LIKE '{p}' ESCAPE '!'", if negated { "NOT " } else { "" });
            let got = ids(&mut owner, &mut store, &sql);
            let want: BTreeSet<i128> = words
                .iter()
                .enumerate()
                .filter(|(_, w)| matches(&atoms, &w.chars().collect::<Vec<_>>()) != negated)
                .map(|(i, _)| i as i128 + 1)
                .collect();
            assert_eq!(got, want, "{sql}");
            for w in &words {
                assert_eq!(like_match(w, &p, Some('!')), matches(&atoms, &w.chars().collect::<Vec<_>>()), "{w:?} LIKE {p:?}");
                cases += 1;
            }
        }
    }
    assert!(cases >= 1000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn aggregates_match_direct_computation(
        qty in prop::collection::vec(prop::option::weighted(0.85, 1i128..=50), 1..=40),
        cut in 1i128..=50,
    ) {
        let rows: Vec<(Option<i128>, String)> = qty.iter().map(|q| (*q, "a".to_string())).collect();
        let mut owner = owner();
        let mut store = owner.encrypt_database(&table(&rows)).unwrap();
        let sql = format!("SELECT MIN(QTY), MAX(QTY), COUNT(QTY), COUNT(*), SUM(QTY) FROM W WHERE QTY >= {cut} OR QTY IS NULL");
        let out = owner.run(&mut store, &sql, OWNER_PRINCIPAL).unwrap();
        let got = &out.result.unwrap().rows[0];
        let kept: Vec<i128> = qty.iter().flatten().copied().filter(|q| *q >= cut).collect();
        let nulls = qty.iter().filter(|q| q.is_none()).count();
        let or_null = |v: Option<i128>| v.map_or(Value::Null, Value::Int);
        prop_assert_eq!(&got[0], &or_null(kept.iter().min().copied()));
        prop_assert_eq!(&got[1], &or_null(kept.iter().max().copied()));
        prop_assert_eq!(&got[2], &Value::Int(kept.len() as i128));
        prop_assert_eq!(&got[3], &Value::Int((kept.len() + nulls) as i128));
        let sum = if kept.is_empty() { Value::Null } else { Value::Int(kept.iter().sum()) };
        prop_assert_eq!(&got[4], &sum);

        let having = format!("SELECT NAME FROM W GROUP BY NAME HAVING SUM(QTY) > {}", cut * 5);
        let rows = owner.run(&mut store, &having, OWNER_PRINCIPAL).unwrap().result.unwrap().rows;
        let total: i128 = qty.iter().flatten().sum();
        prop_assert_eq!(rows.len(), usize::from(total > cut * 5 && qty.iter().any(Option::is_some)), "total {}", total);
    }
}
