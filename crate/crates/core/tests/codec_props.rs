//! Cell encoding round trips and ciphertext order under each storage rule.

use std::sync::OnceLock;

use cipherdb_cloud::{compare_cells, CipherCell, CmpKind};
use cipherdb_core::codec::{decrypt_cell, encrypt_cell, ColumnSpec, EncodingRule, SemType};
use cipherdb_core::opea::{self, DomainKey};
use cipherdb_core::{rng, Value};
use proptest::prelude::*;

fn spec(sem: SemType, rule: EncodingRule, offset: i128, max_code: u64) -> ColumnSpec {
    ColumnSpec {
        name: "C".into(),
        sem,
        rule,
        offset,
        domain: "d".into(),
        extension: false,
        nullable: true,
        max_code,
        digits: None,
    }
}

fn char_key() -> &'static DomainKey {
    static K: OnceLock<DomainKey> = OnceLock::new();
    K.get_or_init(|| opea::derive_domain_key(b"chars", 255, 1, 255, 6).unwrap())
}

/// Two-character packed codes reach 255255.
fn packed_key() -> &'static DomainKey {
    static K: OnceLock<DomainKey> = OnceLock::new();
    K.get_or_init(|| opea::derive_domain_key(b"packed", 255_255, 1, 255_255, 2).unwrap())
}

fn fixed_width() -> u32 {
    opea::boundary_pair(char_key(), 255).unwrap().upper.to_string().len() as u32
}

fn text(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::char::range(' ', '~'), len).prop_map(|v| v.into_iter().collect())
}

fn round_trip(spec: &ColumnSpec, key: &DomainKey, v: &Value, seed: u64) -> Result<CipherCell, TestCaseError> {
    let mut g = rng::seeded(seed);
    let cell = encrypt_cell(spec, key, v, &mut g).map_err(|e| TestCaseError::fail(format!("{v}: {e}")))?;
    let back = decrypt_cell(spec, key, &cell.base).map_err(|e| TestCaseError::fail(format!("{v}: {e}")))?;
    prop_assert_eq!(&back, v);
    Ok(cell.base)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2500))]

    #[test]
    fn numeric_round_trip(v in -500i128..=500, seed in any::<u64>()) {
        let key = opea::derive_domain_key(b"num", 1001, 1, 1001, 4).unwrap();
        let s = spec(SemType::Integer, EncodingRule::Numeric, 501, 1001);
        round_trip(&s, &key, &Value::Int(v), seed)?;
        let d = spec(SemType::Decimal { scale: 2 }, EncodingRule::Numeric, 501, 1001);
        round_trip(&d, &key, &Value::Decimal { units: v, scale: 2 }, seed)?;
    }

    #[test]
    fn fuzzy_round_trip(s in text(1..=12), seed in any::<u64>()) {
        let spec = spec(SemType::Varchar { len: 12 }, EncodingRule::Fuzzy, 0, 255);
        round_trip(&spec, char_key(), &Value::Text(s), seed)?;
    }

    #[test]
    fn fixed_round_trip(s in text(0..=8), n in 0i128..1_000_000, seed in any::<u64>()) {
        let w = fixed_width();
        let spec_t = spec(SemType::Varchar { len: 8 }, EncodingRule::Fixed { width: w }, 0, 255);
        round_trip(&spec_t, char_key(), &Value::Text(s), seed)?;
        let mut spec_i = spec(SemType::Integer, EncodingRule::Fixed { width: w }, 0, 255);
        spec_i.digits = Some(6);
        round_trip(&spec_i, char_key(), &Value::Int(n), seed)?;
    }

    #[test]
    fn packed_round_trip(s in text(2..=2), seed in any::<u64>()) {
        let spec = spec(SemType::Char { len: 2 }, EncodingRule::Packed, 0, 255_255);
        round_trip(&spec, packed_key(), &Value::Text(s), seed)?;
    }

    /// Equal-length strings keep their order through the packed and fixed
    /// rules.
    #[test]
    fn equal_length_order(a in text(2..=2), b in text(2..=2), seed in any::<u64>()) {
        let want = a.cmp(&b) as i8;
        let packed = spec(SemType::Char { len: 2 }, EncodingRule::Packed, 0, 255_255);
        let ca = round_trip(&packed, packed_key(), &Value::Text(a.clone()), seed)?;
        let cb = round_trip(&packed, packed_key(), &Value::Text(b.clone()), seed ^ 1)?;
        let x = opea::pick_equality_threshold(packed_key(), &mut rng::seeded(seed));
        prop_assert_eq!(compare_cells(&x, CmpKind::Integer, &ca, &cb).unwrap(), want);

        let w = fixed_width();
        let fixed = spec(SemType::Char { len: 2 }, EncodingRule::Fixed { width: w }, 0, 255);
        let fa = round_trip(&fixed, char_key(), &Value::Text(a), seed)?;
        let fb = round_trip(&fixed, char_key(), &Value::Text(b), seed ^ 1)?;
        let x = opea::pick_equality_threshold(char_key(), &mut rng::seeded(seed));
        prop_assert_eq!(compare_cells(&x, CmpKind::Fixed { width: w }, &fa, &fb).unwrap(), want);
    }

    /// Fuzzy cells compare like their plaintexts, trailing blanks included.
    #[test]
    fn fuzzy_order(a in text(1..=6), b in text(1..=6), seed in any::<u64>()) {
        let spec = spec(SemType::Varchar { len: 6 }, EncodingRule::Fuzzy, 0, 255);
        let ca = round_trip(&spec, char_key(), &Value::Text(a.clone()), seed)?;
        let cb = round_trip(&spec, char_key(), &Value::Text(b.clone()), seed ^ 1)?;
        let x = opea::pick_equality_threshold(char_key(), &mut rng::seeded(seed));
        prop_assert_eq!(compare_cells(&x, CmpKind::Fuzzy, &ca, &cb).unwrap(), a.cmp(&b) as i8, "{:?} vs {:?}", a, b);
    }
}

#[test]
fn nulls_and_rejections() {
    let mut g = rng::seeded(1);
    let fuzzy = spec(SemType::Varchar { len: 4 }, EncodingRule::Fuzzy, 0, 255);
    let cell = encrypt_cell(&fuzzy, char_key(), &Value::Null, &mut g).unwrap();
    assert!(cell.base.is_null());
    assert_eq!(decrypt_cell(&fuzzy, char_key(), &cell.base).unwrap(), Value::Null);
    assert!(encrypt_cell(&fuzzy, char_key(), &Value::Text(String::new()), &mut g).is_err());
    assert!(encrypt_cell(&fuzzy, char_key(), &Value::Text("a\u{7}".into()), &mut g).is_err());
    assert!(encrypt_cell(&fuzzy, char_key(), &Value::Text("toolong".into()), &mut g).is_err());
    let packed = spec(SemType::Char { len: 2 }, EncodingRule::Packed, 0, 255_255);
    assert!(encrypt_cell(&packed, packed_key(), &Value::Text("a".into()), &mut g).is_err());
    let mut strict = spec(SemType::Integer, EncodingRule::Numeric, 0, 10);
    strict.nullable = false;
    assert!(encrypt_cell(&strict, char_key(), &Value::Null, &mut g).is_err());
    assert!(encrypt_cell(&strict, char_key(), &Value::Int(11), &mut g).is_err());
}
