//! Typed values to and from the positive-integer plaintext domain, and the
//! three string storage rules.

use cipherdb_cloud::{split_encoded, CipherCell, FUZZY_DELIMITER};
use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::opea::{self, DomainKey, OpeaError};
use crate::value::Value;

/// Largest character code representable in three decimal digits.
pub const MAX_CHAR_CODE: u64 = 999;

/// Whether `c` has a storable code: printable (not a control character
/// below space) and at most `limit`.
pub fn is_codable(c: char, limit: u64) -> bool {
    let code = u64::from(u32::from(c));
    (32..=limit).contains(&code)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SemType {
    Integer,
    Decimal { scale: u32 },
    Char { len: u32 },
    Varchar { len: u32 },
}

impl SemType {
    pub fn is_text(self) -> bool {
        matches!(self, SemType::Char { .. } | SemType::Varchar { .. })
    }

    pub fn scale(self) -> u32 {
        match self {
            SemType::Decimal { scale } => scale,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingRule {
    Numeric,
    /// Per-character ciphertexts joined by commas plus trailing-blank count.
    Fuzzy,
    /// Whole string as concatenated 3-digit codes, one ciphertext.
    Packed,
    /// Per-character ciphertexts, each zero-padded to `width` digits.
    Fixed { width: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub sem: SemType,
    pub rule: EncodingRule,
    /// Added to the scaled value so that the domain minimum encodes to 1.
    pub offset: i128,
    pub domain: String,
    /// Also stores extended ciphertexts for SUM/AVG.
    pub extension: bool,
    pub nullable: bool,
    /// Largest plaintext code of the domain (its `T`).
    pub max_code: u64,
    /// Digit count for integers stored under the fixed rule.
    pub digits: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncodedValue {
    IntegerCode(u64),
    CharCodes { codes: Vec<u64>, trailing_blanks: usize },
    PackedCode(u64),
    Null,
}

/// An encrypted cell and, for extension columns, its extended companion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedCell {
    pub base: CipherCell,
    pub ext: Option<CipherCell>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("value out of range for {column}: {detail}")]
    Range { column: String, detail: String },
    #[error("cannot encode value for {column}: {detail}")]
    Encoding { column: String, detail: String },
    #[error("cannot decode cell of {column}: {detail}")]
    Decode { column: String, detail: String },
    #[error("value {value} does not match the type of {column}")]
    TypeMismatch { column: String, value: String },
    #[error("{column}: {source}")]
    Opea { column: String, source: OpeaError },
}

pub type Result<T> = std::result::Result<T, CodecError>;

impl ColumnSpec {
    fn range(&self, detail: impl Into<String>) -> CodecError {
        CodecError::Range { column: self.name.clone(), detail: detail.into() }
    }
    fn encoding(&self, detail: impl Into<String>) -> CodecError {
        CodecError::Encoding { column: self.name.clone(), detail: detail.into() }
    }
    fn decode(&self, detail: impl Into<String>) -> CodecError {
        CodecError::Decode { column: self.name.clone(), detail: detail.into() }
    }
    fn opea(&self, source: OpeaError) -> CodecError {
        CodecError::Opea { column: self.name.clone(), source }
    }

    fn char_limit(&self) -> u64 {
        self.max_code.min(MAX_CHAR_CODE)
    }

    fn text_len(&self) -> u32 {
        match self.sem {
            SemType::Char { len } | SemType::Varchar { len } => len,
            _ => u32::MAX,
        }
    }

    fn char_codes(&self, s: &str) -> Result<Vec<u64>> {
        s.chars()
            .map(|c| {
                let code = u64::from(u32::from(c));
                if !is_codable(c, self.char_limit()) {
                    Err(self.encoding(format!("character {c:?} has code {code} outside 32..={}", self.char_limit())))
                } else {
                    Ok(code)
                }
            })
            .collect()
    }

    /// Scaled integer representation of a numeric value.
    pub fn scaled_units(&self, v: &Value) -> Result<i128> {
        let scale = self.sem.scale();
        let mismatch = || CodecError::TypeMismatch { column: self.name.clone(), value: v.to_string() };
        match v {
            Value::Int(i) => i.checked_mul(10i128.pow(scale)).ok_or_else(|| self.range("overflow")),
            Value::Decimal { units, scale: s } if *s <= scale && scale > 0 => {
                units.checked_mul(10i128.pow(scale - s)).ok_or_else(|| self.range("overflow"))
            }
            _ => Err(mismatch()),
        }
    }
}

pub fn encode_plain(spec: &ColumnSpec, v: &Value) -> Result<EncodedValue> {
    if v.is_null() {
        return if spec.nullable { Ok(EncodedValue::Null) } else { Err(spec.range("NULL in a NOT NULL column")) };
    }
    let mismatch = || CodecError::TypeMismatch { column: spec.name.clone(), value: v.to_string() };
    match spec.rule {
        EncodingRule::Numeric => {
            if spec.sem.is_text() {
                return Err(mismatch());
            }
            let code = spec.scaled_units(v)?.checked_add(spec.offset).ok_or_else(|| spec.range("overflow"))?;
            if code < 1 || code > i128::from(spec.max_code) {
                return Err(spec.range(format!("{v} encodes to {code}, outside 1..={}", spec.max_code)));
            }
            Ok(EncodedValue::IntegerCode(code as u64))
        }
        EncodingRule::Fuzzy => {
            let Value::Text(s) = v else { return Err(mismatch()) };
            if s.chars().count() > spec.text_len() as usize {
                return Err(spec.range(format!("{s:?} is longer than {}", spec.text_len())));
            }
            let body = s.trim_end_matches(' ');
            let trailing_blanks = s.len() - body.len();
            if s.is_empty() {
                return Err(spec.encoding("the empty string is indistinguishable from NULL under the fuzzy rule"));
            }
            Ok(EncodedValue::CharCodes { codes: spec.char_codes(body)?, trailing_blanks })
        }
        EncodingRule::Packed => {
            let Value::Text(s) = v else { return Err(mismatch()) };
            if s.chars().count() != spec.text_len() as usize {
                return Err(spec.range(format!("{s:?} must have exactly {} characters", spec.text_len())));
            }
            let mut code: u64 = 0;
            for c in spec.char_codes(s)? {
                code = code
                    .checked_mul(1000)
                    .and_then(|v| v.checked_add(c))
                    .ok_or_else(|| spec.range("packed code overflows"))?;
            }
            if code > spec.max_code {
                return Err(spec.range(format!("packed code {code} exceeds {}", spec.max_code)));
            }
            Ok(EncodedValue::PackedCode(code))
        }
        EncodingRule::Fixed { .. } => match (spec.sem, v) {
            (SemType::Char { .. } | SemType::Varchar { .. }, Value::Text(s)) => {
                if s.chars().count() > spec.text_len() as usize {
                    return Err(spec.range(format!("{s:?} is longer than {}", spec.text_len())));
                }
                Ok(EncodedValue::CharCodes { codes: spec.char_codes(s)?, trailing_blanks: 0 })
            }
            (SemType::Integer, Value::Int(i)) => {
                let digits = spec.digits.ok_or_else(|| spec.encoding("fixed-rule integer needs a digit count"))?;
                if *i < 0 || *i >= 10i128.pow(digits) {
                    return Err(spec.range(format!("{i} does not fit {digits} digits")));
                }
                let text = format!("{i:0width$}", width = digits as usize);
                Ok(EncodedValue::CharCodes { codes: spec.char_codes(&text)?, trailing_blanks: 0 })
            }
            _ => Err(mismatch()),
        },
    }
}

fn codes_to_string(spec: &ColumnSpec, codes: &[u64]) -> Result<String> {
    codes
        .iter()
        .map(|&c| {
            u32::try_from(c)
                .ok()
                .and_then(char::from_u32)
                .filter(|_| c >= 1)
                .ok_or_else(|| spec.decode(format!("code {c} is not a character")))
        })
        .collect()
}

pub fn decode_plain(spec: &ColumnSpec, e: &EncodedValue) -> Result<Value> {
    match (spec.rule, e) {
        (_, EncodedValue::Null) => Ok(Value::Null),
        (EncodingRule::Numeric, EncodedValue::IntegerCode(c)) => {
            let units = i128::from(*c) - spec.offset;
            Ok(match spec.sem {
                SemType::Decimal { scale } => Value::Decimal { units, scale },
                _ => Value::Int(units),
            })
        }
        (EncodingRule::Fuzzy, EncodedValue::CharCodes { codes, trailing_blanks }) => {
            let mut s = codes_to_string(spec, codes)?;
            s.extend(std::iter::repeat_n(' ', *trailing_blanks));
            Ok(Value::Text(s))
        }
        (EncodingRule::Packed, EncodedValue::PackedCode(code)) => {
            let digits = code.to_string();
            let pad = (3 - digits.len() % 3) % 3;
            let padded = format!("{}{digits}", "0".repeat(pad));
            let codes: Vec<u64> = padded
                .as_bytes()
                .chunks(3)
                .map(|g| std::str::from_utf8(g).expect("ascii").parse().expect("digits"))
                .collect();
            if codes.contains(&0) {
                return Err(spec.decode(format!("packed code {code} has an empty character group")));
            }
            Ok(Value::Text(codes_to_string(spec, &codes)?))
        }
        (EncodingRule::Fixed { .. }, EncodedValue::CharCodes { codes, .. }) => {
            let s = codes_to_string(spec, codes)?;
            match spec.sem {
                SemType::Integer => s
                    .parse::<i128>()
                    .map(Value::Int)
                    .map_err(|_| spec.decode(format!("{s:?} is not a digit string"))),
                _ => Ok(Value::Text(s)),
            }
        }
        _ => Err(spec.decode(format!("{e:?} does not match rule {:?}", spec.rule))),
    }
}

fn fixed_text(spec: &ColumnSpec, width: u32, ciphers: &[BigUint]) -> Result<String> {
    let mut out = String::with_capacity(ciphers.len() * width as usize);
    for c in ciphers {
        let d = c.to_str_radix(10);
        if d.len() > width as usize {
            return Err(spec.encoding(format!("ciphertext {d} is wider than {width} digits")));
        }
        out.push_str(&"0".repeat(width as usize - d.len()));
        out.push_str(&d);
    }
    Ok(out)
}

pub fn encrypt_cell(spec: &ColumnSpec, key: &DomainKey, v: &Value, rng: &mut impl RngCore) -> Result<EncryptedCell> {
    let e = encode_plain(spec, v)?;
    let enc = |m: u64, rng: &mut dyn RngCore| opea::encrypt(key, m, &mut { rng }).map_err(|err| spec.opea(err));
    let base = match (&e, spec.rule) {
        (EncodedValue::Null, EncodingRule::Numeric | EncodingRule::Packed) => CipherCell::Int(BigUint::ZERO),
        (EncodedValue::Null, _) => CipherCell::Text("0".into()),
        (EncodedValue::IntegerCode(m) | EncodedValue::PackedCode(m), _) => CipherCell::Int(enc(*m, rng)?),
        (EncodedValue::CharCodes { codes, trailing_blanks }, EncodingRule::Fuzzy) => {
            let mut parts = Vec::with_capacity(codes.len() + 1);
            for &c in codes {
                parts.push(enc(c, rng)?.to_str_radix(10));
            }
            parts.push(trailing_blanks.to_string());
            CipherCell::Text(parts.join(&FUZZY_DELIMITER.to_string()))
        }
        (EncodedValue::CharCodes { codes, .. }, EncodingRule::Fixed { width }) => {
            let ciphers = codes.iter().map(|&c| enc(c, rng)).collect::<Result<Vec<_>>>()?;
            CipherCell::Text(fixed_text(spec, width, &ciphers)?)
        }
        _ => return Err(spec.encoding(format!("{e:?} under rule {:?}", spec.rule))),
    };
    let ext = if spec.extension {
        Some(match e {
            EncodedValue::IntegerCode(m) => {
                CipherCell::Int(opea::encrypt_ext(key, m, rng).map_err(|err| spec.opea(err))?)
            }
            EncodedValue::Null => CipherCell::Int(BigUint::ZERO),
            _ => return Err(spec.encoding("extension ciphertexts need the numeric rule")),
        })
    } else {
        None
    };
    Ok(EncryptedCell { base, ext })
}

pub fn decrypt_cell(spec: &ColumnSpec, key: &DomainKey, cell: &CipherCell) -> Result<Value> {
    if cell.is_null() {
        return Ok(Value::Null);
    }
    let dec = |c: &BigUint| opea::decrypt_exact(key, c).map_err(|err| spec.opea(err));
    let e = match (spec.rule, cell) {
        (EncodingRule::Numeric, CipherCell::Int(c)) => EncodedValue::IntegerCode(dec(c)?),
        (EncodingRule::Packed, CipherCell::Int(c)) => EncodedValue::PackedCode(dec(c)?),
        (EncodingRule::Fuzzy, CipherCell::Text(t)) => {
            let mut parts = split_encoded(t, FUZZY_DELIMITER).map_err(|err| spec.decode(err.to_string()))?;
            let blanks = parts.pop().expect("split is non-empty");
            let trailing_blanks = usize::try_from(&blanks).map_err(|_| spec.decode("trailing-blank count"))?;
            let codes = parts.iter().map(dec).collect::<Result<Vec<_>>>()?;
            EncodedValue::CharCodes { codes, trailing_blanks }
        }
        (EncodingRule::Fixed { width }, CipherCell::Text(t)) => {
            let w = width as usize;
            if t.len() % w != 0 || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(spec.decode(format!("{t:?} is not a sequence of {w}-digit segments")));
            }
            let codes = t
                .as_bytes()
                .chunks(w)
                .map(|seg| dec(&BigUint::parse_bytes(seg, 10).expect("digits")))
                .collect::<Result<Vec<_>>>()?;
            EncodedValue::CharCodes { codes, trailing_blanks: 0 }
        }
        _ => return Err(spec.decode(format!("cell {cell} does not match rule {:?}", spec.rule))),
    };
    decode_plain(spec, &e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    pub(crate) fn spec(sem: SemType, rule: EncodingRule, offset: i128, max_code: u64) -> ColumnSpec {
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

    fn k4() -> DomainKey {
        DomainKey::from_parts(vec![1; 128], BigUint::from(100u32), 128).unwrap()
    }

    #[test]
    fn encode_examples() {
        let n = spec(SemType::Integer, EncodingRule::Numeric, 0, 100);
        assert_eq!(encode_plain(&n, &Value::Int(5)).unwrap(), EncodedValue::IntegerCode(5));
        let signed = spec(SemType::Integer, EncodingRule::Numeric, 11, 100);
        assert_eq!(encode_plain(&signed, &Value::Int(-10)).unwrap(), EncodedValue::IntegerCode(1));
        assert_eq!(decode_plain(&signed, &EncodedValue::IntegerCode(1)).unwrap(), Value::Int(-10));
        let packed = spec(SemType::Char { len: 2 }, EncodingRule::Packed, 0, 999_999);
        assert_eq!(encode_plain(&packed, &Value::Text("ab".into())).unwrap(), EncodedValue::PackedCode(97098));
        assert_eq!(decode_plain(&packed, &EncodedValue::PackedCode(97098)).unwrap(), Value::Text("ab".into()));
        let fuzzy = spec(SemType::Varchar { len: 10 }, EncodingRule::Fuzzy, 0, 255);
        assert_eq!(
            encode_plain(&fuzzy, &Value::Text("ab ".into())).unwrap(),
            EncodedValue::CharCodes { codes: vec![97, 98], trailing_blanks: 1 }
        );
        assert_eq!(decode_plain(&fuzzy, &EncodedValue::Null).unwrap(), Value::Null);
    }

    #[test]
    fn encode_errors() {
        let n = spec(SemType::Integer, EncodingRule::Numeric, 0, 100);
        assert!(matches!(encode_plain(&n, &Value::Int(0)), Err(CodecError::Range { .. })));
        assert!(matches!(encode_plain(&n, &Value::Int(101)), Err(CodecError::Range { .. })));
        let fuzzy = spec(SemType::Varchar { len: 10 }, EncodingRule::Fuzzy, 0, 255);
        assert!(matches!(encode_plain(&fuzzy, &Value::Text("\u{20ac}".into())), Err(CodecError::Encoding { .. })));
        assert!(matches!(encode_plain(&fuzzy, &Value::Text(String::new())), Err(CodecError::Encoding { .. })));
        assert!(matches!(encode_plain(&fuzzy, &Value::Text("a\tb".into())), Err(CodecError::Encoding { .. })));
        let packed = spec(SemType::Char { len: 2 }, EncodingRule::Packed, 0, 999_999);
        assert!(matches!(encode_plain(&packed, &Value::Text("a".into())), Err(CodecError::Range { .. })));
        let dec = spec(SemType::Decimal { scale: 2 }, EncodingRule::Numeric, 1, 1000);
        assert_eq!(encode_plain(&dec, &Value::Decimal { units: 5, scale: 1 }).unwrap(), EncodedValue::IntegerCode(51));
        assert!(matches!(encode_plain(&dec, &Value::Text("x".into())), Err(CodecError::TypeMismatch { .. })));
    }

    #[test]
    fn fixed_rule_k4() {
        let fixed = spec(SemType::Varchar { len: 4 }, EncodingRule::Fixed { width: 5 }, 0, 128);
        let mut g = rng::seeded(3);
        let key = k4();
        for _ in 0..20 {
            let cell = encrypt_cell(&fixed, &key, &Value::Text("ab".into()), &mut g).unwrap();
            let CipherCell::Text(t) = &cell.base else { panic!() };
            assert_eq!(t.len(), 10);
            let (a, b): (u64, u64) = (t[..5].parse().unwrap(), t[5..].parse().unwrap());
            assert!((9892..=9893).contains(&a), "{t}");
            assert!((9994..=9995).contains(&b), "{t}");
            assert!(t.starts_with("0989"));
            assert_eq!(decrypt_cell(&fixed, &key, &cell.base).unwrap(), Value::Text("ab".into()));
        }
        let narrow = spec(SemType::Varchar { len: 4 }, EncodingRule::Fixed { width: 3 }, 0, 128);
        assert!(matches!(encrypt_cell(&narrow, &key, &Value::Text("a".into()), &mut g), Err(CodecError::Encoding { .. })));
    }

    #[test]
    fn fuzzy_rule_k4() {
        let fuzzy = spec(SemType::Varchar { len: 4 }, EncodingRule::Fuzzy, 0, 128);
        let mut g = rng::seeded(4);
        let key = k4();
        let cell = encrypt_cell(&fuzzy, &key, &Value::Text("ab".into()), &mut g).unwrap();
        let CipherCell::Text(t) = &cell.base else { panic!() };
        let parts: Vec<u64> = t.split(',').map(|p| p.parse().unwrap()).collect();
        assert!((9892..=9893).contains(&parts[0]));
        assert!((9994..=9995).contains(&parts[1]));
        assert_eq!(parts[2], 0);
        let null = encrypt_cell(&fuzzy, &key, &Value::Null, &mut g).unwrap();
        assert_eq!(null.base, CipherCell::Text("0".into()));
        assert_eq!(decrypt_cell(&fuzzy, &key, &null.base).unwrap(), Value::Null);
    }

    #[test]
    fn numeric_null_is_sentinel() {
        let mut n = spec(SemType::Integer, EncodingRule::Numeric, 0, 128);
        n.extension = true;
        let mut g = rng::seeded(5);
        let c = encrypt_cell(&n, &k4(), &Value::Null, &mut g).unwrap();
        assert_eq!(c.base, CipherCell::Int(BigUint::ZERO));
        assert_eq!(c.ext, Some(CipherCell::Int(BigUint::ZERO)));
    }

    #[test]
    fn fixed_integer_digits() {
        let mut f = spec(SemType::Integer, EncodingRule::Fixed { width: 6 }, 0, 255);
        f.digits = Some(8);
        let key = DomainKey::from_parts(vec![1; 255], BigUint::from(100u32), 255).unwrap();
        let mut g = rng::seeded(6);
        let c = encrypt_cell(&f, &key, &Value::Int(19950315), &mut g).unwrap();
        assert_eq!(c.base.as_text().unwrap().len(), 48);
        assert_eq!(decrypt_cell(&f, &key, &c.base).unwrap(), Value::Int(19950315));
        assert!(matches!(encode_plain(&f, &Value::Int(123_456_789)), Err(CodecError::Range { .. })));
    }
}
