//! Typed plaintext values.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Null,
    Int(i128),
    /// `units / 10^scale`.
    Decimal { units: i128, scale: u32 },
    Text(String),
    /// Exact average.
    Ratio(Ratio<i128>),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Exact numeric value, if numeric.
    pub fn as_ratio(&self) -> Option<Ratio<i128>> {
        match self {
            Value::Int(v) => Some(Ratio::from_integer(*v)),
            Value::Decimal { units, scale } => Some(Ratio::new(*units, 10i128.pow(*scale))),
            Value::Ratio(r) => Some(*r),
            _ => None,
        }
    }

    /// SQL comparison of two non-NULL values of compatible types.
    pub fn sql_cmp(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => Some(a.chars().cmp(b.chars())),
            (a, b) => Some(a.as_ratio()?.cmp(&b.as_ratio()?)),
        }
    }
}

/// Parses a decimal literal into units at `scale`; `None` when it has more
/// significant fractional digits than `scale` or is malformed.
pub fn parse_scaled(text: &str, scale: u32) -> Option<i128> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let frac = frac_part.trim_end_matches('0');
    if frac.len() > scale as usize {
        return None;
    }
    let mut units: i128 = int_part.parse().ok()?;
    units = units.checked_mul(10i128.checked_pow(scale)?)?;
    if !frac.is_empty() {
        let f: i128 = frac.parse().ok()?;
        units = units.checked_add(f.checked_mul(10i128.pow(scale - frac.len() as u32))?)?;
    }
    Some(if neg { -units } else { units })
}

pub fn format_scaled(units: i128, scale: u32) -> String {
    if scale == 0 {
        return units.to_string();
    }
    let sign = if units < 0 { "-" } else { "" };
    let abs = units.unsigned_abs();
    let p = 10u128.pow(scale);
    format!("{sign}{}.{:0width$}", abs / p, abs % p, width = scale as usize)
}

/// Decimal rendering of an exact ratio: exact when the expansion
/// terminates, otherwise rounded to 12 places.
pub fn format_ratio(r: &Ratio<i128>) -> String {
    let mut d = *r.denom();
    for p in [2, 5] {
        while d % p == 0 {
            d /= p;
        }
    }
    let (n, den) = (*r.numer(), *r.denom());
    if d == 1 {
        let mut scale = 0u32;
        while (n * 10i128.pow(scale)) % den != 0 {
            scale += 1;
        }
        return format_scaled(n * 10i128.pow(scale) / den, scale);
    }
    let scaled = Ratio::new(n * 10i128.pow(12), den).round();
    format_scaled(scaled.to_integer(), 12)
}

/// A decrypted or reference query result.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResultTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Row order is significant (the query had ORDER BY).
    pub ordered: bool,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Decimal { units, scale } => f.write_str(&format_scaled(*units, *scale)),
            Value::Text(s) => f.write_str(s),
            Value::Ratio(r) => f.write_str(&format_ratio(r)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_parsing() {
        assert_eq!(parse_scaled("12.5", 2), Some(1250));
        assert_eq!(parse_scaled("-0.05", 2), Some(-5));
        assert_eq!(parse_scaled("3", 2), Some(300));
        assert_eq!(parse_scaled("1.500", 2), Some(150));
        assert_eq!(parse_scaled("1.555", 2), None);
        assert_eq!(parse_scaled(".5", 2), None);
        assert_eq!(format_scaled(-5, 2), "-0.05");
        assert_eq!(format_scaled(1250, 2), "12.50");
    }

    #[test]
    fn ratio_rendering() {
        assert_eq!(format_ratio(&Ratio::new(5, 2)), "2.5");
        assert_eq!(format_ratio(&Ratio::new(4, 2)), "2");
        assert_eq!(format_ratio(&Ratio::new(1, 3)), "0.333333333333");
        assert_eq!(format_ratio(&Ratio::new(-7, 8)), "-0.875");
    }

    #[test]
    fn ordering() {
        let a = Value::Decimal { units: 150, scale: 2 };
        assert_eq!(a.sql_cmp(&Value::Int(1)), Some(Ordering::Greater));
        assert_eq!(Value::Text("ab".into()).sql_cmp(&Value::Text("b".into())), Some(Ordering::Less));
    }
}
