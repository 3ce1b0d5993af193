use std::cmp::Ordering;

use num_bigint::BigUint;

use crate::cell::CipherCell;
use crate::plan::CmpKind;
use crate::{CloudError, Result};

pub const FUZZY_DELIMITER: char = ',';

/// `EqualityCom(x, c1, c2)`: 0 when the ciphertexts are within `x` of each
/// other, otherwise the sign of `c1 - c2`.
pub fn equality_com(x: &BigUint, c1: &BigUint, c2: &BigUint) -> i8 {
    let (hi, lo, sign) = match c1.cmp(c2) {
        Ordering::Equal => return 0,
        Ordering::Greater => (c1, c2, 1),
        Ordering::Less => (c2, c1, -1),
    };
    if hi - lo <= *x {
        0
    } else {
        sign
    }
}

/// `SumEqualityCom(SUM(E), SUM(E'), L[v], U'[v])`.
pub fn sum_equality_com(
    sum_e: &BigUint,
    sum_ext: &BigUint,
    l_val: &BigUint,
    u_ext_val: &BigUint,
) -> Result<i8> {
    if sum_e <= l_val && sum_ext >= u_ext_val {
        Ok(0)
    } else if sum_ext > u_ext_val {
        Ok(1)
    } else if sum_e < l_val {
        Ok(-1)
    } else {
        Err(CloudError::InconsistentSumProbe)
    }
}

/// `Split(@str, @delimiter)` for fuzzy-rule cells. The last part is the
/// trailing-blank count.
pub fn split_encoded(cell: &str, delimiter: char) -> Result<Vec<BigUint>> {
    cell.split(delimiter)
        .map(|part| {
            if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(CloudError::MalformedCell(cell.to_string()));
            }
            BigUint::parse_bytes(part.as_bytes(), 10)
                .ok_or_else(|| CloudError::MalformedCell(cell.to_string()))
        })
        .collect()
}

fn fixed_segments(cell: &str, width: usize) -> Result<Vec<BigUint>> {
    if width == 0 || !cell.len().is_multiple_of(width) || !cell.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CloudError::MalformedCell(cell.to_string()));
    }
    Ok(cell
        .as_bytes()
        .chunks(width)
        .map(|seg| BigUint::parse_bytes(seg, 10).expect("digits"))
        .collect())
}

fn lexicographic(x: &BigUint, a: &[BigUint], b: &[BigUint]) -> i8 {
    for (ca, cb) in a.iter().zip(b) {
        let r = equality_com(x, ca, cb);
        if r != 0 {
            return r;
        }
    }
    match a.len().cmp(&b.len()) {
        Ordering::Less => -1,
        Ordering::Equal => 0,
        Ordering::Greater => 1,
    }
}

/// Three-way comparison of two cells of the same storage rule, built on
/// `EqualityCom`. NULL sorts below every value and equals NULL.
///
/// Fuzzy cells compare code-wise and then by trailing-blank count, which
/// matches plaintext order for strings without control characters.
pub fn compare_cells(x: &BigUint, kind: CmpKind, a: &CipherCell, b: &CipherCell) -> Result<i8> {
    match (a.is_null(), b.is_null()) {
        (true, true) => return Ok(0),
        (true, false) => return Ok(-1),
        (false, true) => return Ok(1),
        _ => {}
    }
    let mismatch = || CloudError::MalformedCell(format!("{a} vs {b} under {kind:?}"));
    match kind {
        CmpKind::Integer => match (a, b) {
            (CipherCell::Int(ca), CipherCell::Int(cb)) => Ok(equality_com(x, ca, cb)),
            _ => Err(mismatch()),
        },
        CmpKind::Fixed { width } => match (a, b) {
            (CipherCell::Text(ta), CipherCell::Text(tb)) => {
                let sa = fixed_segments(ta, width as usize)?;
                let sb = fixed_segments(tb, width as usize)?;
                Ok(lexicographic(x, &sa, &sb))
            }
            _ => Err(mismatch()),
        },
        CmpKind::Fuzzy => match (a, b) {
            (CipherCell::Text(ta), CipherCell::Text(tb)) => {
                let mut pa = split_encoded(ta, FUZZY_DELIMITER)?;
                let mut pb = split_encoded(tb, FUZZY_DELIMITER)?;
                let blanks_a = pa.pop().expect("split yields at least one part");
                let blanks_b = pb.pop().expect("split yields at least one part");
                match lexicographic(x, &pa, &pb) {
                    0 => Ok(match blanks_a.cmp(&blanks_b) {
                        Ordering::Less => -1,
                        Ordering::Equal => 0,
                        Ordering::Greater => 1,
                    }),
                    r => Ok(r),
                }
            }
            _ => Err(mismatch()),
        },
    }
}
