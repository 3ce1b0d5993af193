use num_bigint::BigUint;
use num_traits::Zero;
use serde::Serialize;

/// One encrypted table cell.
///
/// `Int` holds a single OPEA ciphertext (numeric and packed-string columns,
/// extension columns). `Text` holds either a fuzzy-rule string
/// (`"E(c1),E(c2),...,pi"`) or a fixed-rule string (concatenated zero-padded
/// ciphertexts). NULL is `Int(0)` or `Text("0")`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CipherCell {
    Int(BigUint),
    Text(String),
}

impl CipherCell {
    pub fn null(kind: StorageKind) -> Self {
        match kind {
            StorageKind::Int => CipherCell::Int(BigUint::zero()),
            StorageKind::Text => CipherCell::Text("0".to_string()),
        }
    }

    pub fn is_null(&self) -> bool {
        match self {
            CipherCell::Int(v) => v.is_zero(),
            CipherCell::Text(s) => s == "0",
        }
    }

    pub fn kind(&self) -> StorageKind {
        match self {
            CipherCell::Int(_) => StorageKind::Int,
            CipherCell::Text(_) => StorageKind::Text,
        }
    }

    pub fn as_int(&self) -> Option<&BigUint> {
        match self {
            CipherCell::Int(v) => Some(v),
            CipherCell::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            CipherCell::Text(s) => Some(s),
            CipherCell::Int(_) => None,
        }
    }
}

impl std::fmt::Display for CipherCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CipherCell::Int(v) => write!(f, "{v}"),
            CipherCell::Text(s) => write!(f, "'{s}'"),
        }
    }
}

impl Serialize for CipherCell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CipherCell::Int(v) => s.serialize_newtype_variant("CipherCell", 0, "Int", &v.to_str_radix(10)),
            CipherCell::Text(t) => s.serialize_newtype_variant("CipherCell", 1, "Text", t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum StorageKind {
    Int,
    Text,
}

/// A value inside an intermediate relation.
///
/// Counts are plaintext: cardinalities are not encrypted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Cell(CipherCell),
    /// Missing side of an outer join.
    Null,
    Count(u64),
    Flag(bool),
    RowId(usize),
}

impl Slot {
    pub fn cell(&self) -> Option<&CipherCell> {
        match self {
            Slot::Cell(c) => Some(c),
            _ => None,
        }
    }

    /// True for outer-join padding and NULL sentinels.
    pub fn is_null(&self) -> bool {
        match self {
            Slot::Null => true,
            Slot::Cell(c) => c.is_null(),
            _ => false,
        }
    }
}
