//! The owner's schema manifest: comparison domains, plaintext table layout,
//! column encodings and principal allowlists.
//!
//! ```toml
//! version = 1
//!
//! [[domain]]
//! id = "quantity"
//! kind = "numeric"        # or "text"
//! min = "1"
//! max = "50"
//! scale = 0
//! max_group = 20000       # largest group summed (default 1)
//! max_sum = 400000        # largest decryptable sum (default T)
//! r_bits = 8              # bits per partition width (default 8)
//!
//! [[table]]
//! name = "LINEITEM"
//! [[table.column]]
//! name = "L_QUANTITY"
//! type = "integer"        # integer | decimal | char | varchar
//! encoding = "numeric"    # numeric | fuzzy | packed | fixed
//! domain = "quantity"
//! extension = true
//! nullable = true
//!
//! [principals.analyst]
//! tables = ["LINEITEM"]   # or ["*"]
//! ```
//!
//! Text domains take `max_code` (default 255) instead of `min`/`max`.
//! Decimal columns need `scale`, character columns `length`, fixed-rule
//! columns `width` (digits per ciphertext) and fixed-rule integers `digits`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ColumnSpec, EncodingRule, SemType};
use crate::value::parse_scaled;

pub const MANIFEST_VERSION: u32 = 1;
/// Principal with access to every table.
pub const OWNER_PRINCIPAL: &str = "owner";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("manifest syntax: {0}")]
    Syntax(String),
    #[error("manifest version {found}, expected {MANIFEST_VERSION}")]
    Version { found: u32 },
    #[error("manifest: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ManifestError {
    ManifestError::Invalid(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Numeric,
    Text,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainDecl {
    id: String,
    kind: DomainKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<String>,
    #[serde(default)]
    scale: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_code: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_group: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_sum: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_bits: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnDecl {
    name: String,
    #[serde(rename = "type")]
    ty: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoding: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    digits: Option<u32>,
    domain: String,
    #[serde(default)]
    extension: bool,
    #[serde(default)]
    nullable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDecl {
    name: String,
    #[serde(rename = "column")]
    columns: Vec<ColumnDecl>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrincipalDecl {
    tables: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    version: u32,
    #[serde(default, rename = "domain")]
    domains: Vec<DomainDecl>,
    #[serde(default, rename = "table")]
    tables: Vec<TableDecl>,
    #[serde(default)]
    principals: BTreeMap<String, PrincipalDecl>,
}

/// Key-sizing parameters and value range of one comparison domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainInfo {
    pub id: String,
    pub kind: DomainKind,
    /// Largest plaintext code.
    pub t: u64,
    pub max_group: u64,
    pub max_sum: u64,
    pub r_bits: u32,
    /// Numeric domains: scale and smallest value in scaled units.
    pub scale: u32,
    pub min_units: i128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableInfo {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub domains: BTreeMap<String, DomainInfo>,
    pub tables: Vec<TableInfo>,
    /// Principal name to allowed tables; `None` entry means all tables.
    pub principals: BTreeMap<String, Option<Vec<String>>>,
    source: String,
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self, ManifestError> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| ManifestError::Syntax(e.to_string()))?;
        if file.version != MANIFEST_VERSION {
            return Err(ManifestError::Version { found: file.version });
        }
        let mut domains = BTreeMap::new();
        for d in &file.domains {
            let info = resolve_domain(d)?;
            if domains.insert(d.id.clone(), info).is_some() {
                return Err(invalid(format!("domain {} declared twice", d.id)));
            }
        }
        let mut tables: Vec<TableInfo> = Vec::new();
        for t in &file.tables {
            check_identifier(&t.name)?;
            if tables.iter().any(|o| o.name.eq_ignore_ascii_case(&t.name)) {
                return Err(invalid(format!("table {} declared twice", t.name)));
            }
            if t.columns.is_empty() {
                return Err(invalid(format!("table {} has no columns", t.name)));
            }
            let mut columns: Vec<ColumnSpec> = Vec::new();
            for c in &t.columns {
                check_identifier(&c.name)?;
                if columns.iter().any(|o| o.name.eq_ignore_ascii_case(&c.name)) {
                    return Err(invalid(format!("column {}.{} declared twice", t.name, c.name)));
                }
                columns.push(resolve_column(&t.name, c, &domains)?);
            }
            tables.push(TableInfo { name: t.name.clone(), columns });
        }
        let mut principals = BTreeMap::new();
        for (name, p) in &file.principals {
            let allowed = if p.tables.iter().any(|t| t == "*") {
                None
            } else {
                let mut v = Vec::new();
                for t in &p.tables {
                    let info = tables
                        .iter()
                        .find(|i| i.name.eq_ignore_ascii_case(t))
                        .ok_or_else(|| invalid(format!("principal {name} lists unknown table {t}")))?;
                    v.push(info.name.clone());
                }
                Some(v)
            };
            principals.insert(name.clone(), allowed);
        }
        Ok(Manifest { domains, tables, principals, source: text.to_string() })
    }

    /// The text the manifest was parsed from.
    pub fn to_toml(&self) -> &str {
        &self.source
    }

    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn domain(&self, id: &str) -> Option<&DomainInfo> {
        self.domains.get(id)
    }

    /// Whether `principal` may read and write `table` (canonical name).
    pub fn allows(&self, principal: &str, table: &str) -> bool {
        if principal == OWNER_PRINCIPAL {
            return true;
        }
        match self.principals.get(principal) {
            Some(None) => true,
            Some(Some(list)) => list.iter().any(|t| t == table),
            None => false,
        }
    }
}

fn check_identifier(name: &str) -> Result<(), ManifestError> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok {
        return Err(invalid(format!("{name:?} is not a valid identifier")));
    }
    if name.to_ascii_lowercase().contains("subquery") || crate::sql::is_keyword(name) {
        return Err(invalid(format!("{name:?} is reserved")));
    }
    Ok(())
}

fn resolve_domain(d: &DomainDecl) -> Result<DomainInfo, ManifestError> {
    let r_bits = d.r_bits.unwrap_or(8);
    let max_group = d.max_group.unwrap_or(1);
    let (t, scale, min_units) = match d.kind {
        DomainKind::Numeric => {
            if d.max_code.is_some() {
                return Err(invalid(format!("numeric domain {} takes min/max, not max_code", d.id)));
            }
            let parse = |s: &Option<String>, what: &str| {
                let s = s.as_ref().ok_or_else(|| invalid(format!("domain {} needs {what}", d.id)))?;
                parse_scaled(s, d.scale).ok_or_else(|| invalid(format!("domain {}: bad {what} {s:?}", d.id)))
            };
            let min = parse(&d.min, "min")?;
            let max = parse(&d.max, "max")?;
            if max < min {
                return Err(invalid(format!("domain {}: max below min", d.id)));
            }
            let t = u64::try_from(max - min + 1).map_err(|_| invalid(format!("domain {} is too large", d.id)))?;
            (t, d.scale, min)
        }
        DomainKind::Text => {
            if d.min.is_some() || d.max.is_some() || d.scale != 0 {
                return Err(invalid(format!("text domain {} takes max_code only", d.id)));
            }
            (d.max_code.unwrap_or(255), 0, 1)
        }
    };
    if t == 0 {
        return Err(invalid(format!("domain {} is empty", d.id)));
    }
    let max_sum = d.max_sum.unwrap_or(t);
    if max_sum < t {
        return Err(invalid(format!("domain {}: max_sum {max_sum} below T = {t}", d.id)));
    }
    Ok(DomainInfo { id: d.id.clone(), kind: d.kind, t, max_group, max_sum, r_bits, scale, min_units })
}

fn resolve_column(table: &str, c: &ColumnDecl, domains: &BTreeMap<String, DomainInfo>) -> Result<ColumnSpec, ManifestError> {
    let at = format!("{table}.{}", c.name);
    let dom = domains.get(&c.domain).ok_or_else(|| invalid(format!("{at}: unknown domain {}", c.domain)))?;
    let sem = match c.ty.to_ascii_lowercase().as_str() {
        "integer" | "int" => SemType::Integer,
        "decimal" => SemType::Decimal { scale: c.scale.ok_or_else(|| invalid(format!("{at}: decimal needs scale")))? },
        "char" => SemType::Char { len: c.length.ok_or_else(|| invalid(format!("{at}: char needs length")))? },
        "varchar" => SemType::Varchar { len: c.length.ok_or_else(|| invalid(format!("{at}: varchar needs length")))? },
        other => return Err(invalid(format!("{at}: unknown type {other}"))),
    };
    let rule = match c.encoding.as_deref().unwrap_or("numeric") {
        "numeric" => EncodingRule::Numeric,
        "fuzzy" => EncodingRule::Fuzzy,
        "packed" => EncodingRule::Packed,
        "fixed" => EncodingRule::Fixed { width: c.width.ok_or_else(|| invalid(format!("{at}: fixed rule needs width")))? },
        other => return Err(invalid(format!("{at}: unknown encoding {other}"))),
    };
    let text_domain = dom.kind == DomainKind::Text;
    match rule {
        EncodingRule::Numeric => {
            if text_domain || sem.is_text() {
                return Err(invalid(format!("{at}: numeric rule needs a numeric type and domain")));
            }
            if sem.scale() != dom.scale {
                return Err(invalid(format!("{at}: scale differs from domain {}", dom.id)));
            }
        }
        EncodingRule::Fuzzy => {
            if !sem.is_text() || !text_domain {
                return Err(invalid(format!("{at}: the fuzzy rule needs a character type and a text domain")));
            }
        }
        EncodingRule::Packed => {
            if !matches!(sem, SemType::Char { .. }) || !text_domain {
                return Err(invalid(format!("{at}: the packed rule needs a CHAR type and a text domain")));
            }
        }
        EncodingRule::Fixed { width } => {
            if !text_domain || matches!(sem, SemType::Decimal { .. }) {
                return Err(invalid(format!("{at}: fixed rule needs a text domain and a character or integer type")));
            }
            if width == 0 {
                return Err(invalid(format!("{at}: width must be positive")));
            }
            if sem == SemType::Integer && c.digits.is_none() {
                return Err(invalid(format!("{at}: fixed-rule integer needs digits")));
            }
        }
    }
    if c.digits.is_some() && !(sem == SemType::Integer && matches!(rule, EncodingRule::Fixed { .. })) {
        return Err(invalid(format!("{at}: digits applies to fixed-rule integers only")));
    }
    if c.extension && rule != EncodingRule::Numeric {
        return Err(invalid(format!("{at}: extension columns need the numeric rule")));
    }
    Ok(ColumnSpec {
        name: c.name.clone(),
        sem,
        rule,
        offset: if rule == EncodingRule::Numeric { 1 - dom.min_units } else { 0 },
        domain: dom.id.clone(),
        extension: c.extension,
        nullable: c.nullable,
        max_code: dom.t,
        digits: c.digits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1
[[domain]]
id = "n"
kind = "numeric"
min = "-10"
max = "10"
[[domain]]
id = "money"
kind = "numeric"
min = "-1.5"
max = "2"
scale = 2
[[domain]]
id = "s"
kind = "text"
[[table]]
name = "T"
[[table.column]]
name = "A"
type = "integer"
domain = "n"
extension = true
[[table.column]]
name = "M"
type = "decimal"
scale = 2
domain = "money"
nullable = true
[[table.column]]
name = "S"
type = "varchar"
length = 8
encoding = "fuzzy"
domain = "s"
[principals.reader]
tables = ["t"]
"#;

    #[test]
    fn parses_sample() {
        let m = Manifest::from_toml(SAMPLE).unwrap();
        let n = m.domain("n").unwrap();
        assert_eq!(n.t, 21);
        let money = m.domain("money").unwrap();
        assert_eq!((money.t, money.min_units), (351, -150));
        let t = m.table("t").unwrap();
        assert_eq!(t.column("a").unwrap().offset, 11);
        assert_eq!(t.column("M").unwrap().offset, 151);
        assert_eq!(t.column("s").unwrap().max_code, 255);
        assert!(m.allows("reader", "T"));
        assert!(!m.allows("stranger", "T"));
        assert!(m.allows(OWNER_PRINCIPAL, "T"));
    }

    #[test]
    fn rejects_bad_declarations() {
        let bad_ext = SAMPLE.replace("encoding = \"fuzzy\"", "encoding = \"fuzzy\"\nextension = true");
        assert!(matches!(Manifest::from_toml(&bad_ext), Err(ManifestError::Invalid(_))));
        let bad_version = SAMPLE.replace("version = 1", "version = 7");
        assert_eq!(Manifest::from_toml(&bad_version), Err(ManifestError::Version { found: 7 }));
        let reserved = SAMPLE.replace("name = \"S\"", "name = \"MySubQuery\"");
        assert!(matches!(Manifest::from_toml(&reserved), Err(ManifestError::Invalid(_))));
        let keyword = SAMPLE.replace("name = \"S\"", "name = \"select\"");
        assert!(matches!(Manifest::from_toml(&keyword), Err(ManifestError::Invalid(_))));
        assert!(matches!(Manifest::from_toml("version = 1\nbogus = 2"), Err(ManifestError::Syntax(_))));
    }
}
