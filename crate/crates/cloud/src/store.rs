use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::cell::{CipherCell, StorageKind};
use crate::{CloudError, Result};

const STORE_FILE: &str = "store.toml";
const TABLE_HEADER: &str = "#cipherstore-table v1";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnDef {
    pub name: String,
    pub kind: StorageKind,
}

/// An encrypted table as held by the store. Extension columns are ordinary
/// columns named `<base>_Extension`; `extensions` lists the base columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedTable {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub extensions: Vec<String>,
    pub rows: Vec<Vec<CipherCell>>,
}

impl EncryptedTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn check(&self) -> Result<()> {
        for base in &self.extensions {
            let ext = format!("{base}_Extension");
            let (Some(bi), Some(ei)) = (self.column_index(base), self.column_index(&ext)) else {
                return Err(CloudError::ManifestMismatch(format!(
                    "table {} lacks column {base} or {ext}",
                    self.name
                )));
            };
            for row in &self.rows {
                if row[bi].is_null() != row[ei].is_null() {
                    return Err(CloudError::ManifestMismatch(format!(
                        "{}.{ext} NULL-ness differs from its base column",
                        self.name
                    )));
                }
            }
        }
        for row in &self.rows {
            if row.len() != self.columns.len() {
                return Err(CloudError::Format(format!("row arity in table {}", self.name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncryptedStore {
    pub tables: BTreeMap<String, EncryptedTable>,
}

impl EncryptedStore {
    pub fn insert_table(&mut self, table: EncryptedTable) {
        self.tables.insert(table.name.clone(), table);
    }

    pub fn table(&self, name: &str) -> Result<&EncryptedTable> {
        self.tables.get(name).ok_or_else(|| CloudError::MissingTable(name.to_string()))
    }

    pub fn table_mut(&mut self, name: &str) -> Result<&mut EncryptedTable> {
        self.tables.get_mut(name).ok_or_else(|| CloudError::MissingTable(name.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct StoreManifest {
    format: String,
    version: u32,
    #[serde(default)]
    table: Vec<TableEntry>,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    name: String,
    file: String,
    columns: Vec<ColumnEntry>,
    #[serde(default)]
    extensions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ColumnEntry {
    name: String,
    kind: String,
}

fn kind_str(k: StorageKind) -> &'static str {
    match k {
        StorageKind::Int => "int",
        StorageKind::Text => "text",
    }
}

/// Writes `store.toml` plus one CSV file per table.
pub fn save_store(store: &EncryptedStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = StoreManifest {
        format: "cipherstore".into(),
        version: FORMAT_VERSION,
        table: Vec::new(),
    };
    for table in store.tables.values() {
        table.check()?;
        let file = format!("{}.csv", table.name);
        manifest.table.push(TableEntry {
            name: table.name.clone(),
            file: file.clone(),
            columns: table
                .columns
                .iter()
                .map(|c| ColumnEntry { name: c.name.clone(), kind: kind_str(c.kind).into() })
                .collect(),
            extensions: table.extensions.clone(),
        });
        let mut buf = format!("{TABLE_HEADER}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(table.columns.iter().map(|c| c.name.as_str()))?;
            for row in &table.rows {
                w.write_record(row.iter().map(|c| match c {
                    CipherCell::Int(v) => v.to_str_radix(10),
                    CipherCell::Text(s) => s.clone(),
                }))?;
            }
            w.flush()?;
        }
        fs::write(dir.join(&file), buf)?;
    }
    let text = toml::to_string(&manifest).map_err(|e| CloudError::Format(e.to_string()))?;
    fs::write(dir.join(STORE_FILE), text)?;
    Ok(())
}

pub fn load_store(dir: &Path) -> Result<EncryptedStore> {
    let text = fs::read_to_string(dir.join(STORE_FILE))?;
    let manifest: StoreManifest =
        toml::from_str(&text).map_err(|e| CloudError::Format(e.to_string()))?;
    if manifest.format != "cipherstore" || manifest.version != FORMAT_VERSION {
        return Err(CloudError::VersionMismatch {
            found: format!("{} v{}", manifest.format, manifest.version),
            expected: format!("cipherstore v{FORMAT_VERSION}"),
        });
    }
    let mut store = EncryptedStore::default();
    for entry in manifest.table {
        let columns = entry
            .columns
            .iter()
            .map(|c| {
                let kind = match c.kind.as_str() {
                    "int" => StorageKind::Int,
                    "text" => StorageKind::Text,
                    other => return Err(CloudError::Format(format!("column kind {other}"))),
                };
                Ok(ColumnDef { name: c.name.clone(), kind })
            })
            .collect::<Result<Vec<_>>>()?;
        let raw = fs::read_to_string(dir.join(&entry.file))?;
        let body = raw.strip_prefix(TABLE_HEADER).and_then(|r| r.strip_prefix('\n')).ok_or_else(|| {
            CloudError::VersionMismatch {
                found: raw.lines().next().unwrap_or("").to_string(),
                expected: TABLE_HEADER.to_string(),
            }
        })?;
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let expected: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
        if header != expected {
            return Err(CloudError::ManifestMismatch(format!(
                "table {} header {:?} does not match manifest {:?}",
                entry.name, header, expected
            )));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(CloudError::Format(format!("row arity in {}", entry.file)));
            }
            let row = rec
                .iter()
                .zip(&columns)
                .map(|(field, col)| match col.kind {
                    StorageKind::Int => BigUint::parse_bytes(field.as_bytes(), 10)
                        .filter(|_| field.bytes().all(|b| b.is_ascii_digit()))
                        .map(CipherCell::Int)
                        .ok_or_else(|| CloudError::Format(format!("bad integer cell {field:?}"))),
                    StorageKind::Text => Ok(CipherCell::Text(field.to_string())),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let table = EncryptedTable { name: entry.name, columns, extensions: entry.extensions, rows };
        table.check()?;
        store.insert_table(table);
    }
    Ok(store)
}
