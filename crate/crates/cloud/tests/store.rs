use std::fs;
use std::path::Path;

use cipherdb_cloud::{load_store, save_store, CipherCell, CloudError, ColumnDef, EncryptedStore, EncryptedTable, StorageKind};
use num_bigint::BigUint;
use proptest::prelude::*;

fn cell(kind: StorageKind) -> impl Strategy<Value = CipherCell> {
    match kind {
        StorageKind::Int => prop_oneof![
            1 => Just(CipherCell::Int(BigUint::ZERO)),
            6 => prop::collection::vec(any::<u32>(), 1..4).prop_map(|d| CipherCell::Int(BigUint::new(d))),
        ]
        .boxed(),
        StorageKind::Text => prop_oneof![
            1 => Just(CipherCell::Text("0".into())),
            3 => prop::collection::vec(any::<u64>(), 1..5)
                .prop_map(|v| CipherCell::Text(v.iter().map(u64::to_string).collect::<Vec<_>>().join(",") + ",0")),
            2 => "[0-9]{6,24}".prop_map(CipherCell::Text),
        ]
        .boxed(),
    }
}

fn table(name: String) -> impl Strategy<Value = EncryptedTable> {
    prop::collection::vec(prop::bool::ANY, 1..5).prop_flat_map(move |kinds| {
        let columns: Vec<ColumnDef> = kinds
            .iter()
            .enumerate()
            .map(|(i, &text)| ColumnDef {
                name: format!("h{i:04x}"),
                kind: if text { StorageKind::Text } else { StorageKind::Int },
            })
            .collect();
        let row: Vec<_> = columns.iter().map(|c| cell(c.kind)).collect();
        let name = name.clone();
        prop::collection::vec(row, 0..12).prop_map(move |rows| EncryptedTable {
            name: name.clone(),
            columns: columns.clone(),
            extensions: vec![],
            rows,
        })
    })
}

fn store() -> impl Strategy<Value = EncryptedStore> {
    prop::collection::vec(table("ta".into()), 0..3).prop_map(|tables| {
        let mut s = EncryptedStore::default();
        for (i, mut t) in tables.into_iter().enumerate() {
            t.name = format!("t{i}");
            s.insert_table(t);
        }
        s
    })
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_is_identity_and_byte_stable(s in store()) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_store(&s, a.path()).unwrap();
        let back = load_store(a.path()).unwrap();
        prop_assert_eq!(&back, &s);
        save_store(&back, b.path()).unwrap();
        prop_assert_eq!(files(a.path()), files(b.path()));
    }
}

fn with_extension() -> EncryptedStore {
    let mut s = EncryptedStore::default();
    s.insert_table(EncryptedTable {
        name: "t".into(),
        columns: vec![
            ColumnDef { name: "q".into(), kind: StorageKind::Int },
            ColumnDef { name: "q_Extension".into(), kind: StorageKind::Int },
        ],
        extensions: vec!["q".into()],
        rows: vec![vec![CipherCell::Int(5u32.into()), CipherCell::Int(7u32.into())]],
    });
    s
}

#[test]
fn empty_store_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    save_store(&EncryptedStore::default(), dir.path()).unwrap();
    let names: Vec<String> = files(dir.path()).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["store.toml"]);
    assert_eq!(load_store(dir.path()).unwrap(), EncryptedStore::default());
}

#[test]
fn missing_extension_column_is_a_manifest_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    save_store(&with_extension(), dir.path()).unwrap();
    let toml = dir.path().join("store.toml");
    let text = fs::read_to_string(&toml).unwrap();
    fs::write(&toml, text.replace("extensions = [\"q\"]", "extensions = [\"r\"]")).unwrap();
    assert!(matches!(load_store(dir.path()), Err(CloudError::ManifestMismatch(_))));
}

#[test]
fn header_and_version_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    save_store(&with_extension(), dir.path()).unwrap();
    let csv = dir.path().join("t.csv");
    let original = fs::read_to_string(&csv).unwrap();
    fs::write(&csv, original.replace("q_Extension", "other")).unwrap();
    assert!(matches!(load_store(dir.path()), Err(CloudError::ManifestMismatch(_))));
    fs::write(&csv, original.replacen("v1", "v9", 1)).unwrap();
    assert!(matches!(load_store(dir.path()), Err(CloudError::VersionMismatch { .. })));
    fs::write(&csv, original).unwrap();
    let toml = dir.path().join("store.toml");
    let text = fs::read_to_string(&toml).unwrap();
    fs::write(&toml, text.replace("version = 1", "version = 2")).unwrap();
    assert!(matches!(load_store(dir.path()), Err(CloudError::VersionMismatch { .. })));
}

#[test]
fn store_holds_no_key_material() {
    // The crate cannot see keys: it does not depend on the owner crate.
    let manifest = include_str!("../Cargo.toml");
    assert!(!manifest.contains("cipherdb-core"));
    let dir = tempfile::tempdir().unwrap();
    save_store(&with_extension(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("store.toml")).unwrap();
    for word in ["sigma", "seed", "master", "key"] {
        assert!(!text.contains(word), "{word} in {text}");
    }
}
