use cipherdb_core::corpus::{parse_corpus, run_differential, DIFFERENTIAL_SCALE, DIFFERENTIAL_SEED, DIFFERENTIAL_SQL};
use cipherdb_core::dataset::{generate, manifest, DatasetSpec};
use cipherdb_core::owner::Owner;

#[test]
fn corpus_matches_reference() {
    let spec = DatasetSpec { scale: DIFFERENTIAL_SCALE, seed: DIFFERENTIAL_SEED };
    let mut db = generate(&spec);
    let mut owner = Owner::from_seed(manifest(&spec), 11).unwrap();
    let mut store = owner.encrypt_database(&db).unwrap();
    let entries = parse_corpus(DIFFERENTIAL_SQL);
    let reports = run_differential(&mut owner, &mut store, &mut db, &entries);
    let mut failed = Vec::new();
    for r in &reports {
        println!("{:<34} {:>8.1?} {:?}", r.name, r.elapsed, r.outcome);
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    assert!(failed.is_empty(), "mismatches: {failed:?}");
}
