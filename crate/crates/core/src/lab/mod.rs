//! Experiments on the cipher itself: ciphertext distribution, the ordered
//! chosen-ciphertext attack, noise growth of ciphertext sums, and timings.
//! Every experiment is deterministic under its seed and reports CSV.

pub mod attack;
pub mod bench;
pub mod dist;
pub mod noise;

use serde::Serialize;

/// Serializes rows as CSV with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}
