//! Owner-side components of the encrypted database: the OPEA cipher, value
//! codecs, the SQL front end, the plaintext-to-ciphertext translator, the
//! owner pipeline, a plaintext reference executor, and experiment helpers.

pub mod codec;
pub mod corpus;
pub mod dataset;
pub mod keyring;
pub mod lab;
pub mod manifest;
pub mod opea;
pub mod oracle;
pub mod owner;
pub mod rng;
pub mod sql;
pub mod translator;
pub mod value;

pub use value::{ResultTable, Value};
