pub mod baselines;
pub mod checkpoint;
pub mod corpus;
mod digest;
pub mod eval;
pub mod masking;
pub mod model;
pub mod rank;
pub mod synth;
pub mod vocab;

pub use digest::sha256_hex;
