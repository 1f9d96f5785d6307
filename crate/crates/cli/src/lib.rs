//! Record flattening and serialization for the `qkdnet` binary.

pub mod output;
