pub mod bench;
pub mod bits;
pub mod cli;
pub mod cycle_model;
pub mod error;
pub mod format;
pub mod ftl;
pub mod fse;
pub mod huffman;
pub mod lz77;

pub use error::{Corruption, Error, Result};
