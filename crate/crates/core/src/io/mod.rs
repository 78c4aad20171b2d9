//! Binary artifact formats: feature matrices and network checkpoints.

pub mod checkpoint;
pub mod fmat;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use fmat::{read_fmat, write_fmat};
