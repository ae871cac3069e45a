//! Minimal reverse-mode autodiff and transformer building blocks used by
//! the two sequence models. f64 throughout; deterministic given seeds.

pub mod layers;
pub mod optim;
pub mod tape;

pub use layers::*;
pub use optim::AdamW;
pub use tape::{sigmoid, softmax_rows, Matrix, NodeId, ParamSet, Tape};
