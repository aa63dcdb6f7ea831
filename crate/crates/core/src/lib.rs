// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod backbone;
pub mod checkpoint;
pub mod cipher;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod heads;
pub mod model;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{Decoding, HeadKind, Model};
