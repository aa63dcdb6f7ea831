//! Decoding heads on top of the backbone: symbol-wise pooling, the standard
//! linear head and the bijective (permutation) head.

mod assignment;
mod bijective;
mod linear;
mod pool;
mod sinkhorn;

pub use assignment::{hard_assignment, PermutationMatrix};
pub use bijective::{
    apply_permutation, bijective_decode, permutation_to_cipher, BijectiveCache, BijectiveHead, BijectiveOutput, Mode,
};
pub use linear::{argmax_rows, linear_decode, linear_head, LinearHead};
pub use pool::{symbol_pool, PooledSymbols};
pub use sinkhorn::{
    gumbel_noise, gumbel_sinkhorn, sinkhorn, sum_deviation, DoublyStochasticMatrix, GumbelSinkhorn, LogSinkhorn,
    DEFAULT_ITERS, DEFAULT_TAU, GUMBEL_EPS,
};
