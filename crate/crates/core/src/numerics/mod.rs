//! Dense real arrays and the handful of differentiable primitives the model
//! is assembled from. Every primitive has an explicit backward function; the
//! finite-difference checker in [`gradcheck`] is the oracle for all of them.

mod gradcheck;
mod io;
pub(crate) mod io_util {
    pub(crate) use super::io::{read_bytes, read_u32, read_u64};
}
mod ops;
mod rng;
mod tensor;

pub use gradcheck::check_gradients;
pub use io::{read_tensor_block, write_tensor_block, DTYPE_F32, DTYPE_F64};
pub use ops::{
    affine, affine_backward, dot, embedding_backward, embedding_lookup, log_softmax_masked,
    lstm_cell, lstm_cell_backward, matvec, matvec_t_acc, outer_acc, sigmoid, softmax_backward,
    softmax_masked, LstmCache, LstmWeights,
};
pub use rng::Rng;
pub use tensor::{Parameter, Tensor};
