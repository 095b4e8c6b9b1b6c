//! Dense-matrix math with reverse-mode differentiation plus the two
//! graph kernels (destination-grouped softmax, message scatter-sum)
//! every encoder is built on.

pub mod edges;
pub mod gradcheck;
pub mod matrix;
pub mod optim;
pub mod tape;

pub use edges::EdgeIndex;
pub use matrix::DenseMatrix;
pub use optim::{Adam, ParamId, ParamStore};
pub use tape::{sigmoid, softplus, Gradients, Tape, Value};
