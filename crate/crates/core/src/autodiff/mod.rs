//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! The primitive catalogue is closed: `add`, `sub`, `mul` (elementwise,
//! equal shapes), `matmul`, `conv2d` (stride 1, valid or same zero padding),
//! `relu`, `sin`, `cos`, `concat`, `sum`, `scale`, `gather` and `reshape`.
//! `gather` takes an explicit flat index map and covers transposes,
//! broadcasts, cyclic shifts and row selection; its backward pass is a
//! scatter-add.

mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
pub use ops::{Attrs, Op, Padding, CATALOGUE};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
