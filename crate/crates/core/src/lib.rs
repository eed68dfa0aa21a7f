// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod br_solver;
pub mod classifiers;
pub mod convex_sets;
pub mod error;
pub mod fitzpatrick;
pub mod functions;
pub mod harness;
mod linalg;
pub mod operators;
pub mod quasidensity;
pub mod scalar;
pub mod spaces;

pub use error::{Error, Result};
pub use functions::{ConvexFn, Tri};
pub use operators::MonotoneOperator;
pub use scalar::Real;
pub use spaces::{graph_norm, norm, pairing, DualPair, NormTag, Side};

pub type PairedPoint = spaces::PairedPoint<f64>;
pub type PairedPointF32 = spaces::PairedPoint<f32>;
pub type CompactConvexSet = convex_sets::CompactConvexSet<f64>;
pub type CompactConvexSetF32 = convex_sets::CompactConvexSet<f32>;
