//! Certification of image classifiers against compositions of resolvable
//! semantic transformations (brightness, contrast, gamma, translation, blur).
//!
//! The pipeline estimates a confidence profile `p(h)` and direction magnitudes
//! `g(β)` by Monte-Carlo ([`bounds`]), turns them into the certification
//! functions ξ and ĝ ([`certify`]), and checks
//! `ĝ(β) < ξ(1/2) − ξ(1 − ĥ)` for the Clopper-Pearson lower bound `ĥ` of a
//! smoothed classifier ([`smoothing`]).

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod certify;
pub mod density;
pub mod digest;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod scalar;
pub mod smoothing;
pub mod synth;
pub mod tensor;
pub mod transforms;

pub use bounds::{compute_normed_bounds, BoundTable, ParameterGrid};
pub use certify::{CertificationResult, Certifier, RegionResult};
pub use density::{grad_log_rho_beta, DensityPath, SmoothingSpec};
pub use error::{Error, Result};
pub use model::{Classifier, Mlp, TrainConfig};
pub use numerics::{Interpolant, Matrix};
pub use scalar::Scalar;
pub use smoothing::{clopper_pearson_lower, smoothed_predict, SmoothedEstimate};
pub use tensor::{Image, LabeledDataset};
pub use transforms::{compose, CompositeTransform, ParamMap, ResolvableTransform, Transform};

pub type ImageTensor = Image<f64>;
pub type DenseMatrix = Matrix<f64>;
pub type Interpolant1D = Interpolant<f64>;
