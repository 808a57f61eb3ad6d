//! Special functions, interpolation, quadrature and small dense linear algebra.

pub mod interp;
pub mod linalg;
pub mod quad;
pub mod special;

pub use interp::{GridInterpolant, Interpolant};
pub use linalg::{gauss_newton_solve, log_det_spd, pinv, svd, Cholesky, Matrix, Svd};
pub use quad::{cumsum, mean, sort_descending, trapezoid_path_integral, DEFAULT_PATH_STEPS};
pub use special::{beta_inv_cdf, beta_reg, log_std_normal_sf, std_normal_cdf, std_normal_inv_cdf, std_normal_pdf};
