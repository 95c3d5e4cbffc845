//! Numerical support routines: standard normal distribution functions,
//! Gauss-Legendre quadrature nodes, and a small dense linear solver.

mod gauss;
mod linalg;
mod normal;

pub use gauss::GaussLegendre;
pub use linalg::solve_dense;
pub use normal::{erf, erfc, normal_cdf, normal_pdf};

/// 1/sqrt(2*pi).
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
