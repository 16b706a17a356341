//! Stable recovery of high-order partial derivatives of bivariate functions
//! from perturbed Fourier-Legendre coefficients.
//!
//! The method truncates the Legendre series of `f` to a hyperbolic cross
//! `{(k, j): k * j^gamma <= n}` and differentiates the finite sum in
//! coefficient space. Choosing `n` as a power of the noise level `delta`
//! is the only regularization applied.
//!
//! Modules, bottom-up:
//!
//! * [`legendre`]: orthonormal basis, Gauss-Legendre rules, differentiation
//!   operators and synthesis of coefficient grids on point sets.
//! * [`coeffs`]: coefficient grids, quadrature (Gauss and trapezoid),
//!   noise injection and grid serialization.
//! * [`truncation`]: hyperbolic crosses, the truncation operators, the
//!   class norm and a-priori parameter choice.
//! * [`analysis`]: error metrics, the test-function corpus and
//!   convergence-rate studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coeffs;
mod error;
pub mod legendre;
pub mod truncation;

pub use analysis::{
    c_error, corpus, l2_error, rate_study, rate_study_with, Profile, RateStudyConfig,
    RateStudyResult, RateTrial, Surface, TestFunction,
};
pub use coeffs::{
    add_noise, exact_coeffs, lp_norm, trapezoid_coeffs, CoeffGrid, NoiseMode, NoiseSpec,
    Provenance, Support,
};
pub use error::{Error, Result};
pub use legendre::{
    eval_phi, gauss_rule, iterate_derivative, mueller_first_derivative, synthesize, BasisEval,
    DerivOperator, QuadRule,
};
pub use truncation::{
    build_cross, cardinality_growth, choose_gamma, choose_n, class_norm, truncate,
    ApproxDerivative, Axis, CrossSet, FunctionClass, MethodParams, Metric, SmoothnessParams,
};
