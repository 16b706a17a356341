//! Error metrics, the built-in test functions and convergence-rate studies.

pub mod corpus;
mod metrics;
mod rate;

use ndarray::Array2;

pub use corpus::{corpus, DerivativeSurface, Profile, TestFunction};
pub use metrics::{c_error, c_error_on_grid, l2_error, l2_error_on_rule, uniform_points};
pub use rate::{fit_loglog_slope, median, rate_study, rate_study_with, RateStudyConfig, RateStudyResult, RateTrial};

use crate::legendre::phi_all;
use crate::truncation::ApproxDerivative;

/// A bivariate function on `[-1, 1]^2` that can be sampled pointwise or on a
/// tensor grid. Grid sampling is `values[[i, m]] = f(t_i, tau_m)`.
pub trait Surface {
    fn value(&self, t: f64, tau: f64) -> f64;

    fn grid(&self, t_points: &[f64], tau_points: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((t_points.len(), tau_points.len()), |(i, m)| {
            self.value(t_points[i], tau_points[m])
        })
    }
}

impl<F: Fn(f64, f64) -> f64> Surface for F {
    fn value(&self, t: f64, tau: f64) -> f64 {
        self(t, tau)
    }
}

impl Surface for ApproxDerivative {
    fn value(&self, t: f64, tau: f64) -> f64 {
        let data = self.coeffs().data();
        let pt = phi_all(data.nrows().saturating_sub(1), t);
        let ptau = phi_all(data.ncols().saturating_sub(1), tau);
        data.outer_iter()
            .zip(&pt)
            .map(|(row, a)| a * row.iter().zip(&ptau).map(|(c, b)| c * b).sum::<f64>())
            .sum()
    }

    fn grid(&self, t_points: &[f64], tau_points: &[f64]) -> Array2<f64> {
        self.evaluate(t_points, tau_points)
    }
}
