//! Test functions with analytic derivatives.
//!
//! `example1` and `example2` are the piecewise-polynomial products used for
//! table reproduction. `synthetic_class` builds functions whose coefficients
//! decay just fast enough to sit inside `L^{mu}_{s,2}`, which is where the
//! convergence exponents become visible.

use std::f64::consts::PI;

use ndarray::Array2;

use super::Surface;
use crate::coeffs::{CoeffGrid, Provenance};
use crate::error::{Error, Result};
use crate::legendre::{mueller_first_derivative, iterate_derivative, phi_all, synthesize_array};
use crate::truncation::{class_norm, differentiate_cols, differentiate_rows, Axis, FunctionClass};

/// A univariate factor.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// Monomial coefficients, constant term first.
    Polynomial(Vec<f64>),
    /// `left` for `t < split`, `right` otherwise.
    Piecewise {
        split: f64,
        left: Vec<f64>,
        right: Vec<f64>,
    },
    /// `amplitude * cos(frequency * t)`
    Cosine { amplitude: f64, frequency: f64 },
    /// The orthonormal basis function `phi_k`.
    Basis(usize),
}

fn poly_derivative(coeffs: &[f64], order: usize) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    for _ in 0..order {
        if c.len() <= 1 {
            return vec![0.0];
        }
        c = c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &a)| i as f64 * a)
            .collect();
    }
    c
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// `P_k^{(r)}(t)` from the `r`-times differentiated three-term recurrence
/// `(m+1) P_{m+1}^{(q)} = (2m+1) (t P_m^{(q)} + q P_m^{(q-1)}) - m P_{m-1}^{(q)}`.
pub fn legendre_p_derivative(k: usize, r: usize, t: f64) -> f64 {
    let mut prev = vec![0.0; r + 1];
    let mut cur = vec![0.0; r + 1];
    cur[0] = 1.0;
    for m in 0..k {
        let mf = m as f64;
        let mut next = vec![0.0; r + 1];
        for q in 0..=r {
            let lower = if q > 0 { q as f64 * cur[q - 1] } else { 0.0 };
            next[q] = ((2.0 * mf + 1.0) * (t * cur[q] + lower) - mf * prev[q]) / (mf + 1.0);
        }
        prev = cur;
        cur = next;
    }
    cur[r]
}

impl Profile {
    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }

    pub fn derivative(&self, order: usize, t: f64) -> f64 {
        match self {
            Profile::Polynomial(c) => horner(&poly_derivative(c, order), t),
            Profile::Piecewise { split, left, right } => {
                let c = if t < *split { left } else { right };
                horner(&poly_derivative(c, order), t)
            }
            Profile::Cosine {
                amplitude,
                frequency,
            } => {
                amplitude
                    * frequency.powi(order as i32)
                    * (frequency * t + order as f64 * PI / 2.0).cos()
            }
            Profile::Basis(k) => (*k as f64 + 0.5).sqrt() * legendre_p_derivative(*k, order, t),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::Piecewise { split, .. } => vec![*split],
            _ => Vec::new(),
        }
    }

    /// Polynomial degree on each smooth piece, if polynomial.
    pub fn degree(&self) -> Option<usize> {
        match self {
            Profile::Polynomial(c) => Some(c.len().saturating_sub(1)),
            Profile::Piecewise { left, right, .. } => {
                Some(left.len().max(right.len()).saturating_sub(1))
            }
            Profile::Cosine { .. } => None,
            Profile::Basis(k) => Some(*k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Separable { t: Profile, tau: Profile },
    /// Finite Legendre series; coefficients already include the normalization.
    Series { coeffs: Array2<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    id: String,
    kind: Kind,
    class_info: Option<FunctionClass>,
    normalization: f64,
}

impl TestFunction {
    /// `f(t, tau) = t_part(t) * tau_part(tau) / normalization`.
    pub fn separable(
        id: &str,
        t_part: Profile,
        tau_part: Profile,
        normalization: f64,
        class_info: Option<FunctionClass>,
    ) -> Self {
        Self {
            id: id.to_string(),
            kind: Kind::Separable {
                t: t_part,
                tau: tau_part,
            },
            class_info,
            normalization,
        }
    }

    /// `f = sum c[k][j] phi_k(t) phi_j(tau)`; `normalization` is informational.
    pub fn from_coefficients(
        id: &str,
        coeffs: Array2<f64>,
        normalization: f64,
        class_info: Option<FunctionClass>,
    ) -> Self {
        Self {
            id: id.to_string(),
            kind: Kind::Series { coeffs },
            class_info,
            normalization,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn class_info(&self) -> Option<FunctionClass> {
        self.class_info
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn eval(&self, t: f64, tau: f64) -> f64 {
        self.value(t, tau)
    }

    /// Factors and normalization for separable functions.
    pub fn separable_parts(&self) -> Option<(&Profile, &Profile, f64)> {
        match &self.kind {
            Kind::Separable { t, tau } => Some((t, tau, self.normalization)),
            Kind::Series { .. } => None,
        }
    }

    /// Known Legendre coefficients for series-defined functions.
    pub fn series_coefficients(&self) -> Option<&Array2<f64>> {
        match &self.kind {
            Kind::Series { coeffs } => Some(coeffs),
            Kind::Separable { .. } => None,
        }
    }

    /// Points in (-1, 1) where the function is only piecewise smooth along `axis`.
    pub fn breakpoints(&self, axis: Axis) -> Vec<f64> {
        match (&self.kind, axis) {
            (Kind::Separable { t, .. }, Axis::T) => t.breakpoints(),
            (Kind::Separable { tau, .. }, Axis::Tau) => tau.breakpoints(),
            (Kind::Series { .. }, _) => Vec::new(),
        }
    }

    /// Largest polynomial degree on a smooth piece, if the function is polynomial there.
    pub fn degree_hint(&self) -> Option<usize> {
        match &self.kind {
            Kind::Separable { t, tau } => Some(t.degree()?.max(tau.degree()?)),
            Kind::Series { coeffs } => Some(coeffs.nrows().max(coeffs.ncols()).saturating_sub(1)),
        }
    }

    /// Gauss nodes per panel for computing coefficients up to degree `max_degree`.
    pub fn quadrature_nodes(&self, max_degree: usize) -> usize {
        let base = max_degree + 32;
        match self.degree_hint() {
            Some(d) => base.max((d + max_degree) / 2 + 1),
            None => base,
        }
    }

    /// Analytic `f^{(r,0)}` or `f^{(0,r)}`.
    pub fn derivative(&self, r: usize, axis: Axis) -> Result<DerivativeSurface> {
        if r == 0 {
            return Err(Error::InvalidArgument("derivative order must be >= 1".into()));
        }
        let inner = match &self.kind {
            Kind::Separable { t, tau } => {
                let (rt, rtau) = match axis {
                    Axis::T => (r, 0),
                    Axis::Tau => (0, r),
                };
                DerivInner::Separable {
                    t: t.clone(),
                    tau: tau.clone(),
                    rt,
                    rtau,
                    scale: self.normalization,
                }
            }
            Kind::Series { coeffs } => {
                let extent = match axis {
                    Axis::T => coeffs.nrows(),
                    Axis::Tau => coeffs.ncols(),
                };
                let op = iterate_derivative(&mueller_first_derivative(extent.max(1) - 1), r)?;
                let d = match axis {
                    Axis::T => differentiate_rows(coeffs, &op),
                    Axis::Tau => differentiate_cols(coeffs, &op),
                };
                DerivInner::Series(d)
            }
        };
        Ok(DerivativeSurface { inner })
    }

    /// Pointwise analytic derivative.
    pub fn exact_deriv(&self, r: usize, axis: Axis, t: f64, tau: f64) -> Result<f64> {
        Ok(self.derivative(r, axis)?.value(t, tau))
    }
}

fn series_value(coeffs: &Array2<f64>, t: f64, tau: f64) -> f64 {
    let pt = phi_all(coeffs.nrows().saturating_sub(1), t);
    let ptau = phi_all(coeffs.ncols().saturating_sub(1), tau);
    coeffs
        .outer_iter()
        .zip(&pt)
        .map(|(row, a)| a * row.iter().zip(&ptau).map(|(c, b)| c * b).sum::<f64>())
        .sum()
}

fn separable_grid(
    t_points: &[f64],
    tau_points: &[f64],
    ft: impl Fn(f64) -> f64,
    ftau: impl Fn(f64) -> f64,
    scale: f64,
) -> Array2<f64> {
    let vt: Vec<f64> = t_points.iter().map(|&t| ft(t)).collect();
    let vtau: Vec<f64> = tau_points.iter().map(|&t| ftau(t)).collect();
    Array2::from_shape_fn((vt.len(), vtau.len()), |(i, m)| vt[i] * vtau[m] / scale)
}

impl Surface for TestFunction {
    fn value(&self, t: f64, tau: f64) -> f64 {
        match &self.kind {
            Kind::Separable { t: pt, tau: ptau } => pt.value(t) * ptau.value(tau) / self.normalization,
            Kind::Series { coeffs } => series_value(coeffs, t, tau),
        }
    }

    fn grid(&self, t_points: &[f64], tau_points: &[f64]) -> Array2<f64> {
        match &self.kind {
            Kind::Separable { t, tau } => separable_grid(
                t_points,
                tau_points,
                |x| t.value(x),
                |x| tau.value(x),
                self.normalization,
            ),
            Kind::Series { coeffs } => synthesize_array(coeffs, t_points, tau_points),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DerivInner {
    Separable {
        t: Profile,
        tau: Profile,
        rt: usize,
        rtau: usize,
        scale: f64,
    },
    Series(Array2<f64>),
}

/// Exact partial derivative of a [`TestFunction`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSurface {
    inner: DerivInner,
}

impl DerivativeSurface {
    /// Legendre coefficients of the derivative, for series-defined functions.
    pub fn coefficients(&self) -> Option<CoeffGrid> {
        match &self.inner {
            DerivInner::Series(d) => Some(CoeffGrid::from_array(d.clone(), Provenance::Exact)),
            DerivInner::Separable { .. } => None,
        }
    }
}

impl Surface for DerivativeSurface {
    fn value(&self, t: f64, tau: f64) -> f64 {
        match &self.inner {
            DerivInner::Separable {
                t: pt,
                tau: ptau,
                rt,
                rtau,
                scale,
            } => pt.derivative(*rt, t) * ptau.derivative(*rtau, tau) / scale,
            DerivInner::Series(d) => series_value(d, t, tau),
        }
    }

    fn grid(&self, t_points: &[f64], tau_points: &[f64]) -> Array2<f64> {
        match &self.inner {
            DerivInner::Separable {
                t,
                tau,
                rt,
                rtau,
                scale,
            } => separable_grid(
                t_points,
                tau_points,
                |x| t.derivative(*rt, x),
                |x| tau.derivative(*rtau, x),
                *scale,
            ),
            DerivInner::Series(d) => synthesize_array(d, t_points, tau_points),
        }
    }
}

/// Shared factor of both examples; the branches differ only in the `t^7`, `t^8` terms.
pub fn example_profile() -> Profile {
    let common = [0.0, 0.0, -1.0 / 8.0, 0.0, 1.0 / 12.0, -1.0 / 25.0, 0.0];
    let mut left = common.to_vec();
    left.extend([1.0 / 38.0, -1.0 / 108.0]);
    let mut right = common.to_vec();
    right.extend([1.0 / 102.0, -1.0 / 198.0]);
    Profile::Piecewise {
        split: 0.0,
        left,
        right,
    }
}

pub const EXAMPLE1_NORMALIZATION: f64 = 947.0;
pub const EXAMPLE2_NORMALIZATION: f64 = 26318.0;

/// `F(t, tau) = f(t) f(tau) / 947`, class `mu = 5.6`, `s = 2`.
pub fn example1() -> TestFunction {
    TestFunction::separable(
        "example1",
        example_profile(),
        example_profile(),
        EXAMPLE1_NORMALIZATION,
        Some(FunctionClass {
            s: 2.0,
            mu1: 5.6,
            mu2: 5.6,
        }),
    )
}

/// `F(t, tau) = f(t) * 2 cos(pi tau) / 26318`, class `mu = 5.4`, `s = 2`.
pub fn example2() -> TestFunction {
    TestFunction::separable(
        "example2",
        example_profile(),
        Profile::Cosine {
            amplitude: 2.0,
            frequency: PI,
        },
        EXAMPLE2_NORMALIZATION,
        Some(FunctionClass {
            s: 2.0,
            mu1: 5.4,
            mu2: 5.4,
        }),
    )
}

/// Coefficients `a * kbar^{-mu1 - 1/s - eps} * jbar^{-mu2 - 1/s - eps}` for
/// `k, j <= max_degree`, with `a` chosen so the class norm is exactly 1.
pub fn synthetic_class(s: f64, mu1: f64, mu2: f64, eps: f64, max_degree: usize) -> TestFunction {
    let decay1 = mu1 + 1.0 / s + eps;
    let decay2 = mu2 + 1.0 / s + eps;
    let raw = Array2::from_shape_fn((max_degree + 1, max_degree + 1), |(k, j)| {
        (k.max(1) as f64).powf(-decay1) * (j.max(1) as f64).powf(-decay2)
    });
    let norm = class_norm(&CoeffGrid::from_array(raw.clone(), Provenance::Exact), s, mu1, mu2);
    TestFunction::from_coefficients(
        &synthetic_id(s, mu1, mu2),
        raw / norm,
        norm,
        Some(FunctionClass { s, mu1, mu2 }),
    )
}

fn synthetic_id(s: f64, mu1: f64, mu2: f64) -> String {
    if mu1 == mu2 {
        format!("synthetic_s{s}_mu{mu1}")
    } else {
        format!("synthetic_s{s}_mu{mu1}_{mu2}")
    }
}

pub const SYNTHETIC_EPS: f64 = 0.01;
pub const SYNTHETIC_MAX_DEGREE: usize = 256;

/// Built-in functions: both table examples plus the synthetic class functions
/// used by rate studies.
pub fn corpus() -> Vec<TestFunction> {
    vec![
        example1(),
        example2(),
        synthetic_class(2.0, 5.6, 5.6, SYNTHETIC_EPS, SYNTHETIC_MAX_DEGREE),
        synthetic_class(2.0, 5.4, 5.4, SYNTHETIC_EPS, SYNTHETIC_MAX_DEGREE),
    ]
}

pub fn ids() -> Vec<String> {
    corpus().iter().map(|f| f.id().to_string()).collect()
}

pub fn by_id(id: &str) -> Result<TestFunction> {
    match id {
        "example1" => return Ok(example1()),
        "example2" => return Ok(example2()),
        _ => {}
    }
    corpus()
        .into_iter()
        .find(|f| f.id() == id)
        .ok_or_else(|| Error::UnknownFunction(id.to_string()))
}
