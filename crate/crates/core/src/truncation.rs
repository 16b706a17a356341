//! Hyperbolic-cross truncation of the differentiated Legendre series.
//!
//! For the `(r, 0)` derivative the retained index set is
//! `{(k, j): r <= k <= n, k * j^gamma <= n}`; the `(0, r)` variant mirrors it
//! with `k^gamma * j <= n, j >= r`. Coefficients outside the set are dropped
//! and the rest are differentiated along the derivative axis in coefficient
//! space.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;

use crate::coeffs::CoeffGrid;
use crate::error::{Error, Result};
use crate::legendre::{synthesize, DerivOperator};

/// Which variable is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// `f^{(r,0)}`
    T,
    /// `f^{(0,r)}`
    Tau,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::T => "t",
            Axis::Tau => "tau",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" | "t_axis" => Ok(Axis::T),
            "tau" | "tau_axis" => Ok(Axis::Tau),
            other => Err(Error::Parse(format!("unknown axis '{other}'"))),
        }
    }
}

/// Error metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    L2,
    C,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L2 => "L2",
            Metric::C => "C",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Metric::L2),
            "c" => Ok(Metric::C),
            other => Err(Error::Parse(format!("unknown metric '{other}'"))),
        }
    }
}

/// Slack on the `k * j^gamma <= n` test so that `powf` rounding cannot drop
/// boundary indices such as `4^1.5 = 8`.
const CROSS_SLACK: f64 = 1e-12;

/// Membership in the hyperbolic cross.
pub fn in_cross(k: usize, j: usize, n: usize, gamma: f64, r: usize, axis: Axis) -> bool {
    let deriv = match axis {
        Axis::T => k,
        Axis::Tau => j,
    };
    if deriv < r || deriv > n {
        return false;
    }
    let weight = match axis {
        Axis::T => k as f64 * (j as f64).powf(gamma),
        Axis::Tau => (k as f64).powf(gamma) * j as f64,
    };
    weight <= n as f64 * (1.0 + CROSS_SLACK)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSet {
    n: usize,
    gamma: f64,
    r: usize,
    axis: Axis,
    indices: Vec<(usize, usize)>,
}

impl CrossSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// Indices in `(k, j)` lexicographic order.
    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize, j: usize) -> bool {
        self.indices.binary_search(&(k, j)).is_ok()
    }

    pub fn max_k(&self) -> usize {
        self.indices.iter().map(|&(k, _)| k).max().unwrap_or(0)
    }

    pub fn max_j(&self) -> usize {
        self.indices.iter().map(|&(_, j)| j).max().unwrap_or(0)
    }

    /// `k,j` listing.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,j")?;
        for (k, j) in &self.indices {
            writeln!(w, "{k},{j}")?;
        }
        Ok(())
    }
}

/// Largest `m` with `in_range(m)`, starting from the float estimate `guess`.
fn adjust_limit(guess: f64, ok: impl Fn(usize) -> bool) -> usize {
    let mut m = if guess.is_finite() && guess > 0.0 {
        guess.floor() as usize
    } else {
        0
    };
    while m > 0 && !ok(m) {
        m -= 1;
    }
    while ok(m + 1) {
        m += 1;
    }
    m
}

pub fn build_cross(n: usize, gamma: f64, r: usize, axis: Axis) -> Result<CrossSet> {
    if r == 0 {
        return Err(Error::InvalidArgument("derivative order r must be >= 1".into()));
    }
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be >= 1, got {gamma}")));
    }
    let mut indices = Vec::new();
    if n >= r {
        let nf = n as f64;
        match axis {
            Axis::T => {
                for k in r..=n {
                    let jmax = adjust_limit((nf / k as f64).powf(1.0 / gamma), |j| {
                        in_cross(k, j, n, gamma, r, axis)
                    });
                    indices.extend((0..=jmax).map(|j| (k, j)));
                }
            }
            Axis::Tau => {
                // k = 0 admits every j in r..=n
                let kmax = adjust_limit((nf / r as f64).powf(1.0 / gamma), |k| {
                    in_cross(k, r, n, gamma, r, axis)
                });
                for k in 0..=kmax {
                    let jmax = if k == 0 {
                        n
                    } else {
                        adjust_limit(nf / (k as f64).powf(gamma), |j| {
                            j <= n && in_cross(k, j, n, gamma, r, axis)
                        })
                    };
                    indices.extend((r..=jmax).map(|j| (k, j)));
                }
            }
        }
    }
    Ok(CrossSet {
        n,
        gamma,
        r,
        axis,
        indices,
    })
}

/// `(n, card(cross))` for each `n`.
pub fn cardinality_growth(gamma: f64, r: usize, n_list: &[usize]) -> Result<Vec<(usize, usize)>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n list must be strictly increasing".into()));
    }
    n_list
        .iter()
        .map(|&n| Ok((n, build_cross(n, gamma, r, Axis::T)?.len())))
        .collect()
}

/// `max / min` of a list of positive ratios; 1 for fewer than two values.
pub fn band_ratio(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.len() < 2 {
        1.0
    } else {
        max / min
    }
}

/// Smoothness class `L^{mu}_{s,2}`: weighted `l_s`-summability of coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionClass {
    pub s: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Class parameters plus the noise metric `p` and level `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessParams {
    pub s: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub p: f64,
    pub delta: f64,
}

impl SmoothnessParams {
    pub fn new(s: f64, mu1: f64, mu2: f64, p: f64, delta: f64) -> Result<Self> {
        if !(s >= 1.0) || s.is_infinite() {
            return Err(Error::InvalidArgument(format!("s must lie in [1, inf), got {s}")));
        }
        if !(mu1 > 0.0 && mu2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mu1, mu2 must be positive, got ({mu1}, {mu2})"
            )));
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p must lie in [1, inf], got {p}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self {
            s,
            mu1,
            mu2,
            p,
            delta,
        })
    }

    pub fn from_class(class: FunctionClass, p: f64, delta: f64) -> Result<Self> {
        Self::new(class.s, class.mu1, class.mu2, p, delta)
    }

    pub fn with_delta(self, delta: f64) -> Result<Self> {
        Self::new(self.s, self.mu1, self.mu2, self.p, delta)
    }

    /// Parameters as seen from the derivative axis: for `(0, r)` the roles of
    /// `mu1` and `mu2` swap.
    pub fn oriented(self, axis: Axis) -> Self {
        match axis {
            Axis::T => self,
            Axis::Tau => Self {
                mu1: self.mu2,
                mu2: self.mu1,
                ..self
            },
        }
    }

    fn inv_p(&self) -> f64 {
        if self.p.is_infinite() {
            0.0
        } else {
            1.0 / self.p
        }
    }

    /// Exponent `1 / (mu1 - 1/p + 1/s)` of the a-priori rule `n ~ delta^{-exponent}`.
    pub fn n_exponent(&self) -> f64 {
        1.0 / (self.mu1 - self.inv_p() + 1.0 / self.s)
    }

    /// Guaranteed accuracy exponent: the error is `O(delta^{rate})`.
    pub fn rate_exponent(&self, r: usize, metric: Metric) -> f64 {
        let shift = match metric {
            Metric::L2 => 0.5,
            Metric::C => 1.5,
        };
        (self.mu1 - 2.0 * r as f64 + 1.0 / self.s - shift) * self.n_exponent()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub n: usize,
    pub gamma: f64,
    pub r: usize,
    pub axis: Axis,
}

/// Coefficient-space representation of the truncated derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxDerivative {
    coeffs: CoeffGrid,
    params: MethodParams,
    cardinality: usize,
}

impl ApproxDerivative {
    pub fn new(coeffs: CoeffGrid, params: MethodParams, cardinality: usize) -> Self {
        Self {
            coeffs,
            params,
            cardinality,
        }
    }

    /// Derivative-space coefficients: `sum c[l][j] phi_l(t) phi_j(tau)` is the approximation.
    pub fn coeffs(&self) -> &CoeffGrid {
        &self.coeffs
    }

    pub fn params(&self) -> &MethodParams {
        &self.params
    }

    /// Number of perturbed coefficients consumed.
    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn evaluate(&self, t_points: &[f64], tau_points: &[f64]) -> Array2<f64> {
        synthesize(&self.coeffs, t_points, tau_points)
    }
}

/// Zeroes every coefficient outside `cross`. The result covers exactly the
/// bounding box `0..=max_k` by `0..=max_j` of the cross.
pub fn restrict(coeffs: &CoeffGrid, cross: &CrossSet) -> Result<CoeffGrid> {
    let (rows, cols) = coeffs.data().dim();
    let (box_k, box_j) = match cross.axis() {
        Axis::T => (cross.n().max(cross.max_k()), cross.max_j()),
        Axis::Tau => (cross.max_k(), cross.n().max(cross.max_j())),
    };
    let mut data = Array2::zeros((box_k + 1, box_j + 1));
    for &(k, j) in cross.indices() {
        if k >= rows || j >= cols {
            return Err(Error::GridTooSmall { rows, cols, k, j });
        }
        data[[k, j]] = coeffs.data()[[k, j]];
    }
    Ok(CoeffGrid::from_array(data, coeffs.provenance().clone()))
}

/// The truncation method: restrict to the hyperbolic cross, then differentiate
/// `r` times along `params.axis` with `deriv_op`.
pub fn truncate(
    coeffs: &CoeffGrid,
    params: &MethodParams,
    deriv_op: &DerivOperator,
) -> Result<ApproxDerivative> {
    if deriv_op.order() != params.r {
        return Err(Error::InvalidArgument(format!(
            "operator order {} does not match derivative order {}",
            deriv_op.order(),
            params.r
        )));
    }
    let cross = build_cross(params.n, params.gamma, params.r, params.axis)?;
    let derivative_extent = match params.axis {
        Axis::T => coeffs.data().nrows(),
        Axis::Tau => coeffs.data().ncols(),
    };
    if !cross.is_empty() && derivative_extent <= params.n {
        return Err(Error::InvalidArgument(format!(
            "coefficient grid covers degree {} along the {} axis, truncation level n = {} needs more",
            derivative_extent.saturating_sub(1),
            params.axis,
            params.n
        )));
    }
    if deriv_op.max_degree() < params.n {
        return Err(Error::InvalidArgument(format!(
            "operator max degree {} below truncation level {}",
            deriv_op.max_degree(),
            params.n
        )));
    }
    let masked = restrict(coeffs, &cross)?;
    let data = match params.axis {
        Axis::T => differentiate_rows(masked.data(), deriv_op),
        Axis::Tau => differentiate_cols(masked.data(), deriv_op),
    };
    Ok(ApproxDerivative::new(
        CoeffGrid::from_array(data, masked.provenance().clone()),
        *params,
        cross.len(),
    ))
}

/// `out[l][j] = sum_{k > l} M[l][k] c[k][j]`, summed in increasing `k`.
pub(crate) fn differentiate_rows(c: &Array2<f64>, op: &DerivOperator) -> Array2<f64> {
    let (rows, cols) = c.dim();
    let mut out = Array2::zeros((rows, cols));
    for l in 0..rows {
        for k in l + 1..rows {
            let m = op.entry(l, k);
            if m == 0.0 {
                continue;
            }
            for j in 0..cols {
                out[[l, j]] += m * c[[k, j]];
            }
        }
    }
    out
}

/// Column counterpart of [`differentiate_rows`] with the same summation order.
pub(crate) fn differentiate_cols(c: &Array2<f64>, op: &DerivOperator) -> Array2<f64> {
    let (rows, cols) = c.dim();
    let mut out = Array2::zeros((rows, cols));
    for l in 0..cols {
        for j in l + 1..cols {
            let m = op.entry(l, j);
            if m == 0.0 {
                continue;
            }
            for k in 0..rows {
                out[[k, l]] += m * c[[k, j]];
            }
        }
    }
    out
}

/// A-priori truncation level `n = max(r, round(c * delta^{-1/(mu1 - 1/p + 1/s)}))`.
pub fn choose_n(sp: &SmoothnessParams, r: usize, c: f64) -> Result<usize> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("constant c must be positive, got {c}")));
    }
    let bound = 2.0 * r as f64 - 1.0 / sp.s + 0.5;
    if sp.mu1 <= bound {
        return Err(Error::Hypothesis(format!(
            "mu1 = {} must exceed 2r - 1/s + 1/2 = {bound}",
            sp.mu1
        )));
    }
    let raw = c * sp.delta.powf(-sp.n_exponent());
    Ok(r.max(raw.round() as usize))
}

/// Largest admissible gamma and whether it is attained.
pub fn gamma_bound(sp: &SmoothnessParams, r: usize, metric: Metric) -> Result<(f64, bool)> {
    let rf = r as f64;
    let inv_s = 1.0 / sp.s;
    let (mu1, mu2) = (sp.mu1, sp.mu2);
    match metric {
        Metric::L2 => {
            let denom = mu1 - 2.0 * rf + inv_s - 0.5;
            if denom <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "L2 rate needs mu1 > 2r - 1/s + 1/2 = {}, got mu1 = {mu1}",
                    2.0 * rf - inv_s + 0.5
                )));
            }
            if sp.s >= 2.0 {
                if mu2 <= mu1 - 2.0 * rf {
                    return Err(Error::Hypothesis(format!(
                        "s >= 2 needs mu2 > mu1 - 2r = {}, got mu2 = {mu2}",
                        mu1 - 2.0 * rf
                    )));
                }
                Ok(((mu2 + inv_s - 0.5) / denom, false))
            } else {
                if mu2 < denom {
                    return Err(Error::Hypothesis(format!(
                        "s < 2 needs mu2 >= mu1 - 2r + 1/s - 1/2 = {denom}, got mu2 = {mu2}"
                    )));
                }
                Ok((mu2 / denom, true))
            }
        }
        Metric::C => {
            let denom = mu1 - 2.0 * rf + inv_s - 1.5;
            if denom <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "C rate needs mu1 > 2r - 1/s + 3/2 = {}, got mu1 = {mu1}",
                    2.0 * rf - inv_s + 1.5
                )));
            }
            if mu2 <= mu1 - 2.0 * rf {
                return Err(Error::Hypothesis(format!(
                    "C rate needs mu2 > mu1 - 2r = {}, got mu2 = {mu2}",
                    mu1 - 2.0 * rf
                )));
            }
            Ok(((mu2 + inv_s - 1.5) / denom, false))
        }
    }
}

/// Midpoint of the admissible interval `[1, gamma_max)` (or `[1, gamma_max]`).
pub fn choose_gamma(sp: &SmoothnessParams, r: usize, metric: Metric) -> Result<f64> {
    let (gmax, closed) = gamma_bound(sp, r, metric)?;
    let empty = if closed { gmax < 1.0 } else { gmax <= 1.0 };
    if empty {
        return Err(Error::Hypothesis(format!(
            "admissible gamma interval is empty (upper bound {gmax})"
        )));
    }
    Ok(0.5 * (1.0 + gmax))
}

/// `(sum max(1,k)^{s mu1} max(1,j)^{s mu2} |c_kj|^s)^{1/s}`.
pub fn class_norm(coeffs: &CoeffGrid, s: f64, mu1: f64, mu2: f64) -> f64 {
    let sum: f64 = coeffs
        .data()
        .indexed_iter()
        .map(|((k, j), &c)| {
            let kb = k.max(1) as f64;
            let jb = j.max(1) as f64;
            (kb.powf(mu1) * jb.powf(mu2) * c.abs()).powf(s)
        })
        .sum();
    sum.powf(1.0 / s)
}
