//! Orthonormal Legendre basis on [-1, 1].
//!
//! `phi_k(t) = sqrt(k + 1/2) * P_k(t)` where `P_k` is the classical Legendre
//! polynomial. Derivatives are never taken pointwise: they act on coefficient
//! vectors through [`DerivOperator`], whose order-1 matrix expands
//!
//! ```text
//! phi_k'(t) = 2 sqrt(k + 1/2) * sum_{l < k, k + l odd} sqrt(l + 1/2) phi_l(t)
//! ```

use ndarray::{Array2, ArrayView2};

use crate::coeffs::CoeffGrid;
use crate::error::{Error, Result};

/// Evaluates `phi_k(t)`.
///
/// The unnormalized three-term recurrence is run first and scaled once at the
/// end, which keeps intermediate values bounded by 1 on [-1, 1].
pub fn eval_phi(k: usize, t: f64) -> f64 {
    (k as f64 + 0.5).sqrt() * legendre_p(k, t)
}

/// Classical Legendre polynomial `P_k(t)`.
pub fn legendre_p(k: usize, t: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => t,
        _ => {
            let mut prev = 1.0;
            let mut cur = t;
            for m in 1..k {
                let m = m as f64;
                let next = ((2.0 * m + 1.0) * t * cur - m * prev) / (m + 1.0);
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Writes `phi_0(t) ..= phi_{out.len()-1}(t)` into `out`.
pub fn phi_all_into(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let mut prev = 0.0;
    let mut cur = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = cur * (k as f64 + 0.5).sqrt();
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
}

/// `phi_0(t) ..= phi_max_degree(t)`.
pub fn phi_all(max_degree: usize, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_degree + 1];
    phi_all_into(t, &mut out);
    out
}

/// Basis values `phi_k(t_i)` laid out as `[degree, point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub max_degree: usize,
    pub values: Array2<f64>,
}

impl BasisEval {
    pub fn new(max_degree: usize, points: &[f64]) -> Self {
        let mut values = Array2::zeros((max_degree + 1, points.len()));
        let mut col = vec![0.0; max_degree + 1];
        for (i, &t) in points.iter().enumerate() {
            phi_all_into(t, &mut col);
            for (k, &v) in col.iter().enumerate() {
                values[[k, i]] = v;
            }
        }
        Self { max_degree, values }
    }
}

/// A quadrature rule on [-1, 1] (or a union of panels covering it).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `m`-point Gauss rule replicated on each panel of [-1, 1] split at
    /// `breakpoints`. Breakpoints outside the open interval are ignored.
    pub fn composite(m: usize, breakpoints: &[f64]) -> Result<Self> {
        let base = gauss_rule(m)?;
        let mut edges = vec![-1.0];
        let mut inner: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|&b| b > -1.0 && b < 1.0)
            .collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        edges.extend(inner);
        edges.push(1.0);

        let mut nodes = Vec::with_capacity(m * (edges.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            for (&x, &w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Ok(Self { nodes, weights })
    }
}

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// `m`-point Gauss-Legendre rule with strictly increasing nodes.
///
/// Nodes are Newton-refined roots of `P_m` starting from Chebyshev-like
/// guesses `cos(pi (i + 3/4) / (m + 1/2))`.
pub fn gauss_rule(m: usize) -> Result<QuadRule> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "Gauss rule needs at least one node".into(),
        ));
    }
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    // Roots come in +/- pairs; solve for the positive half and mirror.
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // i-th root from the top is the (m-1-i)-th in increasing order.
        nodes[m - 1 - i] = x;
        weights[m - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Ok(QuadRule { nodes, weights })
}

/// `(P_m(x), P_m'(x))`.
fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 1..m {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    let mf = m as f64;
    let d = mf * (x * cur - prev) / (x * x - 1.0);
    (cur, d)
}

/// Differentiation in coefficient space: `out[l] = sum_k matrix[[l, k]] * in[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivOperator {
    order: usize,
    matrix: Array2<f64>,
}

impl DerivOperator {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn max_degree(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn entry(&self, l: usize, k: usize) -> f64 {
        self.matrix[[l, k]]
    }

    /// Applies the operator to a coefficient vector of length `<= max_degree + 1`.
    /// The output has the same length as the input.
    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        assert!(coeffs.len() <= self.matrix.nrows(), "vector exceeds operator degree");
        (0..coeffs.len())
            .map(|l| {
                coeffs
                    .iter()
                    .enumerate()
                    .skip(l + 1)
                    .map(|(k, &c)| self.matrix[[l, k]] * c)
                    .sum()
            })
            .collect()
    }

    /// Restricts to degrees `0..=max_degree`.
    pub fn truncated(&self, max_degree: usize) -> Self {
        let m = max_degree.min(self.max_degree()) + 1;
        Self {
            order: self.order,
            matrix: self.matrix.slice(ndarray::s![..m, ..m]).to_owned(),
        }
    }
}

/// Order-1 operator from the expansion of `phi_k'` in lower-degree basis functions.
pub fn mueller_first_derivative(max_degree: usize) -> DerivOperator {
    let size = max_degree + 1;
    let mut matrix = Array2::zeros((size, size));
    for k in 1..size {
        let sk = (k as f64 + 0.5).sqrt();
        for l in ((k + 1) % 2..k).step_by(2) {
            matrix[[l, k]] = 2.0 * sk * (l as f64 + 0.5).sqrt();
        }
    }
    DerivOperator { order: 1, matrix }
}

/// The `r`-fold composition of an order-1 operator.
pub fn iterate_derivative(op1: &DerivOperator, r: usize) -> Result<DerivOperator> {
    if op1.order != 1 {
        return Err(Error::InvalidArgument(format!(
            "iterate_derivative expects an order-1 operator, got order {}",
            op1.order
        )));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("derivative order must be >= 1".into()));
    }
    let mut matrix = op1.matrix.clone();
    for _ in 1..r {
        matrix = upper_product(&op1.matrix, &matrix);
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow {
            order: r,
            max_degree: op1.max_degree(),
        });
    }
    Ok(DerivOperator { order: r, matrix })
}

/// Product of two strictly upper-triangular square matrices.
fn upper_product(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let size = a.nrows();
    let mut out = Array2::zeros((size, size));
    for l in 0..size {
        for m in l + 1..size {
            let alm = a[[l, m]];
            if alm == 0.0 {
                continue;
            }
            for k in m + 1..size {
                out[[l, k]] += alm * b[[m, k]];
            }
        }
    }
    out
}

/// `sum_{k,j} c_{k,j} phi_k(t_i) phi_j(tau_m)` for every `(t_i, tau_m)`.
pub fn synthesize(coeffs: &CoeffGrid, t_points: &[f64], tau_points: &[f64]) -> Array2<f64> {
    synthesize_array(coeffs.data(), t_points, tau_points)
}

pub(crate) fn synthesize_array(
    data: &Array2<f64>,
    t_points: &[f64],
    tau_points: &[f64],
) -> Array2<f64> {
    let (rows, cols) = data.dim();
    if rows == 0 || cols == 0 {
        return Array2::zeros((t_points.len(), tau_points.len()));
    }
    let bt = BasisEval::new(rows - 1, t_points);
    let btau = BasisEval::new(cols - 1, tau_points);
    bt.values.t().dot(&data.dot(&btau.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `P_k` through Rodrigues' formula: expand `(t^2 - 1)^k` in monomials,
    /// differentiate `k` times, divide by `2^k k!`.
    fn rodrigues(k: usize, t: f64) -> f64 {
        let mut poly = vec![0.0f64; 2 * k + 1];
        let mut binom = 1.0f64;
        for i in 0..=k {
            // coefficient of t^{2i} in (t^2 - 1)^k
            let sign = if (k - i).is_multiple_of(2) { 1.0 } else { -1.0 };
            poly[2 * i] = sign * binom;
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
        for _ in 0..k {
            poly = poly
                .iter()
                .enumerate()
                .skip(1)
                .map(|(p, &c)| p as f64 * c)
                .collect();
        }
        let value = poly.iter().rev().fold(0.0, |acc, &c| acc * t + c);
        let mut norm = 1.0;
        for i in 1..=k {
            norm *= 2.0 * i as f64;
        }
        value / norm
    }

    #[test]
    fn phi_known_values() {
        assert_relative_eq!(eval_phi(0, 0.37), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(eval_phi(1, 1.0), 1.5f64.sqrt(), epsilon = 1e-15);
        let expected = 5.5f64.sqrt() * rodrigues(5, 0.3);
        assert_relative_eq!(eval_phi(5, 0.3), expected, epsilon = 1e-14);
        for k in 0..12 {
            for &t in &[-1.0, -0.71, 0.0, 0.2, 0.95, 1.0] {
                assert_relative_eq!(legendre_p(k, t), rodrigues(k, t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn phi_all_matches_single() {
        let all = phi_all(30, -0.42);
        for (k, v) in all.iter().enumerate() {
            assert_relative_eq!(*v, eval_phi(k, -0.42), epsilon = 1e-13);
        }
    }

    #[test]
    fn phi_bounded_for_high_degree() {
        // |P_k| <= 1 on [-1, 1]; scaling happens after the recurrence.
        for &t in &[-1.0, -0.3, 0.77, 1.0] {
            let v = eval_phi(1000, t);
            assert!(v.is_finite());
            assert!(v.abs() <= 1000.5f64.sqrt() + 1e-9);
        }
        assert_relative_eq!(eval_phi(1000, 1.0), 1000.5f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn gauss_small_rules() {
        assert!(gauss_rule(0).is_err());
        let one = gauss_rule(1).unwrap();
        assert_eq!(one.nodes, vec![0.0]);
        assert_relative_eq!(one.weights[0], 2.0, epsilon = 1e-15);
        let two = gauss_rule(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert_relative_eq!(two.nodes[0], -x, epsilon = 1e-15);
        assert_relative_eq!(two.nodes[1], x, epsilon = 1e-15);
        assert_relative_eq!(two.weights[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(two.weights[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_five_matches_bisection_roots() {
        // Sign changes of P_5 on a fine grid, then plain bisection.
        let mut roots = Vec::new();
        let steps = 10_000;
        for i in 0..steps {
            let a = -1.0 + 2.0 * i as f64 / steps as f64;
            let b = -1.0 + 2.0 * (i + 1) as f64 / steps as f64;
            let (fa, fb) = (rodrigues(5, a), rodrigues(5, b));
            if fa == 0.0 {
                roots.push(a);
            } else if fa * fb < 0.0 {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if rodrigues(5, lo) * rodrigues(5, mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
        let rule = gauss_rule(5).unwrap();
        assert_eq!(roots.len(), 5);
        for (a, b) in rule.nodes.iter().zip(&roots) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn gauss_rule_invariants() {
        for m in [1usize, 2, 3, 7, 16, 33, 64, 200] {
            let rule = gauss_rule(m).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-12, "m={m} sum={sum}");
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!(rule.nodes.windows(2).all(|p| p[0] < p[1]));
            assert!(rule.nodes.iter().all(|&x| x > -1.0 && x < 1.0));
            // exact on monomials up to degree 2m - 1
            for d in 0..(2 * m).min(40) {
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                let got = rule.integrate(|x| x.powi(d as i32));
                assert!((got - exact).abs() < 1e-13, "m={m} d={d}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn composite_rule_covers_interval() {
        let rule = QuadRule::composite(8, &[0.0, 0.5, 3.0]).unwrap();
        assert_eq!(rule.len(), 24);
        let sum: f64 = rule.weights.iter().sum();
        assert_relative_eq!(sum, 2.0, epsilon = 1e-13);
        // |t| is piecewise linear: exact with a split at 0
        assert_relative_eq!(rule.integrate(f64::abs), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn mueller_columns() {
        let op = mueller_first_derivative(6);
        assert!((0..=6).all(|l| op.entry(l, 0) == 0.0));
        assert_relative_eq!(op.entry(0, 1), 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(op.entry(1, 2), 15f64.sqrt(), epsilon = 1e-14);
        for l in (0..=6).filter(|&l| l != 1) {
            assert_eq!(op.entry(l, 2), 0.0);
        }
        for k in 0..=6 {
            let nz: Vec<usize> = (0..=6).filter(|&l| op.entry(l, k) != 0.0).collect();
            assert_eq!(nz.len(), k.div_ceil(2), "column {k}");
            assert!(nz.iter().all(|&l| l < k && (k + l) % 2 == 1));
        }
    }

    #[test]
    fn iterate_second_order() {
        let op1 = mueller_first_derivative(5);
        let same = iterate_derivative(&op1, 1).unwrap();
        assert_eq!(same, op1);
        let op2 = iterate_derivative(&op1, 2).unwrap();
        assert_eq!(op2.order(), 2);
        assert_relative_eq!(op2.entry(0, 2), 45f64.sqrt(), epsilon = 1e-13);
        assert!((1..=5).all(|l| op2.entry(l, 2) == 0.0));

        // t^3 = (3/5) P_1 + (2/5) P_3; in phi-basis c_k = a_k / sqrt(k + 1/2).
        let c = vec![0.0, 0.6 / 1.5f64.sqrt(), 0.0, 0.4 / 3.5f64.sqrt(), 0.0, 0.0];
        let d2 = op2.apply(&c);
        // 6t = 6 P_1 -> phi coefficient 6 / sqrt(3/2)
        let expected = [0.0, 6.0 / 1.5f64.sqrt(), 0.0, 0.0, 0.0, 0.0];
        for (a, b) in d2.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-13);
        }
        assert!(iterate_derivative(&op1, 0).is_err());
        assert!(iterate_derivative(&op2, 2).is_err());
    }

    #[test]
    fn iterated_growth_bound() {
        // |M^r[l][k]| stays within sqrt(k l) * k^{2(r-1)} * const
        let op1 = mueller_first_derivative(200);
        for r in 1..=4 {
            let op = iterate_derivative(&op1, r).unwrap();
            let mut worst = 0.0f64;
            for k in 1..=200usize {
                for l in 0..k {
                    let scale = (k as f64 + 0.5).sqrt()
                        * (l as f64 + 0.5).sqrt()
                        * (k as f64).powi(2 * (r as i32 - 1));
                    worst = worst.max(op.entry(l, k).abs() / scale);
                }
            }
            assert!(worst.is_finite() && worst <= 2.0, "r={r}: {worst}");
        }
    }

    #[test]
    fn synthesize_constant_and_linear() {
        let mut grid = CoeffGrid::zeros(0, 0);
        grid.data_mut()[[0, 0]] = 1.0;
        let s = synthesize(&grid, &[-1.0, 0.3, 1.0], &[-0.5, 0.9]);
        assert!(s.iter().all(|&v| (v - 0.5).abs() < 1e-15));

        let mut lin = CoeffGrid::zeros(1, 0);
        lin.data_mut()[[1, 0]] = 2.0 / 3.0 * 3f64.sqrt();
        let ts = [-1.0, -0.25, 0.0, 0.6, 1.0];
        let taus = [-0.8, 0.1, 1.0];
        let s = synthesize(&lin, &ts, &taus);
        for (i, &t) in ts.iter().enumerate() {
            for m in 0..taus.len() {
                assert_relative_eq!(s[[i, m]], t, epsilon = 1e-14);
            }
        }
    }
}
