use ndarray::Array2;

use super::Surface;
use crate::error::Result;
use crate::legendre::{gauss_rule, QuadRule};

/// `L2([-1,1]^2)` distance by tensor Gauss quadrature with `quad_nodes` per axis.
pub fn l2_error(approx: &impl Surface, exact: &impl Surface, quad_nodes: usize) -> Result<f64> {
    let rule = gauss_rule(quad_nodes.max(1))?;
    Ok(l2_error_on_rule(approx, exact, &rule))
}

pub fn l2_error_on_rule(approx: &impl Surface, exact: &impl Surface, rule: &QuadRule) -> f64 {
    let a = approx.grid(&rule.nodes, &rule.nodes);
    let e = exact.grid(&rule.nodes, &rule.nodes);
    weighted_l2(&(a - e), rule)
}

pub(crate) fn weighted_l2(diff: &Array2<f64>, rule: &QuadRule) -> f64 {
    let mut acc = 0.0;
    for (row, wa) in diff.outer_iter().zip(&rule.weights) {
        let inner: f64 = row.iter().zip(&rule.weights).map(|(d, wb)| wb * d * d).sum();
        acc += wa * inner;
    }
    acc.sqrt()
}

/// `grid_points` equispaced points on `[-1, 1]`, endpoints included.
pub fn uniform_points(grid_points: usize) -> Vec<f64> {
    match grid_points {
        0 => Vec::new(),
        1 => vec![0.0],
        m => (0..m)
            .map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64)
            .collect(),
    }
}

/// Max-norm distance on a `grid_points x grid_points` uniform grid.
pub fn c_error(approx: &impl Surface, exact: &impl Surface, grid_points: usize) -> f64 {
    let pts = uniform_points(grid_points.max(2));
    c_error_on_grid(approx, exact, &pts)
}

pub fn c_error_on_grid(approx: &impl Surface, exact: &impl Surface, points: &[f64]) -> f64 {
    let a = approx.grid(points, points);
    let e = exact.grid(points, points);
    max_abs_diff(&a, &e)
}

pub(crate) fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
