use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use super::metrics::{max_abs_diff, uniform_points, weighted_l2};
use super::{Surface, TestFunction};
use crate::coeffs::{add_noise, exact_coeffs, fmt_f64, parse_f64, NoiseMode, NoiseSpec, Support};
use crate::error::{Error, Result};
use crate::legendre::{gauss_rule, iterate_derivative, mueller_first_derivative};
use crate::truncation::{
    build_cross, choose_gamma, choose_n, truncate, Axis, MethodParams, Metric, SmoothnessParams,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudyConfig {
    /// Constant in `n = c * delta^{-exponent}`.
    pub c: f64,
    pub axis: Axis,
    /// Trial `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    /// Uniform grid size per axis for the C error.
    pub grid_points: usize,
    /// Fixed `gamma`; `None` uses [`choose_gamma`] for the study metric.
    pub gamma: Option<f64>,
    pub noise_mode: NoiseMode,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        Self {
            c: 0.9,
            axis: Axis::T,
            base_seed: 0,
            grid_points: 513,
            gamma: None,
            noise_mode: NoiseMode::Rescaled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTrial {
    pub delta: f64,
    pub n: usize,
    pub gamma: f64,
    pub error_l2: f64,
    pub error_c: f64,
    pub seed: u64,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudyResult {
    pub metric: Metric,
    pub deltas: Vec<f64>,
    /// Median error per delta in `metric`.
    pub errors: Vec<f64>,
    pub fitted_slope: f64,
    pub theoretical_slope: f64,
    pub trials: Vec<RateTrial>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(
            "slope fit needs at least two paired points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "slope fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// [`rate_study_with`] using the default configuration.
pub fn rate_study(
    f: &TestFunction,
    sp: &SmoothnessParams,
    r: usize,
    metric: Metric,
    deltas: &[f64],
    seeds: usize,
) -> Result<RateStudyResult> {
    rate_study_with(f, sp, r, metric, deltas, seeds, &RateStudyConfig::default())
}

/// Runs the truncation method for each `delta` and seed, choosing `n` and
/// `gamma` a priori, and fits the log-log slope of the median error.
///
/// `sp.delta` is ignored; each entry of `deltas` replaces it.
pub fn rate_study_with(
    f: &TestFunction,
    sp: &SmoothnessParams,
    r: usize,
    metric: Metric,
    deltas: &[f64],
    seeds: usize,
    cfg: &RateStudyConfig,
) -> Result<RateStudyResult> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("rate study needs at least one seed".into()));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("derivative order must be >= 1".into()));
    }
    let lo = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().cloned().fold(0.0, f64::max);
    if deltas.is_empty() || !(hi / lo >= 1e3 * (1.0 - 1e-9)) {
        return Err(Error::InvalidArgument(
            "delta list must span at least three decades".into(),
        ));
    }
    let axis = cfg.axis;
    let mut plans = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let oriented = sp.with_delta(delta)?.oriented(axis);
        let n = choose_n(&oriented, r, cfg.c)?;
        let gamma = match cfg.gamma {
            Some(g) => g,
            None => choose_gamma(&oriented, r, metric)?,
        };
        plans.push((delta, n, gamma));
    }
    let n_max = plans.iter().map(|p| p.1).max().unwrap_or(r);
    let base = exact_coeffs(f, n_max, n_max, f.quadrature_nodes(n_max))?;
    let op = iterate_derivative(&mueller_first_derivative(n_max), r)?;

    let exact = f.derivative(r, axis)?;
    let l2_nodes = (n_max + 32).max(f.degree_hint().map_or(0, |d| d + 1));
    let rule = gauss_rule(l2_nodes)?;
    let exact_l2 = exact.grid(&rule.nodes, &rule.nodes);
    let c_points = uniform_points(cfg.grid_points.max(2));
    let exact_c = exact.grid(&c_points, &c_points);

    let jobs: Vec<(usize, u64)> = (0..plans.len())
        .flat_map(|i| (0..seeds as u64).map(move |s| (i, cfg.base_seed + s)))
        .collect();
    let trials = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (delta, n, gamma) = plans[i];
            let params = MethodParams { n, gamma, r, axis };
            let cross = build_cross(n, gamma, r, axis)?;
            let spec = NoiseSpec::new(delta, sp.p, cfg.noise_mode, seed)?;
            let noisy = add_noise(&base, &spec, Support::Cross(&cross))?;
            let approx = truncate(&noisy, &params, &op)?;
            let error_l2 = weighted_l2(&(approx.grid(&rule.nodes, &rule.nodes) - &exact_l2), &rule);
            let error_c = max_abs_diff(&approx.grid(&c_points, &c_points), &exact_c);
            Ok(RateTrial {
                delta,
                n,
                gamma,
                error_l2,
                error_c,
                seed,
                cardinality: approx.cardinality(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let errors: Vec<f64> = plans
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let vals: Vec<f64> = trials[i * seeds..(i + 1) * seeds]
                .iter()
                .map(|t| match metric {
                    Metric::L2 => t.error_l2,
                    Metric::C => t.error_c,
                })
                .collect();
            median(&vals)
        })
        .collect();
    let fitted_slope = fit_loglog_slope(deltas, &errors)?;
    let theoretical_slope = sp.with_delta(deltas[0])?.oriented(axis).rate_exponent(r, metric);
    Ok(RateStudyResult {
        metric,
        deltas: deltas.to_vec(),
        errors,
        fitted_slope,
        theoretical_slope,
        trials,
    })
}

const HEADER: &str = "delta,n,gamma,error_l2,error_c,seed";

impl RateStudyResult {
    /// One row per trial, then `summary,metric=..,fitted_slope=..,theoretical_slope=..,,`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{HEADER}")?;
        for t in &self.trials {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(t.delta),
                t.n,
                fmt_f64(t.gamma),
                fmt_f64(t.error_l2),
                fmt_f64(t.error_c),
                t.seed
            )?;
        }
        writeln!(
            w,
            "summary,metric={},fitted_slope={},theoretical_slope={},,",
            self.metric,
            fmt_f64(self.fitted_slope),
            fmt_f64(self.theoretical_slope)
        )?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Medians are recomputed from the
    /// trials; cardinalities are not stored and come back as zero.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != HEADER {
            return Err(Error::Parse(format!("unexpected rate study header '{header}'")));
        }
        let mut trials = Vec::new();
        let mut summary = None;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields[0] == "summary" {
                summary = Some(parse_summary(&fields)?);
                continue;
            }
            if fields.len() != 6 {
                return Err(Error::Parse(format!("line {}: expected 6 fields", lineno + 2)));
            }
            let int = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad integer '{s}'", lineno + 2)))
            };
            trials.push(RateTrial {
                delta: parse_f64(fields[0])?,
                n: int(fields[1])? as usize,
                gamma: parse_f64(fields[2])?,
                error_l2: parse_f64(fields[3])?,
                error_c: parse_f64(fields[4])?,
                seed: int(fields[5])?,
                cardinality: 0,
            });
        }
        let (metric, fitted_slope, theoretical_slope) =
            summary.ok_or_else(|| Error::Parse("missing summary row".into()))?;
        let mut deltas: Vec<f64> = Vec::new();
        for t in &trials {
            if !deltas.contains(&t.delta) {
                deltas.push(t.delta);
            }
        }
        let errors = deltas
            .iter()
            .map(|d| {
                let vals: Vec<f64> = trials
                    .iter()
                    .filter(|t| t.delta == *d)
                    .map(|t| match metric {
                        Metric::L2 => t.error_l2,
                        Metric::C => t.error_c,
                    })
                    .collect();
                median(&vals)
            })
            .collect();
        Ok(Self {
            metric,
            deltas,
            errors,
            fitted_slope,
            theoretical_slope,
            trials,
        })
    }
}

fn parse_summary(fields: &[&str]) -> Result<(Metric, f64, f64)> {
    let mut metric = None;
    let mut fitted = None;
    let mut theory = None;
    for f in &fields[1..] {
        let Some((k, v)) = f.split_once('=') else {
            continue;
        };
        match k {
            "metric" => metric = Some(v.parse::<Metric>()?),
            "fitted_slope" => fitted = Some(parse_f64(v)?),
            "theoretical_slope" => theory = Some(parse_f64(v)?),
            _ => {}
        }
    }
    match (metric, fitted, theory) {
        (Some(m), Some(f), Some(t)) => Ok((m, f, t)),
        _ => Err(Error::Parse("incomplete summary row".into())),
    }
}
