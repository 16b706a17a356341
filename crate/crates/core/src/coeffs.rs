//! Fourier-Legendre coefficient grids `c[k][j] = <f, phi_k phi_j>`.
//!
//! Grids are dense `(K + 1) x (J + 1)` arrays. Index sets such as hyperbolic
//! crosses are applied later, at truncation time.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::analysis::{Surface, TestFunction};
use crate::error::{Error, Result};
use crate::legendre::{phi_all_into, BasisEval, QuadRule};
use crate::truncation::{Axis, CrossSet};

/// How the perturbation is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Gaussian draw rescaled so that `||xi||_p == delta`.
    Rescaled,
    /// `delta * N(0, 1)` per entry, no norm guarantee.
    RawGaussian,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Rescaled => "rescaled",
            NoiseMode::RawGaussian => "raw_gaussian",
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rescaled" => Ok(NoiseMode::Rescaled),
            "raw_gaussian" | "raw" => Ok(NoiseMode::RawGaussian),
            other => Err(Error::Parse(format!("unknown noise mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Exact,
    Trapezoid {
        h: f64,
    },
    Noisy {
        base: Box<Provenance>,
        delta: f64,
        p: f64,
        mode: NoiseMode,
        seed: u64,
    },
}

impl Provenance {
    pub fn kind(&self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::Trapezoid { .. } => "trapezoid",
            Provenance::Noisy { .. } => "noisy",
        }
    }

    fn push_metadata(&self, prefix: &str, out: &mut Vec<(String, String)>) {
        out.push((format!("{prefix}provenance"), self.kind().to_string()));
        match self {
            Provenance::Exact => {}
            Provenance::Trapezoid { h } => out.push((format!("{prefix}h"), fmt_f64(*h))),
            Provenance::Noisy {
                base,
                delta,
                p,
                mode,
                seed,
            } => {
                out.push((format!("{prefix}delta"), fmt_f64(*delta)));
                out.push((format!("{prefix}p"), fmt_f64(*p)));
                out.push((format!("{prefix}mode"), mode.as_str().to_string()));
                out.push((format!("{prefix}seed"), seed.to_string()));
                base.push_metadata(&format!("{prefix}base."), out);
            }
        }
    }

    fn from_metadata(prefix: &str, meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| {
            meta.get(&format!("{prefix}{key}"))
                .ok_or_else(|| Error::Parse(format!("missing metadata key '{prefix}{key}'")))
        };
        match get("provenance")?.as_str() {
            "exact" => Ok(Provenance::Exact),
            "trapezoid" => Ok(Provenance::Trapezoid {
                h: parse_f64(get("h")?)?,
            }),
            "noisy" => Ok(Provenance::Noisy {
                delta: parse_f64(get("delta")?)?,
                p: parse_f64(get("p")?)?,
                mode: get("mode")?.parse()?,
                seed: get("seed")?
                    .parse()
                    .map_err(|e| Error::Parse(format!("seed: {e}")))?,
                base: Box::new(Provenance::from_metadata(&format!("{prefix}base."), meta)?),
            }),
            other => Err(Error::Parse(format!("unknown provenance '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffGrid {
    data: Array2<f64>,
    provenance: Provenance,
}

impl CoeffGrid {
    /// Zero grid covering degrees `0..=max_k` by `0..=max_j`.
    pub fn zeros(max_k: usize, max_j: usize) -> Self {
        Self {
            data: Array2::zeros((max_k + 1, max_j + 1)),
            provenance: Provenance::Exact,
        }
    }

    pub fn from_array(data: Array2<f64>, provenance: Provenance) -> Self {
        Self { data, provenance }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn max_k(&self) -> usize {
        self.data.nrows().saturating_sub(1)
    }

    pub fn max_j(&self) -> usize {
        self.data.ncols().saturating_sub(1)
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data.get((k, j)).copied().unwrap_or(0.0)
    }

    pub fn transposed(&self) -> Self {
        Self {
            data: self.data.t().to_owned(),
            provenance: self.provenance.clone(),
        }
    }

    /// Entrywise `self - other`, zero-padding to the larger shape.
    pub fn difference(&self, other: &CoeffGrid) -> CoeffGrid {
        let rows = self.data.nrows().max(other.data.nrows());
        let cols = self.data.ncols().max(other.data.ncols());
        let data = Array2::from_shape_fn((rows, cols), |(k, j)| self.get(k, j) - other.get(k, j));
        CoeffGrid::from_array(data, Provenance::Exact)
    }

    /// Writes `k,j,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,j,value")?;
        for ((k, j), v) in self.data.indexed_iter() {
            writeln!(w, "{k},{j},{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    /// Reads a `k,j,value` listing; the shape is the bounding box of the indices
    /// unless `shape` is given.
    pub fn read_csv<R: Read>(r: R, shape: Option<(usize, usize)>) -> Result<Array2<f64>> {
        let mut entries = Vec::new();
        let reader = BufReader::new(r);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 {
                if line != "k,j,value" {
                    return Err(Error::Parse(format!("unexpected header '{line}'")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: too few fields", lineno + 1)))
            };
            let k: usize = next()?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let j: usize = next()?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let v = parse_f64(next()?)?;
            entries.push((k, j, v));
        }
        let (rows, cols) = shape.unwrap_or_else(|| {
            entries.iter().fold((0, 0), |(r, c), &(k, j, _)| {
                (r.max(k + 1), c.max(j + 1))
            })
        });
        let mut data = Array2::zeros((rows, cols));
        for (k, j, v) in entries {
            let slot = data
                .get_mut((k, j))
                .ok_or_else(|| Error::Parse(format!("index ({k}, {j}) outside {rows}x{cols}")))?;
            *slot = v;
        }
        Ok(data)
    }

    /// Metadata record: provenance chain, shape and any `extra` pairs.
    pub fn metadata(&self, extra: &[(String, String)]) -> Vec<(String, String)> {
        let mut out = vec![
            ("rows".to_string(), self.data.nrows().to_string()),
            ("cols".to_string(), self.data.ncols().to_string()),
        ];
        self.provenance.push_metadata("", &mut out);
        out.extend(extra.iter().cloned());
        out
    }

    /// Writes `<stem>.csv` and the `<stem>.meta` sidecar.
    pub fn save(&self, dir: &Path, stem: &str, extra: &[(String, String)]) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = std::io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?);
        self.write_csv(&mut csv)?;
        csv.flush()?;
        write_metadata(&dir.join(format!("{stem}.meta")), &self.metadata(extra))
    }

    /// Inverse of [`CoeffGrid::save`]; returns the grid and the full metadata map.
    pub fn load(dir: &Path, stem: &str) -> Result<(CoeffGrid, BTreeMap<String, String>)> {
        let meta = read_metadata(&dir.join(format!("{stem}.meta")))?;
        let dim = |key: &str| -> Result<usize> {
            meta.get(key)
                .ok_or_else(|| Error::Parse(format!("missing metadata key '{key}'")))?
                .parse()
                .map_err(|e| Error::Parse(format!("{key}: {e}")))
        };
        let shape = (dim("rows")?, dim("cols")?);
        let data = Self::read_csv(fs::File::open(dir.join(format!("{stem}.csv")))?, Some(shape))?;
        let provenance = Provenance::from_metadata("", &meta)?;
        Ok((CoeffGrid::from_array(data, provenance), meta))
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "infinity" | "Inf" => Ok(f64::INFINITY),
        "-inf" | "-infinity" | "-Inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse()
            .map_err(|e| Error::Parse(format!("'{t}' is not a number: {e}"))),
    }
}

/// Plain `key=value` lines.
pub fn write_metadata(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_metadata(&fs::read_to_string(path)?)
}

pub fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("metadata line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Exact => write!(f, "exact"),
            Provenance::Trapezoid { h } => write!(f, "trapezoid(h={h:e})"),
            Provenance::Noisy {
                base, delta, p, ..
            } => write!(f, "noisy({base}, delta={delta:e}, p={p})"),
        }
    }
}

/// `(sum |x|^p)^(1/p)`, or `max |x|` for `p = inf`.
pub fn lp_norm(grid: &CoeffGrid, p: f64) -> f64 {
    lp_norm_values(grid.data.iter().copied(), p)
}

pub fn lp_norm_values<I>(values: I, p: f64) -> f64
where
    I: IntoIterator<Item = f64> + Clone,
{
    let max = values.clone().into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if p.is_infinite() || max == 0.0 {
        return max;
    }
    // scaled by the max entry so tiny or huge inputs neither underflow nor overflow
    let sum: f64 = values.into_iter().map(|v| (v.abs() / max).powf(p)).sum();
    max * sum.powf(1.0 / p)
}

/// Perturbation model: `||xi||_p <= delta` with `0 < delta < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub delta: f64,
    pub p: f64,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(delta: f64, p: f64, mode: NoiseMode, seed: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "noise level delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
        }
        Ok(Self {
            delta,
            p,
            mode,
            seed,
        })
    }

    pub fn rescaled(delta: f64, p: f64, seed: u64) -> Result<Self> {
        Self::new(delta, p, NoiseMode::Rescaled, seed)
    }
}

/// Index set that receives noise.
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    Full,
    Cross(&'a CrossSet),
}

/// The perturbation `xi` alone, shaped like a `(max_k + 1) x (max_j + 1)` grid.
///
/// Entries are drawn sequentially in `(k, j)` order from a ChaCha8 stream
/// seeded with `spec.seed`, so the result depends only on the spec and support.
pub fn perturbation(
    max_k: usize,
    max_j: usize,
    spec: &NoiseSpec,
    support: Support<'_>,
) -> Result<CoeffGrid> {
    NoiseSpec::new(spec.delta, spec.p, spec.mode, spec.seed)?;
    let indices: Vec<(usize, usize)> = match support {
        Support::Full => (0..=max_k)
            .flat_map(|k| (0..=max_j).map(move |j| (k, j)))
            .collect(),
        Support::Cross(cross) => {
            if let Some(&(k, j)) = cross
                .indices()
                .iter()
                .find(|&&(k, j)| k > max_k || j > max_j)
            {
                return Err(Error::GridTooSmall {
                    rows: max_k + 1,
                    cols: max_j + 1,
                    k,
                    j,
                });
            }
            cross.indices().to_vec()
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draws: Vec<f64> = indices
        .iter()
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();

    let mut xi = Array2::zeros((max_k + 1, max_j + 1));
    match spec.mode {
        NoiseMode::RawGaussian => {
            for (&(k, j), &g) in indices.iter().zip(&draws) {
                xi[[k, j]] = spec.delta * g;
            }
        }
        NoiseMode::Rescaled => {
            let norm = lp_norm_values(draws.iter().copied(), spec.p);
            if norm > 0.0 {
                let scale = spec.delta / norm;
                for (&(k, j), &g) in indices.iter().zip(&draws) {
                    xi[[k, j]] = g * scale;
                }
                if spec.p.is_infinite() {
                    // pin the extremal entry to the ball boundary exactly
                    let (pos, g) = draws
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                        .expect("non-empty");
                    let (k, j) = indices[pos];
                    xi[[k, j]] = spec.delta.copysign(*g);
                }
            }
        }
    }
    Ok(CoeffGrid::from_array(xi, Provenance::Exact))
}

/// `grid + xi` with `xi` from [`perturbation`].
pub fn add_noise(grid: &CoeffGrid, spec: &NoiseSpec, support: Support<'_>) -> Result<CoeffGrid> {
    let xi = perturbation(grid.max_k(), grid.max_j(), spec, support)?;
    let data = &grid.data + xi.data();
    Ok(CoeffGrid::from_array(
        data,
        Provenance::Noisy {
            base: Box::new(grid.provenance.clone()),
            delta: spec.delta,
            p: spec.p,
            mode: spec.mode,
            seed: spec.seed,
        },
    ))
}

/// Coefficients by composite tensor Gauss quadrature.
///
/// Each axis is split at the function's breakpoints and every panel gets
/// `quad_nodes` nodes, so piecewise polynomials of degree `< quad_nodes`
/// are integrated exactly.
pub fn exact_coeffs(f: &TestFunction, max_k: usize, max_j: usize, quad_nodes: usize) -> Result<CoeffGrid> {
    let needed = max_k.max(max_j) + 32;
    if quad_nodes < needed {
        return Err(Error::InvalidArgument(format!(
            "exact_coeffs needs at least {needed} quadrature nodes for degrees ({max_k}, {max_j}), got {quad_nodes}"
        )));
    }
    let rule_t = QuadRule::composite(quad_nodes, &f.breakpoints(Axis::T))?;
    let rule_tau = QuadRule::composite(quad_nodes, &f.breakpoints(Axis::Tau))?;
    let values = f.grid(&rule_t.nodes, &rule_tau.nodes);
    let bt = weighted_basis(max_k, &rule_t);
    let btau = weighted_basis(max_j, &rule_tau);
    let data = bt.dot(&values).dot(&btau.t());
    Ok(CoeffGrid::from_array(data, Provenance::Exact))
}

fn weighted_basis(max_degree: usize, rule: &QuadRule) -> Array2<f64> {
    let mut b = BasisEval::new(max_degree, &rule.nodes).values;
    for (mut col, &w) in b.columns_mut().into_iter().zip(&rule.weights) {
        col *= w;
    }
    b
}

/// Validates `h` and returns the number of trapezoid panels `2 / h`.
pub fn trapezoid_steps(h: f64) -> Result<usize> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "trapezoid step h must lie in (0, 1], got {h}"
        )));
    }
    let steps = (2.0 / h).round();
    if ((steps * h) - 2.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "trapezoid step h = {h} does not divide [-1, 1] into whole steps"
        )));
    }
    Ok(steps as usize)
}

/// Coefficients by the 2D composite trapezoid rule on a uniform grid of step `h`,
/// endpoints included.
///
/// For separable functions the double sum factors exactly into two 1D sums;
/// otherwise [`trapezoid_coeffs_dense`] is used.
pub fn trapezoid_coeffs(f: &TestFunction, max_k: usize, max_j: usize, h: f64) -> Result<CoeffGrid> {
    let steps = trapezoid_steps(h)?;
    let Some((pt, ptau, scale)) = f.separable_parts() else {
        return trapezoid_coeffs_dense(f, max_k, max_j, h);
    };
    let ct = trapezoid_1d(|t| pt.value(t), max_k, steps);
    let ctau = trapezoid_1d(|t| ptau.value(t), max_j, steps);
    let data = Array2::from_shape_fn((max_k + 1, max_j + 1), |(k, j)| ct[k] * ctau[j] / scale);
    Ok(CoeffGrid::from_array(data, Provenance::Trapezoid { h }))
}

fn trapezoid_node(i: usize, steps: usize) -> f64 {
    if i == steps {
        1.0
    } else {
        -1.0 + 2.0 * i as f64 / steps as f64
    }
}

fn trapezoid_weight(i: usize, steps: usize) -> f64 {
    let w = 2.0 / steps as f64;
    if i == 0 || i == steps {
        0.5 * w
    } else {
        w
    }
}

fn trapezoid_1d<F: Fn(f64) -> f64>(g: F, max_degree: usize, steps: usize) -> Vec<f64> {
    let mut acc = vec![0.0; max_degree + 1];
    let mut phi = vec![0.0; max_degree + 1];
    for i in 0..=steps {
        let t = trapezoid_node(i, steps);
        let gw = g(t) * trapezoid_weight(i, steps);
        phi_all_into(t, &mut phi);
        for (a, p) in acc.iter_mut().zip(&phi) {
            *a += gw * p;
        }
    }
    acc
}

const TRAPEZOID_ROW_CHUNK: usize = 64;

/// The 2D composite trapezoid rule evaluated row by row without assuming
/// separability. Cost is `O((2/h)^2 * J)`.
pub fn trapezoid_coeffs_dense(
    f: &TestFunction,
    max_k: usize,
    max_j: usize,
    h: f64,
) -> Result<CoeffGrid> {
    let steps = trapezoid_steps(h)?;
    let nodes: Vec<f64> = (0..=steps).map(|i| trapezoid_node(i, steps)).collect();
    let weights: Vec<f64> = (0..=steps).map(|i| trapezoid_weight(i, steps)).collect();
    let rule = QuadRule {
        nodes: nodes.clone(),
        weights,
    };
    let btau = weighted_basis(max_j, &rule);

    // Rows are grouped in fixed chunks and the partial sums reduced in chunk
    // order, so the result does not depend on the thread count.
    let chunks: Vec<Array2<f64>> = (0..=steps)
        .collect::<Vec<_>>()
        .par_chunks(TRAPEZOID_ROW_CHUNK)
        .map(|rows| {
            let mut part = Array2::zeros((max_k + 1, max_j + 1));
            let mut phi = vec![0.0; max_k + 1];
            for &a in rows {
                let t = nodes[a];
                let row = f.grid(&[t], &nodes);
                let g = btau.dot(&row.row(0));
                phi_all_into(t, &mut phi);
                let wa = rule.weights[a];
                for (k, &pk) in phi.iter().enumerate() {
                    let s = wa * pk;
                    for (j, &gj) in g.iter().enumerate() {
                        part[[k, j]] += s * gj;
                    }
                }
            }
            part
        })
        .collect();
    let mut data = Array2::zeros((max_k + 1, max_j + 1));
    for part in &chunks {
        data += part;
    }
    Ok(CoeffGrid::from_array(data, Provenance::Trapezoid { h }))
}
