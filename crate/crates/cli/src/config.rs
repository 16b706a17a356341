//! Experiment configuration.
//!
//! A config is a TOML document with the sections below; every key is optional
//! and falls back to the preset of the command being run.
//!
//! ```toml
//! [function]
//! id = "example1"
//!
//! [class]
//! s = 2.0
//! mu1 = 5.6
//! mu2 = 5.6
//! p = 2.0
//!
//! [method]
//! r = 2
//! axis = "t"
//! n = [16, 25, 28]
//! choose_n = false
//! c = 0.9
//! gamma = 1.0
//!
//! [noise]
//! mode = "rescaled"        # rescaled | raw_gaussian | trapezoid
//! delta = [1e-7, 1e-8, 1e-9]
//! h = []
//! norm = inf
//! seeds = 5
//! base_seed = 0
//!
//! [evaluation]
//! grid_points = 513
//! metric = "L2"
//!
//! [output]
//! dir = "results"
//! run_id = "example1_random"
//! ```

use std::path::{Path, PathBuf};

use legtrunc::analysis::corpus;
use legtrunc::coeffs::trapezoid_steps;
use legtrunc::{Axis, Metric, NoiseMode, SmoothnessParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const OUTPUT_ENV: &str = "LEGTRUNC_OUT";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub function: FunctionSection,
    pub class: ClassSection,
    pub method: MethodSection,
    pub noise: NoiseSection,
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionSection {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassSection {
    pub s: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Noise metric assumed by the parameter choice.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSection {
    pub r: usize,
    pub axis: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    pub choose_n: bool,
    pub c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub mode: String,
    /// Noise levels; in trapezoid mode only row labels.
    pub delta: Vec<f64>,
    pub h: Vec<f64>,
    /// Norm the rescaled noise is measured in; defaults to `class.p`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
    pub seeds: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub grid_points: usize,
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

impl Default for FunctionSection {
    fn default() -> Self {
        Self {
            id: "example1".into(),
        }
    }
}

impl Default for ClassSection {
    fn default() -> Self {
        Self {
            s: 2.0,
            mu1: 5.6,
            mu2: 5.6,
            p: 2.0,
        }
    }
}

impl Default for MethodSection {
    fn default() -> Self {
        Self {
            r: 2,
            axis: "t".into(),
            n: None,
            choose_n: false,
            c: 0.9,
            gamma: None,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            mode: "rescaled".into(),
            delta: Vec::new(),
            h: Vec::new(),
            norm: None,
            seeds: 5,
            base_seed: 0,
        }
    }
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            grid_points: 513,
            metric: "L2".into(),
        }
    }
}

/// How coefficients are perturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Random(NoiseMode),
    Trapezoid,
}

/// One table row to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowPlan {
    /// Noise level, or the row label in trapezoid mode.
    pub delta: Option<f64>,
    pub h: Option<f64>,
    pub n: usize,
    pub gamma: f64,
}

/// A validated config.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub function: legtrunc::TestFunction,
    pub sp: SmoothnessParams,
    pub r: usize,
    pub axis: Axis,
    pub noise: NoiseKind,
    pub noise_norm: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub grid_points: usize,
    pub metric: Metric,
    pub rows: Vec<RowPlan>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Table 1: random noise, rescaled to the `l_inf` ball.
    pub fn example1_random() -> Self {
        let mut cfg = Self::default();
        cfg.method.n = Some(vec![16, 25, 28]);
        cfg.method.gamma = Some(1.0);
        cfg.noise.delta = vec![1e-7, 1e-8, 1e-9];
        cfg.noise.norm = Some(f64::INFINITY);
        cfg
    }

    /// Table 2: trapezoid-rule coefficients.
    pub fn example1_trapezoid() -> Self {
        let mut cfg = Self::default();
        cfg.method.n = Some(vec![16, 22, 28]);
        cfg.method.gamma = Some(1.0);
        cfg.noise.mode = "trapezoid".into();
        cfg.noise.delta = vec![1e-7, 1e-8, 1e-9];
        cfg.noise.h = vec![1e-4, 8e-5, 4e-5];
        cfg
    }

    /// Table 3: second example, trapezoid-rule coefficients.
    pub fn example2() -> Self {
        let mut cfg = Self::example1_trapezoid();
        cfg.function.id = "example2".into();
        cfg.class.mu1 = 5.4;
        cfg.class.mu2 = 5.4;
        cfg.method.n = Some(vec![19, 31, 43]);
        cfg.noise.h = vec![8e-5, 2e-5, 8e-6];
        cfg
    }

    /// Convergence study on the synthetic class function.
    pub fn rate_study() -> Self {
        let mut cfg = Self::default();
        cfg.function.id = "synthetic_s2_mu5.6".into();
        cfg.method.choose_n = true;
        cfg.noise.delta = vec![1e-5, 1e-6, 1e-7, 1e-8, 1e-9];
        cfg
    }

    /// `base` with the keys present in `text` replaced.
    pub fn overlay(base: &Self, text: &str) -> Result<Self> {
        let mut merged = toml::Table::try_from(base).map_err(|e| invalid(e.to_string()))?;
        let update: toml::Table = toml::from_str(text).map_err(|e| invalid(one_line(&e.to_string())))?;
        merge(&mut merged, update);
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(one_line(&e.to_string())))
    }

    pub fn overlay_file(base: &Self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::overlay(base, &text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(e.to_string()))
    }

    /// Output root: config value, then `LEGTRUNC_OUT`, then `./results`.
    pub fn output_root(&self) -> PathBuf {
        if let Some(dir) = &self.output.dir {
            return PathBuf::from(dir);
        }
        std::env::var_os(OUTPUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn validate(&self) -> Result<Plan> {
        let function = corpus::by_id(&self.function.id)?;
        let c = &self.class;
        let sp = SmoothnessParams::new(c.s, c.mu1, c.mu2, c.p, 0.5)?;
        let r = self.method.r;
        if r == 0 {
            return Err(invalid("method.r must be >= 1"));
        }
        let axis: Axis = self.method.axis.parse()?;
        let metric: Metric = self.evaluation.metric.parse()?;
        if self.evaluation.grid_points < 257 {
            return Err(invalid(format!(
                "evaluation.grid_points must be >= 257, got {}",
                self.evaluation.grid_points
            )));
        }
        let noise = match self.noise.mode.as_str() {
            "trapezoid" => NoiseKind::Trapezoid,
            other => NoiseKind::Random(other.parse()?),
        };
        let noise_norm = self.noise.norm.unwrap_or(c.p);
        if !(noise_norm >= 1.0) {
            return Err(invalid(format!("noise.norm must lie in [1, inf], got {noise_norm}")));
        }
        if self.noise.seeds == 0 {
            return Err(invalid("noise.seeds must be >= 1"));
        }
        if !(self.method.c > 0.0) {
            return Err(invalid(format!("method.c must be positive, got {}", self.method.c)));
        }
        if let Some(g) = self.method.gamma {
            if !(g >= 1.0) || g.is_infinite() {
                return Err(invalid(format!("method.gamma must be >= 1, got {g}")));
            }
        }

        let (deltas, hs): (Vec<Option<f64>>, Vec<Option<f64>>) = match noise {
            NoiseKind::Random(_) => {
                if !self.noise.h.is_empty() {
                    return Err(invalid("noise.h is only allowed with mode = \"trapezoid\""));
                }
                if self.noise.delta.is_empty() {
                    return Err(invalid("noise.delta must list at least one level"));
                }
                for &d in &self.noise.delta {
                    if !(0.0..1.0).contains(&d) {
                        return Err(invalid(format!("noise.delta values must lie in [0, 1), got {d}")));
                    }
                }
                (
                    self.noise.delta.iter().map(|&d| Some(d)).collect(),
                    vec![None; self.noise.delta.len()],
                )
            }
            NoiseKind::Trapezoid => {
                if self.noise.h.is_empty() {
                    return Err(invalid("trapezoid mode needs noise.h"));
                }
                for &h in &self.noise.h {
                    trapezoid_steps(h)?;
                }
                let labels = if self.noise.delta.is_empty() {
                    vec![None; self.noise.h.len()]
                } else if self.noise.delta.len() == self.noise.h.len() {
                    self.noise.delta.iter().map(|&d| Some(d)).collect()
                } else {
                    return Err(invalid(format!(
                        "noise.delta labels ({}) must match noise.h ({}) in trapezoid mode",
                        self.noise.delta.len(),
                        self.noise.h.len()
                    )));
                };
                (labels, self.noise.h.iter().map(|&h| Some(h)).collect())
            }
        };

        let ns: Vec<usize> = match (&self.method.n, self.method.choose_n) {
            (Some(_), true) => return Err(invalid("method.n and method.choose_n are mutually exclusive")),
            (Some(ns), false) => {
                if ns.len() != deltas.len() {
                    return Err(invalid(format!(
                        "method.n has {} entries for {} rows",
                        ns.len(),
                        deltas.len()
                    )));
                }
                ns.clone()
            }
            (None, true) => deltas
                .iter()
                .map(|d| match d {
                    Some(d) if *d > 0.0 => {
                        legtrunc::choose_n(&sp.with_delta(*d)?.oriented(axis), r, self.method.c)
                            .map_err(CliError::from)
                    }
                    _ => Err(invalid("method.choose_n needs a positive noise.delta for every row")),
                })
                .collect::<Result<_>>()?,
            (None, false) => return Err(invalid("method.n is required unless method.choose_n = true")),
        };

        let mut rows = Vec::with_capacity(ns.len());
        for ((delta, h), n) in deltas.into_iter().zip(hs).zip(ns) {
            if n < r {
                return Err(invalid(format!("truncation level n = {n} is below r = {r}")));
            }
            let gamma = match self.method.gamma {
                Some(g) => g,
                None => {
                    let d = delta.filter(|d| *d > 0.0).unwrap_or(0.5);
                    legtrunc::choose_gamma(&sp.with_delta(d)?.oriented(axis), r, metric)?
                }
            };
            rows.push(RowPlan { delta, h, n, gamma });
        }

        Ok(Plan {
            function,
            sp,
            r,
            axis,
            noise,
            noise_norm,
            seeds: self.noise.seeds,
            base_seed: self.noise.base_seed,
            grid_points: self.evaluation.grid_points,
            metric,
            rows,
        })
    }
}

fn merge(base: &mut toml::Table, update: toml::Table) {
    for (key, value) in update {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for cfg in [
            ExperimentConfig::example1_random(),
            ExperimentConfig::example1_trapezoid(),
            ExperimentConfig::example2(),
            ExperimentConfig::rate_study(),
        ] {
            let plan = cfg.validate().unwrap();
            assert!(!plan.rows.is_empty());
        }
        let plan = ExperimentConfig::example2().validate().unwrap();
        assert_eq!(plan.rows[2].n, 43);
        assert_eq!(plan.rows[2].h, Some(8e-6));
        assert_eq!(plan.rows[2].delta, Some(1e-9));
    }

    #[test]
    fn overlay_replaces_only_given_keys() {
        let cfg = ExperimentConfig::overlay(
            &ExperimentConfig::example1_random(),
            "[noise]\nseeds = 9\n[class]\nmu1 = 6.0\n",
        )
        .unwrap();
        assert_eq!(cfg.noise.seeds, 9);
        assert_eq!(cfg.class.mu1, 6.0);
        assert_eq!(cfg.class.mu2, 5.6);
        assert_eq!(cfg.noise.norm, Some(f64::INFINITY));
        assert_eq!(cfg.method.n, Some(vec![16, 25, 28]));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::example1_random();
        let back = ExperimentConfig::overlay(&ExperimentConfig::default(), &cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_errors() {
        let bad = |text: &str| {
            ExperimentConfig::overlay(&ExperimentConfig::example1_random(), text)
                .and_then(|c| c.validate())
                .unwrap_err()
        };
        bad("[class]\ns = 0.5\n");
        bad("[function]\nid = \"nope\"\n");
        bad("[noise]\nunknown_key = 1\n");
        bad("[method]\nn = [16]\n");
        bad("[method]\ngamma = 0.5\n");
        bad("[noise]\ndelta = [1.5, 1e-8, 1e-9]\n");
        bad("[evaluation]\ngrid_points = 9\n");
        let trap = |text: &str| {
            ExperimentConfig::overlay(&ExperimentConfig::example2(), text).and_then(|c| c.validate())
        };
        assert!(trap("[noise]\nh = [3e-5, 2e-5, 8e-6]\n").is_err());
        assert!(trap("[noise]\ndelta = [1e-7]\n").is_err());
        assert!(trap("[noise]\nh = [1e-2, 2e-2, 4e-2]\n").is_ok());
    }

    #[test]
    fn choose_n_rows() {
        let plan = ExperimentConfig::rate_study().validate().unwrap();
        let ns: Vec<usize> = plan.rows.iter().map(|r| r.n).collect();
        assert!(ns.windows(2).all(|w| w[0] <= w[1]));
        assert!((plan.rows[0].gamma - 2.25).abs() < 1e-12);
    }
}
