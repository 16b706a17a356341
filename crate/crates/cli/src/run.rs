use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use legtrunc::analysis::{corpus, median, uniform_points, Surface};
use legtrunc::coeffs::{fmt_f64, perturbation, read_metadata, write_metadata};
use legtrunc::legendre::{synthesize, QuadRule};
use legtrunc::truncation::band_ratio;
use legtrunc::{
    add_noise, build_cross, cardinality_growth, exact_coeffs, iterate_derivative,
    mueller_first_derivative, rate_study_with, trapezoid_coeffs, truncate, ApproxDerivative,
    CoeffGrid, CrossSet, MethodParams, NoiseSpec, RateStudyConfig, RateStudyResult, Support,
};

use crate::config::{ExperimentConfig, NoiseKind, Plan, RowPlan};
use crate::error::{CliError, Result};
use crate::table::{write_trials, ResultsRow, ResultsTable, TrialRow};

pub const CONFIG_FILE: &str = "config.toml";
pub const RESULTS_FILE: &str = "results.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const RUN_META: &str = "run.meta";
pub const RATE_FILE: &str = "rate_study.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub table: ResultsTable,
    pub trials: Vec<TrialRow>,
}

fn run_dir(cfg: &ExperimentConfig, default_id: &str) -> Result<PathBuf> {
    let id = cfg.output.run_id.as_deref().unwrap_or(default_id);
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(CliError::Config(format!("invalid run id '{id}'")));
    }
    let dir = cfg.output_root().join(id);
    fs::create_dir_all(&dir)?;
    // the copy describes the experiment, not where it was written
    let mut copy = cfg.clone();
    copy.output = Default::default();
    fs::write(dir.join(CONFIG_FILE), copy.to_toml()?)?;
    Ok(dir)
}

/// The L2 rule splits at every breakpoint of either axis so that piecewise
/// polynomial targets are integrated exactly.
fn error_rule(plan: &Plan, n: usize) -> Result<QuadRule> {
    let f = &plan.function;
    let mut breaks = f.breakpoints(legtrunc::Axis::T);
    for b in f.breakpoints(legtrunc::Axis::Tau) {
        if !breaks.contains(&b) {
            breaks.push(b);
        }
    }
    let m = (n + 32).max(f.degree_hint().map_or(0, |d| d + 1));
    Ok(QuadRule::composite(m, &breaks)?)
}

struct Evaluator {
    rule: QuadRule,
    exact_l2: ndarray::Array2<f64>,
    points: Vec<f64>,
    exact_c: ndarray::Array2<f64>,
}

impl Evaluator {
    fn new(plan: &Plan, n: usize, exact_c: &ndarray::Array2<f64>) -> Result<Self> {
        let rule = error_rule(plan, n)?;
        let exact = plan.function.derivative(plan.r, plan.axis)?;
        let exact_l2 = exact.grid(&rule.nodes, &rule.nodes);
        Ok(Self {
            rule,
            exact_l2,
            points: uniform_points(plan.grid_points),
            exact_c: exact_c.clone(),
        })
    }

    fn errors(&self, approx: &ApproxDerivative) -> (f64, f64) {
        let diff = approx.grid(&self.rule.nodes, &self.rule.nodes) - &self.exact_l2;
        let mut acc = 0.0;
        for (row, wa) in diff.outer_iter().zip(&self.rule.weights) {
            acc += wa * row.iter().zip(&self.rule.weights).map(|(d, wb)| wb * d * d).sum::<f64>();
        }
        let c = approx
            .grid(&self.points, &self.points)
            .iter()
            .zip(self.exact_c.iter())
            .map(|(a, e)| (a - e).abs())
            .fold(0.0, f64::max);
        (acc.sqrt(), c)
    }
}

fn max_on_cross(grid: &CoeffGrid, cross: &CrossSet) -> f64 {
    cross
        .indices()
        .iter()
        .map(|&(k, j)| grid.get(k, j).abs())
        .fold(0.0, f64::max)
}

struct RowOutcome {
    row: ResultsRow,
    trials: Vec<TrialRow>,
    saved: ApproxDerivative,
    seed: Option<u64>,
}

fn run_row(plan: &Plan, rp: &RowPlan, exact_c: &ndarray::Array2<f64>) -> Result<RowOutcome> {
    let start = Instant::now();
    let f = &plan.function;
    let n = rp.n;
    let params = MethodParams {
        n,
        gamma: rp.gamma,
        r: plan.r,
        axis: plan.axis,
    };
    let cross = build_cross(n, rp.gamma, plan.r, plan.axis)?;
    let op = iterate_derivative(&mueller_first_derivative(n), plan.r)?;
    let eval = Evaluator::new(plan, n, exact_c)?;
    let exact = exact_coeffs(f, n, n, f.quadrature_nodes(n))?;

    let mut trials = Vec::new();
    let (error_l2, error_c, coef_err, saved, seed) = match plan.noise {
        NoiseKind::Trapezoid => {
            let h = rp.h.expect("trapezoid rows carry h");
            let perturbed = trapezoid_coeffs(f, n, n, h)?;
            let approx = truncate(&perturbed, &params, &op)?;
            let (l2, c) = eval.errors(&approx);
            let coef = max_on_cross(&perturbed.difference(&exact), &cross);
            (l2, c, coef, approx, None)
        }
        NoiseKind::Random(mode) => {
            let delta = rp.delta.expect("random rows carry delta");
            if delta == 0.0 {
                let approx = truncate(&exact, &params, &op)?;
                let (l2, c) = eval.errors(&approx);
                (l2, c, 0.0, approx, None)
            } else {
                let mut first = None;
                let mut coef = Vec::new();
                for i in 0..plan.seeds as u64 {
                    let seed = plan.base_seed + i;
                    let spec = NoiseSpec::new(delta, plan.noise_norm, mode, seed)?;
                    let noisy = add_noise(&exact, &spec, Support::Cross(&cross))?;
                    let approx = truncate(&noisy, &params, &op)?;
                    let (l2, c) = eval.errors(&approx);
                    let xi = perturbation(n, n, &spec, Support::Cross(&cross))?;
                    coef.push(max_on_cross(&xi, &cross));
                    trials.push(TrialRow {
                        delta,
                        seed,
                        n,
                        gamma: rp.gamma,
                        error_l2: l2,
                        error_c: c,
                    });
                    if first.is_none() {
                        first = Some(approx);
                    }
                }
                let l2s: Vec<f64> = trials.iter().map(|t| t.error_l2).collect();
                let cs: Vec<f64> = trials.iter().map(|t| t.error_c).collect();
                (
                    median(&l2s),
                    median(&cs),
                    median(&coef),
                    first.expect("at least one seed"),
                    Some(plan.base_seed),
                )
            }
        }
    };
    Ok(RowOutcome {
        row: ResultsRow {
            delta: rp.delta,
            h: rp.h,
            n,
            gamma: rp.gamma,
            error_l2,
            error_c,
            card: cross.len(),
            coef_err_linf: coef_err,
            wall_time: start.elapsed().as_secs_f64(),
        },
        trials,
        saved,
        seed,
    })
}

/// Runs a table experiment and writes `config.toml`, `results.csv`,
/// `trials.csv` (random noise), `run.meta` and one `approx_row<i>` grid per row
/// into `<output root>/<run id>/`.
pub fn run_experiment(cfg: &ExperimentConfig, default_run_id: &str) -> Result<RunOutput> {
    let plan = cfg.validate()?;
    let dir = run_dir(cfg, default_run_id)?;
    let points = uniform_points(plan.grid_points);
    let exact_c = plan
        .function
        .derivative(plan.r, plan.axis)?
        .grid(&points, &points);

    let mut table = ResultsTable::default();
    let mut trials = Vec::new();
    for (i, rp) in plan.rows.iter().enumerate() {
        let out = run_row(&plan, rp, &exact_c)?;
        let mut extra = vec![
            ("function".to_string(), plan.function.id().to_string()),
            ("r".to_string(), plan.r.to_string()),
            ("axis".to_string(), plan.axis.to_string()),
            ("n".to_string(), rp.n.to_string()),
            ("gamma".to_string(), fmt_f64(rp.gamma)),
        ];
        if let Some(seed) = out.seed {
            extra.push(("seed".to_string(), seed.to_string()));
        }
        out.saved.coeffs().save(&dir, &format!("approx_row{i}"), &extra)?;
        table.rows.push(out.row);
        trials.extend(out.trials);
    }

    table.write_csv(BufWriter::new(File::create(dir.join(RESULTS_FILE))?))?;
    if matches!(plan.noise, NoiseKind::Random(_)) {
        write_trials(&trials, BufWriter::new(File::create(dir.join(TRIALS_FILE))?))?;
    }
    let mode = match plan.noise {
        NoiseKind::Trapezoid => "trapezoid",
        NoiseKind::Random(m) => m.as_str(),
    };
    write_metadata(
        &dir.join(RUN_META),
        &[
            ("command".to_string(), "table".to_string()),
            ("function".to_string(), plan.function.id().to_string()),
            ("r".to_string(), plan.r.to_string()),
            ("axis".to_string(), plan.axis.to_string()),
            ("noise".to_string(), mode.to_string()),
            ("rows".to_string(), plan.rows.len().to_string()),
        ],
    )?;
    Ok(RunOutput { dir, table, trials })
}

/// Wraps the library rate study; `n` follows the a-priori rule for every delta.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<(PathBuf, RateStudyResult)> {
    if cfg.method.n.is_some() {
        return Err(CliError::Config(
            "rate studies choose n from delta; remove method.n".into(),
        ));
    }
    let mut checked = cfg.clone();
    checked.method.choose_n = true;
    let plan = checked.validate()?;
    let NoiseKind::Random(mode) = plan.noise else {
        return Err(CliError::Config("rate studies need random noise".into()));
    };
    if plan.noise_norm != plan.sp.p {
        return Err(CliError::Config(
            "rate studies measure noise in class.p; noise.norm must match".into(),
        ));
    }
    let deltas: Vec<f64> = plan.rows.iter().map(|r| r.delta.unwrap_or(0.0)).collect();
    let study_cfg = RateStudyConfig {
        c: cfg.method.c,
        axis: plan.axis,
        base_seed: plan.base_seed,
        grid_points: plan.grid_points,
        gamma: cfg.method.gamma,
        noise_mode: mode,
    };
    let result = rate_study_with(
        &plan.function,
        &plan.sp,
        plan.r,
        plan.metric,
        &deltas,
        plan.seeds,
        &study_cfg,
    )?;
    let dir = run_dir(cfg, &format!("rate_study_{}", plan.metric))?;
    result.write_csv(BufWriter::new(File::create(dir.join(RATE_FILE))?))?;
    write_metadata(
        &dir.join(RUN_META),
        &[
            ("command".to_string(), "rate-study".to_string()),
            ("function".to_string(), plan.function.id().to_string()),
            ("metric".to_string(), plan.metric.to_string()),
        ],
    )?;
    Ok((dir, result))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCardReport {
    pub r: usize,
    /// `(gamma, n, card)`
    pub rows: Vec<(f64, usize, usize)>,
    /// `(gamma, verdict)`
    pub verdicts: Vec<(f64, String)>,
}

/// Verdict on whether `card` grows like `n` (`gamma > 1`) or `n ln n` (`gamma = 1`).
pub fn card_verdict(gamma: f64, growth: &[(usize, usize)]) -> String {
    if growth.len() < 2 {
        return "insufficient data".to_string();
    }
    let (label, ratios): (&str, Vec<f64>) = if gamma > 1.0 {
        ("card ≍ n", growth.iter().map(|&(n, c)| c as f64 / n as f64).collect())
    } else {
        (
            "card ≍ n ln n",
            growth
                .iter()
                .map(|&(n, c)| c as f64 / (n as f64 * (n as f64).ln()))
                .collect(),
        )
    };
    let status = if band_ratio(&ratios) < 2.0 { "PASS" } else { "FAIL" };
    format!("{label}: {status}")
}

pub fn cross_card(gammas: &[f64], r: usize, ns: &[usize]) -> Result<CrossCardReport> {
    if gammas.is_empty() || ns.is_empty() {
        return Err(CliError::Config("cross-card needs at least one gamma and one n".into()));
    }
    if ns.iter().any(|&n| n < 2) {
        return Err(CliError::Config("cross-card needs n >= 2".into()));
    }
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &gamma in gammas {
        let growth = cardinality_growth(gamma, r, ns)?;
        rows.extend(growth.iter().map(|&(n, c)| (gamma, n, c)));
        verdicts.push((gamma, card_verdict(gamma, &growth)));
    }
    Ok(CrossCardReport { r, rows, verdicts })
}

impl CrossCardReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["gamma", "n", "card", "card_over_n", "card_over_n_ln_n"])?;
        for &(gamma, n, card) in &self.rows {
            let nf = n as f64;
            out.write_record([
                fmt_f64(gamma),
                n.to_string(),
                card.to_string(),
                fmt_f64(card as f64 / nf),
                fmt_f64(card as f64 / (nf * nf.ln())),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Writes `surface_row<row>.csv` with columns `t,tau,exact,approx` on a
/// `grid_points x grid_points` uniform grid, `t` varying slowest.
/// `row` defaults to the last table row.
pub fn emit_surface(root: &Path, run_id: &str, row: Option<usize>, grid_points: usize) -> Result<PathBuf> {
    let dir = root.join(run_id);
    let meta_path = dir.join(RUN_META);
    if !meta_path.is_file() {
        return Err(CliError::MissingRun(run_id.to_string()));
    }
    let meta = read_metadata(&meta_path)?;
    let rows: usize = meta
        .get("rows")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Config(format!("run '{run_id}' has no table rows")))?;
    let row = row.unwrap_or(rows.saturating_sub(1));
    if row >= rows {
        return Err(CliError::Config(format!("run '{run_id}' has {rows} rows, asked for row {row}")));
    }
    if grid_points < 2 {
        return Err(CliError::Config("grid_points must be >= 2".into()));
    }
    let (grid, gmeta) = CoeffGrid::load(&dir, &format!("approx_row{row}"))?;
    let key = |k: &str| {
        gmeta
            .get(k)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("approx_row{row}.meta lacks '{k}'")))
    };
    let f = corpus::by_id(&key("function")?)?;
    let r: usize = key("r")?
        .parse()
        .map_err(|_| CliError::Config("bad derivative order in metadata".into()))?;
    let axis: legtrunc::Axis = key("axis")?.parse()?;
    let exact = f.derivative(r, axis)?;
    let pts = uniform_points(grid_points);
    let approx_vals = synthesize(&grid, &pts, &pts);
    let exact_vals = exact.grid(&pts, &pts);

    let path = dir.join(format!("surface_row{row}.csv"));
    let mut out = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    out.write_record(["t", "tau", "exact", "approx"])?;
    for (i, &t) in pts.iter().enumerate() {
        for (m, &tau) in pts.iter().enumerate() {
            out.write_record([
                fmt_f64(t),
                fmt_f64(tau),
                fmt_f64(exact_vals[[i, m]]),
                fmt_f64(approx_vals[[i, m]]),
            ])?;
        }
    }
    out.flush()?;
    Ok(path)
}
