use std::fs;
use std::path::Path;
use std::process::Command;

use legtrunc::analysis::{corpus, uniform_points, Surface};
use legtrunc::legendre::synthesize;
use legtrunc::{build_cross, Axis, CoeffGrid};
use legtrunc_cli::run::{RESULTS_FILE, TRIALS_FILE};
use legtrunc_cli::{
    card_verdict, cross_card, emit_surface, run_experiment, run_rate_study, CliError,
    ExperimentConfig, ResultsTable,
};

fn in_dir(mut cfg: ExperimentConfig, root: &Path) -> ExperimentConfig {
    cfg.output.dir = Some(root.to_string_lossy().into_owned());
    cfg
}

fn within_factor(value: f64, target: f64, factor: f64) -> bool {
    value >= target / factor && value <= target * factor
}

#[test]
fn example1_trapezoid_last_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_experiment(&in_dir(ExperimentConfig::example1_trapezoid(), tmp.path()), "t").unwrap();
    let last = out.table.rows[2];
    assert_eq!(last.h, Some(4e-5));
    assert_eq!(last.n, 28);
    assert!(within_factor(last.error_c, 3.14e-6, 10.0), "{}", last.error_c);
}

#[test]
fn noise_free_beats_noisy_median() {
    let tmp = tempfile::tempdir().unwrap();
    let noisy = run_experiment(&in_dir(ExperimentConfig::example1_random(), tmp.path()), "noisy").unwrap();
    let mut cfg = in_dir(ExperimentConfig::example1_random(), tmp.path());
    cfg.noise.delta = vec![0.0, 0.0, 0.0];
    let clean = run_experiment(&cfg, "clean").unwrap();
    assert!(clean.trials.is_empty());
    assert!(clean.table.rows[2].error_l2 < noisy.table.rows[2].error_l2);
    assert_eq!(clean.table.rows[2].coef_err_linf, 0.0);
}

#[test]
fn example2_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_experiment(&in_dir(ExperimentConfig::example2(), tmp.path()), "e2").unwrap();
    let rows = &out.table.rows;
    assert_eq!(rows[2].n, 43);
    assert!(within_factor(rows[2].error_l2, 8.6e-8, 10.0), "{}", rows[2].error_l2);
    assert!(within_factor(rows[0].error_c, 3.18e-5, 10.0), "{}", rows[0].error_c);
}

#[test]
fn uneven_step_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = in_dir(ExperimentConfig::example2(), tmp.path());
    cfg.noise.h = vec![3e-5, 2e-5, 8e-6];
    assert!(run_experiment(&cfg, "bad").is_err());
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn rows_report_cross_cardinality() {
    let tmp = tempfile::tempdir().unwrap();
    for cfg in [ExperimentConfig::example1_random(), ExperimentConfig::example2()] {
        let out = run_experiment(&in_dir(cfg, tmp.path()), "card").unwrap();
        for row in &out.table.rows {
            assert_eq!(row.card, build_cross(row.n, row.gamma, 2, Axis::T).unwrap().len());
        }
    }
}

#[test]
fn results_csv_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_experiment(&in_dir(ExperimentConfig::example1_random(), tmp.path()), "rt").unwrap();
    let back = ResultsTable::read_csv(fs::File::open(out.dir.join(RESULTS_FILE)).unwrap()).unwrap();
    assert_eq!(back, out.table);
}

fn strip_wall_time(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn runs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::example1_random();
    let ra = run_experiment(&in_dir(cfg.clone(), a.path()), "same").unwrap();
    let rb = run_experiment(&in_dir(cfg, b.path()), "same").unwrap();
    let mut names: Vec<_> = fs::read_dir(&ra.dir)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 9);
    for name in names {
        let (pa, pb) = (ra.dir.join(&name), rb.dir.join(&name));
        if name == RESULTS_FILE {
            assert_eq!(strip_wall_time(&pa), strip_wall_time(&pb));
        } else {
            assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap(), "{name:?}");
        }
    }
    assert!(ra.dir.join(TRIALS_FILE).is_file());
}

#[test]
fn rate_studies_match_theory() {
    let tmp = tempfile::tempdir().unwrap();
    for (metric, target) in [("L2", 0.2857), ("C", 0.1071)] {
        let mut cfg = in_dir(ExperimentConfig::rate_study(), tmp.path());
        cfg.evaluation.metric = metric.into();
        let (dir, res) = run_rate_study(&cfg).unwrap();
        assert!((res.theoretical_slope - target).abs() < 1e-4);
        assert!((res.fitted_slope - target).abs() <= 0.1, "{metric}: {}", res.fitted_slope);
        let text = fs::read_to_string(dir.join("rate_study.csv")).unwrap();
        assert!(text.lines().last().unwrap().starts_with(&format!("summary,metric={metric},")));
    }
}

#[test]
fn rate_study_rejects_bad_class() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::overlay(&in_dir(ExperimentConfig::rate_study(), tmp.path()), "[class]\ns = 0.5\n").unwrap();
    assert!(run_rate_study(&cfg).is_err());
}

#[test]
fn cross_card_verdicts() {
    let rep = cross_card(&[1.0, 2.0], 2, &[64, 128, 256, 512]).unwrap();
    assert_eq!(rep.verdicts[0].1, "card ≍ n ln n: PASS");
    assert_eq!(rep.verdicts[1].1, "card ≍ n: PASS");
    let single = cross_card(&[2.0], 2, &[64]).unwrap();
    assert_eq!(single.verdicts[0].1, "insufficient data");
    assert_eq!(card_verdict(2.0, &[(10, 10), (20, 100)]), "card ≍ n: FAIL");
}

#[test]
fn surface_emission() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_experiment(&in_dir(ExperimentConfig::example1_trapezoid(), tmp.path()), "surf").unwrap();
    let path = emit_surface(tmp.path(), "surf", None, 3).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,tau,exact,approx");
    assert_eq!(lines.len(), 10);

    let exact = corpus::example1().derivative(2, Axis::T).unwrap();
    let (grid, _) = CoeffGrid::load(&out.dir, "approx_row2").unwrap();
    let pts = uniform_points(3);
    let approx = synthesize(&grid, &pts, &pts);
    for (i, line) in lines[1..].iter().enumerate() {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (a, m) = (i / 3, i % 3);
        assert_eq!(v[0], pts[a]);
        assert_eq!(v[1], pts[m]);
        assert_eq!(v[2], exact.value(pts[a], pts[m]));
        assert_eq!(v[3], approx[[a, m]]);
    }
    assert!(matches!(emit_surface(tmp.path(), "missing", None, 3), Err(CliError::MissingRun(_))));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_legtrunc"))
}

#[test]
fn binary_reports_one_line_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["example2", "--h", "3e-5,2e-5,8e-6"])
        .env("LEGTRUNC_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("legtrunc: error:"));

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[class]\ns = 0.5\n").unwrap();
    let out = bin()
        .args(["rate-study", "--config"])
        .arg(&cfg)
        .env("LEGTRUNC_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn binary_runs_and_honours_output_env() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["example1", "--noise", "trapezoid", "--run-id", "env_run"])
        .env("LEGTRUNC_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("env_run").join(RESULTS_FILE).is_file());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("delta,h,n,gamma,error_l2,error_c,card,coef_err_linf,wall_time"));

    let out = bin()
        .args(["emit-surface", "--run", "env_run", "--grid-points", "3"])
        .env("LEGTRUNC_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = bin()
        .args(["cross-card", "--gamma", "1,2", "--n", "64,128,256,512"])
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("gamma=1: card ≍ n ln n: PASS"));
    assert!(stdout.contains("gamma=2: card ≍ n: PASS"));
}
