use legtrunc::coeffs::{perturbation, Provenance};
use legtrunc::legendre::{eval_phi, gauss_rule, synthesize};
use legtrunc::truncation::{in_cross, restrict};
use legtrunc::{
    add_noise, build_cross, iterate_derivative, lp_norm, mueller_first_derivative, truncate, Axis,
    CoeffGrid, MethodParams, NoiseMode, NoiseSpec, Support,
};
use ndarray::Array2;
use proptest::prelude::*;

/// Legendre-P coefficients of `sum a_m t^m`, built exactly from
/// `t P_k = ((k + 1) P_{k+1} + k P_{k-1}) / (2k + 1)`.
fn monomials_to_legendre_p(a: &[f64]) -> Vec<f64> {
    let deg = a.len().saturating_sub(1);
    let mut out = vec![0.0; deg + 1];
    let mut power = vec![0.0; deg + 1];
    power[0] = 1.0;
    for (m, &am) in a.iter().enumerate() {
        if m > 0 {
            let mut next = vec![0.0; deg + 1];
            for k in 0..m {
                let kf = k as f64;
                next[k + 1] += power[k] * (kf + 1.0) / (2.0 * kf + 1.0);
                if k > 0 {
                    next[k - 1] += power[k] * kf / (2.0 * kf + 1.0);
                }
            }
            power = next;
        }
        for k in 0..=m {
            out[k] += am * power[k];
        }
    }
    out
}

fn poly_eval_derivative(a: &[f64], r: usize, t: f64) -> f64 {
    let mut acc = 0.0;
    for (m, &am) in a.iter().enumerate().skip(r) {
        let falling: f64 = (0..r).map(|i| (m - i) as f64).product();
        acc += am * falling * t.powi((m - r) as i32);
    }
    acc
}

fn grid_strategy(max_dim: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(rows, cols)| {
        prop::collection::vec(-1.0f64..1.0, rows * cols)
            .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
    })
}

#[test]
fn orthonormality_up_to_degree_40() {
    let rule = gauss_rule(64).unwrap();
    for k in 0..=40 {
        for l in 0..=k {
            let ip = rule.integrate(|t| eval_phi(k, t) * eval_phi(l, t));
            let expected = if k == l { 1.0 } else { 0.0 };
            assert!((ip - expected).abs() < 1e-10, "<phi_{k}, phi_{l}> = {ip}");
        }
    }
}

#[test]
fn endpoint_identity() {
    let max_degree = 40;
    let op1 = mueller_first_derivative(max_degree);
    for r in 1..=3 {
        let op = iterate_derivative(&op1, r).unwrap();
        for k in 0..=max_degree {
            let mut c = vec![0.0; max_degree + 1];
            c[k] = 1.0;
            let d = op.apply(&c);
            let got: f64 = d.iter().enumerate().map(|(l, v)| v * eval_phi(l, 1.0)).sum();
            let mut expected = (k as f64 + 0.5).sqrt();
            for i in 0..r {
                expected *= (k as f64 - i as f64) * (k + i + 1) as f64 / (2.0 * (i + 1) as f64);
            }
            let tol = 1e-8 * expected.abs().max(1.0);
            assert!((got - expected).abs() <= tol, "k={k} r={r}: {got} vs {expected}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn polynomial_derivative_matches_analytic(
        a in prop::collection::vec(-1.0f64..1.0, 1..=31),
        r in 1usize..=3,
    ) {
        let deg = a.len() - 1;
        let p = monomials_to_legendre_p(&a);
        let c: Vec<f64> = p.iter().enumerate().map(|(k, v)| v / (k as f64 + 0.5).sqrt()).collect();
        let op = iterate_derivative(&mueller_first_derivative(deg.max(1)), r).unwrap();
        let mut padded = c.clone();
        padded.resize(op.max_degree() + 1, 0.0);
        let d = op.apply(&padded);
        for i in 0..33 {
            let t = -1.0 + 2.0 * i as f64 / 32.0;
            let got: f64 = d.iter().enumerate().map(|(l, v)| v * eval_phi(l, t)).sum();
            let want = poly_eval_derivative(&a, r, t);
            prop_assert!((got - want).abs() < 1e-8, "deg {} r {} t {}: {} vs {}", deg, r, t, got, want);
        }
    }

    #[test]
    fn parseval(data in grid_strategy(41)) {
        let grid = CoeffGrid::from_array(data.clone(), Provenance::Exact);
        let rule = gauss_rule(48).unwrap();
        let values = synthesize(&grid, &rule.nodes, &rule.nodes);
        let mut l2 = 0.0;
        for (a, wa) in rule.weights.iter().enumerate() {
            for (b, wb) in rule.weights.iter().enumerate() {
                l2 += wa * wb * values[[a, b]].powi(2);
            }
        }
        let l2_seq: f64 = data.iter().map(|v| v * v).sum();
        prop_assert!((l2 - l2_seq).abs() <= 1e-9 * l2_seq.max(1e-300));
    }

    #[test]
    fn cross_matches_brute_force(n in 0usize..=64, gi in 0usize..4, r in 1usize..=3, tau in any::<bool>()) {
        let gamma = [1.0, 1.5, 2.0, 3.0][gi];
        let axis = if tau { Axis::Tau } else { Axis::T };
        let cross = build_cross(n, gamma, r, axis).unwrap();
        let mut brute = Vec::new();
        for k in 0..=n {
            for j in 0..=n {
                let ok = match axis {
                    Axis::T => k >= r && (j == 0 || (k as f64) * (j as f64).powf(gamma) <= n as f64),
                    Axis::Tau => j >= r && (k == 0 || (k as f64).powf(gamma) * (j as f64) <= n as f64),
                };
                if ok {
                    brute.push((k, j));
                }
                prop_assert_eq!(ok, in_cross(k, j, n, gamma, r, axis));
            }
        }
        prop_assert_eq!(cross.indices(), &brute[..]);
    }

    #[test]
    fn truncation_is_idempotent(data in grid_strategy(30), n in 2usize..20, gi in 0usize..3, r in 1usize..=2) {
        let gamma = [1.0, 1.5, 2.0][gi];
        let mut big = Array2::zeros((30, 30));
        big.slice_mut(ndarray::s![..data.nrows(), ..data.ncols()]).assign(&data);
        let grid = CoeffGrid::from_array(big, Provenance::Exact);
        let cross = build_cross(n, gamma, r, Axis::T).unwrap();
        let once = restrict(&grid, &cross).unwrap();
        let twice = restrict(&once, &cross).unwrap();
        prop_assert_eq!(once.data(), twice.data());
        let op = iterate_derivative(&mueller_first_derivative(29), r).unwrap();
        let params = MethodParams { n, gamma, r, axis: Axis::T };
        let from_full = truncate(&grid, &params, &op).unwrap();
        let mut padded = Array2::zeros((30, 30));
        padded.slice_mut(ndarray::s![..once.data().nrows(), ..once.data().ncols()]).assign(once.data());
        let from_restricted = truncate(&CoeffGrid::from_array(padded, Provenance::Exact), &params, &op).unwrap();
        prop_assert_eq!(from_full.coeffs().data(), from_restricted.coeffs().data());
    }

    #[test]
    fn truncation_is_linear(
        a in prop::collection::vec(-1.0f64..1.0, 24 * 24),
        b in prop::collection::vec(-1.0f64..1.0, 24 * 24),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        n in 4usize..20,
        r in 1usize..=3,
    ) {
        let a = Array2::from_shape_vec((24, 24), a).unwrap();
        let b = Array2::from_shape_vec((24, 24), b).unwrap();
        let op = iterate_derivative(&mueller_first_derivative(23), r).unwrap();
        let params = MethodParams { n, gamma: 1.5, r, axis: Axis::T };
        let combo = CoeffGrid::from_array(&a * alpha + &b * beta, Provenance::Exact);
        let ta = truncate(&CoeffGrid::from_array(a.clone(), Provenance::Exact), &params, &op).unwrap();
        let tb = truncate(&CoeffGrid::from_array(b, Provenance::Exact), &params, &op).unwrap();
        let tc = truncate(&combo, &params, &op).unwrap();
        let pts: Vec<f64> = (0..17).map(|i| -1.0 + i as f64 / 8.0).collect();
        let va = ta.evaluate(&pts, &pts);
        let vb = tb.evaluate(&pts, &pts);
        let vc = tc.evaluate(&pts, &pts);
        let scale = va.iter().chain(vb.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        for ((x, y), z) in va.iter().zip(vb.iter()).zip(vc.iter()) {
            prop_assert!((alpha * x + beta * y - z).abs() <= 1e-12 * scale * 6.0);
        }
    }

    #[test]
    fn axis_symmetry_for_separable_grids(
        g in prop::collection::vec(-1.0f64..1.0, 20),
        h in prop::collection::vec(-1.0f64..1.0, 20),
        n in 2usize..19,
        gi in 0usize..3,
        r in 1usize..=3,
    ) {
        let gamma = [1.0, 1.7, 2.5][gi];
        let data = Array2::from_shape_fn((20, 20), |(k, j)| g[k] * h[j]);
        let grid = CoeffGrid::from_array(data, Provenance::Exact);
        let op = iterate_derivative(&mueller_first_derivative(19), r).unwrap();
        let along_tau = truncate(&grid, &MethodParams { n, gamma, r, axis: Axis::Tau }, &op).unwrap();
        let along_t = truncate(&grid.transposed(), &MethodParams { n, gamma, r, axis: Axis::T }, &op).unwrap();
        prop_assert_eq!(along_tau.coeffs().data(), &along_t.coeffs().data().t().to_owned());
        prop_assert_eq!(along_tau.cardinality(), along_t.cardinality());
    }

    #[test]
    fn rescaled_noise_has_exact_norm(
        pi in 0usize..4,
        log_delta in -12.0f64..-1.0,
        seed in any::<u64>(),
        rows in 1usize..40,
        cols in 1usize..40,
    ) {
        let p = [1.0, 1.5, 2.0, f64::INFINITY][pi];
        let delta = 10f64.powf(log_delta);
        let spec = NoiseSpec::new(delta, p, NoiseMode::Rescaled, seed).unwrap();
        let xi = perturbation(rows - 1, cols - 1, &spec, Support::Full).unwrap();
        prop_assert!((lp_norm(&xi, p) - delta).abs() <= 1e-12 * delta);
        let again = perturbation(rows - 1, cols - 1, &spec, Support::Full).unwrap();
        prop_assert_eq!(xi.data(), again.data());
    }

    #[test]
    fn noisy_grids_are_deterministic(seed in any::<u64>(), raw in any::<bool>()) {
        let mode = if raw { NoiseMode::RawGaussian } else { NoiseMode::Rescaled };
        let base = CoeffGrid::from_array(Array2::from_elem((12, 9), 0.25), Provenance::Exact);
        let spec = NoiseSpec::new(1e-6, 2.0, mode, seed).unwrap();
        let a = add_noise(&base, &spec, Support::Full).unwrap();
        let b = add_noise(&base, &spec, Support::Full).unwrap();
        prop_assert_eq!(a.data(), b.data());
        prop_assert_eq!(a.provenance(), b.provenance());
    }
}

/// With `f = 0` the output is the propagated noise alone; its `L2` norm
/// divided by `delta * n^{2r + 1/2 - 1/p}` must not grow with `n`.
#[test]
fn noise_error_bound_shape() {
    let delta = 1e-6;
    let ns = [8usize, 16, 32, 64];
    for (p, gamma) in [(f64::INFINITY, 1.5), (f64::INFINITY, 2.25), (2.0, 2.25)] {
        for r in 1..=2usize {
            let op = iterate_derivative(&mueller_first_derivative(64), r).unwrap();
            let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
            let ratios: Vec<f64> = ns
                .iter()
                .map(|&n| {
                    let cross = build_cross(n, gamma, r, Axis::T).unwrap();
                    let mut norms: Vec<f64> = (0..7u64)
                        .map(|seed| {
                            let spec = NoiseSpec::new(delta, p, NoiseMode::Rescaled, seed).unwrap();
                            let xi = perturbation(64, 64, &spec, Support::Cross(&cross)).unwrap();
                            let out = truncate(&xi, &MethodParams { n, gamma, r, axis: Axis::T }, &op).unwrap();
                            // orthonormal basis: the L2 norm is the coefficient l2 norm
                            out.coeffs().data().iter().map(|v| v * v).sum::<f64>().sqrt()
                        })
                        .collect();
                    norms.sort_by(f64::total_cmp);
                    norms[3] / (delta * (n as f64).powf(2.0 * r as f64 + 0.5 - inv_p))
                })
                .collect();
            let first = ratios[0];
            for (n, ratio) in ns.iter().zip(&ratios) {
                assert!(
                    *ratio <= 2.0 * first,
                    "p={p} gamma={gamma} r={r}: ratio at n={n} is {ratio}, at n=8 {first}"
                );
            }
        }
    }
}
