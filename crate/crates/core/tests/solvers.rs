mod common;

use common::*;
use nalgebra::DVector;
use ndarray::{arr1, arr2, Array1, Array2, Array3};
use qmr::ensembles::{Domain, EnsembleKind, MeasurementSet, Signal};
use qmr::grnm::*;
use qmr::metrics::{classify_success, relative_error};
use qmr::objective::QuadraticResidualModel;
use qmr::seed;
use qmr::wf::{spectral_init, wf_solve, WfConfig};

fn scalar_set(a: f64, b: f64) -> MeasurementSet {
    let spec = spec(EnsembleKind::RealGaussianSymmetric, 1, 1, 0.0, 0);
    MeasurementSet::from_parts(
        spec,
        Signal::new(arr1(&[1.0]), Domain::Real).unwrap(),
        Array3::from_elem((1, 1, 1), a),
        arr1(&[b]),
    )
    .unwrap()
}

fn rel_err(set: &MeasurementSet, x: &Array1<f64>) -> f64 {
    relative_error(&Signal::new(x.clone(), set.domain()).unwrap(), set.truth()).unwrap()
}

#[test]
fn initial_point_scaling() {
    // four measurements with b = ±2 give f(0) = ‖b‖²/(4n) = 1
    let spec = spec(EnsembleKind::RealGaussianSymmetric, 2, 4, 0.0, 0);
    let mats = Array3::from_shape_fn((4, 2, 2), |(i, r, c)| if r == c { (i + 1) as f64 } else { 0.0 });
    let set = MeasurementSet::from_parts(
        spec.clone(),
        Signal::new(arr1(&[1.0, 0.0]), Domain::Real).unwrap(),
        mats.clone(),
        arr1(&[2.0, -2.0, 2.0, -2.0]),
    )
    .unwrap();
    let model = QuadraticResidualModel::new(&set);
    let z = gaussian_vec(2, &mut rng(5));
    assert_eq!(default_initial_point(&model, &mut rng(5)), z);
    assert_eq!(default_initial_point(&model, &mut rng(5)), default_initial_point(&model, &mut rng(5)));

    let zero = MeasurementSet::from_parts(spec, Signal::new(arr1(&[1.0, 0.0]), Domain::Real).unwrap(), mats, Array1::zeros(4)).unwrap();
    let model = QuadraticResidualModel::new(&zero);
    let x = default_initial_point(&model, &mut rng(9));
    assert!((x.dot(&x).sqrt() - 1.0).abs() < 1e-15);
}

#[test]
fn phase_one_scalar_step_matches_brute_force() {
    let cfg = GrnmConfig::default();
    let f = |x: f64| (x * x - 1.0).powi(2) / 4.0;
    let (x0, g0) = (2.0, 6.0);
    let j_ref = (0..)
        .find(|&j| f(x0 - g0 * 0.5f64.powi(j)) <= f(x0) - 0.1 * 0.5f64.powi(j) * g0 * g0)
        .unwrap();
    let x1_ref = x0 - g0 * 0.5f64.powi(j_ref);

    let set = scalar_set(1.0, 1.0);
    let mut model = QuadraticResidualModel::new(&set);
    let mut seen = Vec::new();
    solve_from(&mut model, &cfg, arr1(&[x0]).view(), &mut |e| {
        if e.k == 0 {
            seen.push((e.j, e.x[0] + e.tau * e.direction[0]));
        }
    })
    .unwrap();
    assert_eq!(seen, vec![(j_ref as usize, x1_ref)]);
}

#[test]
fn phase_one_returns_immediately_below_eps1() {
    let set = scalar_set(1.0, 1.0);
    let mut model = QuadraticResidualModel::new(&set);
    // g(1.01) = 1.01³ − 1.01 ≈ 0.0203
    let out = phase1(&mut model, arr1(&[1.01]).view(), &GrnmConfig::default()).unwrap();
    assert!(out.records.is_empty());
    assert!(out.status.is_none());
    assert_eq!(out.x[0], 1.01);
}

#[test]
fn phase_two_scalar_converges_to_root() {
    let set = scalar_set(1.0, 1.0);
    let mut model = QuadraticResidualModel::new(&set);
    let out = phase2(&mut model, arr1(&[1.2]).view(), 0, &GrnmConfig::default()).unwrap();
    assert_eq!(out.status, Some(SolveStatus::GradToleranceMet));
    assert!(out.records.len() <= 20);
    assert!((out.x[0] - 1.0).abs() < 1e-5);
    let g = out.x[0].powi(3) - out.x[0];
    assert!(g.abs() < 1e-5);

    let out = phase2(&mut model, arr1(&[1.0]).view(), 0, &GrnmConfig::default()).unwrap();
    assert!(out.records.is_empty());
}

#[test]
fn newton_direction_examples() {
    let d = newton_direction(&arr2(&[[2.0]]), arr1(&[1.0]).view(), 1.0, 0.5).unwrap();
    assert!((d[0] + 1.0 / 3.0).abs() < 1e-15);
    let d = newton_direction(&arr2(&[[0.0]]), arr1(&[4.0]).view(), 1.0, 0.5).unwrap();
    assert!((d[0] + 2.0).abs() < 1e-15);
    assert!(newton_direction(&arr2(&[[1.0]]), arr1(&[0.0]).view(), 1.0, 0.5).is_err());
}

#[test]
fn newton_direction_matches_dense_solve() {
    let mut r = rng(31);
    for _ in 0..20 {
        let b = Array2::from_shape_fn((5, 5), |_| gaussian_vec(1, &mut r)[0]);
        let h = b.t().dot(&b);
        let g = gaussian_vec(5, &mut r);
        let (beta, delta) = (0.5, 0.25);
        let d = newton_direction(&h, g.view(), beta, delta).unwrap();

        let damp = beta * g.dot(&g).sqrt().powf(delta);
        let m = to_dmatrix(&h) + nalgebra::DMatrix::identity(5, 5) * damp;
        let want = m.lu().solve(&(-DVector::from_column_slice(g.as_slice().unwrap()))).unwrap();
        let got = DVector::from_column_slice(d.as_slice().unwrap());
        assert!((&got - &want).norm() <= 1e-10 * want.norm());
    }
}

#[test]
fn grnm_recovers_small_noiseless_instances() {
    let cfg = GrnmConfig::default();
    let mut ok = 0;
    for t in 0..20 {
        let set = instance(EnsembleKind::RealGaussianSymmetric, 20, 80, 0.0, seed::trial_seed(17, 0, t));
        let mut model = QuadraticResidualModel::new(&set);
        let res = solve(&mut model, &cfg, &mut seed::stream(set.spec().seed, seed::TAG_INIT), None).unwrap();
        if classify_success(rel_err(&set, &res.x_hat), false) {
            ok += 1;
        }
    }
    assert!(ok >= 19, "{ok}/20 recovered");
}

/// Replays every accepted step: Armijo holds, the exponent is minimal, f never
/// increases and Phase II strictly decreases whenever the iterate moves.
fn replay_run(set: &MeasurementSet, cfg: &GrnmConfig, x0: &Array1<f64>) -> SolveResult {
    let mut model = QuadraticResidualModel::new(set);
    let mut events = Vec::new();
    let res = solve_from(&mut model, cfg, x0.view(), &mut |e| {
        events.push((e.phase, e.x.to_owned(), e.grad.to_owned(), e.f, e.direction.to_owned(), e.j, e.tau, e.f_next));
    })
    .unwrap();
    for (phase, x, g, f, d, j, tau, f_next) in events {
        let (alpha, mu) = match phase {
            Phase::One => (cfg.alpha1, cfg.mu1),
            Phase::Two => (cfg.alpha2, cfg.mu2),
        };
        assert_eq!(tau, alpha.powi(j as i32));
        let slope = g.dot(&d);
        let trial = |t: f64| naive_value(set, (&x + &(&d * t)).as_slice().unwrap());
        let fx = naive_value(set, x.as_slice().unwrap());
        assert!((fx - f).abs() <= 1e-10 * (1.0 + f));
        let ft = trial(tau);
        assert!((ft - f_next).abs() <= 1e-10 * (1.0 + f_next));
        assert!(f_next <= f + mu * tau * slope);
        if j > 0 {
            let prev = alpha.powi(j as i32 - 1);
            let fp = model.value((&x + &(&d * prev)).view()).unwrap();
            assert!(fp > f + mu * prev * slope);
        }
        assert!(f_next <= f);
        let moved = (&x + &(&d * tau)) != x;
        if phase == Phase::Two && moved {
            assert!(f_next < f);
        }
    }
    for w in res.trace.windows(2) {
        assert!(w[1].f <= w[0].f);
    }
    res
}

#[test]
fn accepted_steps_replay() {
    let cfg = GrnmConfig::default();
    for (k, kind) in [EnsembleKind::RealGaussianSymmetric, EnsembleKind::ComplexGaussianHermitian, EnsembleKind::ComplexSubGaussianRotationInvariant]
        .into_iter()
        .enumerate()
    {
        for noise in [0.0, 0.1] {
            let set = instance(kind, 6, 40, noise, 40 + k as u64);
            let model = QuadraticResidualModel::new(&set);
            let x0 = default_initial_point(&model, &mut rng(k as u64));
            let res = replay_run(&set, &cfg, &x0);
            assert!(res.phase2_iters > 0);
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let set = instance(EnsembleKind::ComplexGaussianHermitian, 8, 40, 0.05, 3);
    let cfg = GrnmConfig::default();
    let run = || {
        let mut model = QuadraticResidualModel::new(&set);
        solve(&mut model, &cfg, &mut rng(12), None).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.x_hat, b.x_hat);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn given_init_mode_requires_point() {
    let set = instance(EnsembleKind::RealGaussianSymmetric, 3, 12, 0.0, 3);
    let mut model = QuadraticResidualModel::new(&set);
    let cfg = GrnmConfig { init_mode: InitMode::Given, ..GrnmConfig::default() };
    assert!(solve(&mut model, &cfg, &mut rng(1), None).is_err());
    let x0 = set.truth().values().clone();
    let res = solve(&mut model, &cfg, &mut rng(1), Some(x0.view())).unwrap();
    assert_eq!(res.iterations(), 0);
}

#[test]
fn certificate_examples() {
    let set = instance(EnsembleKind::RealGaussianSymmetric, 5, 30, 0.0, 4);
    let mut model = QuadraticResidualModel::new(&set);
    let rep = certify_local_min(&mut model, set.truth().values().view(), 0.4).unwrap();
    assert!(rep.passed && !rep.degenerate);
    assert!(rep.s_norm <= 1e-12);

    let rep = certify_local_min(&mut model, Array1::zeros(5).view(), 0.4).unwrap();
    assert!(!rep.passed && rep.degenerate);
    assert_eq!(rep.threshold, 0.0);

    let set = instance(EnsembleKind::RealGaussianSymmetric, 4, 20, 0.3, 4);
    let mut model = QuadraticResidualModel::new(&set);
    let x = set.truth().values().clone();
    let rep = certify_local_min(&mut model, x.view(), 0.4).unwrap();
    let want = spectral_norm(&naive_residual_matrix(&set, x.as_slice().unwrap()));
    assert!((rep.s_norm - want).abs() <= 1e-6 * want);
    assert_eq!(rep.passed, rep.s_norm < rep.threshold);
    assert!(certify_local_min(&mut model, x.view(), 0.0).is_err());
}

#[test]
fn spectral_init_rank_one_case() {
    // Y = (1/n)Σ bᵢAᵢ = x xᵀ with A₁ = x xᵀ/‖x‖², b₁ = ‖x‖²
    let x = arr1(&[0.3, -1.2, 0.5]);
    let nx2 = x.dot(&x);
    let a = Array3::from_shape_fn((1, 3, 3), |(_, r, c)| x[r] * x[c] / nx2);
    let spec = spec(EnsembleKind::RealGaussianSymmetric, 3, 1, 0.0, 0);
    let set = MeasurementSet::from_parts(spec, Signal::new(x.clone(), Domain::Real).unwrap(), a, arr1(&[nx2])).unwrap();
    let init = spectral_init(&set, &WfConfig::default());
    let cos = init.x.dot(&x).abs() / (init.x.dot(&init.x).sqrt() * nx2.sqrt());
    assert!(cos >= 1.0 - 1e-8);
}

#[test]
fn spectral_init_correlates_with_truth() {
    let set = instance(EnsembleKind::RealGaussianSymmetric, 20, 4000, 0.0, 55);
    let init = spectral_init(&set, &WfConfig::default());
    let x = set.truth().values();
    let cos = init.x.dot(x).abs() / (init.x.dot(&init.x).sqrt() * x.dot(x).sqrt());
    assert!(cos >= 0.8, "cos {cos}");
    let again = spectral_init(&set, &WfConfig::default());
    assert_eq!(init.x, again.x);
}

#[test]
fn spectral_init_zero_b_falls_back() {
    let set = instance(EnsembleKind::RealGaussianSymmetric, 4, 10, 0.0, 5);
    let zero = MeasurementSet::from_parts(set.spec().clone(), set.truth().clone(), set.matrices().clone(), Array1::zeros(10)).unwrap();
    let init = spectral_init(&zero, &WfConfig::default());
    assert!(init.nonpositive);
    assert!((init.x.dot(&init.x).sqrt() - 1.0).abs() < 1e-12);
}

#[test]
fn wf_gradient_scales_quadratically_with_matrices() {
    let set = instance(EnsembleKind::RealGaussianSymmetric, 4, 10, 0.0, 5);
    let c = 3.0;
    let scaled = MeasurementSet::from_parts(set.spec().clone(), set.truth().clone(), set.matrices() * c, set.b() * c).unwrap();
    let x = gaussian_vec(4, &mut rng(2));
    let g = QuadraticResidualModel::new(&set).gradient(x.view()).unwrap();
    let gs = QuadraticResidualModel::new(&scaled).gradient(x.view()).unwrap();
    for (a, b) in g.iter().zip(gs.iter()) {
        assert!((b - c * c * a).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn wf_recovers_majority_and_stays_monotone() {
    let mut ok = 0;
    for t in 0..20 {
        let set = instance(EnsembleKind::RealGaussianSymmetric, 100, 400, 0.0, seed::trial_seed(3, 0, t));
        let mut model = QuadraticResidualModel::new(&set);
        let res = wf_solve(&mut model, &WfConfig::default()).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1].f <= w[0].f);
        }
        if let Some(last) = res.trace.last() {
            assert!(res.final_f <= last.f);
        }
        if classify_success(rel_err(&set, &res.x_hat), false) {
            ok += 1;
        }
    }
    assert!(ok > 10, "{ok}/20 recovered");
}
