//! Gradient regularized Newton method.
//!
//! Phase I runs Armijo gradient descent until `‖g‖ < eps1`. Phase II solves
//! `(H + β‖g‖^δ I) d = −g` with the Gauss-Newton matrix `H`, backtracks along
//! `d` with an Armijo rule and stops once `‖g‖ < eps`. Both phases share a
//! single iteration budget.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{QmrError, Result};
use crate::linalg::{norm, Cholesky};
use crate::objective::QuadraticResidualModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `z / f(0)` with `z` standard normal.
    ScaledRandom,
    /// Caller supplies the starting point.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrnmConfig {
    pub eps1: f64,
    pub eps: f64,
    pub beta: f64,
    pub delta: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub init_mode: InitMode,
}

impl Default for GrnmConfig {
    fn default() -> Self {
        GrnmConfig {
            eps1: 0.1,
            eps: 1e-5,
            beta: 0.5,
            delta: 0.25,
            mu1: 0.1,
            mu2: 0.1,
            alpha1: 0.5,
            alpha2: 0.5,
            max_iters: 5000,
            max_backtracks: 60,
            init_mode: InitMode::ScaledRandom,
        }
    }
}

impl GrnmConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(QmrError::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("delta", self.delta)?;
        unit("mu1", self.mu1)?;
        unit("mu2", self.mu2)?;
        unit("alpha1", self.alpha1)?;
        unit("alpha2", self.alpha2)?;
        if !(self.beta > 0.0) {
            return Err(QmrError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eps > 0.0 && self.eps < self.eps1) {
            return Err(QmrError::InvalidConfig(format!(
                "need 0 < eps < eps1, got eps={} eps1={}",
                self.eps, self.eps1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

/// One accepted step. `f` and `grad_norm` describe the iterate the step
/// started from; `tau = alpha^j_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub phase: Phase,
    pub f: f64,
    pub grad_norm: f64,
    pub j_k: usize,
    pub tau: f64,
    /// `‖d‖` in Phase II; zero in Phase I.
    pub dir_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    GradToleranceMet,
    ExactStationary,
    MaxIters,
    BacktrackFailure,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::GradToleranceMet => "grad_tolerance_met",
            SolveStatus::ExactStationary => "exact_stationary",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::BacktrackFailure => "backtrack_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `‖(1/n) Σ φᵢ(x̄) Aᵢ‖`
    pub s_norm: f64,
    /// `2 λ̲ ‖x̄‖²`
    pub threshold: f64,
    pub lambda_lower_est: f64,
    pub passed: bool,
    /// `x̄ = 0`: the condition cannot certify anything.
    pub degenerate: bool,
    /// Whether the power iteration for `s_norm` converged.
    pub norm_converged: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_hat: Array1<f64>,
    pub status: SolveStatus,
    pub trace: Vec<IterateRecord>,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    /// Seconds.
    pub wall_time: f64,
    pub certificate: Option<CertificateReport>,
    pub final_f: f64,
    pub final_grad_norm: f64,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.phase1_iters + self.phase2_iters
    }
}

/// Everything about an accepted step, for callers that want to verify the
/// line search or the Newton system independently.
#[derive(Debug)]
pub struct StepEvent<'e> {
    pub k: usize,
    pub phase: Phase,
    pub x: ArrayView1<'e, f64>,
    pub grad: ArrayView1<'e, f64>,
    pub f: f64,
    /// `−g` in Phase I, the regularized Newton direction in Phase II.
    pub direction: ArrayView1<'e, f64>,
    /// Gauss-Newton matrix at `x` (Phase II only).
    pub gauss_newton: Option<ArrayView2<'e, f64>>,
    /// `β‖g‖^δ` (Phase II only, zero otherwise).
    pub damping: f64,
    pub j: usize,
    pub tau: f64,
    pub f_next: f64,
}

/// `z / f(0)` for standard normal `z`, or `z / ‖z‖` when `f(0) < 1e-12`.
pub fn default_initial_point<R: Rng + ?Sized>(
    model: &QuadraticResidualModel<'_>,
    rng: &mut R,
) -> Array1<f64> {
    let d = model.dim();
    let z: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let b = model.set().b();
    let f0 = b.dot(b) / (4.0 * model.n() as f64);
    if f0 < 1e-12 {
        let nz = norm(z.view());
        z / nz
    } else {
        z / f0
    }
}

/// Solves `(H + β‖g‖^δ I) d = −g` through a Cholesky factorization.
///
/// If roundoff makes the damped matrix numerically indefinite, the
/// factorization is retried once with `1e-12·trace` added to the diagonal.
pub fn newton_direction(
    h: &Array2<f64>,
    g: ArrayView1<'_, f64>,
    beta: f64,
    delta: f64,
) -> Result<Array1<f64>> {
    let d = h.nrows();
    if h.ncols() != d || g.len() != d {
        return Err(QmrError::DimensionMismatch {
            expected: d,
            got: g.len(),
        });
    }
    let gn = norm(g);
    if !(gn > 0.0) {
        return Err(QmrError::InvalidInput(
            "newton direction needs a nonzero gradient".into(),
        ));
    }
    let mut m = h.clone();
    let damping = beta * gn.powf(delta);
    for i in 0..d {
        m[[i, i]] += damping;
    }
    let chol = match Cholesky::factor(&m) {
        Ok(c) => c,
        Err(_) => {
            let jitter = 1e-12 * m.diag().sum().abs();
            log::warn!("damped Newton matrix not numerically SPD; retrying with jitter {jitter:e}");
            for i in 0..d {
                m[[i, i]] += jitter;
            }
            Cholesky::factor(&m)?
        }
    };
    Ok(-chol.solve(g))
}

/// Phase I result: the point handed to Phase II, or a terminal status.
#[derive(Debug, Clone)]
pub struct PhaseOutput {
    pub x: Array1<f64>,
    pub f: f64,
    pub grad: Array1<f64>,
    pub records: Vec<IterateRecord>,
    /// `None` when Phase I handed over to Phase II.
    pub status: Option<SolveStatus>,
}

pub fn phase1(
    model: &mut QuadraticResidualModel<'_>,
    x0: ArrayView1<'_, f64>,
    config: &GrnmConfig,
) -> Result<PhaseOutput> {
    phase1_observed(model, x0, config, &mut |_| {})
}

fn phase1_observed(
    model: &mut QuadraticResidualModel<'_>,
    x0: ArrayView1<'_, f64>,
    config: &GrnmConfig,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<PhaseOutput> {
    config.validate()?;
    let mut x = x0.to_owned();
    let (mut f, mut g) = model.value_and_gradient(x.view())?;
    let mut records = Vec::new();
    let mut k = 0;
    let status = loop {
        let gn = norm(g.view());
        if gn == 0.0 {
            break Some(SolveStatus::ExactStationary);
        }
        if gn < config.eps1 {
            break None;
        }
        if k >= config.max_iters {
            break Some(SolveStatus::MaxIters);
        }
        let decrease = config.mu1 * gn * gn;
        let mut accepted = None;
        for j in 0..=config.max_backtracks {
            let tau = config.alpha1.powi(j as i32);
            let trial = &x - &(&g * tau);
            let ft = model.value(trial.view())?;
            if ft <= f - tau * decrease {
                accepted = Some((j, tau, trial, ft));
                break;
            }
        }
        let Some((j, tau, trial, ft)) = accepted else {
            break Some(SolveStatus::BacktrackFailure);
        };
        let dir = -&g;
        observer(&StepEvent {
            k,
            phase: Phase::One,
            x: x.view(),
            grad: g.view(),
            f,
            direction: dir.view(),
            gauss_newton: None,
            damping: 0.0,
            j,
            tau,
            f_next: ft,
        });
        records.push(IterateRecord {
            k,
            phase: Phase::One,
            f,
            grad_norm: gn,
            j_k: j,
            tau,
            dir_norm: 0.0,
        });
        x = trial;
        (f, g) = model.value_and_gradient(x.view())?;
        k += 1;
    };
    Ok(PhaseOutput {
        x,
        f,
        grad: g,
        records,
        status,
    })
}

/// Phase II from `x_start`; `k_start` iterations of the shared budget have
/// already been spent.
pub fn phase2(
    model: &mut QuadraticResidualModel<'_>,
    x_start: ArrayView1<'_, f64>,
    k_start: usize,
    config: &GrnmConfig,
) -> Result<PhaseOutput> {
    phase2_observed(model, x_start, k_start, config, &mut |_| {})
}

fn phase2_observed(
    model: &mut QuadraticResidualModel<'_>,
    x_start: ArrayView1<'_, f64>,
    k_start: usize,
    config: &GrnmConfig,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<PhaseOutput> {
    config.validate()?;
    let mut x = x_start.to_owned();
    let (mut f, mut g, mut h) = model.value_gradient_gauss_newton(x.view())?;
    let mut records = Vec::new();
    let mut k = k_start;
    let status = loop {
        let gn = norm(g.view());
        if gn == 0.0 {
            break SolveStatus::ExactStationary;
        }
        if gn < config.eps {
            break SolveStatus::GradToleranceMet;
        }
        if k >= config.max_iters {
            break SolveStatus::MaxIters;
        }
        let d = newton_direction(&h, g.view(), config.beta, config.delta)?;
        let slope = g.dot(&d);
        let mut accepted = None;
        for j in 0..=config.max_backtracks {
            let tau = config.alpha2.powi(j as i32);
            let trial = &x + &(&d * tau);
            let ft = model.value(trial.view())?;
            if ft <= f + config.mu2 * tau * slope {
                accepted = Some((j, tau, trial, ft));
                break;
            }
        }
        let Some((j, tau, trial, ft)) = accepted else {
            break SolveStatus::BacktrackFailure;
        };
        observer(&StepEvent {
            k,
            phase: Phase::Two,
            x: x.view(),
            grad: g.view(),
            f,
            direction: d.view(),
            gauss_newton: Some(h.view()),
            damping: config.beta * gn.powf(config.delta),
            j,
            tau,
            f_next: ft,
        });
        records.push(IterateRecord {
            k,
            phase: Phase::Two,
            f,
            grad_norm: gn,
            j_k: j,
            tau,
            dir_norm: norm(d.view()),
        });
        x = trial;
        (f, g, h) = model.value_gradient_gauss_newton(x.view())?;
        k += 1;
    };
    Ok(PhaseOutput {
        x,
        f,
        grad: g,
        records,
        status: Some(status),
    })
}

/// Runs both phases. With `InitMode::ScaledRandom` the starting point is
/// drawn from `rng` and `x0` is ignored; with `InitMode::Given`, `x0` is
/// required.
pub fn solve<R: Rng + ?Sized>(
    model: &mut QuadraticResidualModel<'_>,
    config: &GrnmConfig,
    rng: &mut R,
    x0: Option<ArrayView1<'_, f64>>,
) -> Result<SolveResult> {
    let start = match config.init_mode {
        InitMode::ScaledRandom => default_initial_point(model, rng),
        InitMode::Given => x0
            .ok_or_else(|| QmrError::InvalidConfig("init mode `given` needs a starting point".into()))?
            .to_owned(),
    };
    solve_from(model, config, start.view(), &mut |_| {})
}

/// Runs both phases from `x0`, reporting every accepted step to `observer`.
pub fn solve_from(
    model: &mut QuadraticResidualModel<'_>,
    config: &GrnmConfig,
    x0: ArrayView1<'_, f64>,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<SolveResult> {
    config.validate()?;
    let started = Instant::now();
    let one = phase1_observed(model, x0, config, observer)?;
    let phase1_iters = one.records.len();
    let (last, mut trace, phase2_iters) = match one.status {
        Some(_) => (one.clone(), one.records, 0),
        None => {
            let two = phase2_observed(model, one.x.view(), phase1_iters, config, observer)?;
            let mut trace = one.records;
            let n2 = two.records.len();
            trace.extend_from_slice(&two.records);
            (two, trace, n2)
        }
    };
    trace.shrink_to_fit();
    Ok(SolveResult {
        final_grad_norm: norm(last.grad.view()),
        final_f: last.f,
        x_hat: last.x,
        status: last.status.expect("terminal phase sets a status"),
        trace,
        phase1_iters,
        phase2_iters,
        wall_time: started.elapsed().as_secs_f64(),
        certificate: None,
    })
}

/// Checks `‖(1/n) Σ φᵢ(x̄) Aᵢ‖ < 2 λ̲ ‖x̄‖²`, which implies `∇²f(x̄) ≻ 0`.
pub fn certify_local_min(
    model: &mut QuadraticResidualModel<'_>,
    x_hat: ArrayView1<'_, f64>,
    frame_lower: f64,
) -> Result<CertificateReport> {
    if !(frame_lower > 0.0) {
        return Err(QmrError::InvalidInput(format!(
            "frame lower bound must be positive, got {frame_lower}"
        )));
    }
    let est = model.residual_matrix_norm(x_hat)?;
    let nx = norm(x_hat);
    if nx == 0.0 {
        return Ok(CertificateReport {
            s_norm: est.value,
            threshold: 0.0,
            lambda_lower_est: frame_lower,
            passed: false,
            degenerate: true,
            norm_converged: est.converged,
        });
    }
    let threshold = 2.0 * frame_lower * nx * nx;
    Ok(CertificateReport {
        s_norm: est.value,
        threshold,
        lambda_lower_est: frame_lower,
        passed: est.value < threshold,
        degenerate: false,
        norm_converged: est.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{Domain, EnsembleKind, EnsembleSpec, MeasurementSet, Signal};
    use ndarray::{array, Array3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// d = 1, n = 1, A = [a], b = [b]
    fn scalar_set(a: f64, b: f64) -> MeasurementSet {
        let spec = EnsembleSpec {
            kind: EnsembleKind::RealGaussianSymmetric,
            p: 1,
            n: 1,
            sigma: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        };
        let truth = Signal::new(array![1.0], Domain::Real).unwrap();
        MeasurementSet::from_parts(spec, truth, Array3::from_elem((1, 1, 1), a), array![b]).unwrap()
    }

    #[test]
    fn defaults_match_published_settings() {
        let c = GrnmConfig::default();
        assert_eq!((c.eps1, c.mu1, c.mu2, c.beta, c.delta), (0.1, 0.1, 0.1, 0.5, 0.25));
        assert_eq!((c.eps, c.max_iters), (1e-5, 5000));
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = GrnmConfig::default();
        c.eps = 0.2;
        assert!(c.validate().is_err());
        let mut c = GrnmConfig::default();
        c.delta = 1.0;
        assert!(c.validate().is_err());
        let mut c = GrnmConfig::default();
        c.beta = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn initial_point_unit_divisor() {
        // ‖b‖² = 4n  ⇒  f(0) = 1
        let set = scalar_set(1.0, 2.0);
        let model = QuadraticResidualModel::new(&set);
        let x = default_initial_point(&model, &mut ChaCha8Rng::seed_from_u64(4));
        let z: f64 = ChaCha8Rng::seed_from_u64(4).sample(StandardNormal);
        assert_eq!(x[0], z);
    }

    #[test]
    fn initial_point_fallback_for_zero_observations() {
        let set = scalar_set(1.0, 0.0);
        let model = QuadraticResidualModel::new(&set);
        let x = default_initial_point(&model, &mut ChaCha8Rng::seed_from_u64(4));
        assert!((x[0].abs() - 1.0).abs() < 1e-15);
        let y = default_initial_point(&model, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(x, y);
    }

    #[test]
    fn newton_direction_scalar_cases() {
        let d = newton_direction(&array![[2.0]], array![1.0].view(), 1.0, 0.5).unwrap();
        assert!((d[0] + 1.0 / 3.0).abs() < 1e-15);
        let d = newton_direction(&array![[0.0]], array![4.0].view(), 1.0, 0.5).unwrap();
        assert!((d[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn newton_direction_needs_nonzero_gradient() {
        assert!(newton_direction(&array![[1.0]], array![0.0].view(), 1.0, 0.5).is_err());
    }

    #[test]
    fn phase1_returns_immediately_below_tolerance() {
        // f = (x² − 1)²/4, g(1.001) ≈ 0.002 < eps1
        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let out = phase1(&mut model, array![1.001].view(), &GrnmConfig::default()).unwrap();
        assert!(out.records.is_empty());
        assert!(out.status.is_none());
        assert_eq!(out.x, array![1.001]);
    }

    #[test]
    fn phase1_first_step_matches_brute_force() {
        // f = (x² − 1)²/4 at x = 2: f = 9/4, g = 6. Brute-force the smallest j.
        let f = |x: f64| (x * x - 1.0).powi(2) / 4.0;
        let mut j_star = 0;
        while f(2.0 - 6.0 * 0.5f64.powi(j_star)) > f(2.0) - 0.1 * 0.5f64.powi(j_star) * 36.0 {
            j_star += 1;
        }
        let x1 = 2.0 - 6.0 * 0.5f64.powi(j_star);
        assert_eq!((j_star, x1), (1, -1.0));

        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let out = phase1(&mut model, array![2.0].view(), &GrnmConfig::default()).unwrap();
        assert_eq!(out.records[0].j_k, j_star as usize);
        assert_eq!(out.records[0].tau, 0.5);
        // x₁ = −1 is an exact minimizer, so Phase I ends after one step.
        assert_eq!(out.x, array![x1]);
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn phase2_scalar_converges_to_positive_root() {
        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let out = phase2(&mut model, array![1.2].view(), 0, &GrnmConfig::default()).unwrap();
        assert_eq!(out.status, Some(SolveStatus::GradToleranceMet));
        assert!(out.records.len() <= 20);
        assert!(norm(out.grad.view()) < 1e-5);
        assert!((out.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn phase2_returns_immediately_when_converged() {
        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let out = phase2(&mut model, array![1.0 + 1e-9].view(), 0, &GrnmConfig::default()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.status, Some(SolveStatus::GradToleranceMet));
    }

    #[test]
    fn exact_stationary_at_origin() {
        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let mut cfg = GrnmConfig::default();
        cfg.init_mode = InitMode::Given;
        let x0 = array![0.0];
        let res = solve(&mut model, &cfg, &mut ChaCha8Rng::seed_from_u64(0), Some(x0.view())).unwrap();
        assert_eq!(res.status, SolveStatus::ExactStationary);
        assert!(res.trace.is_empty());
    }

    #[test]
    fn given_mode_requires_point() {
        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let cfg = GrnmConfig {
            init_mode: InitMode::Given,
            ..GrnmConfig::default()
        };
        assert!(solve(&mut model, &cfg, &mut ChaCha8Rng::seed_from_u64(0), None).is_err());
    }

    #[test]
    fn iteration_budget_is_shared() {
        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let cfg = GrnmConfig {
            max_iters: 1,
            init_mode: InitMode::Given,
            ..GrnmConfig::default()
        };
        let x0 = array![30.0];
        let res = solve(&mut model, &cfg, &mut ChaCha8Rng::seed_from_u64(0), Some(x0.view())).unwrap();
        assert_eq!(res.status, SolveStatus::MaxIters);
        assert_eq!(res.iterations(), 1);
    }

    #[test]
    fn certificate_degenerate_and_exact() {
        let set = scalar_set(1.0, 1.0);
        let mut model = QuadraticResidualModel::new(&set);
        let rep = certify_local_min(&mut model, array![0.0].view(), 0.5).unwrap();
        assert!(rep.degenerate && !rep.passed && rep.threshold == 0.0);
        let rep = certify_local_min(&mut model, array![1.0].view(), 0.5).unwrap();
        assert_eq!(rep.s_norm, 0.0);
        assert!(rep.passed);
        assert!(certify_local_min(&mut model, array![1.0].view(), 0.0).is_err());
    }
}
