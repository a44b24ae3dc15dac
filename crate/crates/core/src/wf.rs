//! Wirtinger-flow style baseline: spectral initialization followed by
//! gradient descent with a fixed base step.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensembles::MeasurementSet;
use crate::error::{QmrError, Result};
use crate::grnm::{IterateRecord, Phase, SolveResult, SolveStatus};
use crate::linalg::{leading_eigenpair, norm};
use crate::objective::QuadraticResidualModel;
use crate::seed;

/// Number of step halvings tried before a non-decreasing step is declared
/// impossible.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WfConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub eps: f64,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for WfConfig {
    fn default() -> Self {
        WfConfig {
            alpha: 0.2,
            max_iters: 5000,
            eps: 1e-5,
            power_iters: 200,
            power_tol: 1e-8,
        }
    }
}

impl WfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.eps > 0.0 && self.power_tol > 0.0) || self.power_iters == 0 {
            return Err(QmrError::InvalidConfig(
                "wf alpha, eps, power_tol and power_iters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub x: Array1<f64>,
    pub eigenvalue: f64,
    /// Estimated entry variance used for scaling.
    pub sigma2_hat: f64,
    /// Leading eigenvalue was not positive; `x` is a unit vector.
    pub nonpositive: bool,
    pub converged: bool,
}

/// `Y = (1/n) Σ bᵢ Aᵢ`.
pub fn spectral_matrix(set: &MeasurementSet) -> Array2<f64> {
    let d = set.dim();
    let mut y = Array2::<f64>::zeros((d, d));
    for (i, &bi) in set.b().iter().enumerate() {
        y.zip_mut_with(&set.matrix(i), |acc, &a| *acc += bi * a);
    }
    y /= set.n() as f64;
    y
}

/// Mean square of the diagonal entries of all `Aᵢ`.
pub fn diagonal_variance(set: &MeasurementSet) -> f64 {
    let (n, d) = (set.n(), set.dim());
    let mut acc = 0.0;
    for i in 0..n {
        let a = set.matrix(i);
        for k in 0..d {
            acc += a[[k, k]] * a[[k, k]];
        }
    }
    acc / (n * d) as f64
}

/// Leading eigenvector of `Y` scaled by `sqrt(λ₁ / σ̂²)`.
pub fn spectral_init(set: &MeasurementSet, config: &WfConfig) -> SpectralInit {
    let y = spectral_matrix(set);
    let d = set.dim();
    let mut rng = seed::stream(set.spec().seed, seed::TAG_SPECTRAL);
    let start: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let est = leading_eigenpair(&y, start.view(), config.power_tol, config.power_iters);
    if !est.converged {
        log::warn!(
            "spectral power iteration stopped after {} iterations without converging",
            est.iterations
        );
    }
    let mut sigma2_hat = diagonal_variance(set);
    if !(sigma2_hat > 0.0) {
        sigma2_hat = 1.0;
    }
    if est.value <= 0.0 {
        log::warn!("leading eigenvalue of the spectral matrix is {}; using a unit vector", est.value);
        return SpectralInit {
            x: est.vector,
            eigenvalue: est.value,
            sigma2_hat,
            nonpositive: true,
            converged: est.converged,
        };
    }
    let scale = (est.value / sigma2_hat).sqrt();
    SpectralInit {
        x: est.vector * scale,
        eigenvalue: est.value,
        sigma2_hat,
        nonpositive: false,
        converged: est.converged,
    }
}

/// Gradient descent from the spectral point with `η = (α/σ) / ‖x⁰‖²`.
///
/// If a step would increase `f`, the step is halved (and stays halved for
/// later iterations); after [`MAX_HALVINGS`] failed halvings the run stops
/// with `BacktrackFailure`. Trace records use `Phase::One`, `j_k` for the
/// halvings taken and `tau` for the step actually applied.
pub fn wf_solve(model: &mut QuadraticResidualModel<'_>, config: &WfConfig) -> Result<SolveResult> {
    config.validate()?;
    let started = Instant::now();
    let set = model.set();
    let init = spectral_init(set, config);
    let mut x = init.x;
    let x0_sq = x.dot(&x);
    let mut eta = (config.alpha / set.spec().sigma) / x0_sq.max(1e-12);

    let (mut f, mut g) = model.value_and_gradient(x.view())?;
    let mut trace = Vec::new();
    let mut k = 0;
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
        let mut accepted = None;
        for j in 0..=MAX_HALVINGS {
            let trial = &x - &(&g * eta);
            let ft = model.value(trial.view())?;
            if ft <= f {
                accepted = Some((j, trial, ft));
                break;
            }
            if j < MAX_HALVINGS {
                eta *= 0.5;
            }
        }
        let Some((j, trial, _)) = accepted else {
            break SolveStatus::BacktrackFailure;
        };
        trace.push(IterateRecord {
            k,
            phase: Phase::One,
            f,
            grad_norm: gn,
            j_k: j,
            tau: eta,
            dir_norm: 0.0,
        });
        x = trial;
        (f, g) = model.value_and_gradient(x.view())?;
        k += 1;
    };
    Ok(SolveResult {
        final_grad_norm: norm(g.view()),
        final_f: f,
        x_hat: x,
        status,
        phase1_iters: trace.len(),
        phase2_iters: 0,
        trace,
        wall_time: started.elapsed().as_secs_f64(),
        certificate: None,
    })
}
