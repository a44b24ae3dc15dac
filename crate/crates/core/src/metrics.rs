//! Phase-invariant recovery error and aggregate statistics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensembles::{Domain, Signal};
use crate::error::{check_len, QmrError, Result};

pub const NOISELESS_THRESHOLD: f64 = 1e-5;
pub const NOISY_THRESHOLD: f64 = 5e-3;

/// `min_θ ‖x* − x̂ e^{jθ}‖ / ‖x*‖`.
///
/// Real signals only allow `θ ∈ {0, π}`. For complex signals the minimizing
/// phase aligns `⟨x̂ e^{jθ}, x*⟩` to the nonnegative real axis, i.e.
/// `e^{jθ} = c / |c|` with `c = Σ conj(x̂ₖ) x*ₖ`; the distance is then
/// evaluated directly rather than through `‖x*‖² + ‖x̂‖² − 2|c|`, which
/// cancels catastrophically near zero error.
pub fn relative_error(x_hat: &Signal, x_star: &Signal) -> Result<f64> {
    if x_hat.domain() != x_star.domain() {
        return Err(QmrError::InvalidInput("signals live in different domains".into()));
    }
    check_len(x_star.dim(), x_hat.dim())?;
    let xs = x_star.values();
    let star_norm = xs.dot(xs).sqrt();
    if star_norm == 0.0 {
        return Err(QmrError::InvalidInput("true signal has zero norm".into()));
    }
    let xh = x_hat.values();
    let dist = match x_star.domain() {
        Domain::Real => {
            let minus = xs.iter().zip(xh).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let plus = xs.iter().zip(xh).map(|(a, b)| (a + b).powi(2)).sum::<f64>();
            minus.min(plus).sqrt()
        }
        Domain::Complex => {
            let (hc, sc) = (x_hat.to_complex(), x_star.to_complex());
            let c: Complex64 = hc.iter().zip(&sc).map(|(h, s)| h.conj() * s).sum();
            let phase = if c.norm() > 0.0 {
                c / c.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            hc.iter()
                .zip(&sc)
                .map(|(h, s)| (s - h * phase).norm_sqr())
                .sum::<f64>()
                .sqrt()
        }
    };
    Ok(dist / star_norm)
}

/// Strict comparison against 1e-5 (noiseless) or 5e-3 (noisy).
pub fn classify_success(rel_err: f64, noisy: bool) -> bool {
    let threshold = if noisy { NOISY_THRESHOLD } else { NOISELESS_THRESHOLD };
    rel_err < threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub rel_err: f64,
    pub success: bool,
    /// Seconds.
    pub wall_time: f64,
    pub iters: (usize, usize),
    pub final_grad_norm: f64,
    pub certificate_passed: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub success_rate: f64,
    pub mean_rel_err: f64,
    pub median_rel_err: f64,
    pub mean_time: f64,
    pub mean_iters: f64,
}

pub fn aggregate(outcomes: &[TrialOutcome]) -> Result<Summary> {
    if outcomes.is_empty() {
        return Err(QmrError::InvalidInput("cannot aggregate zero outcomes".into()));
    }
    let n = outcomes.len() as f64;
    let successes = outcomes.iter().filter(|o| o.success).count();
    let mut errs: Vec<f64> = outcomes.iter().map(|o| o.rel_err).collect();
    Ok(Summary {
        trials: outcomes.len(),
        success_rate: successes as f64 / n,
        mean_rel_err: errs.iter().sum::<f64>() / n,
        median_rel_err: median(&mut errs),
        mean_time: outcomes.iter().map(|o| o.wall_time).sum::<f64>() / n,
        mean_iters: outcomes
            .iter()
            .map(|o| (o.iters.0 + o.iters.1) as f64)
            .sum::<f64>()
            / n,
    })
}

/// Median of a nonempty slice (mean of the two middle values for even length).
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}
