//! Finite-difference validation of the analytic derivatives.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::error::Result;
use crate::linalg::norm;
use crate::objective::QuadraticResidualModel;

pub const GRADIENT_TOL: f64 = 1e-6;
pub const HESSIAN_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FdReport {
    pub step: f64,
    /// `‖g_fd − g‖ / ‖g‖`
    pub gradient_rel_err: f64,
    /// `‖H_fd − ∇²f‖_F / ‖∇²f‖_F`
    pub hessian_rel_err: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.gradient_rel_err <= GRADIENT_TOL && self.hessian_rel_err <= HESSIAN_TOL
    }
}

/// Central differences with step `1e-5·(1 + ‖x‖)`: of `f` against the
/// gradient and of the gradient against the Hessian.
pub fn finite_difference_check(
    model: &mut QuadraticResidualModel<'_>,
    x: ArrayView1<'_, f64>,
) -> Result<FdReport> {
    let d = x.len();
    let h = 1e-5 * (1.0 + norm(x));
    let g = model.gradient(x)?;
    let hess = model.hessian(x)?;
    let mut g_fd = Array1::<f64>::zeros(d);
    let mut h_fd = Array2::<f64>::zeros((d, d));
    let mut xp = x.to_owned();
    for k in 0..d {
        xp[k] = x[k] + h;
        let (fp, gp) = model.value_and_gradient(xp.view())?;
        xp[k] = x[k] - h;
        let (fm, gm) = model.value_and_gradient(xp.view())?;
        xp[k] = x[k];
        g_fd[k] = (fp - fm) / (2.0 * h);
        h_fd.column_mut(k).assign(&((gp - gm) / (2.0 * h)));
    }
    let rel = |diff: f64, base: f64| if base > 0.0 { diff / base } else { diff };
    let gradient_rel_err = rel(norm((&g_fd - &g).view()), norm(g.view()));
    let frob = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let hessian_rel_err = rel(frob(&(&h_fd - &hess)), frob(&hess));
    Ok(FdReport {
        step: h,
        gradient_rel_err,
        hessian_rel_err,
    })
}
