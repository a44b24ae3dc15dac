//! Least-squares objective `f(x) = (1/4n) Σ (⟨x, Aᵢx⟩ − bᵢ)²` and its
//! derivatives.
//!
//! With `𝐀(x)` the `n × d` matrix whose rows are `(Aᵢx)ᵀ` and
//! `φᵢ(x) = ⟨x, Aᵢx⟩ − bᵢ`:
//!
//! - `∇f(x) = (1/n) 𝐀(x)ᵀ φ(x)`
//! - `H(x) = (2/n) 𝐀(x)ᵀ 𝐀(x)` (Gauss-Newton part, PSD)
//! - `∇²f(x) = H(x) + S(x)` with `S(x) = (1/n) Σ φᵢ(x) Aᵢ`

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensembles::MeasurementSet;
use crate::error::{check_len, Result};
use crate::linalg::{spectral_norm_symmetric, EigenEstimate};
use crate::seed;

/// Relative tolerance for the power iteration behind
/// [`QuadraticResidualModel::residual_matrix_norm`].
pub const RESIDUAL_NORM_TOL: f64 = 1e-8;
/// Block width for the residual-norm power iteration.
pub const RESIDUAL_NORM_BLOCK: usize = 8;

/// Evaluator bound to one measurement set. Holds scratch buffers, so a model
/// is used from one thread at a time; create one model per thread.
#[derive(Debug, Clone)]
pub struct QuadraticResidualModel<'a> {
    set: &'a MeasurementSet,
    ax: Array2<f64>,
    phi: Array1<f64>,
}

impl<'a> QuadraticResidualModel<'a> {
    pub fn new(set: &'a MeasurementSet) -> Self {
        let (n, d) = (set.n(), set.dim());
        QuadraticResidualModel {
            set,
            ax: Array2::zeros((n, d)),
            phi: Array1::zeros(n),
        }
    }

    pub fn set(&self) -> &'a MeasurementSet {
        self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn n(&self) -> usize {
        self.set.n()
    }

    /// Fills `ax` with `𝐀(x)` and `phi` with `φ(x)`.
    fn evaluate(&mut self, x: ArrayView1<'_, f64>) -> Result<()> {
        let (n, d) = (self.n(), self.dim());
        check_len(d, x.len())?;
        let stacked = self
            .set
            .matrices()
            .view()
            .into_shape_with_order((n * d, d))
            .expect("matrices are stored contiguously");
        {
            let mut flat = self
                .ax
                .view_mut()
                .into_shape_with_order(n * d)
                .expect("scratch is contiguous");
            general_mat_vec_mul(1.0, &stacked, &x, 0.0, &mut flat);
        }
        let b = self.set.b();
        for i in 0..n {
            self.phi[i] = self.ax.row(i).dot(&x) - b[i];
        }
        Ok(())
    }

    pub fn residuals(&mut self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.evaluate(x)?;
        Ok(self.phi.clone())
    }

    pub fn value(&mut self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.evaluate(x)?;
        Ok(self.current_value())
    }

    fn current_value(&self) -> f64 {
        self.phi.dot(&self.phi) / (4.0 * self.n() as f64)
    }

    fn current_gradient(&self) -> Array1<f64> {
        self.ax.t().dot(&self.phi) / self.n() as f64
    }

    pub fn gradient(&mut self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.evaluate(x)?;
        Ok(self.current_gradient())
    }

    pub fn value_and_gradient(&mut self, x: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
        self.evaluate(x)?;
        Ok((self.current_value(), self.current_gradient()))
    }

    /// Value, gradient and Gauss-Newton matrix from a single pass over the
    /// measurement matrices.
    pub fn value_gradient_gauss_newton(
        &mut self,
        x: ArrayView1<'_, f64>,
    ) -> Result<(f64, Array1<f64>, Array2<f64>)> {
        self.evaluate(x)?;
        Ok((
            self.current_value(),
            self.current_gradient(),
            self.current_gauss_newton(),
        ))
    }

    fn current_gauss_newton(&self) -> Array2<f64> {
        let mut h = self.ax.t().dot(&self.ax);
        h *= 2.0 / self.n() as f64;
        symmetrize(&mut h);
        h
    }

    pub fn gauss_newton_matrix(&mut self, x: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        self.evaluate(x)?;
        Ok(self.current_gauss_newton())
    }

    fn current_residual_matrix(&self) -> Array2<f64> {
        let (n, d) = (self.n(), self.dim());
        let mats = self.set.matrices();
        let mut s = Array2::<f64>::zeros((d, d));
        for i in 0..n {
            let w = self.phi[i];
            s.zip_mut_with(&mats.index_axis(ndarray::Axis(0), i), |acc, &a| *acc += w * a);
        }
        s /= n as f64;
        s
    }

    /// `S(x) = (1/n) Σ φᵢ(x) Aᵢ`.
    pub fn residual_matrix(&mut self, x: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        self.evaluate(x)?;
        Ok(self.current_residual_matrix())
    }

    pub fn hessian(&mut self, x: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        self.evaluate(x)?;
        Ok(self.current_gauss_newton() + self.current_residual_matrix())
    }

    /// Spectral norm of `S(x)` by block power iteration (relative tolerance 1e-8).
    /// The start vector is drawn from a stream fixed by the instance seed.
    pub fn residual_matrix_norm(&mut self, x: ArrayView1<'_, f64>) -> Result<EigenEstimate> {
        let s = self.residual_matrix(x)?;
        let d = self.dim();
        let mut rng = seed::stream(self.set.spec().seed, seed::TAG_SPECTRAL);
        let block = d.min(RESIDUAL_NORM_BLOCK);
        let start = Array2::from_shape_fn((d, block), |_| rng.sample(StandardNormal));
        let est = spectral_norm_symmetric(&s, start.view(), RESIDUAL_NORM_TOL, (10 * d).max(100));
        if !est.converged {
            log::warn!(
                "residual matrix norm did not converge after {} iterations",
                est.iterations
            );
        }
        Ok(est)
    }
}

/// Replaces `h` by `(h + hᵀ)/2`, making it bitwise symmetric.
fn symmetrize(h: &mut Array2<f64>) {
    let d = h.nrows();
    for k in 0..d {
        for l in (k + 1)..d {
            let v = 0.5 * (h[[k, l]] + h[[l, k]]);
            h[[k, l]] = v;
            h[[l, k]] = v;
        }
    }
}
