//! Small dense kernels: Cholesky factorization, power iteration and a
//! Jacobi eigensolver for small symmetric blocks.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{QmrError, Result};

pub fn norm(x: ArrayView1<'_, f64>) -> f64 {
    x.dot(&x).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d {
            return Err(QmrError::DimensionMismatch {
                expected: d,
                got: a.ncols(),
            });
        }
        let mut l = Array2::<f64>::zeros((d, d));
        for j in 0..d {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(QmrError::NotPositiveDefinite {
                    column: j,
                    pivot: diag,
                });
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..d {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        Ok(Cholesky { lower: l })
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn solve(&self, rhs: ArrayView1<'_, f64>) -> Array1<f64> {
        let l = &self.lower;
        let d = l.nrows();
        assert_eq!(rhs.len(), d, "right-hand side length");
        let mut y = rhs.to_owned();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }
}

/// Outcome of a power iteration.
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub value: f64,
    pub vector: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral norm of a symmetric matrix by block power iteration with a
/// Rayleigh-Ritz projection.
///
/// `start` holds the initial block, one column per vector. A block resolves
/// eigenvalues of equal magnitude and opposite sign, which stall single-vector
/// power iteration. Iteration stops when the residual `‖S y − θ y‖` of the
/// largest-magnitude Ritz pair is at most `tol·|θ|`, which places a true
/// eigenvalue within that distance of `θ`.
pub fn spectral_norm_symmetric(
    s: &Array2<f64>,
    start: ArrayView2<'_, f64>,
    tol: f64,
    max_iter: usize,
) -> EigenEstimate {
    let d = s.nrows();
    let mut q = orthonormal_columns(start.to_owned());
    let mut best = EigenEstimate {
        value: 0.0,
        vector: q.column(0).to_owned(),
        iterations: 0,
        converged: false,
    };
    if d == 0 {
        best.converged = true;
        return best;
    }
    for it in 1..=max_iter {
        let w = s.dot(&q);
        let t = q.t().dot(&w);
        let (theta, y) = jacobi_eigen(&t);
        let pick = (0..theta.len())
            .max_by(|&a, &b| theta[a].abs().total_cmp(&theta[b].abs()))
            .expect("nonempty block");
        let yv = y.column(pick);
        let ritz = q.dot(&yv);
        let residual = &w.dot(&yv) - &(&ritz * theta[pick]);
        let value = theta[pick].abs();
        best = EigenEstimate {
            value,
            vector: ritz,
            iterations: it,
            converged: false,
        };
        if norm(residual.view()) <= tol * value || w.iter().all(|&x| x == 0.0) {
            best.converged = true;
            return best;
        }
        q = orthonormal_columns(w.dot(&y));
    }
    best
}

/// Modified Gram-Schmidt, applied twice. Columns that vanish are replaced by
/// the first coordinate vector not yet in the span.
fn orthonormal_columns(mut a: Array2<f64>) -> Array2<f64> {
    let (d, k) = a.dim();
    let mut fallback = 0;
    for c in 0..k {
        let original = norm(a.column(c)).max(f64::MIN_POSITIVE);
        for _ in 0..2 {
            for prev in 0..c {
                let proj = a.column(prev).dot(&a.column(c));
                let pv = a.column(prev).to_owned();
                a.column_mut(c).scaled_add(-proj, &pv);
            }
        }
        let mut nc = norm(a.column(c));
        while nc <= 1e-10 * original && fallback < d {
            a.column_mut(c).fill(0.0);
            a[[fallback, c]] = 1.0;
            fallback += 1;
            for prev in 0..c {
                let proj = a.column(prev).dot(&a.column(c));
                let pv = a.column(prev).to_owned();
                a.column_mut(c).scaled_add(-proj, &pv);
            }
            nc = norm(a.column(c));
        }
        a.column_mut(c).mapv_inplace(|v| v / nc);
    }
    a
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi sweeps.
/// Returns eigenvalues and the matrix of eigenvectors (as columns).
pub fn jacobi_eigen(t: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let k = t.nrows();
    let mut a = t.clone();
    let mut v = Array2::<f64>::eye(k);
    for _ in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|r| (0..k).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a[[r, c]] * a[[r, c]])
            .sum();
        let diag: f64 = (0..k).map(|r| a[[r, r]] * a[[r, r]]).sum();
        if off <= 1e-30 * diag || off == 0.0 {
            break;
        }
        for p in 0..k {
            for r in (p + 1)..k {
                let apr = a[[p, r]];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[[r, r]] - a[[p, p]]) / (2.0 * apr);
                let tn = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let tn = if theta == 0.0 { 1.0 } else { tn };
                let c = 1.0 / (tn * tn + 1.0).sqrt();
                let sn = tn * c;
                for i in 0..k {
                    let aip = a[[i, p]];
                    let air = a[[i, r]];
                    a[[i, p]] = c * aip - sn * air;
                    a[[i, r]] = sn * aip + c * air;
                }
                for i in 0..k {
                    let api = a[[p, i]];
                    let ari = a[[r, i]];
                    a[[p, i]] = c * api - sn * ari;
                    a[[r, i]] = sn * api + c * ari;
                }
                for i in 0..k {
                    let vip = v[[i, p]];
                    let vir = v[[i, r]];
                    v[[i, p]] = c * vip - sn * vir;
                    v[[i, r]] = sn * vip + c * vir;
                }
            }
        }
    }
    ((0..k).map(|i| a[[i, i]]).collect(), v)
}

/// Algebraically largest eigenpair of a symmetric matrix.
///
/// Iterates on `Y + cI` with `c` the max absolute row sum, which bounds the
/// spectral radius, so the shifted matrix is PSD and its dominant eigenvector
/// belongs to the largest (not the largest-magnitude) eigenvalue of `Y`.
/// Convergence is judged on the Rayleigh quotient.
pub fn leading_eigenpair(
    y: &Array2<f64>,
    start: ArrayView1<'_, f64>,
    tol: f64,
    max_iter: usize,
) -> EigenEstimate {
    let shift = y
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut v = start.to_owned();
    let nv = norm(v.view());
    if nv == 0.0 || y.is_empty() {
        v.fill(0.0);
        if !v.is_empty() {
            v[0] = 1.0;
        }
    } else {
        v /= nv;
    }
    if shift == 0.0 {
        return EigenEstimate {
            value: 0.0,
            vector: v,
            iterations: 0,
            converged: true,
        };
    }
    let mut rayleigh = v.dot(&y.dot(&v));
    for it in 1..=max_iter {
        let yv = y.dot(&v);
        let w = &yv + &(&v * shift);
        let nw = norm(w.view());
        if nw == 0.0 {
            break;
        }
        v = w / nw;
        let next = v.dot(&y.dot(&v));
        let done = (next - rayleigh).abs() <= tol * next.abs().max(shift * f64::EPSILON);
        rayleigh = next;
        if done {
            return EigenEstimate {
                value: rayleigh,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
    }
    EigenEstimate {
        value: rayleigh,
        vector: v,
        iterations: max_iter,
        converged: false,
    }
}
