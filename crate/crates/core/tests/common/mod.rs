//! Reference implementations used as test oracles. Everything here is
//! written with plain loops and owes nothing to the library's own kernels.

#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use qmr::ensembles::{generate_instance, EnsembleKind, EnsembleSpec, MeasurementSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn spec(kind: EnsembleKind, p: usize, n: usize, noise: f64, seed: u64) -> EnsembleSpec {
    EnsembleSpec {
        kind,
        p,
        n,
        sigma: 1.0,
        noise_sigma: noise,
        seed,
    }
}

pub fn instance(kind: EnsembleKind, p: usize, n: usize, noise: f64, seed: u64) -> MeasurementSet {
    generate_instance(&spec(kind, p, n, noise, seed)).expect("instance")
}

pub fn gaussian_vec(d: usize, rng: &mut impl Rng) -> Array1<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn form(set: &MeasurementSet, i: usize, x: &[f64]) -> f64 {
    let d = x.len();
    let a = set.matrix(i);
    let mut s = 0.0;
    for r in 0..d {
        for c in 0..d {
            s += x[r] * a[[r, c]] * x[c];
        }
    }
    s
}

pub fn naive_residuals(set: &MeasurementSet, x: &[f64]) -> Vec<f64> {
    (0..set.n()).map(|i| form(set, i, x) - set.b()[i]).collect()
}

pub fn naive_value(set: &MeasurementSet, x: &[f64]) -> f64 {
    let phi = naive_residuals(set, x);
    phi.iter().map(|v| v * v).sum::<f64>() / (4.0 * set.n() as f64)
}

pub fn naive_gradient(set: &MeasurementSet, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let phi = naive_residuals(set, x);
    let mut g = vec![0.0; d];
    for (i, ph) in phi.iter().enumerate() {
        let a = set.matrix(i);
        for r in 0..d {
            let mut ax = 0.0;
            for c in 0..d {
                ax += a[[r, c]] * x[c];
            }
            g[r] += ph * ax;
        }
    }
    g.iter().map(|v| v / set.n() as f64).collect()
}

pub fn naive_residual_matrix(set: &MeasurementSet, x: &[f64]) -> Array2<f64> {
    let d = x.len();
    let phi = naive_residuals(set, x);
    let mut s = Array2::zeros((d, d));
    for (i, ph) in phi.iter().enumerate() {
        let a = set.matrix(i);
        for r in 0..d {
            for c in 0..d {
                s[[r, c]] += ph * a[[r, c]] / set.n() as f64;
            }
        }
    }
    s
}

pub fn fd_step(x: &[f64]) -> f64 {
    1e-5 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Central differences of `f`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = fd_step(x);
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            xp[k] = x[k] + h;
            let up = f(&xp);
            xp[k] = x[k] - h;
            let down = f(&xp);
            xp[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central differences of a vector field, column `k` = ∂g/∂x_k.
pub fn fd_jacobian(g: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Array2<f64> {
    let d = x.len();
    let h = fd_step(x);
    let mut out = Array2::zeros((d, d));
    let mut xp = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + h;
        let up = g(&xp);
        xp[k] = x[k] - h;
        let down = g(&xp);
        xp[k] = x[k];
        for r in 0..d {
            out[[r, k]] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    out
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 { num } else { num / den }
}

pub fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[[r, c]])
}

/// Eigenvalues of a symmetric matrix from a dense eigensolver.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let e = to_dmatrix(a).symmetric_eigen();
    e.eigenvalues.iter().copied().collect()
}

pub fn spectral_norm(a: &Array2<f64>) -> f64 {
    sym_eigenvalues(a).into_iter().map(f64::abs).fold(0.0, f64::max)
}

pub fn random_hermitian(p: usize, rng: &mut impl Rng) -> Array2<Complex64> {
    let mut a = Array2::from_elem((p, p), Complex64::new(0.0, 0.0));
    for r in 0..p {
        a[[r, r]] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for c in (r + 1)..p {
            let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            a[[r, c]] = z;
            a[[c, r]] = z.conj();
        }
    }
    a
}

pub fn random_complex(p: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..p)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// `xᴴ A x` by direct complex arithmetic.
pub fn hermitian_form(a: &Array2<Complex64>, x: &[Complex64]) -> Complex64 {
    let p = x.len();
    let mut s = Complex64::new(0.0, 0.0);
    for r in 0..p {
        for c in 0..p {
            s += x[r].conj() * a[[r, c]] * x[c];
        }
    }
    s
}

/// Phase-aligned complex error by brute force over a uniform grid of angles.
pub fn grid_phase_error(x_hat: &[Complex64], x_star: &[Complex64], steps: usize) -> f64 {
    let ns: f64 = x_star.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (0..steps)
        .map(|k| {
            let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / steps as f64);
            x_hat
                .iter()
                .zip(x_star)
                .map(|(a, b)| (a * rot - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
        / ns
}
