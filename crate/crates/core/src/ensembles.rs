//! Ground-truth signals, random measurement ensembles and frame-bound
//! estimation.
//!
//! Complex instances are stored in real coordinates: a complex vector
//! `x = a + jb` becomes `[a; b]` and a Hermitian matrix `A = R + jI` becomes
//! the real symmetric block matrix `[[R, -I], [I, R]]`. Under this map
//! `xᴴAx = ⟨u, Mu⟩`, so every solver works over the reals.

use std::f64::consts::PI;

use log::warn;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, QmrError, Result};
use crate::linalg::norm;
use crate::seed;

/// Default refusal threshold on `n·d²` stored matrix entries.
pub const DEFAULT_MAX_ENTRIES: u64 = 2_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Real,
    Complex,
}

impl Domain {
    /// Working (real) dimension for ambient dimension `p`.
    pub fn working_dim(self, p: usize) -> usize {
        match self {
            Domain::Real => p,
            Domain::Complex => 2 * p,
        }
    }
}

/// A signal in real working coordinates (`[Re; Im]` for complex signals).
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Array1<f64>,
    domain: Domain,
    p: usize,
}

impl Signal {
    pub fn new(values: Array1<f64>, domain: Domain) -> Result<Self> {
        let p = match domain {
            Domain::Real => values.len(),
            Domain::Complex => {
                if !values.len().is_multiple_of(2) {
                    return Err(QmrError::InvalidDimension(format!(
                        "complex signal needs an even number of real coordinates, got {}",
                        values.len()
                    )));
                }
                values.len() / 2
            }
        };
        if p == 0 {
            return Err(QmrError::InvalidDimension("empty signal".into()));
        }
        Ok(Signal { values, domain, p })
    }

    pub fn from_complex(x: &[Complex64]) -> Result<Self> {
        Signal::new(embed_vector(x), Domain::Complex)
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Complex coordinates; a real signal gets zero imaginary parts.
    pub fn to_complex(&self) -> Vec<Complex64> {
        match self.domain {
            Domain::Real => self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            Domain::Complex => (0..self.p)
                .map(|k| Complex64::new(self.values[k], self.values[self.p + k]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    RealGaussianSymmetric,
    ComplexGaussianHermitian,
    ComplexSubGaussianRotationInvariant,
}

impl EnsembleKind {
    pub fn domain(self) -> Domain {
        match self {
            EnsembleKind::RealGaussianSymmetric => Domain::Real,
            _ => Domain::Complex,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::RealGaussianSymmetric => "real_gaussian_symmetric",
            EnsembleKind::ComplexGaussianHermitian => "complex_gaussian_hermitian",
            EnsembleKind::ComplexSubGaussianRotationInvariant => {
                "complex_sub_gaussian_rotation_invariant"
            }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "real_gaussian_symmetric" | "real" | "real-gaussian" => {
                Some(EnsembleKind::RealGaussianSymmetric)
            }
            "complex_gaussian_hermitian" | "complex" | "complex-gaussian" => {
                Some(EnsembleKind::ComplexGaussianHermitian)
            }
            "complex_sub_gaussian_rotation_invariant" | "subgaussian" | "complex-subgaussian" => {
                Some(EnsembleKind::ComplexSubGaussianRotationInvariant)
            }
            _ => None,
        }
    }
}

impl std::fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub p: usize,
    pub n: usize,
    /// Entry scale σ.
    pub sigma: f64,
    /// Observation noise standard deviation σ_ε.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Err(QmrError::InvalidDimension(format!(
                "need p >= 1 and n >= 1, got p={} n={}",
                self.p, self.n
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(QmrError::InvalidInput(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(QmrError::InvalidInput(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn working_dim(&self) -> usize {
        self.kind.domain().working_dim(self.p)
    }

    /// Number of stored matrix entries, `n·d²`.
    pub fn stored_entries(&self) -> u64 {
        let d = self.working_dim() as u64;
        (self.n as u64).saturating_mul(d.saturating_mul(d))
    }
}

/// A QMR instance: symmetric matrices in real working coordinates,
/// observations and the ground truth that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    matrices: Array3<f64>,
    b: Array1<f64>,
    truth: Signal,
    spec: EnsembleSpec,
}

impl MeasurementSet {
    /// Assembles a set from explicit parts. Every matrix must be exactly
    /// symmetric.
    pub fn from_parts(
        spec: EnsembleSpec,
        truth: Signal,
        matrices: Array3<f64>,
        b: Array1<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        let (n, d1, d2) = matrices.dim();
        check_len(spec.n, n)?;
        check_len(spec.n, b.len())?;
        check_len(d1, d2)?;
        check_len(spec.working_dim(), d1)?;
        check_len(d1, truth.dim())?;
        if truth.domain() != spec.kind.domain() {
            return Err(QmrError::InvalidInput(
                "truth domain does not match the ensemble".into(),
            ));
        }
        for i in 0..n {
            let a = matrices.slice(s![i, .., ..]);
            for k in 0..d1 {
                for l in (k + 1)..d1 {
                    if a[[k, l]] != a[[l, k]] {
                        return Err(QmrError::InvalidInput(format!(
                            "matrix {i} is not symmetric at ({k}, {l})"
                        )));
                    }
                }
            }
        }
        Ok(MeasurementSet {
            matrices,
            b,
            truth,
            spec,
        })
    }

    /// Matrices as an `n × d × d` row-major array.
    pub fn matrices(&self) -> &Array3<f64> {
        &self.matrices
    }

    pub fn matrix(&self, i: usize) -> ArrayView2<'_, f64> {
        self.matrices.slice(s![i, .., ..])
    }

    pub fn b(&self) -> &Array1<f64> {
        &self.b
    }

    pub fn truth(&self) -> &Signal {
        &self.truth
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.matrices.dim().1
    }

    pub fn domain(&self) -> Domain {
        self.truth.domain()
    }

    pub fn is_noisy(&self) -> bool {
        self.spec.noise_sigma > 0.0
    }
}

/// Estimated frame constants `λ̲ ≤ λ̄` over a finite set of sampled pairs.
///
/// `lower` is an upper bound on the true `λ̲` and `upper` a lower bound on the
/// true `λ̄`, since both are extremes over sampled pairs only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
    /// Smallest γ with `(1/2 − γ/2)σ² ≤ lower` and `upper ≤ (1 + γ/2)σ²`
    /// for the nominal entry scale σ of the set.
    pub gamma_margin: f64,
}

/// Draws a ground-truth signal.
///
/// Real signals have i.i.d. standard normal entries. Complex signals draw
/// real and imaginary parts i.i.d. standard normal and are then normalized to
/// unit length.
pub fn generate_true_signal<R: Rng + ?Sized>(p: usize, domain: Domain, rng: &mut R) -> Result<Signal> {
    if p == 0 {
        return Err(QmrError::InvalidDimension("p must be at least 1".into()));
    }
    let d = domain.working_dim(p);
    let mut values: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    if domain == Domain::Complex {
        let nv = norm(values.view());
        values /= nv;
    }
    Signal::new(values, domain)
}

/// Generates matrices and observations for `spec` around `truth`, with the
/// matrix and noise streams derived from `spec.seed`.
pub fn generate_measurements(spec: &EnsembleSpec, truth: &Signal) -> Result<MeasurementSet> {
    let mut matrix_rng = seed::stream(spec.seed, seed::TAG_MATRICES);
    let mut noise_rng = seed::stream(spec.seed, seed::TAG_NOISE);
    generate_measurements_with(spec, truth, &mut matrix_rng, &mut noise_rng, DEFAULT_MAX_ENTRIES)
}

/// Generates the signal and the measurements of one instance from `spec.seed`.
pub fn generate_instance(spec: &EnsembleSpec) -> Result<MeasurementSet> {
    spec.validate()?;
    let mut rng = seed::stream(spec.seed, seed::TAG_SIGNAL);
    let truth = generate_true_signal(spec.p, spec.kind.domain(), &mut rng)?;
    generate_measurements(spec, &truth)
}

pub fn generate_measurements_with<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    spec: &EnsembleSpec,
    truth: &Signal,
    matrix_rng: &mut R1,
    noise_rng: &mut R2,
    max_entries: u64,
) -> Result<MeasurementSet> {
    spec.validate()?;
    if truth.p() != spec.p {
        return Err(QmrError::InvalidInput(format!(
            "truth has dimension {} but the ensemble expects {}",
            truth.p(),
            spec.p
        )));
    }
    if truth.domain() != spec.kind.domain() {
        return Err(QmrError::InvalidInput(format!(
            "{} needs a {:?} signal",
            spec.kind,
            spec.kind.domain()
        )));
    }
    let entries = spec.stored_entries();
    if entries > max_entries {
        return Err(QmrError::TooLarge {
            entries,
            cap: max_entries,
        });
    }
    if spec.n + 1 < 2 * spec.p {
        warn!(
            "n = {} is below 2p - 1 = {}; the noiseless solution may not be unique up to phase",
            spec.n,
            2 * spec.p - 1
        );
    }

    let (p, n, d) = (spec.p, spec.n, spec.working_dim());
    let sigma = spec.sigma;
    let mut matrices = Array3::<f64>::zeros((n, d, d));
    let normal = StandardNormal;
    for i in 0..n {
        let mut out = matrices.slice_mut(s![i, .., ..]);
        match spec.kind {
            EnsembleKind::RealGaussianSymmetric => {
                let bmat = gaussian_block(p, sigma, matrix_rng, &normal);
                for k in 0..p {
                    for l in k..p {
                        let v = (bmat[[k, l]] + bmat[[l, k]]) / 2.0;
                        out[[k, l]] = v;
                        out[[l, k]] = v;
                    }
                }
            }
            EnsembleKind::ComplexGaussianHermitian => {
                let re = gaussian_block(p, sigma, matrix_rng, &normal);
                let im = gaussian_block(p, sigma, matrix_rng, &normal);
                let mut a = Array2::<Complex64>::zeros((p, p));
                for k in 0..p {
                    for l in 0..p {
                        a[[k, l]] = Complex64::new(
                            (re[[k, l]] + re[[l, k]]) / 2.0,
                            (im[[k, l]] - im[[l, k]]) / 2.0,
                        );
                    }
                }
                write_embedded(&a, &mut out);
            }
            EnsembleKind::ComplexSubGaussianRotationInvariant => {
                let bmat = rotation_invariant_block(p, matrix_rng);
                let mut a = Array2::<Complex64>::zeros((p, p));
                for k in 0..p {
                    for l in 0..p {
                        let (bkl, blk) = (bmat[[k, l]], bmat[[l, k]]);
                        a[[k, l]] = Complex64::new(
                            sigma * (bkl.re + blk.re) / 2.0,
                            sigma * (bkl.im - blk.im) / 2.0,
                        );
                    }
                }
                write_embedded(&a, &mut out);
            }
        }
    }

    let x = truth.values();
    let mut b = Array1::<f64>::zeros(n);
    for i in 0..n {
        b[i] = quadratic_form(matrices.slice(s![i, .., ..]), x.view());
    }
    if spec.noise_sigma > 0.0 {
        for bi in b.iter_mut() {
            let e: f64 = noise_rng.sample(normal);
            *bi += spec.noise_sigma * e;
        }
    }

    Ok(MeasurementSet {
        matrices,
        b,
        truth: truth.clone(),
        spec: *spec,
    })
}

fn gaussian_block<R: Rng + ?Sized>(
    p: usize,
    sigma: f64,
    rng: &mut R,
    normal: &StandardNormal,
) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |_| {
        let z: f64 = normal.sample(rng);
        sigma * z
    })
}

/// Entries `r·e^{jθ}` with `θ ~ U[0, 2π)` and `r ~ U[0, √3]`, so that
/// `E|entry|² = 1`. The law is bounded, hence sub-Gaussian, and invariant
/// under multiplication by any unit phase.
fn rotation_invariant_block<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Array2<Complex64> {
    let radius = Uniform::new(0.0, 3f64.sqrt()).expect("valid range");
    let angle = Uniform::new(0.0, 2.0 * PI).expect("valid range");
    Array2::from_shape_fn((p, p), |_| {
        let r = radius.sample(rng);
        let t = angle.sample(rng);
        Complex64::from_polar(r, t)
    })
}

fn write_embedded(a: &Array2<Complex64>, out: &mut ndarray::ArrayViewMut2<'_, f64>) {
    let p = a.nrows();
    for k in 0..p {
        for l in 0..p {
            let z = a[[k, l]];
            out[[k, l]] = z.re;
            out[[p + k, p + l]] = z.re;
            out[[k, p + l]] = -z.im;
            out[[p + k, l]] = z.im;
        }
    }
}

/// `⟨x, A x⟩` with a fixed summation order.
pub fn quadratic_form(a: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> f64 {
    x.dot(&a.dot(&x))
}

/// `[Re(x); Im(x)]`.
pub fn embed_vector(x: &[Complex64]) -> Array1<f64> {
    let p = x.len();
    let mut u = Array1::zeros(2 * p);
    for (k, z) in x.iter().enumerate() {
        u[k] = z.re;
        u[p + k] = z.im;
    }
    u
}

/// `[[Re A, −Im A], [Im A, Re A]]` for a Hermitian `A` (checked to 1e-12).
pub fn embed_hermitian(a: &Array2<Complex64>) -> Result<Array2<f64>> {
    let p = a.nrows();
    check_len(p, a.ncols())?;
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for k in 0..p {
        for l in k..p {
            if (a[[k, l]] - a[[l, k]].conj()).norm() > 1e-12 * scale {
                return Err(QmrError::InvalidInput(format!(
                    "matrix is not Hermitian at ({k}, {l})"
                )));
            }
        }
    }
    // Average with the conjugate transpose so the embedding is exactly symmetric.
    let mut h = Array2::<Complex64>::zeros((p, p));
    for k in 0..p {
        for l in 0..p {
            let re = (a[[k, l]].re + a[[l, k]].re) / 2.0;
            let im = (a[[k, l]].im - a[[l, k]].im) / 2.0;
            h[[k, l]] = Complex64::new(re, im);
        }
    }
    let mut m = Array2::<f64>::zeros((2 * p, 2 * p));
    write_embedded(&h, &mut m.view_mut());
    Ok(m)
}

/// Real embedding of a Hermitian form: returns `(M, u)` with `⟨u, Mu⟩ = xᴴAx`.
pub fn embed_complex(a: &Array2<Complex64>, x: &[Complex64]) -> Result<(Array2<f64>, Array1<f64>)> {
    check_len(a.nrows(), x.len())?;
    Ok((embed_hermitian(a)?, embed_vector(x)))
}

/// Monte-Carlo estimate of the frame constants of a measurement set.
///
/// Each sample draws `u` uniform on the unit sphere (a normalized Gaussian),
/// an independent uniform direction `w` orthogonalized against `u`, and an
/// angle `ψ ~ U[0, π/2]`, then sets `v = cos ψ·u + sin ψ·w`. Both `u` and `v`
/// are marginally uniform on the sphere while `⟨u, v⟩ = cos ψ` sweeps the full
/// range, so the extremes of `(1/n)Σ⟨u, Aᵢv⟩²` approach both ends of the
/// frame interval rather than concentrating near orthogonal pairs.
pub fn estimate_frame_bounds<R: Rng + ?Sized>(
    set: &MeasurementSet,
    samples: usize,
    rng: &mut R,
) -> Result<FrameBounds> {
    if samples == 0 {
        return Err(QmrError::InvalidInput("samples must be at least 1".into()));
    }
    let d = set.dim();
    let angle = Uniform::new_inclusive(0.0, PI / 2.0).expect("valid range");
    let mut pairs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let u = unit_gaussian(d, rng);
        let w = unit_gaussian(d, rng);
        let psi: f64 = angle.sample(rng);
        let v = if d == 1 {
            u.clone()
        } else {
            let mut perp = &w - &(&u * u.dot(&w));
            let np = norm(perp.view());
            if np > 0.0 {
                perp /= np;
            }
            let mut v = &u * psi.cos() + &perp * psi.sin();
            let nv = norm(v.view());
            v /= nv;
            v
        };
        pairs.push((u, v));
    }
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|(u, v)| frame_value(set, u.view(), v.view()))
        .collect();
    let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s2 = set.spec().sigma * set.spec().sigma;
    let gamma_margin = (1.0 - 2.0 * lower / s2)
        .max(2.0 * (upper / s2 - 1.0))
        .max(0.0);
    Ok(FrameBounds {
        lower,
        upper,
        samples,
        gamma_margin,
    })
}

/// `(1/n) Σ ⟨u, Aᵢ v⟩²`.
pub fn frame_value(set: &MeasurementSet, u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let n = set.n();
    let mut acc = 0.0;
    for i in 0..n {
        let t = u.dot(&set.matrix(i).dot(&v));
        acc += t * t;
    }
    acc / n as f64
}

fn unit_gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let z: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nz = norm(z.view());
        if nz > 0.0 {
            return z / nz;
        }
    }
}
