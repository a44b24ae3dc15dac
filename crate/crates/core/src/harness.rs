//! Seeded experiment grids over ensembles, sizes, scales and solvers.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{estimate_frame_bounds, generate_instance, EnsembleKind, EnsembleSpec, MeasurementSet};
use crate::error::{QmrError, Result};
use crate::grnm::{self, certify_local_min, GrnmConfig, SolveResult};
use crate::metrics::{classify_success, relative_error};
use crate::objective::QuadraticResidualModel;
use crate::seed;
use crate::wf::{wf_solve, WfConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Grnm,
    Wf,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Grnm => "grnm",
            SolverKind::Wf => "wf",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Grnm, SolverKind::Wf]
}
fn default_sigmas() -> Vec<f64> {
    vec![1.0]
}
fn default_noise() -> Vec<f64> {
    vec![0.0]
}
fn default_trials() -> usize {
    20
}
fn default_frame_samples() -> usize {
    1000
}

/// A grid of experiment cells. Exactly one of `np_ratios` and `n_values`
/// must be given; with ratios, `n = round(ratio · p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub kinds: Vec<EnsembleKind>,
    pub p_values: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np_ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(default = "default_sigmas")]
    pub sigma_values: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise_values: Vec<f64>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_trials")]
    pub trials_per_cell: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub grnm: GrnmConfig,
    #[serde(default)]
    pub wf: WfConfig,
    /// Attach local-minimum certificates. Real Gaussian cells use the
    /// population frame bound σ²/2; other ensembles use a Monte-Carlo
    /// estimate with `frame_samples` pairs.
    #[serde(default)]
    pub certify: bool,
    #[serde(default = "default_frame_samples")]
    pub frame_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub kind: EnsembleKind,
    pub p: usize,
    pub n: usize,
    pub sigma: f64,
    pub noise_sigma: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(QmrError::InvalidConfig(format!("{what} must not be empty")));
        if self.kinds.is_empty() {
            return empty("kinds");
        }
        if self.p_values.is_empty() {
            return empty("p_values");
        }
        if self.sigma_values.is_empty() {
            return empty("sigma_values");
        }
        if self.noise_values.is_empty() {
            return empty("noise_values");
        }
        if self.solvers.is_empty() {
            return empty("solvers");
        }
        match (&self.np_ratios, &self.n_values) {
            (Some(r), None) if !r.is_empty() => {}
            (None, Some(n)) if !n.is_empty() => {}
            _ => {
                return Err(QmrError::InvalidConfig(
                    "give exactly one nonempty list of np_ratios or n_values".into(),
                ))
            }
        }
        if self.trials_per_cell == 0 {
            return Err(QmrError::InvalidConfig("trials_per_cell must be at least 1".into()));
        }
        self.grnm.validate()?;
        self.wf.validate()?;
        Ok(())
    }

    /// Cells in (kind, p, n, sigma, noise) lexicographic order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &p in &self.p_values {
                let ns: Vec<usize> = match (&self.np_ratios, &self.n_values) {
                    (Some(r), _) => r.iter().map(|&q| ((q * p as f64).round() as usize).max(1)).collect(),
                    (None, Some(n)) => n.clone(),
                    (None, None) => Vec::new(),
                };
                for n in ns {
                    for &sigma in &self.sigma_values {
                        for &noise_sigma in &self.noise_values {
                            out.push(Cell {
                                index: out.len(),
                                kind,
                                p,
                                n,
                                sigma,
                                noise_sigma,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One solver run on one trial instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub cell: usize,
    pub solver: SolverKind,
    pub kind: EnsembleKind,
    pub p: usize,
    pub n: usize,
    pub sigma: f64,
    pub noise_sigma: f64,
    pub trial: usize,
    pub seed: u64,
    pub rel_err: f64,
    pub success: bool,
    pub iters_phase1: usize,
    pub iters_phase2: usize,
    pub time_seconds: f64,
    pub final_grad_norm: f64,
    pub certificate_passed: Option<bool>,
    /// Solver status, or `error: …` when the trial could not run.
    pub status: String,
}

pub const CSV_COLUMNS: [&str; 18] = [
    "experiment",
    "cell",
    "solver",
    "kind",
    "p",
    "n",
    "sigma",
    "noise_sigma",
    "trial",
    "seed",
    "rel_err",
    "success",
    "iters_phase1",
    "iters_phase2",
    "time_seconds",
    "final_grad_norm",
    "certificate_passed",
    "status",
];

/// Runs every (cell, trial, solver) combination. Trials run in parallel on
/// `jobs` worker threads (rayon's default when `None`); the returned records
/// are ordered by (cell, trial, solver) and do not depend on the worker
/// count, apart from `time_seconds`.
pub fn run_experiment(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let cells = spec.cells();
    let tasks: Vec<(Cell, usize)> = cells
        .iter()
        .flat_map(|c| (0..spec.trials_per_cell).map(move |t| (*c, t)))
        .collect();
    log::info!(
        "experiment {}: {} cells, {} trials, {} solver(s)",
        spec.name,
        cells.len(),
        tasks.len(),
        spec.solvers.len()
    );
    let run = || -> Vec<TrialRecord> {
        tasks
            .par_iter()
            .flat_map_iter(|&(cell, trial)| run_trial(spec, cell, trial))
            .collect()
    };
    let mut records = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| QmrError::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    records.sort_by_key(|r| (r.cell, r.trial, r.solver));
    log::info!("experiment {}: {} records", spec.name, records.len());
    Ok(records)
}

/// Runs every requested solver on the same generated instance.
pub fn run_trial(spec: &ExperimentSpec, cell: Cell, trial: usize) -> Vec<TrialRecord> {
    let trial_seed = seed::trial_seed(spec.master_seed, cell.index, trial);
    let ens = EnsembleSpec {
        kind: cell.kind,
        p: cell.p,
        n: cell.n,
        sigma: cell.sigma,
        noise_sigma: cell.noise_sigma,
        seed: trial_seed,
    };
    let base = |solver: SolverKind| TrialRecord {
        experiment: spec.name.clone(),
        cell: cell.index,
        solver,
        kind: cell.kind,
        p: cell.p,
        n: cell.n,
        sigma: cell.sigma,
        noise_sigma: cell.noise_sigma,
        trial,
        seed: trial_seed,
        rel_err: f64::NAN,
        success: false,
        iters_phase1: 0,
        iters_phase2: 0,
        time_seconds: 0.0,
        final_grad_norm: f64::NAN,
        certificate_passed: None,
        status: String::new(),
    };
    let failed = |e: QmrError| -> Vec<TrialRecord> {
        spec.solvers
            .iter()
            .map(|&s| TrialRecord {
                status: format!("error: {e}"),
                ..base(s)
            })
            .collect()
    };
    let set = match generate_instance(&ens) {
        Ok(s) => s,
        Err(e) => return failed(e),
    };
    let frame_lower = if spec.certify {
        match frame_lower_for(&set, spec.frame_samples) {
            Ok(v) => Some(v),
            Err(e) => return failed(e),
        }
    } else {
        None
    };
    spec.solvers
        .iter()
        .map(|&solver| {
            let mut rec = base(solver);
            match run_solver(&set, solver, spec, frame_lower) {
                Ok(res) => fill_record(&mut rec, &set, &res),
                Err(e) => rec.status = format!("error: {e}"),
            }
            rec
        })
        .collect()
}

fn frame_lower_for(set: &MeasurementSet, samples: usize) -> Result<f64> {
    let sigma = set.spec().sigma;
    match set.spec().kind {
        EnsembleKind::RealGaussianSymmetric => Ok(0.5 * sigma * sigma),
        _ => {
            let mut rng = seed::stream(set.spec().seed, seed::TAG_FRAME);
            Ok(estimate_frame_bounds(set, samples, &mut rng)?.lower)
        }
    }
}

/// Solves one instance with one solver. GRNM draws its starting point from
/// the instance seed's init stream.
pub fn run_solver(
    set: &MeasurementSet,
    solver: SolverKind,
    spec: &ExperimentSpec,
    frame_lower: Option<f64>,
) -> Result<SolveResult> {
    let mut model = QuadraticResidualModel::new(set);
    let mut res = match solver {
        SolverKind::Grnm => {
            let mut rng = seed::stream(set.spec().seed, seed::TAG_INIT);
            grnm::solve(&mut model, &spec.grnm, &mut rng, None)?
        }
        SolverKind::Wf => wf_solve(&mut model, &spec.wf)?,
    };
    if let Some(lower) = frame_lower {
        res.certificate = Some(certify_local_min(&mut model, res.x_hat.view(), lower)?);
    }
    Ok(res)
}

fn fill_record(rec: &mut TrialRecord, set: &MeasurementSet, res: &SolveResult) {
    let x_hat = crate::ensembles::Signal::new(res.x_hat.clone(), set.domain());
    let rel = x_hat.and_then(|x| relative_error(&x, set.truth()));
    match rel {
        Ok(r) => {
            rec.rel_err = r;
            rec.success = classify_success(r, set.is_noisy());
        }
        Err(e) => rec.status = format!("error: {e}"),
    }
    rec.iters_phase1 = res.phase1_iters;
    rec.iters_phase2 = res.phase2_iters;
    rec.time_seconds = res.wall_time;
    rec.final_grad_norm = res.final_grad_norm;
    rec.certificate_passed = res.certificate.map(|c| c.passed);
    if rec.status.is_empty() {
        rec.status = res.status.name().to_string();
    }
}

/// Writes records as RFC-4180 CSV with a header row; floats use the
/// shortest decimal that round-trips.
pub fn emit_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| QmrError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| QmrError::io(path, e))
}

pub fn parse_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(QmrError::Format {
            path: path.to_path_buf(),
            reason: "unexpected CSV header".into(),
        });
    }
    r.deserialize().map(|row| row.map_err(QmrError::from)).collect()
}

/// Named grids. Without `full`, sizes and trial counts shrink to desk scale
/// (20 trials per cell, p ∈ {50, 100} where p varies).
pub fn preset(name: &str, full: bool) -> Option<ExperimentSpec> {
    use EnsembleKind::*;
    let trials = |large: usize| if full { large } else { 20 };
    let steps = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let k = ((hi - lo) / step).round() as usize;
        (0..=k).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect()
    };
    let ps = |lo: usize, hi: usize, step: usize| -> Vec<usize> { (lo..=hi).step_by(step).collect() };
    let desk_ps = vec![50, 100];
    let base = |name: &str, kind: EnsembleKind| ExperimentSpec {
        name: name.to_string(),
        kinds: vec![kind],
        p_values: vec![if full { 100 } else { 50 }],
        np_ratios: None,
        n_values: None,
        sigma_values: vec![1.0],
        noise_values: vec![0.0, 0.1],
        solvers: default_solvers(),
        trials_per_cell: 20,
        master_seed: 0,
        grnm: GrnmConfig::default(),
        wf: WfConfig::default(),
        certify: false,
        frame_samples: default_frame_samples(),
    };
    let spec = match name {
        "table1" => ExperimentSpec {
            kinds: vec![RealGaussianSymmetric, ComplexGaussianHermitian, ComplexSubGaussianRotationInvariant],
            p_values: vec![if full { 100 } else { 50 }],
            np_ratios: Some(vec![4.0]),
            sigma_values: if full {
                (1..=10).map(f64::from).collect()
            } else {
                vec![1.0, 5.0, 10.0]
            },
            trials_per_cell: trials(100),
            ..base("table1", RealGaussianSymmetric)
        },
        "fig1" => ExperimentSpec {
            np_ratios: Some(steps(1.0, 2.0, 0.1)),
            trials_per_cell: trials(100),
            ..base("fig1", RealGaussianSymmetric)
        },
        "fig2" => ExperimentSpec {
            p_values: if full { ps(100, 500, 50) } else { desk_ps.clone() },
            np_ratios: Some(vec![4.0]),
            trials_per_cell: trials(25),
            ..base("fig2", RealGaussianSymmetric)
        },
        "fig3" => ExperimentSpec {
            np_ratios: Some(steps(1.5, 4.0, 0.25)),
            trials_per_cell: trials(100),
            ..base("fig3", ComplexGaussianHermitian)
        },
        "fig4" => ExperimentSpec {
            p_values: if full { ps(100, 250, 25) } else { desk_ps.clone() },
            np_ratios: Some(vec![4.0]),
            trials_per_cell: trials(25),
            ..base("fig4", ComplexGaussianHermitian)
        },
        "fig5" => ExperimentSpec {
            np_ratios: Some(steps(1.5, 4.0, 0.25)),
            trials_per_cell: trials(100),
            ..base("fig5", ComplexSubGaussianRotationInvariant)
        },
        "fig6" => ExperimentSpec {
            p_values: if full { ps(100, 250, 25) } else { desk_ps },
            np_ratios: Some(vec![4.0]),
            trials_per_cell: trials(25),
            ..base("fig6", ComplexSubGaussianRotationInvariant)
        },
        _ => return None,
    };
    Some(spec)
}

pub const PRESETS: [&str; 7] = ["table1", "fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];
