use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use qmr::diagnostics::finite_difference_check;
use qmr::ensembles::{estimate_frame_bounds, generate_instance, EnsembleKind, EnsembleSpec, Signal};
use qmr::grnm::{self, certify_local_min, GrnmConfig, SolveResult};
use qmr::harness::{emit_csv, preset, run_experiment, ExperimentSpec, SolverKind, TrialRecord, PRESETS};
use qmr::io::{read_instance, write_instance, write_trace_csv};
use qmr::metrics::{aggregate, classify_success, relative_error, TrialOutcome};
use qmr::objective::QuadraticResidualModel;
use qmr::plot::{emit_plot, PlotKind};
use qmr::wf::{wf_solve, WfConfig};
use qmr::{seed, QmrError, Result};

#[derive(Parser)]
#[command(name = "qmr", version, about = "Quadratic measurements regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance and write it to a file.
    Generate(GenerateArgs),
    /// Validate analytic derivatives on an instance.
    Check(CheckArgs),
    /// Solve an instance with GRNM or the WF baseline.
    Solve(SolveArgs),
    /// Run an experiment grid and write CSV, SVG and plot-data files.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Real,
    Complex,
    Subgaussian,
}

impl From<KindArg> for EnsembleKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Real => EnsembleKind::RealGaussianSymmetric,
            KindArg::Complex => EnsembleKind::ComplexGaussianHermitian,
            KindArg::Subgaussian => EnsembleKind::ComplexSubGaussianRotationInvariant,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Compare gradient and Hessian against central finite differences.
    #[arg(long)]
    fd_check: bool,
    /// Number of random points to check.
    #[arg(long, default_value_t = 5)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Grnm,
    Wf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "grnm")]
    solver: SolverArg,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    mu1: f64,
    #[arg(long, default_value_t = 0.1)]
    mu2: f64,
    #[arg(long, default_value_t = 0.1)]
    eps1: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha1: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha2: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    /// WF base step.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Seed for the GRNM starting point (defaults to the instance seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Check the local-minimum certificate at the returned point.
    #[arg(long)]
    certify: bool,
    /// Sampled pairs for the frame-bound estimate used by --certify.
    #[arg(long, default_value_t = 10_000)]
    frame_samples: usize,
    /// Use the population bound σ²/2 instead of a Monte-Carlo estimate.
    #[arg(long)]
    analytic_frame: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment description.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    /// Full-size grids and trial counts for presets.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, env = "QMR_JOBS")]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Check(a) => check(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let spec = EnsembleSpec {
        kind: a.kind.into(),
        p: a.p,
        n: a.n,
        sigma: a.sigma,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let set = generate_instance(&spec)?;
    write_instance(&set, &a.out)?;
    println!(
        "wrote {} ({}, p={}, n={}, working dimension {})",
        a.out.display(),
        spec.kind,
        spec.p,
        spec.n,
        set.dim()
    );
    Ok(ExitCode::SUCCESS)
}

fn check(a: CheckArgs) -> Result<ExitCode> {
    let set = read_instance(&a.instance)?;
    if !a.fd_check {
        println!("instance ok: {} matrices of order {}", set.n(), set.dim());
        return Ok(ExitCode::SUCCESS);
    }
    let mut model = QuadraticResidualModel::new(&set);
    let mut rng = seed::stream(a.seed, seed::TAG_INIT);
    let scale = set.truth().values().dot(set.truth().values()).sqrt().max(1.0);
    let mut all = true;
    for i in 0..a.points {
        let x: Array1<f64> = (0..set.dim())
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal) / (set.dim() as f64).sqrt())
            .collect();
        let rep = finite_difference_check(&mut model, x.view())?;
        let ok = rep.passed();
        all &= ok;
        println!(
            "point {i}: gradient rel err {:.3e}, hessian rel err {:.3e} [{}]",
            rep.gradient_rel_err,
            rep.hessian_rel_err,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("finite-difference check: {}", if all { "PASS" } else { "FAIL" });
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn solve(a: SolveArgs) -> Result<ExitCode> {
    let set = read_instance(&a.instance)?;
    let mut model = QuadraticResidualModel::new(&set);
    let mut res: SolveResult = match a.solver {
        SolverArg::Grnm => {
            let cfg = GrnmConfig {
                eps1: a.eps1,
                eps: a.eps,
                beta: a.beta,
                delta: a.delta,
                mu1: a.mu1,
                mu2: a.mu2,
                alpha1: a.alpha1,
                alpha2: a.alpha2,
                max_iters: a.max_iters,
                ..GrnmConfig::default()
            };
            let mut rng = seed::stream(a.seed.unwrap_or(set.spec().seed), seed::TAG_INIT);
            grnm::solve(&mut model, &cfg, &mut rng, None)?
        }
        SolverArg::Wf => {
            let cfg = WfConfig {
                alpha: a.alpha,
                max_iters: a.max_iters,
                eps: a.eps,
                ..WfConfig::default()
            };
            wf_solve(&mut model, &cfg)?
        }
    };
    if a.certify {
        let sigma = set.spec().sigma;
        let lower = if a.analytic_frame {
            0.5 * sigma * sigma
        } else {
            let mut rng = seed::stream(set.spec().seed, seed::TAG_FRAME);
            estimate_frame_bounds(&set, a.frame_samples, &mut rng)?.lower
        };
        res.certificate = Some(certify_local_min(&mut model, res.x_hat.view(), lower)?);
    }
    if let Some(path) = &a.trace {
        write_trace_csv(&res.trace, path)?;
    }
    let x_hat = Signal::new(res.x_hat.clone(), set.domain())?;
    let rel = relative_error(&x_hat, set.truth())?;
    println!("status            {}", res.status);
    println!("iterations        {} (phase I) + {} (phase II)", res.phase1_iters, res.phase2_iters);
    println!("final f           {:e}", res.final_f);
    println!("final |g|         {:e}", res.final_grad_norm);
    println!("relative error    {:e}", rel);
    println!("success           {}", classify_success(rel, set.is_noisy()));
    println!("time (s)          {:.4}", res.wall_time);
    if let Some(c) = res.certificate {
        println!(
            "certificate       {} (|S| = {:e}, threshold = {:e}, lambda_lower = {})",
            if c.passed { "passed" } else { "not passed" },
            c.s_norm,
            c.threshold,
            c.lambda_lower_est
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    let mut spec: ExperimentSpec = match (&a.config, &a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| QmrError::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)?
        }
        (None, Some(name)) => preset(name, a.full)
            .ok_or_else(|| QmrError::InvalidConfig(format!("unknown preset {name}")))?,
        (None, None) => {
            return Err(QmrError::InvalidConfig("give --config or --preset".into()));
        }
    };
    if let Some(s) = a.seed {
        spec.master_seed = s;
    }
    if let Some(t) = a.trials {
        spec.trials_per_cell = t;
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| QmrError::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let records = run_experiment(&spec, a.jobs)?;
    let csv_path = a.out_dir.join(format!("{}.csv", spec.name));
    emit_csv(&records, &csv_path)?;
    println!("wrote {} ({} records)", csv_path.display(), records.len());

    let mut kinds = Vec::new();
    let n_axis = spec.np_ratios.as_ref().map_or(0, Vec::len) + spec.n_values.as_ref().map_or(0, Vec::len);
    if n_axis > 1 {
        kinds.push(PlotKind::SuccessVsRatio);
    }
    if spec.p_values.len() > 1 {
        kinds.extend([PlotKind::ErrVsP, PlotKind::TimeVsP]);
    }
    if spec.sigma_values.len() > 1 {
        kinds.push(PlotKind::ErrVsSigma);
    }
    for kind in kinds {
        let path = a.out_dir.join(format!("{}.{}.svg", spec.name, kind.slug()));
        emit_plot(&records, kind, &path)?;
        println!("wrote {}", path.display());
    }
    print_summary(&records);
    Ok(ExitCode::SUCCESS)
}

fn print_summary(records: &[TrialRecord]) {
    let mut groups: std::collections::BTreeMap<(usize, SolverKind), Vec<&TrialRecord>> = Default::default();
    for r in records {
        groups.entry((r.cell, r.solver)).or_default().push(r);
    }
    println!(
        "{:>4} {:>6} {:<40} {:>5} {:>6} {:>6} {:>6} {:>8} {:>11} {:>9}",
        "cell", "solver", "kind", "p", "n", "sigma", "noise", "success", "mean relerr", "mean time"
    );
    for ((cell, solver), recs) in groups {
        let outcomes: Vec<TrialOutcome> = recs
            .iter()
            .map(|r| TrialOutcome {
                rel_err: r.rel_err,
                success: r.success,
                wall_time: r.time_seconds,
                iters: (r.iters_phase1, r.iters_phase2),
                final_grad_norm: r.final_grad_norm,
                certificate_passed: r.certificate_passed,
            })
            .collect();
        let Ok(s) = aggregate(&outcomes) else { continue };
        let r = recs[0];
        println!(
            "{:>4} {:>6} {:<40} {:>5} {:>6} {:>6} {:>6} {:>8.2} {:>11.3e} {:>9.4}",
            cell,
            solver.name(),
            r.kind.name(),
            r.p,
            r.n,
            r.sigma,
            r.noise_sigma,
            s.success_rate,
            s.mean_rel_err,
            s.mean_time
        );
    }
}

