//! Command-line orchestration: every pipeline stage is a subcommand and
//! the stages communicate through files, so each one can be inspected,
//! rerun or replaced independently.
//!
//! Exit codes: 0 ok, 1 usage error, 2 solver failure, 3 I/O failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::extraction::{self, ControlLawFile, Controller, ControllerForm, ControllerSpec};
use crate::lqr::{lqr_gain, LqrFeedback};
use crate::pdesim::{
    run_closed_loop, write_trace_csv, FeedbackLaw, Mesh, SimOptions, SimTrace, ZeroControl,
};
use crate::problem::{HeatControlProblem, ProblemConfig};
use crate::sdpsolver::{self, ConicProblem, PseudoMoments, SdpOptions, SolveStatus};
use crate::weakform;
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "momheat",
    about = "Moment-based boundary control of the 1D semilinear heat equation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble and solve the moment relaxation; write pseudo-moments.
    Relax(RelaxArgs),
    /// Extract a feedback controller from a pseudo-moment dump.
    Extract(ExtractArgs),
    /// Simulate the closed loop for a controller file (or zero control).
    Simulate(SimulateArgs),
    /// Solve the LQR baseline and write its gain as a controller file.
    Lqr(LqrArgs),
    /// Simulate a controller against the LQR baseline and report both.
    Compare(CompareArgs),
    /// Grid-search controller hyperparameters by simulated cost.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RelaxArgs {
    /// Problem configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output pseudo-moments file.
    #[arg(long)]
    out: PathBuf,
    /// Override the relaxation degree from the config.
    #[arg(long)]
    degree: Option<u32>,
    /// Dump the assembled (A, b, c, layout) in sparse text form.
    #[arg(long)]
    dump_program: Option<PathBuf>,
    /// Export the conic problem in sparse SDPA interchange format.
    #[arg(long)]
    export_sdpa: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Pseudo-moments file from `relax`.
    #[arg(long)]
    moments: PathBuf,
    /// Output controller file.
    #[arg(long)]
    out: PathBuf,
    /// Kernel form: general | linear | semilinear.
    #[arg(long)]
    form: String,
    /// Kernel degree m.
    #[arg(long, default_value_t = 0)]
    m: u32,
    /// Number of time test powers minus one.
    #[arg(long)]
    p: u32,
    /// Semilinear exponent r (>= 2).
    #[arg(long)]
    r: Option<u32>,
    /// Semilinear second-kernel degree m_r.
    #[arg(long)]
    mr: Option<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Controller file; zero control when omitted.
    #[arg(long)]
    controller: Option<PathBuf>,
    /// Output prefix: writes <prefix>_y.csv, <prefix>_u.csv, <prefix>_summary.toml.
    #[arg(long, default_value = "run")]
    out_prefix: String,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Subsampling stride for the CSV output.
    #[arg(long, default_value_t = 20)]
    stride: usize,
}

#[derive(Args)]
struct LqrArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    h: Option<f64>,
    /// Also store the Riccati matrix in the controller file.
    #[arg(long, default_value_t = false)]
    with_riccati: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    /// Controller under test.
    #[arg(long)]
    controller: PathBuf,
    /// LQR controller file; solved on the fly when omitted.
    #[arg(long)]
    lqr_controller: Option<PathBuf>,
    #[arg(long, default_value = "cmp")]
    out_prefix: String,
    /// Optional report file (TOML).
    #[arg(long)]
    report: Option<PathBuf>,
    /// SDP lower bound to include in the report (from `relax` output).
    #[arg(long)]
    moments: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    stride: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    moments: PathBuf,
    /// Comma-separated forms to try.
    #[arg(long, default_value = "linear,semilinear")]
    forms: String,
    /// Max kernel degree m to try.
    #[arg(long, default_value_t = 1)]
    max_m: u32,
    /// Max second-kernel degree for semilinear.
    #[arg(long, default_value_t = 1)]
    max_mr: u32,
    /// Semilinear exponent r.
    #[arg(long, default_value_t = 3)]
    r: u32,
    /// Best controller is written here.
    #[arg(long)]
    out: PathBuf,
    /// Simulation horizon for ranking.
    #[arg(long)]
    horizon: Option<f64>,
}

/// Process exit codes, per the documented contract.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_IO: i32 = 3;

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Solver(_) | Error::Linalg(_) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

/// Entry point used by the binary: parses arguments, runs, maps errors to
/// exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with status 0.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Relax(args) => cmd_relax(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Lqr(args) => cmd_lqr(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn load_config(path: &Path) -> Result<(ProblemConfig, HeatControlProblem)> {
    let cfg = ProblemConfig::from_path(path)?;
    let problem = cfg.problem()?;
    Ok((cfg, problem))
}

fn thread_pool_size() -> usize {
    std::env::var("MOMHEAT_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn cmd_relax(args: RelaxArgs) -> Result<i32> {
    let (cfg, problem) = load_config(&args.config)?;
    let mut relax = cfg.relaxation();
    if let Some(d) = args.degree {
        relax.degree = d;
    }
    relax.validate(&problem)?;
    let program = weakform::assemble(&problem, &relax)?;
    eprintln!(
        "assembled degree-{} relaxation: {} rows, {} moments, {} cone blocks",
        relax.degree,
        program.num_rows(),
        program.num_cols(),
        program.cones.len()
    );
    if let Some(path) = &args.dump_program {
        std::fs::write(path, weakform::dump_program(&program))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    let conic = ConicProblem::from_program(&program);
    if let Some(path) = &args.export_sdpa {
        std::fs::write(path, sdpsolver::export_interchange(&conic))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    let options = SdpOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        cone_slack: cfg.solver.cone_slack,
        ..Default::default()
    };
    let solution = sdpsolver::solve_conic(&conic, &options)?;
    eprintln!(
        "solve: status {} objective {:.6e} iterations {}",
        solution.status.name(),
        solution.objective,
        solution.iterations
    );
    let pm = PseudoMoments::from_solution(&problem, &relax, &program, &solution);
    pm.save(&args.out)?;
    println!(
        "lower bound {:.9e} ({})",
        solution.objective,
        solution.status.name()
    );
    Ok(match solution.status {
        SolveStatus::Optimal => EXIT_OK,
        _ => EXIT_SOLVER,
    })
}

fn parse_form(args: &ExtractArgs) -> Result<ControllerForm> {
    match args.form.as_str() {
        "general" => Ok(ControllerForm::General { m: args.m }),
        "linear" => Ok(ControllerForm::Linear { m: args.m }),
        "semilinear" => {
            let r = args
                .r
                .ok_or_else(|| Error::InvalidConfig("semilinear needs --r".into()))?;
            let m_r = args
                .mr
                .ok_or_else(|| Error::InvalidConfig("semilinear needs --mr".into()))?;
            Ok(ControllerForm::Semilinear { m: args.m, r, m_r })
        }
        other => Err(Error::InvalidConfig(format!("unknown form '{other}'"))),
    }
}

fn cmd_extract(args: ExtractArgs) -> Result<i32> {
    let pm = PseudoMoments::load(&args.moments)?;
    let spec = ControllerSpec {
        form: parse_form(&args)?,
        p: args.p,
    };
    let controller = extraction::extract(&pm, &spec)?;
    println!(
        "extracted {} kernel: residual {:.3e}, mode {:?}, rank {}",
        controller.form.name(),
        controller.residual,
        controller.solve_mode,
        controller.rank
    );
    println!("gamma = {:?}", controller.gamma);
    if let Some(delta) = &controller.delta {
        println!("delta = {:?}", delta);
    }
    ControlLawFile::Extracted(controller).save(&args.out)?;
    Ok(EXIT_OK)
}

/// Loads a control law file and turns it into a simulator feedback.
fn law_from_file(
    path: &Path,
    problem: &HeatControlProblem,
    mesh: &Mesh,
) -> Result<Box<dyn FeedbackLaw + Send + Sync>> {
    match ControlLawFile::load(path)? {
        ControlLawFile::Extracted(ctrl) => Ok(Box::new(ctrl)),
        ControlLawFile::Lqr { gain_m, h, .. } => {
            if (h - mesh.h).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "LQR gain was computed for h = {h}, simulation uses h = {}",
                    mesh.h
                )));
            }
            Ok(Box::new(LqrFeedback::from_gain(gain_m, problem, mesh)?))
        }
    }
}

fn sim_options(cfg: &ProblemConfig, h: Option<f64>, dt: Option<f64>, horizon: Option<f64>) -> (f64, SimOptions) {
    let h = h.unwrap_or(cfg.sim.h);
    let opts = SimOptions {
        dt: dt.unwrap_or(cfg.sim.dt),
        horizon: horizon.unwrap_or(cfg.sim.horizon),
        ..Default::default()
    };
    (h, opts)
}

fn write_summary(
    path: &Path,
    problem: &HeatControlProblem,
    mesh: &Mesh,
    trace: &SimTrace,
    controller: &str,
) -> Result<()> {
    let text = format!
(
        "controller = {controller:?}\nfinal_cost = {:e}\nhorizon = {:e}\nblowup = {}\nfinal_sup_norm = {:e}\ninitial_sup_norm = {:e}\nrecomputed_cost = {:e}\n",
        trace.cost,
        trace.times.last().copied().unwrap_or(0.0),
        trace
            .blowup
            .map(|t| format!("{t:e}"))
            .unwrap_or_else(|| "false".into()),
        trace.final_sup_norm(),
        trace.initial_sup_norm(),
        trace.compute_cost(problem, mesh),
    );
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32> {
    let (cfg, problem) = load_config(&args.config)?;
    let (h, opts) = sim_options(&cfg, args.h, args.dt, args.horizon);
    let mesh = Mesh::uniform(h)?;
    let law: Box<dyn FeedbackLaw + Send + Sync> = match &args.controller {
        Some(path) => law_from_file(path, &problem, &mesh)?,
        None => Box::new(ZeroControl),
    };
    let trace = run_closed_loop(&problem, &mesh, law.as_ref(), &opts)?;
    let prefix = &args.out_prefix;
    write_trace_csv(
        &trace,
        &mesh,
        args.stride,
        Path::new(&format!("{prefix}_y.csv")),
        Path::new(&format!("{prefix}_u.csv")),
    )?;
    write_summary(
        Path::new(&format!("{prefix}_summary.toml")),
        &problem,
        &mesh,
        &trace,
        &law.describe(),
    )?;
    match trace.blowup {
        Some(t) => println!("blow-up at t = {t:.4}; cost up to blow-up {:.6e}", trace.cost),
        None => println!("cost {:.6e} over [0, {:.3}]", trace.cost, trace.times.last().unwrap()),
    }
    Ok(EXIT_OK)
}

fn cmd_lqr(args: LqrArgs) -> Result<i32> {
    let (cfg, problem) = load_config(&args.config)?;
    let h = args.h.unwrap_or(cfg.sim.h);
    let mesh = Mesh::uniform(h)?;
    let solution = lqr_gain(&problem, &mesh)?;
    println!(
        "ARE residual {:.3e}, closed-loop abscissa {:.4}",
        solution.residual, solution.abscissa
    );
    let riccati = args.with_riccati.then(|| {
        let n = solution.riccati.nrows();
        let mut flat = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                flat.push(solution.riccati[(i, j)]);
            }
        }
        flat
    });
    ControlLawFile::Lqr {
        gain_m: solution.gain_m.iter().copied().collect(),
        h,
        riccati,
    }
    .save(&args.out)?;
    Ok(EXIT_OK)
}

fn cmd_compare(args: CompareArgs) -> Result<i32> {
    let (cfg, problem) = load_config(&args.config)?;
    let (h, opts) = sim_options(&cfg, None, None, None);
    let mesh = Mesh::uniform(h)?;

    let law = law_from_file(&args.controller, &problem, &mesh)?;
    let trace = run_closed_loop(&problem, &mesh, law.as_ref(), &opts)?;

    let lqr_law: Box<dyn FeedbackLaw + Send + Sync> = match &args.lqr_controller {
        Some(path) => law_from_file(path, &problem, &mesh)?,
        None => {
            let solution = lqr_gain(&problem, &mesh)?;
            Box::new(LqrFeedback::new(&solution, &problem, &mesh))
        }
    };
    let lqr_trace = run_closed_loop(&problem, &mesh, lqr_law.as_ref(), &opts)?;

    let prefix = &args.out_prefix;
    write_trace_csv(
        &trace,
        &mesh,
        args.stride,
        Path::new(&format!("{prefix}_moment_y.csv")),
        Path::new(&format!("{prefix}_moment_u.csv")),
    )?;
    write_trace_csv(
        &lqr_trace,
        &mesh,
        args.stride,
        Path::new(&format!("{prefix}_lqr_y.csv")),
        Path::new(&format!("{prefix}_lqr_u.csv")),
    )?;

    let bound = match &args.moments {
        Some(path) => Some(PseudoMoments::load(path)?.objective),
        None => None,
    };
    let gap = (trace.cost - lqr_trace.cost) / lqr_trace.cost;
    println!("moment controller cost {:.6e}", trace.cost);
    println!("lqr cost              {:.6e}", lqr_trace.cost);
    println!("relative gap          {:+.3}%", 100.0 * gap);
    if let Some(b) = bound {
        println!("sdp lower bound       {:.6e}", b);
    }
    for (name, tr) in [("moment", &trace), ("lqr", &lqr_trace)] {
        if let Some(t) = tr.blowup {
            println!("{name} run blew up at t = {t:.4}");
        }
    }
    if let Some(path) = &args.report {
        let mut text = String::new();
        use std::fmt::Write as _;
        let _ = writeln!(text, "degree = {}", cfg.relaxation_degree);
        let _ = writeln!(text, "moment_cost = {:e}", trace.cost);
        let _ = writeln!(text, "lqr_cost = {:e}", lqr_trace.cost);
        let _ = writeln!(text, "relative_gap = {:e}", gap);
        if let Some(b) = bound {
            let _ = writeln!(text, "sdp_lower_bound = {:e}", b);
        }
        let _ = writeln!(
            text,
            "moment_blowup = {}",
            trace.blowup.map(|t| t.to_string()).unwrap_or_else(|| "false".into())
        );
        let _ = writeln!(
            text,
            "lqr_blowup = {}",
            lqr_trace
                .blowup
                .map(|t| t.to_string())
                .unwrap_or_else(|| "false".into())
        );
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let (cfg, problem) = load_config(&args.config)?;
    let pm = PseudoMoments::load(&args.moments)?;
    let d = pm.degree;
    let (h, mut opts) = sim_options(&cfg, None, None, args.horizon);
    opts.extend_until_increment = None;
    let mesh = Mesh::uniform(h)?;

    // Candidate grid honoring the degree budgets.
    let mut candidates: Vec<ControllerSpec> = Vec::new();
    for form_name in args.forms.split(',') {
        match form_name.trim() {
            "linear" => {
                for m in 0..=args.max_m {
                    if m + 1 >= d {
                        continue;
                    }
                    for p in 1..=(d - m - 1) {
                        candidates.push(ControllerSpec {
                            form: ControllerForm::Linear { m },
                            p,
                        });
                    }
                }
            }
            "general" => {
                for m in 0..=args.max_m {
                    if m > d {
                        continue;
                    }
                    for p in 1..=(d - 1).min(d - m) {
                        candidates.push(ControllerSpec {
                            form: ControllerForm::General { m },
                            p,
                        });
                    }
                }
            }
            "semilinear" => {
                let r = args.r;
                for m in 0..=args.max_m {
                    for m_r in 0..=args.max_mr {
                        if m + 1 >= d || m_r + r >= d {
                            continue;
                        }
                        let pmax = (d - m - 1).min(d - m_r - r);
                        for p in 1..=pmax {
                            candidates.push(ControllerSpec {
                                form: ControllerForm::Semilinear { m, r, m_r },
                                p,
                            });
                        }
                    }
                }
            }
            other => {
                return Err(Error::InvalidConfig(format!("unknown form '{other}'")));
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::InvalidConfig(
            "no extraction candidates within the degree budget".into(),
        ));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_pool_size())
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    let results: Vec<(ControllerSpec, Result<(Controller, SimTrace)>)> = pool.install(|| {
        use rayon::prelude::*;
        candidates
            .par_iter()
            .map(|spec| {
                let outcome = extraction::extract(&pm, spec).and_then(|ctrl| {
                    let trace = run_closed_loop(&problem, &mesh, &ctrl, &opts)?;
                    Ok((ctrl, trace))
                });
                (*spec, outcome)
            })
            .collect()
    });

    let mut ranked: Vec<(ControllerSpec, Controller, SimTrace)> = Vec::new();
    for (spec, outcome) in results {
        match outcome {
            Ok((ctrl, trace)) => {
                if trace.blowup.is_none() {
                    ranked.push((spec, ctrl, trace));
                } else {
                    eprintln!(
                        "candidate {:?} p={} blew up at t = {:.3}",
                        spec.form,
                        spec.p,
                        trace.blowup.unwrap()
                    );
                }
            }
            Err(e) => eprintln!("candidate {:?} p={} failed: {e}", spec.form, spec.p),
        }
    }
    if ranked.is_empty() {
        return Err(Error::Solver("every sweep candidate blew up".into()));
    }
    ranked.sort_by(|a, b| a.2.cost.partial_cmp(&b.2.cost).unwrap());
    println!("rank | form | m | p | cost | final sup norm");
    for (i, (spec, _, trace)) in ranked.iter().enumerate().take(10) {
        println!(
            "{:4} | {:10} | {:?} | {} | {:.6e} | {:.3e}",
            i + 1,
            spec.form.name(),
            spec.form,
            spec.p,
            trace.cost,
            trace.final_sup_norm()
        );
    }
    let best = &ranked[0];
    println!(
        "best: {} form {:?} p={} cost {:.6e}",
        best.0.form.name(),
        best.0.form,
        best.0.p,
        best.2.cost
    );
    ControlLawFile::Extracted(best.1.clone()).save(&args.out)?;
    Ok(EXIT_OK)
}
