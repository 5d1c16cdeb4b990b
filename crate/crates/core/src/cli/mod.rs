//! Command-line experiment harness behind the `fracevo` binary.
//!
//! Exit status: 0 when every enabled assertion holds, 1 for configuration
//! errors (including non-commuting operators handed to the permutable
//! solver), 2 for failed assertions and non-convergent series.

pub mod config;
mod output;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::closedform::{
    commutator, solve_classical_nonpermutable, solve_classical_permutable, solve_nonpermutable, solve_permutable,
};
use crate::error::Error;
use crate::grid::VectorTrajectory;
use crate::mlfunc::{ml_scalar_with, MlControl, MlParams};
use crate::oracle::{adams_solve, residual, InteriorSamples, IvpSpec};
use crate::perturb::bounds::{growth_bound_report, MARGIN_TOL};
use crate::perturb::{solve_ivp, SeriesControl, TruncationReport};

pub use config::{ConfigError, ExperimentConfig, Outputs, SolverKind, Tolerances};

#[derive(Parser, Debug)]
#[command(
    name = "fracevo",
    version,
    about = "Second-order fractional evolution equations with perturbed generators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the configured solvers with residual, cross-solver and growth-bound checks.
    Solve(RunArgs),
    /// Check the growth bounds of the perturbed cosine and sine families.
    BoundsCheck(RunArgs),
    /// Run at least two solvers and report their pairwise deviations.
    Compare(RunArgs),
    /// Print E_{alpha,beta}(z) with its certified truncation bound.
    #[command(allow_negative_numbers = true)]
    MlEval { alpha: f64, beta: f64, z: f64 },
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving the CSV tables and the report.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for `"random"` initial data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Treat warnings as failures.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    ConfigError = 1,
    AssertionFailed = 2,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Assertion(String),
}

impl Failure {
    /// Bad input maps to a configuration error, numerical trouble to an
    /// assertion failure.
    fn from_error(context: &str, e: Error) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            Error::InvalidParameter { .. } | Error::DimensionMismatch { .. } | Error::NotPermutable { .. } => {
                Failure::Config(msg)
            }
            _ => Failure::Assertion(msg),
        }
    }
}

/// One solver's trajectory with its truncation and residual diagnostics.
pub(crate) struct SolverRun {
    pub kind: SolverKind,
    pub u: VectorTrajectory,
    pub truncation: Vec<(&'static str, TruncationReport)>,
    pub residual: Option<InteriorSamples<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Solve,
    BoundsCheck,
    Compare,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::BoundsCheck => "bounds-check",
            Mode::Compare => "compare",
        }
    }
}

/// Parses the process arguments and runs the command.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Status::ConfigError
            } else {
                Status::Success
            }
            .into();
        }
    };
    run(&cli).into()
}

pub fn run(cli: &Cli) -> Status {
    let outcome = match &cli.command {
        Command::MlEval { alpha, beta, z } => ml_eval(*alpha, *beta, *z),
        Command::Solve(args) => execute(Mode::Solve, args),
        Command::BoundsCheck(args) => execute(Mode::BoundsCheck, args),
        Command::Compare(args) => execute(Mode::Compare, args),
    };
    match outcome {
        Ok(()) => Status::Success,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            Status::ConfigError
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            Status::AssertionFailed
        }
    }
}

fn ml_eval(alpha: f64, beta: f64, z: f64) -> Result<(), Failure> {
    let params = MlParams::new(alpha, beta).map_err(|e| Failure::from_error("ml-eval", e))?;
    let sum = ml_scalar_with(params, z, &MlControl::default()).map_err(|e| Failure::from_error("ml-eval", e))?;
    println!("E_({alpha},{beta})({z}) = {}", output::num(sum.value));
    println!(
        "terms = {}, certified remainder <= {:.3e}",
        sum.terms, sum.remainder_bound
    );
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("FRACEVO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("FRACEVO_THREADS must be a positive integer, got `{raw}`")))?;
    // A second call in the same process finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn series_control(cfg: &ExperimentConfig) -> Result<SeriesControl, Failure> {
    let ctl = SeriesControl::for_problem(cfg.alpha, &cfg.a, &cfg.b, &cfg.f, &cfg.grid, cfg.tolerances.series_tol)
        .map_err(|e| Failure::from_error("series control", e))?;
    Ok(match cfg.envelope {
        Some(env) => ctl.with_envelope(env),
        None => ctl,
    })
}

fn run_solver(kind: SolverKind, cfg: &ExperimentConfig, ctl: &SeriesControl) -> crate::Result<SolverRun> {
    let (alpha, a, f, x, y, grid) = (cfg.alpha, &cfg.a, &cfg.f, &cfg.x, &cfg.y, &cfg.grid);
    let constant_b = || {
        cfg.b
            .as_constant()
            .ok_or_else(|| crate::error::invalid("B", format!("solver `{kind}` requires a constant B")))
    };
    let closed = |s: crate::closedform::ClosedFormSolution| {
        let truncation = s.truncation.map(|t| vec![("word sum", t)]).unwrap_or_default();
        (s.u, truncation)
    };
    let (u, truncation) = match kind {
        SolverKind::Series => {
            let s = solve_ivp(alpha, a, &cfg.b, f, x, y, grid, ctl)?;
            (
                s.u,
                vec![("cosine", s.cosine), ("sine", s.sine), ("particular", s.particular)],
            )
        }
        SolverKind::Nonpermutable => closed(solve_nonpermutable(alpha, a, constant_b()?, f, x, y, grid, ctl)?),
        SolverKind::Permutable => closed(solve_permutable(alpha, a, constant_b()?, f, x, y, grid)?),
        SolverKind::Classical => {
            let b = constant_b()?;
            if commutator(a, b)?.is_zero {
                closed(solve_classical_permutable(a, b, f, x, y, grid)?)
            } else {
                closed(solve_classical_nonpermutable(a, b, f, x, y, grid, ctl)?)
            }
        }
        SolverKind::Oracle => (adams_solve(&ivp_spec(cfg)?)?, Vec::new()),
    };
    Ok(SolverRun {
        kind,
        u,
        truncation,
        residual: None,
    })
}

fn ivp_spec(cfg: &ExperimentConfig) -> crate::Result<IvpSpec> {
    IvpSpec::new(
        cfg.alpha,
        cfg.a.clone(),
        cfg.b.clone(),
        cfg.f.clone(),
        cfg.x.clone(),
        cfg.y.clone(),
        cfg.grid,
    )
}

fn fmt_vec(v: &nalgebra::DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|c| format!("{c:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn execute(mode: Mode, args: &RunArgs) -> Result<(), Failure> {
    configure_threads()?;
    let cfg = ExperimentConfig::load(&args.config, args.seed).map_err(|e| Failure::Config(e.to_string()))?;
    if args.strict {
        if let Some(w) = cfg.warnings.first() {
            return Err(Failure::Config(format!("{w} (--strict)")));
        }
    }
    if mode == Mode::Compare && cfg.solvers.len() < 2 {
        return Err(Failure::Config(
            ConfigError {
                field: "solvers.list".into(),
                reason: "compare needs at least two solvers".into(),
            }
            .to_string(),
        ));
    }
    let tol = cfg.tolerances;
    let mut warnings = cfg.warnings.clone();
    let mut failures: Vec<String> = Vec::new();
    let mut sections: Vec<(String, Vec<String>)> = Vec::new();

    let ctl = series_control(&cfg)?;
    sections.push((
        format!("fracevo {}", mode.name()),
        vec![
            format!(
                "alpha = {}, T = {}, N = {}, dim = {}",
                cfg.alpha.value(),
                cfg.grid.t_end(),
                cfg.grid.steps(),
                cfg.dim()
            ),
            format!("x = {}, y = {}", fmt_vec(&cfg.x), fmt_vec(&cfg.y)),
            format!(
                "envelope M = {:.6e}, omega = {:.6e} ({})",
                ctl.envelope.m(),
                ctl.envelope.omega(),
                if cfg.envelope.is_some() {
                    "configured"
                } else {
                    "estimated"
                }
            ),
            format!("K_t = {:.6e}, N_t = {:.6e}", ctl.k_t, ctl.n_t),
            format!(
                "series_tol = {:e}, quad_assert_tol = {:e}, cross_tol = {:e}",
                tol.series_tol, tol.quad_assert_tol, tol.cross_tol
            ),
        ],
    ));

    let mut runs: Vec<SolverRun> = Vec::new();
    if mode != Mode::BoundsCheck {
        runs = cfg
            .solvers
            .par_iter()
            .map(|&k| run_solver(k, &cfg, &ctl).map_err(|e| (k, e)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|(k, e)| Failure::from_error(&format!("solver {k}"), e))?;
        for r in &runs {
            if r.u.values().iter().any(|v| v.iter().any(|c| !c.is_finite())) {
                return Err(Failure::Assertion(format!(
                    "solver {} produced non-finite values",
                    r.kind
                )));
            }
        }
        let mut lines = Vec::new();
        for r in &runs {
            let trunc: Vec<String> = r
                .truncation
                .iter()
                .map(|(name, t)| format!("{name}: {} terms, remainder <= {:.3e}", t.terms, t.remainder))
                .collect();
            lines.push(if trunc.is_empty() {
                format!("{}: no series truncation", r.kind)
            } else {
                format!("{}: {}", r.kind, trunc.join("; "))
            });
        }
        sections.push(("series truncation".into(), lines));
    }

    if mode == Mode::Solve {
        let spec = ivp_spec(&cfg).map_err(|e| Failure::from_error("problem", e))?;
        let mut lines = Vec::new();
        for r in &mut runs {
            let res = residual(&r.u, &spec).map_err(|e| Failure::from_error("residual", e))?;
            let max = res.max();
            if !max.is_finite() || max > tol.quad_assert_tol {
                failures.push(format!(
                    "residual: solver {} max residual {max:.3e} exceeds quad_assert_tol {:e}",
                    r.kind, tol.quad_assert_tol
                ));
            }
            lines.push(format!("{}: max interior residual {max:.6e}", r.kind));
            r.residual = Some(res);
        }
        sections.push(("residuals".into(), lines));
    }

    if mode != Mode::BoundsCheck {
        let mut lines = Vec::new();
        for (i, a) in runs.iter().enumerate() {
            for b in &runs[i + 1..] {
                let d =
                    a.u.max_deviation(&b.u)
                        .map_err(|e| Failure::from_error("cross-check", e))?;
                if !(d <= tol.cross_tol) {
                    failures.push(format!(
                        "cross-check: {} vs {} deviation {d:.3e} exceeds cross_tol {:e}",
                        a.kind, b.kind, tol.cross_tol
                    ));
                }
                lines.push(format!("{} vs {}: max deviation {d:.6e}", a.kind, b.kind));
            }
        }
        if runs.len() < 2 {
            warnings.push("only one solver requested; no cross-solver check performed".into());
        }
        sections.push(("cross-solver deviations".into(), lines));
    }

    let out = |p: &Path| args.out_dir.join(p);
    if mode != Mode::Compare {
        match growth_bound_report(cfg.alpha, &cfg.a, &cfg.b, &cfg.grid, &ctl) {
            Ok(report) => {
                let all_finite = report.rows.iter().all(|r| {
                    [
                        r.norm_c, r.bound_c, r.norm_s, r.bound_s, r.norm_dc, r.bound_dc, r.norm_ds, r.bound_ds,
                    ]
                    .iter()
                    .all(|v| v.is_finite())
                });
                let mut lines = vec![format!(
                    "min margin {:.6e} over {} nodes",
                    report.min_margin(),
                    report.rows.len()
                )];
                if !all_finite {
                    failures.push("growth bounds: non-finite norms or bounds".into());
                } else {
                    output::write_bounds(&out(&cfg.outputs.bounds), &report).map_err(Failure::Config)?;
                }
                if let Err(e) = report.check(MARGIN_TOL) {
                    failures.push(format!("growth bounds: {e}"));
                    lines.push(format!("violated: {e}"));
                }
                sections.push(("growth bounds".into(), lines));
            }
            Err(e) => {
                let f = Failure::from_error("growth bounds", e);
                match f {
                    Failure::Assertion(msg) => {
                        sections.push(("growth bounds".into(), vec![msg.clone()]));
                        failures.push(msg);
                    }
                    config => return Err(config),
                }
            }
        }
    }

    if !runs.is_empty() {
        output::write_solution(&out(&cfg.outputs.solution), &runs).map_err(Failure::Config)?;
    }
    if mode == Mode::Solve {
        output::write_residual(&out(&cfg.outputs.residual), &runs).map_err(Failure::Config)?;
    }

    if args.strict {
        failures.extend(warnings.iter().map(|w| format!("{w} (--strict)")));
    }
    sections.push((
        "warnings".into(),
        if warnings.is_empty() {
            vec!["none".into()]
        } else {
            warnings.clone()
        },
    ));
    sections.push((
        "assertions".into(),
        if failures.is_empty() {
            vec!["all passed".into()]
        } else {
            failures.iter().map(|f| format!("FAILED {f}")).collect()
        },
    ));
    let text = output::render_report(&sections);
    output::write_text(&out(&cfg.outputs.report), &text).map_err(Failure::Config)?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());

    match failures.first() {
        None => Ok(()),
        Some(first) if failures.len() == 1 => Err(Failure::Assertion(first.clone())),
        Some(first) => Err(Failure::Assertion(format!("{first} (and {} more)", failures.len() - 1))),
    }
}
