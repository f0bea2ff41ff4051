//! Command-line front end. Errors are reported as one line on stderr,
//! `error kind=<tag> msg="<text>"`, with an exit code per error class.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::adjoint::solve_adjoint_with;
use crate::dynamics::ControlPoint;
use crate::fp_solver::{solve_forward, SolverOptions, MASS_TOL};
use crate::grid::{ControlTrajectory, GridSpec};
use crate::hamiltonian::{eval_h_slice, extract_coeffs_slice};
use crate::mc_oracle::{compare_with_fp, rk4_sir3, BoundaryPolicy, EnsembleSpec, TruncatedGaussian};
use crate::output::{fmt_num, write_run, DEFAULT_SNAPSHOTS};
use crate::scenario::{parse_config, preset, resolve, run_scenario, PRESETS};
use crate::sqh::tau_norm;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;
pub const EXIT_CHECK: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "fpsir", version, about = "Fokker-Planck optimal control of a stochastic SIR model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a scenario (optimizing when configured) and write CSV artifacts.
    Run {
        /// Preset name or path to a configuration file.
        scenario: String,
        /// Output directory [default: out/<label>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated density snapshot times.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Compare the FP density with an Euler-Maruyama ensemble.
    ValidateMc {
        scenario: String,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        time: f64,
        /// Euler-Maruyama steps per control interval.
        #[arg(long, default_value_t = 10)]
        em_substeps: usize,
    },
    /// Forward solve with zero control.
    Baseline {
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Check,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UnknownPreset(_) | Error::Config { .. } | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

fn report(e: &Error) -> i32 {
    let msg = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    eprintln!("error kind={} msg=\"{msg}\"", e.kind());
    exit_code(e)
}

/// Parse `args` (program name first), execute, and return the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { scenario, out, snapshots } => {
            let cfg = resolve(&scenario)?;
            let snaps = snapshots.unwrap_or_else(|| DEFAULT_SNAPSHOTS.to_vec());
            let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&cfg.label));
            let run = run_scenario(&cfg)?;
            let files = write_run(&run, &dir, &snaps)?;
            if let Some(t) = &run.trace {
                println!("status={}", t.status);
                println!("accepted_iterations={}", t.accepted_count());
            }
            println!("J={}", fmt_num(run.breakdown.total()));
            println!("wrote {} files to {}", files.len(), dir.display());
            if let Some(t) = &run.trace {
                t.ensure_converged()?;
            }
            Ok(EXIT_OK)
        }
        Command::ValidateMc {
            scenario,
            paths,
            seed,
            time,
            em_substeps,
        } => {
            let cfg = resolve(&scenario)?;
            if em_substeps == 0 {
                return Err(Error::InvalidParameter("em-substeps must be >= 1".into()));
            }
            let run = run_scenario(&cfg)?;
            let spec = EnsembleSpec {
                n_paths: paths,
                dt_em: cfg.grid.dt_control() / em_substeps as f64,
                seed,
                boundary: BoundaryPolicy::Reflect,
            };
            let sampler = TruncatedGaussian::new(cfg.init.center, cfg.init.variance, &cfg.grid);
            let c = compare_with_fp(&run.density, &sampler, &run.control, &cfg.model, &cfg.grid, &spec, time)?;
            println!("l1_distance={}", fmt_num(c.l1));
            println!("time={}", fmt_num(c.time));
            println!("fp_mean_i={}", fmt_num(c.fp_mean_i));
            println!("mc_mean_i={}", fmt_num(c.mc_mean_i));
            println!("mc_stderr_i={}", fmt_num(c.mc_stderr_i));
            Ok(EXIT_OK)
        }
        Command::Baseline { scenario, out } => {
            let mut cfg = resolve(&scenario)?;
            cfg.optimize = false;
            let run = run_scenario(&cfg)?;
            let (k_peak, i_peak) = (0..cfg.grid.nt)
                .map(|k| (k, run.density.expectation(k, |x| x.x2)))
                .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
            let ode_peak = run.dynamics.iter().fold([0.0; 4], |a, r| if r[2] > a[2] { *r } else { a });
            println!("J={}", fmt_num(run.breakdown.total()));
            println!("fp_peak_mean_i={}", fmt_num(i_peak));
            println!("fp_peak_time={}", fmt_num(cfg.grid.time(k_peak)));
            println!("ode_peak_i={}", fmt_num(ode_peak[2]));
            println!("ode_peak_time={}", fmt_num(ode_peak[0]));
            if let Some(dir) = out {
                let files = write_run(&run, &dir, &DEFAULT_SNAPSHOTS)?;
                println!("wrote {} files to {}", files.len(), dir.display());
            }
            Ok(EXIT_OK)
        }
        Command::Check => {
            let mut failed = 0;
            for (name, res) in self_check() {
                match res {
                    Ok(()) => println!("ok   {name}"),
                    Err(msg) => {
                        failed += 1;
                        println!("FAIL {name}: {msg}");
                    }
                }
            }
            Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK })
        }
    }
}

type Check = (&'static str, std::result::Result<(), String>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Fast invariant battery behind the `check` subcommand.
pub fn self_check() -> Vec<Check> {
    let mut out: Vec<Check> = Vec::new();
    let err = |e: Error| e.to_string();

    out.push((
        "forward mass and positivity on all presets",
        (|| {
            for name in PRESETS {
                let cfg = preset(name).map_err(err)?;
                let f0 = cfg.initial_density().map_err(err)?;
                let f = solve_forward(&f0, &ControlTrajectory::zeros(cfg.grid.nt), &cfg.model, &cfg.grid).map_err(err)?;
                let worst = f.masses().iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
                ensure(worst <= MASS_TOL, || format!("{name}: mass drift {worst:e}"))?;
                let min = f.values.iter().copied().fold(f64::INFINITY, f64::min);
                ensure(min >= 0.0, || format!("{name}: negative density {min:e}"))?;
            }
            Ok(())
        })(),
    ));

    out.push((
        "adjoint preserves constants",
        (|| {
            let cfg = preset("scenario1").map_err(err)?;
            let g = GridSpec {
                nx: 21,
                nt: 21,
                ..cfg.grid
            };
            let u = ControlTrajectory::constant(g.nt, ControlPoint::new(0.4, 0.05, 0.1));
            let q = solve_adjoint_with(&g.zeros(), &g.map_nodes(|_| 0.8), &g, &SolverOptions::default(), |k| {
                cfg.model.generator(u.values[k])
            })
            .map_err(err)?;
            let worst = q.values.iter().map(|v| (v + 0.8).abs()).fold(0.0, f64::max);
            ensure(worst <= 1e-12, || format!("deviation {worst:e}"))
        })(),
    ));

    out.push((
        "hamiltonian coefficients match direct evaluation",
        (|| {
            let cfg = preset("scenario1").map_err(err)?;
            let g = cfg.grid;
            let f = cfg.initial_density().map_err(err)?;
            let q = g.map_nodes(|x| -(x.x2 * (1.0 + x.x1)).sin());
            let c = extract_coeffs_slice(&f.view(), &q.view(), &cfg.cost, &cfg.model, &g).map_err(err)?;
            for w in [ControlPoint::ZERO, ControlPoint::new(0.85, 0.1, 0.25), ControlPoint::new(0.3, 0.02, 0.2)] {
                let d = eval_h_slice(&f.view(), &q.view(), w, &cfg.cost, &cfg.model, &g).map_err(err)?;
                ensure((d - c.eval(w)).abs() <= 1e-10, || format!("{w:?}: {d} vs {}", c.eval(w)))?;
            }
            Ok(())
        })(),
    ));

    out.push((
        "tau norm of a unit offset equals the horizon",
        (|| {
            let g = GridSpec::default();
            let a = ControlTrajectory::constant(g.nt, ControlPoint::new(1.0, 0.0, 0.0));
            let t = tau_norm(&a, &ControlTrajectory::zeros(g.nt), &g).map_err(err)?;
            ensure((t - g.t_final).abs() <= 1e-12, || format!("got {t}"))
        })(),
    ));

    out.push((
        "ode population is conserved",
        (|| {
            let cfg = preset("uncontrolled").map_err(err)?;
            let rows = rk4_sir3(0.99, 0.01, 0.0, &ControlTrajectory::zeros(cfg.grid.nt), &cfg.model, &cfg.grid)
                .map_err(err)?;
            let worst = rows.iter().map(|r| (r[1] + r[2] + r[3] - 1.0).abs()).fold(0.0, f64::max);
            ensure(worst <= 1e-3, || format!("deviation {worst:e}"))
        })(),
    ));

    out.push((
        "preset configs round-trip",
        (|| {
            for name in PRESETS {
                let cfg = preset(name).map_err(err)?;
                let back = parse_config(&cfg.to_config_string()).map_err(err)?;
                ensure(back == cfg, || format!("{name} changed on reload"))?;
            }
            Ok(())
        })(),
    ));

    out
}
