//! Scenario configuration: the four built-in presets, a flat `key = value`
//! file format, and the end-to-end scenario runner.

use std::fmt::Write as _;
use std::path::Path;

use crate::cost::{cost_breakdown, CostBreakdown, CostSpec, RunningCost, TerminalCost};
use crate::dynamics::{ModelParams, StatePoint};
use crate::fp_solver::solve_forward;
use crate::grid::{make_initial_density, ControlTrajectory, DensityField, GridSpec, Slice};
use crate::mc_oracle::rk4_sir3;
use crate::sqh::{solve_sqh, SqhParams, SqhTrace};
use crate::{Error, Result};

pub const PRESETS: [&str; 4] = ["uncontrolled", "scenario1", "scenario2", "scenario3"];

/// Mean and per-axis variance of the initial Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialState {
    pub center: StatePoint,
    pub variance: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub label: String,
    pub model: ModelParams,
    pub grid: GridSpec,
    pub cost: CostSpec,
    pub sqh: SqhParams,
    pub init: InitialState,
    /// Run the optimizer; when false the control stays at zero.
    pub optimize: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::InvalidParameter("label must be nonempty".into()));
        }
        self.model.validate()?;
        self.grid.validate()?;
        self.cost.validate()?;
        self.sqh.validate()?;
        let c = self.init.center;
        let inside = |v: f64| (self.grid.x_lo..=self.grid.x_hi).contains(&v);
        if !(inside(c.x1) && inside(c.x2)) {
            return Err(Error::InvalidParameter(format!(
                "initial center ({}, {}) outside the domain",
                c.x1, c.x2
            )));
        }
        if !(self.init.variance[0] > 0.0 && self.init.variance[1] > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial variance must be positive, got {:?}",
                self.init.variance
            )));
        }
        Ok(())
    }

    pub fn initial_density(&self) -> Result<Slice> {
        make_initial_density(self.init.center, self.init.variance, &self.grid)
    }

    /// Serialize in the format read by [`parse_config`]; every key is written.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", get(self, key));
        }
        s
    }
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig {
        label: name.to_string(),
        model: ModelParams::default(),
        grid: GridSpec::default(),
        cost: CostSpec {
            beta1: 0.2,
            beta2: 0.1,
            running: RunningCost::Zero,
            terminal: TerminalCost::Zero,
        },
        sqh: SqhParams::default(),
        init: InitialState {
            center: StatePoint::new(0.99, 0.01),
            variance: [0.025, 0.025],
        },
        optimize: true,
    };
    match name {
        "uncontrolled" => cfg.optimize = false,
        "scenario1" => cfg.cost.running = RunningCost::LinearInI(1.5),
        "scenario2" => cfg.cost.running = RunningCost::IndicatorIAbove(0.15),
        "scenario3" => {
            cfg.cost.terminal = TerminalCost::NegSusceptibleSurplus(0.3);
            cfg.model.v_max = 0.0;
        }
        _ => return Err(Error::UnknownPreset(name.to_string())),
    }
    Ok(cfg)
}

const KEYS: [&str; 29] = [
    "label",
    "optimize",
    "model.b",
    "model.delta",
    "model.beta",
    "model.gamma",
    "model.noise_coeff",
    "model.alpha_max",
    "model.v_max",
    "model.eta_max",
    "grid.nx",
    "grid.nt",
    "grid.t_final",
    "grid.x_lo",
    "grid.x_hi",
    "grid.substeps",
    "cost.beta1",
    "cost.beta2",
    "cost.running",
    "cost.terminal",
    "sqh.eps0",
    "sqh.mu",
    "sqh.zeta",
    "sqh.lambda",
    "sqh.kappa",
    "sqh.k_max",
    "sqh.inner_max",
    "init.center",
    "init.variance",
];

fn get(c: &ScenarioConfig, key: &str) -> String {
    match key {
        "label" => c.label.clone(),
        "optimize" => c.optimize.to_string(),
        "model.b" => format!("{:?}", c.model.b),
        "model.delta" => format!("{:?}", c.model.delta),
        "model.beta" => format!("{:?}", c.model.beta),
        "model.gamma" => format!("{:?}", c.model.gamma),
        "model.noise_coeff" => format!("{:?}", c.model.noise_coeff),
        "model.alpha_max" => format!("{:?}", c.model.alpha_max),
        "model.v_max" => format!("{:?}", c.model.v_max),
        "model.eta_max" => format!("{:?}", c.model.eta_max),
        "grid.nx" => c.grid.nx.to_string(),
        "grid.nt" => c.grid.nt.to_string(),
        "grid.t_final" => format!("{:?}", c.grid.t_final),
        "grid.x_lo" => format!("{:?}", c.grid.x_lo),
        "grid.x_hi" => format!("{:?}", c.grid.x_hi),
        "grid.substeps" => c.grid.substeps_per_interval.to_string(),
        "cost.beta1" => format!("{:?}", c.cost.beta1),
        "cost.beta2" => format!("{:?}", c.cost.beta2),
        "cost.running" => c.cost.running.to_string(),
        "cost.terminal" => c.cost.terminal.to_string(),
        "sqh.eps0" => format!("{:?}", c.sqh.eps0),
        "sqh.mu" => format!("{:?}", c.sqh.mu),
        "sqh.zeta" => format!("{:?}", c.sqh.zeta),
        "sqh.lambda" => format!("{:?}", c.sqh.lambda),
        "sqh.kappa" => format!("{:?}", c.sqh.kappa),
        "sqh.k_max" => c.sqh.k_max.to_string(),
        "sqh.inner_max" => c.sqh.inner_max.to_string(),
        "init.center" => format!("{:?}, {:?}", c.init.center.x1, c.init.center.x2),
        "init.variance" => format!("{:?}, {:?}", c.init.variance[0], c.init.variance[1]),
        _ => unreachable!("unlisted key {key}"),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("bad value '{v}': {e}"))
}

fn pair(v: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a] => {
            let x = num(a)?;
            Ok([x, x])
        }
        [a, b] => Ok([num(a)?, num(b)?]),
        _ => Err(format!("expected one or two comma-separated numbers, got '{v}'")),
    }
}

fn set(c: &mut ScenarioConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    match key {
        "label" => c.label = v.to_string(),
        "optimize" => c.optimize = num(v)?,
        "model.b" => c.model.b = num(v)?,
        "model.delta" => c.model.delta = num(v)?,
        "model.beta" => c.model.beta = num(v)?,
        "model.gamma" => c.model.gamma = num(v)?,
        "model.noise_coeff" => c.model.noise_coeff = num(v)?,
        "model.alpha_max" => c.model.alpha_max = num(v)?,
        "model.v_max" => c.model.v_max = num(v)?,
        "model.eta_max" => c.model.eta_max = num(v)?,
        "grid.nx" => c.grid.nx = num(v)?,
        "grid.nt" => c.grid.nt = num(v)?,
        "grid.t_final" => c.grid.t_final = num(v)?,
        "grid.x_lo" => c.grid.x_lo = num(v)?,
        "grid.x_hi" => c.grid.x_hi = num(v)?,
        "grid.substeps" => c.grid.substeps_per_interval = num(v)?,
        "cost.beta1" => c.cost.beta1 = num(v)?,
        "cost.beta2" => c.cost.beta2 = num(v)?,
        "cost.running" => c.cost.running = v.parse()?,
        "cost.terminal" => c.cost.terminal = v.parse()?,
        "sqh.eps0" => c.sqh.eps0 = num(v)?,
        "sqh.mu" => c.sqh.mu = num(v)?,
        "sqh.zeta" => c.sqh.zeta = num(v)?,
        "sqh.lambda" => c.sqh.lambda = num(v)?,
        "sqh.kappa" => c.sqh.kappa = num(v)?,
        "sqh.k_max" => c.sqh.k_max = num(v)?,
        "sqh.inner_max" => c.sqh.inner_max = num(v)?,
        "init.center" => {
            let [a, b] = pair(v)?;
            c.init.center = StatePoint::new(a, b);
        }
        "init.variance" => c.init.variance = pair(v)?,
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

/// Parse the flat configuration format. Lines are `key = value`; `#` starts
/// a comment. A `base = <preset>` line supplies defaults for every key not
/// given; without it all keys are required.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut entries: Vec<(usize, &str, &str)> = Vec::new();
    let mut base: Option<(usize, &str)> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                msg: format!("expected 'key = value', got '{content}'"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config {
                line,
                msg: "empty key".into(),
            });
        }
        if k == "base" {
            if base.is_some() {
                return Err(Error::Config {
                    line,
                    msg: "duplicate 'base'".into(),
                });
            }
            base = Some((line, v));
            continue;
        }
        if let Some((first, ..)) = entries.iter().find(|(_, key, _)| *key == k) {
            return Err(Error::Config {
                line,
                msg: format!("duplicate key '{k}' (first on line {first})"),
            });
        }
        entries.push((line, k, v));
    }

    let mut cfg = match base {
        Some((line, name)) => preset(name).map_err(|_| Error::Config {
            line,
            msg: format!("unknown preset '{name}'"),
        })?,
        None => {
            let missing: Vec<&str> = KEYS.into_iter().filter(|k| !entries.iter().any(|(_, e, _)| e == k)).collect();
            if !missing.is_empty() {
                return Err(Error::Config {
                    line: 0,
                    msg: format!("no 'base' line and missing keys: {}", missing.join(", ")),
                });
            }
            preset("uncontrolled")?
        }
    };
    for (line, k, v) in entries {
        set(&mut cfg, k, v).map_err(|msg| Error::Config { line, msg })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// A preset name or a path to a configuration file.
pub fn resolve(spec: &str) -> Result<ScenarioConfig> {
    if PRESETS.contains(&spec) {
        return preset(spec);
    }
    let path = Path::new(spec);
    if path.is_file() {
        return load_config(path);
    }
    Err(Error::UnknownPreset(spec.to_string()))
}

/// Everything produced by one scenario run.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub control: ControlTrajectory,
    pub density: DensityField,
    /// Absent when the scenario does not optimize.
    pub trace: Option<SqhTrace>,
    pub breakdown: CostBreakdown,
    /// `[t, S, I, R]` from the deterministic model under `control`.
    pub dynamics: Vec<[f64; 4]>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let f0 = cfg.initial_density()?;
    let zero = ControlTrajectory::zeros(cfg.grid.nt);
    let (control, density, trace) = if cfg.optimize {
        let out = solve_sqh(&f0, zero, &cfg.cost, &cfg.model, &cfg.grid, &cfg.sqh)?;
        (out.control, out.density, Some(out.trace))
    } else {
        let f = solve_forward(&f0, &zero, &cfg.model, &cfg.grid)?;
        (zero, f, None)
    };
    let breakdown = cost_breakdown(&density, &control, &cfg.cost, &cfg.grid)?;
    let c = cfg.init.center;
    let dynamics = rk4_sir3(c.x1, c.x2, (1.0 - c.x1 - c.x2).max(0.0), &control, &cfg.model, &cfg.grid)?;
    Ok(ScenarioRun {
        config: cfg.clone(),
        control,
        density,
        trace,
        breakdown,
        dynamics,
    })
}
