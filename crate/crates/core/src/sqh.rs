//! Sequential quadratic Hamiltonian iteration with adaptive proximal weight.

use std::fmt;

use rayon::prelude::*;

use crate::adjoint::solve_adjoint;
use crate::cost::{evaluate_j, CostSpec};
use crate::dynamics::{ControlPoint, ModelParams};
use crate::fp_solver::solve_forward;
use crate::grid::{ControlTrajectory, DensityField, GridSpec, Slice};
use crate::hamiltonian::extract_all;
use crate::scenario::ScenarioConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqhParams {
    /// Initial proximal weight ε.
    pub eps0: f64,
    /// Sufficient-decrease constant.
    pub mu: f64,
    /// Shrink factor for ε after an accepted step.
    pub zeta: f64,
    /// Growth factor for ε after a rejected step.
    pub lambda: f64,
    /// Stop once the squared control update falls below this.
    pub kappa: f64,
    pub k_max: usize,
    /// Consecutive rejections tolerated before giving up.
    pub inner_max: usize,
}

impl Default for SqhParams {
    fn default() -> Self {
        Self {
            eps0: 1.0,
            mu: 1e-9,
            zeta: 0.9,
            lambda: 1.1,
            kappa: 1e-3,
            k_max: 150,
            inner_max: 200,
        }
    }
}

impl SqhParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return bad(format!("eps0 must be positive, got {}", self.eps0));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta must lie in (0,1), got {}", self.zeta));
        }
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must exceed 1, got {}", self.lambda));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if self.k_max == 0 || self.inner_max == 0 {
            return bad("k_max and inner_max must be at least 1".into());
        }
        Ok(())
    }
}

/// One trial control. `iter` counts outer iterations from 1; `retries` is
/// the number of rejected trials preceding this one within the iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub j: f64,
    pub tau: f64,
    pub eps: f64,
    pub accepted: bool,
    pub retries: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SqhStatus {
    ConvergedTau,
    MaxIter,
    StalledEps,
}

impl fmt::Display for SqhStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ConvergedTau => "converged_tau",
            Self::MaxIter => "max_iter",
            Self::StalledEps => "stalled_eps",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SqhTrace {
    /// Objective of the initial control.
    pub j0: f64,
    pub records: Vec<TraceRecord>,
    pub status: SqhStatus,
    /// ε after the last trial.
    pub final_eps: f64,
}

impl SqhTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted().count()
    }

    /// Objective of the returned control.
    pub fn final_j(&self) -> f64 {
        self.accepted().last().map_or(self.j0, |r| r.j)
    }

    /// Turn a stall into an error for callers that need a converged result.
    pub fn ensure_converged(&self) -> Result<()> {
        match self.status {
            SqhStatus::StalledEps => Err(Error::StalledEps {
                iteration: self.records.last().map_or(0, |r| r.iter),
                eps: self.final_eps,
            }),
            _ => Ok(()),
        }
    }
}

/// `Σ_i ∫ (a_i - b_i)² dt` by the trapezoidal rule.
pub fn tau_norm(u_new: &ControlTrajectory, u_old: &ControlTrajectory, grid: &GridSpec) -> Result<f64> {
    u_new.check_grid(grid)?;
    u_old.check_grid(grid)?;
    let w = grid.time_weights();
    Ok(u_new
        .values
        .iter()
        .zip(&u_old.values)
        .zip(w.iter())
        .map(|((a, b), w)| {
            let d = [a.u1 - b.u1, a.u2 - b.u2, a.u3 - b.u3];
            w * d.iter().map(|x| x * x).sum::<f64>()
        })
        .sum())
}

#[derive(Clone, Debug)]
pub struct SqhOutcome {
    pub control: ControlTrajectory,
    pub density: DensityField,
    pub trace: SqhTrace,
}

/// Run the iteration from `u0` with initial density `f0`.
pub fn solve_sqh(
    f0: &Slice,
    u0: ControlTrajectory,
    cost: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
    params: &SqhParams,
) -> Result<SqhOutcome> {
    params.validate()?;
    cost.validate()?;
    p.validate()?;
    grid.validate()?;
    u0.check_grid(grid)?;
    u0.check_admissible(p)?;
    let upper = p.control_upper();

    let mut u = u0;
    let mut f = solve_forward(f0, &u, p, grid)?;
    let mut j = evaluate_j(&f, &u, cost, grid)?;
    let j0 = j;
    let mut eps = params.eps0;
    let mut records = Vec::new();
    let mut status = SqhStatus::MaxIter;

    'outer: for iter in 1..=params.k_max {
        let q = solve_adjoint(&u, cost, p, grid)?;
        let coeffs = extract_all(&f, &q, cost, p, grid)?;
        let mut retries = 0;
        loop {
            let trial = ControlTrajectory {
                values: coeffs
                    .par_iter()
                    .zip(u.values.par_iter())
                    .map(|(c, &prev)| c.minimize_eps(prev, eps, upper))
                    .collect::<Vec<ControlPoint>>(),
            };
            let f_trial = solve_forward(f0, &trial, p, grid)?;
            let j_trial = evaluate_j(&f_trial, &trial, cost, grid)?;
            let tau = tau_norm(&trial, &u, grid)?;
            let accepted = j_trial - j <= -params.mu * tau;
            records.push(TraceRecord {
                iter,
                j: j_trial,
                tau,
                eps,
                accepted,
                retries,
            });
            if accepted {
                eps *= params.zeta;
                u = trial;
                f = f_trial;
                j = j_trial;
                if tau < params.kappa {
                    status = SqhStatus::ConvergedTau;
                    break 'outer;
                }
                break;
            }
            eps *= params.lambda;
            retries += 1;
            if retries >= params.inner_max {
                status = SqhStatus::StalledEps;
                break 'outer;
            }
        }
    }

    Ok(SqhOutcome {
        control: u,
        density: f,
        trace: SqhTrace {
            j0,
            records,
            status,
            final_eps: eps,
        },
    })
}

/// Run the iteration for a scenario from its configured initial state and
/// a zero initial control.
pub fn run_sqh(cfg: &ScenarioConfig) -> Result<(ControlTrajectory, DensityField, SqhTrace)> {
    cfg.validate()?;
    let f0 = cfg.initial_density()?;
    let out = solve_sqh(
        &f0,
        ControlTrajectory::zeros(cfg.grid.nt),
        &cfg.cost,
        &cfg.model,
        &cfg.grid,
        &cfg.sqh,
    )?;
    Ok((out.control, out.density, out.trace))
}
