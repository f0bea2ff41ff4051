//! Control cost `ℓ`, running cost `G`, terminal cost `K` and the objective
//! `J(f, u) = ∫ ℓ(u) dt + ∫ K f(·,T) dx + ∫∫ G f dx dt`.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::{ControlPoint, StatePoint};
use crate::grid::{quadrature, ControlTrajectory, DensityField, GridSpec, Slice};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunningCost {
    Zero,
    /// `G = coeff · I`.
    LinearInI(f64),
    /// `G = 1` where `I >= threshold`, else 0.
    IndicatorIAbove(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TerminalCost {
    Zero,
    /// `K = -max(S - threshold, 0)`.
    NegSusceptibleSurplus(f64),
}

impl fmt::Display for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunningCost::Zero => write!(f, "zero"),
            RunningCost::LinearInI(c) => write!(f, "linear_in_i:{c:?}"),
            RunningCost::IndicatorIAbove(t) => write!(f, "indicator:{t:?}"),
        }
    }
}

impl fmt::Display for TerminalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalCost::Zero => write!(f, "zero"),
            TerminalCost::NegSusceptibleSurplus(t) => write!(f, "neg_susceptible_surplus:{t:?}"),
        }
    }
}

fn tagged(s: &str) -> (&str, Option<std::result::Result<f64, String>>) {
    match s.trim().split_once(':') {
        Some((tag, v)) => (tag.trim(), Some(v.trim().parse().map_err(|e| format!("bad number '{}': {e}", v.trim())))),
        None => (s.trim(), None),
    }
}

impl FromStr for RunningCost {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match tagged(s) {
            ("zero", None) => Ok(RunningCost::Zero),
            ("linear_in_i", Some(v)) => v.map(RunningCost::LinearInI),
            ("indicator", Some(v)) => v.map(RunningCost::IndicatorIAbove),
            _ => Err(format!("unknown running cost '{s}' (expected zero, linear_in_i:<c> or indicator:<t>)")),
        }
    }
}

impl FromStr for TerminalCost {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match tagged(s) {
            ("zero", None) => Ok(TerminalCost::Zero),
            ("neg_susceptible_surplus", Some(v)) => v.map(TerminalCost::NegSusceptibleSurplus),
            _ => Err(format!("unknown terminal cost '{s}' (expected zero or neg_susceptible_surplus:<t>)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSpec {
    /// Weight of `‖u‖₁`.
    pub beta1: f64,
    /// Weight of `½‖u‖₂²`.
    pub beta2: f64,
    pub running: RunningCost,
    pub terminal: TerminalCost,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cost weights must be nonnegative, got beta1={} beta2={}",
                self.beta1, self.beta2
            )));
        }
        let in_unit = |t: f64| t > 0.0 && t < 1.0;
        match self.running {
            RunningCost::LinearInI(c) if !(c >= 0.0 && c.is_finite()) => {
                return Err(Error::InvalidParameter(format!("running cost coefficient {c} must be >= 0")));
            }
            RunningCost::IndicatorIAbove(t) if !in_unit(t) => {
                return Err(Error::InvalidParameter(format!("indicator threshold {t} must lie in (0,1)")));
            }
            _ => {}
        }
        if let TerminalCost::NegSusceptibleSurplus(t) = self.terminal {
            if !in_unit(t) {
                return Err(Error::InvalidParameter(format!("terminal threshold {t} must lie in (0,1)")));
            }
        }
        Ok(())
    }

    pub fn running_field(&self, grid: &GridSpec) -> Slice {
        grid.map_nodes(|x| eval_running(x, self))
    }

    pub fn terminal_field(&self, grid: &GridSpec) -> Slice {
        grid.map_nodes(|x| eval_terminal(x, self))
    }

    pub fn running_sup(&self) -> f64 {
        match self.running {
            RunningCost::Zero => 0.0,
            RunningCost::LinearInI(c) => c.abs(),
            RunningCost::IndicatorIAbove(_) => 1.0,
        }
    }

    pub fn terminal_sup(&self) -> f64 {
        match self.terminal {
            TerminalCost::Zero => 0.0,
            TerminalCost::NegSusceptibleSurplus(t) => 1.0 - t,
        }
    }
}

/// `ℓ(u) = β1 ‖u‖₁ + β2/2 ‖u‖₂²` for a nonnegative control.
pub fn control_cost(u: ControlPoint, spec: &CostSpec) -> f64 {
    let l1 = u.u1 + u.u2 + u.u3;
    let l2 = u.u1 * u.u1 + u.u2 * u.u2 + u.u3 * u.u3;
    spec.beta1 * l1 + 0.5 * spec.beta2 * l2
}

pub fn eval_running(x: StatePoint, spec: &CostSpec) -> f64 {
    match spec.running {
        RunningCost::Zero => 0.0,
        RunningCost::LinearInI(c) => c * x.x2,
        // closed set: the threshold itself is charged
        RunningCost::IndicatorIAbove(t) => {
            if x.x2 >= t {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub fn eval_terminal(x: StatePoint, spec: &CostSpec) -> f64 {
    match spec.terminal {
        TerminalCost::Zero => 0.0,
        TerminalCost::NegSusceptibleSurplus(t) => -(x.x1 - t).max(0.0),
    }
}

/// The three parts of `J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown {
    pub control: f64,
    pub running: f64,
    pub terminal: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.control + self.running + self.terminal
    }
}

/// Objective split into its parts. Time integrals use the trapezoidal rule
/// on the control-time mesh.
pub fn cost_breakdown(f: &DensityField, u: &ControlTrajectory, spec: &CostSpec, grid: &GridSpec) -> Result<CostBreakdown> {
    let g = spec.running_field(grid);
    let k = spec.terminal_field(grid);
    cost_breakdown_with(f, u, spec, &g, &k, grid)
}

/// As [`cost_breakdown`] with explicit nodal `G` and `K`; only the control
/// weights of `spec` are used.
pub fn cost_breakdown_with(
    f: &DensityField,
    u: &ControlTrajectory,
    spec: &CostSpec,
    running_field: &Slice,
    terminal_field: &Slice,
    grid: &GridSpec,
) -> Result<CostBreakdown> {
    f.check_grid(grid)?;
    u.check_grid(grid)?;
    grid.check_slice(&running_field.view())?;
    grid.check_slice(&terminal_field.view())?;
    let wt = grid.time_weights();
    let has_running = running_field.iter().any(|&v| v != 0.0);
    let mut control = 0.0;
    let mut running = 0.0;
    for (n, w) in wt.iter().enumerate() {
        control += w * control_cost(u.values[n], spec);
        if has_running {
            running += w * quadrature(&(running_field * &f.slice(n)).view(), grid)?;
        }
    }
    let terminal = quadrature(&(terminal_field * &f.last()).view(), grid)?;
    Ok(CostBreakdown {
        control,
        running,
        terminal,
    })
}

pub fn evaluate_j(f: &DensityField, u: &ControlTrajectory, spec: &CostSpec, grid: &GridSpec) -> Result<f64> {
    cost_breakdown(f, u, spec, grid).map(|c| c.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModelParams;
    use crate::fp_solver::solve_forward;
    use crate::grid::make_initial_density;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(running: RunningCost, terminal: TerminalCost) -> CostSpec {
        CostSpec {
            beta1: 0.2,
            beta2: 0.1,
            running,
            terminal,
        }
    }

    #[test]
    fn cost_names_round_trip() {
        for r in [RunningCost::Zero, RunningCost::LinearInI(1.5), RunningCost::IndicatorIAbove(0.15)] {
            assert_eq!(r.to_string().parse::<RunningCost>().unwrap(), r);
        }
        for t in [TerminalCost::Zero, TerminalCost::NegSusceptibleSurplus(0.3)] {
            assert_eq!(t.to_string().parse::<TerminalCost>().unwrap(), t);
        }
        assert!("indicator".parse::<RunningCost>().is_err());
        assert!("linear_in_i:x".parse::<RunningCost>().is_err());
        assert!("zero:1".parse::<TerminalCost>().is_err());
    }

    #[test]
    fn control_cost_values() {
        let s = spec(RunningCost::Zero, TerminalCost::Zero);
        assert_eq!(control_cost(ControlPoint::ZERO, &s), 0.0);
        assert_abs_diff_eq!(control_cost(ControlPoint::new(1.0, 1.0, 1.0), &s), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(
            control_cost(ControlPoint::new(0.85, 0.1, 0.25), &s),
            0.27975,
            epsilon = 1e-12
        );
    }

    #[test]
    fn running_and_terminal_values() {
        let s1 = spec(RunningCost::LinearInI(1.5), TerminalCost::Zero);
        assert_abs_diff_eq!(eval_running(StatePoint::new(0.4, 0.2), &s1), 0.3, epsilon = 1e-15);
        let s2 = spec(RunningCost::IndicatorIAbove(0.15), TerminalCost::Zero);
        assert_eq!(eval_running(StatePoint::new(0.4, 0.15), &s2), 1.0);
        assert_eq!(eval_running(StatePoint::new(0.4, 0.149), &s2), 0.0);
        let s0 = spec(RunningCost::Zero, TerminalCost::Zero);
        assert_eq!(eval_running(StatePoint::new(0.4, 0.9), &s0), 0.0);
        assert_eq!(eval_terminal(StatePoint::new(0.4, 0.9), &s0), 0.0);
        let s3 = spec(RunningCost::Zero, TerminalCost::NegSusceptibleSurplus(0.3));
        assert_abs_diff_eq!(eval_terminal(StatePoint::new(0.5, 0.1), &s3), -0.2, epsilon = 1e-15);
        assert_eq!(eval_terminal(StatePoint::new(0.3, 0.1), &s3), 0.0);
    }

    #[test]
    fn validation() {
        assert!(spec(RunningCost::IndicatorIAbove(1.2), TerminalCost::Zero).validate().is_err());
        assert!(spec(RunningCost::LinearInI(-1.0), TerminalCost::Zero).validate().is_err());
        assert!(spec(RunningCost::Zero, TerminalCost::NegSusceptibleSurplus(0.0)).validate().is_err());
        assert!(spec(RunningCost::LinearInI(1.5), TerminalCost::NegSusceptibleSurplus(0.3)).validate().is_ok());
    }

    fn uncontrolled() -> (DensityField, ControlTrajectory, GridSpec) {
        let g = GridSpec {
            nt: 21,
            t_final: 2.0,
            ..GridSpec::default()
        };
        let p = ModelParams::default();
        let f0 = make_initial_density(StatePoint::new(0.99, 0.01), [0.025; 2], &g).unwrap();
        let u = ControlTrajectory::zeros(g.nt);
        (solve_forward(&f0, &u, &p, &g).unwrap(), u, g)
    }

    #[test]
    fn objective_degenerate_cases() {
        let (f, u, g) = uncontrolled();
        let zero = spec(RunningCost::Zero, TerminalCost::Zero);
        assert_eq!(evaluate_j(&f, &u, &zero, &g).unwrap(), 0.0);
        let c = 0.7;
        let j = cost_breakdown_with(&f, &u, &zero, &g.zeros(), &g.map_nodes(|_| c), &g)
            .unwrap()
            .total();
        assert_abs_diff_eq!(j, c, epsilon = 1e-8);
        let s3 = spec(RunningCost::Zero, TerminalCost::NegSusceptibleSurplus(0.3));
        let j = evaluate_j(&f, &u, &s3, &g).unwrap();
        let direct = f.expectation(g.nt - 1, |x| -(x.x1 - 0.3).max(0.0));
        assert_abs_diff_eq!(j, direct, epsilon = 1e-14);
        let bound = -s3.terminal_sup() - g.t_final * s3.running_sup();
        assert!(j >= bound);
    }

    #[test]
    fn objective_is_monotone_in_running_cost() {
        let (f, u, g) = uncontrolled();
        let lo = spec(RunningCost::LinearInI(1.0), TerminalCost::Zero);
        let hi = spec(RunningCost::LinearInI(1.5), TerminalCost::Zero);
        assert!(evaluate_j(&f, &u, &hi, &g).unwrap() > evaluate_j(&f, &u, &lo, &g).unwrap());
    }

    #[test]
    fn objective_rejects_mismatched_controls() {
        let (f, _, g) = uncontrolled();
        let s = spec(RunningCost::Zero, TerminalCost::Zero);
        assert!(evaluate_j(&f, &ControlTrajectory::zeros(5), &s, &g).is_err());
    }

    proptest! {
        #[test]
        fn control_cost_is_convex(
            a in (0.0..0.85f64, 0.0..0.1f64, 0.0..0.25f64),
            b in (0.0..0.85f64, 0.0..0.1f64, 0.0..0.25f64),
        ) {
            let s = spec(RunningCost::Zero, TerminalCost::Zero);
            let ua = ControlPoint::new(a.0, a.1, a.2);
            let ub = ControlPoint::new(b.0, b.1, b.2);
            let mid = ControlPoint::new((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0, (a.2 + b.2) / 2.0);
            prop_assert!(control_cost(mid, &s) <= 0.5 * (control_cost(ua, &s) + control_cost(ub, &s)) + 1e-15);
        }
    }
}
