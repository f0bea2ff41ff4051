//! Backward adjoint equation
//! `-∂t q - F·∇q - ½ Σ σ_j² ∂²_j q + G = 0`, `q(·,T) = -K`, `∇q·n = 0`.
//!
//! Discretized directly (not as the transpose of the forward scheme): the
//! transport term is upwinded, the second derivatives are centred with
//! mirrored ghost nodes, and the result is integrated backward with SSP-RK3.
//! Every neighbour coefficient is nonnegative, which gives a discrete
//! maximum principle under the forward-Euler step bound.

use ndarray::{Array2, Array3, Axis};

use crate::cost::CostSpec;
use crate::dynamics::{ControlPoint, DriftDiffusion, ModelParams};
use crate::fp_solver::{choose_substeps, SolverOptions};
use crate::grid::{AdjointField, ControlTrajectory, GridSpec, Slice};
use crate::ssp::ssp_rk3_step;
use crate::{Error, Result};

const EAST: usize = 0;
const WEST: usize = 1;
const NORTH: usize = 2;
const SOUTH: usize = 3;

/// Non-divergence backward generator `q ↦ F·∇q + ½ Σ σ_j² ∂²_j q` with a
/// frozen control, stored as four nonnegative neighbour weights per node.
/// East/west are `x1 ± h`, north/south are `x2 ± h`.
#[derive(Clone, Debug)]
pub struct AdjointOperator {
    nx: usize,
    /// Shape `(nx, nx, 4)`.
    coeff: Array3<f64>,
}

impl AdjointOperator {
    pub fn new(gen: &impl DriftDiffusion, grid: &GridSpec) -> Self {
        let n = grid.nx;
        let h = grid.h();
        let mut coeff = Array3::zeros((n, n, 4));
        for i in 0..n {
            for j in 0..n {
                let x = grid.point(i, j);
                let f = gen.drift(x);
                let s = gen.diffusion_sq(x);
                let mut c = [0.0; 4];
                // transport: upwind; zero normal derivative when the upwind
                // neighbour lies outside the domain
                upwind(f[0], i, n, h, &mut c, EAST, WEST);
                upwind(f[1], j, n, h, &mut c, NORTH, SOUTH);
                // diffusion with mirrored ghosts q[-1] = q[1]
                centred(0.5 * s[0], i, n, h, &mut c, EAST, WEST);
                centred(0.5 * s[1], j, n, h, &mut c, NORTH, SOUTH);
                for (d, v) in c.into_iter().enumerate() {
                    coeff[[i, j, d]] = v;
                }
            }
        }
        Self { nx: n, coeff }
    }

    pub fn for_control(u: ControlPoint, p: &ModelParams, grid: &GridSpec) -> Self {
        Self::new(&p.generator(u), grid)
    }

    pub fn apply(&self, q: &Slice, out: &mut Slice) {
        let n = self.nx;
        for i in 0..n {
            for j in 0..n {
                let qc = q[[i, j]];
                let c = |d: usize| self.coeff[[i, j, d]];
                let mut acc = 0.0;
                if i + 1 < n {
                    acc += c(EAST) * (q[[i + 1, j]] - qc);
                }
                if i > 0 {
                    acc += c(WEST) * (q[[i - 1, j]] - qc);
                }
                if j + 1 < n {
                    acc += c(NORTH) * (q[[i, j + 1]] - qc);
                }
                if j > 0 {
                    acc += c(SOUTH) * (q[[i, j - 1]] - qc);
                }
                out[[i, j]] = acc;
            }
        }
    }

    /// Largest forward-Euler step keeping the backward update monotone.
    pub fn stable_dt(&self) -> f64 {
        let m = self
            .coeff
            .lanes(Axis(2))
            .into_iter()
            .map(|l| l.sum())
            .fold(0.0f64, f64::max);
        if m > 0.0 {
            1.0 / m
        } else {
            f64::INFINITY
        }
    }
}

fn upwind(v: f64, idx: usize, n: usize, h: f64, c: &mut [f64; 4], plus: usize, minus: usize) {
    if v > 0.0 && idx + 1 < n {
        c[plus] += v / h;
    } else if v < 0.0 && idx > 0 {
        c[minus] += -v / h;
    }
}

fn centred(d: f64, idx: usize, n: usize, h: f64, c: &mut [f64; 4], plus: usize, minus: usize) {
    let k = d / (h * h);
    if idx == 0 {
        c[plus] += 2.0 * k;
    } else if idx == n - 1 {
        c[minus] += 2.0 * k;
    } else {
        c[plus] += k;
        c[minus] += k;
    }
}

/// Upwinded `F·∇q` for the control `u_k`.
pub fn advective_term(q: &Slice, u_k: ControlPoint, p: &ModelParams, grid: &GridSpec) -> Result<Slice> {
    grid.check_slice(&q.view())?;
    let no_noise = ModelParams {
        noise_coeff: 0.0,
        ..*p
    };
    let op = AdjointOperator::for_control(u_k, &no_noise, grid);
    let mut out = grid.zeros();
    op.apply(q, &mut out);
    Ok(out)
}

/// Solve the adjoint equation for control `u` and the costs in `cost`.
pub fn solve_adjoint(u: &ControlTrajectory, cost: &CostSpec, p: &ModelParams, grid: &GridSpec) -> Result<AdjointField> {
    solve_adjoint_opts(u, cost, p, grid, &SolverOptions::default())
}

pub fn solve_adjoint_opts(
    u: &ControlTrajectory,
    cost: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<AdjointField> {
    u.check_grid(grid)?;
    u.check_admissible(p)?;
    let running = cost.running_field(grid);
    let terminal = cost.terminal_field(grid);
    solve_adjoint_with(&running, &terminal, grid, opts, |k| p.generator(u.values[k]))
}

/// Adjoint solve for explicit nodal `G` and `K` and arbitrary coefficients;
/// `generator(k)` supplies the coefficients held on `[t_k, t_{k+1})`.
pub fn solve_adjoint_with<G, F>(
    running: &Slice,
    terminal: &Slice,
    grid: &GridSpec,
    opts: &SolverOptions,
    mut generator: F,
) -> Result<AdjointField>
where
    G: DriftDiffusion,
    F: FnMut(usize) -> G,
{
    grid.validate()?;
    grid.check_slice(&running.view())?;
    grid.check_slice(&terminal.view())?;
    let mut field = AdjointField::zeros(*grid);
    let mut q = terminal.mapv(|k| -k);
    field.values.index_axis_mut(Axis(0), grid.nt - 1).assign(&q);
    for k in (0..grid.nt - 1).rev() {
        let op = AdjointOperator::new(&generator(k), grid);
        let n = choose_substeps(grid, opts, op.stable_dt())?;
        let ds = grid.dt_control() / n as f64;
        for _ in 0..n {
            ssp_rk3_step(&mut q, ds, |x, out: &mut Array2<f64>| {
                op.apply(x, out);
                *out -= running;
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "adjoint",
                time: grid.time(k),
            });
        }
        field.values.index_axis_mut(Axis(0), k).assign(&q);
    }
    Ok(field)
}
