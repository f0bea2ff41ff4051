//! Forward Fokker-Planck solver.
//!
//! Each direction is written in flux form `∂t f = ∂x [C ∂x f + A f]` with
//! `C = σ²/2` and `A = ∂x C - F`, which is the zero-flux boundary flux of the
//! model verbatim. Face fluxes use Chang-Cooper weighting on vertex control
//! volumes whose lengths are the trapezoidal weights, so the discrete mass
//! `Σ w_i w_j f_ij` telescopes exactly. Time stepping is SSP-RK3 per
//! direction inside a Strang splitting, with controls held constant over
//! each control interval.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::dynamics::{ControlPoint, DriftDiffusion, ModelParams, StatePoint};
use crate::grid::{ControlTrajectory, DensityField, GridSpec, Slice};
use crate::ssp::ssp_rk3_step;
use crate::{Error, Result};

/// Mass drift tolerated over a full solve.
pub const MASS_TOL: f64 = 1e-8;

/// Chang-Cooper weight `δ = 1/w - 1/(e^w - 1)` with `w = A h / C`.
///
/// `δ` multiplies the value on the lower side of the face. For `C = 0` the
/// flux is fully upwinded according to the sign of `A`.
pub fn chang_cooper_weights(advection: f64, diffusion: f64, h: f64) -> f64 {
    let upwind = || {
        if advection > 0.0 {
            0.0
        } else if advection < 0.0 {
            1.0
        } else {
            0.5
        }
    };
    if diffusion <= 0.0 {
        return upwind();
    }
    let w = advection * h / diffusion;
    if !w.is_finite() {
        return upwind();
    }
    if w.abs() < 1e-4 {
        0.5 - w / 12.0 + w.powi(3) / 720.0
    } else {
        1.0 / w - 1.0 / w.exp_m1()
    }
}

/// `w / (e^w - 1)`, positive for every finite `w`.
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-10 {
        1.0 - 0.5 * w
    } else {
        w / w.exp_m1()
    }
}

/// Face coefficients for one direction.
///
/// Arrays have shape `(nx - 1, nx)`: index `[a, b]` is the face between
/// nodes `a` and `a + 1` along the flux direction, at transverse index `b`.
#[derive(Clone, Debug)]
pub struct FluxCoefficients {
    /// `A = ∂x(σ²/2) - F` at the face.
    pub advection: Array2<f64>,
    /// `C = σ²/2` at the face.
    pub diffusion: Array2<f64>,
    /// Chang-Cooper weight `δ ∈ [0, 1]`.
    pub weight: Array2<f64>,
    /// Coefficient of the upper node value, `C/h + A (1 - δ)`.
    upper: Array2<f64>,
    /// Coefficient of the lower node value, `C/h - A δ`.
    lower: Array2<f64>,
}

impl FluxCoefficients {
    fn build(gen: &impl DriftDiffusion, grid: &GridSpec, dir: usize) -> Self {
        let n = grid.nx;
        let h = grid.h();
        let mut advection = Array2::zeros((n - 1, n));
        let mut diffusion = Array2::zeros((n - 1, n));
        let mut weight = Array2::zeros((n - 1, n));
        let mut upper = Array2::zeros((n - 1, n));
        let mut lower = Array2::zeros((n - 1, n));
        for a in 0..n - 1 {
            let along = grid.x_lo + (a as f64 + 0.5) * h;
            for b in 0..n {
                let x = if dir == 0 {
                    StatePoint::new(along, grid.coord(b))
                } else {
                    StatePoint::new(grid.coord(b), along)
                };
                let c = 0.5 * gen.diffusion_sq(x)[dir];
                let adv = 0.5 * gen.diffusion_sq_gradient(x)[dir] - gen.drift(x)[dir];
                advection[[a, b]] = adv;
                diffusion[[a, b]] = c;
                weight[[a, b]] = chang_cooper_weights(adv, c, h);
                let w = adv * h / c;
                if c > 0.0 && w.is_finite() {
                    upper[[a, b]] = c / h * bernoulli(-w);
                    lower[[a, b]] = c / h * bernoulli(w);
                } else {
                    upper[[a, b]] = adv.max(0.0);
                    lower[[a, b]] = (-adv).max(0.0);
                }
            }
        }
        Self {
            advection,
            diffusion,
            weight,
            upper,
            lower,
        }
    }

    /// Flux `C (f_{a+1} - f_a)/h + A ((1-δ) f_{a+1} + δ f_a)` through each
    /// interior face.
    fn face_flux(&self, f: &ArrayView2<f64>, a: usize, b: usize) -> f64 {
        self.upper[[a, b]] * f[[a + 1, b]] - self.lower[[a, b]] * f[[a, b]]
    }

    /// `C/h + A(1-δ)` and `C/h - Aδ` evaluated directly from the weights.
    pub fn weighted_coefficients(&self, h: f64) -> (Array2<f64>, Array2<f64>) {
        let up = &self.diffusion / h + &self.advection * &self.weight.mapv(|d| 1.0 - d);
        let lo = &self.diffusion / h - &self.advection * &self.weight;
        (up, lo)
    }
}

/// Discrete Fokker-Planck generator for a frozen set of coefficients.
#[derive(Clone, Debug)]
pub struct FpOperator {
    grid: GridSpec,
    weights: Array1<f64>,
    dirs: [FluxCoefficients; 2],
}

impl FpOperator {
    pub fn new(gen: &impl DriftDiffusion, grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            weights: grid.spatial_weights(),
            dirs: [
                FluxCoefficients::build(gen, grid, 0),
                FluxCoefficients::build(gen, grid, 1),
            ],
        }
    }

    pub fn for_control(u: ControlPoint, p: &ModelParams, grid: &GridSpec) -> Self {
        Self::new(&p.generator(u), grid)
    }

    pub fn flux_coefficients(&self, dir: usize) -> &FluxCoefficients {
        &self.dirs[dir]
    }

    fn line_rate(&self, dir: usize, f: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
        let c = &self.dirs[dir];
        let w = &self.weights;
        let n = self.grid.nx;
        out.fill(0.0);
        for a in 0..n - 1 {
            for b in 0..n {
                let flux = c.face_flux(&f, a, b);
                out[[a, b]] += flux / w[a];
                out[[a + 1, b]] -= flux / w[a + 1];
            }
        }
    }

    /// Time derivative of `f` due to the flux along direction `dir` only.
    pub fn rate_direction(&self, dir: usize, f: &Slice, out: &mut Slice) {
        if dir == 0 {
            self.line_rate(0, f.view(), out.view_mut());
        } else {
            self.line_rate(1, f.t(), out.view_mut().reversed_axes());
        }
    }

    /// Full time derivative of `f`.
    pub fn rate(&self, f: &Slice, out: &mut Slice) {
        let mut tmp = Array2::zeros(f.raw_dim());
        self.rate_direction(0, f, out);
        self.rate_direction(1, f, &mut tmp);
        *out += &tmp;
    }

    /// Fluxes through every face including the boundary faces, which are
    /// zero. Direction `dir` has shape `(nx + 1, nx)` indexed
    /// `[face along dir, transverse node]`.
    pub fn face_fluxes(&self, f: &Slice) -> [Array2<f64>; 2] {
        let n = self.grid.nx;
        let mut out = [Array2::zeros((n + 1, n)), Array2::zeros((n + 1, n))];
        for (dir, fluxes) in out.iter_mut().enumerate() {
            let view = if dir == 0 { f.view() } else { f.t() };
            for a in 0..n - 1 {
                for b in 0..n {
                    fluxes[[a + 1, b]] = self.dirs[dir].face_flux(&view, a, b);
                }
            }
        }
        out
    }

    /// Total outflow coefficient of every node for direction `dir`, in the
    /// orientation `[along, transverse]`.
    fn outflow(&self, dir: usize) -> Array2<f64> {
        let n = self.grid.nx;
        let c = &self.dirs[dir];
        Array2::from_shape_fn((n, n), |(a, b)| {
            let right = if a + 1 < n { c.lower[[a, b]] } else { 0.0 };
            let left = if a > 0 { c.upper[[a - 1, b]] } else { 0.0 };
            (right + left) / self.weights[a]
        })
    }

    /// Largest forward-Euler step that keeps the direction-`dir` update
    /// positivity preserving.
    pub fn stable_dt(&self, dir: usize) -> f64 {
        let m = self.outflow(dir).fold(0.0f64, |acc, &v| acc.max(v));
        if m > 0.0 {
            1.0 / m
        } else {
            f64::INFINITY
        }
    }

    /// Largest step for a Strang step (half steps along `x1`).
    pub fn stable_dt_strang(&self) -> f64 {
        self.stable_dt(1).min(2.0 * self.stable_dt(0))
    }

    /// Largest step for the unsplit two-dimensional update.
    pub fn stable_dt_unsplit(&self) -> f64 {
        let total = &self.outflow(0) + &self.outflow(1).t();
        let m = total.fold(0.0f64, |acc, &v| acc.max(v));
        if m > 0.0 {
            1.0 / m
        } else {
            f64::INFINITY
        }
    }

    /// One SSP-RK3 step of the direction-`dir` sub-problem.
    pub fn sub_step(&self, dir: usize, f: &mut Slice, dt: f64) {
        if dt == 0.0 {
            return;
        }
        ssp_rk3_step(f, dt, |x, out| self.rate_direction(dir, x, out));
    }

    /// Half step along `x1`, full step along `x2`, half step along `x1`.
    pub fn strang_step(&self, f: &mut Slice, dt: f64) {
        self.sub_step(0, f, 0.5 * dt);
        self.sub_step(1, f, dt);
        self.sub_step(0, f, 0.5 * dt);
    }

    /// One SSP-RK3 step of the full two-dimensional operator.
    pub fn unsplit_step(&self, f: &mut Slice, dt: f64) {
        if dt == 0.0 {
            return;
        }
        ssp_rk3_step(f, dt, |x, out| self.rate(x, out));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Splitting {
    Strang,
    Unsplit,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Raise the substep count above `GridSpec::substeps_per_interval` when
    /// the stability bound requires it.
    pub auto_substeps: bool,
    pub splitting: Splitting,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            auto_substeps: true,
            splitting: Splitting::Strang,
        }
    }
}

pub(crate) fn required_substeps(interval: f64, stable_dt: f64) -> usize {
    if !stable_dt.is_finite() {
        return 1;
    }
    ((interval / stable_dt) * (1.0 + 1e-12)).ceil().max(1.0) as usize
}

pub(crate) fn choose_substeps(grid: &GridSpec, opts: &SolverOptions, stable_dt: f64) -> Result<usize> {
    let required = required_substeps(grid.dt_control(), stable_dt);
    let requested = grid.substeps_per_interval;
    if required > requested {
        if opts.auto_substeps {
            Ok(required)
        } else {
            Err(Error::CflViolation { requested, required })
        }
    } else {
        Ok(requested)
    }
}

/// Apply one Strang step with control `u_k`, failing if `dt` exceeds the
/// stability bound.
pub fn step_strang(f: &mut Slice, u_k: ControlPoint, p: &ModelParams, grid: &GridSpec, dt: f64) -> Result<()> {
    grid.check_slice(&f.view())?;
    let op = FpOperator::for_control(u_k, p, grid);
    let limit = op.stable_dt_strang();
    if dt > limit {
        return Err(Error::CflViolation {
            requested: 1,
            required: required_substeps(dt, limit),
        });
    }
    op.strang_step(f, dt);
    Ok(())
}

/// Solve the controlled Fokker-Planck equation and return the density at
/// every control-grid time.
pub fn solve_forward(f0: &Slice, u: &ControlTrajectory, p: &ModelParams, grid: &GridSpec) -> Result<DensityField> {
    solve_forward_opts(f0, u, p, grid, &SolverOptions::default())
}

pub fn solve_forward_opts(
    f0: &Slice,
    u: &ControlTrajectory,
    p: &ModelParams,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<DensityField> {
    u.check_grid(grid)?;
    u.check_admissible(p)?;
    solve_forward_with(f0, grid, opts, |k| p.generator(u.values[k]))
}

/// Forward solve for arbitrary coefficients; `generator(k)` supplies the
/// coefficients held on `[t_k, t_{k+1})`.
pub fn solve_forward_with<G, F>(f0: &Slice, grid: &GridSpec, opts: &SolverOptions, mut generator: F) -> Result<DensityField>
where
    G: DriftDiffusion,
    F: FnMut(usize) -> G,
{
    grid.validate()?;
    grid.check_slice(&f0.view())?;
    if f0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter(
            "initial density must be finite and nonnegative".into(),
        ));
    }
    let mut field = DensityField::zeros(*grid);
    field.values.index_axis_mut(Axis(0), 0).assign(f0);
    let mut f = f0.clone();
    for k in 0..grid.nt - 1 {
        let op = FpOperator::new(&generator(k), grid);
        let stable = match opts.splitting {
            Splitting::Strang => op.stable_dt_strang(),
            Splitting::Unsplit => op.stable_dt_unsplit(),
        };
        let n = choose_substeps(grid, opts, stable)?;
        let dt = grid.dt_control() / n as f64;
        for _ in 0..n {
            match opts.splitting {
                Splitting::Strang => op.strang_step(&mut f, dt),
                Splitting::Unsplit => op.unsplit_step(&mut f, dt),
            }
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "forward",
                time: grid.time(k + 1),
            });
        }
        debug_assert!(
            f.iter().all(|&v| v >= -1e-14),
            "negative density after interval {k}"
        );
        field.values.index_axis_mut(Axis(0), k + 1).assign(&f);
    }
    Ok(field)
}
