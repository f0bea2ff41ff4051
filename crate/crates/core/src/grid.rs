//! Vertex-centred mesh on `[x_lo, x_hi]²`, the control-time mesh, trapezoidal
//! quadrature and the field containers shared by the solvers.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};

use crate::dynamics::{ControlPoint, ModelParams, StatePoint};
use crate::{Error, Result};

/// One time slice of a field on the spatial mesh, indexed `[[i1, i2]]` with
/// `i1` along `x1 = S` and `i2` along `x2 = I`.
pub type Slice = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Nodes per spatial axis, boundary included.
    pub nx: usize,
    /// Nodes of the control-time mesh, both endpoints included.
    pub nt: usize,
    pub t_final: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Minimum number of solver steps per control interval.
    pub substeps_per_interval: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 41,
            nt: 81,
            t_final: 10.0,
            x_lo: 0.0,
            x_hi: 1.0,
            substeps_per_interval: 1,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 {
            return Err(Error::InvalidParameter(format!("grid.nx must be >= 3, got {}", self.nx)));
        }
        if self.nt < 2 {
            return Err(Error::InvalidParameter(format!("grid.nt must be >= 2, got {}", self.nt)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid.t_final must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.x_hi.is_finite() && self.x_lo.is_finite() && self.x_hi > self.x_lo) {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy x_lo < x_hi, got [{}, {}]",
                self.x_lo, self.x_hi
            )));
        }
        if self.substeps_per_interval == 0 {
            return Err(Error::InvalidParameter("grid.substeps must be >= 1".into()));
        }
        Ok(())
    }

    /// Spatial spacing.
    pub fn h(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.nx - 1) as f64
    }

    /// Spacing of the control-time mesh.
    pub fn dt_control(&self) -> f64 {
        self.t_final / (self.nt - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.h()
    }

    pub fn point(&self, i1: usize, i2: usize) -> StatePoint {
        StatePoint::new(self.coord(i1), self.coord(i2))
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt_control()
    }

    pub fn times(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.nt, |k| self.time(k))
    }

    /// One-dimensional trapezoidal weights along a spatial axis. These are
    /// also the lengths of the vertex control volumes.
    pub fn spatial_weights(&self) -> Array1<f64> {
        trapezoid_weights(self.nx, self.h())
    }

    /// Trapezoidal weights on the control-time mesh.
    pub fn time_weights(&self) -> Array1<f64> {
        trapezoid_weights(self.nt, self.dt_control())
    }

    pub fn zeros(&self) -> Slice {
        Array2::zeros((self.nx, self.nx))
    }

    /// Evaluate a function of the state at every node.
    pub fn map_nodes(&self, mut f: impl FnMut(StatePoint) -> f64) -> Slice {
        Array2::from_shape_fn((self.nx, self.nx), |(i, j)| f(self.point(i, j)))
    }

    /// Nearest node index along one axis, or `None` outside the domain.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        let s = (x - self.x_lo) / self.h();
        if !(-0.5..=(self.nx as f64 - 0.5)).contains(&s) {
            return None;
        }
        Some((s.round() as usize).min(self.nx - 1))
    }

    pub(crate) fn check_slice(&self, s: &ArrayView2<f64>) -> Result<()> {
        if s.dim() != (self.nx, self.nx) {
            return Err(Error::dims(
                format!("{0}x{0}", self.nx),
                format!("{}x{}", s.nrows(), s.ncols()),
            ));
        }
        Ok(())
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Array1<f64> {
    let mut w = Array1::from_elem(n, h);
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Trapezoidal approximation of `∫_Ω field dx`.
pub fn quadrature(field: &ArrayView2<f64>, grid: &GridSpec) -> Result<f64> {
    grid.check_slice(field)?;
    // unit weights (1/2 on the boundary) first, the cell area last
    let n = grid.nx;
    let unit = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for (i, row) in field.axis_iter(Axis(0)).enumerate() {
        let inner: f64 = row.iter().enumerate().map(|(j, f)| f * unit(j)).sum();
        total += unit(i) * inner;
    }
    let span = grid.x_hi - grid.x_lo;
    let cells = ((n - 1) * (n - 1)) as f64;
    Ok(total * span * span / cells)
}

/// Isotropic (or axis-aligned) Gaussian sampled at the nodes, restricted to
/// the domain and rescaled to unit discrete mass.
pub fn make_initial_density(center: StatePoint, variance: [f64; 2], grid: &GridSpec) -> Result<Slice> {
    if !(variance[0] > 0.0 && variance[1] > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "initial variance must be positive, got {variance:?}"
        )));
    }
    let raw = grid.map_nodes(|x| {
        let d1 = x.x1 - center.x1;
        let d2 = x.x2 - center.x2;
        (-(d1 * d1) / (2.0 * variance[0]) - (d2 * d2) / (2.0 * variance[1])).exp()
    });
    let mass = quadrature(&raw.view(), grid)?;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "initial density vanishes on the grid (center {center:?})"
        )));
    }
    Ok(raw / mass)
}

/// Time history of the forward density on the control-time mesh.
#[derive(Clone, Debug)]
pub struct DensityField {
    /// Shape `(nt, nx, nx)`.
    pub values: Array3<f64>,
    pub grid: GridSpec,
}

/// Time history of the adjoint (costate) on the control-time mesh.
#[derive(Clone, Debug)]
pub struct AdjointField {
    /// Shape `(nt, nx, nx)`.
    pub values: Array3<f64>,
    pub grid: GridSpec,
}

macro_rules! field_accessors {
    ($t:ty) => {
        impl $t {
            pub fn zeros(grid: GridSpec) -> Self {
                Self {
                    values: Array3::zeros((grid.nt, grid.nx, grid.nx)),
                    grid,
                }
            }

            pub fn slice(&self, k: usize) -> ArrayView2<'_, f64> {
                self.values.index_axis(Axis(0), k)
            }

            pub fn last(&self) -> ArrayView2<'_, f64> {
                self.slice(self.grid.nt - 1)
            }

            pub(crate) fn check_grid(&self, grid: &GridSpec) -> Result<()> {
                if self.values.dim() != (grid.nt, grid.nx, grid.nx) {
                    let (a, b, c) = self.values.dim();
                    return Err(Error::dims(
                        format!("{}x{}x{}", grid.nt, grid.nx, grid.nx),
                        format!("{a}x{b}x{c}"),
                    ));
                }
                Ok(())
            }
        }
    };
}

field_accessors!(DensityField);
field_accessors!(AdjointField);

impl DensityField {
    /// Discrete mass of every slice.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.grid.nt)
            .map(|k| quadrature(&self.slice(k), &self.grid).expect("shape checked at construction"))
            .collect()
    }

    /// Expectation of `g(x)` at time index `k`.
    pub fn expectation(&self, k: usize, g: impl FnMut(StatePoint) -> f64) -> f64 {
        let gv = self.grid.map_nodes(g);
        let prod = &gv * &self.slice(k);
        quadrature(&prod.view(), &self.grid).expect("shape checked at construction")
    }

    /// Linear interpolation in time between stored slices.
    pub fn at_time(&self, t: f64) -> Result<Slice> {
        let g = &self.grid;
        if !(t >= -1e-12 && t <= g.t_final + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "time {t} outside [0, {}]",
                g.t_final
            )));
        }
        let s = (t / g.dt_control()).clamp(0.0, (g.nt - 1) as f64);
        let k = s.floor() as usize;
        let frac = s - k as f64;
        if k + 1 >= g.nt || frac < 1e-9 {
            return Ok(self.slice(k.min(g.nt - 1)).to_owned());
        }
        if frac > 1.0 - 1e-9 {
            return Ok(self.slice(k + 1).to_owned());
        }
        Ok(&self.slice(k) * (1.0 - frac) + &self.slice(k + 1) * frac)
    }
}

/// Control values on the control-time mesh. Interval `[t_k, t_{k+1})` uses
/// the value at `t_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrajectory {
    pub values: Vec<ControlPoint>,
}

impl ControlTrajectory {
    pub fn zeros(nt: usize) -> Self {
        Self::constant(nt, ControlPoint::ZERO)
    }

    pub fn constant(nt: usize, u: ControlPoint) -> Self {
        Self { values: vec![u; nt] }
    }

    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(f64) -> ControlPoint) -> Self {
        Self {
            values: (0..grid.nt).map(|k| f(grid.time(k))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zero-order-hold value at time `t`.
    pub fn at_time(&self, t: f64, grid: &GridSpec) -> ControlPoint {
        let k = ((t / grid.dt_control()) + 1e-9).floor().max(0.0) as usize;
        self.values[k.min(self.values.len() - 2)]
    }

    pub(crate) fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.values.len() != grid.nt {
            return Err(Error::dims(format!("{} control rows", grid.nt), self.values.len()));
        }
        Ok(())
    }

    pub fn check_admissible(&self, p: &ModelParams) -> Result<()> {
        for (k, u) in self.values.iter().enumerate() {
            if !p.is_admissible(*u) {
                return Err(Error::InvalidParameter(format!(
                    "control at index {k} outside the admissible box: {u:?}"
                )));
            }
        }
        Ok(())
    }
}
