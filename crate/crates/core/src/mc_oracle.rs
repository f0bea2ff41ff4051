//! Independent cross-checks: Euler-Maruyama path ensembles of the SDE,
//! histogram densities on the solver grid, and RK4 for the deterministic
//! three-compartment model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{diffusion_sq, drift, sir3_rhs, ModelParams, StatePoint};
use crate::grid::{quadrature, ControlTrajectory, DensityField, GridSpec, Slice};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Mirror across the violated face.
    #[default]
    Reflect,
    ClampToDomain,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub n_paths: usize,
    /// Requested Euler-Maruyama step; rounded down so that it divides the
    /// control interval.
    pub dt_em: f64,
    pub seed: u64,
    pub boundary: BoundaryPolicy,
}

impl EnsembleSpec {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        if !(self.dt_em > 0.0 && self.dt_em <= grid.dt_control() * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "dt_em must lie in (0, {}], got {}",
                grid.dt_control(),
                self.dt_em
            )));
        }
        Ok(())
    }

    fn steps_per_interval(&self, grid: &GridSpec) -> usize {
        ((grid.dt_control() / self.dt_em) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// Gaussian with diagonal covariance restricted to `[lo, hi]²` by rejection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedGaussian {
    pub center: StatePoint,
    pub variance: [f64; 2],
    pub lo: f64,
    pub hi: f64,
    pub max_tries: usize,
}

impl TruncatedGaussian {
    pub fn new(center: StatePoint, variance: [f64; 2], grid: &GridSpec) -> Self {
        Self {
            center,
            variance,
            lo: grid.x_lo,
            hi: grid.x_hi,
            max_tries: 10_000,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<StatePoint> {
        let sd = [self.variance[0].sqrt(), self.variance[1].sqrt()];
        for _ in 0..self.max_tries {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let x = StatePoint::new(self.center.x1 + sd[0] * z1, self.center.x2 + sd[1] * z2);
            if (self.lo..=self.hi).contains(&x.x1) && (self.lo..=self.hi).contains(&x.x2) {
                return Ok(x);
            }
        }
        Err(Error::SamplerExhausted(self.max_tries))
    }
}

/// All path positions at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub points: Vec<StatePoint>,
}

impl Snapshot {
    /// Sample mean of `g` and its standard error.
    pub fn mean_and_stderr(&self, g: impl Fn(StatePoint) -> f64) -> Result<(f64, f64)> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::EmptySnapshot);
        }
        let vals: Vec<f64> = self.points.iter().map(|&x| g(x)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Ok((mean, 0.0));
        }
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok((mean, (var / n as f64).sqrt()))
    }
}

fn apply_boundary(v: f64, lo: f64, hi: f64, policy: BoundaryPolicy) -> f64 {
    match policy {
        BoundaryPolicy::ClampToDomain => v.clamp(lo, hi),
        BoundaryPolicy::Reflect => {
            let mut v = v;
            for _ in 0..4 {
                if v < lo {
                    v = 2.0 * lo - v;
                } else if v > hi {
                    v = 2.0 * hi - v;
                } else {
                    return v;
                }
            }
            v.clamp(lo, hi)
        }
    }
}

/// Simulate `spec.n_paths` paths under `u` and record them at
/// `snapshot_times` (each rounded to the nearest Euler-Maruyama step).
/// Path `i` draws from its own generator seeded with `seed ^ i`.
pub fn em_ensemble(
    sampler: &TruncatedGaussian,
    u: &ControlTrajectory,
    p: &ModelParams,
    grid: &GridSpec,
    spec: &EnsembleSpec,
    snapshot_times: &[f64],
) -> Result<Vec<Snapshot>> {
    spec.validate(grid)?;
    u.check_grid(grid)?;
    let m = spec.steps_per_interval(grid);
    let dt = grid.dt_control() / m as f64;
    let total = (grid.nt - 1) * m;
    let mut targets = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        if !(0.0..=grid.t_final).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "snapshot time {t} outside [0, {}]",
                grid.t_final
            )));
        }
        targets.push(((t / dt).round() as usize).min(total));
    }
    let last = targets.iter().copied().max().unwrap_or(0);
    let (lo, hi) = (grid.x_lo, grid.x_hi);
    let sqdt = dt.sqrt();

    let paths: Vec<Vec<StatePoint>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|idx| -> Result<Vec<StatePoint>> {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ idx as u64);
            let mut x = sampler.sample(&mut rng)?;
            let mut out = vec![x; targets.len()];
            let record = |step: usize, x: StatePoint, out: &mut Vec<StatePoint>| {
                for (slot, &t) in out.iter_mut().zip(&targets) {
                    if t == step {
                        *slot = x;
                    }
                }
            };
            record(0, x, &mut out);
            for step in 0..last {
                let w = u.values[step / m];
                let f = drift(x, w, p);
                let s = diffusion_sq(x, w, p);
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let y1 = x.x1 + f[0] * dt + s[0].sqrt() * sqdt * z1;
                let y2 = x.x2 + f[1] * dt + s[1].sqrt() * sqdt * z2;
                x = StatePoint::new(
                    apply_boundary(y1, lo, hi, spec.boundary),
                    apply_boundary(y2, lo, hi, spec.boundary),
                );
                record(step + 1, x, &mut out);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(targets
        .iter()
        .enumerate()
        .map(|(s, &step)| Snapshot {
            time: step as f64 * dt,
            points: paths.iter().map(|p| p[s]).collect(),
        })
        .collect())
}

/// Empirical density on the grid: each point is counted at its nearest node
/// and the count divided by `N` times the area of that node's dual cell.
pub fn histogram_density(points: &[StatePoint], grid: &GridSpec) -> Result<Slice> {
    if points.is_empty() {
        return Err(Error::EmptySnapshot);
    }
    let mut counts = grid.zeros();
    for x in points {
        match (grid.nearest_index(x.x1), grid.nearest_index(x.x2)) {
            (Some(i), Some(j)) => counts[[i, j]] += 1.0,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "point ({}, {}) outside the domain",
                    x.x1, x.x2
                )))
            }
        }
    }
    let w = grid.spatial_weights();
    let n = points.len() as f64;
    for ((i, j), c) in counts.indexed_iter_mut() {
        *c /= n * w[i] * w[j];
    }
    Ok(counts)
}

/// `∫ |a - b| dx`.
pub fn l1_distance(a: &Slice, b: &Slice, grid: &GridSpec) -> Result<f64> {
    grid.check_slice(&a.view())?;
    grid.check_slice(&b.view())?;
    quadrature(&(a - b).mapv(f64::abs).view(), grid)
}

/// Agreement between an FP solution and an ensemble at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McComparison {
    /// Time actually sampled (nearest Euler-Maruyama step).
    pub time: f64,
    pub l1: f64,
    pub fp_mean_i: f64,
    pub mc_mean_i: f64,
    pub mc_stderr_i: f64,
}

/// Simulate an ensemble under `u` and compare it with `density` at `time`.
pub fn compare_with_fp(
    density: &DensityField,
    sampler: &TruncatedGaussian,
    u: &ControlTrajectory,
    p: &ModelParams,
    grid: &GridSpec,
    spec: &EnsembleSpec,
    time: f64,
) -> Result<McComparison> {
    let snaps = em_ensemble(sampler, u, p, grid, spec, &[time])?;
    let snap = &snaps[0];
    let fp = density.at_time(snap.time)?;
    let hist = histogram_density(&snap.points, grid)?;
    let l1 = l1_distance(&fp, &hist, grid)?;
    let fp_mean_i = quadrature(&(&fp * &grid.map_nodes(|x| x.x2)).view(), grid)?;
    let (mc_mean_i, mc_stderr_i) = snap.mean_and_stderr(|x| x.x2)?;
    Ok(McComparison {
        time: snap.time,
        l1,
        fp_mean_i,
        mc_mean_i,
        mc_stderr_i,
    })
}

/// RK4 substeps per control interval in [`rk4_sir3`].
pub const RK4_SUBSTEPS: usize = 20;

/// Classical RK4 for `(S, I, R)` under zero-order-hold controls; returns
/// `[t, S, I, R]` at every control-time node.
pub fn rk4_sir3(s0: f64, i0: f64, r0: f64, u: &ControlTrajectory, p: &ModelParams, grid: &GridSpec) -> Result<Vec<[f64; 4]>> {
    u.check_grid(grid)?;
    if !(s0 >= 0.0 && i0 >= 0.0 && r0 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "initial compartments must be nonnegative, got ({s0}, {i0}, {r0})"
        )));
    }
    let h = grid.dt_control() / RK4_SUBSTEPS as f64;
    let mut y = [s0, i0, r0];
    let mut out = Vec::with_capacity(grid.nt);
    out.push([0.0, s0, i0, r0]);
    let axpy = |y: [f64; 3], a: f64, k: [f64; 3]| [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]];
    for k in 0..grid.nt - 1 {
        let w = u.values[k];
        let rhs = |y: [f64; 3]| sir3_rhs(y[0], y[1], y[2], w, p);
        for _ in 0..RK4_SUBSTEPS {
            let k1 = rhs(y);
            let k2 = rhs(axpy(y, 0.5 * h, k1));
            let k3 = rhs(axpy(y, 0.5 * h, k2));
            let k4 = rhs(axpy(y, h, k3));
            for c in 0..3 {
                y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        out.push([grid.time(k + 1), y[0], y[1], y[2]]);
    }
    Ok(out)
}
