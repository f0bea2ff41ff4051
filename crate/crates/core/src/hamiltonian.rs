//! Pontryagin Hamiltonian
//! `H(t, f, q, w) = ℓ(w) - ∫ f [F(x,w)·∇q + ½ Σ σ_j²(x,w) ∂²_j q] dx`
//! and the exact box-constrained minimizer of `H + ε|w - u_prev|²`.
//!
//! Derivatives of `q` are centred with mirrored ghost nodes, so `∇q`
//! vanishes on the boundary and `∂²_j q = 2(q_1 - q_0)/h²` there.

use ndarray::{ArrayView2, Zip};
use rayon::prelude::*;

use crate::cost::{control_cost, CostSpec};
use crate::dynamics::{diffusion_sq, drift, ControlPoint, ModelParams};
use crate::grid::{quadrature, AdjointField, DensityField, GridSpec, Slice};
use crate::Result;

/// `H(w) = Σ_j (lin_j w_j + quad_j w_j²) + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianCoeffs {
    pub lin: [f64; 3],
    pub quad: [f64; 3],
    pub offset: f64,
}

impl HamiltonianCoeffs {
    pub fn eval(&self, w: ControlPoint) -> f64 {
        let w = w.as_array();
        let mut h = self.offset;
        for j in 0..3 {
            h += self.lin[j] * w[j] + self.quad[j] * w[j] * w[j];
        }
        h
    }

    /// `H(w) + ε |w - u_prev|²`.
    pub fn eval_eps(&self, w: ControlPoint, u_prev: ControlPoint, eps: f64) -> f64 {
        let d = [w.u1 - u_prev.u1, w.u2 - u_prev.u2, w.u3 - u_prev.u3];
        self.eval(w) + eps * d.iter().map(|x| x * x).sum::<f64>()
    }

    /// Global minimizer of [`Self::eval_eps`] over `[0, upper]`.
    pub fn minimize_eps(&self, u_prev: ControlPoint, eps: f64, upper: ControlPoint) -> ControlPoint {
        let prev = u_prev.as_array();
        let hi = upper.as_array();
        let mut w = [0.0; 3];
        for j in 0..3 {
            let a = self.quad[j] + eps;
            let b = self.lin[j] - 2.0 * eps * prev[j];
            w[j] = minimize_quadratic(a, b, hi[j]);
        }
        ControlPoint::from_array(w)
    }
}

/// Minimizer of `a w² + b w` on `[0, hi]`; ties go to the smaller value.
pub fn minimize_quadratic(a: f64, b: f64, hi: f64) -> f64 {
    if hi <= 0.0 {
        return 0.0;
    }
    let value = |w: f64| a * w * w + b * w;
    if a > 0.0 {
        let w = (-b / (2.0 * a)).clamp(0.0, hi);
        // the vertex can round to a value marginally above an endpoint tie
        if value(w) < value(0.0) {
            w
        } else {
            0.0
        }
    } else if value(hi) < value(0.0) {
        hi
    } else {
        0.0
    }
}

/// Centred first and second derivatives of `q` with mirrored ghosts:
/// `[∂_1 q, ∂_2 q, ∂²_1 q, ∂²_2 q]`.
pub fn q_derivatives(q: &ArrayView2<f64>, grid: &GridSpec) -> Result<[Slice; 4]> {
    grid.check_slice(q)?;
    let n = grid.nx;
    let h = grid.h();
    let mut d1 = grid.zeros();
    let mut d2 = grid.zeros();
    let mut d11 = grid.zeros();
    let mut d22 = grid.zeros();
    let nb = |i: usize| {
        let lo = if i == 0 { 1 } else { i - 1 };
        let hi = if i == n - 1 { n - 2 } else { i + 1 };
        (lo, hi)
    };
    for i in 0..n {
        let (il, ih) = nb(i);
        for j in 0..n {
            let (jl, jh) = nb(j);
            let c = q[[i, j]];
            d1[[i, j]] = (q[[ih, j]] - q[[il, j]]) / (2.0 * h);
            d2[[i, j]] = (q[[i, jh]] - q[[i, jl]]) / (2.0 * h);
            d11[[i, j]] = (q[[ih, j]] - 2.0 * c + q[[il, j]]) / (h * h);
            d22[[i, j]] = (q[[i, jh]] - 2.0 * c + q[[i, jl]]) / (h * h);
        }
    }
    Ok([d1, d2, d11, d22])
}

/// Direct evaluation of `H` for one density/adjoint slice pair.
pub fn eval_h_slice(
    f: &ArrayView2<f64>,
    q: &ArrayView2<f64>,
    w: ControlPoint,
    spec: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
) -> Result<f64> {
    grid.check_slice(f)?;
    let [d1, d2, d11, d22] = q_derivatives(q, grid)?;
    let mut integrand = grid.zeros();
    for ((i, j), v) in integrand.indexed_iter_mut() {
        let x = grid.point(i, j);
        let fv = drift(x, w, p);
        let s = diffusion_sq(x, w, p);
        let gen = fv[0] * d1[[i, j]] + fv[1] * d2[[i, j]] + 0.5 * (s[0] * d11[[i, j]] + s[1] * d22[[i, j]]);
        *v = f[[i, j]] * gen;
    }
    Ok(control_cost(w, spec) - quadrature(&integrand.view(), grid)?)
}

pub fn eval_h(
    k: usize,
    f: &DensityField,
    q: &AdjointField,
    w: ControlPoint,
    spec: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
) -> Result<f64> {
    f.check_grid(grid)?;
    q.check_grid(grid)?;
    eval_h_slice(&f.slice(k), &q.slice(k), w, spec, p, grid)
}

/// Polynomial coefficients of `H` in `w` for one slice pair.
pub fn extract_coeffs_slice(
    f: &ArrayView2<f64>,
    q: &ArrayView2<f64>,
    spec: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
) -> Result<HamiltonianCoeffs> {
    grid.check_slice(f)?;
    let [d1, d2, d11, d22] = q_derivatives(q, grid)?;
    let moment = |g: &dyn Fn(f64, f64, usize, usize) -> f64| -> Result<f64> {
        let mut field = grid.zeros();
        Zip::indexed(&mut field).and(f).for_each(|(i, j), v, &fv| {
            let x = grid.point(i, j);
            *v = fv * g(x.x1, x.x2, i, j);
        });
        quadrature(&field.view(), grid)
    };
    let p1 = moment(&|_, _, i, j| d1[[i, j]])?;
    let x1 = moment(&|a, _, i, j| a * d1[[i, j]])?;
    let y2 = moment(&|_, b, i, j| b * d2[[i, j]])?;
    let a1 = moment(&|a, b, i, j| a * b * d1[[i, j]])?;
    let a2 = moment(&|a, b, i, j| a * b * d2[[i, j]])?;
    let s = moment(&|a, b, i, j| a * a * b * b * (d11[[i, j]] + d22[[i, j]]))?;

    let (b1, b2) = (spec.beta1, spec.beta2);
    let infection = p.beta * (a2 - a1);
    let noise = p.noise_coeff * s;
    Ok(HamiltonianCoeffs {
        lin: [b1 + infection + noise, b1 + x1, b1 + y2],
        quad: [0.5 * b2 - 0.5 * noise, 0.5 * b2, 0.5 * b2],
        offset: -(p.b * p1 - p.delta * x1 - (p.gamma + p.delta) * y2 + infection + 0.5 * noise),
    })
}

pub fn extract_coeffs(
    k: usize,
    f: &DensityField,
    q: &AdjointField,
    spec: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
) -> Result<HamiltonianCoeffs> {
    f.check_grid(grid)?;
    q.check_grid(grid)?;
    extract_coeffs_slice(&f.slice(k), &q.slice(k), spec, p, grid)
}

/// Coefficients at every time index, computed in parallel.
pub fn extract_all(
    f: &DensityField,
    q: &AdjointField,
    spec: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
) -> Result<Vec<HamiltonianCoeffs>> {
    f.check_grid(grid)?;
    q.check_grid(grid)?;
    (0..grid.nt)
        .into_par_iter()
        .map(|k| extract_coeffs_slice(&f.slice(k), &q.slice(k), spec, p, grid))
        .collect()
}

/// Exact minimizer of `H_ε` over the control box at time index `k`.
#[allow(clippy::too_many_arguments)]
pub fn minimize_h_eps(
    k: usize,
    f: &DensityField,
    q: &AdjointField,
    u_prev_k: ControlPoint,
    eps: f64,
    spec: &CostSpec,
    p: &ModelParams,
    grid: &GridSpec,
) -> Result<ControlPoint> {
    let c = extract_coeffs(k, f, q, spec, p, grid)?;
    Ok(c.minimize_eps(u_prev_k, eps, p.control_upper()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{RunningCost, TerminalCost};
    use crate::dynamics::StatePoint;
    use crate::grid::make_initial_density;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec() -> CostSpec {
        CostSpec {
            beta1: 0.2,
            beta2: 0.1,
            running: RunningCost::LinearInI(1.5),
            terminal: TerminalCost::Zero,
        }
    }

    fn smooth_pair(seed: f64, g: &GridSpec) -> (Slice, Slice) {
        let f = make_initial_density(StatePoint::new(0.3 + 0.4 * seed, 0.6 - 0.3 * seed), [0.03, 0.05], g).unwrap();
        let q = g.map_nodes(|x| {
            -(1.0 + seed) * (2.1 * x.x1 + seed).sin() * (1.3 * x.x2 - 0.4).cos() - 0.7 * x.x1 * x.x2 * x.x2
        });
        (f, q)
    }

    #[test]
    fn constant_adjoint_leaves_control_cost() {
        let g = GridSpec::default();
        let p = ModelParams::default();
        let (f, _) = smooth_pair(0.2, &g);
        let q = g.map_nodes(|_| -3.0);
        let w = ControlPoint::new(0.5, 0.07, 0.2);
        let h = eval_h_slice(&f.view(), &q.view(), w, &spec(), &p, &g).unwrap();
        assert_abs_diff_eq!(h, control_cost(w, &spec()), epsilon = 1e-14);
    }

    #[test]
    fn zero_density_leaves_control_cost() {
        let g = GridSpec::default();
        let p = ModelParams::default();
        let (_, q) = smooth_pair(0.7, &g);
        let f = g.zeros();
        let w = ControlPoint::new(0.1, 0.02, 0.25);
        let h = eval_h_slice(&f.view(), &q.view(), w, &spec(), &p, &g).unwrap();
        assert_eq!(h, control_cost(w, &spec()));
        let c = extract_coeffs_slice(&f.view(), &q.view(), &spec(), &p, &g).unwrap();
        assert_eq!(c.lin, [0.2; 3]);
        assert_eq!(c.quad, [0.05; 3]);
        assert_eq!(c.offset, 0.0);
        assert_eq!(c.minimize_eps(ControlPoint::ZERO, 1.0, p.control_upper()), ControlPoint::ZERO);
    }

    #[test]
    fn coefficients_reproduce_direct_evaluation() {
        let g = GridSpec::default();
        let p = ModelParams::default();
        for (n, seed) in [0.0, 0.35, 0.8].into_iter().enumerate() {
            let (f, q) = smooth_pair(seed, &g);
            let c = extract_coeffs_slice(&f.view(), &q.view(), &spec(), &p, &g).unwrap();
            for m in 0..5 {
                let t = (n * 5 + m) as f64 / 15.0;
                let w = ControlPoint::new(0.85 * t, 0.1 * (1.0 - t), 0.25 * (0.5 + 0.5 * (7.0 * t).sin()));
                let direct = eval_h_slice(&f.view(), &q.view(), w, &spec(), &p, &g).unwrap();
                assert_abs_diff_eq!(c.eval(w), direct, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn v_coefficient_matches_finite_difference() {
        let g = GridSpec::default();
        let p = ModelParams::default();
        let (f, q) = smooth_pair(0.5, &g);
        let c = extract_coeffs_slice(&f.view(), &q.view(), &spec(), &p, &g).unwrap();
        let eh = |v: f64| eval_h_slice(&f.view(), &q.view(), ControlPoint::new(0.3, v, 0.1), &spec(), &p, &g).unwrap();
        // H is exactly quadratic in v with curvature β2/2
        let d = 1e-3;
        let slope = (eh(0.05 + d) - eh(0.05 - d)) / (2.0 * d);
        assert_abs_diff_eq!(slope, c.lin[1] + 2.0 * c.quad[1] * 0.05, epsilon = 1e-8);
    }

    #[test]
    fn affine_without_noise_and_quadratic_cost() {
        let g = GridSpec::default();
        let p = ModelParams {
            noise_coeff: 0.0,
            ..ModelParams::default()
        };
        let s = CostSpec { beta2: 0.0, ..spec() };
        let (f, q) = smooth_pair(0.1, &g);
        let c = extract_coeffs_slice(&f.view(), &q.view(), &s, &p, &g).unwrap();
        assert_eq!(c.quad, [0.0; 3]);
    }

    #[test]
    fn huge_eps_pins_previous_control() {
        let g = GridSpec::default();
        let p = ModelParams::default();
        let (f, q) = smooth_pair(0.6, &g);
        let c = extract_coeffs_slice(&f.view(), &q.view(), &spec(), &p, &g).unwrap();
        let prev = ControlPoint::new(0.4, 0.03, 0.17);
        let w = c.minimize_eps(prev, 1e12, p.control_upper());
        for (a, b) in w.as_array().iter().zip(prev.as_array()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn closed_form_beats_grid_search() {
        let g = GridSpec::default();
        let p = ModelParams::default();
        let upper = p.control_upper();
        let res = 200;
        let axis = |hi: f64| (0..res).map(|i| hi * i as f64 / (res - 1) as f64).collect::<Vec<_>>();
        let axes = [axis(upper.u1), axis(upper.u2), axis(upper.u3)];
        for seed in [0.15, 0.55, 0.9] {
            let (f, q) = smooth_pair(seed, &g);
            let c = extract_coeffs_slice(&f.view(), &q.view(), &spec(), &p, &g).unwrap();
            let prev = ControlPoint::new(0.85 * seed, 0.1 * (1.0 - seed), 0.25 * seed);
            let eps = 0.05 + seed;
            let w = c.minimize_eps(prev, eps, upper);
            let mut best = (f64::INFINITY, [0.0; 3]);
            for &a in &axes[0] {
                for &b in &axes[1] {
                    for &d in &axes[2] {
                        let v = c.eval_eps(ControlPoint::new(a, b, d), prev, eps);
                        if v < best.0 {
                            best = (v, [a, b, d]);
                        }
                    }
                }
            }
            assert!(c.eval_eps(w, prev, eps) <= best.0 + 1e-14);
            let hi = upper.as_array();
            for j in 0..3 {
                assert!((w.as_array()[j] - best.1[j]).abs() <= hi[j] / (res - 1) as f64 + 1e-15);
            }
        }
    }

    #[test]
    fn quadratic_minimizer_ties_and_edges() {
        assert_eq!(minimize_quadratic(0.0, 0.0, 1.0), 0.0);
        assert_eq!(minimize_quadratic(-1.0, 1.0, 1.0), 0.0);
        assert_eq!(minimize_quadratic(-1.0, 0.5, 1.0), 1.0);
        assert_eq!(minimize_quadratic(1.0, -1.0, 1.0), 0.5);
        assert_eq!(minimize_quadratic(1.0, -5.0, 1.0), 1.0);
        assert_eq!(minimize_quadratic(1.0, -5.0, 0.0), 0.0);
    }

    fn coeffs() -> impl Strategy<Value = HamiltonianCoeffs> {
        (
            prop::array::uniform3(-2.0..2.0f64),
            prop::array::uniform3(-0.5..0.5f64),
            -1.0..1.0f64,
        )
            .prop_map(|(lin, quad, offset)| HamiltonianCoeffs { lin, quad, offset })
    }

    fn control() -> impl Strategy<Value = ControlPoint> {
        (0.0..=0.85f64, 0.0..=0.1f64, 0.0..=0.25f64).prop_map(|(a, b, c)| ControlPoint::new(a, b, c))
    }

    proptest! {
        #[test]
        fn augmented_hamiltonian_is_separable(c in coeffs(), w in control(), prev in control(), eps in 1e-3..10.0f64, z in 0.0..=0.1f64) {
            // changing only v shifts H_ε by an amount independent of α and η
            let base = ControlPoint::new(0.0, w.u2, 0.0);
            let moved = ControlPoint::new(0.0, z, 0.0);
            let d_ref = c.eval_eps(moved, prev, eps) - c.eval_eps(base, prev, eps);
            let d = c.eval_eps(ControlPoint::new(w.u1, z, w.u3), prev, eps) - c.eval_eps(w, prev, eps);
            prop_assert!((d - d_ref).abs() <= 1e-12);
        }

        #[test]
        fn minimizer_is_optimal(c in coeffs(), prev in control(), eps in 1e-3..10.0f64, ws in prop::collection::vec(control(), 50)) {
            let upper = ModelParams::default().control_upper();
            let m = c.minimize_eps(prev, eps, upper);
            prop_assert!(ModelParams::default().is_admissible(m));
            let hm = c.eval_eps(m, prev, eps);
            for w in ws {
                prop_assert!(hm <= c.eval_eps(w, prev, eps) + 1e-12);
            }
        }
    }
}
