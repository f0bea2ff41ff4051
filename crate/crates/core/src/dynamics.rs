//! Controlled SIR dynamics: drift, squared noise amplitudes and the full
//! three-compartment right-hand side.

use crate::{Error, Result};

/// Epidemiological rates, noise strength and the control box `R_U`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// Birth rate.
    pub b: f64,
    /// Natural death rate.
    pub delta: f64,
    /// Infection rate.
    pub beta: f64,
    /// Recovery rate.
    pub gamma: f64,
    /// Coefficient under the square root of the noise amplitude,
    /// `σ_S = -σ_I = sqrt(noise_coeff) (1-α) S I`.
    pub noise_coeff: f64,
    pub alpha_max: f64,
    pub v_max: f64,
    pub eta_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            b: 0.01,
            delta: 0.01,
            beta: 3.0,
            gamma: 1.0,
            noise_coeff: 0.02,
            alpha_max: 0.85,
            v_max: 0.1,
            eta_max: 0.25,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("b", self.b),
            ("delta", self.delta),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("noise_coeff", self.noise_coeff),
            ("alpha_max", self.alpha_max),
            ("v_max", self.v_max),
            ("eta_max", self.eta_max),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "model.{name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        if self.alpha_max >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "model.alpha_max must be < 1, got {}",
                self.alpha_max
            )));
        }
        Ok(())
    }

    /// Upper corner of the control box.
    pub fn control_upper(&self) -> ControlPoint {
        ControlPoint::new(self.alpha_max, self.v_max, self.eta_max)
    }

    pub fn is_admissible(&self, u: ControlPoint) -> bool {
        let hi = self.control_upper().as_array();
        u.as_array()
            .iter()
            .zip(hi)
            .all(|(&c, h)| (0.0..=h).contains(&c))
    }

    /// Generator of the reduced `(S, I)` system under a frozen control.
    pub fn generator(&self, u: ControlPoint) -> SirGenerator {
        SirGenerator {
            params: *self,
            control: u,
        }
    }
}

/// A point `(x1, x2) = (S, I)` of the reduced state space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatePoint {
    pub x1: f64,
    pub x2: f64,
}

impl StatePoint {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }
}

/// Control values `(u1, u2, u3) = (α, v, η)`: NPI strength, vaccination rate
/// and treatment rate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlPoint {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl ControlPoint {
    pub const ZERO: ControlPoint = ControlPoint::new(0.0, 0.0, 0.0);

    pub const fn new(u1: f64, u2: f64, u3: f64) -> Self {
        Self { u1, u2, u3 }
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.u1, self.u2, self.u3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Drift `F(x, u)` of the reduced system.
pub fn drift(x: StatePoint, u: ControlPoint, p: &ModelParams) -> [f64; 2] {
    let infection = (1.0 - u.u1) * p.beta * x.x1 * x.x2;
    [
        p.b - infection - (u.u2 + p.delta) * x.x1,
        infection - (p.gamma + u.u3 + p.delta) * x.x2,
    ]
}

/// Squared noise amplitudes `[σ_S², σ_I²]`; the two are equal.
pub fn diffusion_sq(x: StatePoint, u: ControlPoint, p: &ModelParams) -> [f64; 2] {
    let s = (1.0 - u.u1) * x.x1 * x.x2;
    let v = p.noise_coeff * s * s;
    [v, v]
}

/// Analytic partial derivatives `[∂σ_S²/∂x1, ∂σ_I²/∂x2]`.
pub fn diffusion_sq_gradient(x: StatePoint, u: ControlPoint, p: &ModelParams) -> [f64; 2] {
    let k = 2.0 * p.noise_coeff * (1.0 - u.u1).powi(2);
    [k * x.x1 * x.x2 * x.x2, k * x.x1 * x.x1 * x.x2]
}

/// Right-hand side of the three-compartment controlled SIR ODE.
pub fn sir3_rhs(s: f64, i: f64, r: f64, u: ControlPoint, p: &ModelParams) -> [f64; 3] {
    let infection = (1.0 - u.u1) * p.beta * s * i;
    [
        p.b - infection - (u.u2 + p.delta) * s,
        infection - (p.gamma + u.u3 + p.delta) * i,
        (p.gamma + u.u3) * i + u.u2 * s - p.delta * r,
    ]
}

/// Coefficients of a two-dimensional diagonal-noise Fokker-Planck equation
/// `∂t f + ∇·(F f) = ½ Σ_j ∂²_j (σ_j² f)`.
pub trait DriftDiffusion {
    fn drift(&self, x: StatePoint) -> [f64; 2];
    fn diffusion_sq(&self, x: StatePoint) -> [f64; 2];
    /// `[∂σ_1²/∂x1, ∂σ_2²/∂x2]`.
    fn diffusion_sq_gradient(&self, x: StatePoint) -> [f64; 2];
}

/// SIR model with a frozen control value.
#[derive(Clone, Copy, Debug)]
pub struct SirGenerator {
    pub params: ModelParams,
    pub control: ControlPoint,
}

impl DriftDiffusion for SirGenerator {
    fn drift(&self, x: StatePoint) -> [f64; 2] {
        drift(x, self.control, &self.params)
    }

    fn diffusion_sq(&self, x: StatePoint) -> [f64; 2] {
        diffusion_sq(x, self.control, &self.params)
    }

    fn diffusion_sq_gradient(&self, x: StatePoint) -> [f64; 2] {
        diffusion_sq_gradient(x, self.control, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn paper() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn drift_at_origin_is_birth_only() {
        let f = drift(StatePoint::new(0.0, 0.0), ControlPoint::ZERO, &paper());
        assert_eq!(f, [0.01, 0.0]);
    }

    #[test]
    fn drift_with_strong_npi() {
        let p = paper();
        let u = ControlPoint::new(p.alpha_max, 0.0, 0.0);
        let f = drift(StatePoint::new(0.5, 0.5), u, &p);
        assert_abs_diff_eq!(f[0], -0.1075, epsilon = 1e-14);
        assert_abs_diff_eq!(f[1], -0.3925, epsilon = 1e-14);
    }

    #[test]
    fn infected_growth_near_disease_free_state() {
        let f = drift(StatePoint::new(0.99, 0.01), ControlPoint::ZERO, &paper());
        assert_abs_diff_eq!(f[1], 0.0196, epsilon = 1e-14);
        assert!(f[1] > 0.0);
    }

    #[test]
    fn diffusion_values() {
        let p = paper();
        assert_eq!(
            diffusion_sq(StatePoint::new(0.5, 0.0), ControlPoint::new(0.3, 0.1, 0.2), &p),
            [0.0, 0.0]
        );
        let d = diffusion_sq(StatePoint::new(1.0, 1.0), ControlPoint::ZERO, &p);
        assert_abs_diff_eq!(d[0], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.02, epsilon = 1e-15);
        let d = diffusion_sq(StatePoint::new(1.0, 1.0), ControlPoint::new(0.5, 0.0, 0.0), &p);
        assert_abs_diff_eq!(d[0], 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.005, epsilon = 1e-15);
    }

    #[test]
    fn diffusion_gradient_matches_central_difference() {
        let p = paper();
        let u = ControlPoint::new(0.4, 0.05, 0.1);
        let x = StatePoint::new(0.37, 0.62);
        let h = 1e-6;
        let g = diffusion_sq_gradient(x, u, &p);
        let d1 = (diffusion_sq(StatePoint::new(x.x1 + h, x.x2), u, &p)[0]
            - diffusion_sq(StatePoint::new(x.x1 - h, x.x2), u, &p)[0])
            / (2.0 * h);
        let d2 = (diffusion_sq(StatePoint::new(x.x1, x.x2 + h), u, &p)[1]
            - diffusion_sq(StatePoint::new(x.x1, x.x2 - h), u, &p)[1])
            / (2.0 * h);
        assert_abs_diff_eq!(g[0], d1, epsilon = 1e-9);
        assert_abs_diff_eq!(g[1], d2, epsilon = 1e-9);
    }

    #[test]
    fn sir3_values() {
        let p = paper();
        assert_eq!(sir3_rhs(0.0, 0.0, 0.0, ControlPoint::ZERO, &p), [0.01, 0.0, 0.0]);
        let r = sir3_rhs(0.99, 0.01, 0.0, ControlPoint::ZERO, &p);
        assert_abs_diff_eq!(r[2], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = paper();
        p.alpha_max = 1.0;
        assert!(p.validate().is_err());
        let mut p = paper();
        p.beta = -1.0;
        assert!(p.validate().is_err());
        assert!(paper().validate().is_ok());
    }

    fn state() -> impl Strategy<Value = StatePoint> {
        (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| StatePoint::new(a, b))
    }

    fn control() -> impl Strategy<Value = ControlPoint> {
        (0.0..=0.85f64, 0.0..=0.1f64, 0.0..=0.25f64).prop_map(|(a, b, c)| ControlPoint::new(a, b, c))
    }

    proptest! {
        #[test]
        fn drift_is_affine_in_each_control(x in state(), u in control(), t in 0.0..1.0f64, comp in 0usize..3) {
            let p = paper();
            let hi = p.control_upper().as_array();
            let mut lo = u.as_array();
            let mut top = u.as_array();
            let mut mid = u.as_array();
            lo[comp] = 0.0;
            top[comp] = hi[comp];
            mid[comp] = t * hi[comp];
            let (a, b, m) = (
                drift(x, ControlPoint::from_array(lo), &p),
                drift(x, ControlPoint::from_array(top), &p),
                drift(x, ControlPoint::from_array(mid), &p),
            );
            for k in 0..2 {
                prop_assert!((m[k] - ((1.0 - t) * a[k] + t * b[k])).abs() < 1e-12);
            }
        }

        #[test]
        fn diffusion_is_nonneg_quadratic_in_alpha(x in state(), u in control()) {
            let p = paper();
            let d = diffusion_sq(x, u, &p);
            prop_assert!(d[0] >= 0.0 && d[0] == d[1]);
            // second difference in u1 is constant for a quadratic
            let at = |a: f64| diffusion_sq(x, ControlPoint::new(a, u.u2, u.u3), &p)[0];
            let s1 = at(0.0) - 2.0 * at(0.25) + at(0.5);
            let s2 = at(0.25) - 2.0 * at(0.5) + at(0.75);
            prop_assert!((s1 - s2).abs() < 1e-14);
            if x.x1 * x.x2 == 0.0 {
                prop_assert_eq!(d[0], 0.0);
            }
        }

        #[test]
        fn sir3_sum_is_birth_minus_death(s in 0.0..1.0f64, i in 0.0..1.0f64, r in 0.0..1.0f64, u in control()) {
            let p = paper();
            let rhs = sir3_rhs(s, i, r, u, &p);
            let total = rhs[0] + rhs[1] + rhs[2];
            prop_assert!((total - (p.b - p.delta * (s + i + r))).abs() < 1e-14);
        }
    }
}
