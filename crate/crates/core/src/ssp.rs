//! Three-stage strong-stability-preserving Runge-Kutta (Shu-Osher form).
//!
//! Every stage is a convex combination of forward-Euler steps, so any
//! property preserved by forward Euler under `dt <= dt_fe` (positivity, a
//! discrete maximum principle) is preserved by the full step.

use ndarray::{Array2, Zip};

/// Advance `u` by `dt` for `du/dt = rhs(u)`. `rhs` writes into its second
/// argument.
pub(crate) fn ssp_rk3_step<F>(u: &mut Array2<f64>, dt: f64, mut rhs: F)
where
    F: FnMut(&Array2<f64>, &mut Array2<f64>),
{
    let mut l = Array2::zeros(u.raw_dim());

    rhs(u, &mut l);
    let mut u1 = u.clone();
    u1.scaled_add(dt, &l);

    rhs(&u1, &mut l);
    let mut u2 = u1;
    Zip::from(&mut u2).and(&*u).and(&l).for_each(|s, &u0, &lv| {
        *s = 0.75 * u0 + 0.25 * (*s + dt * lv);
    });

    rhs(&u2, &mut l);
    Zip::from(&mut *u).and(&u2).and(&l).for_each(|s, &s2, &lv| {
        *s = *s / 3.0 + 2.0 / 3.0 * (s2 + dt * lv);
    });
}
