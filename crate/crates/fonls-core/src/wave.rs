//! Standing-wave profile phi(x) = a sech^2(bx) and the conserved functionals.
//!
//! With a = sqrt(3/10), b = sqrt(1/20) and alpha = 4/25 the profile solves
//! phi'''' - phi'' + alpha phi - phi^3 = 0, so u = e^{i alpha t} phi solves
//! the evolution equation. E and F are the conserved energy and mass of the
//! real pair (P, Q); G = E + alpha F has (phi, 0) as a critical point.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, RealField};
use crate::ALPHA;

/// Peak amplitude a = sqrt(3/10).
pub const AMPLITUDE: f64 = 0.5477225575051661;
/// Inverse width b = sqrt(1/20).
pub const INV_WIDTH: f64 = 0.22360679774997896;

/// Sampled profile with its analytic first derivative.
#[derive(Clone, Debug)]
pub struct WaveProfile {
    amplitude: f64,
    inv_width: f64,
    alpha: f64,
    samples: RealField,
    deriv: RealField,
}

/// Samples phi and phi' = -2ab sech^2(bx) tanh(bx) on the grid.
pub fn profile(grid: &Arc<GridSpec>) -> WaveProfile {
    let a = AMPLITUDE;
    let b = INV_WIDTH;
    let sech2 = |x: f64| {
        let c = (b * x).cosh();
        1.0 / (c * c)
    };
    let samples = RealField::from_fn(grid, |x| a * sech2(x));
    let deriv = RealField::from_fn(grid, |x| -2.0 * a * b * sech2(x) * (b * x).tanh());
    WaveProfile { amplitude: a, inv_width: b, alpha: ALPHA, samples, deriv }
}

impl WaveProfile {
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
    pub fn inv_width(&self) -> f64 {
        self.inv_width
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn grid(&self) -> &Arc<GridSpec> {
        self.samples.grid()
    }
    /// phi sampled on the grid.
    pub fn samples(&self) -> &RealField {
        &self.samples
    }
    /// phi' sampled analytically (not by spectral differentiation).
    pub fn deriv(&self) -> &RealField {
        &self.deriv
    }
    /// The wave as a complex state (P, Q) = (phi, 0).
    pub fn state(&self) -> ComplexField {
        ComplexField::from_real(&self.samples)
    }
}

/// Max-norm of phi'''' - phi'' + alpha phi - phi^3 with spectral derivatives.
pub fn ode_residual(p: &WaveProfile) -> f64 {
    ode_residual_at(p, p.alpha)
}

/// Same residual with the frequency replaced, for sensitivity controls.
pub fn ode_residual_at(p: &WaveProfile, alpha: f64) -> f64 {
    let phi = &p.samples;
    let d2 = phi.derivative(2).expect("order 2 is always valid");
    let d4 = phi.derivative(4).expect("order 4 is always valid");
    phi.values()
        .iter()
        .zip(d2.values())
        .zip(d4.values())
        .map(|((&v, &w2), &w4)| (w4 - w2 + alpha * v - v * v * v).abs())
        .fold(0.0f64, f64::max)
}

/// Conserved functionals of a real pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalValue {
    /// E = 1/2 int (P_xx^2 + Q_xx^2 + P_x^2 + Q_x^2) - 1/4 int (P^2 + Q^2)^2.
    pub e: f64,
    /// F = 1/2 int (P^2 + Q^2).
    pub f: f64,
    /// G = E + alpha F.
    pub g: f64,
}

/// Evaluates E, F, G by spectral derivatives and periodic quadrature.
pub fn functionals(p: &RealField, q: &RealField) -> Result<FunctionalValue> {
    if p.grid() != q.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(functionals_complex(&ComplexField::from_parts(p, q)?))
}

/// Same on the complex encoding u = P + iQ.
pub fn functionals_complex(u: &ComplexField) -> FunctionalValue {
    let g = u.grid();
    let h = g.spacing();
    let n = g.n_points() as f64;
    let spec = u.hat();
    let quad: f64 = spec
        .iter()
        .zip(g.frequencies())
        .map(|(c, &z)| (z * z + z * z * z * z) * c.norm_sqr())
        .sum();
    let quartic: f64 = u.values().iter().map(|v| v.norm_sqr() * v.norm_sqr()).sum();
    let mass: f64 = u.values().iter().map(|v| v.norm_sqr()).sum();
    let e = 0.5 * h * quad / n - 0.25 * h * quartic;
    let f = 0.5 * h * mass;
    FunctionalValue { e, f, g: e + ALPHA * f }
}

/// L2 gradient of G: component-wise u_xxxx - u_xx + alpha u - |u|^2 u.
pub fn gradient_g(p: &RealField, q: &RealField) -> Result<(RealField, RealField)> {
    if p.grid() != q.grid() {
        return Err(Error::GridMismatch);
    }
    let u = ComplexField::from_parts(p, q)?;
    let grad = gradient_g_complex(&u);
    Ok((grad.re(), grad.im()))
}

/// Gradient on the complex encoding; real and imaginary parts are the P and Q
/// components.
pub fn gradient_g_complex(u: &ComplexField) -> ComplexField {
    let g = u.grid();
    let mut spec = u.hat();
    for (s, &z) in spec.iter_mut().zip(g.frequencies()) {
        *s *= z * z + z * z * z * z + ALPHA;
    }
    g.ifft(&mut spec);
    for (s, v) in spec.iter_mut().zip(u.values()) {
        *s -= v.norm_sqr() * v;
    }
    ComplexField::new(g, spec).expect("length preserved")
}

/// Mass and linearized-energy levels of the wave, q2 = F(Phi), q1 = G(Phi).
pub fn charge_levels(p: &WaveProfile) -> (f64, f64) {
    let v = functionals_complex(&p.state());
    (v.g, v.f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, make_grid, InnerProductKind};
    use approx::assert_abs_diff_eq;

    // Closed forms from int sech^4 = 4/3, int sech^6 = 16/15, int sech^8 = 32/35:
    //   ||phi||_L2^2 = 4 sqrt(5)/5,  F(Phi) = 2 sqrt(5)/5,
    //   E(Phi) = -4 sqrt(5)/175,     G(Phi) = 36 sqrt(5)/875.
    const SQRT5: f64 = 2.23606797749979;

    fn default_profile() -> WaveProfile {
        profile(&make_grid(64.0, 2048).unwrap())
    }

    #[test]
    fn profile_peak_and_symmetry() {
        let p = default_profile();
        let g = p.grid().clone();
        let idx0 = g.n_points() / 2; // x = 0
        assert_abs_diff_eq!(p.samples().values()[idx0], AMPLITUDE, epsilon = 1e-15);
        let v = p.samples().values();
        for j in 1..g.n_points() / 2 {
            let err = (v[idx0 - j] - v[idx0 + j]).abs();
            assert!(err < 1e-15, "parity defect {err} at offset {j}");
        }
        // monotone decreasing away from the peak
        for j in idx0..g.n_points() - 1 {
            assert!(v[j + 1] < v[j]);
        }
    }

    #[test]
    fn profile_point_value() {
        let p = default_profile();
        let g = p.grid().clone();
        let x = 10.0;
        let j = ((x + 64.0) / g.spacing()).round() as usize;
        assert_abs_diff_eq!(g.nodes()[j], 10.0, epsilon = 1e-12);
        let expected = AMPLITUDE / (INV_WIDTH * x).cosh().powi(2);
        assert_abs_diff_eq!(p.samples().values()[j], expected, epsilon = 1e-16);
    }

    #[test]
    fn analytic_derivative_matches_spectral() {
        let p = default_profile();
        let spectral = p.samples().derivative(1).unwrap();
        let err: f64 = spectral
            .values()
            .iter()
            .zip(p.deriv().values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-11, "max deviation {err}");
    }

    // Residual floors scale with xi_max^4: the fourth derivative amplifies
    // FFT roundoff by the largest resolved frequency to the fourth power.
    fn roundoff_floor(g: &GridSpec) -> f64 {
        2e-12 * g.frequencies().iter().fold(0.0f64, |m, &x| m.max(x)).powi(4)
    }

    #[test]
    fn ode_residual_small_at_true_alpha() {
        let p = default_profile();
        let r = ode_residual(&p);
        assert!(r < roundoff_floor(p.grid()), "residual {r}");
    }

    #[test]
    fn ode_residual_detects_wrong_alpha() {
        let p = default_profile();
        assert!(ode_residual_at(&p, 0.17) > 1e-3);
    }

    #[test]
    fn ode_residual_refinement_stays_at_roundoff() {
        for n in [512usize, 1024, 2048] {
            let g = make_grid(64.0, n).unwrap();
            let r = ode_residual(&profile(&g));
            assert!(r < roundoff_floor(&g), "n={n} residual {r}");
        }
    }

    #[test]
    fn zero_field_solves_ode() {
        let g = make_grid(64.0, 256).unwrap();
        let zero = RealField::zeros(&g);
        let d2 = zero.derivative(2).unwrap();
        assert_eq!(d2.linf(), 0.0);
        let (gp, gq) = gradient_g(&zero, &zero).unwrap();
        assert_eq!(gp.linf(), 0.0);
        assert_eq!(gq.linf(), 0.0);
    }

    #[test]
    fn mass_of_wave_matches_closed_form() {
        let p = default_profile();
        let v = functionals_complex(&p.state());
        assert_abs_diff_eq!(v.f, 2.0 * SQRT5 / 5.0, epsilon = 1e-10);
        let l2 = p.samples().norm_sq(InnerProductKind::L2);
        assert_abs_diff_eq!(l2, 4.0 * SQRT5 / 5.0, epsilon = 1e-10);
    }

    #[test]
    fn energy_of_wave_matches_closed_form() {
        let p = default_profile();
        let v = functionals_complex(&p.state());
        assert_abs_diff_eq!(v.e, -4.0 * SQRT5 / 175.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v.g, 36.0 * SQRT5 / 875.0, epsilon = 1e-10);
    }

    #[test]
    fn functionals_vanish_at_zero() {
        let g = make_grid(64.0, 256).unwrap();
        let z = RealField::zeros(&g);
        let v = functionals(&z, &z).unwrap();
        assert_eq!(v.e, 0.0);
        assert_eq!(v.f, 0.0);
        assert_eq!(v.g, 0.0);
    }

    #[test]
    fn wave_is_critical_point_of_g() {
        let p = default_profile();
        let zero = RealField::zeros(p.grid());
        let (gp, gq) = gradient_g(p.samples(), &zero).unwrap();
        assert!(gp.linf() < roundoff_floor(p.grid()), "P component {}", gp.linf());
        // the joint complex transform leaks P roundoff into the Q component
        assert!(gq.linf() < roundoff_floor(p.grid()), "Q component {}", gq.linf());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = make_grid(64.0, 512).unwrap();
        let p = RealField::from_fn(&g, |x| 0.4 * (-x * x / 30.0).exp());
        let q = RealField::from_fn(&g, |x| 0.2 * x * (-x * x / 40.0).exp());
        let wp = RealField::from_fn(&g, |x| (-x * x / 22.0).exp() * (0.4 * x).cos());
        let wq = RealField::from_fn(&g, |x| (-x * x / 35.0).exp() * (0.2 * x).sin());
        let (gp, gq) = gradient_g(&p, &q).unwrap();
        let pairing = inner(&gp, &wp, InnerProductKind::L2).unwrap()
            + inner(&gq, &wq, InnerProductKind::L2).unwrap();
        let eps = 1e-5;
        let eval = |s: f64| {
            let ps = RealField::new(
                &g,
                p.values().iter().zip(wp.values()).map(|(a, b)| a + s * b).collect(),
            )
            .unwrap();
            let qs = RealField::new(
                &g,
                q.values().iter().zip(wq.values()).map(|(a, b)| a + s * b).collect(),
            )
            .unwrap();
            functionals(&ps, &qs).unwrap().g
        };
        let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
        assert_abs_diff_eq!(pairing, fd, epsilon = 1e-6 * pairing.abs().max(1.0));
    }

    #[test]
    fn g_invariant_under_symmetries() {
        let p = default_profile();
        let u = p.state();
        let base = functionals_complex(&u).g;
        for (theta, r) in [(0.3, 0.0), (0.0, 5.5), (1.2, -7.25), (4.0, 17.3)] {
            let moved = u.rotate(theta).translate(r);
            let v = functionals_complex(&moved);
            assert_abs_diff_eq!(v.g, base, epsilon = 1e-10 * base.abs());
            assert_abs_diff_eq!(v.f, 2.0 * SQRT5 / 5.0, epsilon = 1e-10);
        }
    }
}
