//! Periodic spectral grid on [-L, L) with exact band-limited calculus.
//!
//! Conventions, fixed once for the whole crate:
//! - nodes x_j = -L + j h, h = 2L/N;
//! - frequencies xi_k = pi k / L in FFT layout (k = 0..N/2-1, then -N/2..-1);
//! - forward FFT unnormalized, inverse carries the 1/N;
//! - quadrature is the periodic trapezoid rule h * sum (spectrally accurate
//!   for smooth periodic integrands);
//! - the H^2 inner product uses the Fourier weight 1 + xi^2 + xi^4.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Inner product selector; H2 weights Fourier modes by 1 + xi^2 + xi^4.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerProductKind {
    L2,
    H2,
}

/// Immutable grid descriptor owning the FFT plans for its size.
pub struct GridSpec {
    l: f64,
    n: usize,
    h: f64,
    x: Vec<f64>,
    xi: Vec<f64>,
    h2w: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("l", &self.l)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.l == other.l && self.n == other.n
    }
}

/// Builds the grid; N must be even and at least 16, L positive.
pub fn make_grid(l: f64, n: usize) -> Result<Arc<GridSpec>> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidInput(format!("half-length must be positive, got {l}")));
    }
    if n % 2 != 0 || n < 16 {
        return Err(Error::InvalidInput(format!("n_points must be even and >= 16, got {n}")));
    }
    let h = 2.0 * l / n as f64;
    let x: Vec<f64> = (0..n).map(|j| -l + j as f64 * h).collect();
    let xi: Vec<f64> = (0..n)
        .map(|k| {
            let ks = if k < n / 2 { k as isize } else { k as isize - n as isize };
            std::f64::consts::PI * ks as f64 / l
        })
        .collect();
    let h2w: Vec<f64> = xi.iter().map(|&z| 1.0 + z * z + z * z * z * z).collect();
    let mut planner = FftPlanner::new();
    Ok(Arc::new(GridSpec {
        l,
        n,
        h,
        x,
        xi,
        h2w,
        fwd: planner.plan_fft_forward(n),
        inv: planner.plan_fft_inverse(n),
    }))
}

impl GridSpec {
    pub fn half_length(&self) -> f64 {
        self.l
    }
    pub fn n_points(&self) -> usize {
        self.n
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn nodes(&self) -> &[f64] {
        &self.x
    }
    pub fn frequencies(&self) -> &[f64] {
        &self.xi
    }
    /// Fourier weight 1 + xi^2 + xi^4 per mode.
    pub fn h2_weight(&self) -> &[f64] {
        &self.h2w
    }

    /// In-place forward FFT, unnormalized.
    pub fn fft(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.fwd.process(buf);
    }

    /// In-place inverse FFT carrying the 1/N.
    pub fn ifft(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.inv.process(buf);
        let s = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    /// Forward FFT of real samples.
    pub fn fft_real(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&t| Complex64::new(t, 0.0)).collect();
        self.fft(&mut buf);
        buf
    }

    /// Inverse FFT keeping the real part (input assumed conjugate-symmetric).
    pub fn ifft_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.ifft(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Unnormalized inverse plan for callers that fold the 1/N elsewhere.
    pub(crate) fn inverse_plan(&self) -> &dyn Fft<f64> {
        self.inv.as_ref()
    }
}

fn check_same(a: &Arc<GridSpec>, b: &Arc<GridSpec>) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Fourier multiplier (i xi)^order; Nyquist zeroed for odd orders so the
/// multiplier maps real fields to real fields.
fn derivative_multiplier(grid: &GridSpec, order: u32) -> Result<Vec<Complex64>> {
    if !matches!(order, 1 | 2 | 4) {
        return Err(Error::InvalidInput(format!("derivative order must be 1, 2 or 4, got {order}")));
    }
    let n = grid.n;
    Ok(grid
        .xi
        .iter()
        .enumerate()
        .map(|(k, &z)| match order {
            1 => {
                if k == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, z)
                }
            }
            2 => Complex64::new(-z * z, 0.0),
            _ => Complex64::new(z * z * z * z, 0.0),
        })
        .collect())
}

/// Real-valued sampled function on a grid.
#[derive(Clone, Debug)]
pub struct RealField {
    grid: Arc<GridSpec>,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: &Arc<GridSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidInput(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.n
            )));
        }
        Ok(RealField { grid: Arc::clone(grid), values })
    }

    pub fn from_fn(grid: &Arc<GridSpec>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.x.iter().map(|&x| f(x)).collect();
        RealField { grid: Arc::clone(grid), values }
    }

    pub fn zeros(grid: &Arc<GridSpec>) -> Self {
        RealField { grid: Arc::clone(grid), values: vec![0.0; grid.n] }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn hat(&self) -> Vec<Complex64> {
        self.grid.fft_real(&self.values)
    }

    pub fn derivative(&self, order: u32) -> Result<RealField> {
        let mult = derivative_multiplier(&self.grid, order)?;
        let mut spec = self.hat();
        for (s, m) in spec.iter_mut().zip(&mult) {
            *s *= m;
        }
        Ok(RealField { grid: Arc::clone(&self.grid), values: self.grid.ifft_real(spec) })
    }

    /// Shift by any real r via the Fourier phase e^{-i xi r}. The Nyquist mode
    /// is scaled by cos(xi_N r) to keep the result real; the mode carries no
    /// mass for resolved fields.
    pub fn translate(&self, r: f64) -> RealField {
        let n = self.grid.n;
        let mut spec = self.hat();
        for (k, s) in spec.iter_mut().enumerate() {
            let z = self.grid.xi[k];
            if k == n / 2 {
                *s *= (z * r).cos();
            } else {
                *s *= Complex64::from_polar(1.0, -z * r);
            }
        }
        RealField { grid: Arc::clone(&self.grid), values: self.grid.ifft_real(spec) }
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn norm_sq(&self, kind: InnerProductKind) -> f64 {
        match kind {
            InnerProductKind::L2 => self.grid.h * self.values.iter().map(|v| v * v).sum::<f64>(),
            InnerProductKind::H2 => {
                let spec = self.hat();
                let s: f64 = spec
                    .iter()
                    .zip(&self.grid.h2w)
                    .map(|(c, w)| w * c.norm_sqr())
                    .sum();
                self.grid.h * s / self.grid.n as f64
            }
        }
    }

    pub fn scale(&self, s: f64) -> RealField {
        RealField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }
}

/// L2 or H2 inner product of two real fields, periodic trapezoid quadrature.
pub fn inner(f: &RealField, g: &RealField, kind: InnerProductKind) -> Result<f64> {
    check_same(&f.grid, &g.grid)?;
    match kind {
        InnerProductKind::L2 => {
            Ok(f.grid.h * f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>())
        }
        InnerProductKind::H2 => {
            let fs = f.hat();
            let gs = g.hat();
            let s: f64 = fs
                .iter()
                .zip(&gs)
                .zip(&f.grid.h2w)
                .map(|((a, b), w)| w * (a * b.conj()).re)
                .sum();
            Ok(f.grid.h * s / f.grid.n as f64)
        }
    }
}

/// Complex-valued sampled function; encodes a real pair (P, Q) as P + iQ.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Arc<GridSpec>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: &Arc<GridSpec>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidInput(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.n
            )));
        }
        Ok(ComplexField { grid: Arc::clone(grid), values })
    }

    pub fn from_parts(p: &RealField, q: &RealField) -> Result<Self> {
        check_same(&p.grid, &q.grid)?;
        let values = p
            .values
            .iter()
            .zip(&q.values)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        Ok(ComplexField { grid: Arc::clone(&p.grid), values })
    }

    pub fn from_real(p: &RealField) -> Self {
        ComplexField {
            grid: Arc::clone(&p.grid),
            values: p.values.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
        }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn re(&self) -> RealField {
        RealField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|c| c.re).collect(),
        }
    }

    pub fn im(&self) -> RealField {
        RealField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|c| c.im).collect(),
        }
    }

    pub fn hat(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        self.grid.fft(&mut buf);
        buf
    }

    pub fn translate(&self, r: f64) -> ComplexField {
        let mut spec = self.hat();
        for (s, &z) in spec.iter_mut().zip(&self.grid.xi) {
            *s *= Complex64::from_polar(1.0, -z * r);
        }
        self.grid.ifft(&mut spec);
        ComplexField { grid: Arc::clone(&self.grid), values: spec }
    }

    /// Gauge rotation e^{-i theta} u, the phase half of the symmetry group.
    pub fn rotate(&self, theta: f64) -> ComplexField {
        let ph = Complex64::from_polar(1.0, -theta);
        ComplexField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|c| c * ph).collect(),
        }
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn norm_sq(&self, kind: InnerProductKind) -> f64 {
        match kind {
            InnerProductKind::L2 => {
                self.grid.h * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
            }
            InnerProductKind::H2 => {
                let spec = self.hat();
                let s: f64 = spec
                    .iter()
                    .zip(&self.grid.h2w)
                    .map(|(c, w)| w * c.norm_sqr())
                    .sum();
                self.grid.h * s / self.grid.n as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid_64_256() -> Arc<GridSpec> {
        make_grid(64.0, 256).unwrap()
    }

    #[test]
    fn make_grid_spacing_matches() {
        let g = make_grid(64.0, 2048).unwrap();
        assert_eq!(g.spacing(), 0.0625);
        assert_eq!(g.nodes()[0], -64.0);
        assert_eq!(g.n_points(), 2048);
    }

    #[test]
    fn make_grid_frequency_layout() {
        let g = make_grid(1.0, 16).unwrap();
        let xi = g.frequencies();
        assert_abs_diff_eq!(xi[1], std::f64::consts::PI, epsilon = 1e-15);
        assert_abs_diff_eq!(xi[7], 7.0 * std::f64::consts::PI, epsilon = 1e-12);
        assert_abs_diff_eq!(xi[8], -8.0 * std::f64::consts::PI, epsilon = 1e-12);
        assert_abs_diff_eq!(xi[15], -std::f64::consts::PI, epsilon = 1e-15);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(make_grid(64.0, 15).is_err());
        assert!(make_grid(64.0, 17).is_err());
        assert!(make_grid(64.0, 8).is_err());
        assert!(make_grid(-1.0, 64).is_err());
        assert!(make_grid(0.0, 64).is_err());
    }

    #[test]
    fn derivative_of_sine_is_exact() {
        let g = grid_64_256();
        let l = g.half_length();
        let f = RealField::from_fn(&g, |x| (std::f64::consts::PI * x / l).sin());
        let df = f.derivative(1).unwrap();
        let exact =
            RealField::from_fn(&g, |x| (std::f64::consts::PI / l) * (std::f64::consts::PI * x / l).cos());
        let err: f64 = df
            .values()
            .iter()
            .zip(exact.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "max error {err}");
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid_64_256();
        let f = RealField::from_fn(&g, |_| 2.5);
        for order in [1, 2, 4] {
            assert!(f.derivative(order).unwrap().linf() < 1e-13);
        }
    }

    #[test]
    fn derivative_rejects_unsupported_order() {
        let g = grid_64_256();
        let f = RealField::from_fn(&g, |x| (-x * x / 50.0).exp());
        assert!(f.derivative(3).is_err());
        assert!(f.derivative(0).is_err());
    }

    #[test]
    fn second_derivative_composes() {
        let g = grid_64_256();
        let f = RealField::from_fn(&g, |x| (-x * x / 32.0).exp());
        let d11 = f.derivative(1).unwrap().derivative(1).unwrap();
        let d2 = f.derivative(2).unwrap();
        let err: f64 = d11
            .values()
            .iter()
            .zip(d2.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = d2.linf();
        assert!(err / scale < 1e-10, "relative error {}", err / scale);
    }

    #[test]
    fn fourth_derivative_matches_finite_differences() {
        // 8th-order centered stencil for f'''' on a smooth compactly
        // concentrated function; interior error O(h^6).
        let g = make_grid(64.0, 2048).unwrap();
        let f = RealField::from_fn(&g, |x| (-x * x / 18.0).exp());
        let d4 = f.derivative(4).unwrap();
        let v = f.values();
        let n = g.n_points();
        let h = g.spacing();
        let w = [
            7.0 / 240.0,
            -2.0 / 5.0,
            169.0 / 60.0,
            -122.0 / 15.0,
            91.0 / 8.0,
            -122.0 / 15.0,
            169.0 / 60.0,
            -2.0 / 5.0,
            7.0 / 240.0,
        ];
        let mut max_err = 0.0f64;
        for i in 4..n - 4 {
            let mut s = 0.0;
            for (o, &wk) in w.iter().enumerate() {
                s += wk * v[i + o - 4];
            }
            s /= h * h * h * h;
            max_err = max_err.max((s - d4.values()[i]).abs());
        }
        assert!(max_err < 1e-6, "fd mismatch {max_err}");
    }

    #[test]
    fn inner_parity_orthogonality() {
        let g = grid_64_256();
        let even = RealField::from_fn(&g, |x| (-x * x / 40.0).exp());
        let odd = RealField::from_fn(&g, |x| x * (-x * x / 40.0).exp());
        let ip = inner(&even, &odd, InnerProductKind::L2).unwrap();
        assert!(ip.abs() < 1e-12);
    }

    #[test]
    fn inner_h2_dominates_l2() {
        let g = grid_64_256();
        let f = RealField::from_fn(&g, |x| (0.3 * x).sin() * (-x * x / 60.0).exp());
        let l2 = inner(&f, &f, InnerProductKind::L2).unwrap();
        let h2 = inner(&f, &f, InnerProductKind::H2).unwrap();
        assert!(h2 >= l2);
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let g1 = grid_64_256();
        let g2 = make_grid(64.0, 512).unwrap();
        let f = RealField::zeros(&g1);
        let h = RealField::zeros(&g2);
        assert!(matches!(inner(&f, &h, InnerProductKind::L2), Err(Error::GridMismatch)));
    }

    #[test]
    fn parseval_identity() {
        let g = grid_64_256();
        let f = RealField::from_fn(&g, |x| (0.7 * x).cos() * (-x * x / 45.0).exp() + 0.1);
        let phys = f.norm_sq(InnerProductKind::L2);
        let spec = f.hat();
        let freq: f64 =
            g.spacing() * spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / g.n_points() as f64;
        assert_abs_diff_eq!(phys, freq, epsilon = 1e-12 * phys.abs());
    }

    #[test]
    fn translate_identity_and_group() {
        let g = grid_64_256();
        let f = RealField::from_fn(&g, |x| (-(x - 3.0) * (x - 3.0) / 30.0).exp());
        let same = f.translate(0.0);
        let back = f.translate(3.7).translate(-3.7);
        for (a, b) in f.values().iter().zip(same.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let err: f64 = f
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn translate_preserves_norms() {
        let g = grid_64_256();
        let f = RealField::from_fn(&g, |x| 1.0 / (0.3 * x).cosh());
        for kind in [InnerProductKind::L2, InnerProductKind::H2] {
            let a = f.norm_sq(kind);
            let b = f.translate(3.7).norm_sq(kind);
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * a);
        }
    }

    #[test]
    fn complex_roundtrip_and_rotation() {
        let g = grid_64_256();
        let p = RealField::from_fn(&g, |x| (-x * x / 25.0).exp());
        let q = RealField::from_fn(&g, |x| x * (-x * x / 25.0).exp() * 0.3);
        let u = ComplexField::from_parts(&p, &q).unwrap();
        let pr = u.re();
        let qi = u.im();
        for (a, b) in p.values().iter().zip(pr.values()) {
            assert_eq!(a, b);
        }
        for (a, b) in q.values().iter().zip(qi.values()) {
            assert_eq!(a, b);
        }
        let rot = u.rotate(std::f64::consts::FRAC_PI_2);
        // e^{-i pi/2}(P + iQ) = Q - iP
        for ((r, &pp), &qq) in rot.values().iter().zip(p.values()).zip(q.values()) {
            assert_abs_diff_eq!(r.re, qq, epsilon = 1e-14);
            assert_abs_diff_eq!(r.im, -pp, epsilon = 1e-14);
        }
        let n0 = u.norm_sq(InnerProductKind::H2);
        let n1 = rot.norm_sq(InnerProductKind::H2);
        assert_abs_diff_eq!(n0, n1, epsilon = 1e-12 * n0);
    }
}
