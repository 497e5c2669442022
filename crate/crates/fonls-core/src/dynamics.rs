//! Strang-split time integration with conservation diagnostics.
//!
//! Both sub-flows are exactly solvable: the nonlinear flow rotates each sample
//! by its own intensity, the linear flow is a diagonal Fourier phase. The
//! composition is symmetric, so the scheme is second order globally and
//! time-reversible, and it conserves the discrete mass to roundoff.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{make_grid, ComplexField, GridSpec};
use crate::wave::functionals_complex;

/// Max-norm guard; the flow is globally well posed, so tripping it means the
/// discretization broke, not the equation.
const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub record_every: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_max: f64, record_every: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        if !(t_max >= dt) || !t_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon {t_max} must be at least one step {dt}"
            )));
        }
        if record_every == 0 {
            return Err(Error::InvalidInput("record cadence must be at least 1".into()));
        }
        Ok(Self { dt, t_max, record_every })
    }

    fn n_steps(&self) -> u64 {
        ((self.t_max / self.dt).round() as u64).max(1)
    }
}

/// Conservation record along one trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryDiagnostics {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub mass: Vec<f64>,
    pub terminal: ComplexField,
}

impl TrajectoryDiagnostics {
    /// Largest relative excursion of a recorded series from its initial value.
    pub fn relative_drift(series: &[f64]) -> f64 {
        let v0 = series.first().copied().unwrap_or(0.0);
        let scale = v0.abs().max(f64::MIN_POSITIVE);
        series.iter().fold(0.0f64, |m, &v| m.max((v - v0).abs())) / scale
    }

    pub fn energy_drift(&self) -> f64 {
        Self::relative_drift(&self.energy)
    }

    pub fn mass_drift(&self) -> f64 {
        Self::relative_drift(&self.mass)
    }
}

/// Sample-wise rotation by the intensity; the modulus is invariant, so the
/// returned max intensity is also the post-step one. tau carries the half
/// step.
fn nonlinear_half(vals: &mut [Complex64], tau: f64) -> f64 {
    let mut peak = 0.0f64;
    for z in vals.iter_mut() {
        let a = z.norm_sqr();
        peak = peak.max(a);
        *z *= Complex64::from_polar(1.0, a * tau);
    }
    peak
}

/// Diagonal phases of the linear flow, with the inverse-transform 1/N folded
/// in.
fn linear_phases(grid: &GridSpec, dt: f64) -> Vec<Complex64> {
    let s = 1.0 / grid.n_points() as f64;
    grid.frequencies()
        .iter()
        .map(|&xi| Complex64::from_polar(s, -(xi * xi + xi * xi * xi * xi) * dt))
        .collect()
}

fn linear_full(grid: &GridSpec, vals: &mut [Complex64], phases: &[Complex64]) {
    grid.fft(vals);
    for (v, ph) in vals.iter_mut().zip(phases) {
        *v *= ph;
    }
    // the 1/N lives in the phases
    grid.inverse_plan().process(vals);
}

/// One Strang step. Negative dt runs the exact sub-flows backward, which the
/// reversibility diagnostics rely on.
pub fn step(u: &ComplexField, dt: f64) -> Result<ComplexField> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step {dt} must be nonzero")));
    }
    let mut out = u.clone();
    let grid = out.grid().clone();
    let phases = linear_phases(&grid, dt);
    nonlinear_half(out.values_mut(), 0.5 * dt);
    linear_full(&grid, out.values_mut(), &phases);
    nonlinear_half(out.values_mut(), 0.5 * dt);
    Ok(out)
}

/// Integrate and record E, F at the configured cadence.
pub fn evolve(u0: &ComplexField, cfg: &IntegratorConfig) -> Result<TrajectoryDiagnostics> {
    evolve_with(u0, cfg, |_, _| Ok(()))
}

/// Like evolve, with a caller hook at every record point (including t = 0 and
/// the terminal state); hook errors abort the run.
pub fn evolve_with<F>(u0: &ComplexField, cfg: &IntegratorConfig, mut hook: F) -> Result<TrajectoryDiagnostics>
where
    F: FnMut(f64, &ComplexField) -> Result<()>,
{
    IntegratorConfig::new(cfg.dt, cfg.t_max, cfg.record_every)?;
    let grid = u0.grid().clone();
    let phases = linear_phases(&grid, cfg.dt);
    let n_steps = cfg.n_steps();

    let mut times = Vec::new();
    let mut energy = Vec::new();
    let mut mass = Vec::new();
    let mut state = u0.clone();

    let record = |t: f64, u: &ComplexField, times: &mut Vec<f64>, e: &mut Vec<f64>, f: &mut Vec<f64>| {
        let vals = functionals_complex(u);
        times.push(t);
        e.push(vals.e);
        f.push(vals.f);
    };

    record(0.0, &state, &mut times, &mut energy, &mut mass);
    hook(0.0, &state)?;

    for k in 1..=n_steps {
        let vals = state.values_mut();
        nonlinear_half(vals, 0.5 * cfg.dt);
        linear_full(&grid, vals, &phases);
        let peak = nonlinear_half(vals, 0.5 * cfg.dt);
        let t = k as f64 * cfg.dt;
        if peak > BLOWUP_LIMIT * BLOWUP_LIMIT || !peak.is_finite() {
            return Err(Error::BlowUp { t, norm: peak.sqrt() });
        }
        if k % cfg.record_every as u64 == 0 || k == n_steps {
            record(t, &state, &mut times, &mut energy, &mut mass);
            hook(t, &state)?;
        }
    }

    Ok(TrajectoryDiagnostics { times, energy, mass, terminal: state })
}

/// Least-squares rotation rate from fitted frame angles: unwraps the 2 pi
/// jumps, then returns minus the slope (the fit angle of e^{i alpha t} phi
/// decreases at rate alpha).
pub fn phase_rate(times: &[f64], thetas: &[f64]) -> Result<f64> {
    if times.len() != thetas.len() || times.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need matching series of at least 2 points, got {} and {}",
            times.len(),
            thetas.len()
        )));
    }
    let two_pi = std::f64::consts::TAU;
    let mut unwrapped = Vec::with_capacity(thetas.len());
    unwrapped.push(thetas[0]);
    for k in 1..thetas.len() {
        if times[k] <= times[k - 1] {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
        let prev = unwrapped[k - 1];
        let mut d = (thetas[k] - prev) % two_pi;
        if d > 0.5 * two_pi {
            d -= two_pi;
        } else if d < -0.5 * two_pi {
            d += two_pi;
        }
        if d.abs() > 2.5 {
            return Err(Error::Numerical(format!(
                "phase gap {d:.3} rad between samples is too wide to unwrap"
            )));
        }
        unwrapped.push(prev + d);
    }
    let n = times.len() as f64;
    let t_mean = times.iter().sum::<f64>() / n;
    let th_mean = unwrapped.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, th) in times.iter().zip(&unwrapped) {
        num += (t - t_mean) * (th - th_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return Err(Error::InvalidInput("times must not be constant".into()));
    }
    Ok(-num / den)
}

const FIELD_MAGIC: &[u8; 8] = b"F4NLSFLD";

/// Binary dump: magic, point count (u32), half length (f64), then interleaved
/// re/im samples, all little endian.
pub fn dump_field(u: &ComplexField, w: &mut dyn Write) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(u.grid().n_points() as u32).to_le_bytes())?;
    w.write_all(&u.grid().half_length().to_le_bytes())?;
    for z in u.values() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

/// Inverse of dump_field; rebuilds the grid from the header.
pub fn load_field(r: &mut dyn Read) -> Result<ComplexField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::InvalidInput("not a field dump (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let l = f64::from_le_bytes(b8);
    let grid = make_grid(l, n)?;
    let mut vals = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let im = f64::from_le_bytes(b8);
        vals.push(Complex64::new(re, im));
    }
    ComplexField::new(&grid, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, make_grid, InnerProductKind, RealField};
    use crate::wave;
    use approx::assert_abs_diff_eq;

    fn small_grid() -> std::sync::Arc<GridSpec> {
        make_grid(64.0, 512).unwrap()
    }

    fn standing_wave(grid: &std::sync::Arc<GridSpec>) -> ComplexField {
        let p = wave::profile(grid);
        ComplexField::from_real(p.samples())
    }

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = small_grid();
        let z = ComplexField::new(&g, vec![Complex64::new(0.0, 0.0); 512]).unwrap();
        let out = step(&z, 1e-2).unwrap();
        assert_eq!(out.linf(), 0.0);
    }

    #[test]
    fn single_mode_phase_is_exact() {
        let g = small_grid();
        let amp = 0.3;
        let xi = g.frequencies()[5];
        let u0 = ComplexField::new(
            &g,
            g.nodes().iter().map(|&x| Complex64::from_polar(amp, xi * x)).collect(),
        )
        .unwrap();
        let dt = 7e-3;
        let got = step(&u0, dt).unwrap();
        // plane waves see both sub-flows as global phases, so one step is the
        // exact flow
        let phase = (amp * amp - xi * xi - xi.powi(4)) * dt;
        let want = u0.rotate(-phase);
        assert!(max_diff(&got, &want) < 1e-14);
    }

    #[test]
    fn step_rejects_zero_dt() {
        let g = small_grid();
        let u = standing_wave(&g);
        assert!(step(&u, 0.0).is_err());
        assert!(step(&u, f64::NAN).is_err());
    }

    #[test]
    fn standing_wave_rotates_at_alpha() {
        let g = small_grid();
        let u0 = standing_wave(&g);
        let cfg = IntegratorConfig::new(1e-3, 1.0, 1000).unwrap();
        let traj = evolve(&u0, &cfg).unwrap();
        // u(t) = e^{i alpha t} phi, and rotate applies e^{-i theta}
        let want = u0.rotate(-crate::ALPHA * 1.0);
        assert!(max_diff(&traj.terminal, &want) < 1e-6);
    }

    #[test]
    fn short_run_conserves_mass_and_energy() {
        let g = small_grid();
        let bump = RealField::from_fn(&g, |x| 0.05 * (-(x / 3.0) * (x / 3.0)).exp());
        let p = wave::profile(&g);
        let mut u0 = ComplexField::from_real(p.samples());
        for (v, b) in u0.values_mut().iter_mut().zip(bump.values()) {
            *v += b;
        }
        let cfg = IntegratorConfig::new(1e-3, 2.0, 100).unwrap();
        let traj = evolve(&u0, &cfg).unwrap();
        assert!(traj.mass_drift() < 1e-11, "mass drift {}", traj.mass_drift());
        assert!(traj.energy_drift() < 1e-8, "energy drift {}", traj.energy_drift());
        assert_eq!(traj.times.len(), 21);
    }

    #[test]
    fn convergence_is_second_order() {
        let g = small_grid();
        let u0 = standing_wave(&g);
        let exact = u0.rotate(-crate::ALPHA);
        let mut errs = Vec::new();
        for dt in [2e-3, 1e-3] {
            let cfg = IntegratorConfig::new(dt, 1.0, 100000).unwrap();
            let traj = evolve(&u0, &cfg).unwrap();
            errs.push(max_diff(&traj.terminal, &exact));
        }
        let ratio = errs[0] / errs[1];
        assert!((3.6..=4.4).contains(&ratio), "order ratio {ratio}");
    }

    #[test]
    fn forward_backward_returns_start() {
        let g = small_grid();
        let p = wave::profile(&g);
        let mut u0 = ComplexField::from_real(p.samples());
        for (v, &x) in u0.values_mut().iter_mut().zip(g.nodes()) {
            *v += Complex64::new(0.0, 0.02 * (-(x / 2.0) * (x / 2.0)).exp());
        }
        let mut u = u0.clone();
        for _ in 0..200 {
            u = step(&u, 1e-3).unwrap();
        }
        for _ in 0..200 {
            u = step(&u, -1e-3).unwrap();
        }
        assert!(max_diff(&u, &u0) < 1e-8);
    }

    #[test]
    fn flow_commutes_with_the_symmetries() {
        let g = small_grid();
        let p = wave::profile(&g);
        let mut u0 = ComplexField::from_real(p.samples());
        for (v, &x) in u0.values_mut().iter_mut().zip(g.nodes()) {
            *v += Complex64::new(0.03 * (-(x / 4.0) * (x / 4.0)).exp(), 0.0);
        }
        let cfg = IntegratorConfig::new(1e-3, 0.1, 1000).unwrap();
        let plain = evolve(&u0, &cfg).unwrap().terminal;
        let moved = evolve(&u0.rotate(0.8).translate(5.25), &cfg).unwrap().terminal;
        let want = plain.rotate(0.8).translate(5.25);
        assert!(max_diff(&moved, &want) < 1e-8);
    }

    #[test]
    fn blow_up_guard_trips_on_huge_data() {
        let g = small_grid();
        let u0 = ComplexField::new(&g, vec![Complex64::new(2e6, 0.0); 512]).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 0.01, 1).unwrap();
        match evolve(&u0, &cfg) {
            Err(Error::BlowUp { norm, .. }) => assert!(norm > 1e6),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.0, 1.0, 1).is_err());
        assert!(IntegratorConfig::new(-1e-3, 1.0, 1).is_err());
        assert!(IntegratorConfig::new(1e-3, 5e-4, 1).is_err());
        assert!(IntegratorConfig::new(1e-3, 1.0, 0).is_err());
        assert!(IntegratorConfig::new(1e-3, 1.0, 7).is_ok());
    }

    #[test]
    fn hook_sees_all_record_points_and_can_abort() {
        let g = small_grid();
        let u0 = standing_wave(&g);
        let cfg = IntegratorConfig::new(1e-2, 0.1, 5).unwrap();
        let mut seen = Vec::new();
        evolve_with(&u0, &cfg, |t, _| {
            seen.push(t);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 3);
        assert_abs_diff_eq!(seen[1], 0.05, epsilon = 1e-12);
        let res = evolve_with(&u0, &cfg, |t, _| {
            if t > 0.0 {
                Err(Error::Numerical("stop".into()))
            } else {
                Ok(())
            }
        });
        assert!(res.is_err());
    }

    #[test]
    fn mass_is_the_exact_quadrature_invariant() {
        // the split flow preserves h sum |u|^2 exactly; compare against the
        // wave functional route
        let g = small_grid();
        let u0 = standing_wave(&g);
        let f0 = functionals_complex(&u0).f;
        let p = wave::profile(&g);
        let by_inner = 0.5 * inner(p.samples(), p.samples(), InnerProductKind::L2).unwrap();
        assert_abs_diff_eq!(f0, by_inner, epsilon = 1e-13);
    }

    #[test]
    fn dump_then_load_roundtrips() {
        let g = small_grid();
        let mut u = standing_wave(&g);
        for (k, v) in u.values_mut().iter_mut().enumerate() {
            *v += Complex64::new(0.0, 1e-3 * (k as f64).sin());
        }
        let mut buf = Vec::new();
        dump_field(&u, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 512 * 16);
        let back = load_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back.grid().n_points(), 512);
        assert_eq!(back.grid().half_length(), 64.0);
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn load_rejects_bad_magic_and_truncation() {
        let g = small_grid();
        let u = standing_wave(&g);
        let mut buf = Vec::new();
        dump_field(&u, &mut buf).unwrap();
        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(matches!(load_field(&mut corrupt.as_slice()), Err(Error::InvalidInput(_))));
        let truncated = &buf[..buf.len() - 7];
        assert!(matches!(load_field(&mut &truncated[..]), Err(Error::Io(_))));
    }

    #[test]
    fn phase_rate_recovers_synthetic_slopes() {
        let times: Vec<f64> = (0..200).map(|k| 0.5 * k as f64).collect();
        let wrap = |th: f64| th.rem_euclid(std::f64::consts::TAU);
        let thetas: Vec<f64> = times.iter().map(|&t| wrap(-0.16 * t)).collect();
        let rate = phase_rate(&times, &thetas).unwrap();
        assert_abs_diff_eq!(rate, 0.16, epsilon = 1e-12);
        // small noise moves the estimate only a little
        let noisy: Vec<f64> = thetas
            .iter()
            .enumerate()
            .map(|(k, &th)| th + 1e-7 * ((k * 37 % 11) as f64 - 5.0))
            .collect();
        let rate = phase_rate(&times, &noisy).unwrap();
        assert_abs_diff_eq!(rate, 0.16, epsilon = 1e-6);
    }

    #[test]
    fn phase_rate_rejects_ambiguous_series() {
        let times: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let thetas: Vec<f64> = times.iter().map(|&t| (-2.9 * t).rem_euclid(std::f64::consts::TAU)).collect();
        assert!(phase_rate(&times, &thetas).is_err());
        assert!(phase_rate(&times[..3], &thetas[..2]).is_err());
        assert!(phase_rate(&[0.0, 0.0], &[0.1, 0.2]).is_err());
    }
}
