//! Check implementations behind the subcommands, shared with the acceptance
//! suite. Each function verifies one cluster of claims and returns records
//! for the report; heavy artifacts (decompositions, the penalty pencil) are
//! cached on the session so a full run computes each once.

use std::sync::{Arc, OnceLock};

use fonls_core::coercivity::{
    constraints_mixed, pipeline_calibration, subspace_bound, weinstein_direct_from,
    weinstein_series, CalibratedPenalty, LyapunovPencil,
};
use fonls_core::dynamics::{evolve_with, phase_rate, step, IntegratorConfig};
use fonls_core::grid::{make_grid, ComplexField, GridSpec, InnerProductKind};
use fonls_core::linops::{
    build_operator, constrained_min, eigenvalues_only, garding_certify, EigenDecomp, OperatorDisc,
    OperatorSelect,
};
use fonls_core::orbit::{
    initial_state, lyapunov_quadratic_check, stability_experiment, Lyapunov, OrbitFitter,
    PerturbationFamily, QuadraticCheckReport, StabilitySweep,
};
use fonls_core::totalpos::{
    build_kernel, build_stheta, eig_curve, ground_overlap, kernel_closed_form, pf2_check, rho,
    theta_star, FreqGrid,
};
use fonls_core::wave::{self, charge_levels, WaveProfile};
use fonls_core::{Complex64, Error, Result, ALPHA, TOL_ZERO};

use crate::config::RunConfig;
use crate::report::CheckRecord;

/// Grid for pointwise residual checks. The fourth derivative amplifies FFT
/// roundoff by xi_max^4 ~ N^4, while the wave's transform tail at this N is
/// already e^{-22}; N = 256 keeps both sides of the floor near 1e-10, two
/// decades under the tolerance. Eigenvalue structure uses the configured
/// grid instead.
const RESIDUAL_L: f64 = 64.0;
const RESIDUAL_N: usize = 256;

/// Frequency grid for the S family's eigensolves: converged to ~1e-9 in the
/// crossing (kernel decay ~ e^{-7 |xi|}) at a fraction of the default
/// kernel-sampling grid's eigensolve cost.
const FAMILY_XI_MAX: f64 = 20.0;
const FAMILY_POINTS: usize = 400;

pub fn family_from_name(name: &str) -> Result<PerturbationFamily> {
    match name {
        "even" => Ok(PerturbationFamily::Even),
        "odd" => Ok(PerturbationFamily::Odd),
        "random-bandlimited" => Ok(PerturbationFamily::RandomBandlimited),
        "mass-preserving" => Ok(PerturbationFamily::MassPreserving),
        _ => Err(Error::InvalidInput(format!("unknown perturbation family `{name}`"))),
    }
}

/// One run's shared state: the grid, the wave, and lazily computed heavy
/// artifacts.
pub struct Session {
    pub cfg: RunConfig,
    pub grid: Arc<GridSpec>,
    pub profile: WaveProfile,
    l1: OnceLock<(OperatorDisc, EigenDecomp)>,
    l2: OnceLock<(OperatorDisc, EigenDecomp)>,
    refined_l1: OnceLock<(Arc<GridSpec>, WaveProfile, OperatorDisc, EigenDecomp)>,
    pencil: OnceLock<LyapunovPencil>,
    calibration: OnceLock<CalibratedPenalty>,
    quadratic: OnceLock<QuadraticCheckReport>,
}

impl Session {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let grid = make_grid(cfg.grid_l, cfg.grid_n)?;
        let profile = wave::profile(&grid);
        Ok(Self {
            cfg,
            grid,
            profile,
            l1: OnceLock::new(),
            l2: OnceLock::new(),
            refined_l1: OnceLock::new(),
            pencil: OnceLock::new(),
            calibration: OnceLock::new(),
            quadratic: OnceLock::new(),
        })
    }

    pub fn operator(&self, which: OperatorSelect) -> Result<&(OperatorDisc, EigenDecomp)> {
        let slot = match which {
            OperatorSelect::L1 => &self.l1,
            OperatorSelect::L2 => &self.l2,
        };
        if slot.get().is_none() {
            let op = build_operator(which, &self.grid, &self.profile)?;
            let decomp = EigenDecomp::compute(&op)?;
            let _ = slot.set((op, decomp));
        }
        Ok(slot.get().expect("operator slot initialized"))
    }

    /// First operator on the N-doubled grid, with vectors (the refinement
    /// checks also re-solve the Weinstein equation there).
    pub fn refined_l1(&self) -> Result<&(Arc<GridSpec>, WaveProfile, OperatorDisc, EigenDecomp)> {
        if self.refined_l1.get().is_none() {
            let grid = make_grid(self.cfg.grid_l, 2 * self.cfg.grid_n)?;
            let profile = wave::profile(&grid);
            let op = build_operator(OperatorSelect::L1, &grid, &profile)?;
            let decomp = EigenDecomp::compute(&op)?;
            let _ = self.refined_l1.set((grid, profile, op, decomp));
        }
        Ok(self.refined_l1.get().expect("refined slot initialized"))
    }

    pub fn pencil(&self) -> Result<&LyapunovPencil> {
        if self.pencil.get().is_none() {
            let p = LyapunovPencil::new(&self.grid, &self.profile)?;
            let _ = self.pencil.set(p);
        }
        Ok(self.pencil.get().expect("pencil slot initialized"))
    }

    pub fn calibration(&self) -> Result<CalibratedPenalty> {
        if self.calibration.get().is_none() {
            let cal = pipeline_calibration(self.pencil()?)?;
            let _ = self.calibration.set(cal);
        }
        Ok(*self.calibration.get().expect("calibration slot initialized"))
    }

    pub fn rho(&self) -> f64 {
        self.cfg.lyapunov_rho_rel * self.profile.samples().norm_sq(InnerProductKind::H2).sqrt()
    }

    pub fn quadratic(&self) -> Result<&QuadraticCheckReport> {
        if self.quadratic.get().is_none() {
            let cal = self.calibration()?;
            let qc = lyapunov_quadratic_check(
                cal.m,
                self.rho(),
                self.cfg.lyapunov_samples,
                self.cfg.seed,
                self.pencil()?,
                &self.profile,
            )?;
            let _ = self.quadratic.set(qc);
        }
        Ok(self.quadratic.get().expect("quadratic slot initialized"))
    }

    fn tol(&self, name: &str) -> f64 {
        self.cfg.tol(name)
    }
}

pub fn check_wave(s: &Session) -> Result<Vec<CheckRecord>> {
    let rg = make_grid(RESIDUAL_L, RESIDUAL_N)?;
    let rp = wave::profile(&rg);
    let r_true = wave::ode_residual(&rp);
    let r_off = wave::ode_residual_at(&rp, 0.17);
    let tol = s.tol("wave_residual");
    let sens = s.tol("wave_sensitivity_min");
    let residual = CheckRecord::new("wave.residual", "solitary-wave-solves-the-profile-equation")
        .value("residual_linf", r_true)
        .value("residual_alpha_0_17", r_off)
        .value("grid_l", RESIDUAL_L)
        .value("grid_n", RESIDUAL_N as u64)
        .tol("residual_max", tol)
        .tol("sensitivity_min", sens)
        .gate(r_true < tol)
        .gate(r_off > sens);

    let (q1, q2) = charge_levels(&s.profile);
    let g_exact = 36.0 * 5f64.sqrt() / 875.0;
    let f_exact = 2.0 * 5f64.sqrt() / 5.0;
    let tol_f = s.tol("functional_match");
    let functionals = CheckRecord::new("wave.functionals", "closed-form-invariant-levels")
        .value("g", q1)
        .value("f", q2)
        .value("g_error", (q1 - g_exact).abs())
        .value("f_error", (q2 - f_exact).abs())
        .tol("max_error", tol_f)
        .gate((q1 - g_exact).abs() < tol_f)
        .gate((q2 - f_exact).abs() < tol_f);
    Ok(vec![residual, functionals])
}

fn sign_changes_in_core(v: &[f64]) -> usize {
    let linf = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    // spectral eigenvectors ring at the 1e-5 level in the far tails; sign
    // structure is only meaningful where the function lives
    let cut = 5e-3 * linf;
    let mut last = 0.0f64;
    let mut changes = 0usize;
    for &x in v {
        if x.abs() < cut {
            continue;
        }
        if last != 0.0 && x.signum() != last.signum() {
            changes += 1;
        }
        last = x;
    }
    changes
}

fn next_modulus(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .map(|v| v.abs())
        .filter(|a| *a > TOL_ZERO)
        .fold(f64::INFINITY, f64::min)
}

pub fn check_kernel_residuals(s: &Session) -> Result<Vec<CheckRecord>> {
    let rg = make_grid(RESIDUAL_L, RESIDUAL_N)?;
    let rp = wave::profile(&rg);
    let l1 = build_operator(OperatorSelect::L1, &rg, &rp)?;
    let l2 = build_operator(OperatorSelect::L2, &rg, &rp)?;
    let k1 = l1.apply(rp.deriv())?.linf();
    let k2 = l2.apply(rp.samples())?.linf();
    let tol = s.tol("kernel_residual");
    Ok(vec![CheckRecord::new(
        "spectrum.kernel-residuals",
        "translation-and-phase-modes-solve-the-kernel-equations",
    )
    .value("l1_on_wave_derivative_linf", k1)
    .value("l2_on_wave_linf", k2)
    .value("grid_l", RESIDUAL_L)
    .value("grid_n", RESIDUAL_N as u64)
    .tol("max", tol)
    .gate(k1 < tol)
    .gate(k2 < tol)])
}

pub fn check_spectrum(s: &Session, which: OperatorSelect) -> Result<Vec<CheckRecord>> {
    let (_, decomp) = s.operator(which)?;
    let evs = decomp.eigenvalues();
    let n_neg = decomp.n_negative();
    let n_zero = decomp.n_zero();
    let gap = next_modulus(evs.as_slice().expect("contiguous"));
    let tol_gap = s.tol("spectral_gap_min");
    let rec = match which {
        OperatorSelect::L1 => {
            let ground_changes = sign_changes_in_core(&decomp.eigenvector(0));
            CheckRecord::new("spectrum.l1.structure", "one-negative-direction-with-signed-ground-state")
                .value("lambda_min", evs[0])
                .value("n_negative", n_neg as u64)
                .value("n_zero", n_zero as u64)
                .value("next_modulus", gap)
                .value("ground_sign_changes", ground_changes as u64)
                .tol("gap_min", tol_gap)
                .gate(n_neg == 1)
                .gate(n_zero == 1)
                .gate(gap >= tol_gap)
                .gate(ground_changes == 0)
                .gate(evs[0] < 0.0)
        }
        OperatorSelect::L2 => {
            CheckRecord::new("spectrum.l2.structure", "nonnegative-with-one-dimensional-kernel")
                .value("lambda_min", evs[0])
                .value("n_negative", n_neg as u64)
                .value("n_zero", n_zero as u64)
                .value("next_modulus", gap)
                .tol("gap_min", tol_gap)
                .gate(n_neg == 0)
                .gate(n_zero == 1)
                .gate(gap >= tol_gap)
        }
    };
    Ok(vec![rec])
}

/// Counts at (L, 2N) and (1.5 L, N) must reproduce the base counts.
pub fn check_spectrum_robustness(s: &Session) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    let wide_grid = make_grid(1.5 * s.cfg.grid_l, s.cfg.grid_n)?;
    let wide_profile = wave::profile(&wide_grid);
    for which in [OperatorSelect::L1, OperatorSelect::L2] {
        let (_, base) = s.operator(which)?;
        let (base_neg, base_zero) = (base.n_negative(), base.n_zero());
        let counts = |evs: &[f64]| {
            let neg = evs.iter().filter(|&&v| v < -TOL_ZERO).count();
            let zero = evs.iter().filter(|&&v| v.abs() <= TOL_ZERO).count();
            (neg, zero)
        };
        let (fine_neg, fine_zero) = match which {
            // the doubled-N decomposition is shared with the Weinstein
            // refinement, which needs its vectors anyway
            OperatorSelect::L1 => {
                let (_, _, _, d) = s.refined_l1()?;
                (d.n_negative(), d.n_zero())
            }
            OperatorSelect::L2 => {
                let fine_grid = make_grid(s.cfg.grid_l, 2 * s.cfg.grid_n)?;
                let fine_profile = wave::profile(&fine_grid);
                let op = build_operator(which, &fine_grid, &fine_profile)?;
                let evs = eigenvalues_only(&op)?;
                counts(evs.as_slice().expect("contiguous"))
            }
        };
        let wide_op = build_operator(which, &wide_grid, &wide_profile)?;
        let wide_evs = eigenvalues_only(&wide_op)?;
        let (wide_neg, wide_zero) = counts(wide_evs.as_slice().expect("contiguous"));
        let id = match which {
            OperatorSelect::L1 => "spectrum.l1.robustness",
            OperatorSelect::L2 => "spectrum.l2.robustness",
        };
        records.push(
            CheckRecord::new(id, "eigenvalue-counts-stable-under-refinement")
                .value("n_negative", base_neg as u64)
                .value("n_zero", base_zero as u64)
                .value("n_negative_fine", fine_neg as u64)
                .value("n_zero_fine", fine_zero as u64)
                .value("n_negative_wide", wide_neg as u64)
                .value("n_zero_wide", wide_zero as u64)
                .gate(fine_neg == base_neg)
                .gate(fine_zero == base_zero)
                .gate(wide_neg == base_neg)
                .gate(wide_zero == base_zero),
        );
    }
    Ok(records)
}

pub fn check_totalpos(s: &Session) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();

    // transform of sech^2 on a symmetric sample set (odd count for the PF
    // certifier's centered stencils)
    let samples: Vec<f64> = (-1600..=1600).map(|i| rho(i as f64 * 0.025)).collect();
    let min_rho = samples.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let pf = pf2_check(&samples)?;
    records.push(
        CheckRecord::new("totalpos.sech-transform", "kernel-transform-is-positive-and-log-concave")
            .value("min_sample", min_rho)
            .value("log_concavity_nodes", pf.nodes_checked as u64)
            .value("pairwise_minors", pf.minors_checked as u64)
            .value("violation", pf.first_violation.clone().unwrap_or_default())
            .gate(min_rho > 0.0)
            .gate(pf.pass()),
    );

    let fg = FreqGrid::desk_default();
    for which in [OperatorSelect::L1, OperatorSelect::L2] {
        let kernel = build_kernel(which, &fg);
        let min_sample = kernel.samples().iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let pf = pf2_check(kernel.samples())?;
        let c = kernel.samples().len() / 2;
        let closed_gap = kernel
            .samples()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let xi = (i as f64 - c as f64) * kernel.spacing();
                (v - kernel_closed_form(which, xi)).abs()
            })
            .fold(0.0f64, f64::max);
        let id = match which {
            OperatorSelect::L1 => "totalpos.l1-kernel",
            OperatorSelect::L2 => "totalpos.l2-kernel",
        };
        records.push(
            CheckRecord::new(id, "potential-transform-is-positive-and-pf2")
                .value("min_sample", min_sample)
                .value("pairwise_minors", pf.minors_checked as u64)
                .value("closed_form_gap", closed_gap)
                .value("violation", pf.first_violation.clone().unwrap_or_default())
                .gate(min_sample > 0.0)
                .gate(pf.pass())
                .gate(closed_gap < 1e-10),
        );
    }

    let family = FreqGrid::new(FAMILY_XI_MAX, FAMILY_POINTS)?;
    let s0 = build_stheta(OperatorSelect::L2, 0.0, &family)?;
    let (lams, vecs) = s0.eigenpairs(1)?;
    let cos = ground_overlap(&s0, &vecs[0]).abs();
    let tol_unit = s.tol("stheta_unit_eigenvalue");
    let tol_cos = s.tol("stheta_cosine_gap");
    records.push(
        CheckRecord::new("totalpos.family.unit-crossing", "family-at-zero-reproduces-the-phase-mode")
            .value("lambda0", lams[0])
            .value("cosine_gap", 1.0 - cos)
            .tol("unit_max", tol_unit)
            .tol("cosine_gap_max", tol_cos)
            .gate((lams[0] - 1.0).abs() <= tol_unit)
            .gate(1.0 - cos <= tol_cos),
    );

    let (_, l1_decomp) = s.operator(OperatorSelect::L1)?;
    let lam_neg = l1_decomp.eigenvalues()[0];
    let ts = theta_star(OperatorSelect::L1, &family)?;
    let rel = (ts - lam_neg.abs()).abs() / lam_neg.abs();
    let tol_cross = s.tol("stheta_crossing_rel");
    records.push(
        CheckRecord::new(
            "totalpos.family.crossing",
            "unity-crossing-encodes-the-negative-eigenvalue",
        )
        .value("theta_star", ts)
        .value("lambda_negative", lam_neg)
        .value("relative_gap", rel)
        .tol("relative_max", tol_cross)
        .gate(rel <= tol_cross),
    );

    let thetas: Vec<f64> = (0..21).map(|i| 0.05 * i as f64).collect();
    let mut monotone = true;
    let mut min_drop = f64::INFINITY;
    for which in [OperatorSelect::L1, OperatorSelect::L2] {
        let curve = eig_curve(which, &thetas, &family, 1)?;
        for w in curve.principal().windows(2) {
            monotone &= w[1] < w[0];
            min_drop = min_drop.min(w[0] - w[1]);
        }
    }
    records.push(
        CheckRecord::new("totalpos.family.monotone", "principal-eigenvalue-decreases-in-theta")
            .value("theta_points", thetas.len() as u64)
            .value("min_step_drop", min_drop)
            .gate(monotone),
    );

    Ok(records)
}

pub fn check_weinstein(s: &Session) -> Result<Vec<CheckRecord>> {
    let (op, decomp) = s.operator(OperatorSelect::L1)?;
    let direct = weinstein_direct_from(op, decomp, &s.profile)?;

    let family = FreqGrid::new(FAMILY_XI_MAX, FAMILY_POINTS)?;
    let s0 = build_stheta(OperatorSelect::L1, 0.0, &family)?;
    let (lams, _) = s0.eigenpairs(120)?;
    let evens: Vec<f64> = lams.iter().step_by(2).copied().collect();
    let series = weinstein_series(&evens, 60)?;
    let series_rel = (series.value / direct.i_direct - 1.0).abs();
    let tol_series = s.tol("weinstein_series_rel");

    let negative = CheckRecord::new("weinstein.negative", "weinstein-quantity-is-negative")
        .value("i_direct", direct.i_direct)
        .value("solve_residual", direct.solve_residual)
        .value("orth_residual", direct.orth_residual)
        .value("modes_used", direct.modes_used as u64)
        .gate(direct.i_direct < 0.0);
    let series_rec = CheckRecord::new("weinstein.series", "series-route-confirms-the-direct-solve")
        .value("i_series", series.value)
        .value("relative_gap", series_rel)
        .value("tail_bound", series.tail_bound)
        .tol("relative_max", tol_series)
        .gate(series.value < 0.0)
        .gate(series_rel <= tol_series);

    let (_, fine_profile, fine_op, fine_decomp) = s.refined_l1()?;
    let refined = weinstein_direct_from(fine_op, fine_decomp, fine_profile)?;
    let refine_rel = (refined.i_direct / direct.i_direct - 1.0).abs();
    let tol_refine = s.tol("weinstein_refine_rel");
    let refine_rec =
        CheckRecord::new("weinstein.refinement", "direct-value-stable-under-grid-doubling")
            .value("i_direct", direct.i_direct)
            .value("i_direct_refined", refined.i_direct)
            .value("relative_gap", refine_rel)
            .tol("relative_max", tol_refine)
            .gate(refine_rel <= tol_refine);
    Ok(vec![negative, series_rec, refine_rec])
}

pub fn check_coercivity(s: &Session) -> Result<Vec<CheckRecord>> {
    let (l1, _) = s.operator(OperatorSelect::L1)?;
    let (l2, _) = s.operator(OperatorSelect::L2)?;
    let phi = s.profile.samples();
    let dphi = s.profile.deriv();

    let gamma = constrained_min(l1, &[phi], InnerProductKind::L2)?.0;
    let tol_gamma = s.tol("gamma_abs");
    let gamma_rec =
        CheckRecord::new("coercivity.constrained-infimum", "mass-constrained-infimum-vanishes")
            .value("gamma", gamma)
            .tol("abs_max", tol_gamma)
            .gate(gamma.abs() < tol_gamma);

    let d1 = constrained_min(l1, &[phi, dphi], InnerProductKind::L2)?.0;
    let d2 = constrained_min(l2, &[phi], InnerProductKind::L2)?.0;
    let deltas_rec =
        CheckRecord::new("coercivity.tangent-minima", "tangent-orthogonality-restores-positivity")
            .value("delta1", d1)
            .value("delta2", d2)
            .gate(d1 > 0.0)
            .gate(d2 > 0.0)
            .gate(d1 > gamma.abs());

    let z = subspace_bound(
        "symplectically orthogonal subspace",
        &constraints_mixed(&s.profile),
        None,
        &s.grid,
        &s.profile,
    )?;
    let z_rec = CheckRecord::new("coercivity.subspace", "orthogonal-subspace-bound-is-positive")
        .value("lambda_min", z.lambda_min)
        .value("constraints", z.constraint_labels.len() as u64)
        .gate(z.lambda_min > 0.0);

    let cal = s.calibration()?;
    let cal_rec = CheckRecord::new(
        "coercivity.penalty-calibration",
        "penalized-form-achieves-half-the-target",
    )
    .value("m", cal.m)
    .value("delta_target", cal.delta_target)
    .value("lambda_min", cal.lambda_min)
    .gate(cal.m.is_finite() && cal.m > 0.0)
    .gate(cal.lambda_min >= 0.5 * cal.delta_target);

    let tol_c = s.tol("garding_c_max");
    let cert1 = garding_certify(l1, 0.5)?;
    let cert2 = garding_certify(l2, 0.5)?;
    let garding_rec = CheckRecord::new("coercivity.garding", "garding-bound-with-half-weight")
        .value("eps", cert1.eps)
        .value("c_l1", cert1.c)
        .value("c_l2", cert2.c)
        .value("min_eig_l1", cert1.min_eig)
        .value("min_eig_l2", cert2.min_eig)
        .tol("c_max", tol_c)
        .gate(cert1.valid())
        .gate(cert2.valid())
        .gate(cert1.c <= tol_c);

    Ok(vec![gamma_rec, deltas_rec, z_rec, cal_rec, garding_rec])
}

fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0f64, f64::max)
}

pub fn check_dynamics(s: &Session) -> Result<Vec<CheckRecord>> {
    let cfg = &s.cfg;
    let u0 = s.profile.state();
    let fitter = OrbitFitter::new(&s.profile);
    let icfg = IntegratorConfig::new(cfg.dt, cfg.t_max, cfg.record_every)?;
    let mut times = Vec::new();
    let mut thetas = Vec::new();
    let diag = evolve_with(&u0, &icfg, |t, u| {
        let fit = fitter.fit(u)?;
        times.push(t);
        thetas.push(fit.theta1);
        Ok(())
    })?;
    let rate = phase_rate(&times, &thetas)?;
    let tol_mass = s.tol("mass_drift");
    let tol_energy = s.tol("energy_drift");
    let conservation = CheckRecord::new("dynamics.conservation", "flow-conserves-mass-and-energy")
        .value("t_max", cfg.t_max)
        .value("dt", cfg.dt)
        .value("mass_drift", diag.mass_drift())
        .value("energy_drift", diag.energy_drift())
        .tol("mass_max", tol_mass)
        .tol("energy_max", tol_energy)
        .gate(diag.mass_drift() < tol_mass)
        .gate(diag.energy_drift() < tol_energy);
    let tol_rate = s.tol("phase_rate_abs");
    let phase = CheckRecord::new("dynamics.phase-rate", "standing-wave-rotates-at-alpha")
        .value("fitted_rate", rate)
        .value("expected", ALPHA)
        .tol("abs_max", tol_rate)
        .gate((rate - ALPHA).abs() <= tol_rate);

    // order measurement against the exact rotation over one time unit
    let exact = u0.rotate(-ALPHA);
    let mut errs = Vec::new();
    for dt in [2e-3, 1e-3] {
        let run = IntegratorConfig::new(dt, 1.0, 1_000_000)?;
        let d = evolve_with(&u0, &run, |_, _| Ok(()))?;
        errs.push(max_diff(&d.terminal, &exact));
    }
    let ratio = errs[0] / errs[1];
    let lo = s.tol("strang_ratio_lo");
    let hi = s.tol("strang_ratio_hi");
    let order = CheckRecord::new("dynamics.order", "splitting-converges-at-second-order")
        .value("error_coarse", errs[0])
        .value("error_fine", errs[1])
        .value("ratio", ratio)
        .tol("ratio_lo", lo)
        .tol("ratio_hi", hi)
        .gate(ratio >= lo && ratio <= hi);

    let mut pert = u0.clone();
    for (v, &x) in pert.values_mut().iter_mut().zip(s.grid.nodes()) {
        *v += Complex64::new(0.0, 0.02 * (-(x / 2.0) * (x / 2.0)).exp());
    }
    let mut u = pert.clone();
    for _ in 0..200 {
        u = step(&u, cfg.dt)?;
    }
    for _ in 0..200 {
        u = step(&u, -cfg.dt)?;
    }
    let rev = max_diff(&u, &pert);
    let tol_rev = s.tol("reversibility");
    let reversibility = CheckRecord::new("dynamics.reversibility", "splitting-is-time-reversible")
        .value("return_gap", rev)
        .value("steps", 200u64)
        .tol("max", tol_rev)
        .gate(rev < tol_rev);

    Ok(vec![conservation, phase, order, reversibility])
}

/// Deterministic off-orbit state used by several orbit checks.
fn bump_state(s: &Session) -> ComplexField {
    let mut v = s.profile.state();
    for (a, &x) in v.values_mut().iter_mut().zip(s.grid.nodes()) {
        *a += Complex64::new(
            0.01 * (-(x / 3.0) * (x / 3.0)).exp(),
            0.003 * x * (-(x / 4.0) * (x / 4.0)).exp(),
        );
    }
    v
}

pub fn check_orbit(s: &Session) -> Result<Vec<CheckRecord>> {
    let fitter = OrbitFitter::new(&s.profile);
    let tol_rec = s.tol("orbit_recovery");
    let mut max_d = 0.0f64;
    let mut max_param = 0.0f64;
    let mut all_converged = true;
    for (theta, r) in [(0.7, 3.3), (-1.2, -7.25), (2.9, 0.1)] {
        let v = ComplexField::from_real(&s.profile.samples().translate(r)).rotate(theta);
        let fit = fitter.fit(&v)?;
        max_d = max_d.max(fit.distance);
        max_param = max_param.max((fit.theta1 - theta).abs()).max((fit.r1 - r).abs());
        all_converged &= fit.converged;
    }
    let recovery = CheckRecord::new("orbit.recovery", "fit-recovers-exact-orbit-points")
        .value("max_distance", max_d)
        .value("max_parameter_error", max_param)
        .value("converged", all_converged)
        .tol("distance_max", tol_rec)
        .gate(max_d < tol_rec)
        .gate(max_param < 1e-8)
        .gate(all_converged);

    let v = bump_state(s);
    let base = fitter.fit(&v)?;
    let moved = fitter.fit(&v.rotate(0.8).translate(5.25))?;
    let inv_gap = (base.distance - moved.distance).abs();
    let tol_inv = s.tol("orbit_invariance");
    let invariance = CheckRecord::new("orbit.invariance", "distance-is-symmetry-invariant")
        .value("distance", base.distance)
        .value("invariance_gap", inv_gap)
        .tol("max", tol_inv)
        .gate(inv_gap < tol_inv);

    let tol_orth = s.tol("orbit_orthogonality");
    let orth = base.orth_residuals[0].abs().max(base.orth_residuals[1].abs());
    let first_order =
        CheckRecord::new("orbit.first-order", "fit-satisfies-the-orthogonality-conditions")
            .value("rotation_residual", base.orth_residuals[0])
            .value("translation_residual", base.orth_residuals[1])
            .tol("max", tol_orth)
            .gate(orth < tol_orth)
            .gate(base.converged);

    let nphi2 = s.profile.samples().norm_sq(InnerProductKind::H2);
    let base_state = s.profile.state();
    let mut min_sep = f64::INFINITY;
    for sign in [1.0f64, -1.0] {
        for k in 0..41 {
            let r = -s.grid.half_length() + k as f64 * (2.0 * s.grid.half_length() / 41.0);
            let turned = ComplexField::from_real(&s.profile.samples().translate(r))
                .rotate(sign * std::f64::consts::FRAC_PI_2);
            let mut diff = base_state.clone();
            for (a, b) in diff.values_mut().iter_mut().zip(turned.values()) {
                *a -= b;
            }
            min_sep = min_sep.min(diff.norm_sq(InnerProductKind::H2));
        }
    }
    let separation = CheckRecord::new("orbit.separation", "quarter-turned-waves-stay-apart")
        .value("min_separation_sq", min_sep)
        .value("wave_norm_sq", nphi2)
        .gate(min_sep >= nphi2 * (1.0 - 1e-12));

    Ok(vec![recovery, invariance, first_order, separation])
}

pub fn check_lyapunov(s: &Session) -> Result<Vec<CheckRecord>> {
    let cal = s.calibration()?;
    let lyap = Lyapunov::new(&s.profile, cal.m)?;
    let tol_orbit = s.tol("lyapunov_on_orbit");
    let mut max_v = lyap.value(&s.profile.state()).v.abs();
    for (theta, r) in [(0.3, 5.0), (-2.1, -11.5)] {
        let u = ComplexField::from_real(&s.profile.samples().translate(r)).rotate(theta);
        max_v = max_v.max(lyap.value(&u).v.abs());
    }
    let on_orbit = CheckRecord::new("lyapunov.on-orbit", "functional-vanishes-on-the-orbit")
        .value("max_abs_value", max_v)
        .value("m", cal.m)
        .tol("max", tol_orbit)
        .gate(max_v < tol_orbit);

    let tol_sym = s.tol("symmetry_pairing");
    let mut max_pairing = 0.0f64;
    for state in [bump_state(s), initial_state(PerturbationFamily::Odd, 0.05, s.cfg.seed, &s.profile)?]
    {
        let (s1, s2) = lyap.symmetry_pairings(&state);
        max_pairing = max_pairing.max(s1.abs()).max(s2.abs());
    }
    let symmetry =
        CheckRecord::new("lyapunov.symmetry", "gradient-annihilates-symmetry-directions")
            .value("max_pairing", max_pairing)
            .tol("max", tol_sym)
            .gate(max_pairing < tol_sym);

    let qc = s.quadratic()?;
    let quadratic =
        CheckRecord::new("lyapunov.quadratic-lower-bound", "functional-dominates-squared-distance")
            .value("c_emp", qc.c_emp)
            .value("samples", qc.samples as u64)
            .value("rho", qc.rho)
            .value("violations", qc.violations.len() as u64)
            .value("symmetry_residual_max", qc.symmetry_residual_max)
            .tol("symmetry_max", tol_sym)
            .gate(qc.c_emp > 0.0)
            .gate(qc.violations.is_empty())
            .gate(qc.symmetry_residual_max < tol_sym);

    Ok(vec![on_orbit, symmetry, quadratic])
}

/// The stability sweep, returned alongside its records so callers can write
/// trajectory artifacts. A blow-up is reported as a failing record rather
/// than an abort.
pub fn run_stability(s: &Session) -> Result<(Option<StabilitySweep>, Vec<CheckRecord>)> {
    let cal = s.calibration()?;
    let qc = s.quadratic()?;
    let family = family_from_name(&s.cfg.stability_family)?;
    let icfg =
        IntegratorConfig::new(s.cfg.dt, s.cfg.stability_t_max, s.cfg.stability_record_every)?;
    let sweep = match stability_experiment(
        family,
        &s.cfg.stability_amplitudes,
        &icfg,
        s.cfg.seed,
        cal.m,
        qc.c_emp,
        &s.profile,
    ) {
        Ok(sweep) => sweep,
        Err(Error::BlowUp { t, norm }) => {
            let rec = CheckRecord::new("stability.bounded", "perturbed-runs-stay-near-the-orbit")
                .value("blow_up_time", t)
                .value("blow_up_norm", norm)
                .gate(false);
            return Ok((None, vec![rec]));
        }
        Err(e) => return Err(e),
    };

    let sups: Vec<f64> = sweep.runs.iter().map(|r| r.sup_distance).collect();
    let max_sup = sups.iter().fold(0.0f64, |m, &v| m.max(v));
    let wave_norm = s.profile.samples().norm_sq(InnerProductKind::H2).sqrt();
    let bounded = CheckRecord::new("stability.bounded", "perturbed-runs-stay-near-the-orbit")
        .value("family", sweep.family.label())
        .value("amplitudes", &s.cfg.stability_amplitudes)
        .value("sup_distances", &sups)
        .value("t_max", s.cfg.stability_t_max)
        .gate(sups.iter().all(|d| d.is_finite()))
        .gate(max_sup < 0.5 * wave_norm);

    let drift = sweep.runs.iter().map(|r| r.lyapunov_drift).fold(0.0f64, f64::max);
    let mass = sweep.runs.iter().map(|r| r.mass_drift).fold(0.0f64, f64::max);
    let tol_drift = s.tol("lyapunov_drift");
    let chain = CheckRecord::new("stability.energy-chain", "lyapunov-bound-controls-the-distance")
        .value("c_emp", sweep.c_emp)
        .value("m", sweep.penalty)
        .value("lyapunov_drift", drift)
        .value("mass_drift", mass)
        .value("chain_ok", sweep.runs.iter().all(|r| r.chain_ok))
        .tol("drift_max", tol_drift)
        .gate(sweep.runs.iter().all(|r| r.chain_ok))
        .gate(drift < tol_drift);

    let tol_trend = s.tol("spearman_min");
    let trend = CheckRecord::new("stability.trend", "smaller-perturbations-stay-closer")
        .value("spearman", sweep.spearman)
        .tol("min", tol_trend)
        .gate(sweep.spearman > tol_trend);

    Ok((Some(sweep), vec![bounded, chain, trend]))
}

/// In-process reproducibility of the seeded artifacts: the same seed must
/// reproduce the random perturbation and its fit bit for bit.
pub fn check_determinism(s: &Session) -> Result<Vec<CheckRecord>> {
    let fitter = OrbitFitter::new(&s.profile);
    let probe = || -> Result<(u64, u64, u64)> {
        let u = initial_state(
            PerturbationFamily::RandomBandlimited,
            s.cfg.stability_amplitudes[0],
            s.cfg.seed,
            &s.profile,
        )?;
        let fit = fitter.fit(&u)?;
        let pf = pf2_check(&(-400..=400).map(|i| rho(i as f64 * 0.1)).collect::<Vec<f64>>())?;
        Ok((fit.distance.to_bits(), fit.theta1.to_bits(), pf.minors_checked as u64))
    };
    let first = probe()?;
    let second = probe()?;
    Ok(vec![CheckRecord::new("report.determinism", "seeded-randomness-reproduces-bitwise")
        .value("seed", s.cfg.seed)
        .value("probe_distance_bits", format!("{:016x}", first.0))
        .value("matches", first == second)
        .gate(first == second)])
}

/// Everything, in report order. The stability sweep is returned for
/// trajectory artifacts.
pub fn run_all(s: &Session) -> Result<(Option<StabilitySweep>, Vec<CheckRecord>)> {
    let mut records = Vec::new();
    records.extend(check_wave(s)?);
    records.extend(check_kernel_residuals(s)?);
    records.extend(check_spectrum(s, OperatorSelect::L1)?);
    records.extend(check_spectrum(s, OperatorSelect::L2)?);
    records.extend(check_spectrum_robustness(s)?);
    records.extend(check_totalpos(s)?);
    records.extend(check_weinstein(s)?);
    records.extend(check_coercivity(s)?);
    records.extend(check_dynamics(s)?);
    records.extend(check_orbit(s)?);
    records.extend(check_lyapunov(s)?);
    let (sweep, stability_records) = run_stability(s)?;
    records.extend(stability_records);
    records.extend(check_determinism(s)?);
    Ok((sweep, records))
}
