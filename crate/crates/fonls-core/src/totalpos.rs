//! Frequency-side positivity machinery: the kernel base rho, log-concavity
//! and PF(2) checks, and the compact operator family S_theta whose
//! eigenvalue-1 crossings encode the physical operators' negative spectrum.
//!
//! The family acts on functions of frequency: (S_theta g)(xi) =
//! w_theta(xi)^{-1} Integral K(xi - eta) g(eta) d eta with weight
//! w_theta = xi^4 + xi^2 + theta + alpha and kernel K = transform of the
//! potential divided by 2 pi. The similar symmetric form
//! S~[i,j] = K(xi_i - xi_j) dxi / sqrt(w_i w_j) has the same eigenvalues.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::linops::OperatorSelect;
use crate::wave::{AMPLITUDE, INV_WIDTH};
use crate::{ALPHA, TOL_ZERO};

/// Default truncation half-width of the frequency interval.
pub const DEFAULT_XI_MAX: f64 = 40.0;
/// Default node count; the kernel decays exponentially and the weight grows
/// like xi^4, so this resolves the compact part to well below 1e-6.
pub const DEFAULT_FREQ_POINTS: usize = 1600;

/// Transform of sech^2 up to scaling: pi xi / sinh(pi xi / 2), continued by
/// rho(0) = 2. Strictly positive, even, log-concave.
pub fn rho(xi: f64) -> f64 {
    let t = std::f64::consts::FRAC_PI_2 * xi;
    if t == 0.0 {
        return 2.0;
    }
    if t.abs() > 700.0 {
        // sinh overflows past ~709; the true value is below 1e-300
        return 0.0;
    }
    2.0 * t / t.sinh()
}

/// Transform of the wave itself: phi_hat(xi) = (a/b) rho(xi/b).
pub fn wave_transform(xi: f64) -> f64 {
    AMPLITUDE / INV_WIDTH * rho(xi / INV_WIDTH)
}

/// Uniform symmetric frequency grid [-xi_max, xi_max] with m nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    xi_max: f64,
    m: usize,
    dxi: f64,
    xi: Vec<f64>,
}

impl FreqGrid {
    pub fn new(xi_max: f64, m: usize) -> Result<Self> {
        if !(xi_max > 0.0) || !xi_max.is_finite() {
            return Err(Error::InvalidInput(format!("frequency half-width {xi_max} must be positive")));
        }
        if m < 8 {
            return Err(Error::InvalidInput(format!("frequency grid needs at least 8 nodes, got {m}")));
        }
        let dxi = 2.0 * xi_max / (m as f64 - 1.0);
        let xi = (0..m).map(|i| -xi_max + i as f64 * dxi).collect();
        Ok(Self { xi_max, m, dxi, xi })
    }

    pub fn desk_default() -> Self {
        Self::new(DEFAULT_XI_MAX, DEFAULT_FREQ_POINTS).expect("default grid is valid")
    }

    pub fn half_width(&self) -> f64 {
        self.xi_max
    }

    pub fn n_points(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.dxi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xi
    }
}

/// Kernel samples on the difference grid {d * dxi : |d| <= m-1}.
#[derive(Debug, Clone)]
pub struct KernelFn {
    dxi: f64,
    /// length 2m-1, center index m-1 holds K(0)
    samples: Vec<f64>,
}

impl KernelFn {
    pub fn spacing(&self) -> f64 {
        self.dxi
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn center(&self) -> usize {
        self.samples.len() / 2
    }

    /// K at difference index d = i - j.
    pub fn at_offset(&self, d: isize) -> f64 {
        self.samples[(self.center() as isize + d) as usize]
    }
}

/// Kernel of the S family: the transform of the potential (3 phi^2 or phi^2)
/// divided by 2 pi, computed by discrete self-convolution of the wave
/// transform rather than by transforming sampled phi^2, which keeps the
/// exponential tail free of truncation artifacts.
pub fn build_kernel(which: OperatorSelect, grid: &FreqGrid) -> KernelFn {
    let m = grid.n_points();
    let dxi = grid.spacing();
    let scale = match which {
        OperatorSelect::L1 => 3.0,
        OperatorSelect::L2 => 1.0,
    };
    // wave transform sampled on {j dxi : |j| <= m-1}; decay ~ e^{-7|xi|}
    // makes the [-2 xi_max, 2 xi_max] window exhaustive
    let p = 2 * m - 1;
    let c = m - 1;
    let f: Vec<f64> = (0..p).map(|j| wave_transform((j as f64 - c as f64) * dxi)).collect();
    // one 2 pi from the product-transform convolution, one folded into the
    // kernel itself
    let two_pi = 2.0 * std::f64::consts::PI;
    let pref = scale * dxi / (two_pi * two_pi);
    // K(d dxi) = pref * sum_n f(n) f(d - n); in array indices the difference
    // d sits at full-convolution position d + 2c
    let mut samples = vec![0.0f64; p];
    for (k, s) in samples.iter_mut().enumerate() {
        let full = k + c; // (k - c) + 2c
        let lo = full.saturating_sub(p - 1);
        let hi = full.min(p - 1);
        let mut acc = 0.0;
        for j in lo..=hi {
            acc += f[j] * f[full - j];
        }
        *s = pref * acc;
    }
    KernelFn { dxi, samples }
}

/// Outcome of the PF(2) certification on one sampled function.
#[derive(Debug, Clone)]
pub struct Pf2Report {
    pub nodes_checked: usize,
    pub minors_checked: usize,
    pub first_violation: Option<String>,
}

impl Pf2Report {
    pub fn pass(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Certifies the PF(2) property of a positive even function sampled on a
/// uniform symmetric grid (odd length): log-concavity at every interior node
/// (one-sided stencils at the center, where a PF kernel may have a kink) plus
/// seeded 2x2 minor spot-checks h(x1-y1)h(x2-y2) >= h(x1-y2)h(x2-y1) over
/// ordered quadruples, evaluated in log space.
pub fn pf2_check(h: &[f64]) -> Result<Pf2Report> {
    let n = h.len();
    if n < 9 || n % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "PF(2) check needs an odd sample count of at least 9, got {n}"
        )));
    }
    if let Some(i) = h.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("sample {i} is not strictly positive: {}", h[i])));
    }
    let l: Vec<f64> = h.iter().map(|&v| v.ln()).collect();
    let c = n / 2;
    let tol = 1e-9;
    let mut first_violation = None;
    let mut nodes_checked = 0usize;
    for i in 1..n - 1 {
        let d2 = if i == c {
            // one-sided from each flank so a corner at 0 cannot hide a
            // log-convex dent
            let left = l[c - 2] - 2.0 * l[c - 1] + l[c];
            let right = l[c] - 2.0 * l[c + 1] + l[c + 2];
            left.max(right)
        } else {
            l[i - 1] - 2.0 * l[i] + l[i + 1]
        };
        nodes_checked += 1;
        if d2 >= tol && first_violation.is_none() {
            first_violation = Some(format!("log-convex at node {i} (second difference {d2:.3e})"));
        }
    }
    // Seeded quadruples drawn from the middle half so every difference index
    // stays on the sample grid.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xf2f2);
    let lo = n / 4;
    let hi = 3 * n / 4;
    let n_minors = 1000usize;
    for _ in 0..n_minors {
        let mut i1 = rng.random_range(lo..hi);
        let mut i2 = rng.random_range(lo..hi);
        if i1 == i2 {
            i2 = if i2 + 1 < hi { i2 + 1 } else { lo };
        }
        if i1 > i2 {
            std::mem::swap(&mut i1, &mut i2);
        }
        let mut j1 = rng.random_range(lo..hi);
        let mut j2 = rng.random_range(lo..hi);
        if j1 == j2 {
            j2 = if j2 + 1 < hi { j2 + 1 } else { lo };
        }
        if j1 > j2 {
            std::mem::swap(&mut j1, &mut j2);
        }
        let idx = |i: usize, j: usize| (i + c) - j;
        let main = l[idx(i1, j1)] + l[idx(i2, j2)];
        let anti = l[idx(i1, j2)] + l[idx(i2, j1)];
        if main + tol < anti && first_violation.is_none() {
            first_violation = Some(format!(
                "minor violation at x-indices ({i1},{i2}), y-indices ({j1},{j2}): {main} < {anti}"
            ));
        }
    }
    Ok(Pf2Report { nodes_checked, minors_checked: n_minors, first_violation })
}

/// One member of the family, carrying the symmetrized matrix.
#[derive(Debug, Clone)]
pub struct SThetaOperator {
    theta: f64,
    grid: FreqGrid,
    kernel: KernelFn,
    weights: Vec<f64>,
    sym: Array2<f64>,
}

fn weight_at(xi: f64, theta: f64) -> f64 {
    xi.powi(4) + xi * xi + theta + ALPHA
}

fn assemble_sym(kernel: &KernelFn, grid: &FreqGrid, theta: f64) -> (Vec<f64>, Array2<f64>) {
    let m = grid.n_points();
    let weights: Vec<f64> = grid.nodes().iter().map(|&x| weight_at(x, theta)).collect();
    let root: Vec<f64> = weights.iter().map(|&w| w.sqrt()).collect();
    let mut sym = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..=i {
            let v = kernel.at_offset(i as isize - j as isize) * grid.spacing() / (root[i] * root[j]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    (weights, sym)
}

pub fn build_stheta(which: OperatorSelect, theta: f64, grid: &FreqGrid) -> Result<SThetaOperator> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidInput(format!("family parameter theta {theta} must be >= 0")));
    }
    let kernel = build_kernel(which, grid);
    let (weights, sym) = assemble_sym(&kernel, grid, theta);
    Ok(SThetaOperator { theta, grid: grid.clone(), kernel, weights, sym })
}

impl SThetaOperator {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelFn {
        &self.kernel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sym_matrix(&self) -> &Array2<f64> {
        &self.sym
    }

    /// The raw non-symmetric discretization S[i,j] = K(xi_i - xi_j) dxi / w_i,
    /// exactly similar to the stored symmetric form.
    pub fn nonsym_matrix(&self) -> Array2<f64> {
        let m = self.grid.n_points();
        let mut s = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] =
                    self.kernel.at_offset(i as isize - j as isize) * self.grid.spacing() / self.weights[i];
            }
        }
        s
    }

    /// Eigenvalues ordered by decreasing absolute value with eigenvectors of
    /// the symmetric form; the leading one is the Perron pair.
    pub fn eigenpairs(&self, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = self.grid.n_points();
        if k > m {
            return Err(Error::InvalidInput(format!("requested {k} eigenpairs from an {m}-node grid")));
        }
        let (vals, vecs) = linalg::eigh(&self.sym)?;
        let order = magnitude_order(vals.as_slice().unwrap());
        let mut lams = Vec::with_capacity(k);
        let mut columns = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            lams.push(vals[i]);
            columns.push(vecs.column(i).to_vec());
        }
        Ok((lams, columns))
    }

    /// Largest-magnitude eigenvalue; positive and simple for these kernels.
    pub fn principal_eigenvalue(&self) -> Result<f64> {
        let vals = linalg::eigvalsh(&self.sym)?;
        Ok(vals[vals.len() - 1].max(-vals[0]))
    }
}

/// Indices of `vals` (assumed ascending) ordered by decreasing |value|.
fn magnitude_order(vals: &[f64]) -> Vec<usize> {
    let n = vals.len();
    let mut order = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo <= hi {
        if vals[hi].abs() >= vals[lo].abs() {
            order.push(hi);
            if hi == 0 {
                break;
            }
            hi -= 1;
        } else {
            order.push(lo);
            lo += 1;
        }
        if lo > hi {
            break;
        }
    }
    order
}

/// Leading eigenvalue curves over a theta sweep, ordered by decreasing
/// absolute value at each theta.
#[derive(Debug, Clone)]
pub struct EigCurve {
    pub thetas: Vec<f64>,
    /// curves[c][t] is the (c+1)-th largest-magnitude eigenvalue at thetas[t]
    pub curves: Vec<Vec<f64>>,
}

impl EigCurve {
    pub fn principal(&self) -> &[f64] {
        &self.curves[0]
    }
}

pub fn eig_curve(
    which: OperatorSelect,
    thetas: &[f64],
    grid: &FreqGrid,
    n_curves: usize,
) -> Result<EigCurve> {
    if thetas.is_empty() || n_curves == 0 {
        return Err(Error::InvalidInput("empty theta sweep or zero curves requested".into()));
    }
    if thetas.windows(2).any(|w| w[0] >= w[1]) || !(thetas[0] >= 0.0) {
        return Err(Error::InvalidInput("theta values must be ascending and nonnegative".into()));
    }
    let kernel = build_kernel(which, grid);
    let mut curves = vec![Vec::with_capacity(thetas.len()); n_curves];
    for &theta in thetas {
        let (_, sym) = assemble_sym(&kernel, grid, theta);
        let vals = linalg::eigvalsh(&sym)?;
        let order = magnitude_order(vals.as_slice().unwrap());
        for (c, curve) in curves.iter_mut().enumerate() {
            curve.push(vals[order[c]]);
        }
    }
    Ok(EigCurve { thetas: thetas.to_vec(), curves })
}

/// The unique theta with principal eigenvalue 1; its negative is the matching
/// eigenvalue of the physical operator. Bisection to 1e-8 absolute.
pub fn theta_star(which: OperatorSelect, grid: &FreqGrid) -> Result<f64> {
    let kernel = build_kernel(which, grid);
    let principal = |theta: f64| -> Result<f64> {
        let (_, sym) = assemble_sym(&kernel, grid, theta);
        let vals = linalg::eigvalsh(&sym)?;
        Ok(vals[vals.len() - 1].max(-vals[0]))
    };
    let at_zero = principal(0.0)?;
    // a principal value within tolerance of 1 at theta = 0 is the kernel
    // direction itself, not a negative eigenvalue
    if at_zero <= 1.0 + TOL_ZERO {
        return Err(Error::Numerical(format!(
            "principal eigenvalue at theta=0 is {at_zero}; no crossing above theta=0"
        )));
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while principal(hi)? > 1.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Numerical("no eigenvalue-1 crossing below theta=1e3".into()));
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if principal(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Cosine similarity between an eigenvector of the symmetric form and the
/// weighted wave transform sqrt(w) phi_hat it should reproduce at theta = 0.
pub fn ground_overlap(op: &SThetaOperator, eigvec: &[f64]) -> f64 {
    let target: Vec<f64> = op
        .grid
        .nodes()
        .iter()
        .zip(op.weights())
        .map(|(&x, &w)| w.sqrt() * wave_transform(x))
        .collect();
    let dot: f64 = eigvec.iter().zip(&target).map(|(a, b)| a * b).sum();
    let na: f64 = eigvec.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = target.iter().map(|b| b * b).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Closed-form check value for the L2-family kernel:
/// (phi^2)^/(2 pi) = (a^2/b) rho(xi/b) (4 + (xi/b)^2) / 6 / (2 pi).
pub fn kernel_closed_form(which: OperatorSelect, xi: f64) -> f64 {
    let scale = match which {
        OperatorSelect::L1 => 3.0,
        OperatorSelect::L2 => 1.0,
    };
    let z = xi / INV_WIDTH;
    scale * AMPLITUDE * AMPLITUDE / INV_WIDTH * rho(z) * (4.0 + z * z) / 6.0
        / (2.0 * std::f64::consts::PI)
}

/// Spectral-route consistency: eigenvalues of the non-symmetric matrix agree
/// with the symmetric form's. Returns the max absolute mismatch over the k
/// largest magnitudes.
pub fn symmetrization_mismatch(op: &SThetaOperator, k: usize) -> Result<f64> {
    use ndarray_linalg::Eig;
    let (sym_vals, _) = op.eigenpairs(k)?;
    let (vals, _) = op
        .nonsym_matrix()
        .eig()
        .map_err(|e| Error::Eigensolver(format!("nonsymmetric eigensolve failed: {e}")))?;
    let max_im = vals.iter().fold(0.0f64, |m, c: &Complex64| m.max(c.im.abs()));
    if max_im > TOL_ZERO {
        return Err(Error::Numerical(format!("complex eigenvalue imag part {max_im} in similar matrix")));
    }
    let mut re: Vec<f64> = vals.iter().map(|c| c.re).collect();
    re.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
    let mismatch = sym_vals
        .iter()
        .zip(re.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(mismatch)
}
