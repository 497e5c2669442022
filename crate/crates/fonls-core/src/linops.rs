//! Dense discretizations of the linearized operators and their spectra.
//!
//! Both operators share the Fourier symbol m(xi) + alpha with m = xi^4 + xi^2
//! and differ in the multiplicative potential: 3 phi^2 for the first
//! (acting on the P component), phi^2 for the second (acting on Q). The
//! discretization is the symmetric circulant of the symbol minus the diagonal
//! potential; its Rayleigh quotients against the Euclidean norm equal the
//! continuum quotients against L2 because the quadrature weight h cancels.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, InnerProductKind, RealField};
use crate::linalg;
use crate::wave::WaveProfile;
use crate::{ALPHA, TOL_ZERO};

/// Which linearized operator to discretize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorSelect {
    /// Potential 3 phi^2: the operator with one negative eigenvalue.
    L1,
    /// Potential phi^2: the operator with kernel phi and no negative spectrum.
    L2,
}

/// Symmetric dense discretization of m(xi) + alpha - V(x).
pub struct OperatorDisc {
    grid: Arc<GridSpec>,
    multiplier: Vec<f64>,
    potential: RealField,
    matrix: Array2<f64>,
}

/// Symmetrized circulant with the given real symbol, C[i][j] = c[(i-j) mod n]
/// where c is the inverse transform of the symbol. The symbol is even in k so
/// c is symmetric up to roundoff; averaging restores exact matrix symmetry.
fn symbol_circulant(grid: &GridSpec, symbol: &[f64]) -> Array2<f64> {
    let n = grid.n_points();
    let spec: Vec<Complex64> = symbol.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    let c = grid.ifft_real(spec);
    let mut cs = vec![0.0; n];
    for d in 0..n {
        cs[d] = 0.5 * (c[d] + c[(n - d) % n]);
    }
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = cs[(i + n - j) % n];
        }
    }
    m
}

impl OperatorDisc {
    /// Generic constructor from a potential sampled on the grid.
    pub fn with_potential(grid: &Arc<GridSpec>, potential: RealField) -> Result<Self> {
        if potential.grid() != grid {
            return Err(Error::GridMismatch);
        }
        let multiplier: Vec<f64> = grid
            .frequencies()
            .iter()
            .map(|&z| z * z + z * z * z * z + ALPHA)
            .collect();
        let mut matrix = symbol_circulant(grid, &multiplier);
        for (i, &v) in potential.values().iter().enumerate() {
            matrix[(i, i)] -= v;
        }
        Ok(OperatorDisc { grid: Arc::clone(grid), multiplier, potential, matrix })
    }

    /// The free operator m(xi) + alpha with zero potential.
    pub fn free(grid: &Arc<GridSpec>) -> Self {
        Self::with_potential(grid, RealField::zeros(grid)).expect("zero potential is on-grid")
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }
    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }
    pub fn potential(&self) -> &RealField {
        &self.potential
    }
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Applies the operator spectrally (multiplier side) plus the potential;
    /// agrees with the matrix action to roundoff and costs two FFTs.
    pub fn apply(&self, f: &RealField) -> Result<RealField> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut spec = f.hat();
        for (s, &m) in spec.iter_mut().zip(&self.multiplier) {
            *s *= m;
        }
        let mut out = self.grid.ifft_real(spec);
        for ((o, &v), &p) in out.iter_mut().zip(f.values()).zip(self.potential.values()) {
            *o -= p * v;
        }
        RealField::new(&self.grid, out)
    }
}

/// Discretizes the selected operator about the given wave profile.
pub fn build_operator(
    which: OperatorSelect,
    grid: &Arc<GridSpec>,
    profile: &WaveProfile,
) -> Result<OperatorDisc> {
    if profile.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let factor = match which {
        OperatorSelect::L1 => 3.0,
        OperatorSelect::L2 => 1.0,
    };
    let potential = RealField::new(
        grid,
        profile.samples().values().iter().map(|&v| factor * v * v).collect(),
    )?;
    OperatorDisc::with_potential(grid, potential)
}

/// Full eigendecomposition of an operator, reusable across consumers.
pub struct EigenDecomp {
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
}

impl EigenDecomp {
    pub fn compute(op: &OperatorDisc) -> Result<Self> {
        let (eigenvalues, eigenvectors) = linalg::eigh(&op.matrix)?;
        Ok(EigenDecomp { eigenvalues, eigenvectors })
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// Eigenvector for the k-th smallest eigenvalue, Euclidean-normalized.
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k).to_vec()
    }

    pub fn n_negative(&self) -> usize {
        self.eigenvalues.iter().filter(|&&v| v < -TOL_ZERO).count()
    }

    pub fn n_zero(&self) -> usize {
        self.eigenvalues.iter().filter(|&&v| v.abs() <= TOL_ZERO).count()
    }
}

/// Ascending eigenvalues without vectors, for refinement sweeps where counts
/// suffice; roughly halves the solve cost of the full decomposition.
pub fn eigenvalues_only(op: &OperatorDisc) -> Result<Array1<f64>> {
    linalg::eigvalsh(&op.matrix)
}

/// Sorted spectrum with kernel counts and residuals of the lowest eigenpairs.
pub struct SpectrumReport {
    /// All N eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// The k lowest eigenvectors, L2-normalized.
    pub eigenvectors: Vec<RealField>,
    /// L2 residuals ||A v - lambda v|| for the k lowest pairs, via the
    /// spectral application (independent of the dense matrix route).
    pub residuals: Vec<f64>,
    /// Count of eigenvalues below -tol_zero.
    pub n_negative: usize,
    /// Count of eigenvalues with |lambda| <= tol_zero.
    pub n_zero: usize,
    /// Lower edge alpha of the continuum part the grid can only densify.
    pub essential_edge: f64,
}

pub fn spectrum(op: &OperatorDisc, k: usize) -> Result<SpectrumReport> {
    let decomp = EigenDecomp::compute(op)?;
    spectrum_from(op, &decomp, k)
}

pub fn spectrum_from(op: &OperatorDisc, decomp: &EigenDecomp, k: usize) -> Result<SpectrumReport> {
    let n = op.grid.n_points();
    if k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenpairs from an {n}-point grid")));
    }
    let h = op.grid.spacing();
    let mut eigenvectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for j in 0..k {
        let lam = decomp.eigenvalues[j];
        let col = decomp.eigenvector(j);
        let scale = 1.0 / h.sqrt(); // Euclidean unit -> L2 unit
        let v = RealField::new(&op.grid, col.iter().map(|&t| t * scale).collect())?;
        let av = op.apply(&v)?;
        let res: f64 = av
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| {
                let r = a - lam * b;
                r * r
            })
            .sum::<f64>()
            * h;
        eigenvectors.push(v);
        residuals.push(res.sqrt());
    }
    Ok(SpectrumReport {
        eigenvalues: decomp.eigenvalues.to_vec(),
        eigenvectors,
        residuals,
        n_negative: decomp.n_negative(),
        n_zero: decomp.n_zero(),
        essential_edge: ALPHA,
    })
}

/// Minimum Rayleigh quotient (Av, v)_L2 / (v, v)_norm over the orthogonal
/// complement of the constraint span, with the constraints paired in the same
/// norm. Returns the minimum and its normalized minimizer.
pub fn constrained_min(
    op: &OperatorDisc,
    constraints: &[&RealField],
    norm: InnerProductKind,
) -> Result<(f64, RealField)> {
    for c in constraints {
        if c.grid() != &op.grid {
            return Err(Error::GridMismatch);
        }
    }
    match norm {
        InnerProductKind::L2 => {
            let vecs: Vec<Vec<f64>> = constraints.iter().map(|c| c.values().to_vec()).collect();
            let (lam, w) = euclidean_constrained_min(&op.matrix, &vecs)?;
            let h = op.grid.spacing();
            let field = RealField::new(&op.grid, w.iter().map(|&t| t / h.sqrt()).collect())?;
            Ok((lam, field))
        }
        InnerProductKind::H2 => {
            let b = h2_transform(op);
            // (v, g)_H2 = (w, H^{1/2} g) h in transformed coordinates w = H^{1/2} v
            let vecs: Vec<Vec<f64>> = constraints
                .iter()
                .map(|c| apply_weight_multiplier(&op.grid, c.values(), 0.5))
                .collect();
            let (lam, w) = euclidean_constrained_min(&b, &vecs)?;
            let back = apply_weight_multiplier(&op.grid, &w, -0.5);
            let field = RealField::new(&op.grid, back)?;
            let scale = 1.0 / field.norm_sq(InnerProductKind::H2).sqrt();
            Ok((lam, field.scale(scale)))
        }
    }
}

pub(crate) fn euclidean_constrained_min(
    a: &Array2<f64>,
    constraints: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if constraints.is_empty() {
        let (vals, vecs) = linalg::eigh(a)?;
        return Ok((vals[0], vecs.column(0).to_vec()));
    }
    let u = linalg::orthonormalize(constraints)?;
    let b = linalg::project_out(a, &u);
    let (vals, vecs) = linalg::eigh(&b)?;
    Ok((vals[0], vecs.column(0).to_vec()))
}

/// Applies the Fourier multiplier (1 + xi^2 + xi^4)^power to a sample vector.
pub(crate) fn apply_weight_multiplier(grid: &GridSpec, v: &[f64], power: f64) -> Vec<f64> {
    let mut spec = grid.fft_real(v);
    for (s, &w) in spec.iter_mut().zip(grid.h2_weight()) {
        *s *= w.powf(power);
    }
    grid.ifft_real(spec)
}

/// Conjugates the operator matrix by the H^{-1/2} weight so that Euclidean
/// Rayleigh quotients of the result equal (Av, v)_L2 / (v, v)_H2 quotients of
/// the original.
pub(crate) fn h2_transform(op: &OperatorDisc) -> Array2<f64> {
    let grid = &op.grid;
    let n = grid.n_points();
    let mut m = op.matrix.clone();
    for pass in 0..2 {
        for j in 0..n {
            let col: Vec<f64> = m.column(j).to_vec();
            let out = apply_weight_multiplier(grid, &col, -0.5);
            for (i, &t) in out.iter().enumerate() {
                m[(i, j)] = t;
            }
        }
        if pass == 0 {
            m = m.t().to_owned();
        }
    }
    let mt = m.t().to_owned();
    m += &mt;
    m *= 0.5;
    m
}

/// Positivity certificate A - eps H + C Id >= 0 relating the operator to the
/// H2 form.
pub struct GardingCertificate {
    pub eps: f64,
    pub c: f64,
    /// Smallest eigenvalue of A - eps H + C Id at the returned C.
    pub min_eig: f64,
}

impl GardingCertificate {
    pub fn valid(&self) -> bool {
        self.min_eig >= -1e-10
    }
}

/// Finds the smallest C (bisection to 1e-6) making A - eps H + C Id positive
/// semidefinite, then certifies it with a full eigensolve. Requires
/// 0 < eps < 1: at eps >= 1 the free symbol m + alpha - eps(1 + xi^2 + xi^4)
/// is unbounded below, so no C exists.
pub fn garding_certify(op: &OperatorDisc, eps: f64) -> Result<GardingCertificate> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("garding eps must lie in (0, 1), got {eps}")));
    }
    let grid = &op.grid;
    let n = grid.n_points();
    let hmat = symbol_circulant(grid, grid.h2_weight());
    let mut shifted = op.matrix.clone();
    shifted -= &(hmat * eps);
    // Pointwise symbol bound: m + alpha - eps(1 + xi^2 + xi^4) >= alpha - eps,
    // so C = eps - alpha + max V is always sufficient.
    let vmax = op.potential.values().iter().fold(0.0f64, |m, &v| m.max(v));
    let mut hi = (eps - ALPHA + vmax).max(0.0) + 1e-9;
    let psd = |c: f64| {
        let mut m = shifted.clone();
        for i in 0..n {
            m[(i, i)] += c;
        }
        linalg::is_positive_semidefinite(&m, 1e-12)
    };
    if !psd(hi) {
        hi *= 1.5; // analytic bound plus roundoff headroom
        if !psd(hi) {
            return Err(Error::Numerical(format!(
                "no positivity shift found below {hi} for eps {eps}"
            )));
        }
    }
    let mut lo = 0.0;
    if psd(lo) {
        hi = lo;
    } else {
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if psd(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let c = hi;
    let mut m = shifted;
    for i in 0..n {
        m[(i, i)] += c;
    }
    let min_eig = linalg::eigvalsh(&m)?[0];
    Ok(GardingCertificate { eps, c, min_eig })
}

/// Minimum Rayleigh quotient of the block-diagonal pair operator
/// diag(A_P, A_Q) under per-component L2 constraints. The blocks decouple
/// exactly, so the minimum is the smaller of the per-block constrained
/// minima; empty constraint lists mean an unconstrained block.
pub fn matrix_operator_min(
    op_p: &OperatorDisc,
    op_q: &OperatorDisc,
    p_constraints: &[&RealField],
    q_constraints: &[&RealField],
) -> Result<f64> {
    let p = if p_constraints.is_empty() {
        linalg::eigvalsh(&op_p.matrix)?[0]
    } else {
        constrained_min(op_p, p_constraints, InnerProductKind::L2)?.0
    };
    let q = if q_constraints.is_empty() {
        linalg::eigvalsh(&op_q.matrix)?[0]
    } else {
        constrained_min(op_q, q_constraints, InnerProductKind::L2)?.0
    };
    Ok(p.min(q))
}

/// Largest deviation of a sample vector from definite parity about x = 0,
/// relative to its max-norm. Grid node j reflects to node (n - j) mod n.
pub fn parity_defect(f: &RealField) -> f64 {
    let v = f.values();
    let n = v.len();
    let scale = f.linf().max(1e-300);
    let mut even = 0.0f64;
    let mut odd = 0.0f64;
    for j in 1..n {
        let r = v[(n - j) % n];
        even = even.max((v[j] - r).abs());
        odd = odd.max((v[j] + r).abs());
    }
    even.min(odd) / scale
}
