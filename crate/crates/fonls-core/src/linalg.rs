//! Internal dense linear-algebra helpers shared by linops and coercivity.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, EigValsh, Eigh, UPLO};

use crate::error::{Error, Result};

pub(crate) fn eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    Ok(a.eigh(UPLO::Lower)?)
}

pub(crate) fn eigvalsh(a: &Array2<f64>) -> Result<Array1<f64>> {
    Ok(a.eigvalsh(UPLO::Lower)?)
}

/// Gram-Schmidt with re-orthogonalization; columns of the result span the
/// constraint space. Vectors whose residual drops below 1e-10 of their norm
/// are rejected as dependent.
pub(crate) fn orthonormalize(vectors: &[Vec<f64>]) -> Result<Array2<f64>> {
    if vectors.is_empty() {
        return Err(Error::DegenerateConstraints);
    }
    let n = vectors[0].len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        if v.len() != n {
            return Err(Error::DegenerateConstraints);
        }
        let original: f64 = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &basis {
                let d: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= d * ui;
                }
            }
        }
        let nrm: f64 = w.iter().map(|t| t * t).sum::<f64>().sqrt();
        if nrm <= 1e-10 * original.max(1e-300) {
            return Err(Error::DegenerateConstraints);
        }
        for wi in w.iter_mut() {
            *wi /= nrm;
        }
        basis.push(w);
    }
    let mut out = Array2::zeros((n, basis.len()));
    for (j, u) in basis.iter().enumerate() {
        for (i, &t) in u.iter().enumerate() {
            out[(i, j)] = t;
        }
    }
    Ok(out)
}

/// Restricts the quadratic form of `a` to the orthogonal complement of the
/// columns of `u` by projecting and pushing the constraint directions to a
/// Gershgorin-safe shift, so the low end of the spectrum is the constrained
/// minimum. `u` must have orthonormal columns.
pub(crate) fn project_out(a: &Array2<f64>, u: &Array2<f64>) -> Array2<f64> {
    let au = a.dot(u); // N x m
    let utau = u.t().dot(&au); // m x m
    let mut b = a.clone();
    // b = a - au u^T - u au^T + u utau u^T
    b -= &au.dot(&u.t());
    b -= &u.dot(&au.t());
    b += &u.dot(&utau).dot(&u.t());
    let shift = gershgorin_bound(&b) + 1.0;
    b += &(u.dot(&u.t()) * shift);
    // symmetrize against accumulation order asymmetry
    let bt = b.t().to_owned();
    b += &bt;
    b *= 0.5;
    b
}

/// Upper bound on the spectral radius: max absolute row sum.
pub(crate) fn gershgorin_bound(a: &Array2<f64>) -> f64 {
    let mut best = 0.0f64;
    for row in a.rows() {
        let s: f64 = row.iter().map(|t| t.abs()).sum();
        best = best.max(s);
    }
    best
}

pub(crate) fn is_positive_semidefinite(a: &Array2<f64>, jitter: f64) -> bool {
    let n = a.nrows();
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += jitter;
    }
    b.cholesky(UPLO::Lower).is_ok()
}

/// Smallest eigenvalue of D + tau y y^T for ascending d and tau >= 0, by the
/// secular equation 1 + tau sum y_k^2/(d_k - lambda) = 0. Components with
/// negligible y are deflated; the minimum then stays at the smallest such d.
pub(crate) fn dpr1_min(d: &[f64], y: &[f64], tau: f64) -> f64 {
    assert_eq!(d.len(), y.len());
    assert!(!d.is_empty());
    if tau == 0.0 {
        return d[0];
    }
    let ynorm2: f64 = y.iter().map(|t| t * t).sum();
    let cutoff = 1e-28 * ynorm2.max(1e-300);
    let active: Vec<usize> = (0..d.len()).filter(|&k| y[k] * y[k] > cutoff).collect();
    if active.is_empty() {
        return d[0];
    }
    let d_active0 = d[active[0]];
    // Eigenvalues of deflated components are untouched; if the global minimum
    // direction is deflated it remains an eigenvalue.
    let deflated_min = (0..d.len())
        .filter(|k| !active.contains(k))
        .map(|k| d[k])
        .fold(f64::INFINITY, f64::min);
    // Root of the secular function in (d_active0, next pole or +inf).
    let upper_pole = active.iter().skip(1).map(|&k| d[k]).fold(f64::INFINITY, f64::min);
    let secular = |lam: f64| -> f64 {
        1.0 + tau * active.iter().map(|&k| y[k] * y[k] / (d[k] - lam)).sum::<f64>()
    };
    let root = if upper_pole.is_finite() {
        let gap = (upper_pole - d_active0).max(0.0);
        let mut lo = d_active0 + 1e-14 * gap.max(1.0);
        let mut hi = upper_pole - 1e-14 * gap.max(1.0);
        if hi <= lo {
            d_active0
        } else if secular(hi) <= 0.0 {
            hi
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if secular(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    } else {
        // single active component: exact rank-one shift
        d_active0 + tau * y[active[0]] * y[active[0]]
    };
    root.min(deflated_min)
}
