//! Dense linear-algebra primitives shared by every solver: thin SVD with
//! numeric rank truncation, singular value thresholding (the proximal
//! operator of the nuclear norm), elementwise shrinkage (the proximal
//! operator of the l1 norm), norms, and box projection.
//!
//! All functions are pure and deterministic; matrices are `f64` dense with
//! column-major storage.

use crate::{Error, Result};

/// Dense real matrix used throughout the crate (column-major storage).
pub type Mat = nalgebra::DMatrix<f64>;

/// Numeric-rank threshold factor: a singular value is kept when
/// `sigma_i >= RANK_TOL_FACTOR * max(rows, cols) * sigma_1`.
pub const RANK_TOL_FACTOR: f64 = 1e-12;

/// Thin SVD `A = U * diag(sigma) * V^T` truncated to numeric rank.
#[derive(Debug, Clone)]
pub struct SkinnySvd {
    /// `d x k`, orthonormal columns.
    pub u: Mat,
    /// `k` singular values, non-increasing, all `> 0` unless `A = 0`.
    pub sigma: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub v: Mat,
}

impl SkinnySvd {
    /// Numeric rank `k`.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U * diag(sigma) * V^T`.
    pub fn reconstruct(&self) -> Mat {
        let k = self.rank();
        let mut us = self.u.clone();
        for j in 0..k {
            us.column_mut(j).scale_mut(self.sigma[j]);
        }
        &us * self.v.transpose()
    }

    /// `U * V^T`, the subgradient factor used by the data-driven lambda bound.
    pub fn uvt(&self) -> Mat {
        &self.u * self.v.transpose()
    }
}

/// The norms used by the models and their analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    /// Sum of singular values.
    pub nuclear: f64,
    /// Square root of the sum of squared entries.
    pub frobenius: f64,
    /// Sum of absolute entries.
    pub l1: f64,
    /// Largest singular value.
    pub spectral: f64,
    /// Largest absolute entry.
    pub inf: f64,
}

fn ensure_finite(a: &Mat, what: &str) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

fn ensure_nonempty(a: &Mat, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid(format!(
            "{what} must be non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Full thin SVD with singular values sorted non-increasing.
///
/// Returns `(U, sigma, V)` with `U: d x m`, `V: n x m`, `m = min(d, n)`.
/// Sorting is enforced here so nothing downstream depends on backend
/// ordering conventions.
fn thin_svd(a: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::invalid("SVD did not converge"))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let m = svd.singular_values.len();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .expect("singular values are finite")
    });

    let mut u_sorted = Mat::zeros(u.nrows(), m);
    let mut v_sorted = Mat::zeros(v_t.ncols(), m);
    let mut sigma = Vec::with_capacity(m);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
        sigma.push(svd.singular_values[src]);
    }
    Ok((u_sorted, sigma, v_sorted))
}

/// Entrywise shrinkage: `sign(a) * max(|a| - tau, 0)`.
///
/// This is the proximal operator of `tau * |.|`, applied entrywise.
pub fn soft_threshold(a: &Mat, tau: f64) -> Result<Mat> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid(format!(
            "shrinkage threshold must be finite and >= 0, got {tau}"
        )));
    }
    Ok(a.map(|x| x.signum() * (x.abs() - tau).max(0.0)))
}

/// Thin SVD truncated at numeric rank (see [`RANK_TOL_FACTOR`]).
pub fn skinny_svd(a: &Mat) -> Result<SkinnySvd> {
    let (u, sigma, v) = thin_svd(a)?;
    let sigma1 = sigma.first().copied().unwrap_or(0.0);
    let k = if sigma1 == 0.0 {
        0
    } else {
        let tol = RANK_TOL_FACTOR * a.nrows().max(a.ncols()) as f64 * sigma1;
        sigma.iter().take_while(|&&s| s >= tol).count()
    };
    Ok(SkinnySvd {
        u: u.columns(0, k).into_owned(),
        sigma: sigma[..k].to_vec(),
        v: v.columns(0, k).into_owned(),
    })
}

/// Singular value thresholding: `U * diag(max(sigma_i - tau, 0)) * V^T`.
///
/// Minimizes `tau*||X||_* + 1/2*||X - A||_F^2`. When every singular value is
/// `<= tau` the result is the exact zero matrix.
pub fn svt(a: &Mat, tau: f64) -> Result<Mat> {
    Ok(svt_with_nuclear(a, tau)?.0)
}

/// [`svt`] that also returns the nuclear norm of the thresholded output,
/// `sum(max(sigma_i - tau, 0))`, sparing callers a second SVD.
pub(crate) fn svt_with_nuclear(a: &Mat, tau: f64) -> Result<(Mat, f64)> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid(format!(
            "singular value threshold must be finite and >= 0, got {tau}"
        )));
    }
    if tau == 0.0 {
        ensure_nonempty(a, "matrix")?;
        ensure_finite(a, "matrix")?;
        let nuclear: f64 = a
            .clone()
            .try_svd(false, false, f64::EPSILON, 0)
            .ok_or_else(|| Error::invalid("SVD did not converge"))?
            .singular_values
            .iter()
            .sum();
        return Ok((a.clone(), nuclear));
    }
    let (u, sigma, v) = thin_svd(a)?;
    let k = sigma.iter().take_while(|&&s| s > tau).count();
    if k == 0 {
        return Ok((Mat::zeros(a.nrows(), a.ncols()), 0.0));
    }
    let mut us = u.columns(0, k).into_owned();
    let mut nuclear = 0.0;
    for j in 0..k {
        let s = sigma[j] - tau;
        nuclear += s;
        us.column_mut(j).scale_mut(s);
    }
    Ok((&us * v.columns(0, k).transpose(), nuclear))
}

/// Nuclear, Frobenius, l1, spectral, and max-abs norms of `A`.
pub fn matrix_norms(a: &Mat) -> Result<MatrixNorms> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    let sv = a
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::invalid("SVD did not converge"))?
        .singular_values;
    Ok(MatrixNorms {
        nuclear: sv.iter().sum(),
        frobenius: a.norm(),
        l1: a.iter().map(|x| x.abs()).sum(),
        spectral: sv.iter().cloned().fold(0.0, f64::max),
        inf: a.iter().map(|x| x.abs()).fold(0.0, f64::max),
    })
}

/// Largest singular value of `A`.
pub fn spectral_norm(a: &Mat) -> Result<f64> {
    Ok(matrix_norms(a)?.spectral)
}

/// Projection of every entry onto `[0, 1]`.
pub fn clamp01(a: &Mat) -> Mat {
    a.map(|x| x.clamp(0.0, 1.0))
}

// ===== Tests =====
