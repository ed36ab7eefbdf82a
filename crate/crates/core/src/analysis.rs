//! Operating theory for the sparsity weight lambda: closed-form extrema, the
//! data-driven maximum `||U V^T||_inf`, its cheap upper bound
//! `||D||_inf / sigma_n(D)`, the asymptotic maximum `2*sqrt(3)/(sqrt(d) -
//! sqrt(n))`, an empirical estimator for the best lambda, and the
//! Failure / Goldilock / Clamping zone classification.

use crate::linalg::{self, Mat};
use crate::{Error, Result};

/// Fitted constants of the lambda-star estimator
/// `(A * ln(ln n) + B)/sqrt(d)`; exposed because they were calibrated on one
/// benchmark protocol and other scenes may want to refit.
pub const LAMBDA_STAR_SLOPE: f64 = -0.5682;
pub const LAMBDA_STAR_INTERCEPT: f64 = 1.0747;

/// The computable lambda bounds for a d x n problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaBounds {
    /// `1/sqrt(d*n)`: below this the low-rank part collapses to zero.
    pub lambda_min: f64,
    /// `sqrt(n)`: loose general maximum, never used for zoning.
    pub lambda_max_general: f64,
    /// `||U V^T||_inf` of the supplied data matrix (skinny SVD factors).
    pub lambda_max_data: Option<f64>,
    /// `||D||_inf / sigma_n(D)`, an upper bound on `lambda_max_data` that
    /// needs only one singular value.
    pub lambda_max_cheap: Option<f64>,
    /// `2*sqrt(3)/(sqrt(d) - sqrt(n))`: almost-sure asymptotic maximum for
    /// random matrices.
    pub lambda_max_asymptotic: f64,
    /// `2*sqrt(3)/sqrt(d)`: the simplification of the above for n << d.
    pub lambda_max_simplified: f64,
}

/// Operating zone of a lambda value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    /// Lambda so small the recovered ground is forced to zero.
    Failure,
    /// The useful middle range.
    Goldilock,
    /// Lambda so large the sparse cloud part is forced to zero.
    Clamping,
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Zone::Failure => "failure",
            Zone::Goldilock => "goldilock",
            Zone::Clamping => "clamping",
        })
    }
}

/// Computes every closed-form bound; the data-driven pair additionally needs
/// the observed matrix.
///
/// Requires `d > n >= 1`. The ordering `lambda_min <= lambda_max_asymptotic
/// <= lambda_max_general` is checked numerically whenever `d > 12n` and a
/// violation is reported as an invalid-argument error (possible only for
/// tiny d with n = 1, far outside image-stack territory).
pub fn lambda_bounds(d: usize, n: usize, data: Option<&Mat>) -> Result<LambdaBounds> {
    if n == 0 || d <= n {
        return Err(Error::invalid(format!(
            "need pixel count d > image count n >= 1, got d={d}, n={n}"
        )));
    }
    let df = d as f64;
    let nf = n as f64;
    let lambda_min = 1.0 / (df * nf).sqrt();
    let lambda_max_general = nf.sqrt();
    let lambda_max_asymptotic = 2.0 * 3f64.sqrt() / (df.sqrt() - nf.sqrt());
    let lambda_max_simplified = 2.0 * 3f64.sqrt() / df.sqrt();

    if d > 12 * n
        && !(lambda_min <= lambda_max_asymptotic && lambda_max_asymptotic <= lambda_max_general)
    {
        return Err(Error::invalid(format!(
            "bound ordering failed for d={d}, n={n}: min={lambda_min}, \
             asymptotic={lambda_max_asymptotic}, general={lambda_max_general}"
        )));
    }

    let (lambda_max_data, lambda_max_cheap) = match data {
        None => (None, None),
        Some(m) => {
            if m.nrows() != d || m.ncols() != n {
                return Err(Error::invalid(format!(
                    "data matrix is {}x{}, expected {d}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let svd = linalg::skinny_svd(m)?;
            let data_bound = svd.uvt().amax();
            // The cheap bound needs sigma_n > 0, i.e. full numeric column
            // rank; otherwise it is unbounded and omitted.
            let cheap = if svd.rank() == n {
                Some(m.amax() / svd.sigma[n - 1])
            } else {
                None
            };
            (Some(data_bound), cheap)
        }
    };

    Ok(LambdaBounds {
        lambda_min,
        lambda_max_general,
        lambda_max_data,
        lambda_max_cheap,
        lambda_max_asymptotic,
        lambda_max_simplified,
    })
}

/// Empirical estimator of the best sparsity weight:
/// `max{ (-0.5682*ln(ln n) + 1.0747)/sqrt(d), 1/sqrt(d*n) }`
/// (natural logarithms). The clamp keeps the estimate from dropping below
/// the failure threshold for large n.
pub fn lambda_star(d: usize, n: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("pixel count d must be positive"));
    }
    if n < 2 {
        return Err(Error::invalid(format!(
            "estimator needs at least 2 images, got n={n}"
        )));
    }
    let df = d as f64;
    let nf = n as f64;
    let fitted = (LAMBDA_STAR_SLOPE * nf.ln().ln() + LAMBDA_STAR_INTERCEPT) / df.sqrt();
    Ok(fitted.max(1.0 / (df * nf).sqrt()))
}

/// Zone of `lambda` given the bounds: Failure at or below `lambda_min`,
/// Clamping at or above the data-driven maximum (asymptotic maximum when no
/// data matrix was supplied), Goldilock between.
pub fn classify_zone(lambda: f64, bounds: &LambdaBounds) -> Zone {
    let upper = bounds.lambda_max_data.unwrap_or(bounds.lambda_max_asymptotic);
    if lambda <= bounds.lambda_min {
        Zone::Failure
    } else if lambda >= upper {
        Zone::Clamping
    } else {
        Zone::Goldilock
    }
}

// ===== Tests =====
