//! Cross-sectional least-squares for conditional expectations.
//!
//! At each backward step the conditional expectation `E[Y | X_k]` is
//! estimated by ridge-regularized polynomial regression over the particle
//! ensemble. Columns are powers of the centered state `(x - m_k)`; the
//! empirical mean enters the basis through the centering and the intercept,
//! since within a single time slice it is constant across particles. The
//! intercept is never penalized, so a constant target is reproduced exactly.
//! Columns are scaled to unit quadratic mean before the normal equations are
//! formed; the reported conditioning is the eigenvalue ratio of the scaled
//! normal matrix.

use crate::error::{Error, Result};
use crate::stats::pairwise_sum_by;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionBasis {
    /// Polynomial degree in the centered state (>= 1).
    pub degree: usize,
    /// Ridge weight is `ridge_scale * N` on the scaled non-intercept columns.
    pub ridge_scale: f64,
    /// Solves with conditioning beyond this fail.
    pub cond_threshold: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self {
            degree: 2,
            ridge_scale: 1e-8,
            cond_threshold: 1e12,
        }
    }
}

impl RegressionBasis {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::invalid("regression degree must be >= 1"));
        }
        if self.ridge_scale < 0.0 || !self.ridge_scale.is_finite() {
            return Err(Error::invalid("ridge scale must be nonnegative"));
        }
        if !(self.cond_threshold > 1.0) {
            return Err(Error::invalid("conditioning threshold must exceed 1"));
        }
        Ok(())
    }

    pub fn columns(&self) -> usize {
        self.degree + 1
    }
}

/// Result of one cross-sectional fit.
pub struct StepFit {
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cond: f64,
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: Vec<f64>, p: usize) -> Vec<f64> {
    for _sweep in 0..64 {
        let mut off = 0.0;
        for r in 0..p {
            for c in (r + 1)..p {
                off += a[r * p + c] * a[r * p + c];
            }
        }
        if off < 1e-30 {
            break;
        }
        for r in 0..p {
            for c in (r + 1)..p {
                let apq = a[r * p + c];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[r * p + r];
                let aqq = a[c * p + c];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                for k in 0..p {
                    let akp = a[k * p + r];
                    let akq = a[k * p + c];
                    a[k * p + r] = cos * akp - sin * akq;
                    a[k * p + c] = sin * akp + cos * akq;
                }
                for k in 0..p {
                    let apk = a[r * p + k];
                    let aqk = a[c * p + k];
                    a[r * p + k] = cos * apk - sin * aqk;
                    a[c * p + k] = sin * apk + cos * aqk;
                }
            }
        }
    }
    (0..p).map(|i| a[i * p + i]).collect()
}

fn cholesky_solve(a: &[f64], rhs: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * beta[k];
        }
        beta[i] = s / l[i * p + i];
    }
    Some(beta)
}

/// Fit `targets ~ polynomial(x - mean)` and return the fitted values
/// (the conditional-expectation estimate evaluated at each particle).
pub fn fit_conditional(
    basis: &RegressionBasis,
    states: &[f64],
    mean: f64,
    targets: &[f64],
    step: usize,
) -> Result<StepFit> {
    basis.validate()?;
    let n = states.len();
    assert_eq!(n, targets.len());
    let p = basis.columns();
    let d = basis.degree;

    // raw moments of u = x - mean up to 2d, and cross moments with y
    let mut moments = vec![0.0; 2 * d + 1];
    for (q, slot) in moments.iter_mut().enumerate() {
        *slot = if q == 0 {
            n as f64
        } else {
            pairwise_sum_by(0, n, &|i| (states[i] - mean).powi(q as i32))
        };
    }
    let mut rhs_raw = vec![0.0; p];
    for (j, slot) in rhs_raw.iter_mut().enumerate() {
        *slot = if j == 0 {
            pairwise_sum_by(0, n, &|i| targets[i])
        } else {
            pairwise_sum_by(0, n, &|i| (states[i] - mean).powi(j as i32) * targets[i])
        };
    }

    // column scales: quadratic means; zero-variance columns keep scale 1
    let mut scale = vec![1.0; p];
    for (j, s) in scale.iter_mut().enumerate().skip(1) {
        let ms = moments[2 * j] / n as f64;
        if ms > 0.0 && ms.is_finite() {
            *s = ms.sqrt();
        }
    }

    let lambda = basis.ridge_scale * n as f64;
    let mut a = vec![0.0; p * p];
    for r in 0..p {
        for c in 0..p {
            a[r * p + c] = moments[r + c] / (scale[r] * scale[c]);
        }
    }
    for r in 1..p {
        a[r * p + r] += lambda;
    }
    let mut rhs = vec![0.0; p];
    for r in 0..p {
        rhs[r] = rhs_raw[r] / scale[r];
    }

    let eig = jacobi_eigenvalues(a.clone(), p);
    let emax = eig.iter().cloned().fold(f64::MIN, f64::max);
    let emin = eig.iter().cloned().fold(f64::MAX, f64::min);
    let cond = if emin > 0.0 { emax / emin } else { f64::INFINITY };
    if !cond.is_finite() || cond > basis.cond_threshold {
        return Err(Error::RegressionSingular {
            step,
            cond,
            threshold: basis.cond_threshold,
        });
    }

    let beta = cholesky_solve(&a, &rhs, p).ok_or(Error::RegressionSingular {
        step,
        cond,
        threshold: basis.cond_threshold,
    })?;
    let gamma: Vec<f64> = beta.iter().zip(&scale).map(|(b, s)| b / s).collect();

    let mut fitted = vec![0.0; n];
    let mut residuals = vec![0.0; n];
    for i in 0..n {
        let u = states[i] - mean;
        // Horner in u
        let mut v = gamma[d];
        for j in (0..d).rev() {
            v = v * u + gamma[j];
        }
        fitted[i] = v;
        residuals[i] = targets[i] - v;
    }
    Ok(StepFit {
        fitted,
        residuals,
        cond,
    })
}
