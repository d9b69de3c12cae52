//! Maximum-likelihood baseline: the negative log-likelihood surface (up to
//! constants) and a multi-start derivative-free minimizer over it.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{covariance_matrix, CovarianceParams, KernelFamily, LocationSet};
use crate::sampler::{sample_covariance, SpatialDataset};
use crate::simplex::nelder_mead;
use crate::stream::keyed_rng;

/// `<S, C(theta)^-1> + log det C(theta)`, constants dropped, evaluated
/// through one Cholesky factorization.
pub fn mle_objective(locs: &LocationSet, params: &CovarianceParams, s: &DMatrix<f64>) -> Result<f64> {
    let n = locs.n();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch("S must be n x n".into()));
    }
    let c = covariance_matrix(locs, params)?;
    let chol = c
        .cholesky()
        .ok_or_else(|| Error::Factorization("C(theta) is not positive definite".into()))?;
    let l = chol.l();
    let mut logdet = 0.0;
    for i in 0..n {
        logdet += l[(i, i)].ln();
    }
    logdet *= 2.0;
    // <S, C^-1> = tr(C^-1 S) via a solve against S.
    let solved = chol.solve(s);
    let trace: f64 = (0..n).map(|i| solved[(i, i)]).sum();
    Ok(trace + logdet)
}

/// Result of the likelihood fit.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub params: CovarianceParams,
    pub objective: f64,
    /// Number of starts that produced a finite objective.
    pub usable_starts: usize,
}

/// Multi-start local minimization of the likelihood objective.
///
/// Starts are drawn log-uniformly over `[1e-2, max(10, diameter)]` per
/// parameter from a seeded stream; the starts for `n_starts = k` are a prefix
/// of those for any larger count, so enlarging the search can only improve
/// the result. The search runs in log-parameter space.
pub fn mle_fit(ds: &SpatialDataset, family: KernelFamily, n_starts: usize, seed: u64) -> Result<MleFit> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
    }
    let locs = &ds.locs;
    let q = family.range_dim(locs.dim());
    let dim = q + 2; // theta_rho, theta_v, theta_0
    let s = sample_covariance(ds);

    let lo = 1e-2f64;
    let hi = locs.diameter().max(10.0);
    let (log_lo, log_hi) = (lo.ln(), hi.ln());

    let objective = |u: &[f64]| -> f64 {
        let theta: Vec<f64> = u.iter().map(|&v| v.exp()).collect();
        let params = CovarianceParams {
            family,
            theta_rho: theta[..q].to_vec(),
            theta_v: theta[q],
            theta_0: theta[q + 1],
        };
        match mle_objective(locs, &params, &s) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };

    let mut rng = keyed_rng(seed, 0, "mle-starts");
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut usable = 0usize;
    for _ in 0..n_starts {
        let start: Vec<f64> = (0..dim).map(|_| rng.random_range(log_lo..log_hi)).collect();
        if !objective(&start).is_finite() {
            continue;
        }
        usable += 1;
        let (u, v) = nelder_mead(&objective, &start, &vec![0.4; dim], 500 * dim, 1e-12);
        let better = match &best {
            None => true,
            Some((_, bv)) => v < *bv,
        };
        if better {
            best = Some((u, v));
        }
    }
    let (u, v) = best.ok_or_else(|| {
        Error::Optimization("every likelihood start failed the positive-definiteness check".into())
    })?;
    let theta: Vec<f64> = u.iter().map(|&x| x.exp()).collect();
    Ok(MleFit {
        params: CovarianceParams {
            family,
            theta_rho: theta[..q].to_vec(),
            theta_v: theta[q],
            theta_0: theta[q + 1],
        },
        objective: v,
        usable_starts: usable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_objective_value() {
        // n = 1, S = [2], theta_v + theta_0 = 2 -> 2/2 + ln 2
        let locs = LocationSet::from_rows(&[vec![0.0]]).unwrap();
        let params = CovarianceParams::new(KernelFamily::SquaredExponential, vec![1.0], 1.5, 0.5).unwrap();
        let s = DMatrix::from_element(1, 1, 2.0);
        let v = mle_objective(&locs, &params, &s).unwrap();
        assert_abs_diff_eq!(v, 1.0 + 2.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.693147, epsilon = 1e-6);
    }

    #[test]
    fn scalar_objective_minimized_at_sample_variance() {
        // d/dc (2/c + ln c) = 0 -> c = 2
        let locs = LocationSet::from_rows(&[vec![0.0]]).unwrap();
        let s = DMatrix::from_element(1, 1, 2.0);
        let f = |c: f64| {
            let p = CovarianceParams::new(KernelFamily::SquaredExponential, vec![1.0], c, 0.0).unwrap();
            mle_objective(&locs, &p, &s).unwrap()
        };
        let at_min = f(2.0);
        for c in [0.5, 1.0, 1.5, 2.5, 3.0, 4.0] {
            assert!(f(c) > at_min);
        }
    }

    #[test]
    fn matches_dense_eigen_evaluation() {
        let locs = LocationSet::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.3],
            vec![2.2, -0.7],
            vec![0.4, 1.9],
        ])
        .unwrap();
        let params = CovarianceParams::new(KernelFamily::Matern32, vec![1.7], 2.0, 0.4).unwrap();
        let mut s = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                s[(i, j)] = 0.1 * ((i * 4 + j) as f64).sin();
            }
        }
        let s = (&s + s.transpose()) * 0.5 + DMatrix::identity(4, 4) * 2.0;

        let c = covariance_matrix(&locs, &params).unwrap();
        let inv = c.clone().try_inverse().unwrap();
        let trace: f64 = (inv * &s).diagonal().sum();
        let logdet: f64 = c.symmetric_eigenvalues().iter().map(|&l| l.ln()).sum();

        let v = mle_objective(&locs, &params, &s).unwrap();
        assert_abs_diff_eq!(v, trace + logdet, epsilon = 1e-10);
    }

    #[test]
    fn more_starts_never_hurt() {
        use crate::sampler::sample_grf;
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 4) as f64, (i / 4) as f64]).collect();
        let locs = LocationSet::from_rows(&rows).unwrap();
        let truth = CovarianceParams::new(KernelFamily::SquaredExponential, vec![1.5], 1.0, 0.2).unwrap();
        let ds = sample_grf(&locs, &truth, 20, 11).unwrap();
        let one = mle_fit(&ds, KernelFamily::SquaredExponential, 1, 5).unwrap();
        let ten = mle_fit(&ds, KernelFamily::SquaredExponential, 10, 5).unwrap();
        assert!(ten.objective <= one.objective + 1e-12);
    }
}
