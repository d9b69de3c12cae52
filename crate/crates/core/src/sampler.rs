//! Zero-mean GRF simulation, the sample covariance `S`, the distance-weight
//! matrix `G`, and the near-sparsity diagnostic.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{covariance_matrix, CovarianceParams, LocationSet};
use crate::stream::realization_rng;

/// Locations plus an `n x N` matrix of realizations (column `r` is the r-th
/// realization over all locations).
#[derive(Debug, Clone)]
pub struct SpatialDataset {
    pub locs: LocationSet,
    pub y: DMatrix<f64>,
}

impl SpatialDataset {
    pub fn new(locs: LocationSet, y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() != locs.n() {
            return Err(Error::DimensionMismatch(format!(
                "realization matrix has {} rows for {} locations",
                y.nrows(),
                locs.n()
            )));
        }
        if y.ncols() == 0 {
            return Err(Error::InvalidParameter("need at least one realization".into()));
        }
        Ok(SpatialDataset { locs, y })
    }

    pub fn n(&self) -> usize {
        self.locs.n()
    }

    pub fn n_realizations(&self) -> usize {
        self.y.ncols()
    }

    /// Per-location mean over realizations, `sum_r y^(r) / N`.
    pub fn mean_realization(&self) -> Vec<f64> {
        let n = self.n();
        let n_real = self.n_realizations() as f64;
        (0..n).map(|i| self.y.row(i).sum() / n_real).collect()
    }

    /// Restriction of the dataset to the locations selected by `idx`.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let locs = self.locs.subset(idx)?;
        let y = DMatrix::from_fn(idx.len(), self.y.ncols(), |i, r| self.y[(idx[i], r)]);
        SpatialDataset::new(locs, y)
    }
}

/// Distance-weight matrix: off-diagonal entries are pairwise distances, each
/// diagonal entry is the distance to the nearest other location.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    g: DMatrix<f64>,
    g_max: f64,
    g_min: f64,
}

impl WeightMatrix {
    /// Wraps an explicit symmetric strictly positive matrix. Intended for
    /// tests and for callers with externally-built weights.
    pub fn from_matrix(g: DMatrix<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(Error::DimensionMismatch("weight matrix must be square".into()));
        }
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if g[(i, j)] != g[(j, i)] {
                    return Err(Error::InvalidParameter("weight matrix must be symmetric".into()));
                }
                if !(g[(i, j)] > 0.0) {
                    return Err(Error::InvalidParameter("weight matrix entries must be strictly positive".into()));
                }
                g_min = g_min.min(g[(i, j)]);
                g_max = g_max.max(g[(i, j)]);
            }
        }
        Ok(WeightMatrix { g, g_max, g_min })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn g_min(&self) -> f64 {
        self.g_min
    }

    /// Frobenius norm of the weight matrix.
    pub fn frobenius(&self) -> f64 {
        self.g.norm()
    }
}

/// Builds the distance-weight matrix for a location set.
pub fn distance_weights(locs: &LocationSet) -> Result<WeightMatrix> {
    let n = locs.n();
    if n < 2 {
        return Err(Error::TooFewLocations { needed: 2, got: n });
    }
    let mut g = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = locs.distance(i, j);
            if d == 0.0 {
                return Err(Error::DuplicateLocations { i, j });
            }
            g[(i, j)] = d;
            g[(j, i)] = d;
        }
    }
    for i in 0..n {
        let mut nearest = f64::INFINITY;
        for j in 0..n {
            if j != i {
                nearest = nearest.min(g[(i, j)]);
            }
        }
        g[(i, i)] = nearest;
    }
    WeightMatrix::from_matrix(g)
}

/// Draws `n_realizations` independent samples from `N(0, C(theta))` at `locs`.
///
/// Column `r` is generated from its own stream (`seed ^ r`), so realizations
/// can be produced independently and the full matrix is a pure function of
/// `(locs, params, n_realizations, seed)`.
pub fn sample_grf(
    locs: &LocationSet,
    params: &CovarianceParams,
    n_realizations: usize,
    seed: u64,
) -> Result<SpatialDataset> {
    if n_realizations == 0 {
        return Err(Error::InvalidParameter("need at least one realization".into()));
    }
    let c = covariance_matrix(locs, params)?;
    let n = locs.n();
    let chol = match c.clone().cholesky() {
        Some(ch) => ch,
        None => {
            // theta_0 = 0 with dense points is numerically singular; one jitter retry.
            let jitter = 1e-10 * (params.theta_v + params.theta_0);
            let mut cj = c;
            for i in 0..n {
                cj[(i, i)] += jitter;
            }
            cj.cholesky().ok_or_else(|| {
                Error::Factorization("covariance not positive definite after jitter retry".into())
            })?
        }
    };
    let l = chol.l();
    let mut y = DMatrix::<f64>::zeros(n, n_realizations);
    for r in 0..n_realizations {
        let mut rng = realization_rng(seed, r as u64);
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += l[(i, k)] * z[k];
            }
            y[(i, r)] = acc;
        }
    }
    SpatialDataset::new(locs.clone(), y)
}

/// Sample covariance `S = (1/N) * Y * Y^T` (symmetric PSD, rank <= min(n, N)).
pub fn sample_covariance(ds: &SpatialDataset) -> DMatrix<f64> {
    let n = ds.n();
    let n_real = ds.n_realizations();
    let mut s = DMatrix::<f64>::zeros(n, n);
    let scale = 1.0 / n_real as f64;
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for r in 0..n_real {
                acc += ds.y[(i, r)] * ds.y[(j, r)];
            }
            let v = acc * scale;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Fraction of off-diagonal entries whose magnitude, scaled by the largest
/// off-diagonal magnitude, exceeds `eps`. Returns 0 when every off-diagonal
/// entry is zero.
pub fn near_sparsity_fraction(m: &DMatrix<f64>, eps: f64) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut max_off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_off = max_off.max(m[(i, j)].abs());
            }
        }
    }
    if max_off == 0.0 {
        return 0.0;
    }
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)].abs() / max_off > eps {
                count += 1;
            }
        }
    }
    count as f64 / (n * n - n) as f64
}
