//! Kriging prediction: conditional mean and variance of the latent field at
//! query locations, plus the mean squared prediction error metric.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{correlation_unchecked, CovarianceParams, LocationSet};
use crate::sampler::SpatialDataset;

/// Predictive mean and variance at one query location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    /// In `[0, theta_v]`: the prior variance minus a nonnegative quadratic form.
    pub variance: f64,
}

/// A factorized kriging system: one Cholesky of `C_f + theta_0 I` shared
/// across any number of queries.
pub struct KrigingModel {
    locs: LocationSet,
    params: CovarianceParams,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `(C_f + theta_0 I)^-1 * mean realization`
    weights: DVector<f64>,
}

impl KrigingModel {
    pub fn fit(ds: &SpatialDataset, params: &CovarianceParams) -> Result<Self> {
        params.validate_for_dim(ds.locs.dim())?;
        let c = crate::kernels::covariance_matrix(&ds.locs, params)?;
        let chol = c
            .cholesky()
            .ok_or_else(|| Error::Factorization("kriging covariance is not positive definite".into()))?;
        let ybar = DVector::from_vec(ds.mean_realization());
        let weights = chol.solve(&ybar);
        Ok(KrigingModel {
            locs: ds.locs.clone(),
            params: params.clone(),
            chol,
            weights,
        })
    }

    /// Correlation vector from every training point to the query, scaled by
    /// the process variance.
    fn cross_covariance(&self, query: &[f64]) -> DVector<f64> {
        let n = self.locs.n();
        let d = self.locs.dim();
        let x = self.locs.matrix();
        let mut c0 = DVector::<f64>::zeros(n);
        let mut row = vec![0.0; d];
        for i in 0..n {
            for k in 0..d {
                row[k] = x[(i, k)];
            }
            c0[i] = self.params.theta_v
                * correlation_unchecked(self.params.family, &row, query, &self.params.theta_rho);
        }
        c0
    }

    pub fn predict_one(&self, query: &[f64]) -> Result<PredictiveDistribution> {
        if query.len() != self.locs.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query has dimension {}, training data {}",
                query.len(),
                self.locs.dim()
            )));
        }
        let c0 = self.cross_covariance(query);
        let mean = c0.dot(&self.weights);
        let solved = self.chol.solve(&c0);
        let c00 = self.params.theta_v;
        let variance = (c00 - c0.dot(&solved)).clamp(0.0, c00);
        Ok(PredictiveDistribution { mean, variance })
    }

    /// Predicts every row of the `m x d` query matrix against the shared
    /// factorization; queries are evaluated concurrently.
    pub fn predict(&self, queries: &DMatrix<f64>) -> Result<Vec<PredictiveDistribution>> {
        if queries.ncols() != self.locs.dim() {
            return Err(Error::DimensionMismatch(format!(
                "queries have dimension {}, training data {}",
                queries.ncols(),
                self.locs.dim()
            )));
        }
        let rows: Vec<Vec<f64>> = (0..queries.nrows())
            .map(|i| (0..queries.ncols()).map(|k| queries[(i, k)]).collect())
            .collect();
        rows.par_iter().map(|q| self.predict_one(q)).collect()
    }
}

/// Predictive distribution at each query given training data and parameters.
pub fn predictive_distribution(
    ds: &SpatialDataset,
    params: &CovarianceParams,
    queries: &DMatrix<f64>,
) -> Result<Vec<PredictiveDistribution>> {
    KrigingModel::fit(ds, params)?.predict(queries)
}

/// Above this training size, spatially-segmented prediction switches from
/// one full kriging system to per-cell neighborhood systems.
pub const FULL_KRIGING_MAX_N: usize = 4000;

/// Predictions plus a flag recording whether a neighborhood approximation
/// was used instead of the exact full-data system.
#[derive(Debug, Clone)]
pub struct PlannedPrediction {
    pub preds: Vec<PredictiveDistribution>,
    pub approximate: bool,
}

/// Kriging under a single stationary parameter vector, optionally informed by
/// a segmentation plan.
///
/// The full training set is used in one system whenever it fits under
/// [`FULL_KRIGING_MAX_N`]. Beyond that, a spatial plan prunes each query's
/// system to its own cell plus the adjacent cells; random plans carry no
/// spatial locality, so they always use the full system.
pub fn predict_stationary_with_plan(
    train: &SpatialDataset,
    params: &CovarianceParams,
    plan: Option<&crate::segmentation::SegmentationPlan>,
    queries: &DMatrix<f64>,
) -> Result<PlannedPrediction> {
    use crate::segmentation::Scheme;
    let spatial = plan.filter(|p| p.scheme == Scheme::Spatial && p.grid.is_some() && p.cells.is_some());
    if train.n() <= FULL_KRIGING_MAX_N || spatial.is_none() {
        let preds = predictive_distribution(train, params, queries)?;
        return Ok(PlannedPrediction { preds, approximate: false });
    }
    let plan = spatial.unwrap();
    let grid = plan.grid.as_ref().unwrap();
    let cells = plan.cells.as_ref().unwrap();

    // Owning block per flat cell id.
    let total_cells: usize = grid.dims.iter().product();
    let mut cell_owner = vec![usize::MAX; total_cells];
    for (b, block_cells) in cells.iter().enumerate() {
        for &c in block_cells {
            cell_owner[c] = b;
        }
    }

    // Group queries by owning block.
    let m = queries.nrows();
    let d = queries.ncols();
    let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); plan.k()];
    for qi in 0..m {
        let point: Vec<f64> = (0..d).map(|k| queries[(qi, k)]).collect();
        let cell = grid.flat_index(&grid.cell_of(&point));
        let owner = if cell_owner[cell] != usize::MAX {
            cell_owner[cell]
        } else {
            // Empty cell: fall back to the nearest block centroid.
            nearest_block_by_centroid(train, plan, &point)
        };
        by_block[owner].push(qi);
    }

    let mut out = vec![PredictiveDistribution { mean: 0.0, variance: 0.0 }; m];
    for (b, q_idx) in by_block.iter().enumerate() {
        if q_idx.is_empty() {
            continue;
        }
        // Training subset: the block plus every adjacent block.
        let mut subset: Vec<usize> = Vec::new();
        for (b2, block) in plan.blocks.iter().enumerate() {
            let adjacent = cells[b].iter().any(|&ca| cells[b2].iter().any(|&cb| grid.cells_adjacent(ca, cb)));
            if adjacent {
                subset.extend_from_slice(block);
            }
        }
        subset.sort_unstable();
        let sub = train.subset(&subset)?;
        let model = KrigingModel::fit(&sub, params)?;
        for &qi in q_idx {
            let point: Vec<f64> = (0..d).map(|k| queries[(qi, k)]).collect();
            out[qi] = model.predict_one(&point)?;
        }
    }
    Ok(PlannedPrediction { preds: out, approximate: true })
}

fn nearest_block_by_centroid(
    train: &SpatialDataset,
    plan: &crate::segmentation::SegmentationPlan,
    point: &[f64],
) -> usize {
    let d = train.locs.dim();
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (b, block) in plan.blocks.iter().enumerate() {
        let mut centroid = vec![0.0; d];
        for &i in block {
            let row = train.locs.row(i);
            for k in 0..d {
                centroid[k] += row[k];
            }
        }
        let dist: f64 = centroid
            .iter()
            .zip(point)
            .map(|(c, p)| {
                let v = c / block.len() as f64 - p;
                v * v
            })
            .sum();
        if dist < best_dist {
            best_dist = dist;
            best = b;
        }
    }
    best
}

/// Prediction under per-block parameters: each query uses the parameters and
/// training subset of the block whose region contains it (spatial plans) or
/// of the nearest block centroid (random plans).
pub fn predict_nonstationary(
    train: &SpatialDataset,
    plan: &crate::segmentation::SegmentationPlan,
    per_block: &[CovarianceParams],
    queries: &DMatrix<f64>,
) -> Result<Vec<PredictiveDistribution>> {
    if per_block.len() != plan.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter sets for {} blocks",
            per_block.len(),
            plan.k()
        )));
    }
    let m = queries.nrows();
    let d = queries.ncols();
    let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); plan.k()];
    for qi in 0..m {
        let point: Vec<f64> = (0..d).map(|k| queries[(qi, k)]).collect();
        let owner = match (&plan.grid, &plan.cells) {
            (Some(grid), Some(cells)) => {
                let cell = grid.flat_index(&grid.cell_of(&point));
                cells
                    .iter()
                    .position(|cs| cs.contains(&cell))
                    .unwrap_or_else(|| nearest_block_by_centroid(train, plan, &point))
            }
            _ => nearest_block_by_centroid(train, plan, &point),
        };
        by_block[owner].push(qi);
    }
    let mut out = vec![PredictiveDistribution { mean: 0.0, variance: 0.0 }; m];
    for (b, q_idx) in by_block.iter().enumerate() {
        if q_idx.is_empty() {
            continue;
        }
        let sub = train.subset(&plan.blocks[b])?;
        let model = KrigingModel::fit(&sub, &per_block[b])?;
        for &qi in q_idx {
            let point: Vec<f64> = (0..d).map(|k| queries[(qi, k)]).collect();
            out[qi] = model.predict_one(&point)?;
        }
    }
    Ok(out)
}

/// Mean squared prediction error `(1/m) ||y_true - y_pred||^2`.
pub fn mspe(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "length mismatch: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidParameter("mspe needs at least one element".into()));
    }
    let sum: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / y_true.len() as f64)
}
