//! Partitioning of large datasets into blocks, per-block precision solves,
//! and the joint (or per-block) covariance-parameter fit.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, LocationSet};
use crate::sampler::{distance_weights, sample_covariance, SpatialDataset};
use crate::stage1::{solve_stage1, Stage1Template};
use crate::stage2::{fit_stage2_blocks, invert_precision, Stage2Options, Stage2Result};
use crate::stream::keyed_rng;

/// Default ceiling on block sizes; segmentation kicks in above it.
pub const DEFAULT_BLOCK_CEILING: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Spatial,
    Random,
    None,
}

/// Axis-aligned grid over the bounding box of the training locations.
#[derive(Debug, Clone)]
pub struct GridGeometry {
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
    pub dims: Vec<usize>,
}

impl GridGeometry {
    /// Multi-index of the cell containing `point`. Interior cells are
    /// half-open on their upper faces; the last cell per axis is closed.
    /// Points outside the box clamp to the boundary cells.
    pub fn cell_of(&self, point: &[f64]) -> Vec<usize> {
        (0..self.dims.len())
            .map(|k| {
                let cells = self.dims[k];
                let width = self.highs[k] - self.lows[k];
                if cells <= 1 || width <= 0.0 {
                    return 0;
                }
                let h = width / cells as f64;
                let raw = ((point[k] - self.lows[k]) / h).floor();
                (raw.max(0.0) as usize).min(cells - 1)
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for k in 0..self.dims.len() {
            idx = idx * self.dims[k] + multi[k];
        }
        idx
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dims.len();
        let mut multi = vec![0usize; d];
        for k in (0..d).rev() {
            multi[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
        multi
    }

    /// Chebyshev adjacency on cell multi-indices (within one cell per axis,
    /// including the cell itself).
    pub fn cells_adjacent(&self, a: usize, b: usize) -> bool {
        let ma = self.multi_index(a);
        let mb = self.multi_index(b);
        ma.iter()
            .zip(&mb)
            .all(|(&x, &y)| x.abs_diff(y) <= 1)
    }
}

/// A partition of location indices `{0..n}` into disjoint nonempty blocks.
#[derive(Debug, Clone)]
pub struct SegmentationPlan {
    pub scheme: Scheme,
    pub blocks: Vec<Vec<usize>>,
    /// Grid geometry (Spatial scheme only).
    pub grid: Option<GridGeometry>,
    /// Flat cell ids covered by each block (Spatial scheme only; merged
    /// blocks carry several).
    pub cells: Option<Vec<Vec<usize>>>,
    /// Seed of the random partition (Random scheme only).
    pub seed: Option<u64>,
    /// Block-size ceiling this plan was built for.
    pub n_b: usize,
}

impl SegmentationPlan {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// Single block holding every index.
    pub fn single_block(n: usize) -> Self {
        SegmentationPlan {
            scheme: Scheme::None,
            blocks: vec![(0..n).collect()],
            grid: None,
            cells: None,
            seed: None,
            n_b: DEFAULT_BLOCK_CEILING,
        }
    }

    /// Checks that the blocks are nonempty, pairwise disjoint, and cover
    /// `{0..n}` exactly.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        let mut count = 0usize;
        for block in &self.blocks {
            if block.is_empty() {
                return Err(Error::InvalidSegmentation("empty block".into()));
            }
            for &i in block {
                if i >= n {
                    return Err(Error::InvalidSegmentation(format!("index {i} out of range for n = {n}")));
                }
                if seen[i] {
                    return Err(Error::InvalidSegmentation(format!("index {i} appears in two blocks")));
                }
                seen[i] = true;
                count += 1;
            }
        }
        if count != n {
            return Err(Error::InvalidSegmentation(format!("blocks cover {count} of {n} indices")));
        }
        Ok(())
    }

    /// Block id containing each index.
    pub fn block_of_index(&self, n: usize) -> Vec<usize> {
        let mut owner = vec![usize::MAX; n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                owner[i] = b;
            }
        }
        owner
    }
}

/// Partitions locations by the axis-aligned grid over their bounding box.
/// Cells that contain no points are dropped; singleton cells are kept (use
/// [`merge_small_blocks`] before fitting).
pub fn spatial_segments(locs: &LocationSet, grid_dims: &[usize]) -> Result<SegmentationPlan> {
    let d = locs.dim();
    if grid_dims.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} grid dims for dimension {}",
            grid_dims.len(),
            d
        )));
    }
    if grid_dims.iter().any(|&c| c == 0) {
        return Err(Error::InvalidParameter("grid dims must be >= 1".into()));
    }
    let n = locs.n();
    let x = locs.matrix();
    let mut lows = vec![f64::INFINITY; d];
    let mut highs = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for k in 0..d {
            lows[k] = lows[k].min(x[(i, k)]);
            highs[k] = highs[k].max(x[(i, k)]);
        }
    }
    let grid = GridGeometry { lows, highs, dims: grid_dims.to_vec() };
    let total_cells: usize = grid_dims.iter().product();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); total_cells];
    for i in 0..n {
        let point = locs.row(i);
        let cell = grid.flat_index(&grid.cell_of(&point));
        members[cell].push(i);
    }
    let mut blocks = Vec::new();
    let mut cells = Vec::new();
    for (cell, m) in members.into_iter().enumerate() {
        if !m.is_empty() {
            blocks.push(m);
            cells.push(vec![cell]);
        }
    }
    Ok(SegmentationPlan {
        scheme: Scheme::Spatial,
        blocks,
        grid: Some(grid),
        cells: Some(cells),
        seed: None,
        n_b: DEFAULT_BLOCK_CEILING,
    })
}

/// Partitions `{0..n}` uniformly at random into `k` blocks: the first `k - 1`
/// blocks hold exactly `floor(n/k)` indices, the last holds the remainder.
pub fn random_segments(n: usize, k: usize, seed: u64) -> Result<SegmentationPlan> {
    if k == 0 || k > n {
        return Err(Error::InvalidSegmentation(format!("need 1 <= K <= n, got K = {k}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = keyed_rng(seed, 0, "random-segments");
    perm.shuffle(&mut rng);
    let base = n / k;
    let mut blocks = Vec::with_capacity(k);
    let mut cursor = 0usize;
    for b in 0..k {
        let size = if b + 1 < k { base } else { n - cursor };
        blocks.push(perm[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(SegmentationPlan {
        scheme: Scheme::Random,
        blocks,
        grid: None,
        cells: None,
        seed: Some(seed),
        n_b: DEFAULT_BLOCK_CEILING,
    })
}

/// Merges blocks smaller than `min_size` into the nearest other block by
/// centroid distance. The fit requires at least two points per block; raw
/// spatial plans may contain smaller cells.
pub fn merge_small_blocks(plan: &SegmentationPlan, locs: &LocationSet, min_size: usize) -> Result<SegmentationPlan> {
    plan.validate(locs.n())?;
    let mut blocks = plan.blocks.clone();
    let mut cells = plan.cells.clone();
    loop {
        if blocks.len() <= 1 {
            break;
        }
        let centroid = |block: &Vec<usize>| -> Vec<f64> {
            let d = locs.dim();
            let mut c = vec![0.0; d];
            for &i in block {
                let row = locs.row(i);
                for k in 0..d {
                    c[k] += row[k];
                }
            }
            for v in c.iter_mut() {
                *v /= block.len() as f64;
            }
            c
        };
        let small = blocks.iter().position(|b| b.len() < min_size);
        let Some(victim) = small else { break };
        let cv = centroid(&blocks[victim]);
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for (b, block) in blocks.iter().enumerate() {
            if b == victim {
                continue;
            }
            let cb = centroid(block);
            let dist: f64 = cv
                .iter()
                .zip(&cb)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist < best {
                best = dist;
                target = b;
            }
        }
        let moved = blocks.remove(victim);
        let target = if target > victim { target - 1 } else { target };
        blocks[target].extend(moved);
        blocks[target].sort_unstable();
        if let Some(cells) = cells.as_mut() {
            let moved_cells = cells.remove(victim);
            cells[target].extend(moved_cells);
        }
    }
    Ok(SegmentationPlan {
        scheme: plan.scheme,
        blocks,
        grid: plan.grid.clone(),
        cells,
        seed: plan.seed,
        n_b: plan.n_b,
    })
}

/// Per-block Stage-I summary carried alongside the fitted parameters.
#[derive(Debug, Clone)]
pub struct BlockSolveSummary {
    pub block: usize,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Fitted parameters from a segmented pipeline.
#[derive(Debug, Clone)]
pub enum SegmentedFit {
    /// One parameter vector fitted jointly across blocks.
    Stationary(Stage2Result),
    /// Independent parameters per block, in block order.
    PerBlock(Vec<Stage2Result>),
}

#[derive(Debug, Clone)]
pub struct SegmentedOutcome {
    pub fit: SegmentedFit,
    /// True when every per-block precision solve met its tolerances.
    pub stage1_converged: bool,
    pub block_summaries: Vec<BlockSolveSummary>,
}

impl SegmentedOutcome {
    /// The single stationary result, when fitted that way.
    pub fn stationary(&self) -> Option<&Stage2Result> {
        match &self.fit {
            SegmentedFit::Stationary(r) => Some(r),
            SegmentedFit::PerBlock(_) => None,
        }
    }
}

/// Runs the precision solve per block (`alpha_k = 1/sqrt(n_k)`,
/// `rho_0 = n_k`), inverts each estimate, and fits covariance parameters:
/// one joint fit over the concatenated per-block residuals when
/// `stationary`, otherwise an independent fit per block.
pub fn fit_segmented(
    ds: &SpatialDataset,
    plan: &SegmentationPlan,
    family: KernelFamily,
    stationary: bool,
    nugget_enabled: bool,
    template: &Stage1Template,
    s2opts: &Stage2Options,
) -> Result<SegmentedOutcome> {
    plan.validate(ds.n())?;
    if let Some(block) = plan.blocks.iter().find(|b| b.len() < 2) {
        return Err(Error::InvalidSegmentation(format!(
            "block with {} point(s); every block needs at least 2",
            block.len()
        )));
    }

    struct BlockFit {
        locs: LocationSet,
        c_hat: nalgebra::DMatrix<f64>,
        summary: BlockSolveSummary,
    }

    let fits: Vec<BlockFit> = plan
        .blocks
        .par_iter()
        .enumerate()
        .map(|(b, block)| -> Result<BlockFit> {
            let sub = ds.subset(block)?;
            let s = sample_covariance(&sub);
            let g = distance_weights(&sub.locs)?;
            let cfg = template.instantiate(sub.n());
            let est = solve_stage1(&s, &g, &cfg)?;
            let c_hat = invert_precision(&est)?;
            Ok(BlockFit {
                locs: sub.locs,
                c_hat,
                summary: BlockSolveSummary {
                    block: b,
                    n_points: block.len(),
                    iterations: est.iterations,
                    converged: est.converged,
                    primal_residual: est.primal_residual,
                    dual_residual: est.dual_residual,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let stage1_converged = fits.iter().all(|f| f.summary.converged);
    let block_summaries: Vec<BlockSolveSummary> = fits.iter().map(|f| f.summary.clone()).collect();

    let fit = if stationary {
        let refs: Vec<(&nalgebra::DMatrix<f64>, &LocationSet)> =
            fits.iter().map(|f| (&f.c_hat, &f.locs)).collect();
        SegmentedFit::Stationary(fit_stage2_blocks(&refs, family, nugget_enabled, s2opts)?)
    } else {
        let per_block = fits
            .iter()
            .map(|f| fit_stage2_blocks(&[(&f.c_hat, &f.locs)], family, nugget_enabled, s2opts))
            .collect::<Result<Vec<_>>>()?;
        SegmentedFit::PerBlock(per_block)
    };

    Ok(SegmentedOutcome {
        fit,
        stage1_converged,
        block_summaries,
    })
}

/// Grid dimensions for an automatic spatial plan: the smallest per-axis cell
/// count whose product reaches `ceil(n / n_b)` blocks.
pub fn auto_grid_dims(n: usize, d: usize, n_b: usize) -> Vec<usize> {
    let k = n.div_ceil(n_b.max(1)).max(1);
    let per_axis = (k as f64).powf(1.0 / d as f64).ceil() as usize;
    vec![per_axis.max(1); d]
}

/// Block count for an automatic random plan.
pub fn auto_block_count(n: usize, n_b: usize) -> usize {
    n.div_ceil(n_b.max(1)).max(1)
}
