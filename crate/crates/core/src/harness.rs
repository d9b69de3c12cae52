//! Experiment engine: configured simulation, fitting, prediction, replicated
//! benchmarks with train/test splits, and CSV diagnostics.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{covariance_matrix, CovarianceParams, KernelFamily, LocationSet};
use crate::mle::mle_fit;
use crate::predict::{mspe, predict_stationary_with_plan};
use crate::sampler::{near_sparsity_fraction, sample_grf, SpatialDataset};
use crate::segmentation::{
    auto_block_count, auto_grid_dims, merge_small_blocks, random_segments, spatial_segments,
    SegmentationPlan, SegmentedFit,
};
use crate::stage1::{solve_stage1, Stage1Template};
use crate::stage2::{invert_spd, outer_objective, ActiveCase, Stage2Options};
use crate::stream::keyed_rng;

/// Fitting method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sps,
    Mle,
}

/// Segmentation request: none, a spatial grid, or a random partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlocksSpec {
    None,
    SpatialGrid(Vec<usize>),
    SpatialAuto,
    RandomCount(usize),
    RandomAuto,
}

impl BlocksSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(BlocksSpec::None);
        }
        if let Some(rest) = s.strip_prefix("ss:") {
            if rest == "auto" {
                return Ok(BlocksSpec::SpatialAuto);
            }
            let dims = rest
                .split('x')
                .map(|p| p.parse::<usize>().map_err(|_| Error::Parse(format!("bad grid `{s}`"))))
                .collect::<Result<Vec<usize>>>()?;
            if dims.is_empty() || dims.iter().any(|&c| c == 0) {
                return Err(Error::Parse(format!("bad grid `{s}`")));
            }
            return Ok(BlocksSpec::SpatialGrid(dims));
        }
        if let Some(rest) = s.strip_prefix("rs:") {
            if rest == "auto" {
                return Ok(BlocksSpec::RandomAuto);
            }
            let k = rest.parse::<usize>().map_err(|_| Error::Parse(format!("bad block count `{s}`")))?;
            return Ok(BlocksSpec::RandomCount(k));
        }
        Err(Error::Parse(format!(
            "blocks must be none, ss:AxB, ss:auto, rs:K, or rs:auto; got `{s}`"
        )))
    }

    pub fn render(&self) -> String {
        match self {
            BlocksSpec::None => "none".into(),
            BlocksSpec::SpatialGrid(d) => format!(
                "ss:{}",
                d.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x")
            ),
            BlocksSpec::SpatialAuto => "ss:auto".into(),
            BlocksSpec::RandomCount(k) => format!("rs:{k}"),
            BlocksSpec::RandomAuto => "rs:auto".into(),
        }
    }
}

impl Serialize for BlocksSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for BlocksSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        BlocksSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn default_test_fraction() -> f64 {
    0.1
}

fn default_replicates() -> usize {
    1
}

fn default_n_realizations() -> usize {
    1
}

fn default_mle_starts() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_blocks() -> BlocksSpec {
    BlocksSpec::None
}

/// Declarative experiment configuration, read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub kernel: KernelFamily,
    pub theta_rho: Vec<f64>,
    pub theta_v: f64,
    pub theta_0: f64,
    pub n: usize,
    pub dim: usize,
    /// Hypercube `[lo, hi]^dim` locations are drawn from.
    pub domain: (f64, f64),
    #[serde(rename = "N", default = "default_n_realizations")]
    pub n_realizations: usize,
    #[serde(rename = "R", default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
    pub method: Method,
    #[serde(default = "default_mle_starts")]
    pub mle_starts: usize,
    #[serde(default = "default_blocks")]
    pub blocks: BlocksSpec,
    #[serde(default = "default_true")]
    pub nugget: bool,
    /// Stage-I l1 weight; omit for the per-block default `1/sqrt(n_k)`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Score predictions against the true-parameter predictor (simulation
    /// convention) instead of raw held-out observations.
    #[serde(default = "default_true")]
    pub mspe_against_truth: bool,
    /// Near-sparsity diagnostic: location counts to sweep.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    /// Near-sparsity diagnostic: thresholds to sweep.
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    /// Objective-curve diagnostic: range-parameter grid `(min, max, count)`.
    #[serde(default)]
    pub theta_grid: Option<(f64, f64, usize)>,
    /// Objective-curve diagnostic: evaluate against the exact covariance
    /// instead of a fitted one.
    #[serde(default)]
    pub noiseless: bool,
    /// Stage-I primal tolerance (scaled by block size); solver default when
    /// omitted.
    #[serde(default)]
    pub eps_primal: Option<f64>,
    /// Stage-I dual tolerance (scaled by block size); solver default when
    /// omitted.
    #[serde(default)]
    pub eps_dual: Option<f64>,
    /// Stage-I iteration cap; solver default when omitted.
    #[serde(default)]
    pub stage1_max_iters: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "test_fraction must be in (0,1), got {}",
                self.test_fraction
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("R must be >= 1".into()));
        }
        if self.domain.1 <= self.domain.0 {
            return Err(Error::InvalidParameter("domain upper bound must exceed lower".into()));
        }
        self.true_params()?.validate_for_dim(self.dim)?;
        Ok(())
    }

    pub fn true_params(&self) -> Result<CovarianceParams> {
        CovarianceParams::new(self.kernel, self.theta_rho.clone(), self.theta_v, self.theta_0)
    }
}

/// Draws `n` locations uniformly over the configured hypercube, retrying the
/// (measure-zero) duplicate case.
pub fn draw_locations(n: usize, dim: usize, domain: (f64, f64), seed: u64, replicate: u64) -> Result<LocationSet> {
    let mut rng = keyed_rng(seed, replicate, "locations");
    for _ in 0..4 {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(domain.0..domain.1)).collect())
            .collect();
        if let Ok(locs) = LocationSet::from_rows(&rows) {
            return Ok(locs);
        }
    }
    Err(Error::InvalidParameter("could not draw distinct locations".into()))
}

/// Builds the segmentation plan requested by `spec` over the training
/// locations, merging cells that are too small to fit.
pub fn build_plan(locs: &LocationSet, spec: &BlocksSpec, seed: u64, n_b: usize) -> Result<SegmentationPlan> {
    let n = locs.n();
    let plan = match spec {
        BlocksSpec::None => SegmentationPlan::single_block(n),
        BlocksSpec::SpatialGrid(dims) => {
            let raw = spatial_segments(locs, dims)?;
            merge_small_blocks(&raw, locs, 2)?
        }
        BlocksSpec::SpatialAuto => {
            if n <= n_b {
                SegmentationPlan::single_block(n)
            } else {
                let dims = auto_grid_dims(n, locs.dim(), n_b);
                let raw = spatial_segments(locs, &dims)?;
                merge_small_blocks(&raw, locs, 2)?
            }
        }
        BlocksSpec::RandomCount(k) => random_segments(n, *k, seed)?,
        BlocksSpec::RandomAuto => {
            if n <= n_b {
                SegmentationPlan::single_block(n)
            } else {
                random_segments(n, auto_block_count(n, n_b), seed)?
            }
        }
    };
    plan.validate(n)?;
    Ok(plan)
}

/// Everything needed to fit one dataset.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub method: Method,
    pub kernel: KernelFamily,
    pub blocks: BlocksSpec,
    pub nugget: bool,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub mle_starts: usize,
    pub stage1: Stage1Template,
}

impl FitSettings {
    /// Stage-I template honoring any per-run tolerance overrides.
    pub fn stage1_template(cfg: &RunConfig) -> Stage1Template {
        let mut t = Stage1Template {
            alpha: cfg.alpha,
            ..Stage1Template::default()
        };
        if let Some(e) = cfg.eps_primal {
            t.eps_primal = e;
        }
        if let Some(e) = cfg.eps_dual {
            t.eps_dual = e;
        }
        if let Some(m) = cfg.stage1_max_iters {
            t.max_iters = m;
        }
        t
    }
}

/// Fit output shared by the CLI and the benchmark engine.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub params: CovarianceParams,
    pub plan: SegmentationPlan,
    pub converged: bool,
    pub objective: Option<f64>,
    pub active_case: Option<ActiveCase>,
    pub curvature_ok: Option<bool>,
}

/// Fits covariance parameters to a dataset with the configured method.
pub fn fit_dataset(ds: &SpatialDataset, settings: &FitSettings) -> Result<FitOutput> {
    let plan = build_plan(&ds.locs, &settings.blocks, settings.seed, crate::segmentation::DEFAULT_BLOCK_CEILING)?;
    match settings.method {
        Method::Sps => {
            let template = Stage1Template {
                alpha: settings.alpha,
                ..settings.stage1.clone()
            };
            let outcome = crate::segmentation::fit_segmented(
                ds,
                &plan,
                settings.kernel,
                true,
                settings.nugget,
                &template,
                &Stage2Options::default(),
            )?;
            let result = match &outcome.fit {
                SegmentedFit::Stationary(r) => r.clone(),
                SegmentedFit::PerBlock(_) => unreachable!("stationary fit requested"),
            };
            Ok(FitOutput {
                params: result.theta_hat.clone(),
                plan,
                converged: outcome.stage1_converged && result.search_ok,
                objective: Some(result.objective),
                active_case: Some(result.active_case),
                curvature_ok: Some(result.curvature_ok),
            })
        }
        Method::Mle => {
            let fit = mle_fit(ds, settings.kernel, settings.mle_starts, settings.seed)?;
            Ok(FitOutput {
                params: fit.params,
                plan,
                converged: fit.usable_starts > 0,
                objective: Some(fit.objective),
                active_case: None,
                curvature_ok: None,
            })
        }
    }
}

/// One benchmark replicate: the fitted parameters and prediction score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub theta_hat: Vec<f64>,
    pub mspe: f64,
    pub converged: bool,
}

/// Wall-clock seconds per phase, persisted separately from the deterministic
/// report artifacts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub simulate_seconds: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

/// Aggregated benchmark results. The statistics always recompute exactly
/// from `rows`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub method: Method,
    pub blocks: String,
    pub replicates: usize,
    pub theta_bar: Vec<f64>,
    pub stdev_theta: Vec<f64>,
    pub stderr_theta: Vec<f64>,
    pub mspe_mean: f64,
    pub mspe_stdev: f64,
    pub all_converged: bool,
    pub rows: Vec<ReplicateRow>,
    #[serde(skip)]
    pub timings: Timings,
}

impl BenchmarkReport {
    /// Componentwise mean, population standard deviation, and standard error
    /// recomputed from the stored rows.
    pub fn recompute_stats(rows: &[ReplicateRow]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
        let r = rows.len() as f64;
        let p = rows[0].theta_hat.len();
        let mut theta_bar = vec![0.0; p];
        for row in rows {
            for (acc, v) in theta_bar.iter_mut().zip(&row.theta_hat) {
                *acc += v;
            }
        }
        for v in theta_bar.iter_mut() {
            *v /= r;
        }
        let mut stdev = vec![0.0; p];
        for row in rows {
            for k in 0..p {
                let dv = row.theta_hat[k] - theta_bar[k];
                stdev[k] += dv * dv;
            }
        }
        for v in stdev.iter_mut() {
            *v = (*v / r).sqrt();
        }
        let stderr: Vec<f64> = stdev.iter().map(|s| s / r.sqrt()).collect();
        let mspe_mean = rows.iter().map(|row| row.mspe).sum::<f64>() / r;
        let mspe_var = rows.iter().map(|row| (row.mspe - mspe_mean).powi(2)).sum::<f64>() / r;
        (theta_bar, stdev, stderr, mspe_mean, mspe_var.sqrt())
    }
}

/// Deterministic train/test split: a pure function of `(seed, replicate, n)`.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64, replicate: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = keyed_rng(seed, replicate, "split");
    idx.shuffle(&mut rng);
    let n_test = ((n as f64) * test_fraction).ceil() as usize;
    let n_test = n_test.clamp(1, n - 1);
    let test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    let mut test = test;
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn replicate_run(cfg: &RunConfig, l: usize) -> Result<(ReplicateRow, Timings)> {
    let truth = cfg.true_params()?;
    let mut timings = Timings::default();

    let t0 = Instant::now();
    let ds = {
        let locs = draw_locations(cfg.n, cfg.dim, cfg.domain, cfg.seed, l as u64)?;
        let dataset_seed = keyed_rng(cfg.seed, l as u64, "dataset-seed").next_u64();
        sample_grf(&locs, &truth, cfg.n_realizations, dataset_seed)?
    };
    timings.simulate_seconds = t0.elapsed().as_secs_f64();

    let (train_idx, test_idx) = train_test_split(ds.n(), cfg.test_fraction, cfg.seed, l as u64);
    let train = ds.subset(&train_idx)?;
    let test = ds.subset(&test_idx)?;
    let queries = test.locs.matrix().clone_owned();

    let t1 = Instant::now();
    let fit = fit_dataset(
        &train,
        &FitSettings {
            method: cfg.method,
            kernel: cfg.kernel,
            blocks: cfg.blocks.clone(),
            nugget: cfg.nugget,
            alpha: cfg.alpha,
            seed: keyed_rng(cfg.seed, l as u64, "fit-seed").next_u64(),
            mle_starts: cfg.mle_starts,
            stage1: FitSettings::stage1_template(cfg),
        },
    )?;
    timings.fit_seconds = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let predicted = predict_stationary_with_plan(&train, &fit.params, Some(&fit.plan), &queries)?;
    let y_hat: Vec<f64> = predicted.preds.iter().map(|p| p.mean).collect();
    let y_ref: Vec<f64> = if cfg.mspe_against_truth {
        let reference = predict_stationary_with_plan(&train, &truth, Some(&fit.plan), &queries)?;
        reference.preds.iter().map(|p| p.mean).collect()
    } else {
        test.mean_realization()
    };
    timings.predict_seconds = t2.elapsed().as_secs_f64();

    let q = cfg.kernel.range_dim(cfg.dim);
    let mut theta_hat = Vec::with_capacity(q + 2);
    theta_hat.extend_from_slice(&fit.params.theta_rho);
    theta_hat.push(fit.params.theta_v);
    theta_hat.push(fit.params.theta_0);

    Ok((
        ReplicateRow {
            replicate: l,
            theta_hat,
            mspe: mspe(&y_ref, &y_hat)?,
            converged: fit.converged,
        },
        timings,
    ))
}

fn rows_to_csv(cfg: &RunConfig, rows: &[ReplicateRow]) -> String {
    let q = cfg.kernel.range_dim(cfg.dim);
    let mut header: Vec<String> = (1..=q).map(|k| format!("theta_rho_{k}")).collect();
    header.insert(0, "replicate".into());
    header.push("theta_v".into());
    header.push("theta_0".into());
    header.push("mspe".into());
    header.push("converged".into());
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut fields = vec![row.replicate.to_string()];
        fields.extend(row.theta_hat.iter().map(|v| format!("{v}")));
        fields.push(format!("{}", row.mspe));
        fields.push(row.converged.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Runs `R` replicates of simulate/split/fit/predict and aggregates the
/// results. When `out_dir` is given, writes `replicates.csv` and
/// `summary.json` (byte-deterministic for a fixed config) plus
/// `timings.json`; on a replicate failure the completed rows are saved
/// before the error propagates.
pub fn run_benchmark(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let results: Vec<Result<(ReplicateRow, Timings)>> =
        (0..cfg.replicates).into_par_iter().map(|l| replicate_run(cfg, l)).collect();

    let mut rows = Vec::new();
    let mut timings = Timings::default();
    let mut first_err = None;
    for res in results {
        match res {
            Ok((row, t)) => {
                rows.push(row);
                timings.simulate_seconds += t.simulate_seconds;
                timings.fit_seconds += t.fit_seconds;
                timings.predict_seconds += t.predict_seconds;
            }
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }

    if let Some(err) = first_err {
        if let (Some(dir), false) = (out_dir, rows.is_empty()) {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("replicates.csv"), rows_to_csv(cfg, &rows))?;
        }
        return Err(err);
    }

    let (theta_bar, stdev_theta, stderr_theta, mspe_mean, mspe_stdev) =
        BenchmarkReport::recompute_stats(&rows);
    let report = BenchmarkReport {
        method: cfg.method,
        blocks: cfg.blocks.render(),
        replicates: rows.len(),
        theta_bar,
        stdev_theta,
        stderr_theta,
        mspe_mean,
        mspe_stdev,
        all_converged: rows.iter().all(|r| r.converged),
        rows,
        timings,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("replicates.csv"), rows_to_csv(cfg, &report.rows))?;
        let mut summary = serde_json::to_string_pretty(&report)?;
        summary.push('\n');
        std::fs::write(dir.join("summary.json"), summary)?;
        let mut t = serde_json::to_string_pretty(&report.timings)?;
        t.push('\n');
        std::fs::write(dir.join("timings.json"), t)?;
    }
    Ok(report)
}

/// Diagnostic artifact selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    NearSparsity,
    PrecisionVsDistance,
    ObjectiveCurve,
}

impl DiagnosticKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "near-sparsity" => Ok(DiagnosticKind::NearSparsity),
            "precision-vs-distance" => Ok(DiagnosticKind::PrecisionVsDistance),
            "objective-curve" => Ok(DiagnosticKind::ObjectiveCurve),
            other => Err(Error::Parse(format!("unknown diagnostic `{other}`"))),
        }
    }
}

/// Produces the requested diagnostic as CSV text.
pub fn diagnose(kind: DiagnosticKind, cfg: &RunConfig) -> Result<String> {
    let truth = cfg.true_params()?;
    match kind {
        DiagnosticKind::NearSparsity => {
            let n_grid = cfg.n_grid.clone().unwrap_or_else(|| vec![10, 100]);
            let epsilons = cfg.epsilons.clone().unwrap_or_else(|| vec![0.1, 0.01, 0.001]);
            let mut out = String::from("epsilon,n,precision_fraction,covariance_fraction\n");
            for &n in &n_grid {
                let locs = draw_locations(n, cfg.dim, cfg.domain, cfg.seed, n as u64)?;
                let c = covariance_matrix(&locs, &truth)?;
                let p = invert_spd(&c)?;
                for &eps in &epsilons {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        eps,
                        n,
                        near_sparsity_fraction(&p, eps),
                        near_sparsity_fraction(&c, eps)
                    ));
                }
            }
            Ok(out)
        }
        DiagnosticKind::PrecisionVsDistance => {
            let locs = draw_locations(cfg.n, cfg.dim, cfg.domain, cfg.seed, 0)?;
            let c = covariance_matrix(&locs, &truth)?;
            let p = invert_spd(&c)?;
            let mut out = String::from("distance,abs_precision\n");
            for i in 0..cfg.n {
                for j in (i + 1)..cfg.n {
                    out.push_str(&format!("{},{}\n", locs.distance(i, j), p[(i, j)].abs()));
                }
            }
            Ok(out)
        }
        DiagnosticKind::ObjectiveCurve => {
            let (lo, hi, count) = cfg
                .theta_grid
                .ok_or_else(|| Error::InvalidParameter("objective-curve needs theta_grid".into()))?;
            if count < 2 || !(hi > lo) || !(lo > 0.0) {
                return Err(Error::InvalidParameter("theta_grid must be (0 < min < max, count >= 2)".into()));
            }
            let locs = draw_locations(cfg.n, cfg.dim, cfg.domain, cfg.seed, 0)?;
            let c_hat: DMatrix<f64> = if cfg.noiseless {
                covariance_matrix(&locs, &truth)?
            } else {
                let dataset_seed = keyed_rng(cfg.seed, 0, "dataset-seed").next_u64();
                let ds = sample_grf(&locs, &truth, cfg.n_realizations, dataset_seed)?;
                let s = crate::sampler::sample_covariance(&ds);
                let g = crate::sampler::distance_weights(&ds.locs)?;
                let template = Stage1Template { alpha: cfg.alpha, ..Stage1Template::default() };
                let est = solve_stage1(&s, &g, &template.instantiate(ds.n()))?;
                invert_spd(&est.p_hat)?
            };
            let mut out = String::from("theta_rho,f\n");
            for k in 0..count {
                let t = lo + (hi - lo) * k as f64 / (count - 1) as f64;
                let f = outer_objective(&[t], &c_hat, &locs, cfg.kernel, cfg.nugget)?;
                out.push_str(&format!("{t},{f}\n"));
            }
            Ok(out)
        }
    }
}
