//! File formats: dataset/query/prediction/plan CSV and the fitted-parameter
//! JSON document. All numeric fields use `.` decimals and Rust's shortest
//! round-trip float formatting, so written files are byte-deterministic and
//! parse back exactly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CovarianceParams, KernelFamily, LocationSet};
use crate::predict::PredictiveDistribution;
use crate::sampler::SpatialDataset;
use crate::segmentation::SegmentationPlan;

/// Renders a dataset as CSV with header `x1,...,xd,y1,...,yN`.
pub fn dataset_to_csv(ds: &SpatialDataset) -> String {
    let d = ds.locs.dim();
    let n_real = ds.n_realizations();
    let mut out = String::new();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.extend((1..=n_real).map(|r| format!("y{r}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..ds.n() {
        let mut fields: Vec<String> = ds.locs.row(i).iter().map(|v| format!("{v}")).collect();
        fields.extend((0..n_real).map(|r| format!("{}", ds.y[(i, r)])));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_dataset_csv(path: &Path, ds: &SpatialDataset) -> Result<()> {
    fs::write(path, dataset_to_csv(ds))?;
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse `{field}` as a number")))
}

/// Parses dataset CSV (header `x1,...,xd,y1,...,yN`).
pub fn dataset_from_csv(text: &str) -> Result<SpatialDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset file".into()))?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    let d = cols.iter().take_while(|c| c.starts_with('x')).count();
    let n_real = cols.len() - d;
    if d == 0 || n_real == 0 {
        return Err(Error::Parse(format!(
            "header must be x1,...,xd,y1,...,yN; got `{header}`"
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + n_real {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields, got {}",
                idx + 1,
                d + n_real,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(d);
        for f in &fields[..d] {
            row.push(parse_f64(f, idx + 1)?);
        }
        let mut y = Vec::with_capacity(n_real);
        for f in &fields[d..] {
            y.push(parse_f64(f, idx + 1)?);
        }
        rows.push(row);
        ys.push(y);
    }
    let n = rows.len();
    let locs = LocationSet::from_rows(&rows)?;
    let y = DMatrix::from_fn(n, n_real, |i, r| ys[i][r]);
    SpatialDataset::new(locs, y)
}

pub fn read_dataset_csv(path: &Path) -> Result<SpatialDataset> {
    dataset_from_csv(&fs::read_to_string(path)?)
}

/// Parses query CSV (header `x1,...,xd`) into an `m x d` matrix.
pub fn queries_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty query file".into()))?;
    let d = header.split(',').count();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields, got {}",
                idx + 1,
                d,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(d);
        for f in fields {
            row.push(parse_f64(f, idx + 1)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("query file has no rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, k| rows[i][k]))
}

pub fn read_queries_csv(path: &Path) -> Result<DMatrix<f64>> {
    queries_from_csv(&fs::read_to_string(path)?)
}

/// Renders predictions as CSV with header `x1,...,xd,mean,variance`.
pub fn predictions_to_csv(queries: &DMatrix<f64>, preds: &[PredictiveDistribution]) -> String {
    let d = queries.ncols();
    let mut out = String::new();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.push("mean".into());
    header.push("variance".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, p) in preds.iter().enumerate() {
        let mut fields: Vec<String> = (0..d).map(|k| format!("{}", queries[(i, k)])).collect();
        fields.push(format!("{}", p.mean));
        fields.push(format!("{}", p.variance));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Renders a segmentation plan as `index,block` CSV.
pub fn plan_to_csv(plan: &SegmentationPlan) -> String {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (b, block) in plan.blocks.iter().enumerate() {
        for &i in block {
            pairs.push((i, b));
        }
    }
    pairs.sort_unstable();
    let mut out = String::from("index,block\n");
    for (i, b) in pairs {
        out.push_str(&format!("{i},{b}\n"));
    }
    out
}

/// Parses `index,block` CSV into block index lists.
pub fn plan_blocks_from_csv(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty plan file".into()))?;
    if header.trim() != "index,block" {
        return Err(Error::Parse(format!("expected header `index,block`, got `{header}`")));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let index: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("line {}: bad index", idx + 1)))?;
        let block: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("line {}: bad block", idx + 1)))?;
        pairs.push((index, block));
    }
    let n_blocks = pairs.iter().map(|&(_, b)| b + 1).max().unwrap_or(0);
    let mut blocks = vec![Vec::new(); n_blocks];
    for (i, b) in pairs {
        blocks[b].push(i);
    }
    Ok(blocks)
}

/// Fitted parameters plus fit diagnostics, serialized as a flat JSON object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub family: KernelFamily,
    pub theta_rho: Vec<f64>,
    pub theta_v: f64,
    pub theta_0: f64,
    pub method: String,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_case: Option<crate::stage2::ActiveCase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curvature_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
}

impl ParamsFile {
    pub fn params(&self) -> Result<CovarianceParams> {
        CovarianceParams::new(self.family, self.theta_rho.clone(), self.theta_v, self.theta_0)
    }
}

pub fn write_params_json(path: &Path, params: &ParamsFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(params)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_params_json(path: &Path) -> Result<ParamsFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Renders per-iteration solver diagnostics as CSV.
pub fn stage1_history_to_csv(history: &[crate::stage1::IterationStats]) -> String {
    let mut out = String::from("iteration,primal_residual,dual_residual,objective\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.iteration, h.primal_residual, h.dual_residual, h.objective
        ));
    }
    out
}
