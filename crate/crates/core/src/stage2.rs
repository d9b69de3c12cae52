//! Least-squares fit of parametric covariance parameters to the inverted
//! Stage-I precision estimate.
//!
//! For fixed correlation parameters the variance/nugget pair has a closed
//! form (three cases keyed on inner products of the vectorized correlation,
//! identity-indicator, and target matrices); the remaining search over the
//! correlation parameters is one-dimensional for isotropic families and a
//! multi-start simplex search for the anisotropic family.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{correlation_unchecked, CovarianceParams, KernelFamily, LocationSet};
use crate::simplex::{golden_section, nelder_mead};
use crate::stage1::PrecisionEstimate;
use crate::stream::keyed_rng;

/// Inner products of the vectorized (length n^2) correlation vector `r`,
/// identity indicator `d`, and fit target `c`. The long vectors themselves
/// are never materialized; every fit quantity reduces to these scalars
/// (`d^T d = d^T r = n` holds by construction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongVectors {
    /// `r^T c`
    pub rc: f64,
    /// `d^T c`
    pub dc: f64,
    /// `||r||^2`
    pub rr: f64,
    /// `||c||^2`
    pub cc: f64,
    /// `d^T d`
    pub n: usize,
}

impl LongVectors {
    /// Accumulates the inner products for the target matrix `c_hat` against
    /// the correlation vector at `theta_rho`, streaming over index pairs.
    pub fn from_matrix(
        c_hat: &DMatrix<f64>,
        locs: &LocationSet,
        family: KernelFamily,
        theta_rho: &[f64],
    ) -> Result<Self> {
        let n = locs.n();
        if c_hat.nrows() != n || c_hat.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "target matrix is {} x {} for {} locations",
                c_hat.nrows(),
                c_hat.ncols(),
                n
            )));
        }
        let q = family.range_dim(locs.dim());
        if theta_rho.len() != q || theta_rho.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "theta_rho must be {q} strictly positive components, got {theta_rho:?}"
            )));
        }
        let d = locs.dim();
        let x = locs.matrix();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|k| x[(i, k)]).collect()).collect();
        let (mut rc, mut dc, mut rr, mut cc) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let cii = c_hat[(i, i)];
            rr += 1.0;
            rc += cii;
            dc += cii;
            cc += cii * cii;
            for j in (i + 1)..n {
                let r = correlation_unchecked(family, &rows[i], &rows[j], theta_rho);
                let cij = c_hat[(i, j)];
                rr += 2.0 * r * r;
                rc += 2.0 * r * cij;
                cc += 2.0 * cij * cij;
            }
        }
        Ok(LongVectors { rc, dc, rr, cc, n })
    }

    /// Builds the inner products from explicit row-major length-`n^2`
    /// vectors; the identity indicator is implied by the index pattern.
    pub fn from_vectors(c: &[f64], r: &[f64], n: usize) -> Result<Self> {
        if c.len() != n * n || r.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got {} and {}",
                n * n,
                c.len(),
                r.len()
            )));
        }
        let (mut rc, mut dc, mut rr, mut cc) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                rc += r[idx] * c[idx];
                rr += r[idx] * r[idx];
                cc += c[idx] * c[idx];
                if i == j {
                    dc += c[idx];
                }
            }
        }
        Ok(LongVectors { rc, dc, rr, cc, n })
    }

    /// Inner products of the concatenation of per-block long vectors; the
    /// closed-form inner solution applies with `n` replaced by the total.
    pub fn concat(parts: &[LongVectors]) -> LongVectors {
        let mut out = LongVectors { rc: 0.0, dc: 0.0, rr: 0.0, cc: 0.0, n: 0 };
        for p in parts {
            out.rc += p.rc;
            out.dc += p.dc;
            out.rr += p.rr;
            out.cc += p.cc;
            out.n += p.n;
        }
        out
    }

    /// `(1/2) ||theta_v r + theta_0 d - c||^2` expanded in the inner
    /// products. Subject to cancellation when the residual is tiny relative
    /// to the norms involved; [`block_residual`] evaluates the same quantity
    /// without cancellation.
    pub fn residual_half_norm2(&self, theta_v: f64, theta_0: f64) -> f64 {
        let n = self.n as f64;
        let v = theta_v * theta_v * self.rr
            + theta_0 * theta_0 * n
            + 2.0 * theta_v * theta_0 * n
            - 2.0 * theta_v * self.rc
            - 2.0 * theta_0 * self.dc
            + self.cc;
        (0.5 * v).max(0.0)
    }
}

/// `(1/2) sum_ij (theta_v r_ij + theta_0 delta_ij - c_ij)^2` for one block,
/// accumulated directly over index pairs. Exact for near-zero residuals,
/// where the expanded inner-product form cancels catastrophically.
pub fn block_residual(
    c_hat: &DMatrix<f64>,
    locs: &LocationSet,
    family: KernelFamily,
    theta_rho: &[f64],
    theta_v: f64,
    theta_0: f64,
) -> f64 {
    let n = locs.n();
    let d = locs.dim();
    let x = locs.matrix();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|k| x[(i, k)]).collect()).collect();
    let mut acc = 0.0;
    for i in 0..n {
        let e = theta_v + theta_0 - c_hat[(i, i)];
        acc += e * e;
        for j in (i + 1)..n {
            let r = correlation_unchecked(family, &rows[i], &rows[j], theta_rho);
            let e = theta_v * r - c_hat[(i, j)];
            acc += 2.0 * e * e;
        }
    }
    0.5 * acc
}

/// Which branch of the closed-form inner solution was active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActiveCase {
    NuggetOnly,
    Interior,
    VarianceOnly,
}

/// Result of a covariance-parameter fit.
#[derive(Debug, Clone)]
pub struct Stage2Result {
    pub theta_hat: CovarianceParams,
    /// Final objective, recomputed exactly at `theta_hat`.
    pub objective: f64,
    pub active_case: ActiveCase,
    /// Finite-difference Hessian of the profiled objective is positive
    /// definite at the fitted correlation parameters.
    pub curvature_ok: bool,
    /// False when no search start improved on the best coarse probe.
    pub search_ok: bool,
}

/// Inverts a fitted precision matrix through its Cholesky factorization.
pub fn invert_precision(est: &PrecisionEstimate) -> Result<DMatrix<f64>> {
    invert_spd(&est.p_hat)
}

pub(crate) fn invert_spd(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("precision matrix is not positive definite".into()))?;
    let mut inv = chol.inverse();
    let n = inv.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

/// Closed-form minimizer of `(1/2)||theta_v r + theta_0 d - c||^2` over
/// `theta_v, theta_0 >= 0`, keyed on the ordering of `r^T c` against `d^T c`
/// and `d^T c ||r||^2 / n`. Boundary equalities route to the adjacent
/// closed forms, which coincide there.
///
/// The boundary branches clamp their coordinate at zero: the derivation
/// assumes the target is the inverse of a positive definite matrix (so
/// `d^T c > 0`), and the clamps keep the optimality conditions valid when
/// both inner products are negative on arbitrary inputs. The interior branch
/// only fires with `d^T c > 0` and needs no clamp.
pub fn inner_solution(lv: &LongVectors) -> (f64, f64, ActiveCase) {
    let n = lv.n as f64;
    let (rc, dc, rr) = (lv.rc, lv.dc, lv.rr);
    if rc <= dc {
        return (0.0, dc.max(0.0) / n, ActiveCase::NuggetOnly);
    }
    if rc >= dc * rr / n {
        return ((rc / rr).max(0.0), 0.0, ActiveCase::VarianceOnly);
    }
    let denom = rr - n;
    let theta_v = (rc - dc) / denom;
    let theta_0 = (dc * rr / n - rc) / denom;
    (theta_v, theta_0, ActiveCase::Interior)
}

/// No-nugget variant: `theta_v = max(0, r^T c / ||r||^2)`.
pub fn inner_solution_no_nugget(lv: &LongVectors) -> f64 {
    (lv.rc / lv.rr).max(0.0)
}

fn inner_for(lv: &LongVectors, nugget_enabled: bool) -> (f64, f64, ActiveCase) {
    if nugget_enabled {
        inner_solution(lv)
    } else {
        let tv = inner_solution_no_nugget(lv);
        let case = if tv > 0.0 { ActiveCase::VarianceOnly } else { ActiveCase::NuggetOnly };
        (tv, 0.0, case)
    }
}

/// Joint profiled objective over several blocks: the closed-form inner solve
/// on the concatenated inner products, then a direct residual pass.
fn blocks_objective(
    blocks: &[(&DMatrix<f64>, &LocationSet)],
    family: KernelFamily,
    theta_rho: &[f64],
    nugget_enabled: bool,
) -> Result<(f64, f64, f64, ActiveCase)> {
    let mut parts = Vec::with_capacity(blocks.len());
    for (c_hat, locs) in blocks {
        parts.push(LongVectors::from_matrix(c_hat, locs, family, theta_rho)?);
    }
    let lv = LongVectors::concat(&parts);
    let (tv, t0, case) = inner_for(&lv, nugget_enabled);
    let mut f = 0.0;
    for (c_hat, locs) in blocks {
        f += block_residual(c_hat, locs, family, theta_rho, tv, t0);
    }
    Ok((f, tv, t0, case))
}

/// Profiled Stage-II objective `f(theta_rho; c_hat)`: the residual after the
/// closed-form inner solve at the given correlation parameters.
pub fn outer_objective(
    theta_rho: &[f64],
    c_hat: &DMatrix<f64>,
    locs: &LocationSet,
    family: KernelFamily,
    nugget_enabled: bool,
) -> Result<f64> {
    Ok(blocks_objective(&[(c_hat, locs)], family, theta_rho, nugget_enabled)?.0)
}

/// Options for the outer search.
#[derive(Debug, Clone)]
pub struct Stage2Options {
    /// Bracket tolerance for the search; defaults to `1e-6 * D_max`.
    pub eps: Option<f64>,
    /// Number of simplex starts for the anisotropic search.
    pub n_starts: usize,
    /// Seed for the deterministic start draws.
    pub seed: u64,
}

impl Default for Stage2Options {
    fn default() -> Self {
        Stage2Options { eps: None, n_starts: 8, seed: 0 }
    }
}

/// Fits `(theta_rho, theta_v, theta_0)` to a single target matrix.
pub fn fit_stage2(
    c_hat: &DMatrix<f64>,
    locs: &LocationSet,
    family: KernelFamily,
    nugget_enabled: bool,
    opts: &Stage2Options,
) -> Result<Stage2Result> {
    fit_stage2_blocks(&[(c_hat, locs)], family, nugget_enabled, opts)
}

/// Fits one parameter vector to several blocks jointly by minimizing the sum
/// of per-block residuals; with a single block this is exactly `fit_stage2`.
pub fn fit_stage2_blocks(
    blocks: &[(&DMatrix<f64>, &LocationSet)],
    family: KernelFamily,
    nugget_enabled: bool,
    opts: &Stage2Options,
) -> Result<Stage2Result> {
    if blocks.is_empty() {
        return Err(Error::InvalidParameter("need at least one block".into()));
    }
    let dim = blocks[0].1.dim();
    if blocks.iter().any(|(_, l)| l.dim() != dim) {
        return Err(Error::DimensionMismatch("blocks have mixed location dimensions".into()));
    }
    let q = family.range_dim(dim);

    let d_max = blocks
        .iter()
        .map(|(_, l)| l.diameter())
        .fold(0.0f64, f64::max);
    if !(d_max > 0.0) {
        return Err(Error::TooFewLocations { needed: 2, got: 1 });
    }
    let theta_lo = 1e-6 * d_max;
    let eps = opts.eps.unwrap_or(1e-6 * d_max);

    let objective = |theta_rho: &[f64]| -> f64 {
        match blocks_objective(blocks, family, theta_rho, nugget_enabled) {
            Ok((f, _, _, _)) => f,
            Err(_) => f64::INFINITY,
        }
    };

    let (theta_rho, search_ok) = if q == 1 {
        (vec![search_isotropic(&objective, theta_lo, d_max, eps)], true)
    } else {
        search_anisotropic(&objective, q, theta_lo, d_max, eps, opts)
    };

    // Closed-form variance and nugget at the located correlation parameters.
    let (obj, theta_v, theta_0, active_case) = blocks_objective(blocks, family, &theta_rho, nugget_enabled)?;

    let curvature_ok = hessian_is_pd(&objective, &theta_rho);

    Ok(Stage2Result {
        theta_hat: CovarianceParams { family, theta_rho, theta_v, theta_0 },
        objective: obj,
        active_case,
        curvature_ok,
        search_ok,
    })
}

/// Coarse log-spaced scan to bracket the minimizer, then golden-section
/// refinement inside the bracket.
fn search_isotropic<F: Fn(&[f64]) -> f64>(objective: &F, lo: f64, hi: f64, eps: f64) -> f64 {
    const COARSE: usize = 64;
    let ratio = (hi / lo).powf(1.0 / (COARSE - 1) as f64);
    let mut grid = Vec::with_capacity(COARSE);
    let mut t = lo;
    for _ in 0..COARSE {
        grid.push(t.min(hi));
        t *= ratio;
    }
    let values: Vec<f64> = grid.iter().map(|&t| objective(&[t])).collect();
    let mut best = 0;
    for i in 1..COARSE {
        if values[i] < values[best] {
            best = i;
        }
    }
    let bracket_lo = if best == 0 { lo } else { grid[best - 1] };
    let bracket_hi = if best == COARSE - 1 { hi } else { grid[best + 1] };
    let (x, fx) = golden_section(|t| objective(&[t]), bracket_lo, bracket_hi, eps);
    if fx <= values[best] {
        x
    } else {
        grid[best]
    }
}

/// Multi-start simplex search in log coordinates, with starts drawn
/// log-uniformly from `[lo, hi]^q`. The best start wins; ties break toward
/// the lowest start index. A final probe pass guarantees the returned point
/// beats all axis probes at resolution `eps`.
fn search_anisotropic<F: Fn(&[f64]) -> f64>(
    objective: &F,
    q: usize,
    lo: f64,
    hi: f64,
    eps: f64,
    opts: &Stage2Options,
) -> (Vec<f64>, bool) {
    let mut rng = keyed_rng(opts.seed, 0, "stage2-starts");
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.n_starts.max(1));
    // Center of the box is always probed first.
    starts.push(vec![0.5 * (log_lo + log_hi); q]);
    for _ in 1..opts.n_starts.max(1) {
        starts.push((0..q).map(|_| rng.random_range(log_lo..log_hi)).collect());
    }

    let log_objective = |u: &[f64]| {
        let theta: Vec<f64> = u.iter().map(|&v| v.exp()).collect();
        objective(&theta)
    };

    let baseline = log_objective(&starts[0]);
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    for (idx, start) in starts.iter().enumerate() {
        let (u, v) = nelder_mead(&log_objective, start, &vec![0.5; q], 400 * q, 1e-12);
        let better = match &best {
            None => true,
            Some((_, bv, _)) => v < *bv,
        };
        if better {
            best = Some((u, v, idx));
        }
    }
    let (mut u, mut v, _) = best.unwrap();
    let search_ok = v <= baseline;

    // Axis probes at +-eps and +-2eps around the candidate (in the original
    // scale); restart from any strictly better probe.
    for _round in 0..4 {
        let theta: Vec<f64> = u.iter().map(|&x| x.exp()).collect();
        let mut improved = false;
        for axis in 0..q {
            for step in [-2.0, -1.0, 1.0, 2.0] {
                let mut probe = theta.clone();
                probe[axis] = (probe[axis] + step * eps).max(lo * 1e-3);
                let pv = objective(&probe);
                if pv + 1e-15 < v {
                    u = probe.iter().map(|&t| t.ln()).collect();
                    let (u2, v2) = nelder_mead(&log_objective, &u, &vec![0.05; q], 400 * q, 1e-12);
                    u = u2;
                    v = v2;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    (u.iter().map(|&x| x.exp()).collect(), search_ok)
}

/// Central-difference Hessian of the profiled objective at `theta_rho`
/// (step `1e-4 * theta_rho_i` per coordinate); positive definite when all
/// eigenvalues are strictly positive.
fn hessian_is_pd<F: Fn(&[f64]) -> f64>(objective: &F, theta_rho: &[f64]) -> bool {
    let q = theta_rho.len();
    let h: Vec<f64> = theta_rho.iter().map(|&t| 1e-4 * t).collect();
    let f0 = objective(theta_rho);
    let mut hess = DMatrix::<f64>::zeros(q, q);
    for i in 0..q {
        let mut up = theta_rho.to_vec();
        up[i] += h[i];
        let mut dn = theta_rho.to_vec();
        dn[i] -= h[i];
        hess[(i, i)] = (objective(&up) - 2.0 * f0 + objective(&dn)) / (h[i] * h[i]);
    }
    for i in 0..q {
        for j in (i + 1)..q {
            let mut pp = theta_rho.to_vec();
            pp[i] += h[i];
            pp[j] += h[j];
            let mut pm = theta_rho.to_vec();
            pm[i] += h[i];
            pm[j] -= h[j];
            let mut mp = theta_rho.to_vec();
            mp[i] -= h[i];
            mp[j] += h[j];
            let mut mm = theta_rho.to_vec();
            mm[i] -= h[i];
            mm[j] -= h[j];
            let v = (objective(&pp) - objective(&pm) - objective(&mp) + objective(&mm)) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if q == 1 {
        return hess[(0, 0)] > 0.0;
    }
    hess.symmetric_eigenvalues().iter().all(|&l| l > 0.0)
}

/// Smallest singular value of the stacked `[r, dr/dtheta_1, ..., dr/dtheta_q]`
/// long vectors at `theta_rho`, computed by finite differences. Linear
/// independence of this family is the curvature condition for the profiled
/// objective at a noiseless minimizer.
pub fn correlation_jacobian_min_sv(
    locs: &LocationSet,
    family: KernelFamily,
    theta_rho: &[f64],
) -> Result<f64> {
    let n = locs.n();
    let q = family.range_dim(locs.dim());
    if theta_rho.len() != q {
        return Err(Error::DimensionMismatch("theta_rho length mismatch".into()));
    }
    let d = locs.dim();
    let x = locs.matrix();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|k| x[(i, k)]).collect()).collect();
    let vec_r = |theta: &[f64]| -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(n * n);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = if i == j {
                    1.0
                } else {
                    correlation_unchecked(family, &rows[i], &rows[j], theta)
                };
            }
        }
        out
    };
    let mut stacked = DMatrix::<f64>::zeros(n * n, q + 1);
    stacked.set_column(0, &vec_r(theta_rho));
    for k in 0..q {
        let h = 1e-6 * theta_rho[k];
        let mut up = theta_rho.to_vec();
        up[k] += h;
        let mut dn = theta_rho.to_vec();
        dn[k] -= h;
        let col = (vec_r(&up) - vec_r(&dn)) / (2.0 * h);
        stacked.set_column(k + 1, &col);
    }
    let svd = stacked.svd(false, false);
    Ok(svd.singular_values.min())
}
