//! Weighted-l1-regularized log-det estimation of the precision matrix.
//!
//! Solves
//!
//! ```text
//! min  <S, P> - log det(P) + alpha * <G, |P|>   s.t.  a* I <= P <= b* I
//! ```
//!
//! by alternating two proximal maps with a dual update. The spectral box
//! `[a, b]` is tightened from `(a*, b*)` so the smooth part is strongly
//! convex with a Lipschitz gradient, which is what gives the iteration its
//! linear rate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sampler::WeightMatrix;

/// Configuration for one precision solve.
#[derive(Debug, Clone)]
pub struct Stage1Config {
    /// Weight of the l1 penalty.
    pub alpha: f64,
    /// User lower spectral bound (0 when unknown).
    pub a_star: f64,
    /// User upper spectral bound (`f64::INFINITY` when unknown).
    pub b_star: f64,
    /// Initial penalty.
    pub rho0: f64,
    /// Multiplicative penalty growth per iteration (1 keeps it constant).
    pub rho_growth: f64,
    /// Cap on the penalty; unbounded growth freezes the sparse update.
    pub rho_max: f64,
    /// Primal tolerance, scaled by n at run time.
    pub eps_primal: f64,
    /// Dual tolerance, scaled by n at run time.
    pub eps_dual: f64,
    pub max_iters: usize,
}

impl Stage1Config {
    /// Defaults for a problem with `n` locations: `alpha = 1/sqrt(n)`,
    /// `rho0 = n`, growth 1.05, unknown spectral bounds.
    pub fn for_problem_size(n: usize) -> Self {
        let n = n.max(1) as f64;
        Stage1Config {
            alpha: 1.0 / n.sqrt(),
            a_star: 0.0,
            b_star: f64::INFINITY,
            rho0: n,
            rho_growth: 1.05,
            rho_max: 1e6 * n,
            eps_primal: 1e-5,
            eps_dual: 1e-5,
            max_iters: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.a_star >= 0.0) || !(self.b_star >= self.a_star) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= a* <= b*, got ({}, {})",
                self.a_star, self.b_star
            )));
        }
        if !(self.rho0 > 0.0) || !(self.rho_growth >= 1.0) || !(self.rho_max >= self.rho0) {
            return Err(Error::InvalidParameter("invalid penalty schedule".into()));
        }
        if !(self.eps_primal > 0.0) || !(self.eps_dual > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Template for per-block solves: `alpha` and `rho0` default from the block
/// size when left unset.
#[derive(Debug, Clone)]
pub struct Stage1Template {
    pub alpha: Option<f64>,
    pub a_star: f64,
    pub b_star: f64,
    pub rho_growth: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iters: usize,
}

impl Default for Stage1Template {
    fn default() -> Self {
        Stage1Template {
            alpha: None,
            a_star: 0.0,
            b_star: f64::INFINITY,
            rho_growth: 1.05,
            eps_primal: 1e-5,
            eps_dual: 1e-5,
            max_iters: 500,
        }
    }
}

impl Stage1Template {
    pub fn instantiate(&self, n: usize) -> Stage1Config {
        let nf = n.max(1) as f64;
        Stage1Config {
            alpha: self.alpha.unwrap_or(1.0 / nf.sqrt()),
            a_star: self.a_star,
            b_star: self.b_star,
            rho0: nf,
            rho_growth: self.rho_growth,
            rho_max: 1e6 * nf,
            eps_primal: self.eps_primal,
            eps_dual: self.eps_dual,
            max_iters: self.max_iters,
        }
    }
}

/// Per-iteration solver record, exportable as CSV by the harness.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

/// Fitted precision matrix with its effective spectral bounds and diagnostics.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub p_hat: DMatrix<f64>,
    pub a_eff: f64,
    pub b_eff: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    /// False when the solve stopped at `max_iters` with residuals above
    /// tolerance; the estimate is still returned for inspection.
    pub converged: bool,
    pub history: Vec<IterationStats>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Spectral norm of a symmetric matrix.
fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().fold(0.0f64, |acc, &l| acc.max(l.abs()))
}

/// Effective spectral bounds `(a, b)` for the solve, branching on whether the
/// caller supplied nontrivial `a*`, `b*`:
///
/// * both finite and `a* > 0`: passed through;
/// * `a* = 0`, `b*` finite: `a = min(b*, 1/(||S||_2 + alpha ||G||_F))`;
/// * `a* > 0`, `b*` infinite: `b = (n a* / (alpha G_min)) * max(||S||_2 + alpha ||G||_F, 1/a*)`;
/// * both trivial: `a = 1/(||S||_2 + alpha ||G||_F)`, `b = n/(alpha G_min)`.
///
/// The derived bounds bracket the optimizer's spectrum, so tightening the box
/// never changes the solution.
pub fn effective_bounds(
    s: &DMatrix<f64>,
    g: &WeightMatrix,
    alpha: f64,
    a_star: f64,
    b_star: f64,
) -> Result<(f64, f64)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    if !(a_star >= 0.0) || !(b_star >= a_star) {
        return Err(Error::InvalidParameter(format!("need 0 <= a* <= b*, got ({a_star}, {b_star})")));
    }
    if !(g.g_min() > 0.0) {
        return Err(Error::InvalidParameter("G_min must be strictly positive".into()));
    }
    let n = s.nrows() as f64;
    let a_trivial = a_star == 0.0;
    let b_trivial = b_star.is_infinite();
    let (a, b) = match (a_trivial, b_trivial) {
        (false, false) => (a_star, b_star),
        (true, false) => {
            let denom = spectral_norm_sym(s) + alpha * g.frobenius();
            (b_star.min(1.0 / denom), b_star)
        }
        (false, true) => {
            let denom = spectral_norm_sym(s) + alpha * g.frobenius();
            let b = (n * a_star / (alpha * g.g_min())) * denom.max(1.0 / a_star);
            (a_star, b)
        }
        (true, true) => {
            let denom = spectral_norm_sym(s) + alpha * g.frobenius();
            (1.0 / denom, n / (alpha * g.g_min()))
        }
    };
    if !(a > 0.0) || !(b >= a) {
        return Err(Error::InvalidParameter(format!("derived bounds ({a}, {b}) are invalid")));
    }
    Ok((a, b))
}

/// Proximal map of `<S, P> - log det(P)` restricted to the spectral box
/// `[a, b]`, with quadratic weight `rho/2`:
///
/// ```text
/// argmin  <S, P> - log det(P) + (rho/2) ||P - P_bar||_F^2,   a I <= P <= b I.
/// ```
///
/// Eigendecompose `P_bar - S/rho = U diag(lambda_bar) U^T`; each eigenvalue
/// maps to `(lambda_bar + sqrt(lambda_bar^2 + 4/rho)) / 2`, clamped to `[a, b]`.
pub fn prox_psi(p_bar: &DMatrix<f64>, s: &DMatrix<f64>, rho: f64, a: f64, b: f64) -> Result<DMatrix<f64>> {
    prox_psi_with_logdet(p_bar, s, rho, a, b).map(|(p, _)| p)
}

/// Same as [`prox_psi`], also returning `log det` of the output (free from
/// the eigenvalues already in hand).
fn prox_psi_with_logdet(
    p_bar: &DMatrix<f64>,
    s: &DMatrix<f64>,
    rho: f64,
    a: f64,
    b: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be > 0, got {rho}")));
    }
    if !(a > 0.0) || !(b >= a) {
        return Err(Error::InvalidParameter(format!("need 0 < a <= b, got ({a}, {b})")));
    }
    let mut m = p_bar - s / rho;
    symmetrize(&mut m);
    let eig = m.symmetric_eigen();
    let lambda: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&lb| (0.5 * (lb + (lb * lb + 4.0 / rho).sqrt())).clamp(a, b))
        .collect();
    let logdet = lambda.iter().map(|&l| l.ln()).sum();
    let out = scaled_reconstruct(&eig.eigenvectors, &lambda);
    Ok((out, logdet))
}

/// `U diag(lambda) U^T` with the diagonal folded into a column scaling, so
/// the reconstruction costs one matrix product instead of two.
fn scaled_reconstruct(u: &DMatrix<f64>, lambda: &[f64]) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (k, &l) in lambda.iter().enumerate() {
        scaled.column_mut(k).scale_mut(l);
    }
    let mut out = scaled * u.transpose();
    symmetrize(&mut out);
    out
}

/// Proximal map of `alpha <G, |P|>` with nonnegative diagonal: entrywise soft
/// threshold at `(alpha/rho) G_ij` off the diagonal, one-sided shrink with a
/// clamp at zero on the diagonal.
pub fn prox_phi(p_bar: &DMatrix<f64>, g: &WeightMatrix, alpha: f64, rho: f64) -> DMatrix<f64> {
    let n = p_bar.nrows();
    let gm = g.matrix();
    let scale = alpha / rho;
    let mut out = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let t = scale * gm[(i, j)];
            let v = p_bar[(i, j)];
            out[(i, j)] = if i == j {
                (v - t).max(0.0)
            } else {
                v.signum() * (v.abs() - t).max(0.0)
            };
        }
    }
    out
}

/// Objective `<S, P> - log det(P) + alpha <G, |P|>`; errors when `P` is not
/// positive definite.
pub fn stage1_objective(s: &DMatrix<f64>, g: &WeightMatrix, alpha: f64, p: &DMatrix<f64>) -> Result<f64> {
    let eigs = p.clone().symmetric_eigen().eigenvalues;
    if eigs.iter().any(|&l| l <= 0.0) {
        return Err(Error::Factorization("objective evaluated at a non-PD matrix".into()));
    }
    let logdet: f64 = eigs.iter().map(|&l| l.ln()).sum();
    Ok(frob_inner(s, p) - logdet + alpha * weighted_l1(g.matrix(), p))
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

fn weighted_l1(g: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for (w, v) in g.iter().zip(p.iter()) {
        acc += w * v.abs();
    }
    acc
}

/// Runs the splitting iteration to fit the precision matrix.
///
/// Residuals: `r = P - Z` (primal), `s = rho (Z_new - Z_old)` (dual); the
/// solve stops when `||r||_F <= eps_primal * n` and `||s||_F <= eps_dual * n`.
/// The returned matrix is the sparse `Z` iterate, spectrally clipped into
/// `[a, b]` when it drifts outside; clipping is skipped when the spectrum is
/// already feasible so exact zeros survive.
///
/// Under the default growing penalty the iterate stabilizes within a few
/// tens of iterations while the dual residual `rho * ||dZ||` can plateau, so
/// large solves often return flagged (`converged = false`) with a perfectly
/// usable estimate; a constant penalty (`rho_growth = 1`) with a well-chosen
/// `rho0` drives both residuals to tolerance when a certified solution is
/// needed.
pub fn solve_stage1(s: &DMatrix<f64>, g: &WeightMatrix, cfg: &Stage1Config) -> Result<PrecisionEstimate> {
    cfg.validate()?;
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch("S must be square".into()));
    }
    if g.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "G is {} x {} but S is {} x {}",
            g.n(),
            g.n(),
            n,
            n
        )));
    }
    let (a, b) = effective_bounds(s, g, cfg.alpha, cfg.a_star, cfg.b_star)?;

    let tol_pri = cfg.eps_primal * n as f64;
    let tol_dual = cfg.eps_dual * n as f64;

    // Scale-aware diagonal warm start.
    let mut z = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        z[(i, i)] = (1.0 / (s[(i, i)] + cfg.alpha * g.matrix()[(i, i)])).clamp(a, b);
    }
    let mut w = DMatrix::<f64>::zeros(n, n);
    let mut rho = cfg.rho0;

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;

    for iter in 0..cfg.max_iters {
        let p_in = &z - &w / rho;
        let (p, p_logdet) = prox_psi_with_logdet(&p_in, s, rho, a, b)?;
        let z_in = &p + &w / rho;
        let mut z_new = prox_phi(&z_in, g, cfg.alpha, rho);
        symmetrize(&mut z_new);

        let r = &p - &z_new;
        let s_res = (&z_new - &z) * rho;
        w += &r * rho;
        z = z_new;

        primal_residual = r.norm();
        dual_residual = s_res.norm();
        iterations = iter + 1;

        let objective = frob_inner(s, &p) - p_logdet + cfg.alpha * weighted_l1(g.matrix(), &z);
        history.push(IterationStats {
            iteration: iterations,
            primal_residual,
            dual_residual,
            objective,
        });

        if primal_residual <= tol_pri && dual_residual <= tol_dual {
            converged = true;
            break;
        }
        rho = (rho * cfg.rho_growth).min(cfg.rho_max);
    }

    let p_hat = clip_spectrum(&z, a, b);
    let objective = stage1_objective(s, g, cfg.alpha, &p_hat)?;

    Ok(PrecisionEstimate {
        p_hat,
        a_eff: a,
        b_eff: b,
        iterations,
        primal_residual,
        dual_residual,
        objective,
        converged,
        history,
    })
}


/// Projects a symmetric matrix onto the spectral box `[a, b]`. The input is
/// returned untouched (zeros intact) when its spectrum is already inside.
fn clip_spectrum(z: &DMatrix<f64>, a: f64, b: f64) -> DMatrix<f64> {
    let slack = 1e-12 * b.max(1.0);
    let eigs = z.clone().symmetric_eigen();
    let inside = eigs
        .eigenvalues
        .iter()
        .all(|&l| l >= a - slack && l <= b + slack);
    if inside {
        return z.clone();
    }
    let clamped: Vec<f64> = eigs.eigenvalues.iter().map(|&l| l.clamp(a, b)).collect();
    scaled_reconstruct(&eigs.eigenvectors, &clamped)
}

/// Subgradient-optimality report for a fitted precision matrix, bounds
/// inactive case. For nonzero entries the stationarity residual is
/// `S_ij - (P^-1)_ij + alpha G_ij sign(P_ij)`; for zero entries the residual
/// is the amount by which `|S_ij - (P^-1)_ij|` exceeds `alpha G_ij`.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub max_violation_nonzero: f64,
    pub max_violation_zero: f64,
}

pub fn kkt_certificate(
    s: &DMatrix<f64>,
    g: &WeightMatrix,
    alpha: f64,
    p_hat: &DMatrix<f64>,
) -> Result<KktReport> {
    let n = p_hat.nrows();
    let chol = p_hat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("estimate is not positive definite".into()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    let gm = g.matrix();
    let mut worst_nonzero = 0.0f64;
    let mut worst_zero = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let grad = s[(i, j)] - inv[(i, j)];
            if p_hat[(i, j)] != 0.0 {
                let v = (grad + alpha * gm[(i, j)] * p_hat[(i, j)].signum()).abs();
                worst_nonzero = worst_nonzero.max(v);
            } else if i != j {
                worst_zero = worst_zero.max(grad.abs() - alpha * gm[(i, j)]);
            }
        }
    }
    Ok(KktReport {
        max_violation_nonzero: worst_nonzero,
        max_violation_zero: worst_zero.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn weight_1x1(v: f64) -> WeightMatrix {
        WeightMatrix::from_matrix(DMatrix::from_element(1, 1, v)).unwrap()
    }

    #[test]
    fn bounds_pass_through_when_nontrivial() {
        let s = dmatrix![2.0];
        let g = weight_1x1(1.0);
        let (a, b) = effective_bounds(&s, &g, 1.0, 0.5, 2.0).unwrap();
        assert_eq!((a, b), (0.5, 2.0));
    }

    #[test]
    fn bounds_scalar_trivial_branch() {
        // ||S||_2 = 2, ||G||_F = 1, G_min = 1, alpha = 1, n = 1
        let s = dmatrix![2.0];
        let g = weight_1x1(1.0);
        let (a, b) = effective_bounds(&s, &g, 1.0, 0.0, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(a, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bounds_half_trivial_branches() {
        let s = dmatrix![2.0];
        let g = weight_1x1(1.0);
        // a* = 0, b* finite: a = min(b*, 1/3)
        let (a, b) = effective_bounds(&s, &g, 1.0, 0.0, 0.25).unwrap();
        assert_eq!((a, b), (0.25, 0.25));
        let (a, b) = effective_bounds(&s, &g, 1.0, 0.0, 10.0).unwrap();
        assert_abs_diff_eq!(a, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(b, 10.0);
        // a* > 0, b* infinite: b = (n a* / (alpha G_min)) max(3, 1/a*)
        let (a, b) = effective_bounds(&s, &g, 1.0, 0.1, f64::INFINITY).unwrap();
        assert_eq!(a, 0.1);
        assert_abs_diff_eq!(b, 0.1 * 10.0, epsilon = 1e-15);
        let (a, b) = effective_bounds(&s, &g, 1.0, 0.5, f64::INFINITY).unwrap();
        assert_eq!(a, 0.5);
        assert_abs_diff_eq!(b, 0.5 * 3.0, epsilon = 1e-15);
    }

    #[test]
    fn prox_psi_identity_no_data_is_golden_ratio() {
        let p_bar = DMatrix::<f64>::identity(3, 3);
        let s = DMatrix::<f64>::zeros(3, 3);
        let out = prox_psi(&p_bar, &s, 1.0, 0.1, 10.0).unwrap();
        let phi = 0.5 * (1.0 + 5.0f64.sqrt());
        for i in 0..3 {
            assert_abs_diff_eq!(out[(i, i)], phi, epsilon = 1e-12);
            for j in 0..3 {
                if i != j {
                    assert_abs_diff_eq!(out[(i, j)], 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn prox_psi_clamps_at_upper_bound() {
        let p_bar = DMatrix::<f64>::identity(3, 3);
        let s = DMatrix::<f64>::zeros(3, 3);
        let out = prox_psi(&p_bar, &s, 1.0, 0.1, 1.2).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(out[(i, i)], 1.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn prox_phi_soft_threshold_cases() {
        let g = WeightMatrix::from_matrix(DMatrix::from_element(2, 2, 2.0)).unwrap();
        // alpha/rho = 1 -> threshold = 2 everywhere
        let p_bar = dmatrix![
            -0.5, 5.0;
            5.0, 7.0
        ];
        let out = prox_phi(&p_bar, &g, 1.0, 1.0);
        assert_eq!(out[(0, 1)], 3.0);
        assert_eq!(out[(0, 0)], 0.0); // diagonal clamp at zero
        assert_eq!(out[(1, 1)], 5.0);

        let p_neg = dmatrix![
            1.0, -1.0;
            -1.0, 1.0
        ];
        let shrunk = prox_phi(&p_neg, &g, 1.0, 1.0);
        assert_eq!(shrunk[(0, 1)], 0.0);
    }

    #[test]
    fn scalar_solve_matches_stationarity() {
        // n = 1: s - 1/p + alpha*g = 0 on p > 0 -> p = 1/(s + alpha*g)
        let s = dmatrix![2.0];
        let g = weight_1x1(1.0);
        let mut cfg = Stage1Config::for_problem_size(1);
        cfg.alpha = 1.0;
        let est = solve_stage1(&s, &g, &cfg).unwrap();
        assert!(est.converged);
        assert_abs_diff_eq!(est.p_hat[(0, 0)], 1.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn vanishing_alpha_recovers_inverse_sample_covariance() {
        let s = dmatrix![
            2.0, 0.3, 0.1;
            0.3, 1.5, 0.2;
            0.1, 0.2, 1.8
        ];
        let g = WeightMatrix::from_matrix(DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 2.0 })).unwrap();
        let mut cfg = Stage1Config::for_problem_size(3);
        cfg.alpha = 1e-9;
        cfg.eps_primal = 1e-9;
        cfg.eps_dual = 1e-9;
        cfg.max_iters = 2000;
        let est = solve_stage1(&s, &g, &cfg).unwrap();
        let inv = s.try_inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(est.p_hat[(i, j)], inv[(i, j)], epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn solution_respects_effective_bounds() {
        let s = dmatrix![
            1.0, 0.6;
            0.6, 1.4
        ];
        let g = WeightMatrix::from_matrix(dmatrix![
            0.5, 0.5;
            0.5, 0.5
        ])
        .unwrap();
        let mut cfg = Stage1Config::for_problem_size(2);
        cfg.alpha = 0.4;
        let est = solve_stage1(&s, &g, &cfg).unwrap();
        let eigs = est.p_hat.clone().symmetric_eigen().eigenvalues;
        assert!(eigs.min() >= est.a_eff - 1e-8);
        assert!(eigs.max() <= est.b_eff + 1e-8);
    }

    #[test]
    fn flagged_when_iteration_budget_too_small() {
        let s = dmatrix![
            2.0, 0.3;
            0.3, 1.5
        ];
        let g = WeightMatrix::from_matrix(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let mut cfg = Stage1Config::for_problem_size(2);
        cfg.max_iters = 1;
        cfg.eps_primal = 1e-12;
        cfg.eps_dual = 1e-12;
        let est = solve_stage1(&s, &g, &cfg).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 1);
    }

    #[test]
    fn history_is_recorded_per_iteration() {
        let s = dmatrix![
            2.0, 0.3;
            0.3, 1.5
        ];
        let g = WeightMatrix::from_matrix(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let cfg = Stage1Config::for_problem_size(2);
        let est = solve_stage1(&s, &g, &cfg).unwrap();
        assert_eq!(est.history.len(), est.iterations);
        assert_eq!(est.history.last().unwrap().primal_residual, est.primal_residual);
    }
}
