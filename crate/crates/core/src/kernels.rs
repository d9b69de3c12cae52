//! Covariance-function families and construction of correlation/covariance
//! matrices over a set of spatial locations.
//!
//! A covariance function is `c(x, x') = theta_v * r(x, x', theta_rho)` plus a
//! nugget `theta_0` on the diagonal, where `r` is one of the correlation
//! families below. The squared-exponential family uses the convention
//! `exp(-||x - x'||^2 / theta_rho^2)` (no factor 1/2 in the exponent).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported correlation-function families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `exp(-||x - x'||^2 / theta_rho^2)`
    #[serde(rename = "se")]
    SquaredExponential,
    /// `(1 + sqrt(3) h / theta_rho) exp(-sqrt(3) h / theta_rho)` with `h = ||x - x'||`
    #[serde(rename = "matern32")]
    Matern32,
    /// `exp(-||x - x'|| / theta_rho)`
    #[serde(rename = "exponential")]
    Exponential,
    /// `exp(-(x - x')^T diag(theta_rho) (x - x'))`, one weight per axis
    #[serde(rename = "aniso-exp")]
    AnisotropicExponentialDiag,
}

impl KernelFamily {
    /// Number of correlation parameters for locations of dimension `d`:
    /// 1 for the isotropic families, `d` for the anisotropic one.
    pub fn range_dim(&self, d: usize) -> usize {
        match self {
            KernelFamily::AnisotropicExponentialDiag => d,
            _ => 1,
        }
    }

    /// Lowercase token used by the CLI and config files.
    pub fn token(&self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Exponential => "exponential",
            KernelFamily::AnisotropicExponentialDiag => "aniso-exp",
        }
    }

    pub fn parse_token(s: &str) -> Result<Self> {
        match s {
            "se" => Ok(KernelFamily::SquaredExponential),
            "matern32" => Ok(KernelFamily::Matern32),
            "exponential" => Ok(KernelFamily::Exponential),
            "aniso-exp" => Ok(KernelFamily::AnisotropicExponentialDiag),
            other => Err(Error::Parse(format!("unknown kernel family `{other}`"))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Covariance parameters `(theta_rho, theta_v, theta_0)` for a given family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    pub family: KernelFamily,
    /// Correlation parameters, all strictly positive; length 1 for isotropic
    /// families, `d` for the anisotropic family.
    pub theta_rho: Vec<f64>,
    /// Process variance, `>= 0`.
    pub theta_v: f64,
    /// Nugget variance, `>= 0`.
    pub theta_0: f64,
}

impl CovarianceParams {
    pub fn new(family: KernelFamily, theta_rho: Vec<f64>, theta_v: f64, theta_0: f64) -> Result<Self> {
        let p = CovarianceParams { family, theta_rho, theta_v, theta_0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_rho.is_empty() {
            return Err(Error::InvalidParameter("theta_rho must be nonempty".into()));
        }
        if self.theta_rho.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "theta_rho components must be strictly positive, got {:?}",
                self.theta_rho
            )));
        }
        if !(self.theta_v >= 0.0) || !self.theta_v.is_finite() {
            return Err(Error::InvalidParameter(format!("theta_v must be >= 0, got {}", self.theta_v)));
        }
        if !(self.theta_0 >= 0.0) || !self.theta_0.is_finite() {
            return Err(Error::InvalidParameter(format!("theta_0 must be >= 0, got {}", self.theta_0)));
        }
        Ok(())
    }

    /// Checks that `theta_rho` has the right length for locations of dimension `d`.
    pub fn validate_for_dim(&self, d: usize) -> Result<()> {
        self.validate()?;
        let q = self.family.range_dim(d);
        if self.theta_rho.len() != q {
            return Err(Error::DimensionMismatch(format!(
                "family {} over dimension {} needs {} correlation parameters, got {}",
                self.family,
                d,
                q,
                self.theta_rho.len()
            )));
        }
        Ok(())
    }
}

/// A set of `n` distinct locations in `R^d`, stored as the rows of an `n x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    x: DMatrix<f64>,
}

impl LocationSet {
    /// Builds a location set, rejecting exact duplicate rows.
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(Error::InvalidParameter("locations must be a nonempty n x d matrix".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (0..x.ncols()).all(|k| x[(i, k)] == x[(j, k)]) {
                    return Err(Error::DuplicateLocations { i, j });
                }
            }
        }
        Ok(LocationSet { x })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter("locations must be nonempty".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("location rows have unequal lengths".into()));
        }
        LocationSet::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|k| self.x[(i, k)]).collect()
    }

    /// Euclidean distance between rows `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.dim() {
            let d = self.x[(i, k)] - self.x[(j, k)];
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Largest pairwise distance in the set.
    pub fn diameter(&self) -> f64 {
        let n = self.n();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.distance(i, j));
            }
        }
        best
    }

    /// The subset of rows selected by `idx`, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let d = self.dim();
        let m = DMatrix::from_fn(idx.len(), d, |i, k| self.x[(idx[i], k)]);
        LocationSet::new(m)
    }
}

fn euclidean(x: &[f64], x2: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Evaluates the correlation `r(x, x', theta_rho)` for the given family.
///
/// Returns exactly 1 when `x == x2`.
pub fn correlation(family: KernelFamily, x: &[f64], x2: &[f64], theta_rho: &[f64]) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch(format!(
            "location lengths differ: {} vs {}",
            x.len(),
            x2.len()
        )));
    }
    let q = family.range_dim(x.len());
    if theta_rho.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "theta_rho has length {}, expected {}",
            theta_rho.len(),
            q
        )));
    }
    if theta_rho.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "theta_rho components must be strictly positive, got {theta_rho:?}"
        )));
    }
    if x == x2 {
        return Ok(1.0);
    }
    Ok(correlation_unchecked(family, x, x2, theta_rho))
}

/// Correlation without the validation pass; used on hot matrix-assembly paths
/// after the inputs have been checked once.
pub(crate) fn correlation_unchecked(family: KernelFamily, x: &[f64], x2: &[f64], theta_rho: &[f64]) -> f64 {
    match family {
        KernelFamily::SquaredExponential => {
            let h = euclidean(x, x2);
            (-(h * h) / (theta_rho[0] * theta_rho[0])).exp()
        }
        KernelFamily::Matern32 => {
            let h = euclidean(x, x2);
            let t = 3.0_f64.sqrt() * h / theta_rho[0];
            (1.0 + t) * (-t).exp()
        }
        KernelFamily::Exponential => {
            let h = euclidean(x, x2);
            (-h / theta_rho[0]).exp()
        }
        KernelFamily::AnisotropicExponentialDiag => {
            let mut q = 0.0;
            for k in 0..x.len() {
                let d = x[k] - x2[k];
                q += theta_rho[k] * d * d;
            }
            (-q).exp()
        }
    }
}

/// Builds the `n x n` covariance matrix `C(theta)` with entries
/// `theta_v * r(x_i, x_j, theta_rho) + theta_0 * delta(i = j)`.
///
/// Both triangles are filled from a single correlation evaluation, so the
/// output is exactly symmetric.
pub fn covariance_matrix(locs: &LocationSet, params: &CovarianceParams) -> Result<DMatrix<f64>> {
    params.validate_for_dim(locs.dim())?;
    let n = locs.n();
    let mut c = DMatrix::<f64>::zeros(n, n);
    let diag = params.theta_v + params.theta_0;
    let x = locs.matrix();
    let d = locs.dim();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|k| x[(i, k)]).collect()).collect();
    for i in 0..n {
        c[(i, i)] = diag;
        for j in (i + 1)..n {
            let r = correlation_unchecked(params.family, &rows[i], &rows[j], &params.theta_rho);
            let v = params.theta_v * r;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Builds the correlation matrix (unit variance, no nugget) for `locs`.
pub fn correlation_matrix(locs: &LocationSet, family: KernelFamily, theta_rho: &[f64]) -> Result<DMatrix<f64>> {
    let unit = CovarianceParams::new(family, theta_rho.to_vec(), 1.0, 0.0)?;
    covariance_matrix(locs, &unit)
}
