//! Subgaussian row distributions with parameters `(alpha, sigma)`:
//! `E|<phi, z>| >= alpha` and `P(|<phi, z>| >= t) <= 2 exp(-t^2 / (2 sigma^2))`
//! for every unit `z`, plus the empirical-width constant `C`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::{Path, PathBuf};

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, par_samples, Matrix, MeanEstimate, RngStream, Vector};

/// Eigenvalue floor used when forming `Sigma^{1/2}`.
pub const SQRT_EIGEN_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    StdGaussian,
    GaussianSigma,
    Rademacher,
}

#[derive(Clone, Debug)]
enum Law {
    StdGaussian,
    Gaussian { covariance: Matrix, sqrt: Matrix },
    Rademacher,
}

#[derive(Clone, Debug)]
pub struct SubgaussianSpec {
    law: Law,
    dim: usize,
    alpha: f64,
    sigma: f64,
    width_constant: f64,
    kappa: f64,
}

impl SubgaussianSpec {
    /// Build a spec for vectors in `R^d`.
    ///
    /// * `std_gaussian`: `alpha = sqrt(2/pi)`, `sigma = 1`, `C = 1`.
    /// * `gaussian_sigma`: needs an SPD `covariance`; `alpha = s_min sqrt(2/pi)`,
    ///   `sigma = s_max` where `s_min^2`, `s_max^2` are its extreme eigenvalues; `C = 1`.
    /// * `rademacher`: independent signs, `alpha = 1/sqrt(2)` (Khintchine lower
    ///   constant, an implementation choice), `sigma = 1`; `C` must be given.
    ///
    /// `width_constant` overrides the default `C = 1` of the Gaussian kinds.
    pub fn new(kind: SpecKind, d: usize, covariance: Option<Matrix>, width_constant: Option<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("subgaussian spec needs d >= 1"));
        }
        if let Some(c) = width_constant {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("width constant C must be positive, got {c}")));
            }
        }
        if kind != SpecKind::GaussianSigma && covariance.is_some() {
            return Err(Error::invalid("a covariance is only accepted for gaussian_sigma"));
        }
        let c_or_one = width_constant.unwrap_or(1.0);
        let gauss_alpha = (2.0 / PI).sqrt();
        match kind {
            SpecKind::StdGaussian => Ok(SubgaussianSpec {
                law: Law::StdGaussian,
                dim: d,
                alpha: gauss_alpha,
                sigma: 1.0,
                width_constant: c_or_one,
                kappa: 1.0,
            }),
            SpecKind::Rademacher => {
                let c = width_constant
                    .ok_or_else(|| Error::invalid("rademacher rows need an explicit width constant C"))?;
                Ok(SubgaussianSpec {
                    law: Law::Rademacher,
                    dim: d,
                    alpha: FRAC_1_SQRT_2,
                    sigma: 1.0,
                    width_constant: c,
                    kappa: 1.0,
                })
            }
            SpecKind::GaussianSigma => {
                let cov = covariance.ok_or_else(|| Error::invalid("gaussian_sigma needs a covariance matrix"))?;
                if cov.shape() != (d, d) {
                    return Err(Error::dim(format!(
                        "covariance is {}x{}, expected {d}x{d}",
                        cov.nrows(),
                        cov.ncols()
                    )));
                }
                let scale = cov.amax().max(f64::MIN_POSITIVE);
                if (&cov - cov.transpose()).amax() > 1e-12 * scale {
                    return Err(Error::invalid("covariance must be symmetric"));
                }
                let eig = SymmetricEigen::new(cov.clone());
                let lmin = eig.eigenvalues.min();
                let lmax = eig.eigenvalues.max();
                if !(lmin > 0.0) {
                    return Err(Error::invalid(format!(
                        "covariance must be positive definite, smallest eigenvalue {lmin}"
                    )));
                }
                let sqrt = numerics::symmetric_sqrt(&cov, SQRT_EIGEN_FLOOR);
                Ok(SubgaussianSpec {
                    law: Law::Gaussian { covariance: cov, sqrt },
                    dim: d,
                    alpha: lmin.sqrt() * gauss_alpha,
                    sigma: lmax.sqrt(),
                    width_constant: c_or_one,
                    kappa: lmax / lmin,
                })
            }
        }
    }

    pub fn kind(&self) -> SpecKind {
        match self.law {
            Law::StdGaussian => SpecKind::StdGaussian,
            Law::Gaussian { .. } => SpecKind::GaussianSigma,
            Law::Rademacher => SpecKind::Rademacher,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn width_constant(&self) -> f64 {
        self.width_constant
    }

    /// Condition number `s_max^2 / s_min^2` of the covariance (1 for the
    /// isotropic kinds).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn covariance(&self) -> Option<&Matrix> {
        match &self.law {
            Law::Gaussian { covariance, .. } => Some(covariance),
            _ => None,
        }
    }

    /// One draw of the row vector `phi`.
    pub fn sample_row(&self, rng: &mut RngStream) -> Vector {
        match &self.law {
            Law::StdGaussian => Vector::from_fn(self.dim, |_, _| rng.gaussian()),
            Law::Rademacher => Vector::from_fn(self.dim, |_, _| rng.rademacher()),
            Law::Gaussian { sqrt, .. } => {
                let g = Vector::from_fn(self.dim, |_, _| rng.gaussian());
                sqrt * g
            }
        }
    }

    /// One draw of the marginal `<phi, z>`.
    pub fn sample_marginal(&self, z: &Vector, rng: &mut RngStream) -> f64 {
        match &self.law {
            Law::StdGaussian => z.iter().map(|&zi| zi * rng.gaussian()).sum(),
            Law::Rademacher => z.iter().map(|&zi| zi * rng.rademacher()).sum(),
            Law::Gaussian { .. } => self.sample_row(rng).dot(z),
        }
    }
}

/// `make_spec` as a free function.
pub fn make_spec(
    kind: SpecKind,
    d: usize,
    covariance: Option<Matrix>,
    width_constant: Option<f64>,
) -> Result<SubgaussianSpec> {
    SubgaussianSpec::new(kind, d, covariance, width_constant)
}

/// `m x d` matrix whose rows are i.i.d. draws from `spec`.
pub fn sample_measurement_matrix(spec: &SubgaussianSpec, m: usize, d: usize, rng: &mut RngStream) -> Result<Matrix> {
    if m == 0 || d == 0 {
        return Err(Error::invalid("measurement matrix needs m, d >= 1"));
    }
    if d != spec.dim() {
        return Err(Error::dim(format!(
            "spec has dimension {}, requested d = {d}",
            spec.dim()
        )));
    }
    let mut phi = Matrix::zeros(m, d);
    for i in 0..m {
        let row = spec.sample_row(rng);
        phi.set_row(i, &row.transpose());
    }
    Ok(phi)
}

/// Lower bound `(alpha - t)^2 / (4 sigma^2)` on `P(|<phi, x>| >= t)` for unit `x`.
pub fn small_ball_lower_bound(spec: &SubgaussianSpec, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < spec.alpha) {
        return Err(Error::invalid(format!(
            "t must lie in (0, alpha = {}), got {t}",
            spec.alpha
        )));
    }
    Ok((spec.alpha - t).powi(2) / (4.0 * spec.sigma * spec.sigma))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub samples: usize,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.violated)
    }
}

fn check_unit(z: &Vector) -> Result<()> {
    if (z.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("z must be a unit vector, ||z|| = {}", z.norm())));
    }
    Ok(())
}

/// Empirical tail frequencies of `|<phi, z>|` against `2 exp(-t^2/(2 sigma^2))`.
///
/// A grid point is flagged when the empirical frequency exceeds the bound by
/// more than three binomial standard errors.
pub fn verify_tail(
    spec: &SubgaussianSpec,
    z: &Vector,
    grid: &[f64],
    samples: usize,
    rng: &RngStream,
) -> Result<TailReport> {
    check_unit(z)?;
    if z.len() != spec.dim() {
        return Err(Error::dim(format!(
            "z has length {}, spec dimension is {}",
            z.len(),
            spec.dim()
        )));
    }
    if samples == 0 {
        return Err(Error::invalid("verify_tail needs samples >= 1"));
    }
    let draws = par_samples(samples, rng, |r| spec.sample_marginal(z, r).abs());
    let n = samples as f64;
    let rows = grid
        .iter()
        .map(|&t| {
            let hits = draws.iter().filter(|&&a| a >= t).count() as f64;
            let p = hits / n;
            let se = (p * (1.0 - p) / n).sqrt();
            let bound = 2.0 * (-t * t / (2.0 * spec.sigma * spec.sigma)).exp();
            TailRow {
                t,
                empirical: p,
                std_error: se,
                bound,
                violated: p > bound + 3.0 * se,
            }
        })
        .collect();
    Ok(TailReport { samples, rows })
}

/// Monte Carlo estimate of `E|<phi, z>|` for unit `z`.
pub fn mean_abs_marginal(spec: &SubgaussianSpec, z: &Vector, samples: usize, rng: &RngStream) -> Result<MeanEstimate> {
    check_unit(z)?;
    let draws = par_samples(samples, rng, |r| spec.sample_marginal(z, r).abs());
    Ok(MeanEstimate::from_samples(&draws))
}

/// JSON form `{kind, alpha, sigma, C, covariance_path}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub kind: SpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub width_constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_path: Option<PathBuf>,
}

impl SpecFile {
    pub fn describe(spec: &SubgaussianSpec, covariance_path: Option<PathBuf>) -> Self {
        SpecFile {
            kind: spec.kind(),
            alpha: Some(spec.alpha()),
            sigma: Some(spec.sigma()),
            width_constant: Some(spec.width_constant()),
            covariance_path,
        }
    }

    /// Rebuild the spec. `alpha` and `sigma` are derived, not trusted from the file.
    pub fn load(&self, d: usize, base_dir: Option<&Path>) -> Result<SubgaussianSpec> {
        let cov = match &self.covariance_path {
            Some(p) => {
                let full = match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                Some(numerics::read_matrix(full)?)
            }
            None => None,
        };
        SubgaussianSpec::new(self.kind, d, cov, self.width_constant)
    }
}
