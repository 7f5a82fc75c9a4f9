//! Gaussian width of `D S_gamma` and the supporting moment checks.
//!
//! The supremum of `<D^T g, x>` over `S_gamma` reduces, after taking the
//! nonincreasing rearrangement `h*` of `|D^T g|`, to the supremum of `<h*, u>`
//! over `K ∩ S^{n-1}` with the cone
//! `K = { u >= 0 : sum_{l<=s} u_l >= gamma sum_{l>s} u_l }`,
//! which equals `||P_K(h*)||_2`.

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::numerics::{self, nonincreasing_rearrangement, par_samples, Matrix, MeanEstimate, RngStream, Vector};

/// Dykstra stopping tolerance on successive iterates.
pub const CONE_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 100_000;
/// Minimum sample count accepted by the width estimators.
pub const MIN_WIDTH_SAMPLES: usize = 100;
/// Relative rounding slack for the per-sample duality comparison.
pub const DUALITY_SLACK: f64 = 1e-9;
const GOLDEN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub gamma: f64,
    pub s: usize,
    pub n: usize,
}

impl ConeParams {
    pub fn new(gamma: f64, s: usize, n: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if s == 0 || s > n {
            return Err(Error::invalid(format!("sparsity s = {s} must lie in 1..={n}")));
        }
        Ok(ConeParams { gamma, s, n })
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::dim(format!(
                "vector has length {len}, cone lives in R^{}",
                self.n
            )));
        }
        Ok(())
    }

    /// Normal of the halfspace `<a, u> >= 0`.
    fn normal(&self, l: usize) -> f64 {
        if l < self.s {
            1.0
        } else {
            -self.gamma
        }
    }
}

fn halfspace_value(u: &[f64], c: &ConeParams) -> f64 {
    u.iter().enumerate().map(|(l, v)| c.normal(l) * v).sum()
}

/// Euclidean projection onto `K_{gamma,s}` by Dykstra's alternating
/// projections between the halfspace and the nonnegative orthant.
pub fn project_onto_cone(h: &[f64], c: &ConeParams, tol: f64) -> Result<Vector> {
    c.check_len(h.len())?;
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = h.len();
    let a_sq = c.s as f64 + c.gamma * c.gamma * (n - c.s) as f64;
    let mut x = h.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut y = vec![0.0; n];
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        for l in 0..n {
            y[l] = x[l] + p[l];
        }
        let viol = halfspace_value(&y, c);
        if viol < 0.0 {
            for (l, yl) in y.iter_mut().enumerate() {
                *yl -= viol / a_sq * c.normal(l);
            }
        }
        let mut change = 0.0;
        for l in 0..n {
            p[l] += x[l] - y[l];
            let next = (y[l] + q[l]).max(0.0);
            q[l] += y[l] - next;
            change += (next - x[l]).powi(2);
            x[l] = next;
        }
        if change.sqrt() < tol {
            break;
        }
    }
    Ok(Vector::from_vec(x))
}

/// Exact projection onto `K_{gamma,s}` from the optimality conditions:
/// `u = max(h + lambda a, 0)` with the smallest `lambda >= 0` making `<a, u> >= 0`.
/// `lambda -> <a, max(h + lambda a, 0)>` is piecewise linear and nondecreasing,
/// so the root is found by sweeping its breakpoints.
pub fn project_onto_cone_exact(h: &[f64], c: &ConeParams) -> Result<Vector> {
    c.check_len(h.len())?;
    Ok(Vector::from_vec(project_exact(h, c)))
}

fn project_exact(h: &[f64], c: &ConeParams) -> Vec<f64> {
    let g = c.gamma;
    // slope and intercept of the halfspace value on the current linear piece
    let mut slope = 0.0;
    let mut icpt = 0.0;
    let mut events: Vec<(f64, usize)> = Vec::new();
    for (l, &v) in h.iter().enumerate() {
        if l < c.s {
            if v >= 0.0 {
                slope += 1.0;
                icpt += v;
            } else {
                events.push((-v, l));
            }
        } else if v > 0.0 {
            slope += g * g;
            icpt -= g * v;
            events.push((v / g, l));
        }
    }
    let lambda = if icpt >= 0.0 {
        0.0
    } else {
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut root = None;
        for &(at, l) in &events {
            if icpt + at * slope >= 0.0 {
                root = Some(-icpt / slope);
                break;
            }
            if l < c.s {
                slope += 1.0;
                icpt += h[l];
            } else {
                slope -= g * g;
                icpt += g * h[l];
            }
        }
        root.unwrap_or(-icpt / slope)
    };
    h.iter()
        .enumerate()
        .map(|(l, &v)| (v + lambda * c.normal(l)).max(0.0))
        .collect()
}

/// `sup { <h, u> : u in K ∩ S^{n-1} }` for nonnegative nonincreasing `h`.
pub fn cone_width_sample(h_star: &[f64], c: &ConeParams) -> f64 {
    numerics::norm2(&project_exact(h_star, c))
}

fn dual_objective(h_star: &[f64], c: &ConeParams, t: f64) -> f64 {
    let mut acc = 0.0;
    for (l, &v) in h_star.iter().enumerate() {
        let term = if l < c.s {
            v + t
        } else {
            numerics::shrink(v, c.gamma * t)
        };
        acc += term * term;
    }
    acc
}

/// `min_{t >= 0} sqrt(sum_{l<=s} (h*_l + t)^2 + sum_{l>s} S_{gamma t}(h*_l)^2)`
/// by golden-section search on `[0, max h* / gamma + 1]`.
pub fn dual_width_sample(h_star: &[f64], c: &ConeParams) -> f64 {
    let top = h_star.iter().cloned().fold(0.0, f64::max);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, top / c.gamma + 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = dual_objective(h_star, c, x1);
    let mut f2 = dual_objective(h_star, c, x2);
    while hi - lo > GOLDEN_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = dual_objective(h_star, c, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = dual_objective(h_star, c, x2);
        }
    }
    let best = f1.min(f2).min(dual_objective(h_star, c, 0.0));
    best.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthEstimator {
    ConeProjectionExact,
    DualUpperBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub estimator: WidthEstimator,
    pub theory_bound: f64,
}

fn rearranged_draw(d: &Matrix, rng: &mut RngStream) -> Vec<f64> {
    let g = Vector::from_fn(d.nrows(), |_, _| rng.gaussian());
    let h = d.tr_mul(&g);
    nonincreasing_rearrangement(h.as_slice())
}

fn check_width_inputs(dict: &Dictionary, c: &ConeParams, samples: usize) -> Result<()> {
    if samples < MIN_WIDTH_SAMPLES {
        return Err(Error::invalid(format!(
            "width estimation needs samples >= {MIN_WIDTH_SAMPLES}"
        )));
    }
    if dict.n() != c.n {
        return Err(Error::dim(format!(
            "dictionary has n = {}, cone has n = {}",
            dict.n(),
            c.n
        )));
    }
    Ok(())
}

fn width_estimate(
    dict: &Dictionary,
    c: &ConeParams,
    samples: usize,
    rng: &RngStream,
    estimator: WidthEstimator,
) -> Result<WidthEstimate> {
    check_width_inputs(dict, c, samples)?;
    let d = dict.matrix();
    let values = par_samples(samples, rng, |r| {
        let h = rearranged_draw(d, r);
        match estimator {
            WidthEstimator::ConeProjectionExact => cone_width_sample(&h, c),
            WidthEstimator::DualUpperBound => dual_width_sample(&h, c),
        }
    });
    let est = MeanEstimate::from_samples(&values);
    Ok(WidthEstimate {
        mean: est.mean,
        std_error: est.std_error,
        samples: est.samples,
        estimator,
        theory_bound: width_bound_unchecked(c, dict.rho()),
    })
}

/// Monte Carlo estimate of `w(D S_gamma)` through the cone projection.
pub fn width_ds_gamma_mc(dict: &Dictionary, c: &ConeParams, samples: usize, rng: &RngStream) -> Result<WidthEstimate> {
    width_estimate(dict, c, samples, rng, WidthEstimator::ConeProjectionExact)
}

/// Monte Carlo estimate of the dual upper bound on `w(D S_gamma)`.
/// Uses the same draws as [`width_ds_gamma_mc`] for the same `rng`.
pub fn width_ds_gamma_dual(
    dict: &Dictionary,
    c: &ConeParams,
    samples: usize,
    rng: &RngStream,
) -> Result<WidthEstimate> {
    width_estimate(dict, c, samples, rng, WidthEstimator::DualUpperBound)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `cone - dual` over all draws (negative when every draw is strict).
    pub max_excess: f64,
}

/// Per-draw comparison `cone value <= dual value` on shared randomness.
/// A draw counts as a violation when the excess exceeds `DUALITY_SLACK (1 + ||h||_2)`.
pub fn duality_check(dict: &Dictionary, c: &ConeParams, samples: usize, rng: &RngStream) -> Result<DualityReport> {
    check_width_inputs(dict, c, samples)?;
    let d = dict.matrix();
    let rows = par_samples(samples, rng, |r| {
        let h = rearranged_draw(d, r);
        let excess = cone_width_sample(&h, c) - dual_width_sample(&h, c);
        (excess, excess > DUALITY_SLACK * (1.0 + numerics::norm2(&h)))
    });
    Ok(DualityReport {
        samples,
        violations: rows.iter().filter(|r| r.1).count(),
        max_excess: rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
    })
}

fn width_bound_unchecked(c: &ConeParams, rho: f64) -> f64 {
    let (s, n) = (c.s as f64, c.n as f64);
    6.0 / c.gamma * (s * rho * (2f64.sqrt() * n / s).ln()).sqrt()
}

/// `6 gamma^{-1} sqrt(s rho log(sqrt(2) n / s))`.
pub fn theory_width_bound(c: &ConeParams, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    Ok(width_bound_unchecked(c, rho))
}

/// `2 ||D||_2 w(B_2^n)` with `n` the number of dictionary columns.
pub fn crude_width_bound(dict: &Dictionary) -> f64 {
    2.0 * dict.op_norm() * numerics::unit_ball_width(dict.n())
}

/// Empirical mean with a closed-form bound, and whether
/// `mean <= bound + 3 std_error`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub empirical: f64,
    pub std_error: f64,
    pub samples: u64,
    pub bound: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn new(est: MeanEstimate, bound: f64) -> Self {
        BoundCheck {
            empirical: est.mean,
            std_error: est.std_error,
            samples: est.samples,
            bound,
            passed: est.mean <= bound + 3.0 * est.std_error,
        }
    }
}

/// `E S_t(a)^2` for `a ~ N(0, sigma^2)` against
/// `sigma^4 sqrt(2/(pi e)) t^{-2} exp(-t^2 / (2 sigma^2))`.
pub fn check_soft_moment(sigma: f64, t: f64, samples: usize, rng: &RngStream) -> Result<BoundCheck> {
    if !(sigma > 0.0 && t > 0.0) {
        return Err(Error::invalid("check_soft_moment needs sigma > 0 and t > 0"));
    }
    if samples == 0 {
        return Err(Error::invalid("check_soft_moment needs samples >= 1"));
    }
    let values = par_samples(samples, rng, |r| numerics::shrink(sigma * r.gaussian(), t).powi(2));
    let bound = sigma.powi(4) * (2.0 / (std::f64::consts::PI * std::f64::consts::E)).sqrt() / (t * t)
        * (-t * t / (2.0 * sigma * sigma)).exp();
    Ok(BoundCheck::new(MeanEstimate::from_samples(&values), bound))
}

/// `E sqrt((1/s) sum_{l<=s} ((D^T g)*_l)^2)` against `sqrt(4 rho log(sqrt(2) n / s))`.
pub fn check_lemma_key(dict: &Dictionary, s: usize, samples: usize, rng: &RngStream) -> Result<BoundCheck> {
    let n = dict.n();
    if s == 0 || s > n {
        return Err(Error::invalid(format!("sparsity s = {s} must lie in 1..={n}")));
    }
    if samples == 0 {
        return Err(Error::invalid("check_lemma_key needs samples >= 1"));
    }
    let d = dict.matrix();
    let values = par_samples(samples, rng, |r| {
        let h = rearranged_draw(d, r);
        (h[..s].iter().map(|v| v * v).sum::<f64>() / s as f64).sqrt()
    });
    let bound = (4.0 * dict.rho() * (2f64.sqrt() * n as f64 / s as f64).ln()).sqrt();
    Ok(BoundCheck::new(MeanEstimate::from_samples(&values), bound))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlepianReport {
    /// Estimate of `w(F S)`.
    pub lhs: f64,
    /// `||F||_2` times the estimate of `w(S)`.
    pub rhs: f64,
    /// Standard error of the paired difference `lhs - rhs`.
    pub diff_std_error: f64,
    pub samples: u64,
    pub passed: bool,
}

/// Compare `w(F S)` with `||F||_2 w(S)` for the finite symmetric set `S = ±points`.
///
/// Each draw takes `g` in `R^{max(k, n)}` for `F` of size `k x n`; the leading
/// `k` entries pair with `F S`, the leading `n` entries with `S`, so `F = I`
/// yields equal terms draw by draw. Passes when `mean(lhs - rhs) <= 3 SE`.
pub fn check_slepian_contraction(
    f: &Matrix,
    points: &[Vector],
    samples: usize,
    rng: &RngStream,
) -> Result<SlepianReport> {
    let (k, n) = f.shape();
    if points.is_empty() || samples == 0 {
        return Err(Error::invalid("check_slepian_contraction needs points and samples"));
    }
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::dim(format!("point of length {}, F has {n} columns", p.len())));
    }
    let norm = numerics::operator_norm(f, numerics::DEFAULT_POWER_TOL);
    let images: Vec<Vector> = points.iter().map(|p| f * p).collect();
    let len = k.max(n);
    let pairs = par_samples(samples, rng, |r| {
        let g = Vector::from_fn(len, |_, _| r.gaussian());
        let gk = g.rows(0, k);
        let gn = g.rows(0, n);
        // symmetric set: sup over ±x is the max absolute inner product
        let lhs = images.iter().map(|y| gk.dot(y).abs()).fold(0.0, f64::max);
        let rhs = points.iter().map(|x| gn.dot(x).abs()).fold(0.0, f64::max);
        (lhs, norm * rhs)
    });
    let lhs = MeanEstimate::from_samples(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let rhs = MeanEstimate::from_samples(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let diff = MeanEstimate::from_samples(&pairs.iter().map(|p| p.0 - p.1).collect::<Vec<_>>());
    Ok(SlepianReport {
        lhs: lhs.mean,
        rhs: rhs.mean,
        diff_std_error: diff.std_error,
        samples: diff.samples,
        passed: diff.mean <= 3.0 * diff.std_error,
    })
}
