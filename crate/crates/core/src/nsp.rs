//! Stable null space property: exact certification by linear programming,
//! membership in the violating set `S_gamma`, and the lower bound
//! `eta = inf { ||D x||_2 : x in S_gamma }`.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::dictionary::{binomial, Dictionary};
use crate::error::{Error, Result};
use crate::numerics::{
    self, kernel_basis, solve_lp, ConstraintSense, LpProblem, LpStatus, Matrix, RngStream, Vector, DEFAULT_LP_TOL,
    DEFAULT_RANK_TOL,
};

/// Upper limit on `C(n, s) * 2^s` small LPs per certificate.
pub const NSP_LP_BUDGET: u128 = 1_000_000;

const ETA_INITIAL_STEP: f64 = 1e-2;
const ETA_MAX_ITER: usize = 10_000;
const ETA_STEP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgammaParams {
    pub gamma: f64,
    pub s: usize,
}

impl SgammaParams {
    pub fn new(gamma: f64, s: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if s == 0 {
            return Err(Error::invalid("sparsity s must be >= 1"));
        }
        Ok(SgammaParams { gamma, s })
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.s > n {
            return Err(Error::invalid(format!("sparsity s = {} exceeds n = {n}", self.s)));
        }
        Ok(())
    }
}

/// Indices of the `s` largest `|x_i|`, ties to the lowest index, in increasing order.
pub fn top_support(x: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    idx.truncate(s.min(x.len()));
    idx.sort_unstable();
    idx
}

fn split_l1(x: &[f64], support: &[usize]) -> (f64, f64) {
    let mut on = 0.0;
    let mut total = 0.0;
    for &i in support {
        on += x[i].abs();
    }
    for v in x {
        total += v.abs();
    }
    (on, (total - on).max(0.0))
}

/// Whether `x` lies in `S_gamma`: unit norm within `tol` and
/// `||x_T||_1 >= gamma ||x_{T^c}||_1 - tol` on the top-`s` support `T`.
pub fn in_s_gamma(x: &[f64], p: &SgammaParams, tol: f64) -> bool {
    if x.is_empty() || (numerics::norm2(x) - 1.0).abs() > tol {
        return false;
    }
    let t = top_support(x, p.s);
    let (on, off) = split_l1(x, &t);
    on >= p.gamma * off - tol
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self == Verdict::Holds
    }
}

/// Worst support of a certificate with a kernel vector attaining the ratio.
///
/// For a finite `gamma_star`, `||x_{T^c}||_1 = 1` and `||x_T||_1 = gamma_star`.
/// For `gamma_star = inf`, `x` vanishes off `T` and has unit Euclidean norm.
#[derive(Clone, Debug, PartialEq)]
pub struct NspWitness {
    pub support: Vec<usize>,
    pub x: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportValue {
    pub support: Vec<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NspCertificate {
    pub gamma_star: f64,
    pub verdict: Verdict,
    pub witness: Option<NspWitness>,
    /// Lexicographic order of supports; empty when the kernel is trivial.
    pub per_support_values: Vec<SupportValue>,
    pub s: usize,
    pub tol: f64,
    pub kernel_dim: usize,
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Serialize)]
struct CertificateJson<'a> {
    #[serde(serialize_with = "ser_extended")]
    gamma_star: f64,
    verdict: Verdict,
    witness_support: Option<&'a [usize]>,
    witness_vector: Option<Vec<f64>>,
    s: usize,
    tol: f64,
}

impl Serialize for NspCertificate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CertificateJson {
            gamma_star: self.gamma_star,
            verdict: self.verdict,
            witness_support: self.witness.as_ref().map(|w| w.support.as_slice()),
            witness_vector: self.witness.as_ref().map(|w| w.x.iter().copied().collect()),
            s: self.s,
            tol: self.tol,
        }
        .serialize(s)
    }
}

impl NspCertificate {
    pub fn holds(&self) -> bool {
        self.verdict.holds()
    }
}

struct SupportOutcome {
    value: f64,
    x: Option<Vector>,
}

fn complement(n: usize, support: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - support.len());
    let mut it = support.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

fn unit_direction(x: Vector) -> Vector {
    let nrm = x.norm();
    if nrm > 0.0 {
        x / nrm
    } else {
        x
    }
}

fn support_value(basis: &Matrix, support: &[usize]) -> Result<SupportOutcome> {
    let (n, k) = basis.shape();
    let comp = complement(n, support);
    let rest = basis.select_rows(comp.iter());
    let free_dirs = if comp.is_empty() {
        Matrix::identity(k, k)
    } else {
        kernel_basis(&rest, DEFAULT_RANK_TOL)
    };
    if free_dirs.ncols() > 0 {
        // some kernel vector vanishes off the support
        let x = unit_direction(basis * free_dirs.column(0));
        return Ok(SupportOutcome {
            value: f64::INFINITY,
            x: Some(x),
        });
    }

    // variables: c (free, k), t (>= 0, |T^c|)
    let r = comp.len();
    let mut a = Matrix::zeros(2 * r + 1, k + r);
    for (j, row) in rest.row_iter().enumerate() {
        for col in 0..k {
            a[(2 * j, col)] = row[col];
            a[(2 * j + 1, col)] = -row[col];
        }
        a[(2 * j, k + j)] = -1.0;
        a[(2 * j + 1, k + j)] = -1.0;
        a[(2 * r, k + j)] = 1.0;
    }
    let mut b = Vector::zeros(2 * r + 1);
    b[2 * r] = 1.0;
    let senses = vec![ConstraintSense::Le; 2 * r + 1];
    let mut lower = vec![f64::NEG_INFINITY; k];
    lower.extend(std::iter::repeat_n(0.0, r));
    let upper = vec![f64::INFINITY; k + r];

    let s = support.len();
    let mut best = SupportOutcome {
        value: f64::NEG_INFINITY,
        x: None,
    };
    // sigma and -sigma give the same value, so the first sign is fixed to +1
    for pattern in 0..(1usize << (s - 1)) {
        let mut obj = Vector::zeros(k + r);
        for (pos, &i) in support.iter().enumerate() {
            let sign = if pos > 0 && (pattern >> (pos - 1)) & 1 == 1 {
                -1.0
            } else {
                1.0
            };
            for col in 0..k {
                obj[col] += sign * basis[(i, col)];
            }
        }
        let lp =
            LpProblem::new(obj, a.clone(), b.clone(), senses.clone())?.with_bounds(lower.clone(), upper.clone())?;
        let sol = solve_lp(&lp, DEFAULT_LP_TOL);
        match sol.status {
            LpStatus::Optimal => {
                if sol.value > best.value {
                    let c = sol.x.rows(0, k).into_owned();
                    best = SupportOutcome {
                        value: sol.value,
                        x: Some(basis * c),
                    };
                }
            }
            LpStatus::Unbounded => {
                let x = unit_direction(basis * sol.x.rows(0, k).into_owned());
                return Ok(SupportOutcome {
                    value: f64::INFINITY,
                    x: Some(x),
                });
            }
            status => {
                return Err(Error::invalid(format!(
                    "NSP linear program on support {support:?} ended with status {status:?}"
                )))
            }
        }
    }
    if let Some(x) = best.x.take() {
        let off: f64 = comp.iter().map(|&j| x[j].abs()).sum();
        best.x = Some(if off > 0.0 { x / off } else { x });
    }
    Ok(best)
}

/// Exact stable-NSP constant of `a` at sparsity `s`:
/// `gamma_star = sup { ||x_T||_1 / ||x_{T^c}||_1 : x in ker(a) \ {0}, |T| = s }`.
///
/// One LP per support and sign pattern over the orthonormal kernel
/// parametrization `x = N c`. The verdict holds iff `gamma_star < 1 - tol`.
pub fn certify_nsp(a: &Matrix, s: usize, tol: f64) -> Result<NspCertificate> {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return Err(Error::dim("certify_nsp needs a nonempty matrix"));
    }
    if s == 0 || s > n {
        return Err(Error::invalid(format!("sparsity s = {s} must lie in 1..={n}")));
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tolerance must be finite and >= 0, got {tol}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix entries must be finite"));
    }
    let basis = kernel_basis(a, DEFAULT_RANK_TOL);
    let kernel_dim = basis.ncols();
    if kernel_dim == 0 {
        return Ok(NspCertificate {
            gamma_star: 0.0,
            verdict: Verdict::Holds,
            witness: None,
            per_support_values: Vec::new(),
            s,
            tol,
            kernel_dim,
        });
    }
    let needed = binomial(n, s).saturating_mul(1u128 << s.min(127));
    if needed > NSP_LP_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "NSP linear programs",
            needed,
            budget: NSP_LP_BUDGET,
        });
    }

    let supports: Vec<Vec<usize>> = (0..n).combinations(s).collect();
    let outcomes = supports
        .par_iter()
        .map(|t| support_value(&basis, t))
        .collect::<Result<Vec<_>>>()?;

    let mut gamma_star = f64::NEG_INFINITY;
    let mut witness = None;
    let mut per_support_values = Vec::with_capacity(supports.len());
    for (t, out) in supports.into_iter().zip(outcomes) {
        if out.value > gamma_star {
            gamma_star = out.value;
            witness = out.x.map(|x| NspWitness { support: t.clone(), x });
        }
        per_support_values.push(SupportValue {
            support: t,
            value: out.value,
        });
    }
    let verdict = if gamma_star < 1.0 - tol {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    Ok(NspCertificate {
        gamma_star,
        verdict,
        witness,
        per_support_values,
        s,
        tol,
        kernel_dim,
    })
}

/// Certified lower bound on `inf { ||A x||_2 : x in S_gamma }` from an NSP certificate.
///
/// With `x = k + r`, `k in ker(A)`, `r` orthogonal to it, every `x in S_gamma`
/// with `gamma > gamma_star` obeys `1 <= ||r||_2 (1 + (1 + gamma_star) sqrt(n) / (gamma - gamma_star))`,
/// and `||A x||_2 >= s_min^+(A) ||r||_2`. With a trivial kernel the bound is
/// `s_min(A)`. Returns `None` when `gamma <= gamma_star`.
pub fn certified_eta_lower_bound(a: &Matrix, cert: &NspCertificate, gamma: f64) -> Result<Option<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let smin = match numerics::smallest_nonzero_singular_value(a, DEFAULT_RANK_TOL) {
        Some(v) => v,
        None => return Ok(None),
    };
    if cert.kernel_dim == 0 {
        return Ok(Some(smin));
    }
    if !(gamma > cert.gamma_star) {
        return Ok(None);
    }
    let n = a.ncols() as f64;
    let blow_up = 1.0 + (1.0 + cert.gamma_star) * n.sqrt() / (gamma - cert.gamma_star);
    Ok(Some(smin / blow_up))
}

/// Error bound `((2 gamma + 2) / (1 - gamma)) sigma_s + 2 eps / eta` for
/// l1 recovery under the stable NSP with lower bound `eta`.
pub fn recovery_error_bound(gamma: f64, eta: f64, sigma_s: f64, eps: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    if !(sigma_s >= 0.0) || !(eps >= 0.0) {
        return Err(Error::invalid("sigma_s and eps must be nonnegative"));
    }
    Ok((2.0 * gamma + 2.0) / (1.0 - gamma) * sigma_s + 2.0 * eps / eta)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaEstimate {
    /// Smallest `||D x||_2` found over `S_gamma`; an upper bound on the infimum.
    pub eta_upper: f64,
    pub witness: Vector,
    pub probes: usize,
    pub restarts: usize,
}

fn restore_cone(x: &mut Vector, support: &[usize], comp: &[usize], gamma: f64) -> bool {
    let on: f64 = support.iter().map(|&i| x[i].abs()).sum();
    let off: f64 = comp.iter().map(|&j| x[j].abs()).sum();
    if on == 0.0 {
        return false;
    }
    if on < gamma * off {
        let scale = on / (gamma * off);
        for &j in comp {
            x[j] *= scale;
        }
    }
    let nrm = x.norm();
    if nrm == 0.0 {
        return false;
    }
    *x /= nrm;
    true
}

fn descend(d: &Matrix, p: &SgammaParams, support: &[usize], mut x: Vector) -> (f64, Vector) {
    let comp = complement(x.len(), support);
    if !restore_cone(&mut x, support, &comp, p.gamma) {
        x = Vector::zeros(x.len());
        x[support[0]] = 1.0;
    }
    let mut f = (d * &x).norm_squared();
    let mut step = ETA_INITIAL_STEP;
    for _ in 0..ETA_MAX_ITER {
        let grad = 2.0 * (d.transpose() * (d * &x));
        let mut moved = false;
        while step > 1e-16 {
            let mut y = &x - step * &grad;
            if restore_cone(&mut y, support, &comp, p.gamma) {
                let fy = (d * &y).norm_squared();
                if fy < f {
                    let change = (&y - &x).norm();
                    x = y;
                    f = fy;
                    moved = change >= ETA_STEP_TOL;
                    step *= 1.5;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    ((d * &x).norm(), x)
}

/// Multistart projected descent of `||D x||_2` over `S_gamma`.
///
/// Each restart fixes a random support `T`, starts from a random point of the
/// cone `||x_T||_1 >= gamma ||x_{T^c}||_1`, and alternates gradient steps with
/// cone restoration (shrinking `x_{T^c}`) and renormalization. The coordinate
/// vectors are probed as well. The result only bounds the infimum from above.
pub fn estimate_eta(dict: &Dictionary, p: &SgammaParams, restarts: usize, rng: &RngStream) -> Result<EtaEstimate> {
    if restarts == 0 {
        return Err(Error::invalid("estimate_eta needs restarts >= 1"));
    }
    let n = dict.n();
    p.check_len(n)?;
    let d = dict.matrix();

    let mut best_val = f64::INFINITY;
    let mut best_x = Vector::zeros(n);
    for i in 0..n {
        let v = d.column(i).norm();
        if v < best_val {
            best_val = v;
            best_x = Vector::zeros(n);
            best_x[i] = 1.0;
        }
    }
    let runs: Vec<(f64, Vector)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut local = rng.fork(r as u64);
            let support = local.subset(n, p.s);
            let mut x = Vector::from_fn(n, |_, _| local.gaussian());
            for j in complement(n, &support) {
                x[j] *= local.uniform();
            }
            descend(d, p, &support, x)
        })
        .collect();
    for (v, x) in runs {
        if v < best_val {
            best_val = v;
            best_x = x;
        }
    }
    Ok(EtaEstimate {
        eta_upper: best_val,
        witness: best_x,
        probes: n + restarts,
        restarts,
    })
}

/// Brute-force minimum of `||D x||_2` over a spherical grid of `S_gamma`, for `n <= 3`.
///
/// `resolution` is the number of angular steps per coordinate.
pub fn eta_grid_search(dict: &Dictionary, p: &SgammaParams, resolution: usize) -> Result<f64> {
    let n = dict.n();
    p.check_len(n)?;
    if resolution < 4 {
        return Err(Error::invalid("grid resolution must be >= 4"));
    }
    let d = dict.matrix();
    let eval = |x: &[f64]| -> Option<f64> { in_s_gamma(x, p, 1e-12).then(|| (d * Vector::from_row_slice(x)).norm()) };
    let tau = std::f64::consts::TAU;
    let mut best = f64::INFINITY;
    match n {
        1 => best = d.column(0).norm(),
        2 => {
            for i in 0..resolution {
                let th = tau * i as f64 / resolution as f64;
                if let Some(v) = eval(&[th.cos(), th.sin()]) {
                    best = best.min(v);
                }
            }
        }
        3 => {
            for i in 0..=resolution {
                let th = std::f64::consts::PI * i as f64 / resolution as f64;
                for j in 0..2 * resolution {
                    let ph = tau * j as f64 / (2 * resolution) as f64;
                    let x = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                    if let Some(v) = eval(&x) {
                        best = best.min(v);
                    }
                }
            }
        }
        _ => return Err(Error::invalid(format!("grid search supports n <= 3, got {n}"))),
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DnspRoute {
    FullSparkEquivalence,
}

/// D-NSP verdict for `phi` through the full-spark equivalence: for a
/// full-spark `D`, `phi` has the D-NSP iff `phi D` has the NSP.
pub fn d_nsp_check(dict: &Dictionary, phi: &Matrix, s: usize, tol: f64) -> Result<(NspCertificate, DnspRoute)> {
    if phi.ncols() != dict.d() {
        return Err(Error::dim(format!(
            "Phi has {} columns, dictionary has d = {}",
            phi.ncols(),
            dict.d()
        )));
    }
    if !dict.is_full_spark()? {
        return Err(Error::NotFullSpark);
    }
    let cert = certify_nsp(&(phi * dict.matrix()), s, tol)?;
    Ok((cert, DnspRoute::FullSparkEquivalence))
}
