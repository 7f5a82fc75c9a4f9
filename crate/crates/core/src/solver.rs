//! l1-synthesis: `min ||x||_1` subject to `||y - B x||_2 <= eps`, with `B = Phi D`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::numerics::{self, solve_lp, ConstraintSense, LpProblem, LpStatus, Matrix, Vector, DEFAULT_RANK_TOL};
use crate::smallball::synthesis_error_bounds;

/// Absolute slack on `eps` when deciding that `y` is out of reach of `B`.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Recovery errors below this are treated as exact when auditing bounds.
pub const AUDIT_TOL: f64 = 1e-6;
/// Relative duality gap under which the support polish replaces the ADMM iterate.
pub const POLISH_GAP: f64 = 1e-8;
/// Residual balancing runs every `BALANCE_EVERY` iterations and stops after
/// `BALANCE_UNTIL`, so the penalty is eventually fixed.
const BALANCE_EVERY: usize = 25;
const BALANCE_UNTIL: usize = 10_000;

/// `sigma_s(x)_1`: the sum of the `n - s` smallest `|x_i|`.
pub fn best_s_term_error(x: &[f64], s: usize) -> Result<f64> {
    if s > x.len() {
        return Err(Error::invalid(format!("s = {s} exceeds the length {}", x.len())));
    }
    let sorted = numerics::nonincreasing_rearrangement(x);
    Ok(sorted[s..].iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub x_hat: Vector,
    pub z_hat: Option<Vector>,
    pub objective: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl RecoveryResult {
    fn finish(
        b: &Matrix,
        y: &Vector,
        x: Vector,
        dict: Option<&Dictionary>,
        iterations: usize,
        status: SolveStatus,
    ) -> Self {
        let residual_norm = (b * &x - y).norm();
        RecoveryResult {
            objective: x.lp_norm(1),
            z_hat: dict.map(|d| d.matrix() * &x),
            x_hat: x,
            residual_norm,
            iterations,
            status,
            primal_residual: 0.0,
            dual_residual: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryProblem {
    pub b: Matrix,
    pub y: Vector,
    pub eps: f64,
    pub dict: Option<Dictionary>,
}

impl RecoveryProblem {
    pub fn new(b: Matrix, y: Vector, eps: f64, dict: Option<Dictionary>) -> Result<Self> {
        if y.len() != b.nrows() {
            return Err(Error::dim(format!(
                "y has length {}, B has {} rows",
                y.len(),
                b.nrows()
            )));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be finite and >= 0, got {eps}")));
        }
        if let Some(d) = &dict {
            if d.n() != b.ncols() {
                return Err(Error::dim(format!(
                    "dictionary has n = {}, B has {} columns",
                    d.n(),
                    b.ncols()
                )));
            }
        }
        if b.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("B and y must be finite"));
        }
        Ok(RecoveryProblem { b, y, eps, dict })
    }
}

/// Basis pursuit as an LP over `x = x+ - x-`.
pub fn solve_bp_lp(b: &Matrix, y: &Vector, tol: f64) -> Result<RecoveryResult> {
    let (m, n) = b.shape();
    if y.len() != m {
        return Err(Error::dim(format!("y has length {}, B has {m} rows", y.len())));
    }
    let mut a = Matrix::zeros(m, 2 * n);
    a.view_mut((0, 0), (m, n)).copy_from(b);
    a.view_mut((0, n), (m, n)).copy_from(&(-b));
    let obj = Vector::from_element(2 * n, -1.0);
    let lp = LpProblem::new(obj, a, y.clone(), vec![ConstraintSense::Eq; m])?;
    let sol = solve_lp(&lp, tol);
    let x = sol.x.rows(0, n) - sol.x.rows(n, n);
    let status = match sol.status {
        LpStatus::Optimal => SolveStatus::Converged,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::IterationLimit => SolveStatus::MaxIter,
        LpStatus::Unbounded => {
            return Err(Error::invalid(
                "basis pursuit LP reported unbounded; the objective is bounded below",
            ))
        }
    };
    Ok(RecoveryResult::finish(b, y, x, None, sol.iterations, status))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub rho: f64,
    pub max_iter: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams {
            rho: 1.0,
            max_iter: 50_000,
            abs_tol: 1e-9,
            rel_tol: 1e-7,
        }
    }
}

fn project_ball(v: &mut Vector, radius: f64) {
    let nrm = v.norm();
    if nrm > radius {
        if radius == 0.0 {
            v.fill(0.0);
        } else {
            *v *= radius / nrm;
        }
    }
}

/// Distance from `y` to the range of `B`.
fn range_distance(b: &Matrix, y: &Vector) -> f64 {
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut proj = Vector::zeros(y.len());
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > DEFAULT_RANK_TOL * top {
            let col = u.column(k);
            proj += col * col.dot(y);
        }
    }
    (y - proj).norm()
}

/// Least squares restricted to the support of `x`, kept when it solves
/// `Bx = y` exactly, keeps the signs of `x` and is optimal up to `POLISH_GAP`.
///
/// Optimality is certified through `v`: for every `x'` with `B x' = y`,
/// `||x'||_1 >= <v, y> / max(1, ||B^T v||_inf)`.
fn polish(b: &Matrix, y: &Vector, x: &Vector, v: &Vector) -> Option<Vector> {
    let top = x.amax();
    if top == 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() > 1e-9 * top).collect();
    if support.len() > b.nrows() {
        return None;
    }
    let bs = b.select_columns(support.iter());
    let sol = bs.clone().svd(true, true).solve(y, DEFAULT_RANK_TOL).ok()?;
    if (&bs * &sol - y).norm() > 1e-12 * (1.0 + y.norm()) {
        return None;
    }
    let mut out = Vector::zeros(x.len());
    for (k, &i) in support.iter().enumerate() {
        if sol[k] * x[i] <= 0.0 {
            return None;
        }
        out[i] = sol[k];
    }
    let lower = v.dot(y) / (b.transpose() * v).amax().max(1.0);
    let l1 = out.lp_norm(1);
    (l1 - lower <= POLISH_GAP * (1.0 + l1)).then_some(out)
}

/// ADMM on the splitting `x = z`, `B x - y = r`, `||r||_2 <= eps`.
///
/// The x-update solves `(I + B^T B) x = (z - u) + B^T (y + r - w)` with a
/// Cholesky factor computed once; the penalty `rho` cancels from it, so
/// residual balancing (factor 2 when the residual ratio exceeds 10) only
/// rescales the dual variables. Balancing on every iteration keeps the
/// penalty oscillating and stalls the iteration, so it is throttled.
///
/// The returned `x_hat` is the shrinkage iterate `z`. For `eps = 0` a
/// support-restricted least-squares polish is applied when the dual iterate
/// certifies it as optimal.
pub fn solve_l1_synthesis(p: &RecoveryProblem, params: &AdmmParams) -> Result<RecoveryResult> {
    if !(params.rho > 0.0) || params.max_iter == 0 {
        return Err(Error::invalid("ADMM needs rho > 0 and max_iter >= 1"));
    }
    let (b, y, eps) = (&p.b, &p.y, p.eps);
    let (m, n) = b.shape();
    let dict = p.dict.as_ref();

    if eps >= y.norm() {
        return Ok(RecoveryResult::finish(
            b,
            y,
            Vector::zeros(n),
            dict,
            0,
            SolveStatus::Converged,
        ));
    }
    if range_distance(b, y) > eps + FEASIBILITY_TOL * (1.0 + y.norm()) {
        return Ok(RecoveryResult::finish(
            b,
            y,
            Vector::zeros(n),
            dict,
            0,
            SolveStatus::Infeasible,
        ));
    }

    let bt = b.transpose();
    let gram = Matrix::identity(n, n) + &bt * b;
    let chol = Cholesky::new(gram).ok_or_else(|| Error::invalid("I + B^T B is not positive definite"))?;

    let mut rho = params.rho;
    let mut z = Vector::zeros(n);
    let mut u = Vector::zeros(n);
    let mut r = Vector::zeros(m);
    let mut w = Vector::zeros(m);
    let (mut pri, mut dual) = (f64::INFINITY, f64::INFINITY);
    let scale = ((n + m) as f64).sqrt();
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIter;

    for it in 1..=params.max_iter {
        iterations = it;
        let rhs = (&z - &u) + &bt * (y + &r - &w);
        let x = chol.solve(&rhs);
        let bx = b * &x;

        let z_old = z.clone();
        z = (&x + &u).map(|v| numerics::shrink(v, 1.0 / rho));
        let r_old = r.clone();
        r = &bx - y + &w;
        project_ball(&mut r, eps);

        let pz = &x - &z;
        let pr = &bx - y - &r;
        u += &pz;
        w += &pr;

        pri = (pz.norm_squared() + pr.norm_squared()).sqrt();
        dual = rho * ((&z - &z_old) + &bt * (&r - &r_old)).norm();
        let eps_pri = scale * params.abs_tol
            + params.rel_tol
                * (x.norm_squared() + bx.norm_squared())
                    .sqrt()
                    .max((z.norm_squared() + r.norm_squared()).sqrt())
                    .max(y.norm());
        let eps_dual = (n as f64).sqrt() * params.abs_tol + params.rel_tol * rho * (&u + &bt * &w).norm();
        if pri < eps_pri && dual < eps_dual {
            status = SolveStatus::Converged;
            break;
        }
        let adapt = it % BALANCE_EVERY == 0 && it <= BALANCE_UNTIL;
        if adapt && pri > 10.0 * dual {
            rho *= 2.0;
            u /= 2.0;
            w /= 2.0;
        } else if adapt && dual > 10.0 * pri {
            rho /= 2.0;
            u *= 2.0;
            w *= 2.0;
        }
    }

    let mut x_hat = z;
    if eps == 0.0 {
        if let Some(pol) = polish(b, y, &x_hat, &(-rho * &w)) {
            x_hat = pol;
        }
    }
    let mut out = RecoveryResult::finish(b, y, x_hat, dict, iterations, status);
    out.primal_residual = pri;
    out.dual_residual = dual;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBoundInputs {
    pub gamma: f64,
    pub eta: f64,
    pub eps: f64,
    #[serde(rename = "C")]
    pub width_constant: f64,
    pub sigma: f64,
    pub s: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub err_x: f64,
    pub err_z: f64,
    pub sigma_s: f64,
    pub coef_bound: f64,
    pub signal_bound: f64,
    /// Error exceeds the bound by more than `AUDIT_TOL (1 + ||x0||_2)`.
    pub violated_x: bool,
    pub violated_z: bool,
}

impl RecoveryReport {
    pub fn violated(&self) -> bool {
        self.violated_x || self.violated_z
    }
}

/// Errors of a recovery against the coefficient and signal guarantees.
pub fn evaluate_recovery(
    x0: &Vector,
    result: &RecoveryResult,
    dict: &Dictionary,
    inputs: &RecoveryBoundInputs,
) -> Result<RecoveryReport> {
    if x0.len() != result.x_hat.len() || x0.len() != dict.n() {
        return Err(Error::dim("x0, x_hat and the dictionary disagree in length"));
    }
    let sigma_s = best_s_term_error(x0.as_slice(), inputs.s)?;
    let (coef_bound, signal_bound) = synthesis_error_bounds(
        inputs.gamma,
        inputs.eta,
        inputs.width_constant,
        inputs.sigma,
        sigma_s,
        inputs.eps,
        dict.op_norm(),
    )?;
    let err_x = (&result.x_hat - x0).norm();
    let err_z = (dict.matrix() * (&result.x_hat - x0)).norm();
    let slack = AUDIT_TOL * (1.0 + x0.norm());
    Ok(RecoveryReport {
        err_x,
        err_z,
        sigma_s,
        coef_bound,
        signal_bound,
        violated_x: err_x > coef_bound + slack,
        violated_z: err_z > signal_bound + dict.op_norm() * slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsp::certify_nsp;
    use crate::numerics::RngStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn planted(rng: &mut RngStream, n: usize, s: usize) -> Vector {
        let mut x = Vector::zeros(n);
        for i in rng.subset(n, s) {
            x[i] = rng.gaussian();
        }
        x
    }

    #[test]
    fn best_s_term_examples() {
        assert_eq!(best_s_term_error(&[3.0, 1.0, -2.0], 1).unwrap(), 3.0);
        assert_eq!(best_s_term_error(&[3.0, 1.0, -2.0], 3).unwrap(), 0.0);
        assert_eq!(best_s_term_error(&[0.0, 5.0, 0.0], 1).unwrap(), 0.0);
        assert!(best_s_term_error(&[1.0], 2).is_err());
    }

    #[test]
    fn bp_examples() {
        let y = Vector::from_row_slice(&[1.5, -2.0, 0.25]);
        let r = solve_bp_lp(&Matrix::identity(3, 3), &y, 1e-9).unwrap();
        assert!((&r.x_hat - &y).norm() < 1e-12);

        let b = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let r = solve_bp_lp(&b, &Vector::from_row_slice(&[1.0, 1.0]), 1e-9).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((&r.x_hat - Vector::from_row_slice(&[0.0, 0.0, 1.0])).norm() < 1e-12);
        assert_relative_eq!(r.objective, 1.0, epsilon = 1e-12);

        let r = solve_bp_lp(
            &Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            &Vector::from_row_slice(&[2.0]),
            1e-9,
        )
        .unwrap();
        assert_relative_eq!(r.objective, 2.0, epsilon = 1e-12);

        let b = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = solve_bp_lp(&b, &Vector::from_row_slice(&[1.0, 2.0]), 1e-9).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn admm_examples() {
        let y = Vector::from_row_slice(&[1.5, -2.0, 0.25, 0.0]);
        let p = RecoveryProblem::new(Matrix::identity(4, 4), y.clone(), 0.0, None).unwrap();
        let r = solve_l1_synthesis(&p, &AdmmParams::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((&r.x_hat - &y).norm() < 1e-8);

        let p = RecoveryProblem::new(Matrix::identity(4, 4), y.clone(), y.norm(), None).unwrap();
        let r = solve_l1_synthesis(&p, &AdmmParams::default()).unwrap();
        assert_eq!(r.x_hat.norm(), 0.0);
        assert_eq!(r.objective, 0.0);

        let b = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = RecoveryProblem::new(b, Vector::from_row_slice(&[1.0, 2.0]), 0.1, None).unwrap();
        assert_eq!(
            solve_l1_synthesis(&p, &AdmmParams::default()).unwrap().status,
            SolveStatus::Infeasible
        );
        assert!(RecoveryProblem::new(Matrix::identity(2, 2), Vector::zeros(3), 0.0, None).is_err());
        assert!(RecoveryProblem::new(Matrix::identity(2, 2), Vector::zeros(2), -1.0, None).is_err());
    }

    #[test]
    fn admm_matches_lp_on_random_instances() {
        let mut rng = RngStream::new(50, 0);
        for trial in 0..10 {
            let b = Matrix::from_fn(20, 40, |_, _| rng.gaussian());
            let x0 = planted(&mut rng, 40, 3);
            let y = &b * &x0;
            let lp = solve_bp_lp(&b, &y, 1e-9).unwrap();
            let p = RecoveryProblem::new(b.clone(), y.clone(), 0.0, None).unwrap();
            let ad = solve_l1_synthesis(&p, &AdmmParams::default()).unwrap();
            assert_eq!(ad.status, SolveStatus::Converged, "trial {trial}");
            assert!(
                (ad.objective - lp.objective).abs() < 1e-6,
                "trial {trial}: {} vs {}",
                ad.objective,
                lp.objective
            );
            assert!(lp.objective <= x0.lp_norm(1) + 1e-9);
        }
    }

    #[test]
    fn noisy_residual_within_eps() {
        let mut rng = RngStream::new(51, 0);
        for _ in 0..5 {
            let b = Matrix::from_fn(15, 30, |_, _| rng.gaussian());
            let x0 = planted(&mut rng, 30, 2);
            let mut e = Vector::from_fn(15, |_, _| rng.gaussian());
            e *= 0.05 / e.norm();
            let y = &b * &x0 + e;
            let p = RecoveryProblem::new(b, y, 0.05, None).unwrap();
            let r = solve_l1_synthesis(&p, &AdmmParams::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Converged);
            assert!(r.residual_norm <= 0.05 + 1e-6, "{}", r.residual_norm);
            assert!(r.objective <= x0.lp_norm(1) + 1e-6);
        }
    }

    #[test]
    fn recovery_follows_certificate() {
        let mut rng = RngStream::new(52, 0);
        let mut seen = (false, false);
        for _ in 0..30 {
            let b = Matrix::from_fn(4, 7, |_, _| rng.gaussian());
            let cert = certify_nsp(&b, 1, 1e-9).unwrap();
            if cert.holds() {
                seen.0 = true;
                for _ in 0..20 {
                    let x0 = planted(&mut rng, 7, 1);
                    let r = solve_bp_lp(&b, &(&b * &x0), 1e-9).unwrap();
                    assert!((&r.x_hat - &x0).amax() < 1e-6);
                }
            } else {
                seen.1 = true;
                let w = cert.witness.unwrap();
                let mut x0 = Vector::zeros(7);
                for &i in &w.support {
                    x0[i] = w.x[i];
                }
                let r = solve_bp_lp(&b, &(&b * &x0), 1e-9).unwrap();
                assert!((&r.x_hat - &x0).amax() > 1e-6 || r.objective < x0.lp_norm(1) - 1e-9 || cert.gamma_star == 1.0);
            }
        }
        assert!(seen.0 && seen.1, "{seen:?}");
    }

    #[test]
    fn evaluate_examples() {
        let d = Dictionary::identity(3);
        let x0 = Vector::from_row_slice(&[1.0, 0.0, 0.0]);
        let exact = RecoveryResult::finish(
            &Matrix::identity(3, 3),
            &x0,
            x0.clone(),
            None,
            1,
            SolveStatus::Converged,
        );
        let inputs = RecoveryBoundInputs {
            gamma: 0.5,
            eta: 1.0,
            eps: 0.0,
            width_constant: 1.0,
            sigma: 1.0,
            s: 1,
        };
        let rep = evaluate_recovery(&x0, &exact, &d, &inputs).unwrap();
        assert_eq!((rep.err_x, rep.err_z, rep.coef_bound), (0.0, 0.0, 0.0));
        assert!(!rep.violated());

        let rep = evaluate_recovery(&x0, &exact, &d, &RecoveryBoundInputs { eps: 0.1, ..inputs }).unwrap();
        assert_relative_eq!(rep.coef_bound, 0.2, epsilon = 1e-15);

        let two = Dictionary::from_matrix(Matrix::identity(3, 3) * 2.0).unwrap();
        let rep = evaluate_recovery(&x0, &exact, &two, &RecoveryBoundInputs { eps: 0.1, ..inputs }).unwrap();
        assert_relative_eq!(rep.signal_bound, two.op_norm() * rep.coef_bound, max_relative = 1e-15);

        let off = RecoveryResult::finish(
            &Matrix::identity(3, 3),
            &x0,
            Vector::zeros(3),
            None,
            1,
            SolveStatus::Converged,
        );
        assert!(evaluate_recovery(&x0, &off, &d, &inputs).unwrap().violated_x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lp_objective_is_minimal(seed in 0u64..10_000) {
            let mut rng = RngStream::new(seed, 3);
            let b = Matrix::from_fn(4, 8, |_, _| rng.gaussian());
            let x0 = Vector::from_fn(8, |_, _| rng.gaussian());
            let r = solve_bp_lp(&b, &(&b * &x0), 1e-9).unwrap();
            prop_assert_eq!(r.status, SolveStatus::Converged);
            prop_assert!(r.objective <= x0.lp_norm(1) + 1e-9);
            prop_assert!(r.residual_norm <= 1e-8 * (1.0 + x0.norm()));
        }

        #[test]
        fn sigma_s_is_monotone(v in proptest::collection::vec(-5.0f64..5.0, 1..10)) {
            let mut prev = f64::INFINITY;
            for s in 0..=v.len() {
                let e = best_s_term_error(&v, s).unwrap();
                prop_assert!(e <= prev + 1e-12);
                prev = e;
            }
            let total: f64 = v.iter().map(|a| a.abs()).sum();
            prop_assert!((best_s_term_error(&v, 0).unwrap() - total).abs() <= 1e-12 * (1.0 + total));
        }
    }
}
