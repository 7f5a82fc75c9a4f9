//! Config-driven experiment campaigns with deterministic CSV output.
//!
//! Every trial draws from its own stream
//! `RngStream::new(seed, mix(mix(label_id(experiment), m), trial))`, and rows
//! are gathered in `(m, trial)` order, so output does not depend on the
//! number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{make_dictionary, Dictionary, DictionaryKind};
use crate::error::{Error, Result};
use crate::nsp::{certified_eta_lower_bound, certify_nsp, Verdict};
use crate::numerics::{format_f64, label_id, mix_stream, RngStream, Vector};
use crate::smallball::{m_min, rate, success_probability, BoundInputs, FormulaId};
use crate::solver::{
    best_s_term_error, evaluate_recovery, solve_l1_synthesis, AdmmParams, RecoveryBoundInputs, RecoveryProblem,
    SolveStatus,
};
use crate::subgaussian::{sample_measurement_matrix, SpecFile, SpecKind, SubgaussianSpec};
use crate::width::{crude_width_bound, theory_width_bound, width_ds_gamma_dual, width_ds_gamma_mc, ConeParams};

/// Verdict tolerance used for every certificate in the harness.
pub const NSP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PreserveNsp,
    PhaseTransition,
    WidthCompare,
    BoundsTable,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::PreserveNsp => "preserve_nsp",
            ExperimentKind::PhaseTransition => "phase_transition",
            ExperimentKind::WidthCompare => "width_compare",
            ExperimentKind::BoundsTable => "bounds_table",
        }
    }
}

/// Grid for `width_compare`; each `n` uses a `round(d_ratio n) x n` dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthGrid {
    pub n: Vec<usize>,
    pub s: Vec<usize>,
    pub gamma: Vec<f64>,
    #[serde(default = "default_width_samples")]
    pub samples: usize,
    #[serde(default = "default_d_ratio")]
    pub d_ratio: f64,
}

fn default_width_samples() -> usize {
    10_000
}

fn default_d_ratio() -> f64 {
    0.5
}

/// Scalar inputs of `bounds_table` that the rest of the config does not carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsSettings {
    pub eta: f64,
    pub rho: f64,
    pub alpha: f64,
    pub sigma: f64,
    #[serde(rename = "C")]
    pub width_constant: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub m: Option<f64>,
}

fn default_success_factor() -> f64 {
    10.0
}

fn default_spec() -> SpecFile {
    SpecFile {
        kind: SpecKind::StdGaussian,
        alpha: None,
        sigma: None,
        width_constant: None,
        covariance_path: None,
    }
}

fn default_dictionary() -> DictionaryKind {
    DictionaryKind::GaussianUnitNorm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    pub n: usize,
    pub s: usize,
    pub gamma: f64,
    #[serde(default = "default_dictionary")]
    pub dictionary: DictionaryKind,
    #[serde(default = "default_spec")]
    pub spec: SpecFile,
    #[serde(default)]
    pub m_grid: Vec<usize>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub eps: f64,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Noisy recovery succeeds when `||x_hat - x0||_2 <= max(1e-6, success_factor eps)`.
    #[serde(default = "default_success_factor")]
    pub success_factor: f64,
    /// Add certified bound columns to `phase_transition`.
    #[serde(default)]
    pub audit: bool,
    #[serde(default)]
    pub width_grid: Option<WidthGrid>,
    #[serde(default)]
    pub bounds: Option<BoundsSettings>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                origin: path.display().to_string(),
                msg: j.to_string(),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::invalid("d and n must be >= 1"));
        }
        if self.s == 0 || self.s > self.n {
            return Err(Error::invalid(format!(
                "sparsity s = {} must lie in 1..={}",
                self.s, self.n
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be finite and >= 0, got {}", self.eps)));
        }
        if !(self.success_factor >= 0.0) {
            return Err(Error::invalid("success_factor must be >= 0"));
        }
        let needs_grid = matches!(
            self.experiment,
            ExperimentKind::PreserveNsp | ExperimentKind::PhaseTransition
        );
        if needs_grid && self.m_grid.is_empty() {
            return Err(Error::invalid("m_grid must be nonempty"));
        }
        if self.m_grid.contains(&0) || self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("m_grid must hold strictly ascending positive counts"));
        }
        if self.experiment == ExperimentKind::BoundsTable && self.bounds.is_none() {
            return Err(Error::invalid("bounds_table needs a `bounds` section"));
        }
        Ok(())
    }

    fn dictionary_kind(&self, base: Option<&Path>) -> DictionaryKind {
        match (&self.dictionary, base) {
            (DictionaryKind::UserMatrix { path }, Some(b)) if path.is_relative() => {
                DictionaryKind::UserMatrix { path: b.join(path) }
            }
            (k, _) => k.clone(),
        }
    }

    fn build_dictionary(&self, base: Option<&Path>) -> Result<Dictionary> {
        let mut rng = RngStream::new(self.seed, label_id("dictionary"));
        make_dictionary(&self.dictionary_kind(base), self.d, self.n, &mut rng)
    }

    fn trial_stream(&self, m: usize, trial: usize) -> RngStream {
        let id = mix_stream(mix_stream(label_id(self.experiment.label()), m as u64), trial as u64);
        RngStream::new(self.seed, id)
    }
}

fn fmt_extended(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format_f64(v)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_extended).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreserveRow {
    pub m: usize,
    pub trial: usize,
    pub verdict: Verdict,
    pub gamma_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreserveOutcome {
    pub dictionary_gamma_star: f64,
    pub rows: Vec<PreserveRow>,
    pub summary: Vec<FrequencyRow>,
}

fn frequencies<T>(m_grid: &[usize], rows: &[T], key: impl Fn(&T) -> (usize, bool)) -> Vec<FrequencyRow> {
    m_grid
        .iter()
        .map(|&m| {
            let hits: Vec<bool> = rows.iter().map(&key).filter(|k| k.0 == m).map(|k| k.1).collect();
            let successes = hits.iter().filter(|&&h| h).count();
            FrequencyRow {
                m,
                trials: hits.len(),
                successes,
                frequency: successes as f64 / hits.len().max(1) as f64,
            }
        })
        .collect()
}

fn tasks(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    cfg.m_grid
        .iter()
        .flat_map(|&m| (0..cfg.trials).map(move |t| (m, t)))
        .collect()
}

fn load_spec(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<SubgaussianSpec> {
    cfg.spec.load(cfg.d, base)
}

/// NSP preservation frequency of `Phi D` over the `m` grid.
///
/// Refuses to sample when `D` itself fails the certificate: `ker D` lies in
/// `ker Phi D`, so no `Phi` can repair it.
pub fn run_preserve_nsp(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<PreserveOutcome> {
    let dict = cfg.build_dictionary(base)?;
    let cert = certify_nsp(dict.matrix(), cfg.s, NSP_TOL)?;
    if !cert.holds() {
        return Err(Error::DictionaryFailsNsp {
            s: cfg.s,
            gamma_star: cert.gamma_star,
        });
    }
    let spec = load_spec(cfg, base)?;
    let rows = tasks(cfg)
        .into_par_iter()
        .map(|(m, trial)| {
            let mut rng = cfg.trial_stream(m, trial);
            let phi = sample_measurement_matrix(&spec, m, cfg.d, &mut rng)?;
            let c = certify_nsp(&(phi * dict.matrix()), cfg.s, NSP_TOL)?;
            Ok(PreserveRow {
                m,
                trial,
                verdict: c.verdict,
                gamma_star: c.gamma_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = frequencies(&cfg.m_grid, &rows, |r| (r.m, r.verdict.holds()));
    Ok(PreserveOutcome {
        dictionary_gamma_star: cert.gamma_star,
        rows,
        summary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditColumns {
    pub gamma_star: f64,
    /// Certified lower bound on `inf ||Phi D x||_2` over `S_gamma`, `gamma = (1 + gamma_star) / 2`.
    pub eta_cert: Option<f64>,
    pub coef_bound: Option<f64>,
    pub bound_violated: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRow {
    pub m: usize,
    pub trial: usize,
    pub success: bool,
    pub err_x: f64,
    pub err_z: f64,
    pub sigma_s: f64,
    pub status: SolveStatus,
    pub audit: Option<AuditColumns>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOutcome {
    pub rows: Vec<PhaseRow>,
    pub summary: Vec<FrequencyRow>,
}

fn planted_sparse(rng: &mut RngStream, n: usize, s: usize) -> Vector {
    let mut x = Vector::zeros(n);
    for i in rng.subset(n, s) {
        x[i] = rng.gaussian();
    }
    x
}

fn sphere_noise(rng: &mut RngStream, m: usize, eps: f64) -> Vector {
    let mut e = Vector::from_fn(m, |_, _| rng.gaussian());
    let nrm = e.norm();
    if eps == 0.0 || nrm == 0.0 {
        return Vector::zeros(m);
    }
    e *= eps / nrm;
    e
}

fn audit_trial(
    b: &crate::numerics::Matrix,
    dict: &Dictionary,
    x0: &Vector,
    result: &crate::solver::RecoveryResult,
    cfg: &ExperimentConfig,
) -> Result<AuditColumns> {
    let cert = certify_nsp(b, cfg.s, NSP_TOL)?;
    let mut cols = AuditColumns {
        gamma_star: cert.gamma_star,
        eta_cert: None,
        coef_bound: None,
        bound_violated: None,
    };
    if !cert.holds() || result.status != SolveStatus::Converged {
        return Ok(cols);
    }
    let gamma = 0.5 * (1.0 + cert.gamma_star);
    let Some(eta) = certified_eta_lower_bound(b, &cert, gamma)? else {
        return Ok(cols);
    };
    let inputs = RecoveryBoundInputs {
        gamma,
        eta,
        eps: cfg.eps,
        width_constant: 1.0,
        sigma: 1.0,
        s: cfg.s,
    };
    let rep = evaluate_recovery(x0, result, dict, &inputs)?;
    cols.eta_cert = Some(eta);
    cols.coef_bound = Some(rep.coef_bound);
    cols.bound_violated = Some(rep.violated_x);
    Ok(cols)
}

/// Recovery success rate of l1-synthesis versus `m` for planted `s`-sparse coefficients.
pub fn run_phase_transition(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<PhaseOutcome> {
    let dict = cfg.build_dictionary(base)?;
    let spec = load_spec(cfg, base)?;
    let params = AdmmParams::default();
    let threshold = (cfg.success_factor * cfg.eps).max(1e-6);
    let rows = tasks(cfg)
        .into_par_iter()
        .map(|(m, trial)| {
            let mut rng = cfg.trial_stream(m, trial);
            let phi = sample_measurement_matrix(&spec, m, cfg.d, &mut rng)?;
            let x0 = planted_sparse(&mut rng, cfg.n, cfg.s);
            let e = sphere_noise(&mut rng, m, cfg.eps);
            let b = phi * dict.matrix();
            let y = &b * &x0 + e;
            let problem = RecoveryProblem::new(b, y, cfg.eps, Some(dict.clone()))?;
            let result = solve_l1_synthesis(&problem, &params)?;
            let err_x = (&result.x_hat - &x0).norm();
            let err_z = (dict.matrix() * (&result.x_hat - &x0)).norm();
            let audit = if cfg.audit {
                Some(audit_trial(&problem.b, &dict, &x0, &result, cfg)?)
            } else {
                None
            };
            Ok(PhaseRow {
                m,
                trial,
                success: err_x <= threshold,
                err_x,
                err_z,
                sigma_s: best_s_term_error(x0.as_slice(), cfg.s)?,
                status: result.status,
                audit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = frequencies(&cfg.m_grid, &rows, |r| (r.m, r.success));
    Ok(PhaseOutcome { rows, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WidthRow {
    pub n: usize,
    pub s: usize,
    pub gamma: f64,
    pub rho: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub dual_mean: f64,
    pub dual_se: f64,
    pub theory_bound: f64,
    pub crude_bound: f64,
}

/// Monte Carlo and dual width estimates against the closed-form bounds.
pub fn run_width_compare(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<Vec<WidthRow>> {
    let grid = cfg.width_grid.clone().unwrap_or(WidthGrid {
        n: vec![cfg.n],
        s: vec![cfg.s],
        gamma: vec![cfg.gamma],
        samples: default_width_samples(),
        d_ratio: cfg.d as f64 / cfg.n as f64,
    });
    let mut rows = Vec::new();
    for &n in &grid.n {
        let d = if cfg.width_grid.is_some() {
            ((grid.d_ratio * n as f64).round() as usize).max(1)
        } else {
            cfg.d
        };
        let mut rng = RngStream::new(cfg.seed, mix_stream(label_id("dictionary"), n as u64));
        let dict = make_dictionary(&cfg.dictionary_kind(base), d, n, &mut rng)?;
        for &s in grid.s.iter().filter(|&&s| s <= n) {
            for &gamma in &grid.gamma {
                let c = ConeParams::new(gamma, s, n)?;
                let key = mix_stream(mix_stream(n as u64, s as u64), gamma.to_bits());
                let stream = RngStream::new(cfg.seed, mix_stream(label_id(cfg.experiment.label()), key));
                let mc = width_ds_gamma_mc(&dict, &c, grid.samples, &stream)?;
                let dual = width_ds_gamma_dual(&dict, &c, grid.samples, &stream)?;
                rows.push(WidthRow {
                    n,
                    s,
                    gamma,
                    rho: dict.rho(),
                    mc_mean: mc.mean,
                    mc_se: mc.std_error,
                    dual_mean: dual.mean,
                    dual_se: dual.std_error,
                    theory_bound: mc.theory_bound,
                    crude_bound: crude_width_bound(&dict),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsRow {
    pub formula_id: FormulaId,
    pub m_min: f64,
    pub rate: f64,
    pub prob_at_m: f64,
}

/// The five measurement bounds. `thm_S` uses `width`, defaulting to the
/// closed-form width bound; probabilities are evaluated at `m`, defaulting to
/// each formula's own `m_min`. Formulas whose inputs are missing are skipped.
pub fn bounds_table(b: &BoundInputs, width: Option<f64>, m: Option<f64>) -> Result<Vec<BoundsRow>> {
    b.validate()?;
    let w = match width {
        Some(w) => w,
        None => theory_width_bound(&ConeParams::new(b.gamma, b.s, b.n)?, b.rho)?,
    };
    let mut rows = Vec::new();
    for f in FormulaId::ALL {
        if matches!(f, FormulaId::CorNon | FormulaId::ThmMainGauss) && b.kappa.is_none() {
            continue;
        }
        let mm = m_min(f, b, Some(w))?;
        let at = m.unwrap_or(mm);
        rows.push(BoundsRow {
            formula_id: f,
            m_min: mm,
            rate: rate(f, b)?,
            prob_at_m: success_probability(f, b, at)?,
        });
    }
    Ok(rows)
}

/// Rendered experiment: the record CSV and an optional summary CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub records: String,
    pub summary: Option<String>,
}

pub fn preserve_csv(out: &PreserveOutcome) -> String {
    let mut s = String::from("m,trial,verdict,gamma_star\n");
    for r in &out.rows {
        let verdict = if r.verdict.holds() { "holds" } else { "fails" };
        let _ = writeln!(s, "{},{},{},{}", r.m, r.trial, verdict, fmt_extended(r.gamma_star));
    }
    s
}

pub fn frequency_csv(rows: &[FrequencyRow], label: &str) -> String {
    let mut s = format!("m,trials,{label},frequency\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.m, r.trials, r.successes, format_f64(r.frequency));
    }
    s
}

pub fn phase_csv(out: &PhaseOutcome) -> String {
    let audit = out.rows.iter().any(|r| r.audit.is_some());
    let mut s = String::from("m,trial,success,err_x,err_z,sigma_s,status");
    if audit {
        s.push_str(",gamma_star,eta_cert,coef_bound,bound_violated");
    }
    s.push('\n');
    for r in &out.rows {
        let status = match r.status {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        };
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            r.m,
            r.trial,
            r.success as u8,
            format_f64(r.err_x),
            format_f64(r.err_z),
            format_f64(r.sigma_s),
            status
        );
        if let Some(a) = &r.audit {
            let flag = a.bound_violated.map(|v| (v as u8).to_string()).unwrap_or_default();
            let _ = write!(
                s,
                ",{},{},{},{}",
                fmt_extended(a.gamma_star),
                fmt_opt(a.eta_cert),
                fmt_opt(a.coef_bound),
                flag
            );
        } else if audit {
            s.push_str(",,,,");
        }
        s.push('\n');
    }
    s
}

pub fn width_csv(rows: &[WidthRow]) -> String {
    let mut s = String::from("n,s,gamma,rho,mc_mean,mc_se,dual_mean,dual_se,theory_bound,crude_bound\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.s,
            format_f64(r.gamma),
            format_f64(r.rho),
            format_f64(r.mc_mean),
            format_f64(r.mc_se),
            format_f64(r.dual_mean),
            format_f64(r.dual_se),
            format_f64(r.theory_bound),
            format_f64(r.crude_bound)
        );
    }
    s
}

pub fn bounds_csv(rows: &[BoundsRow]) -> String {
    let mut s = String::from("formula_id,m_min,rate,prob_at_m\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.formula_id,
            format_f64(r.m_min),
            format_f64(r.rate),
            format_f64(r.prob_at_m)
        );
    }
    s
}

/// Run the configured experiment. Relative paths in the config resolve against `base`.
pub fn run_experiment(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::PreserveNsp => {
            let out = run_preserve_nsp(cfg, base)?;
            Ok(ExperimentOutput {
                records: preserve_csv(&out),
                summary: Some(frequency_csv(&out.summary, "preserved")),
            })
        }
        ExperimentKind::PhaseTransition => {
            let out = run_phase_transition(cfg, base)?;
            Ok(ExperimentOutput {
                records: phase_csv(&out),
                summary: Some(frequency_csv(&out.summary, "successes")),
            })
        }
        ExperimentKind::WidthCompare => Ok(ExperimentOutput {
            records: width_csv(&run_width_compare(cfg, base)?),
            summary: None,
        }),
        ExperimentKind::BoundsTable => {
            let b = cfg.bounds.as_ref().expect("validated");
            let inputs = BoundInputs {
                eta: b.eta,
                gamma: cfg.gamma,
                rho: b.rho,
                alpha: b.alpha,
                sigma: b.sigma,
                width_constant: b.width_constant,
                s: cfg.s,
                n: cfg.n,
                d: cfg.d,
                kappa: b.kappa,
            };
            Ok(ExperimentOutput {
                records: bounds_csv(&bounds_table(&inputs, b.width, b.m)?),
                summary: None,
            })
        }
    }
}

/// `out.csv` -> `out_summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_summary{ext}"))
}

fn stamped(kind: &str, body: &str) -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# nsplab {kind} generated_unix={secs}\n{body}")
}

/// Write records (and summary, if any) with a leading `#` timestamp line.
pub fn write_output(path: &Path, kind: ExperimentKind, out: &ExperimentOutput) -> Result<()> {
    fs::write(path, stamped(kind.label(), &out.records)).map_err(|e| Error::io(path, e))?;
    if let Some(summary) = &out.summary {
        let sp = summary_path(path);
        fs::write(&sp, stamped(kind.label(), summary)).map_err(|e| Error::io(&sp, e))?;
    }
    Ok(())
}

/// CSV text without `#` comment lines, for reproducibility comparisons.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        })
}
