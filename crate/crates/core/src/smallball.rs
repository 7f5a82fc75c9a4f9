//! Small-ball quantities `Q_xi` and `W_m`, the resulting lower bound on
//! `inf ||Phi D x||_2`, and the measurement-count calculators.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::nsp::{in_s_gamma, SgammaParams};
use crate::numerics::{nonincreasing_rearrangement, par_samples, MeanEstimate, RngStream, Vector};
use crate::subgaussian::SubgaussianSpec;
use crate::width::{cone_width_sample, ConeParams};

const PROBE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormulaId {
    #[serde(rename = "thm_S")]
    ThmS,
    #[serde(rename = "thm_main")]
    ThmMain,
    #[serde(rename = "cor_non")]
    CorNon,
    #[serde(rename = "cor_sgauss")]
    CorSgauss,
    #[serde(rename = "thm_main_gauss")]
    ThmMainGauss,
}

impl FormulaId {
    pub const ALL: [FormulaId; 5] = [
        FormulaId::ThmS,
        FormulaId::ThmMain,
        FormulaId::CorNon,
        FormulaId::CorSgauss,
        FormulaId::ThmMainGauss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FormulaId::ThmS => "thm_S",
            FormulaId::ThmMain => "thm_main",
            FormulaId::CorNon => "cor_non",
            FormulaId::CorSgauss => "cor_sgauss",
            FormulaId::ThmMainGauss => "thm_main_gauss",
        }
    }
}

impl fmt::Display for FormulaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormulaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FormulaId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown formula id `{s}`")))
    }
}

/// Parameters shared by every measurement bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub eta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub sigma: f64,
    #[serde(rename = "C")]
    pub width_constant: f64,
    pub s: usize,
    pub n: usize,
    pub d: usize,
    /// Covariance condition number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("C", self.width_constant),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.s == 0 || self.s > self.n {
            return Err(Error::invalid(format!(
                "sparsity s = {} must lie in 1..={}",
                self.s, self.n
            )));
        }
        if let Some(k) = self.kappa {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(Error::invalid(format!("kappa must be >= 1, got {k}")));
            }
        }
        Ok(())
    }

    fn kappa_for(&self, f: FormulaId) -> Result<f64> {
        self.kappa
            .ok_or_else(|| Error::invalid(format!("formula {f} needs the condition number kappa")))
    }

    /// `log(sqrt(2) n / s)`.
    fn log_ratio(&self) -> f64 {
        (2f64.sqrt() * self.n as f64 / self.s as f64).ln()
    }
}

/// Minimum number of measurements required by `formula`.
///
/// `width` is `w(D S)` and is required for `thm_S` only.
pub fn m_min(formula: FormulaId, b: &BoundInputs, width: Option<f64>) -> Result<f64> {
    b.validate()?;
    let (eta2, s, rho, g2) = (b.eta * b.eta, b.s as f64, b.rho, b.gamma * b.gamma);
    let ratio6 = (b.sigma / b.alpha).powi(6);
    let c2 = b.width_constant * b.width_constant;
    let v = match formula {
        FormulaId::ThmS => {
            let w = width.ok_or_else(|| Error::invalid("formula thm_S needs the width w(DS)"))?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("width must be finite and >= 0, got {w}")));
            }
            4f64.powi(8) / eta2 * ratio6 * c2 * w * w
        }
        FormulaId::ThmMain => 36.0 * 4f64.powi(8) / eta2 * ratio6 * rho / g2 * c2 * s * b.log_ratio(),
        FormulaId::CorNon => {
            let k = b.kappa_for(formula)?;
            9.0 * 2f64.powi(15) * PI.powi(3) / eta2 * rho * k.powi(3) / g2 * s * b.log_ratio()
        }
        FormulaId::CorSgauss => 9.0 * 2f64.powi(15) * PI.powi(3) / eta2 * rho / g2 * s * b.log_ratio(),
        FormulaId::ThmMainGauss => {
            let k = b.kappa_for(formula)?;
            18.0 * 2f64.powi(9) * PI * E / eta2 * rho * k / g2 * s * (2.0 * b.n as f64).ln()
        }
    };
    Ok(v)
}

/// Exponential rate in the success probability `1 - exp(-m rate)`.
///
/// `cor_non` uses `kappa^2 / (4^5 pi^2)` exactly as printed, although a
/// growing condition number then improves the probability.
pub fn rate(formula: FormulaId, b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    Ok(match formula {
        FormulaId::ThmS | FormulaId::ThmMain => b.alpha.powi(4) / (64f64.powi(2) * b.sigma.powi(4)),
        FormulaId::CorNon => b.kappa_for(formula)?.powi(2) / (4f64.powi(5) * PI * PI),
        FormulaId::CorSgauss => 1.0 / (4f64.powi(5) * PI * PI),
        FormulaId::ThmMainGauss => 1.0 / (128.0 * E * PI),
    })
}

/// `1 - exp(-m rate)` for a real measurement count `m >= 0`.
pub fn success_probability(formula: FormulaId, b: &BoundInputs, m: f64) -> Result<f64> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::invalid(format!("m must be finite and >= 0, got {m}")));
    }
    Ok(-(-m * rate(formula, b)?).exp_m1())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBound {
    pub formula_id: FormulaId,
    pub m_min: f64,
    pub rate: f64,
}

impl MeasurementBound {
    pub fn new(formula: FormulaId, b: &BoundInputs, width: Option<f64>) -> Result<Self> {
        Ok(MeasurementBound {
            formula_id: formula,
            m_min: m_min(formula, b, width)?,
            rate: rate(formula, b)?,
        })
    }

    pub fn success_prob_at(&self, m: f64) -> f64 {
        -(-m * self.rate).exp_m1()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MendelsonBound {
    pub value: f64,
    /// Probability `1 - exp(-t^2 / 2)` with which the bound holds.
    pub probability: f64,
}

/// `(alpha eta / 64) (alpha / sigma)^2 sqrt(m) - 2 C sigma w - (alpha eta / 4) t`.
pub fn mendelson_lower_bound(b: &BoundInputs, width: f64, m: f64, t: f64) -> Result<MendelsonBound> {
    b.validate()?;
    if !(t > 0.0) || !(m >= 0.0) || !(width >= 0.0) {
        return Err(Error::invalid("mendelson_lower_bound needs t > 0, m >= 0, width >= 0"));
    }
    let ae = b.alpha * b.eta;
    let value =
        ae / 64.0 * (b.alpha / b.sigma).powi(2) * m.sqrt() - 2.0 * b.width_constant * b.sigma * width - ae / 4.0 * t;
    Ok(MendelsonBound {
        value,
        probability: -(-t * t / 2.0).exp_m1(),
    })
}

/// Recovery guarantees `(coefficients, signal)` for l1-synthesis:
/// `((2 gamma + 2)/(1 - gamma)) sigma_s + 2 eps / (C sigma eta)` and the same
/// scaled by `||D||_2`.
pub fn synthesis_error_bounds(
    gamma: f64,
    eta: f64,
    width_constant: f64,
    sigma: f64,
    sigma_s: f64,
    eps: f64,
    d_norm: f64,
) -> Result<(f64, f64)> {
    if !(width_constant > 0.0 && sigma > 0.0) || !(d_norm >= 0.0) {
        return Err(Error::invalid("C and sigma must be positive, ||D|| nonnegative"));
    }
    let coef = crate::nsp::recovery_error_bound(gamma, width_constant * sigma * eta, sigma_s, eps)?;
    Ok((coef, d_norm * coef))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    /// Smallest empirical frequency over the probes; bounds the infimum from above.
    pub value: f64,
    /// Binomial standard error at the minimizing probe.
    pub std_error: f64,
    pub probe_index: usize,
    pub samples: usize,
}

/// Empirical `min_x P(|<D x, phi>| >= xi)` over the probe set, on shared draws of `phi`.
pub fn estimate_q(
    spec: &SubgaussianSpec,
    dict: &Dictionary,
    probes: &[Vector],
    p: &SgammaParams,
    xi: f64,
    samples: usize,
    rng: &RngStream,
) -> Result<QEstimate> {
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::invalid(format!("xi must be finite and >= 0, got {xi}")));
    }
    if probes.is_empty() || samples == 0 {
        return Err(Error::invalid("estimate_q needs probes and samples"));
    }
    if spec.dim() != dict.d() {
        return Err(Error::dim(format!(
            "spec dimension {} differs from d = {}",
            spec.dim(),
            dict.d()
        )));
    }
    for (i, x) in probes.iter().enumerate() {
        if x.len() != dict.n() || !in_s_gamma(x.as_slice(), p, PROBE_TOL) {
            return Err(Error::invalid(format!("probe {i} is not a member of S_gamma")));
        }
    }
    let images: Vec<Vector> = probes.iter().map(|x| dict.matrix() * x).collect();
    let hits = par_samples(samples, rng, |r| {
        let phi = spec.sample_row(r);
        images.iter().map(|z| z.dot(&phi).abs() >= xi).collect::<Vec<bool>>()
    });
    let mut counts = vec![0usize; probes.len()];
    for row in &hits {
        for (c, &h) in counts.iter_mut().zip(row) {
            *c += h as usize;
        }
    }
    let (probe_index, &count) = counts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("nonempty probes");
    let n = samples as f64;
    let value = count as f64 / n;
    Ok(QEstimate {
        value,
        std_error: (value * (1.0 - value) / n).sqrt(),
        probe_index,
        samples,
    })
}

/// Mean empirical width `E sup_{x in S_gamma} <x, (1/sqrt m) sum eps_i D^T phi_i>`.
pub fn estimate_w(
    spec: &SubgaussianSpec,
    dict: &Dictionary,
    c: &ConeParams,
    m: usize,
    samples: usize,
    rng: &RngStream,
) -> Result<MeanEstimate> {
    if m == 0 || samples == 0 {
        return Err(Error::invalid("estimate_w needs m >= 1 and samples >= 1"));
    }
    if spec.dim() != dict.d() || c.n != dict.n() {
        return Err(Error::dim("spec, dictionary and cone dimensions disagree"));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let d = dict.matrix();
    let values = par_samples(samples, rng, |r| {
        let mut acc = Vector::zeros(dict.d());
        for _ in 0..m {
            let eps = r.rademacher();
            acc += spec.sample_row(r) * eps;
        }
        let h = d.tr_mul(&(acc * scale));
        cone_width_sample(&nonincreasing_rearrangement(h.as_slice()), c)
    });
    Ok(MeanEstimate::from_samples(&values))
}
