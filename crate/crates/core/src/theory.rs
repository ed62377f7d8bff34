//! Closed-form quantities: the graph signal-to-noise ratio, separability
//! scales, the mid-point ansatz classifier and the loss rates and bounds it
//! implies.
//!
//! Asymptotic statements are exposed as plain formulas; constants and
//! `(1 + o(1))` factors are dropped, and callers compare against them with
//! explicit tolerance bands.

use alloc::format;
use alloc::vec::Vec;

use crate::csbm::CsbmParams;
use crate::error::{Error, Result};
use crate::math::{distance, dot, normal_cdf};
use crate::optim::Classifier;

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryContext {
    pub params: CsbmParams,
    pub radius: f64,
    pub beta0: f64,
    pub beta1: f64,
}

impl TheoryContext {
    pub fn new(params: CsbmParams, radius: f64, beta0: f64, beta1: f64) -> Self {
        TheoryContext {
            params,
            radius,
            beta0,
            beta1,
        }
    }

    /// `γ = ‖μ - ν‖₂ / 2`.
    pub fn gamma(&self) -> f64 {
        distance(&self.params.mu, &self.params.nu) / 2.0
    }

    /// Expected degree scale `Δ = n(p + q)/2`.
    pub fn expected_degree(&self) -> f64 {
        self.params.n as f64 * (self.params.p + self.params.q) / 2.0
    }
}

/// `Γ(p, q) = (p - q)/(p + q)`, correctly rounded in practice: the rounding
/// errors of the sum and difference are carried into one correction step.
pub fn gamma_snr(p: f64, q: f64) -> Result<f64> {
    let (sum, sum_err) = two_sum(p, q);
    if !(sum > 0.0) {
        return Err(Error::Domain(format!("p + q = {sum} must be positive")));
    }
    let (diff, diff_err) = two_sum(p, -q);
    let ratio = diff / sum;
    let residual = libm::fma(-ratio, sum, diff) + diff_err - ratio * sum_err;
    Ok(ratio + residual / sum)
}

/// `a + b` and its exact rounding error.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Distance scales between the class means.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Thresholds {
    /// `K/√d`: below this the raw data is not separable.
    pub raw_scale: f64,
    /// `1/√(d·n(p+q)/2)`: below (a constant times) this the convolved data
    /// is not separable.
    pub convolved_lower: f64,
    /// `log n/√(d·n(p+q)/2)`: above this the convolved data is separable.
    pub convolved_upper: f64,
    /// `1/√(d·n(p+q))` and `log n/√(d·n(p+q))`: the same markers without the
    /// factor 1/2 under the root. Reported alongside because both forms are
    /// in circulation.
    pub convolved_lower_unhalved: f64,
    pub convolved_upper_unhalved: f64,
}

/// Natural logarithm throughout; `k` is the caller's constant for the raw
/// scale. Infinite convolved scales are returned when `p + q = 0`.
pub fn thresholds(ctx: &TheoryContext, k: f64) -> Thresholds {
    let d = ctx.params.d as f64;
    let n = ctx.params.n as f64;
    let degree = ctx.expected_degree();
    let log_n = libm::log(n);
    let root = libm::sqrt(d * degree);
    let unhalved = libm::sqrt(d * 2.0 * degree);
    Thresholds {
        raw_scale: k / libm::sqrt(d),
        convolved_lower: 1.0 / root,
        convolved_upper: log_n / root,
        convolved_lower_unhalved: 1.0 / unhalved,
        convolved_upper_unhalved: log_n / unhalved,
    }
}

/// The mid-point classifier `w̃ = (R/2γ)(ν - μ)`, `b̃ = -⟨μ + ν, w̃⟩/2`.
pub fn ansatz_classifier(mu: &[f64], nu: &[f64], radius: f64) -> Result<Classifier> {
    if mu.len() != nu.len() {
        return Err(Error::Shape(format!(
            "mean lengths {} and {} differ",
            mu.len(),
            nu.len()
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius = {radius} must be positive")));
    }
    let gamma = distance(mu, nu) / 2.0;
    if gamma == 0.0 {
        return Err(Error::DegenerateMeans);
    }
    let scale = radius / (2.0 * gamma);
    let w: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| scale * (b - a)).collect();
    let sum: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| a + b).collect();
    let b = -dot(&sum, &w) / 2.0;
    Ok(Classifier { w, b, radius })
}

/// `exp(-R·γ·Γ(p, q))`. Requires `p > q`.
pub fn ansatz_loss_rate(ctx: &TheoryContext) -> Result<f64> {
    let (p, q) = (ctx.params.p, ctx.params.q);
    if !(p > q) {
        return Err(Error::Domain(format!("ansatz rate needs p > q, got p = {p}, q = {q}")));
    }
    let snr = gamma_snr(p, q)?;
    Ok(libm::exp(-ctx.radius * ctx.gamma() * snr))
}

/// `2·min(β₀, β₁)·Φ(-(K/2)(1 + t))·log 2`.
pub fn raw_loss_lower_bound(k: f64, t: f64, beta0: f64, beta1: f64) -> f64 {
    2.0 * beta0.min(beta1) * normal_cdf(-(k / 2.0) * (1.0 + t)) * core::f64::consts::LN_2
}

/// `exp(-(R/2)·‖μ - ν‖·Γ(p', q'))`, the out-of-distribution rate with its
/// leading constant omitted.
pub fn ood_loss_rate(radius: f64, mu: &[f64], nu: &[f64], p_test: f64, q_test: f64) -> Result<f64> {
    let snr = gamma_snr(p_test, q_test)?;
    Ok(libm::exp(-(radius / 2.0) * distance(mu, nu) * snr))
}
