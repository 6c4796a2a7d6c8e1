//! Photon-number statistics of the two-mode squeezed pair source and the
//! closed-form correlation predictors checked against it.
//!
//! The generative model is a diagonal joint state: both modes always carry
//! the same photon number `n`, and `n` is thermally distributed,
//! P(n) = mu^n / (1 + mu)^(n+1). Every loss in the apparatus is binomial
//! thinning of that number, which keeps the marginals thermal.

use crate::error::{Error, Result};
use rand::Rng;

/// Joint photon-number model of the pair source: one thermal number shared
/// by both modes. `mu` is the mean pair number per trial and plays the role
/// of the excitation probability in the low-`mu` limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairNumberModel {
    pub mu: f64,
}

impl PairNumberModel {
    pub fn new(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::domain(format!("mean pair number must be >= 0, got {mu}")));
        }
        Ok(Self { mu })
    }

    /// Draw one joint pair number by inverse-CDF of the geometric law.
    /// O(1) and exact; the same count applies to both modes.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        sample_pair_number(self, rng)
    }
}

/// Thermal probability mass mu^n / (1+mu)^(n+1).
///
/// For `mu = 0` this is 1 at n = 0 and 0 elsewhere.
pub fn thermal_pmf(mu: f64, n: u32) -> Result<f64> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::domain(format!("thermal_pmf: mu must be >= 0, got {mu}")));
    }
    if mu == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let q = mu / (1.0 + mu);
    // mu^n/(1+mu)^(n+1) = q^n / (1+mu), evaluated in log space for large n.
    Ok(((n as f64) * q.ln() - (1.0 + mu).ln()).exp())
}

/// Draw a joint pair number from the thermal law.
pub fn sample_pair_number<R: Rng + ?Sized>(model: &PairNumberModel, rng: &mut R) -> u32 {
    if model.mu == 0.0 {
        return 0;
    }
    let q = model.mu / (1.0 + model.mu);
    // v in (0, 1] so the logarithm stays finite.
    let v = 1.0 - rng.random::<f64>();
    (v.ln() / q.ln()).floor() as u32
}

/// Thermal count conditioned on being at least one: used by the event-skip
/// sampler in the chain simulator. Distribution of `n - 1` is geometric with
/// the same ratio.
pub(crate) fn sample_pair_number_tail<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u32 {
    let q = mu / (1.0 + mu);
    let v = 1.0 - rng.random::<f64>();
    1 + (v.ln() / q.ln()).floor() as u32
}

/// Binomial thinning: each of `n` photons independently survives with
/// probability `eta`. Models every transmission / efficiency factor.
pub fn binomial_thin<R: Rng + ?Sized>(n: u32, eta: f64, rng: &mut R) -> Result<u32> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("transmission must be in [0, 1], got {eta}")));
    }
    Ok(thin_unchecked(n, eta, rng))
}

/// Thinning hot path with the range check hoisted out.
pub(crate) fn thin_unchecked<R: Rng + ?Sized>(n: u32, eta: f64, rng: &mut R) -> u32 {
    if eta == 1.0 {
        return n;
    }
    if eta == 0.0 {
        return 0;
    }
    let mut kept = 0;
    for _ in 0..n {
        if rng.random::<f64>() < eta {
            kept += 1;
        }
    }
    kept
}

/// Ideal normalized cross-correlation of the diagonal thermal joint state:
/// <n_s n_as> / (<n_s><n_as>) = 2 + 1/mu.
pub fn g2_cross_ideal(mu: f64) -> Result<f64> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::domain(format!("g2_cross_ideal: mu must be > 0, got {mu}")));
    }
    Ok(2.0 + 1.0 / mu)
}

/// Ideal unconditional autocorrelation of a thermal marginal.
pub fn g2_auto_ideal() -> f64 {
    2.0
}

/// Cross-correlation surviving a conversion stage with conditional
/// signal-to-noise ratio `snr`:
///
/// g2_out = g2_in * (snr + 1) / (snr + g2_in)
///
/// Saturates at 1 + snr for large g2_in and approaches g2_in for large snr.
pub fn predict_g2_after_conversion(g2_in: f64, snr: f64) -> Result<f64> {
    if g2_in.is_nan() || g2_in < 0.0 {
        return Err(Error::domain(format!("g2_in must be >= 0, got {g2_in}")));
    }
    if snr.is_nan() || snr < 0.0 {
        return Err(Error::domain(format!("snr must be >= 0, got {snr}")));
    }
    if snr == f64::INFINITY {
        return Ok(g2_in);
    }
    if g2_in == f64::INFINITY {
        return Ok(snr + 1.0);
    }
    if snr + g2_in == 0.0 {
        return Err(Error::domain("snr + g2_in must be > 0".to_string()));
    }
    Ok(g2_in * (snr + 1.0) / (snr + g2_in))
}

/// Input correlation, conversion SNR, and the predicted output correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionPrediction {
    pub g2_in: f64,
    pub snr: f64,
    pub g2_out: f64,
}

impl ConversionPrediction {
    pub fn evaluate(g2_in: f64, snr: f64) -> Result<Self> {
        let g2_out = predict_g2_after_conversion(g2_in, snr)?;
        Ok(Self { g2_in, snr, g2_out })
    }
}

/// Smallest count at which the cumulative thermal probability reaches
/// `1 - tail`. Used to truncate pmf sums.
pub fn thermal_truncation(mu: f64, tail: f64) -> u32 {
    if mu == 0.0 {
        return 0;
    }
    let q = mu / (1.0 + mu);
    // 1 - CDF(k) = q^(k+1) <= tail
    let k = (tail.ln() / q.ln() - 1.0).ceil();
    k.max(0.0) as u32
}
