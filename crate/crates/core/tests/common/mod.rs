//! Shared oracles and stream generators for the integration suites.
//!
//! The chain oracle predicts the click-level statistics of the simulated
//! write-read chain in closed form, from the generating function of the
//! thermal pair number: E[x^n] = 1 / (1 + mu (1 - x)). It is independent of
//! the Monte Carlo path and is what the estimators are checked against.

#![allow(dead_code)]

use heraldsim::sim::TagStream;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;

/// Click-level description of one cross-correlation chain point.
#[derive(Debug, Clone, Copy)]
pub struct ChainPoint {
    /// Mean pair number per trial.
    pub mu: f64,
    /// Total detected herald-arm transmission (arm optics x detector).
    pub eta_s: f64,
    /// Total detected retrieved-arm transmission.
    pub eta_as: f64,
    /// Mean dark counts per gate, herald detector.
    pub dark_s: f64,
    /// Mean dark counts per gate, retrieved detector.
    pub dark_as: f64,
    /// Mean detected uncorrelated background per gate on the retrieved arm.
    pub background_as: f64,
    /// Emission-time jitter sigmas.
    pub sigma_s: f64,
    pub sigma_as: f64,
    /// Detector gate width (also the coincidence window).
    pub gate_s: f64,
    /// Accidental-histogram half width in trials.
    pub max_offset: u32,
    pub trials_per_cycle: u64,
}

/// Expected click probabilities and the ratio-estimator value.
#[derive(Debug, Clone, Copy)]
pub struct ChainExpectation {
    pub p_s: f64,
    pub p_as: f64,
    /// Windowed coincidence probability per trial.
    pub p_joint: f64,
    /// Expected value of the trial-offset ratio estimator.
    pub g2: f64,
    /// Expected measured retrieval efficiency for a given detector
    /// efficiency divided out (filled by the caller).
    pub conditional_click: f64,
}

impl ChainPoint {
    pub fn expectation(&self) -> ChainExpectation {
        let mu = self.mu;
        let g = |x: f64| 1.0 / (1.0 + mu * (1.0 - x));
        let no_dark_s = (-self.dark_s).exp();
        let no_bg_as = (-(self.dark_as + self.background_as)).exp();
        let lam_s = self.dark_s;
        let lam_as = self.dark_as + self.background_as;

        let p_s = 1.0 - no_dark_s * g(1.0 - self.eta_s);
        let p_as = 1.0 - no_bg_as * g(1.0 - self.eta_as);

        // photon-photon joint click probability
        let j_pp = 1.0 - g(1.0 - self.eta_s) - g(1.0 - self.eta_as)
            + g((1.0 - self.eta_s) * (1.0 - self.eta_as));
        let p_s_photon = 1.0 - g(1.0 - self.eta_s);
        let p_as_photon = 1.0 - g(1.0 - self.eta_as);

        // window capture factors per origin pair: photon times stay
        // gaussian around the gate center, dark/background times are
        // uniform over the gate; the coincidence window equals the gate
        let half = 0.5 * self.gate_s;
        let sigma_d = (self.sigma_s.powi(2) + self.sigma_as.powi(2)).sqrt();
        let c_pp = if sigma_d > 0.0 {
            erf(half / (std::f64::consts::SQRT_2 * sigma_d))
        } else {
            1.0
        };
        // uniform-vs-gaussian edge loss is 2 (sigma/G) E[max(Z, 0)]
        let edge = |sigma: f64| {
            1.0 - 2.0 * (sigma / self.gate_s) / (2.0 * std::f64::consts::PI).sqrt()
        };
        let c_pu = edge(self.sigma_s);
        let c_up = edge(self.sigma_as);
        let c_uu = 0.75;

        let p_joint = c_pp * j_pp
            + c_pu * p_s_photon * lam_as
            + c_up * lam_s * p_as_photon
            + c_uu * lam_s * lam_as;

        // the same clipping acts on the accidental bins, weighted by the
        // click-origin mixture on each side
        let w_s_photon = p_s_photon / p_s;
        let w_s_unif = 1.0 - w_s_photon;
        let w_as_photon = p_as_photon / p_as;
        let w_as_unif = 1.0 - w_as_photon;
        let capture_acc = w_s_photon * (w_as_photon * c_pp + w_as_unif * c_pu)
            + w_s_unif * (w_as_photon * c_up + w_as_unif * c_uu);

        // accidental bins also lose |n| trial pairs per cycle
        let mean_offset = (1..=self.max_offset as u64).sum::<u64>() as f64 / self.max_offset as f64;
        let depletion = 1.0 - mean_offset / self.trials_per_cycle as f64;

        let g2 = p_joint / (p_s * p_as * depletion * capture_acc);
        ChainExpectation {
            p_s,
            p_as,
            p_joint,
            g2,
            conditional_click: p_joint / p_s,
        }
    }
}

/// Deterministic standard normal draw.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Independent per-trial Bernoulli click stream with tags uniform in a
/// 40 ns gate: the classical (Poissonized coherent) control field.
pub fn coherent_stream(id: &str, p_click: f64, offset: f64, trials: u64, seed: u64) -> TagStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.4e-6;
    let gate = 40e-9;
    let mut tags = Vec::new();
    for trial in 0..trials {
        if rng.random::<f64>() < p_click {
            tags.push(trial as f64 * dt + offset + gate * (rng.random::<f64>() - 0.5));
        }
    }
    TagStream {
        channel_id: id.to_string(),
        tags,
        total_trials: trials,
        trial_period_s: dt,
        storage_delay_s: 330e-9,
    }
}

/// Chi-squared survival probability with `dof` degrees of freedom.
pub fn chi2_pvalue(chi2: f64, dof: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let dist = ChiSquared::new(dof).unwrap();
    1.0 - dist.cdf(chi2)
}

/// Same-trial arrival-time differences (t_b - t_a - delay) within a range,
/// as raw samples for distribution tests.
pub fn conditional_deltas(a: &TagStream, b: &TagStream, half_range: f64) -> Vec<f64> {
    let tau = b.storage_delay_s;
    let mut out = Vec::new();
    let mut start = 0usize;
    for &ta in &a.tags {
        let lo = ta + tau - half_range;
        let hi = ta + tau + half_range;
        while start < b.tags.len() && b.tags[start] < lo {
            start += 1;
        }
        for &tb in &b.tags[start..] {
            if tb > hi {
                break;
            }
            out.push(tb - ta - tau);
        }
    }
    out
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
pub fn ks_two_sample_pvalue(x: &mut [f64], y: &mut [f64]) -> f64 {
    x.sort_by(|a, b| a.total_cmp(b));
    y.sort_by(|a, b| a.total_cmp(b));
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < x.len() && j < y.len() {
        let xi = x[i];
        let yj = y[j];
        if xi <= yj {
            i += 1;
        }
        if yj <= xi {
            j += 1;
        }
        let diff = (i as f64 / n1 - j as f64 / n2).abs();
        d = d.max(diff);
    }
    let ne = (n1 * n2 / (n1 + n2)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Gaussian FWHM of a waveform histogram, by the shared peak fit.
pub fn fitted_fwhm(waveform: &heraldsim::analysis::Waveform) -> (f64, f64) {
    let hist: Vec<(f64, f64)> = waveform
        .bin_centers
        .iter()
        .zip(&waveform.counts)
        .map(|(t, c)| (*t, *c as f64))
        .collect();
    let fit = heraldsim::fit::fit_gaussian_peak(&hist).expect("waveform fit");
    let fwhm = fit.parameter("fwhm").unwrap();
    let sigma = fit.sigma("fwhm").unwrap();
    (fwhm, sigma)
}
