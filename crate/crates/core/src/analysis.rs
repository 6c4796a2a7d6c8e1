//! Recovery of the measured quantities from time-tag streams: coincidence
//! histograms, normalized correlation functions with uncertainties,
//! retrieval efficiencies, conditional waveforms, nonclassicality
//! parameters, and rates.
//!
//! The correlation estimator is the trial-offset ratio: coincidences at the
//! expected arrival-time difference divided by the mean accidental count at
//! the same difference shifted by whole trials.

use crate::error::{Error, Result};
use crate::sim::{SourceParams, TagStream};

/// Coincidence counts per whole-trial shift.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    /// Trial shifts, -max_offset ..= max_offset.
    pub offsets: Vec<i64>,
    pub counts: Vec<u64>,
    pub window_s: f64,
    pub n_trials: u64,
}

/// A normalized correlation value with its counting uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub value: f64,
    /// Poisson-propagated standard error.
    pub sigma: f64,
    pub n_coincidences: u64,
    pub n_accidentals: u64,
}

/// How multiple tag pairs inside one trial pair are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairCounting {
    /// At most one coincidence per (trial, trial-shift) pair.
    #[default]
    AtMostOnePerTrialPair,
    /// Count every tag pair falling in the window.
    AllPairs,
}

/// Conditional arrival-time histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub bin_s: f64,
    /// Bin centers of the arrival-time difference minus the storage delay.
    pub bin_centers: Vec<f64>,
    pub counts: Vec<u64>,
    /// Number of conditioning (herald) tags.
    pub n_heralds: u64,
}

impl Waveform {
    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Histogram span on either side of zero delay.
    pub fn half_range_s(&self) -> f64 {
        self.bin_centers.last().copied().unwrap_or(0.0) + 0.5 * self.bin_s
    }
}

/// Span of the conditional waveform histogram on each side of the expected
/// arrival-time difference.
pub const WAVEFORM_HALF_RANGE_S: f64 = 3.2e-8;

fn species(id: &str) -> &str {
    id.strip_suffix("_a")
        .or_else(|| id.strip_suffix("_b"))
        .unwrap_or(id)
}

/// Expected arrival-time difference between the two streams: the storage
/// delay for a herald/retrieved pair, zero for two detectors watching the
/// same field behind a splitter.
fn pair_delay(a: &TagStream, b: &TagStream) -> f64 {
    if species(&a.channel_id) == species(&b.channel_id) {
        0.0
    } else {
        b.storage_delay_s
    }
}

/// Count pairs with `t_b - t_a` within `window_s / 2` of `delay + n * dt`
/// for every trial shift `|n| <= max_offset`.
pub fn build_histogram(
    a: &TagStream,
    b: &TagStream,
    window_s: f64,
    max_offset: u32,
    counting: PairCounting,
) -> Result<CoincidenceHistogram> {
    let dt = a.trial_period_s;
    if !(dt > 0.0) || (b.trial_period_s - dt).abs() > 1e-15 {
        return Err(Error::config(format!(
            "streams disagree on the trial period: {} vs {}",
            a.trial_period_s, b.trial_period_s
        )));
    }
    if (a.storage_delay_s - b.storage_delay_s).abs() > 1e-15 {
        return Err(Error::config(format!(
            "streams disagree on the storage delay: {} vs {}",
            a.storage_delay_s, b.storage_delay_s
        )));
    }
    if !(window_s > 0.0) || window_s > dt {
        return Err(Error::config(format!(
            "coincidence window must be in (0, trial_period], got {window_s}"
        )));
    }
    if max_offset < 4 {
        return Err(Error::config(
            "max_offset must be >= 4 so the accidental baseline has >= 8 bins".to_string(),
        ));
    }

    let tau = pair_delay(a, b);
    let k = max_offset as i64;
    let n_bins = (2 * k + 1) as usize;
    let mut counts = vec![0u64; n_bins];
    // last conditioning tag counted at each offset, for per-trial-pair dedup
    let mut last_counted = vec![f64::NEG_INFINITY; n_bins];
    let half_w = 0.5 * window_s;
    let reach = k as f64 * dt + half_w;

    let mut start = 0usize;
    for &ta in &a.tags {
        let lo = ta + tau - reach;
        let hi = ta + tau + reach;
        while start < b.tags.len() && b.tags[start] < lo {
            start += 1;
        }
        for &tb in &b.tags[start..] {
            if tb > hi {
                break;
            }
            let d = tb - ta - tau;
            let n = (d / dt).round();
            if n.abs() > k as f64 {
                continue;
            }
            if (d - n * dt).abs() <= half_w {
                let idx = (n as i64 + k) as usize;
                match counting {
                    PairCounting::AllPairs => counts[idx] += 1,
                    PairCounting::AtMostOnePerTrialPair => {
                        if ta - last_counted[idx] > 0.5 * dt {
                            counts[idx] += 1;
                            last_counted[idx] = ta;
                        }
                    }
                }
            }
        }
    }

    Ok(CoincidenceHistogram {
        offsets: (-k..=k).collect(),
        counts,
        window_s,
        n_trials: a.total_trials.min(b.total_trials),
    })
}

impl CoincidenceHistogram {
    pub fn zero_offset_count(&self) -> u64 {
        let idx = self.offsets.iter().position(|&n| n == 0).unwrap();
        self.counts[idx]
    }

    pub fn accidental_sum(&self) -> u64 {
        self.offsets
            .iter()
            .zip(&self.counts)
            .filter(|(n, _)| **n != 0)
            .map(|(_, c)| *c)
            .sum()
    }

    fn accidental_bins(&self) -> u64 {
        (self.offsets.len() - 1) as u64
    }
}

/// Ratio estimator: coincidences at zero trial shift over the mean
/// accidental count, with Poisson error propagation
/// sigma = value * sqrt(1/N0 + 1/sum(N_acc)).
pub fn g2_from_histogram(h: &CoincidenceHistogram) -> Result<CorrelationEstimate> {
    let n0 = h.zero_offset_count();
    let acc = h.accidental_sum();
    if n0 == 0 && acc == 0 {
        return Err(Error::numerical(
            "histogram is empty: no coincidences at any offset".to_string(),
        ));
    }
    if acc == 0 {
        return Err(Error::InfiniteEstimate { coincidences: n0 });
    }
    let mean_acc = acc as f64 / h.accidental_bins() as f64;
    let value = n0 as f64 / mean_acc;
    let sigma = if n0 > 0 {
        value * (1.0 / n0 as f64 + 1.0 / acc as f64).sqrt()
    } else {
        // zero observed coincidences: quote the one-count scale
        (1.0 + 1.0 / acc as f64).sqrt() / mean_acc
    };
    Ok(CorrelationEstimate {
        value,
        sigma,
        n_coincidences: n0,
        n_accidentals: acc,
    })
}

/// Herald-block jackknife cross-check of the g2 uncertainty: heralds are
/// split into `n_blocks` equal blocks, the estimate is recomputed dropping
/// one block at a time, and the drop-one spread gives the error.
pub fn jackknife_g2_sigma(
    a: &TagStream,
    b: &TagStream,
    window_s: f64,
    max_offset: u32,
    counting: PairCounting,
    n_blocks: usize,
) -> Result<f64> {
    if n_blocks < 2 || a.tags.len() < n_blocks {
        return Err(Error::numerical(
            "jackknife needs at least two herald blocks".to_string(),
        ));
    }
    let block_of = |i: usize| i * n_blocks / a.tags.len();
    // per-block histograms over herald blocks
    let mut zero = vec![0f64; n_blocks];
    let mut acc = vec![0f64; n_blocks];
    for blk in 0..n_blocks {
        let is: Vec<f64> = a
            .tags
            .iter()
            .enumerate()
            .filter(|(i, _)| block_of(*i) == blk)
            .map(|(_, t)| *t)
            .collect();
        let sub = TagStream {
            channel_id: a.channel_id.clone(),
            tags: is,
            total_trials: a.total_trials,
            trial_period_s: a.trial_period_s,
            storage_delay_s: a.storage_delay_s,
        };
        let h = build_histogram(&sub, b, window_s, max_offset, counting)?;
        zero[blk] = h.zero_offset_count() as f64;
        acc[blk] = h.accidental_sum() as f64;
    }
    let zero_total: f64 = zero.iter().sum();
    let acc_total: f64 = acc.iter().sum();
    let bins = (2 * max_offset) as f64;
    let mut estimates = Vec::with_capacity(n_blocks);
    for blk in 0..n_blocks {
        let z = zero_total - zero[blk];
        let c = acc_total - acc[blk];
        if c == 0.0 {
            return Err(Error::InfiniteEstimate { coincidences: z as u64 });
        }
        estimates.push(z / (c / bins));
    }
    let mean = estimates.iter().sum::<f64>() / n_blocks as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() * (n_blocks as f64 - 1.0)
        / n_blocks as f64;
    Ok(var.sqrt())
}

/// Retrieval efficiency before the detector: p_coincidence / (p_herald * det_eta).
pub fn retrieval_efficiency(p_s: f64, p_sas: f64, det_eta: f64) -> Result<f64> {
    if !(p_s > 0.0) || !(det_eta > 0.0) {
        return Err(Error::domain(format!(
            "retrieval_efficiency needs p_s > 0 and det_eta > 0, got {p_s} and {det_eta}"
        )));
    }
    if p_sas < 0.0 {
        return Err(Error::domain("p_sas must be >= 0".to_string()));
    }
    Ok(p_sas / (p_s * det_eta))
}

/// Nonclassicality parameter R = g2_cross^2 / (g2_auto_a * g2_auto_b) with
/// first-order error propagation. R > 1 certifies nonclassical correlation.
pub fn cauchy_schwarz(
    g2_cross: &CorrelationEstimate,
    g2_auto_a: &CorrelationEstimate,
    g2_auto_b: &CorrelationEstimate,
) -> Result<CorrelationEstimate> {
    if !(g2_auto_a.value > 0.0) || !(g2_auto_b.value > 0.0) {
        return Err(Error::domain(
            "cauchy_schwarz: autocorrelations must be > 0".to_string(),
        ));
    }
    let r = g2_cross.value.powi(2) / (g2_auto_a.value * g2_auto_b.value);
    let rel = (4.0 * (g2_cross.sigma / g2_cross.value).powi(2)
        + (g2_auto_a.sigma / g2_auto_a.value).powi(2)
        + (g2_auto_b.sigma / g2_auto_b.value).powi(2))
    .sqrt();
    Ok(CorrelationEstimate {
        value: r,
        sigma: r * rel,
        n_coincidences: g2_cross.n_coincidences,
        n_accidentals: g2_cross.n_accidentals,
    })
}

/// Histogram of `t_b - t_a - delay` for same-trial pairs, bin width `bin_s`,
/// spanning [`WAVEFORM_HALF_RANGE_S`] on each side.
pub fn conditional_waveform(a: &TagStream, b: &TagStream, bin_s: f64) -> Result<Waveform> {
    if !(bin_s > 0.0) {
        return Err(Error::config(format!("bin_s must be > 0, got {bin_s}")));
    }
    let tau = pair_delay(a, b);
    let k = (WAVEFORM_HALF_RANGE_S / bin_s).floor() as i64;
    let n_bins = (2 * k + 1) as usize;
    let mut counts = vec![0u64; n_bins];
    let reach = (k as f64 + 0.5) * bin_s;

    let mut start = 0usize;
    for &ta in &a.tags {
        let lo = ta + tau - reach;
        let hi = ta + tau + reach;
        while start < b.tags.len() && b.tags[start] < lo {
            start += 1;
        }
        for &tb in &b.tags[start..] {
            if tb > hi {
                break;
            }
            let d = tb - ta - tau;
            let bin = (d / bin_s).round() as i64;
            if bin.abs() <= k {
                counts[(bin + k) as usize] += 1;
            }
        }
    }

    Ok(Waveform {
        bin_s,
        bin_centers: (-k..=k).map(|i| i as f64 * bin_s).collect(),
        counts,
        n_heralds: a.tags.len() as u64,
    })
}

/// Conditional signal-to-noise ratio from a signal run and an input-blocked
/// noise run: per-herald background is measured on the blocked run and
/// subtracted from the signal run's per-herald total.
pub fn conditional_snr(signal: &Waveform, noise: &Waveform) -> Result<CorrelationEstimate> {
    if signal.n_heralds == 0 || noise.n_heralds == 0 {
        return Err(Error::numerical("conditional_snr: no heralds".to_string()));
    }
    let s_tot = signal.total_counts() as f64;
    let n_tot = noise.total_counts() as f64;
    if n_tot == 0.0 {
        return Err(Error::numerical(
            "conditional_snr: blocked run recorded no background".to_string(),
        ));
    }
    let per_herald_sig = s_tot / signal.n_heralds as f64;
    let per_herald_noise = n_tot / noise.n_heralds as f64;
    let snr = (per_herald_sig - per_herald_noise) / per_herald_noise;
    // Poisson on both totals, first order.
    let rel = (1.0 / s_tot + 1.0 / n_tot).sqrt() * (per_herald_sig / per_herald_noise)
        / snr.abs().max(f64::MIN_POSITIVE);
    Ok(CorrelationEstimate {
        value: snr,
        sigma: snr.abs() * rel,
        n_coincidences: s_tot as u64,
        n_accidentals: n_tot as u64,
    })
}

/// Convert a per-trial probability into a rate using the duty cycle.
pub fn rates(p: f64, source: &SourceParams) -> f64 {
    let tpc = source.trials_per_cycle as f64;
    p * tpc / (tpc * source.trial_period_s + source.cycle_dead_time_s)
}
