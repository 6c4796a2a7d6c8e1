//! Per-trial Monte Carlo of the write-read sequence.
//!
//! Each trial draws a joint pair number, pushes the two photons through their
//! loss chains (optionally including the frequency-conversion stage), assigns
//! emission timestamps from the measured Gaussian waveforms, adds gated dark
//! counts and backgrounds, and applies detector dead time. Output is one
//! time-tag stream per detector channel.
//!
//! Cycles are independent simulation units: each cycle seeds its own RNG
//! stream from (seed, cycle index), so results are bit-identical regardless
//! of how many worker threads are used.

use crate::error::{Error, Result};
use crate::qfc::{self, QfcParams};
use crate::stats;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Emission probability, timing, waveform, and loss chain of the memory.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceParams {
    /// Mean photon-pair number per trial.
    pub mu: f64,
    /// Fiber coupling x filter-cavity transmission of the herald arm.
    pub stokes_arm_eta: f64,
    /// Probability that a heralded excitation yields a retrieved photon in
    /// fiber, before its detector.
    pub retrieval_eta: f64,
    /// Transmission from the memory fiber output to the converter input.
    pub link_eta: f64,
    /// Write-to-read delay, s.
    pub storage_delay_s: f64,
    /// Trial period, s.
    pub trial_period_s: f64,
    pub trials_per_cycle: u64,
    /// Cooling gap between cycles, s.
    pub cycle_dead_time_s: f64,
    /// Gaussian FWHM of the herald emission-time jitter, s.
    pub stokes_fwhm_s: f64,
    /// Gaussian FWHM of the retrieved waveform, s.
    pub antistokes_fwhm_s: f64,
    /// Position of the write epoch (herald gate center) inside a trial, s.
    #[serde(default = "default_write_offset")]
    pub write_offset_s: f64,
    /// Mean uncorrelated background photons per gate reaching the retrieved
    /// arm's detector input (read leakage and stray fluorescence). Out of
    /// band for the conversion stage's narrow filter, so it is dropped when
    /// a converter is present.
    #[serde(default)]
    pub antistokes_background_per_gate: f64,
}

fn default_write_offset() -> f64 {
    100e-9
}

impl SourceParams {
    /// Timing and loss chain used by the bundled scenarios.
    pub fn chain_default() -> Self {
        SourceParams {
            mu: 0.0025,
            stokes_arm_eta: 0.7 * 0.2,
            retrieval_eta: 0.32,
            link_eta: 0.77,
            storage_delay_s: 330e-9,
            trial_period_s: 1.4e-6,
            trials_per_cycle: 1000,
            cycle_dead_time_s: 20e-3,
            stokes_fwhm_s: 6.2e-9,
            antistokes_fwhm_s: 11.4e-9,
            write_offset_s: default_write_offset(),
            antistokes_background_per_gate: 0.0,
        }
    }

    pub fn validate(&self, det_s: &DetectorModel, det_as: &DetectorModel) -> Result<()> {
        for (name, v, lo, hi) in [
            ("mu", self.mu, 0.0, f64::INFINITY),
            ("stokes_arm_eta", self.stokes_arm_eta, 0.0, 1.0),
            ("retrieval_eta", self.retrieval_eta, 0.0, 1.0),
            ("link_eta", self.link_eta, 0.0, 1.0),
            ("antistokes_background_per_gate", self.antistokes_background_per_gate, 0.0, f64::INFINITY),
        ] {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::config(format!("source.{name} out of range: {v}")));
            }
        }
        for (name, v) in [
            ("storage_delay_s", self.storage_delay_s),
            ("trial_period_s", self.trial_period_s),
            ("cycle_dead_time_s", self.cycle_dead_time_s),
            ("stokes_fwhm_s", self.stokes_fwhm_s),
            ("antistokes_fwhm_s", self.antistokes_fwhm_s),
            ("write_offset_s", self.write_offset_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("source.{name} must be >= 0, got {v}")));
            }
        }
        if self.storage_delay_s >= self.trial_period_s {
            return Err(Error::config(
                "source.storage_delay_s must be smaller than trial_period_s".to_string(),
            ));
        }
        if self.trials_per_cycle == 0 {
            return Err(Error::config("source.trials_per_cycle must be > 0".to_string()));
        }
        if self.write_offset_s < 0.5 * det_s.gate_width_s {
            return Err(Error::config("herald gate starts before the trial".to_string()));
        }
        if self.write_offset_s + self.storage_delay_s + 0.5 * det_as.gate_width_s
            > self.trial_period_s
        {
            return Err(Error::config("retrieval gate extends past the trial".to_string()));
        }
        // dead time spilling into the next cycle would couple cycles
        for det in [det_s, det_as] {
            if det.dead_time_s > self.cycle_dead_time_s {
                return Err(Error::config(
                    "detector dead time exceeds the inter-cycle gap".to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn cycle_length_s(&self) -> f64 {
        self.trials_per_cycle as f64 * self.trial_period_s + self.cycle_dead_time_s
    }

    pub fn trial_epoch(&self, cycle: u64, trial: u64) -> f64 {
        cycle as f64 * self.cycle_length_s() + trial as f64 * self.trial_period_s
    }

    /// Herald gate center, relative to the trial epoch.
    pub fn stokes_gate_offset(&self) -> f64 {
        self.write_offset_s
    }

    /// Retrieval gate center, relative to the trial epoch.
    pub fn antistokes_gate_offset(&self) -> f64 {
        self.write_offset_s + self.storage_delay_s
    }
}

/// One gated single-photon detector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub gate_width_s: f64,
    pub dead_time_s: f64,
    pub channel_id: String,
}

impl DetectorModel {
    /// Silicon APD used on both 780 nm channels.
    pub fn silicon_780(channel_id: &str) -> Self {
        DetectorModel {
            efficiency: 0.43,
            dark_rate_hz: 100.0,
            gate_width_s: 40e-9,
            dead_time_s: 0.0,
            channel_id: channel_id.to_string(),
        }
    }

    /// InGaAs APD on the telecom channel.
    pub fn ingaas_1552(channel_id: &str) -> Self {
        DetectorModel {
            efficiency: 0.1,
            dark_rate_hz: 400.0,
            gate_width_s: 40e-9,
            dead_time_s: 20e-6,
            channel_id: channel_id.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!(
                "detector {}: efficiency must be in [0, 1]",
                self.channel_id
            )));
        }
        if self.dark_rate_hz < 0.0 || !self.dark_rate_hz.is_finite() {
            return Err(Error::config(format!(
                "detector {}: dark_rate_hz must be >= 0",
                self.channel_id
            )));
        }
        if self.gate_width_s <= 0.0 || !self.gate_width_s.is_finite() {
            return Err(Error::config(format!(
                "detector {}: gate_width_s must be > 0",
                self.channel_id
            )));
        }
        if self.dead_time_s < 0.0 || !self.dead_time_s.is_finite() {
            return Err(Error::config(format!(
                "detector {}: dead_time_s must be >= 0",
                self.channel_id
            )));
        }
        Ok(())
    }

    /// Mean dark counts inside one gate.
    pub fn dark_per_gate(&self) -> f64 {
        self.dark_rate_hz * self.gate_width_s
    }
}

/// Ordered detector click timestamps for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub channel_id: String,
    /// Absolute timestamps in seconds, strictly increasing.
    pub tags: Vec<f64>,
    pub total_trials: u64,
    pub trial_period_s: f64,
    pub storage_delay_s: f64,
}

impl TagStream {
    /// Detected probability per trial.
    pub fn singles_probability(&self) -> f64 {
        self.tags.len() as f64 / self.total_trials as f64
    }
}

/// Which arm feeds the 50-50 splitter in an autocorrelation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArm {
    Stokes,
    AntiStokes,
}

/// Uniform draw over a gate.
pub(crate) fn uniform_in<R: Rng + ?Sized>(gate_start: f64, width: f64, rng: &mut R) -> f64 {
    gate_start + width * rng.random::<f64>()
}

/// Gaussian emission time around `trial_epoch + offset`, resampled until it
/// falls inside the gate of the given width centered on the same point.
pub fn sample_emission_time<R: Rng + ?Sized>(
    trial_epoch: f64,
    offset: f64,
    fwhm: f64,
    gate_width: f64,
    rng: &mut R,
) -> f64 {
    let center = trial_epoch + offset;
    if fwhm == 0.0 {
        return center;
    }
    let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let half = 0.5 * gate_width;
    loop {
        let t = center + normal.sample(rng);
        if (t - center).abs() <= half {
            return t;
        }
    }
}

/// Route `n` photons through a balanced splitter; the sum is preserved.
pub fn split_50_50<R: Rng + ?Sized>(n: u32, rng: &mut R) -> (u32, u32) {
    let a = stats::thin_unchecked(n, 0.5, rng);
    (a, n - a)
}

/// Detect one gate's optical arrivals: Bernoulli survival at the detector
/// efficiency, Poisson dark counts uniform in the gate, merge and sort, then
/// drop tags closer than the dead time to the previously accepted tag
/// (`last_accepted` carries detector state in from earlier gates).
pub fn apply_detector<R: Rng + ?Sized>(
    gate_start: f64,
    arrivals: &[f64],
    det: &DetectorModel,
    last_accepted: Option<f64>,
    rng: &mut R,
) -> Vec<f64> {
    let mut tags: Vec<f64> = arrivals
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < det.efficiency)
        .collect();
    for _ in 0..qfc::sample_poisson(det.dark_per_gate(), rng) {
        tags.push(uniform_in(gate_start, det.gate_width_s, rng));
    }
    tags.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut last = last_accepted;
    apply_dead_time(&mut tags, det.dead_time_s, &mut last);
    tags
}

/// In-place dead-time filter over sorted tags, threading the last accepted
/// timestamp through `last`.
pub fn apply_dead_time(tags: &mut Vec<f64>, dead_time_s: f64, last: &mut Option<f64>) {
    if dead_time_s == 0.0 {
        if let Some(t) = tags.last() {
            *last = Some(*t);
        }
        return;
    }
    tags.retain(|&t| match *last {
        Some(prev) if t - prev < dead_time_s => false,
        _ => {
            *last = Some(t);
            true
        }
    });
}

/// Iterate trial indices at which an independent per-trial Bernoulli process
/// fires, by geometric gap sampling: cost scales with occurrences, not trials.
struct Occurrences<'a, R: Rng + ?Sized> {
    p: f64,
    next: u64,
    end: u64,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> Occurrences<'a, R> {
    fn new(p: f64, end: u64, rng: &'a mut R) -> Self {
        let mut occ = Occurrences { p, next: 0, end, rng };
        if p <= 0.0 {
            occ.next = end;
        } else if p < 1.0 {
            occ.next = occ.gap();
        }
        occ
    }

    fn gap(&mut self) -> u64 {
        let v = 1.0 - self.rng.random::<f64>();
        let g = (v.ln() / (1.0 - self.p).ln()).floor();
        if g >= self.end as f64 {
            self.end
        } else {
            g as u64
        }
    }
}

impl<'a, R: Rng + ?Sized> Iterator for Occurrences<'a, R> {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.next >= self.end {
            return None;
        }
        let here = self.next;
        if self.p >= 1.0 {
            self.next += 1;
        } else {
            let gap = self.gap();
            self.next = here.saturating_add(1).saturating_add(gap);
        }
        Some(here)
    }
}

/// Occurrence probability of a Poisson-per-gate process.
fn poisson_occurrence(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        0.0
    } else {
        1.0 - (-lambda).exp()
    }
}

struct CycleOutput {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn cycle_rng(seed: u64, cycle: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle.wrapping_add(1));
    rng
}

/// Full write-read Monte Carlo.
///
/// Returns the herald (Stokes) and retrieved (anti-Stokes) tag streams over
/// `n_cycles * trials_per_cycle` trials. With `qfc` present the retrieved arm
/// passes the conversion stage before its detector and the uncorrelated
/// 780 nm background is rejected by the conversion stage's narrow filter.
pub fn run_experiment(
    source: &SourceParams,
    qfc_params: Option<&QfcParams>,
    det_s: &DetectorModel,
    det_as: &DetectorModel,
    n_cycles: u64,
    seed: u64,
) -> Result<(TagStream, TagStream)> {
    source.validate(det_s, det_as)?;
    det_s.validate()?;
    det_as.validate()?;
    if let Some(q) = qfc_params {
        q.validate()?;
    }
    if n_cycles == 0 {
        return Err(Error::config("n_cycles must be > 0: streams would be empty".to_string()));
    }

    let cycles: Vec<CycleOutput> = (0..n_cycles)
        .into_par_iter()
        .map(|c| simulate_cycle_cross(c, source, qfc_params, det_s, det_as, seed))
        .collect();

    Ok(assemble(source, det_s, det_as, n_cycles, cycles))
}

/// Autocorrelation run: one arm feeds a 50-50 splitter viewed by two
/// detectors; the other arm is not recorded.
pub fn run_split_experiment(
    source: &SourceParams,
    qfc_params: Option<&QfcParams>,
    arm: SplitArm,
    det_a: &DetectorModel,
    det_b: &DetectorModel,
    n_cycles: u64,
    seed: u64,
) -> Result<(TagStream, TagStream)> {
    source.validate(det_a, det_b)?;
    det_a.validate()?;
    det_b.validate()?;
    if let Some(q) = qfc_params {
        q.validate()?;
    }
    if n_cycles == 0 {
        return Err(Error::config("n_cycles must be > 0: streams would be empty".to_string()));
    }

    let cycles: Vec<CycleOutput> = (0..n_cycles)
        .into_par_iter()
        .map(|c| simulate_cycle_split(c, source, qfc_params, arm, det_a, det_b, seed))
        .collect();

    Ok(assemble(source, det_a, det_b, n_cycles, cycles))
}

fn assemble(
    source: &SourceParams,
    det_a: &DetectorModel,
    det_b: &DetectorModel,
    n_cycles: u64,
    cycles: Vec<CycleOutput>,
) -> (TagStream, TagStream) {
    let total_trials = n_cycles * source.trials_per_cycle;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for c in cycles {
        a.extend(c.a);
        b.extend(c.b);
    }
    let mk = |tags: Vec<f64>, det: &DetectorModel| TagStream {
        channel_id: det.channel_id.clone(),
        tags,
        total_trials,
        trial_period_s: source.trial_period_s,
        storage_delay_s: source.storage_delay_s,
    };
    (mk(a, det_a), mk(b, det_b))
}

fn simulate_cycle_cross(
    cycle: u64,
    src: &SourceParams,
    qfc_params: Option<&QfcParams>,
    det_s: &DetectorModel,
    det_as: &DetectorModel,
    seed: u64,
) -> CycleOutput {
    let mut rng = cycle_rng(seed, cycle);
    let cycle_start = cycle as f64 * src.cycle_length_s();
    let tpc = src.trials_per_cycle;

    let s_off = src.stokes_gate_offset();
    let as_off = src.antistokes_gate_offset();
    let s_gate_start = s_off - 0.5 * det_s.gate_width_s;
    let as_gate_start = as_off - 0.5 * det_as.gate_width_s;

    let as_chain_eta = match qfc_params {
        None => src.retrieval_eta,
        Some(q) => src.retrieval_eta * src.link_eta * qfc::device_efficiency(q) * q.filter_eta,
    };

    let mut s_tags: Vec<f64> = Vec::new();
    let mut as_tags: Vec<f64> = Vec::new();

    // Pair emissions. Thinning factors commute, so the survivor count at
    // each detector input is a single binomial draw on the joint number.
    if src.mu > 0.0 {
        let p_any = src.mu / (1.0 + src.mu);
        let trials: Vec<u64> = Occurrences::new(p_any, tpc, &mut rng).collect();
        for trial in trials {
            let epoch = cycle_start + trial as f64 * src.trial_period_s;
            let n = stats::sample_pair_number_tail(src.mu, &mut rng);

            let k_s = stats::thin_unchecked(n, src.stokes_arm_eta, &mut rng);
            for _ in 0..k_s {
                if rng.random::<f64>() < det_s.efficiency {
                    s_tags.push(sample_emission_time(
                        epoch,
                        s_off,
                        src.stokes_fwhm_s,
                        det_s.gate_width_s,
                        &mut rng,
                    ));
                }
            }

            let k_as = stats::thin_unchecked(n, as_chain_eta, &mut rng);
            for _ in 0..k_as {
                if rng.random::<f64>() < det_as.efficiency {
                    as_tags.push(sample_emission_time(
                        epoch,
                        as_off,
                        src.antistokes_fwhm_s,
                        det_as.gate_width_s,
                        &mut rng,
                    ));
                }
            }
        }
    }

    // Dark counts, gated.
    dark_pass(&mut s_tags, det_s, cycle_start, s_gate_start, src, &mut rng);
    dark_pass(&mut as_tags, det_as, cycle_start, as_gate_start, src, &mut rng);

    // Uncorrelated optical background on the retrieved arm; out of band for
    // the converter's filter.
    if qfc_params.is_none() {
        optical_background_pass(
            &mut as_tags,
            src.antistokes_background_per_gate,
            det_as,
            cycle_start,
            as_gate_start,
            src,
            &mut rng,
        );
    }

    // Pump-induced conversion noise, uniform in the retrieval gate.
    if let Some(q) = qfc_params {
        optical_background_pass(
            &mut as_tags,
            qfc::noise_injection_rate(q),
            det_as,
            cycle_start,
            as_gate_start,
            src,
            &mut rng,
        );
    }

    finish_channel(&mut s_tags, det_s);
    finish_channel(&mut as_tags, det_as);
    CycleOutput { a: s_tags, b: as_tags }
}

fn simulate_cycle_split(
    cycle: u64,
    src: &SourceParams,
    qfc_params: Option<&QfcParams>,
    arm: SplitArm,
    det_a: &DetectorModel,
    det_b: &DetectorModel,
    seed: u64,
) -> CycleOutput {
    let mut rng = cycle_rng(seed, cycle);
    let cycle_start = cycle as f64 * src.cycle_length_s();
    let tpc = src.trials_per_cycle;

    let (offset, fwhm, pre_split_eta) = match arm {
        SplitArm::Stokes => (src.stokes_gate_offset(), src.stokes_fwhm_s, src.stokes_arm_eta),
        SplitArm::AntiStokes => {
            let eta = match qfc_params {
                None => src.retrieval_eta,
                Some(q) => {
                    src.retrieval_eta * src.link_eta * qfc::device_efficiency(q) * q.filter_eta
                }
            };
            (src.antistokes_gate_offset(), src.antistokes_fwhm_s, eta)
        }
    };
    let gate_start_a = offset - 0.5 * det_a.gate_width_s;
    let gate_start_b = offset - 0.5 * det_b.gate_width_s;

    let mut a_tags: Vec<f64> = Vec::new();
    let mut b_tags: Vec<f64> = Vec::new();

    if src.mu > 0.0 {
        let p_any = src.mu / (1.0 + src.mu);
        let trials: Vec<u64> = Occurrences::new(p_any, tpc, &mut rng).collect();
        for trial in trials {
            let epoch = cycle_start + trial as f64 * src.trial_period_s;
            let n = stats::sample_pair_number_tail(src.mu, &mut rng);
            let k = stats::thin_unchecked(n, pre_split_eta, &mut rng);
            let (ka, kb) = split_50_50(k, &mut rng);
            for _ in 0..ka {
                if rng.random::<f64>() < det_a.efficiency {
                    a_tags.push(sample_emission_time(epoch, offset, fwhm, det_a.gate_width_s, &mut rng));
                }
            }
            for _ in 0..kb {
                if rng.random::<f64>() < det_b.efficiency {
                    b_tags.push(sample_emission_time(epoch, offset, fwhm, det_b.gate_width_s, &mut rng));
                }
            }
        }
    }

    dark_pass(&mut a_tags, det_a, cycle_start, gate_start_a, src, &mut rng);
    dark_pass(&mut b_tags, det_b, cycle_start, gate_start_b, src, &mut rng);

    // Splitting a Poisson background yields two independent halves.
    if arm == SplitArm::AntiStokes {
        let half_mean = match qfc_params {
            None => 0.5 * src.antistokes_background_per_gate,
            Some(q) => 0.5 * qfc::noise_injection_rate(q),
        };
        optical_background_pass(&mut a_tags, half_mean, det_a, cycle_start, gate_start_a, src, &mut rng);
        optical_background_pass(&mut b_tags, half_mean, det_b, cycle_start, gate_start_b, src, &mut rng);
    }

    finish_channel(&mut a_tags, det_a);
    finish_channel(&mut b_tags, det_b);
    CycleOutput { a: a_tags, b: b_tags }
}

/// Gated dark counts over every trial of a cycle, by occurrence skipping.
fn dark_pass<R: Rng + ?Sized>(
    tags: &mut Vec<f64>,
    det: &DetectorModel,
    cycle_start: f64,
    gate_start_offset: f64,
    src: &SourceParams,
    rng: &mut R,
) {
    let lambda = det.dark_per_gate();
    let p_occ = poisson_occurrence(lambda);
    if p_occ == 0.0 {
        return;
    }
    let trials: Vec<u64> = Occurrences::new(p_occ, src.trials_per_cycle, rng).collect();
    for trial in trials {
        let gate_start = cycle_start + trial as f64 * src.trial_period_s + gate_start_offset;
        for _ in 0..qfc::sample_poisson_tail(lambda, rng) {
            tags.push(uniform_in(gate_start, det.gate_width_s, rng));
        }
    }
}

/// Poisson optical background in every gate, thinned by the detector
/// efficiency (the photons are optical, unlike dark counts).
fn optical_background_pass<R: Rng + ?Sized>(
    tags: &mut Vec<f64>,
    mean_per_gate: f64,
    det: &DetectorModel,
    cycle_start: f64,
    gate_start_offset: f64,
    src: &SourceParams,
    rng: &mut R,
) {
    // Thinned Poisson is Poisson: sample at the detected rate directly, one
    // survival draw per injected photon would give the same law.
    let lambda = mean_per_gate * det.efficiency;
    let p_occ = poisson_occurrence(lambda);
    if p_occ == 0.0 {
        return;
    }
    let trials: Vec<u64> = Occurrences::new(p_occ, src.trials_per_cycle, rng).collect();
    for trial in trials {
        let gate_start = cycle_start + trial as f64 * src.trial_period_s + gate_start_offset;
        for _ in 0..qfc::sample_poisson_tail(lambda, rng) {
            tags.push(uniform_in(gate_start, det.gate_width_s, rng));
        }
    }
}

/// Sort, deduplicate, and apply the channel dead time for one cycle.
fn finish_channel(tags: &mut Vec<f64>, det: &DetectorModel) {
    tags.sort_unstable_by(|a, b| a.total_cmp(b));
    tags.dedup();
    let mut last = None;
    apply_dead_time(tags, det.dead_time_s, &mut last);
}
