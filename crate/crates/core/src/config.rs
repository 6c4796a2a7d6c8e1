//! Scenario files, bundled presets, scenario execution, and CSV emission.
//!
//! Scenarios are TOML: UTF-8 key/value with sections, every physical
//! quantity carrying an explicit unit suffix (`_s`, `_hz`, `_w`, `_cm`).
//! Seeds are always explicit; nothing falls back to entropy.

use crate::analysis::{
    self, build_histogram, conditional_waveform, g2_from_histogram, CorrelationEstimate,
    PairCounting, Waveform,
};
use crate::error::{Error, Result};
use crate::qfc::QfcParams;
use crate::sim::{self, DetectorModel, SourceParams, SplitArm, TagStream};
use std::path::{Path, PathBuf};

/// Optical losses that bound the achievable device efficiency.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PassiveBudget {
    pub waveguide_coupling: f64,
    pub waveguide_transmission: f64,
    pub fiber_coupling: f64,
    pub filter_transmission: f64,
}

impl PassiveBudget {
    pub fn ceiling(&self) -> f64 {
        self.waveguide_coupling
            * self.waveguide_transmission
            * self.fiber_coupling
            * self.filter_transmission
    }
}

/// Conversion-stage section of a scenario: device constants plus the
/// optional passive-loss bookkeeping used for validation warnings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QfcSection {
    #[serde(flatten)]
    pub params: QfcParams,
    #[serde(default)]
    pub passive: Option<PassiveBudget>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorPair {
    pub stokes: DetectorModel,
    pub antistokes: DetectorModel,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Sweep {
    /// Dotted path of the swept field, e.g. `source.mu`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Split {
    pub arm: SplitArm,
}

/// One reproducible experiment description.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n_cycles: u64,
    pub seed: u64,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
    pub source: SourceParams,
    #[serde(default)]
    pub qfc: Option<QfcSection>,
    pub detectors: DetectorPair,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub split: Option<Split>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.source.validate(&self.detectors.stokes, &self.detectors.antistokes)?;
        self.detectors.stokes.validate()?;
        self.detectors.antistokes.validate()?;
        if let Some(q) = &self.qfc {
            q.params.validate()?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep.values must not be empty".to_string()));
            }
            if sweep.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("sweep.values must be finite".to_string()));
            }
            // the parameter must resolve
            let mut probe = self.clone();
            apply_sweep_value(&mut probe, &sweep.parameter, sweep.values[0])?;
        }
        Ok(())
    }

    /// Non-fatal consistency notes, printed by the CLI.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(q) = &self.qfc {
            if let Some(p) = &q.passive {
                if q.params.eta_max > p.ceiling() {
                    out.push(format!(
                        "qfc.eta_max = {} exceeds the passive-loss ceiling {:.4}",
                        q.params.eta_max,
                        p.ceiling()
                    ));
                }
            }
            if (q.params.det_eta_1552 - self.detectors.antistokes.efficiency).abs() > 1e-12 {
                out.push(format!(
                    "qfc.det_eta_1552 = {} differs from detectors.antistokes.efficiency = {}; \
                     the analytic SNR predictor and the simulated chain will disagree",
                    q.params.det_eta_1552, self.detectors.antistokes.efficiency
                ));
            }
        }
        out
    }
}

/// Parse a scenario from TOML text. Schema violations surface with the
/// parser's line/column positions.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario =
        toml::from_str(text).map_err(|e| Error::config(e.to_string().trim().to_string()))?;
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Set a swept parameter by its dotted path.
pub fn apply_sweep_value(sc: &mut Scenario, parameter: &str, value: f64) -> Result<()> {
    match parameter {
        "source.mu" => sc.source.mu = value,
        "source.retrieval_eta" => sc.source.retrieval_eta = value,
        "source.antistokes_background_per_gate" => {
            sc.source.antistokes_background_per_gate = value
        }
        "qfc.pump_power_w" => {
            let q = sc
                .qfc
                .as_mut()
                .ok_or_else(|| Error::config("sweep over qfc.* needs a [qfc] section".to_string()))?;
            q.params.pump_power_w = value;
        }
        other => {
            return Err(Error::config(format!(
                "unknown sweep parameter {other:?}; supported: source.mu, \
                 source.retrieval_eta, source.antistokes_background_per_gate, qfc.pump_power_w"
            )))
        }
    }
    Ok(())
}

/// Bundled scenario presets, shipped as versioned files and compiled in.
pub const PRESETS: &[(&str, &str, &str)] = &[
    ("smoke", include_str!("../presets/smoke.toml"), "source off; empty streams and zero rates"),
    (
        "fig2a",
        include_str!("../presets/fig2a.toml"),
        "memory at p_s ~ 0.15 %: conditional waveform and cross-correlation",
    ),
    (
        "fig2b",
        include_str!("../presets/fig2b.toml"),
        "cross-correlation and retrieval efficiency vs herald probability",
    ),
    (
        "fig3a",
        include_str!("../presets/fig3a.toml"),
        "converted waveform and cross-correlation at 120 mW pump",
    ),
    (
        "fig4",
        include_str!("../presets/fig4.toml"),
        "converted cross-correlation vs herald probability at 140 mW pump",
    ),
    (
        "figS5-stokes",
        include_str!("../presets/figS5-stokes.toml"),
        "herald autocorrelation through a balanced splitter",
    ),
    (
        "figS5-antistokes",
        include_str!("../presets/figS5-antistokes.toml"),
        "converted retrieved-field autocorrelation through a balanced splitter",
    ),
    (
        "tableI",
        include_str!("../presets/tableI.toml"),
        "nonclassicality table at p_s = 0.4 %: cross, autos, and R, unconverted and converted",
    ),
];

pub fn load_preset(name: &str) -> Result<Scenario> {
    PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, text, _)| parse_scenario(text))
        .transpose()?
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _, _)| *n).collect();
            Error::config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
        })
}

/// Per-point summary of one simulated run.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub n_trials: u64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_coinc: f64,
    pub g2: f64,
    pub g2_sigma: f64,
    /// Retrieval efficiency; NaN for splitter (autocorrelation) runs.
    pub eta_r: f64,
    pub rate_a_hz: f64,
    pub rate_b_hz: f64,
    pub rate_coinc_hz: f64,
}

/// One executed scenario point: both streams plus the derived summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub label: String,
    pub sweep_value: Option<f64>,
    pub a: TagStream,
    pub b: TagStream,
    pub summary: SummaryRow,
}

fn coincidence_window(sc: &Scenario) -> f64 {
    sc.detectors.stokes.gate_width_s.min(sc.detectors.antistokes.gate_width_s)
}

/// Analyze one stream pair into a summary row.
pub fn summarize(sc: &Scenario, a: &TagStream, b: &TagStream) -> Result<SummaryRow> {
    let h = build_histogram(a, b, coincidence_window(sc), 20, PairCounting::default())?;
    let (g2, g2_sigma) = match g2_from_histogram(&h) {
        Ok(e) => (e.value, e.sigma),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let p_a = a.singles_probability();
    let p_b = b.singles_probability();
    let p_coinc = h.zero_offset_count() as f64 / h.n_trials as f64;
    let eta_r = if sc.split.is_none() && p_a > 0.0 {
        p_coinc / (p_a * sc.detectors.antistokes.efficiency)
    } else {
        f64::NAN
    };
    Ok(SummaryRow {
        n_trials: h.n_trials,
        p_a,
        p_b,
        p_coinc,
        g2,
        g2_sigma,
        eta_r,
        rate_a_hz: analysis::rates(p_a, &sc.source),
        rate_b_hz: analysis::rates(p_b, &sc.source),
        rate_coinc_hz: analysis::rates(p_coinc, &sc.source),
    })
}

/// Run a scenario, expanding its sweep if present.
pub fn execute_scenario(sc: &Scenario) -> Result<Vec<RunOutput>> {
    sc.validate()?;
    let points: Vec<(String, Option<f64>)> = match &sc.sweep {
        None => vec![("p00".to_string(), None)],
        Some(sweep) => sweep
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("p{i:02}"), Some(*v)))
            .collect(),
    };

    let mut out = Vec::with_capacity(points.len());
    for (label, value) in points {
        let mut point_sc = sc.clone();
        if let (Some(v), Some(sweep)) = (value, &sc.sweep) {
            apply_sweep_value(&mut point_sc, &sweep.parameter, v)?;
        }
        let qfc = point_sc.qfc.as_ref().map(|q| q.params.clone());
        let (a, b) = match point_sc.split {
            None => sim::run_experiment(
                &point_sc.source,
                qfc.as_ref(),
                &point_sc.detectors.stokes,
                &point_sc.detectors.antistokes,
                point_sc.n_cycles,
                point_sc.seed,
            )?,
            Some(Split { arm }) => sim::run_split_experiment(
                &point_sc.source,
                qfc.as_ref(),
                arm,
                &point_sc.detectors.stokes,
                &point_sc.detectors.antistokes,
                point_sc.n_cycles,
                point_sc.seed,
            )?,
        };
        let summary = summarize(&point_sc, &a, &b)?;
        out.push(RunOutput { label, sweep_value: value, a, b, summary });
    }
    Ok(out)
}

/// Write a CSV file with a header row; floats use shortest round-trip form.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Stream files plus `summary.csv` for a batch of run outputs.
pub fn write_run_outputs(dir: &Path, name: &str, runs: &[RunOutput], sweep: Option<&str>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        crate::io::write_tagstream(
            &dir.join(format!("{name}_{}_{}.tags", run.label, run.a.channel_id)),
            &run.a,
        )?;
        crate::io::write_tagstream(
            &dir.join(format!("{name}_{}_{}.tags", run.label, run.b.channel_id)),
            &run.b,
        )?;
        let s = &run.summary;
        rows.push(vec![
            run.label.clone(),
            sweep.unwrap_or("").to_string(),
            run.sweep_value.map(fmt_f64).unwrap_or_default(),
            s.n_trials.to_string(),
            fmt_f64(s.p_a),
            fmt_f64(s.p_b),
            fmt_f64(s.p_coinc),
            fmt_f64(s.g2),
            fmt_f64(s.g2_sigma),
            fmt_f64(s.eta_r),
            fmt_f64(s.rate_a_hz),
            fmt_f64(s.rate_b_hz),
            fmt_f64(s.rate_coinc_hz),
        ]);
    }
    write_csv(
        &dir.join("summary.csv"),
        &[
            "point",
            "sweep_parameter",
            "sweep_value",
            "n_trials",
            "p_s",
            "p_as",
            "p_s_as",
            "g2",
            "g2_sigma",
            "eta_r",
            "rate_s_hz",
            "rate_as_hz",
            "rate_coinc_hz",
        ],
        &rows,
    )
}

/// The assembled nonclassicality table: cross-correlations, split-arm
/// autocorrelations, and the Cauchy-Schwarz parameters, unconverted and
/// converted, all at the preset's operating point.
pub struct NonclassicalityTable {
    pub g2_s_as: CorrelationEstimate,
    pub g2c_s_as: CorrelationEstimate,
    pub g2_s_s: CorrelationEstimate,
    pub g2_as_as: CorrelationEstimate,
    pub g2c_as_as: CorrelationEstimate,
    pub r: CorrelationEstimate,
    pub r_c: CorrelationEstimate,
}

impl NonclassicalityTable {
    pub fn rows(&self) -> Vec<(&'static str, &CorrelationEstimate)> {
        vec![
            ("g2_s_as", &self.g2_s_as),
            ("g2c_s_as", &self.g2c_s_as),
            ("g2_s_s", &self.g2_s_s),
            ("g2_as_as", &self.g2_as_as),
            ("g2c_as_as", &self.g2c_as_as),
            ("R", &self.r),
            ("Rc", &self.r_c),
        ]
    }
}

/// Expand the `tableI` preset into its five runs. Split runs get more cycles
/// because coincidence rates behind the splitter are far lower; the
/// converted autocorrelation is the slowest by far.
pub fn run_nonclassicality_table(
    base: &Scenario,
    write_dir: Option<&Path>,
) -> Result<NonclassicalityTable> {
    let window = coincidence_window(base);
    let max_offset = 20;
    let counting = PairCounting::default();
    let qfc = QfcParams::chain_default();

    let save = |label: &str, a: &TagStream, b: &TagStream| -> Result<()> {
        if let Some(dir) = write_dir {
            std::fs::create_dir_all(dir)?;
            crate::io::write_tagstream(&dir.join(format!("tableI_{label}_{}.tags", a.channel_id)), a)?;
            crate::io::write_tagstream(&dir.join(format!("tableI_{label}_{}.tags", b.channel_id)), b)?;
        }
        Ok(())
    };
    let g2_of = |a: &TagStream, b: &TagStream| -> Result<CorrelationEstimate> {
        g2_from_histogram(&build_histogram(a, b, window, max_offset, counting)?)
    };

    // unconverted cross
    let (s, a) = sim::run_experiment(
        &base.source,
        None,
        &base.detectors.stokes,
        &base.detectors.antistokes,
        base.n_cycles,
        base.seed,
    )?;
    save("cross", &s, &a)?;
    let g2_s_as = g2_of(&s, &a)?;

    // converted cross
    let det_c = DetectorModel::ingaas_1552("antistokes");
    let (sc_, ac) = sim::run_experiment(
        &base.source,
        Some(&qfc),
        &base.detectors.stokes,
        &det_c,
        base.n_cycles,
        base.seed + 1,
    )?;
    save("crossc", &sc_, &ac)?;
    let g2c_s_as = g2_of(&sc_, &ac)?;

    // herald autocorrelation
    let det_sa = DetectorModel::silicon_780("stokes_a");
    let det_sb = DetectorModel::silicon_780("stokes_b");
    let (sa, sb) = sim::run_split_experiment(
        &base.source,
        None,
        SplitArm::Stokes,
        &det_sa,
        &det_sb,
        base.n_cycles * 5,
        base.seed + 2,
    )?;
    save("autos", &sa, &sb)?;
    let g2_s_s = g2_of(&sa, &sb)?;

    // retrieved-field autocorrelation, unconverted
    let det_aa = DetectorModel::silicon_780("antistokes_a");
    let det_ab = DetectorModel::silicon_780("antistokes_b");
    let (aa, ab) = sim::run_split_experiment(
        &base.source,
        None,
        SplitArm::AntiStokes,
        &det_aa,
        &det_ab,
        base.n_cycles * 5,
        base.seed + 3,
    )?;
    save("autoas", &aa, &ab)?;
    let g2_as_as = g2_of(&aa, &ab)?;

    // retrieved-field autocorrelation, converted
    let det_ca = DetectorModel::ingaas_1552("antistokes_a");
    let det_cb = DetectorModel::ingaas_1552("antistokes_b");
    let (ca, cb) = sim::run_split_experiment(
        &base.source,
        Some(&qfc),
        SplitArm::AntiStokes,
        &det_ca,
        &det_cb,
        base.n_cycles * 25,
        base.seed + 4,
    )?;
    save("autoasc", &ca, &cb)?;
    let g2c_as_as = g2_of(&ca, &cb)?;

    let r = analysis::cauchy_schwarz(&g2_s_as, &g2_s_s, &g2_as_as)?;
    let r_c = analysis::cauchy_schwarz(&g2c_s_as, &g2_s_s, &g2c_as_as)?;
    let table = NonclassicalityTable {
        g2_s_as,
        g2c_s_as,
        g2_s_s,
        g2_as_as,
        g2c_as_as,
        r,
        r_c,
    };

    if let Some(dir) = write_dir {
        let rows: Vec<Vec<String>> = table
            .rows()
            .iter()
            .map(|(name, e)| {
                vec![
                    name.to_string(),
                    fmt_f64(e.value),
                    fmt_f64(e.sigma),
                    e.n_coincidences.to_string(),
                    e.n_accidentals.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("tableI.csv"),
            &["quantity", "value", "sigma", "n_coincidences", "n_accidentals"],
            &rows,
        )?;
    }
    Ok(table)
}

/// Full analysis bundle for one stream pair, as emitted by `analyze`.
pub struct AnalysisOutput {
    pub estimates: Vec<(String, f64, f64, u64, u64)>,
    pub histogram: Vec<(i64, u64)>,
    pub waveform: Waveform,
}

pub struct AnalysisOptions {
    pub window_s: f64,
    pub max_offset: u32,
    pub counting: PairCounting,
    pub bin_s: f64,
    /// Retrieval-arm detector efficiency; emits an eta_r row when set.
    pub det_eta: Option<f64>,
    pub jackknife_blocks: Option<usize>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            window_s: 40e-9,
            max_offset: 20,
            counting: PairCounting::default(),
            bin_s: 1.28e-9,
            det_eta: None,
            jackknife_blocks: None,
        }
    }
}

pub fn analyze_pair(a: &TagStream, b: &TagStream, opts: &AnalysisOptions) -> Result<AnalysisOutput> {
    let h = build_histogram(a, b, opts.window_s, opts.max_offset, opts.counting)?;
    let g2 = g2_from_histogram(&h)?;
    let waveform = conditional_waveform(a, b, opts.bin_s)?;
    let p_a = a.singles_probability();
    let p_b = b.singles_probability();
    let p_coinc = h.zero_offset_count() as f64 / h.n_trials as f64;

    let mut estimates = vec![
        ("g2".to_string(), g2.value, g2.sigma, g2.n_coincidences, g2.n_accidentals),
        ("p_a".to_string(), p_a, 0.0, a.tags.len() as u64, 0),
        ("p_b".to_string(), p_b, 0.0, b.tags.len() as u64, 0),
        ("p_coinc".to_string(), p_coinc, 0.0, h.zero_offset_count(), 0),
    ];
    if let Some(det_eta) = opts.det_eta {
        let eta_r = analysis::retrieval_efficiency(p_a, p_coinc, det_eta)?;
        estimates.push(("eta_r".to_string(), eta_r, 0.0, h.zero_offset_count(), 0));
    }
    if let Some(blocks) = opts.jackknife_blocks {
        let jk = analysis::jackknife_g2_sigma(a, b, opts.window_s, opts.max_offset, opts.counting, blocks)?;
        estimates.push(("g2_sigma_jackknife".to_string(), jk, 0.0, g2.n_coincidences, g2.n_accidentals));
    }

    let histogram = h.offsets.iter().copied().zip(h.counts.iter().copied()).collect();
    Ok(AnalysisOutput { estimates, histogram, waveform })
}

pub fn write_analysis(dir: &Path, out: &AnalysisOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<Vec<String>> = out
        .estimates
        .iter()
        .map(|(q, v, s, nc, na)| {
            vec![q.clone(), fmt_f64(*v), fmt_f64(*s), nc.to_string(), na.to_string()]
        })
        .collect();
    write_csv(
        &dir.join("estimates.csv"),
        &["quantity", "value", "sigma", "n_coincidences", "n_accidentals"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = out
        .histogram
        .iter()
        .map(|(o, c)| vec![o.to_string(), c.to_string()])
        .collect();
    write_csv(&dir.join("histogram.csv"), &["offset", "count"], &rows)?;
    let rows: Vec<Vec<String>> = out
        .waveform
        .bin_centers
        .iter()
        .zip(&out.waveform.counts)
        .map(|(t, c)| vec![fmt_f64(*t), c.to_string()])
        .collect();
    write_csv(&dir.join("waveform.csv"), &["bin_center_s", "count"], &rows)?;
    Ok(())
}

/// Read a fit-input CSV: header plus `x,y[,sigma]` rows.
pub fn read_points_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { path: display.clone(), line: 1, msg: "empty file".to_string() })?;
    if !header.to_ascii_lowercase().starts_with("x,") {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: "expected a header row starting with `x,`".to_string(),
        });
    }
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: display,
                line: i + 1,
                msg: "expected x,y[,sigma]".to_string(),
            });
        }
        let parse = |s: &str, line: usize| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line,
                msg: format!("bad number {s:?}"),
            })
        };
        let x = parse(fields[0], i + 1)?;
        let y = parse(fields[1], i + 1)?;
        let sigma = if fields.len() > 2 { parse(fields[2], i + 1)? } else { 0.0 };
        out.push((x, y, sigma));
    }
    Ok(out)
}
