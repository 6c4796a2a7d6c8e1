//! Batch CLI: simulate scenarios, analyze tag streams, evaluate the analytic
//! device models, and fit device constants.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use clap::{Args, Parser, Subcommand};
use heraldsim::analysis::PairCounting;
use heraldsim::config::{
    self, analyze_pair, execute_scenario, fmt_f64, load_preset, load_scenario,
    run_nonclassicality_table, write_csv, AnalysisOptions, Scenario,
};
use heraldsim::error::{Error, Result};
use heraldsim::io::read_tagstream;
use heraldsim::qfc::{
    crossover_distance, device_efficiency, optimal_pump_for_snr, snr_predict, LinkBudget,
    QfcParams,
};
use heraldsim::stats::predict_g2_after_conversion;
use heraldsim::{analysis, fit};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "heraldsim", version, about = "Heralded photon-pair memory + frequency converter: simulation, analysis, prediction, fitting")]
struct Cli {
    /// Worker threads for the simulator (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (file or preset) and write tag streams + summary.csv.
    Simulate(SimulateArgs),
    /// Analyze a pair of tag-stream files into estimates/histogram/waveform CSVs.
    Analyze(AnalyzeArgs),
    /// Evaluate the closed-form device models onto CSV grids.
    Predict(PredictArgs),
    /// Fit a device model to a points CSV.
    Fit(FitArgs),
    /// List bundled presets.
    PresetList,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Bundled preset name (see preset-list).
    #[arg(long)]
    preset: Option<String>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario cycle count.
    #[arg(long)]
    cycles: Option<u64>,
    /// Output directory (default: the scenario's `outputs`, else out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Block the converter input (retrieval efficiency forced to zero) to
    /// measure pump noise alone.
    #[arg(long)]
    blocked: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Conditioning (herald) stream file.
    #[arg(long)]
    a: PathBuf,
    /// Conditioned stream file.
    #[arg(long)]
    b: PathBuf,
    /// Coincidence window in seconds.
    #[arg(long, default_value_t = 40e-9)]
    window_s: f64,
    /// Accidental baseline half-width in whole trials.
    #[arg(long, default_value_t = 20)]
    max_offset: u32,
    /// Count every tag pair instead of at most one per trial pair.
    #[arg(long)]
    count_all_pairs: bool,
    /// Waveform bin width in seconds.
    #[arg(long, default_value_t = 1.28e-9)]
    bin_s: f64,
    /// Retrieval-arm detector efficiency; adds an eta_r estimate row.
    #[arg(long)]
    det_eta: Option<f64>,
    /// Herald blocks for the jackknife error cross-check.
    #[arg(long)]
    jackknife_blocks: Option<usize>,
    /// Waveform pair from an input-blocked run, for the conditional SNR row.
    #[arg(long, requires = "noise_b")]
    noise_a: Option<PathBuf>,
    #[arg(long, requires = "noise_a")]
    noise_b: Option<PathBuf>,
    #[arg(long, default_value = "out/analyze")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(subcommand)]
    model: PredictModel,
}

#[derive(Subcommand)]
enum PredictModel {
    /// Device efficiency vs pump power.
    EtaDev {
        #[arg(long, default_value_t = 0.136)]
        eta_max: f64,
        #[arg(long, default_value_t = 20.5616758356)]
        eta_n: f64,
        #[arg(long, default_value_t = 1.0)]
        length_cm: f64,
        #[arg(long, default_value_t = 0.0)]
        pump_min_w: f64,
        #[arg(long, default_value_t = 0.3)]
        pump_max_w: f64,
        #[arg(long, default_value_t = 61)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conditional SNR vs pump power, with the optimum appended.
    Snr {
        #[arg(long, default_value_t = 0.136)]
        eta_max: f64,
        #[arg(long, default_value_t = 20.5616758356)]
        eta_n: f64,
        #[arg(long, default_value_t = 1.0)]
        length_cm: f64,
        #[arg(long, default_value_t = 1.3333333333e-3)]
        delta_n: f64,
        #[arg(long, default_value_t = 1.6e-5)]
        dc_prob: f64,
        #[arg(long, default_value_t = 0.1)]
        det_eta: f64,
        #[arg(long, default_value_t = 0.25)]
        mu_in: f64,
        #[arg(long, default_value_t = 0.0)]
        pump_min_w: f64,
        #[arg(long, default_value_t = 0.3)]
        pump_max_w: f64,
        #[arg(long, default_value_t = 61)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Output correlation after conversion, from a g2 grid or a summary CSV.
    G2c {
        /// Fixed conditional SNR; alternative to --snr-max.
        #[arg(long, conflicts_with_all = ["snr_max", "eta_r_in"])]
        snr: Option<f64>,
        /// SNR at unit input photon number, scaled by --eta-r-in.
        #[arg(long, default_value_t = 85.0)]
        snr_max: f64,
        /// Mean photon number at the converter input per herald.
        #[arg(long, default_value_t = 0.2464)]
        eta_r_in: f64,
        /// Take (p_s, g2) columns from a simulate summary.csv.
        #[arg(long)]
        from_csv: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        g2_min: f64,
        #[arg(long, default_value_t = 60.0)]
        g2_max: f64,
        #[arg(long, default_value_t = 30)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fiber-length crossover for a list of device efficiencies.
    Crossover {
        /// Comma-separated device efficiencies.
        #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.01, 0.1])]
        device_eta: Vec<f64>,
        #[arg(long, default_value_t = 3.0)]
        loss_780_db_per_km: f64,
        #[arg(long, default_value_t = 0.2)]
        loss_1552_db_per_km: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Model name: sin2, linear_origin, or gaussian.
    #[arg(long)]
    model: String,
    /// Points CSV (header `x,y[,sigma]`).
    #[arg(long)]
    points: PathBuf,
    /// Crystal length for the sin2 model, cm.
    #[arg(long, default_value_t = 1.0)]
    length_cm: f64,
    /// Optional CSV report path (report always prints to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: could not size the thread pool: {e}");
            std::process::exit(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Fit(args) => cmd_fit(args),
        Command::PresetList => cmd_preset_list(),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn load_simulate_scenario(args: &SimulateArgs) -> Result<Scenario> {
    let mut sc = match (&args.scenario, &args.preset) {
        (Some(path), None) => load_scenario(path)?,
        (None, Some(name)) => load_preset(name)?,
        _ => {
            return Err(Error::config(
                "simulate needs exactly one of --scenario or --preset".to_string(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(cycles) = args.cycles {
        sc.n_cycles = cycles;
    }
    if let Some(out) = &args.out {
        sc.outputs = Some(out.clone());
    }
    if args.blocked {
        sc.source.retrieval_eta = 0.0;
        sc.name = format!("{}-blocked", sc.name);
    }
    Ok(sc)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let is_table = args.preset.as_deref() == Some("tableI") && !args.blocked;
    let sc = load_simulate_scenario(&args)?;
    for w in sc.warnings() {
        eprintln!("warning: {w}");
    }
    let dir = sc
        .outputs
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.name));

    if is_table {
        let table = run_nonclassicality_table(&sc, Some(&dir))?;
        for (name, e) in table.rows() {
            println!("{name} = {:.4} +- {:.4}", e.value, e.sigma);
        }
        println!("wrote {}", dir.join("tableI.csv").display());
        return Ok(());
    }

    let runs = execute_scenario(&sc)?;
    config::write_run_outputs(&dir, &sc.name, &runs, sc.sweep.as_ref().map(|s| s.parameter.as_str()))?;
    for run in &runs {
        let s = &run.summary;
        println!(
            "{} p_s={:.3e} p_as={:.3e} p_s_as={:.3e} g2={:.3} eta_r={:.3}",
            run.label, s.p_a, s.p_b, s.p_coinc, s.g2, s.eta_r
        );
    }
    println!("wrote {}", dir.join("summary.csv").display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let a = read_tagstream(&args.a)?;
    let b = read_tagstream(&args.b)?;
    let opts = AnalysisOptions {
        window_s: args.window_s,
        max_offset: args.max_offset,
        counting: if args.count_all_pairs {
            PairCounting::AllPairs
        } else {
            PairCounting::AtMostOnePerTrialPair
        },
        bin_s: args.bin_s,
        det_eta: args.det_eta,
        jackknife_blocks: args.jackknife_blocks,
    };
    let mut out = analyze_pair(&a, &b, &opts)?;

    if let (Some(na), Some(nb)) = (&args.noise_a, &args.noise_b) {
        let noise_a = read_tagstream(na)?;
        let noise_b = read_tagstream(nb)?;
        let noise_wf = analysis::conditional_waveform(&noise_a, &noise_b, args.bin_s)?;
        let snr = analysis::conditional_snr(&out.waveform, &noise_wf)?;
        out.estimates.push((
            "snr_conditional".to_string(),
            snr.value,
            snr.sigma,
            snr.n_coincidences,
            snr.n_accidentals,
        ));
    }

    config::write_analysis(&args.out, &out)?;
    for (q, v, s, _, _) in &out.estimates {
        println!("{q} = {v:.6} +- {s:.6}");
    }
    println!("wrote {}", args.out.join("estimates.csv").display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    match args.model {
        PredictModel::EtaDev { eta_max, eta_n, length_cm, pump_min_w, pump_max_w, points, out } => {
            let mut params = QfcParams {
                eta_max,
                eta_n,
                length_cm,
                pump_power_w: 0.0,
                delta_n: 0.0,
                dc_prob: 0.0,
                det_eta_1552: 1.0,
                filter_eta: 1.0,
            };
            params.validate()?;
            let mut rows = Vec::new();
            for i in 0..points.max(2) {
                let p = pump_min_w
                    + (pump_max_w - pump_min_w) * i as f64 / (points.max(2) - 1) as f64;
                params.pump_power_w = p;
                rows.push(vec![fmt_f64(p), fmt_f64(device_efficiency(&params))]);
            }
            emit(out.as_deref(), &["pump_power_w", "eta_dev"], &rows)
        }
        PredictModel::Snr {
            eta_max,
            eta_n,
            length_cm,
            delta_n,
            dc_prob,
            det_eta,
            mu_in,
            pump_min_w,
            pump_max_w,
            points,
            out,
        } => {
            let mut params = QfcParams {
                eta_max,
                eta_n,
                length_cm,
                pump_power_w: 0.0,
                delta_n,
                dc_prob,
                det_eta_1552: det_eta,
                filter_eta: 1.0,
            };
            params.validate()?;
            let mut rows = Vec::new();
            for i in 0..points.max(2) {
                let p = pump_min_w
                    + (pump_max_w - pump_min_w) * i as f64 / (points.max(2) - 1) as f64;
                params.pump_power_w = p;
                rows.push(vec![fmt_f64(p), fmt_f64(snr_predict(&params, mu_in)?)]);
            }
            let opt = optimal_pump_for_snr(&params, mu_in)?;
            params.pump_power_w = opt;
            eprintln!(
                "optimal pump {:.4} W, snr {:.3}",
                opt,
                snr_predict(&params, mu_in)?
            );
            emit(out.as_deref(), &["pump_power_w", "snr"], &rows)
        }
        PredictModel::G2c { snr, snr_max, eta_r_in, from_csv, g2_min, g2_max, points, out } => {
            let fixed_snr = snr.unwrap_or(snr_max * eta_r_in);
            let mut rows = Vec::new();
            match from_csv {
                Some(path) => {
                    // p_s and g2 columns of a simulate summary
                    let text = std::fs::read_to_string(&path)?;
                    let mut lines = text.lines();
                    let header: Vec<&str> = lines
                        .next()
                        .ok_or_else(|| Error::config("empty CSV".to_string()))?
                        .split(',')
                        .collect();
                    let col = |name: &str| -> Result<usize> {
                        header.iter().position(|h| *h == name).ok_or_else(|| {
                            Error::config(format!("column {name:?} missing in {}", path.display()))
                        })
                    };
                    let (ip, ig) = (col("p_s")?, col("g2")?);
                    for line in lines {
                        if line.trim().is_empty() {
                            continue;
                        }
                        let f: Vec<&str> = line.split(',').collect();
                        let p_s: f64 = f[ip].parse().map_err(|_| Error::config("bad p_s"))?;
                        let g2: f64 = f[ig].parse().map_err(|_| Error::config("bad g2"))?;
                        rows.push(vec![
                            fmt_f64(p_s),
                            fmt_f64(g2),
                            fmt_f64(fixed_snr),
                            fmt_f64(predict_g2_after_conversion(g2, fixed_snr)?),
                        ]);
                    }
                    emit(out.as_deref(), &["p_s", "g2_in", "snr", "g2c"], &rows)
                }
                None => {
                    for i in 0..points.max(2) {
                        let g2 = g2_min + (g2_max - g2_min) * i as f64 / (points.max(2) - 1) as f64;
                        rows.push(vec![
                            fmt_f64(g2),
                            fmt_f64(fixed_snr),
                            fmt_f64(predict_g2_after_conversion(g2, fixed_snr)?),
                        ]);
                    }
                    emit(out.as_deref(), &["g2_in", "snr", "g2c"], &rows)
                }
            }
        }
        PredictModel::Crossover { device_eta, loss_780_db_per_km, loss_1552_db_per_km, out } => {
            let mut rows = Vec::new();
            for eta in device_eta {
                let budget = LinkBudget {
                    loss_780_db_per_km,
                    loss_1552_db_per_km,
                    device_eta: eta,
                };
                rows.push(vec![fmt_f64(eta), fmt_f64(crossover_distance(&budget)?)]);
            }
            emit(out.as_deref(), &["device_eta", "crossover_km"], &rows)
        }
    }
}

fn emit(out: Option<&std::path::Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            write_csv(path, header, rows)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            println!("{}", header.join(","));
            for row in rows {
                println!("{}", row.join(","));
            }
            Ok(())
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let points = config::read_points_csv(&args.points)?;
    let result = match args.model.as_str() {
        "sin2" => fit::fit_sin2_efficiency(&points, args.length_cm)?,
        "linear_origin" => fit::fit_linear_origin(&points)?,
        "gaussian" => {
            let hist: Vec<(f64, f64)> = points.iter().map(|&(x, y, _)| (x, y)).collect();
            fit::fit_gaussian_peak(&hist)?
        }
        other => {
            return Err(Error::config(format!(
                "unknown model {other:?}; expected sin2, linear_origin, or gaussian"
            )))
        }
    };

    println!("model {}", args.model);
    println!("converged {}", result.converged);
    println!("iterations {}", result.iterations);
    println!("residual_norm {}", fmt_f64(result.residual_norm));
    for ((name, value), sigma) in result.parameters.iter().zip(&result.sigmas) {
        println!("{name} = {} +- {}", fmt_f64(*value), fmt_f64(*sigma));
    }
    if let Some(path) = &args.out {
        let rows: Vec<Vec<String>> = result
            .parameters
            .iter()
            .zip(&result.sigmas)
            .map(|((n, v), s)| vec![n.clone(), fmt_f64(*v), fmt_f64(*s)])
            .collect();
        write_csv(path, &["parameter", "value", "sigma"], &rows)?;
        println!("wrote {}", path.display());
    }
    if !result.converged {
        return Err(Error::numerical(format!(
            "fit did not converge after {} iterations; best parameters {:?}",
            result.iterations, result.parameters
        )));
    }
    Ok(())
}

fn cmd_preset_list() -> Result<()> {
    for (name, _, description) in config::PRESETS {
        println!("{name: <18} {description}");
    }
    Ok(())
}
