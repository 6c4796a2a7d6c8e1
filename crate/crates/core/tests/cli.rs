//! End-to-end checks of the command-line interface: subcommands, file
//! outputs, exit codes, and cross-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heraldsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn heraldsim")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = read(path);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let field = l.split(',').nth(idx).unwrap();
            field.parse().unwrap_or(f64::NAN)
        })
        .collect()
}

#[test]
fn preset_list_names_every_bundle() {
    let out = run(&["preset-list"]);
    assert_success(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["smoke", "fig2a", "fig2b", "fig3a", "fig4", "figS5-stokes", "figS5-antistokes", "tableI"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn smoke_preset_is_empty_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_success(&run(&["simulate", "--preset", "smoke", "--out", out_a.to_str().unwrap()]));
    assert_success(&run(&[
        "--threads",
        "4",
        "simulate",
        "--preset",
        "smoke",
        "--out",
        out_b.to_str().unwrap(),
    ]));

    let summary = read(&out_a.join("summary.csv"));
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "point,sweep_parameter,sweep_value,n_trials,p_s,p_as,p_s_as,g2,g2_sigma,eta_r,rate_s_hz,rate_as_hz,rate_coinc_hz"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[4], "0"); // p_s
    assert_eq!(row[5], "0"); // p_as
    assert_eq!(row[10], "0"); // rate_s_hz

    // byte-identical across runs and thread counts
    assert_eq!(summary, read(&out_b.join("summary.csv")));
    assert_eq!(
        read(&out_a.join("smoke_p00_stokes.tags")),
        read(&out_b.join("smoke_p00_stokes.tags"))
    );
}

#[test]
fn nontrivial_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("t1");
    let out_b = dir.path().join("t4");
    for (threads, out) in [("1", &out_a), ("4", &out_b)] {
        assert_success(&run(&[
            "--threads",
            threads,
            "simulate",
            "--preset",
            "fig2a",
            "--cycles",
            "2000",
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    for file in ["summary.csv", "fig2a_p00_stokes.tags", "fig2a_p00_antistokes.tags"] {
        let a = read(&out_a.join(file));
        assert!(!a.is_empty());
        assert_eq!(a, read(&out_b.join(file)), "{file} differs across thread counts");
    }
}

#[test]
fn corrupt_stream_is_a_config_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = analyze_fig2a(dir.path());
    // replace the final timestamp record with garbage
    let text = read(&b);
    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.len() - 1;
    lines[last] = "not-a-number";
    let bad = dir.path().join("bad.tags");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let out = run(&[
        "analyze",
        "--a",
        a.to_str().unwrap(),
        "--b",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("an").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.tags:"), "{stderr}");
}

#[test]
fn sweep_simulation_reproduces_curve_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2b");
    assert_success(&run(&[
        "simulate",
        "--preset",
        "fig2b",
        "--cycles",
        "4000",
        "--out",
        out.to_str().unwrap(),
    ]));
    let p_s = csv_column(&out.join("summary.csv"), "p_s");
    let g2 = csv_column(&out.join("summary.csv"), "g2");
    let eta_r = csv_column(&out.join("summary.csv"), "eta_r");
    assert_eq!(p_s.len(), 13);
    // herald probability spans the requested range
    assert!(p_s[0] < 5e-5 && p_s[12] > 1e-2, "{p_s:?}");
    // correlation far above the classical threshold in the middle, small at top
    let mid = g2[6];
    assert!(mid > 15.0, "g2 {g2:?}");
    assert!(g2[12] < 10.0, "g2 {g2:?}");
    // plateau retrieval efficiency lands in the right regime
    assert!((eta_r[6] - 0.32).abs() < 0.1, "eta_r {eta_r:?}");
    // one stream pair per sweep point
    let n_tags = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().map(|x| x == "tags").unwrap_or(false)
        })
        .count();
    assert_eq!(n_tags, 26);
}

fn analyze_fig2a(dir: &Path) -> (PathBuf, PathBuf) {
    let out = dir.join("sim");
    assert_success(&run(&[
        "simulate",
        "--preset",
        "fig2a",
        "--cycles",
        "4000",
        "--out",
        out.to_str().unwrap(),
    ]));
    (out.join("fig2a_p00_stokes.tags"), out.join("fig2a_p00_antistokes.tags"))
}

#[test]
fn analyze_emits_estimates_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = analyze_fig2a(dir.path());
    let out1 = dir.path().join("an1");
    let out2 = dir.path().join("an2");
    for out in [&out1, &out2] {
        assert_success(&run(&[
            "analyze",
            "--a",
            a.to_str().unwrap(),
            "--b",
            b.to_str().unwrap(),
            "--det-eta",
            "0.43",
            "--jackknife-blocks",
            "10",
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    let estimates = read(&out1.join("estimates.csv"));
    for quantity in ["g2", "p_a", "p_b", "p_coinc", "eta_r", "g2_sigma_jackknife"] {
        assert!(estimates.contains(&format!("\n{quantity},")) || estimates.starts_with(&format!("{quantity},")),
            "missing {quantity} in:\n{estimates}");
    }
    assert!(out1.join("histogram.csv").exists());
    assert!(out1.join("waveform.csv").exists());
    // byte-identical re-analysis
    assert_eq!(estimates, read(&out2.join("estimates.csv")));
    assert_eq!(read(&out1.join("waveform.csv")), read(&out2.join("waveform.csv")));
}

#[test]
fn blocked_run_gives_conditional_snr() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("sig");
    let blk = dir.path().join("blk");
    assert_success(&run(&[
        "simulate", "--preset", "fig3a", "--cycles", "60000", "--out", sig.to_str().unwrap(),
    ]));
    // pump noise per herald is ~2e-4, so the blocked reference needs many
    // more trials than the signal run to see any background at all
    assert_success(&run(&[
        "simulate", "--preset", "fig3a", "--cycles", "200000", "--blocked", "--out",
        blk.to_str().unwrap(),
    ]));
    let out = dir.path().join("an");
    assert_success(&run(&[
        "analyze",
        "--a", sig.join("fig3a_p00_stokes.tags").to_str().unwrap(),
        "--b", sig.join("fig3a_p00_antistokes.tags").to_str().unwrap(),
        "--noise-a", blk.join("fig3a-blocked_p00_stokes.tags").to_str().unwrap(),
        "--noise-b", blk.join("fig3a-blocked_p00_antistokes.tags").to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]));
    let estimates = read(&out.join("estimates.csv"));
    let snr_row = estimates
        .lines()
        .find(|l| l.starts_with("snr_conditional,"))
        .expect("snr row");
    let snr: f64 = snr_row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(snr > 8.0 && snr < 40.0, "snr {snr}");
}

#[test]
fn predict_crossover_matches_closed_form() {
    let out = run(&["predict", "crossover"]);
    assert_success(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "device_eta,crossover_km");
    let expected = [(0.001, 30.0 / 2.8), (0.01, 20.0 / 2.8), (0.1, 10.0 / 2.8)];
    for (eta, km) in expected {
        let line = lines.next().unwrap();
        let mut fields = line.split(',');
        assert_eq!(fields.next().unwrap().parse::<f64>().unwrap(), eta);
        let got: f64 = fields.next().unwrap().parse().unwrap();
        assert!((got - km).abs() < 1e-9, "{line}");
    }
}

#[test]
fn predict_eta_dev_starts_at_zero() {
    let out = run(&["predict", "eta-dev", "--points", "4", "--pump-max-w", "0.3"]);
    assert_success(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    let first = text.lines().nth(1).unwrap();
    assert_eq!(first, "0,0");
}

#[test]
fn predict_g2c_from_simulated_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.csv");
    std::fs::write(
        &summary,
        "point,sweep_parameter,sweep_value,n_trials,p_s,p_as,p_s_as,g2,g2_sigma,eta_r,rate_s_hz,rate_as_hz,rate_coinc_hz\n\
         p00,source.mu,0.001,1000,0.0002,0.002,0.00001,40,2,0.32,1,1,1\n\
         p01,source.mu,0.01,1000,0.002,0.02,0.0001,10,0.5,0.32,1,1,1\n",
    )
    .unwrap();
    let out_csv = dir.path().join("g2c.csv");
    let out = run(&[
        "predict",
        "g2c",
        "--from-csv",
        summary.to_str().unwrap(),
        "--snr-max",
        "85",
        "--eta-r-in",
        "0.2464",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_success(&out);
    let g2c = csv_column(&out_csv, "g2c");
    let snr = 85.0 * 0.2464;
    let expect0 = 40.0 * (snr + 1.0) / (snr + 40.0);
    let expect1 = 10.0 * (snr + 1.0) / (snr + 10.0);
    assert!((g2c[0] - expect0).abs() < 1e-9);
    assert!((g2c[1] - expect1).abs() < 1e-9);
}

#[test]
fn fit_command_roundtrip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // well-posed sin^2 fit exits 0 and reports the parameters
    let pts = dir.path().join("eta.csv");
    let mut text = String::from("x,y,sigma\n");
    for i in 1..=12 {
        let p = 0.25 * i as f64;
        let y = 0.136 * ((1.2 * p).sqrt().sin()).powi(2);
        text.push_str(&format!("{p},{y},0.003\n"));
    }
    std::fs::write(&pts, text).unwrap();
    let report = dir.path().join("fit.csv");
    let out = run(&[
        "fit",
        "--model",
        "sin2",
        "--points",
        pts.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("eta_max"), "{stdout}");
    let values = csv_column(&report, "value");
    assert!((values[0] - 0.136).abs() < 1e-6);
    assert!((values[1] - 1.2).abs() < 1e-5);

    // unknown model is a config error (exit 2)
    let out = run(&["fit", "--model", "cubic", "--points", pts.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // unparsable CSV is a config error with a line position
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,banana\n").unwrap();
    let out = run(&["fit", "--model", "linear_origin", "--points", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:2"));

    // a flat histogram cannot be fit: numerical failure (exit 3)
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("x,y\n");
    for i in 0..10 {
        text.push_str(&format!("{i},5\n"));
    }
    std::fs::write(&flat, text).unwrap();
    let out = run(&["fit", "--model", "gaussian", "--points", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn scenario_schema_violations_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nn_cycles = 10\nseed = \"entropy\"\n").unwrap();
    let out = run(&["simulate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = run(&["simulate", "--preset", "does-not-exist"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn table_preset_assembles_all_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("tableI");
    let out = run(&[
        "simulate",
        "--preset",
        "tableI",
        "--cycles",
        "600",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let table = read(&out_dir.join("tableI.csv"));
    for q in ["g2_s_as", "g2c_s_as", "g2_s_s", "g2_as_as", "g2c_as_as", "R", "Rc"] {
        assert!(table.contains(&format!("{q},")), "missing {q}:\n{table}");
    }
    let r: f64 = table
        .lines()
        .find(|l| l.starts_with("R,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(r > 1.0, "R {r}");
}
