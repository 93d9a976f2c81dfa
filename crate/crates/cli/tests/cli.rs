use std::path::Path;
use std::process::{Command, Output};

use pkco::output::RunSummary;
use tempfile::TempDir;

fn pkco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkco"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pkco(args);
    assert!(
        out.status.success(),
        "pkco {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn summary(dir: &Path) -> RunSummary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn run_bundled(tmp: &TempDir, name: &str, extra: &[&str]) -> RunSummary {
    let dir = tmp.path().join(name);
    let mut args = vec![
        "run",
        "--scenario",
        name,
        "--out",
        dir.to_str().unwrap(),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    ok(&args);
    summary(&dir)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MINIMAL: &str = "\
[scenario]
name = \"mini\"
cycle_period = 1.0
num_cycles = 60

[node.1]
initial_offset = 0.2

[node.1.kappa]
mean = 349e-6

[node.1.eta]
mean = 514e-6

[node.1.controller]
alpha = 0.5
";

fn write_config(tmp: &TempDir, name: &str, text: &str) -> String {
    let p = tmp.path().join(name);
    std::fs::write(&p, text).unwrap();
    path(&p).to_string()
}

#[test]
fn uncompensated_run_reports_the_delay_limited_asymptote() {
    let tmp = TempDir::new().unwrap();
    let s = run_bundled(&tmp, "table1_nocomp", &[]);
    let node = &s.per_node[&1];
    let expected = -349e-6 - 514e-6 / 0.5;
    assert!((node.theory.asymptote_s - expected).abs() < 1e-15);
    assert_eq!(node.theory.eigenvalue, 0.5);
    assert!(node.theory.stable);
    assert!(node.report.converged);
    assert!((node.report.steady_mean_s - expected).abs() < 10e-6);
    for f in ["trace.csv", "summary.json", "manifest.json"] {
        assert!(tmp.path().join("table1_nocomp").join(f).exists(), "{f}");
    }
}

#[test]
fn compensated_run_settles_on_its_slot() {
    let tmp = TempDir::new().unwrap();
    let node = run_bundled(&tmp, "table1_ffwd", &[]).per_node[&1];
    assert_eq!(node.theory.asymptote_s, 9.15e-3);
    assert!((node.report.steady_mean_s - 9.15e-3).abs() < 5e-6);
}

#[test]
fn tick_counter_run_stays_within_two_ticks() {
    let tmp = TempDir::new().unwrap();
    let node = run_bundled(&tmp, "exp_ticks", &[]).per_node[&1];
    assert!(node.report.converged);
    assert!(node.report.max_abs_delta_s <= 2.0 / 32768.0 + 1e-12);
}

#[test]
fn seed_and_cycle_overrides_are_recorded() {
    let tmp = TempDir::new().unwrap();
    let s = run_bundled(&tmp, "table1_nocomp", &["--seed", "7", "--cycles", "30"]);
    assert_eq!(s.seed, 7);
    let m = s.manifest.unwrap();
    assert_eq!((m.seed, m.num_cycles), (7, 30));
    let trace = std::fs::read_to_string(tmp.path().join("table1_nocomp/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 31);
}

#[test]
fn bad_config_names_the_line_and_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "bad.toml",
        &MINIMAL.replace("alpha = 0.5", "alpha = \"half\""),
    );
    let out = pkco(&["run", "--config", &cfg, "--out", path(tmp.path())]);
    assert_eq!(code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("line 16"), "{err}");
    assert!(err.contains("node.1.controller.alpha"), "{err}");
}

#[test]
fn negative_variance_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let text = MINIMAL.replace("mean = 514e-6", "mean = 514e-6\nvariance = -1e-9");
    let cfg = write_config(&tmp, "neg.toml", &text);
    let out = pkco(&["run", "--config", &cfg, "--out", path(tmp.path())]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("node.1.eta.variance"));
}

#[test]
fn slot_beyond_the_threshold_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "slot.toml",
        &MINIMAL.replace("alpha = 0.5", "alpha = 0.5\nt_d = 1.5"),
    );
    let out = pkco(&["run", "--config", &cfg, "--out", path(tmp.path())]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("slot_reference"));
}

#[test]
fn delays_longer_than_a_cycle_are_a_simulation_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "spill.toml",
        &MINIMAL.replace("mean = 514e-6", "mean = 0.9999"),
    );
    let out = pkco(&["run", "--config", &cfg, "--out", path(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn unstable_gain_warns_and_strict_rejects() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "hot.toml", &MINIMAL.replace("alpha = 0.5", "alpha = 2.3"));
    let out = ok(&[
        "run",
        "--config",
        &cfg,
        "--out",
        path(&tmp.path().join("a")),
        "--quiet",
    ]);
    assert!(stderr(&out).contains("warning"));
    assert!(!summary(&tmp.path().join("a")).per_node[&1].report.converged);

    let out = pkco(&[
        "run",
        "--config",
        &cfg,
        "--out",
        path(&tmp.path().join("b")),
        "--strict",
    ]);
    assert_eq!(code(&out), 3);
    assert!(!tmp.path().join("b").exists());
}

#[test]
fn unknown_bundled_scenario_lists_the_known_ones() {
    let tmp = TempDir::new().unwrap();
    let out = pkco(&["run", "--scenario", "nope", "--out", path(tmp.path())]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("table1_ffwd"));
}

#[test]
fn missing_scenario_source_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&pkco(&["run", "--out", path(tmp.path())])), 2);
}

#[test]
fn analyze_reproduces_the_run_summary_exactly() {
    let tmp = TempDir::new().unwrap();
    for name in ["table1_nocomp", "slots5", "exp_ticks"] {
        let s = run_bundled(&tmp, name, &[]);
        let trace = tmp.path().join(name).join("trace.csv");
        let out = ok(&["analyze", path(&trace)]);
        let again: RunSummary = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(again.per_node, s.per_node, "{name}");
        assert!(again.manifest.is_none());
    }
}

#[test]
fn analyze_with_explicit_config_and_out_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "mini.toml", MINIMAL);
    let run_dir = tmp.path().join("r");
    ok(&["run", "--config", &cfg, "--out", path(&run_dir), "--quiet"]);
    let lone = tmp.path().join("lone.csv");
    std::fs::copy(run_dir.join("trace.csv"), &lone).unwrap();

    let out = pkco(&["analyze", path(&lone)]);
    assert_eq!(code(&out), 3, "no sidecar and no --config");

    let json = tmp.path().join("s.json");
    ok(&[
        "analyze",
        path(&lone),
        "--config",
        &cfg,
        "--out",
        path(&json),
        "--quiet",
    ]);
    let s: RunSummary = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(s.per_node, summary(&run_dir).per_node);
}

#[test]
fn truncated_trace_is_not_converged() {
    let tmp = TempDir::new().unwrap();
    run_bundled(&tmp, "table1_nocomp", &[]);
    let dir = tmp.path().join("table1_nocomp");
    let full = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    let short: Vec<&str> = full.lines().take(6).collect();
    std::fs::write(dir.join("trace.csv"), short.join("\n") + "\n").unwrap();
    let out = ok(&["analyze", path(&dir.join("trace.csv"))]);
    let s: RunSummary = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!s.per_node[&1].report.converged);
    assert_eq!(s.per_node[&1].report.settling_cycle, None);
}

#[test]
fn constant_trace_at_the_asymptote_settles_at_cycle_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "mini.toml", MINIMAL);
    let limit = -349e-6 - 514e-6 / 0.5;
    let mut text = String::from(
        "cycle,node_id,kappa_s,eta_s,timestamp_s,offset_est_s,u_s,offset_after_s,fire_rel_s,delta_s,collided\n",
    );
    for k in 0..3 {
        text.push_str(&format!(
            "{k},1,349e-6,514e-6,0.0,{},0.0,{limit},0.0,{},false\n",
            limit + 349e-6,
            -limit
        ));
    }
    let trace = tmp.path().join("const.csv");
    std::fs::write(&trace, text).unwrap();
    let out = ok(&["analyze", path(&trace), "--config", &cfg]);
    let s: RunSummary = serde_json::from_slice(&out.stdout).unwrap();
    let r = s.per_node[&1].report;
    assert_eq!(r.settling_cycle, Some(0));
    assert!(r.converged);
    assert!((r.steady_mean_s - limit).abs() < 1e-15);
    assert!(r.steady_std_s < 1e-15);
}

#[test]
fn malformed_trace_reports_the_row_and_exits_5() {
    let tmp = TempDir::new().unwrap();
    run_bundled(&tmp, "table1_nocomp", &["--cycles", "10"]);
    let trace = tmp.path().join("table1_nocomp/trace.csv");
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[4] = lines[4].replacen(",1,", ",1,abc,", 1);
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let out = pkco(&["analyze", path(&trace)]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("row 5"), "{}", stderr(&out));

    std::fs::write(&trace, "cycle,node\n0,1\n").unwrap();
    assert_eq!(code(&pkco(&["analyze", path(&trace)])), 5);
}

#[test]
fn missing_trace_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&pkco(&["analyze", path(&tmp.path().join("none.csv"))])), 1);
}

#[test]
fn replay_regenerates_a_byte_identical_trace() {
    let tmp = TempDir::new().unwrap();
    run_bundled(&tmp, "slots5", &["--seed", "11", "--cycles", "50"]);
    let first = tmp.path().join("slots5");
    let again = tmp.path().join("again");
    ok(&[
        "replay",
        path(&first.join("manifest.json")),
        "--out",
        path(&again),
        "--quiet",
    ]);
    assert_eq!(
        std::fs::read(first.join("trace.csv")).unwrap(),
        std::fs::read(again.join("trace.csv")).unwrap()
    );
    assert_eq!(summary(&first).per_node, summary(&again).per_node);
}

fn sweep_rows(dir: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "value",
            "node_id",
            "asymptote_theory_s",
            "steady_mean_s",
            "settling_cycle",
            "converged",
            "error"
        ]
    );
    r.records().map(Result::unwrap).collect()
}

fn num(rec: &csv::StringRecord, i: usize) -> f64 {
    rec[i].parse().unwrap()
}

#[test]
fn alpha_sweep_over_the_stable_range_all_converge() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("alpha");
    ok(&[
        "sweep",
        "--scenario",
        "table1_ffwd",
        "--param",
        "alpha",
        "--values",
        "0.1:1.9:0.2",
        "--cycles",
        "300",
        "--out",
        path(&out),
        "--quiet",
    ]);
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        assert!((num(row, 0) - (0.1 + 0.2 * i as f64)).abs() < 1e-12);
        assert_eq!(&row[5], "true", "alpha {}", &row[0]);
        assert!(out.join(format!("alpha_{i:03}/trace.csv")).exists());
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("alpha_003/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["sweep"]["param"], "alpha");
    assert_eq!(m["sweep"]["value"], 0.7);
    assert!(out.join("sweep_manifest.json").exists());
}

#[test]
fn slot_sweep_tracks_each_value() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("td");
    ok(&[
        "sweep",
        "--scenario",
        "table1_ffwd",
        "--param",
        "t_d",
        "--values",
        "0,0.005,0.01281,0.3",
        "--out",
        path(&out),
        "--quiet",
        "--sequential",
    ]);
    for row in sweep_rows(&out) {
        let (value, theory, mean) = (num(&row, 0), num(&row, 2), num(&row, 3));
        assert!((theory - value).abs() < 1e-15);
        assert!((mean - value).abs() < 5e-6, "{value}: {mean}");
    }
}

#[test]
fn seed_sweep_keeps_the_theory_fixed() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("seed");
    ok(&[
        "sweep",
        "--scenario",
        "table1_nocomp",
        "--param",
        "seed",
        "--values",
        "0:4:1",
        "--out",
        path(&out),
        "--quiet",
    ]);
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 5);
    let means: Vec<f64> = rows.iter().map(|r| num(r, 3)).collect();
    for row in &rows {
        assert!((num(row, 2) + 1.377e-3).abs() < 1e-15);
    }
    assert!(means.windows(2).all(|w| w[0] != w[1]));

    let out = pkco(&[
        "sweep",
        "--scenario",
        "table1_nocomp",
        "--param",
        "seed",
        "--values",
        "1.5",
        "--out",
        path(&tmp.path().join("x")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn sweep_keeps_going_past_a_failed_value() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("eta");
    let res = pkco(&[
        "sweep",
        "--scenario",
        "table1_nocomp",
        "--param",
        "eta_mean",
        "--values",
        "514e-6,0.9999,300e-6",
        "--out",
        path(&out),
        "--quiet",
    ]);
    assert_eq!(code(&res), 4);
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 3);
    assert!(rows[0][6].is_empty() && rows[2][6].is_empty());
    assert!(!rows[1][6].is_empty());
}

#[test]
fn figures_and_list() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("fig");
    ok(&["figures", "--out", path(&out), "--quiet"]);
    for stem in [
        "fig3_offset_nocomp",
        "fig4_offset_ffwd",
        "fig5_precision_skew",
        "fig6_precision_ticks",
        "fig7_slots",
    ] {
        let csv = std::fs::read_to_string(out.join(format!("{stem}.csv"))).unwrap();
        assert!(
            csv.starts_with("cycle,node_id,offset_s,delta_s,delta_ticks,theory_s"),
            "{stem}"
        );
        assert!(out.join(format!("{stem}.manifest.json")).exists());
    }
    let list = String::from_utf8(ok(&["list"]).stdout).unwrap();
    assert_eq!(list.lines().count(), pkco::scenarios::BUNDLED.len());
    assert!(list.contains("table1_nocomp"));
}
