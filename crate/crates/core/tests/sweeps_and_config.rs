use pkco::analysis::{sweep, sweep_alpha, SweepParam};
use pkco::config::{check_gains, parse_scenario};
use pkco::exec::Execution;
use pkco::output::{read_trace, trace_to_string, RunManifest};
use pkco::{netsim, scenarios};

fn base() -> pkco::ScenarioConfig {
    let mut s = scenarios::load("table1_ffwd").unwrap().unwrap();
    s.num_cycles = 300;
    s
}

#[test]
fn alpha_grid_inside_the_stable_region_converges() {
    let alphas: Vec<f64> = (0..10).map(|i| 0.1 + 0.2 * i as f64).collect();
    for (alpha, report) in sweep_alpha(&base(), &alphas).unwrap() {
        assert!(report.converged, "alpha {alpha}");
    }
    let outside = sweep_alpha(&base(), &[2.0, 2.5]).unwrap();
    assert!(outside.iter().all(|(_, r)| !r.converged));
}

#[test]
fn slot_sweep_moves_the_steady_mean() {
    let slots = [0.0, 9.15e-3, 12.81e-3];
    let points = sweep(&base(), SweepParam::SlotReference, &slots, Execution::default());
    for (p, slot) in points.iter().zip(slots) {
        let (_, summary) = p.result.as_ref().unwrap();
        let report = summary[0].report;
        assert_eq!(summary[0].theory.asymptote, slot);
        assert!(
            (report.steady_mean - slot).abs() < 10e-6,
            "{slot}: {}",
            report.steady_mean
        );
    }
}

#[test]
fn seed_sweep_leaves_theory_fixed_and_scatters_the_mean() {
    let seeds: Vec<f64> = (0..10).map(f64::from).collect();
    let points = sweep(&base(), SweepParam::Seed, &seeds, Execution::default());
    let means: Vec<f64> = points
        .iter()
        .map(|p| {
            let (_, s) = p.result.as_ref().unwrap();
            assert_eq!(s[0].theory.asymptote, 9.15e-3);
            s[0].report.steady_mean
        })
        .collect();
    let m = means.iter().sum::<f64>() / 10.0;
    let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 9.0).sqrt();
    // sd of a 200-cycle mean of the AR(1) loop: 2 sigma / sqrt(200) = 2.2 us
    let expected = 2.0 * 244.4990e-12f64.sqrt() / 200f64.sqrt();
    assert!(
        sd > 0.3 * expected && sd < 2.5 * expected,
        "sd {sd} vs {expected}"
    );
}

#[test]
fn sequential_and_parallel_sweeps_are_identical() {
    let values = [0.2, 0.7, 1.3];
    let a = sweep(&base(), SweepParam::Alpha, &values, Execution::Sequential);
    let b = sweep(&base(), SweepParam::Alpha, &values, Execution::Parallel);
    for (x, y) in a.iter().zip(&b) {
        let (ox, _) = x.result.as_ref().unwrap();
        let (oy, _) = y.result.as_ref().unwrap();
        assert_eq!(trace_to_string(&ox.records), trace_to_string(&oy.records));
    }
}

#[test]
fn failing_sub_run_does_not_stop_the_others() {
    let points = sweep(
        &base(),
        SweepParam::EtaMean,
        &[514e-6, 0.9999, 335.5e-6],
        Execution::default(),
    );
    assert!(points[0].result.is_ok());
    assert!(matches!(points[1].result, Err(pkco::SimError::Spillover { .. })));
    assert!(points[2].result.is_ok());
}

const MINIMAL: &str = "\
[scenario]
cycle_period = 1.0
num_cycles = 20

[node.1.kappa]
mean = 349e-6

[node.1.eta]
mean = 514e-6

[node.1.controller]
alpha = 0.5
";

#[test]
fn gain_outside_the_stable_region_warns_unless_strict() {
    let s = parse_scenario(&MINIMAL.replace("alpha = 0.5", "alpha = 2.2")).unwrap();
    let warnings = check_gains(&s, false).unwrap();
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("node.1.controller.alpha"));
    assert!(check_gains(&s, true).is_err());
    assert!(check_gains(&parse_scenario(MINIMAL).unwrap(), true)
        .unwrap()
        .is_empty());
}

#[test]
fn negative_variance_and_oversized_slot_are_always_rejected() {
    let neg = MINIMAL.replace("mean = 349e-6", "mean = 349e-6\nvariance = -1e-12");
    let err = parse_scenario(&neg).unwrap_err();
    assert_eq!(err.field, "node.1.kappa.variance");
    assert_eq!(err.line, Some(7));

    let slot = MINIMAL.replace("alpha = 0.5", "alpha = 0.5\nt_d = 1.0");
    let err = parse_scenario(&slot).unwrap_err();
    assert_eq!(err.field, "node.1.controller.slot_reference");
    assert_eq!(err.line, Some(13));
}

#[test]
fn manifest_alone_regenerates_a_byte_identical_trace() {
    let text = scenarios::text("slots5").unwrap();
    let mut scenario = parse_scenario(text).unwrap();
    scenario.seed = 9;
    scenario.num_cycles = 40;
    let original = trace_to_string(&netsim::run(&scenario).unwrap().records);

    let manifest = RunManifest::new(text, None, &scenario);
    let json = serde_json::to_string(&manifest).unwrap();
    let back: RunManifest = serde_json::from_str(&json).unwrap();
    let again = trace_to_string(&netsim::run(&back.scenario().unwrap()).unwrap().records);
    assert_eq!(original, again);
    assert_eq!(read_trace(again.as_bytes()).unwrap().len(), 200);
}
