//! Post-processing of cycle records: settling detection, steady-state
//! statistics and parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::clock::Representation;
use crate::control::TheoryPrediction;
use crate::error::{AnalysisError, SimError};
use crate::exec::{map_ordered, Execution};
use crate::netsim::{run, CycleRecord, NodeConfig, RunOutput, ScenarioConfig};

/// Trailing window used for steady-state statistics.
pub const DEFAULT_WINDOW: usize = 200;

/// Smallest tolerance band used when a node has no noise at all.
pub const MIN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// First cycle from which the offset stays inside the tolerance band.
    pub settling_cycle: Option<u64>,
    pub steady_mean: f64,
    pub steady_std: f64,
    pub theory_asymptote: f64,
    pub abs_error_vs_theory: f64,
    /// Largest |delta| after settling (over the trailing window when the run
    /// never settled).
    pub max_abs_delta: f64,
    /// Collisions over the same range as `max_abs_delta`.
    pub collision_count: u64,
}

/// Offsets at the start of every cycle plus the final one: entry 0 is the
/// initial offset as seen by the estimator, entry `k` is the offset after
/// cycle `k - 1`.
pub fn offset_series(records: &[CycleRecord]) -> Vec<f64> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    std::iter::once(first.offset_estimate - first.kappa_sample)
        .chain(records.iter().map(|r| r.offset_after))
        .collect()
}

/// Index into [`offset_series`] after which every offset is within
/// `tolerance` of `target`. `None` when the final offset is outside.
pub fn settling_index(series: &[f64], target: f64, tolerance: f64) -> Option<usize> {
    let inside = |x: &f64| (x - target).abs() < tolerance;
    match series.iter().rposition(|x| !inside(x)) {
        None if series.is_empty() => None,
        None => Some(0),
        Some(last_out) if last_out + 1 < series.len() => Some(last_out + 1),
        Some(_) => None,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Records for one node, in cycle order.
pub fn analyze(
    records: &[CycleRecord],
    prediction: &TheoryPrediction,
    tolerance: f64,
    window: usize,
) -> Result<ConvergenceReport, AnalysisError> {
    let first = records.first().ok_or(AnalysisError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.node_id != first.node_id) {
        return Err(AnalysisError::MixedNodes(first.node_id, other.node_id));
    }
    if window == 0 {
        return Err(AnalysisError::ZeroWindow);
    }
    if window > records.len() {
        return Err(AnalysisError::WindowTooLarge {
            window,
            available: records.len(),
        });
    }

    let series = offset_series(records);
    let settling = settling_index(&series, prediction.asymptote, tolerance);

    let tail: Vec<f64> = records[records.len() - window..]
        .iter()
        .map(|r| r.offset_after)
        .collect();
    let (steady_mean, steady_std) = mean_std(&tail);

    let steady = steady_slice(records, settling, window);
    let max_abs_delta = steady.iter().map(|r| r.delta.abs()).fold(0.0, f64::max);
    let collision_count = steady.iter().filter(|r| r.collided).count() as u64;

    Ok(ConvergenceReport {
        converged: settling.is_some(),
        settling_cycle: settling.map(|s| s as u64),
        steady_mean,
        steady_std,
        theory_asymptote: prediction.asymptote,
        abs_error_vs_theory: (steady_mean - prediction.asymptote).abs(),
        max_abs_delta,
        collision_count,
    })
}

/// Records whose post-cycle offset lies in the settled region, or the
/// trailing window when the run never settled.
fn steady_slice(records: &[CycleRecord], settling: Option<usize>, window: usize) -> &[CycleRecord] {
    match settling {
        Some(s) => &records[s.saturating_sub(1).min(records.len())..],
        None => &records[records.len() - window.min(records.len())..],
    }
}

/// The post-settling records a report was computed over.
pub fn steady_records<'a>(
    records: &'a [CycleRecord],
    report: &ConvergenceReport,
    window: usize,
) -> &'a [CycleRecord] {
    steady_slice(records, report.settling_cycle.map(|s| s as usize), window)
}

/// Stationary standard deviation of the offset around its asymptote for a
/// stable loop: per-cycle innovation variance is `noise + alpha^2 kappa +
/// eta`, filtered by a first-order pole at `1 - alpha`.
pub fn stationary_std(node: &NodeConfig) -> f64 {
    let alpha = node.controller.alpha;
    let innovation =
        node.clock.offset_noise_variance + alpha * alpha * node.kappa.variance + node.eta.variance;
    let pole = 1.0 - alpha;
    if pole.abs() < 1.0 {
        (innovation / (1.0 - pole * pole)).sqrt()
    } else {
        innovation.sqrt()
    }
}

/// Three stationary standard deviations, plus two ticks of quantisation
/// slack in ticks mode, never below [`MIN_TOLERANCE`].
pub fn default_tolerance(node: &NodeConfig, mode: Representation) -> f64 {
    let band = (3.0 * stationary_std(node)).max(MIN_TOLERANCE);
    match mode {
        Representation::Continuous => band,
        Representation::Ticks => band + 2.0 * node.clock.tick_period,
    }
}

/// Window used for run summaries: [`DEFAULT_WINDOW`] cycles, cut down to
/// the settled part of the run so a short run's transient is not averaged
/// into its steady state.
pub fn summary_window(records: usize, settling: Option<usize>) -> usize {
    let usable = match settling {
        Some(s) => records + 1 - s.min(records),
        None => records,
    };
    DEFAULT_WINDOW.min(usable).min(records).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: u32,
    pub theory: TheoryPrediction,
    pub report: ConvergenceReport,
}

/// Default-parameter analysis of every node in a finished run.
pub fn summarize(scenario: &ScenarioConfig, output: &RunOutput) -> Vec<NodeSummary> {
    summarize_records(scenario, &output.records)
}

pub fn summarize_records(scenario: &ScenarioConfig, records: &[CycleRecord]) -> Vec<NodeSummary> {
    let mut nodes: Vec<&NodeConfig> = scenario.nodes.iter().collect();
    nodes.sort_by_key(|n| n.node_id);
    nodes
        .into_iter()
        .filter_map(|node| {
            let own: Vec<CycleRecord> = records
                .iter()
                .filter(|r| r.node_id == node.node_id)
                .copied()
                .collect();
            if own.is_empty() {
                return None;
            }
            let theory = node.prediction();
            let tolerance = default_tolerance(node, scenario.mode);
            let settling = settling_index(&offset_series(&own), theory.asymptote, tolerance);
            let window = summary_window(own.len(), settling);
            let report = analyze(&own, &theory, tolerance, window).expect("non-empty single-node records");
            Some(NodeSummary {
                node_id: node.node_id,
                theory,
                report,
            })
        })
        .collect()
}

/// Scenario parameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    KappaMean,
    EtaMean,
    SlotReference,
    Seed,
}

impl SweepParam {
    pub const NAMES: [&'static str; 5] = ["alpha", "kappa_mean", "eta_mean", "t_d", "seed"];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::KappaMean => "kappa_mean",
            SweepParam::EtaMean => "eta_mean",
            SweepParam::SlotReference => "t_d",
            SweepParam::Seed => "seed",
        }
    }

    /// Applies `value` to every node of `scenario`.
    pub fn apply(self, scenario: &mut ScenarioConfig, value: f64) {
        if self == SweepParam::Seed {
            scenario.seed = value as u64;
            return;
        }
        for node in &mut scenario.nodes {
            match self {
                SweepParam::Alpha => node.controller.alpha = value,
                SweepParam::KappaMean => node.kappa.mean = value,
                SweepParam::EtaMean => node.eta.mean = value,
                SweepParam::SlotReference => node.controller.slot_reference = value,
                SweepParam::Seed => unreachable!(),
            }
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "kappa_mean" => Ok(SweepParam::KappaMean),
            "eta_mean" => Ok(SweepParam::EtaMean),
            "t_d" | "slot_reference" => Ok(SweepParam::SlotReference),
            "seed" => Ok(SweepParam::Seed),
            other => Err(format!(
                "unknown sweep parameter `{other}` (expected one of {})",
                Self::NAMES.join(", ")
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub scenario: ScenarioConfig,
    pub result: Result<(RunOutput, Vec<NodeSummary>), SimError>,
}

/// Runs one copy of `base` per value. Points are independent and come back
/// in the order of `values`.
pub fn sweep(base: &ScenarioConfig, param: SweepParam, values: &[f64], exec: Execution) -> Vec<SweepPoint> {
    map_ordered(values, exec, |&value| {
        let mut scenario = base.clone();
        param.apply(&mut scenario, value);
        let result = run(&scenario).map(|out| {
            let summary = summarize(&scenario, &out);
            (out, summary)
        });
        SweepPoint {
            value,
            scenario,
            result,
        }
    })
}

/// Convergence report of the first node for each gain.
pub fn sweep_alpha(base: &ScenarioConfig, alphas: &[f64]) -> Result<Vec<(f64, ConvergenceReport)>, SimError> {
    sweep(base, SweepParam::Alpha, alphas, Execution::default())
        .into_iter()
        .map(|p| {
            let (_, summary) = p.result?;
            Ok((p.value, summary[0].report))
        })
        .collect()
}
