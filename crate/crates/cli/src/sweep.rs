use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use pkco::analysis::{summarize, SweepParam};
use pkco::config::check_gains;
use pkco::exec::{map_ordered, Execution};
use pkco::netsim::run;
use pkco::output::{RunManifest, SweepOverride};

use crate::common::{create_dir, manifest_json, prepare, write_run, write_text, CliError, ScenarioSource};

pub const AGGREGATE_FILE: &str = "sweep.csv";
pub const AGGREGATE_MANIFEST_FILE: &str = "sweep_manifest.json";

const AGGREGATE_COLUMNS: [&str; 7] = [
    "value",
    "node_id",
    "asymptote_theory_s",
    "steady_mean_s",
    "settling_cycle",
    "converged",
    "error",
];

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    /// Parameter to vary: alpha, kappa_mean, eta_mean, t_d or seed.
    #[arg(long)]
    pub param: SweepParam,
    /// Comma-separated values; `start:stop:step` expands to an inclusive range.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cycles: Option<u64>,
    /// Output directory; each value gets its own sub-directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub strict: bool,
    /// Run sub-runs one after another on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub quiet: bool,
}

/// Rounds away binary noise from range arithmetic (0.1 + 2 * 0.2 and so on).
fn tidy(x: f64) -> f64 {
    format!("{x:.12e}").parse().expect("formatted float parses")
}

pub fn parse_values(spec: &str) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{s}` is not a number"))
        };
        match fields.as_slice() {
            [v] => values.push(num(v)?),
            [start, stop, step] => {
                let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
                if step <= 0.0 || stop < start {
                    return Err(format!("range `{part}` needs start <= stop and step > 0"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as u64;
                if n > 1_000_000 {
                    return Err(format!("range `{part}` has too many points"));
                }
                values.extend((0..=n).map(|i| tidy(start + i as f64 * step)));
            }
            _ => return Err(format!("`{part}` is neither a value nor start:stop:step")),
        }
    }
    if values.is_empty() {
        return Err("no values given".to_string());
    }
    Ok(values)
}

struct Row {
    value: f64,
    node_id: Option<u32>,
    asymptote: Option<f64>,
    steady_mean: Option<f64>,
    settling_cycle: Option<u64>,
    converged: Option<bool>,
    error: String,
}

fn cell<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_aggregate(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::io(path.display(), e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(AGGREGATE_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            cell(r.node_id),
            cell(r.asymptote),
            cell(r.steady_mean),
            cell(r.settling_cycle),
            cell(r.converged),
            r.error.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let values = parse_values(&args.values).map_err(|m| CliError::Config(format!("--values: {m}")))?;
    if args.param == SweepParam::Seed {
        if let Some(bad) = values.iter().find(|v| v.fract() != 0.0 || **v < 0.0) {
            return Err(CliError::Config(format!(
                "--values: seed {bad} is not an unsigned integer"
            )));
        }
    }
    let mut loaded = args.source.load()?;
    prepare(&mut loaded, args.seed, args.cycles, false)?;
    create_dir(&args.out)?;

    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let indexed: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    let started = Instant::now();
    let results = map_ordered(&indexed, exec, |&(i, value)| -> Result<Vec<Row>, String> {
        let mut scenario = loaded.scenario.clone();
        args.param.apply(&mut scenario, value);
        scenario.validate().map_err(|e| e.to_string())?;
        check_gains(&scenario, args.strict).map_err(|e| e.to_string())?;
        let sub_started = Instant::now();
        let output = run(&scenario).map_err(|e| e.to_string())?;
        let mut manifest = RunManifest::new(loaded.text.clone(), Some(loaded.origin.clone()), &scenario);
        manifest.sweep = Some(SweepOverride {
            param: args.param.name().to_string(),
            value,
        });
        manifest.runtime_s = sub_started.elapsed().as_secs_f64();
        let dir = args.out.join(format!("{}_{i:03}", args.param.name()));
        write_run(&dir, &scenario, &output, manifest).map_err(|e| e.to_string())?;
        Ok(summarize(&scenario, &output)
            .into_iter()
            .map(|s| Row {
                value,
                node_id: Some(s.node_id),
                asymptote: Some(s.theory.asymptote),
                steady_mean: Some(s.report.steady_mean),
                settling_cycle: s.report.settling_cycle,
                converged: Some(s.report.converged),
                error: String::new(),
            })
            .collect())
    });

    let mut rows = Vec::new();
    let mut failures = 0;
    for (&value, result) in values.iter().zip(results) {
        match result {
            Ok(r) => rows.extend(r),
            Err(error) => {
                failures += 1;
                if !args.quiet {
                    eprintln!("error: {}={value}: {error}", args.param.name());
                }
                rows.push(Row {
                    value,
                    node_id: None,
                    asymptote: None,
                    steady_mean: None,
                    settling_cycle: None,
                    converged: None,
                    error,
                });
            }
        }
    }
    write_aggregate(&args.out.join(AGGREGATE_FILE), &rows)?;

    let mut base = RunManifest::new(loaded.text.clone(), Some(loaded.origin.clone()), &loaded.scenario);
    base.runtime_s = started.elapsed().as_secs_f64();
    base.outputs = vec![args.out.join(AGGREGATE_FILE).display().to_string()];
    let sweep_manifest = format!(
        "{{\n  \"param\": {},\n  \"values\": {},\n  \"base\": {}\n}}\n",
        serde_json::to_string(args.param.name()).expect("string"),
        serde_json::to_string(&values).expect("floats"),
        manifest_json(&base).replace('\n', "\n  ")
    );
    write_text(&args.out.join(AGGREGATE_MANIFEST_FILE), &sweep_manifest)?;

    if !args.quiet {
        println!(
            "{} sub-runs over {} ({} failed), aggregate in {}",
            values.len(),
            args.param.name(),
            failures,
            args.out.join(AGGREGATE_FILE).display()
        );
    }
    if failures > 0 {
        return Err(CliError::Simulation(format!(
            "{failures} of {} sub-runs failed",
            values.len()
        )));
    }
    Ok(())
}
