use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use log::info;
use memreward::sim::{self, ExperimentResult, SimConfig, StepMetrics, SweepRow, TaskSpec};
use memreward::Error;
use serde::Serialize;

use super::usage;
use crate::args::{OutputFormat, SimulateArgs, Switch};

/// Per-step mean across seeds, one column per metric.
const AGGREGATE_METRICS: &[&str] = &[
    "success_rate",
    "correctness",
    "mean_total_reward",
    "mean_r_mem",
    "mean_norm_exploit",
    "mean_norm_explore",
    "mean_length",
    "p95_length",
    "diversity",
];

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a SimConfig,
    neighbors: Vec<usize>,
    runs: Vec<&'a ExperimentResult>,
}

fn parse_ks(raw: &str) -> Result<Vec<usize>> {
    let ks = raw
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| usage(format!("--K: `{s}` is not a non-negative integer"))))
        .collect::<Result<Vec<_>>>()?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(usage("--K values must be >= 1"));
    }
    Ok(ks)
}

fn build_config(args: &SimulateArgs) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    if let Some(path) = &args.task_spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading task spec {}", path.display()))?;
        cfg.task = serde_json::from_str::<TaskSpec>(&text)
            .map_err(|e| usage(format!("task spec {}: {e}", path.display())))?;
    }
    cfg.steps = args.steps;
    cfg.seeds = (args.seed_start..args.seed_start + args.seeds as u64).collect();
    cfg.grpo.use_memory = args.memory == Switch::On;
    cfg.grpo.group_size = args.g;
    cfg.reward.warmup_steps = args.warmup;
    cfg.reward.beta_s = args.beta_s;
    cfg.reward.beta_e = args.beta_e;
    cfg.reward.window = args.window;
    cfg.memory.capacity = args.capacity.unwrap_or(cfg.task.queries);
    cfg.memory.responses_per_query = args.responses_per_query;
    cfg.collapse.max_length = cfg.task.max_length as f64;
    if let Some(lr) = args.lr {
        cfg.grpo.learning_rate = lr;
    }
    if let Some(t) = args.temperature {
        cfg.temperature = t;
    }
    if let Some(s) = args.init_scale {
        cfg.init_scale = s;
    }
    Ok(cfg)
}

fn invalid(e: Error) -> anyhow::Error {
    match e {
        Error::InvalidConfig(_) | Error::InvalidSpec(_) => usage(e.to_string()),
        other => other.into(),
    }
}

fn write_series(dir: &Path, seed: u64, series: &[StepMetrics], format: OutputFormat) -> Result<()> {
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let path = dir.join(format!("metrics_seed{seed}.csv"));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        sim::metrics::write_csv(BufWriter::new(file), series)?;
    }
    if matches!(format, OutputFormat::Jsonl | OutputFormat::Both) {
        let path = dir.join(format!("metrics_seed{seed}.jsonl"));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        sim::metrics::write_jsonl(BufWriter::new(file), series)?;
    }
    Ok(())
}

fn write_aggregate(dir: &Path, result: &ExperimentResult) -> Result<()> {
    let path = dir.join("aggregate.csv");
    let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(out, "step,{}", AGGREGATE_METRICS.join(","))?;
    let columns: Vec<Vec<f64>> = AGGREGATE_METRICS
        .iter()
        .map(|m| result.seed_mean(|s| s.value(m).unwrap_or(f64::NAN)))
        .collect();
    for i in 0..columns.first().map_or(0, Vec::len) {
        let step = result.runs[0].series[i].step;
        let row: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        writeln!(out, "{step},{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn table(rows: &[SweepRow], use_memory: bool) -> String {
    let mut out = format!(
        "{:<4} {:<6} {:<18} {:<18} {:<18} {}\n",
        "K", "memory", "initial_success", "final_success", "final_diversity", "collapse_events"
    );
    for r in rows {
        let a = &r.aggregate;
        out.push_str(&format!(
            "{:<4} {:<6} {:<18} {:<18} {:<18} {}\n",
            r.neighbors,
            if use_memory { "on" } else { "off" },
            a.initial_success.to_string(),
            a.final_success.to_string(),
            a.final_diversity.to_string(),
            a.collapse_events
        ));
    }
    out
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let ks = parse_ks(&args.k)?;
    let mut cfg = build_config(&args)?;
    cfg.memory.neighbors = ks[0];
    cfg.validate().map_err(invalid)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut results = Vec::with_capacity(ks.len());
    for &k in &ks {
        cfg.memory.neighbors = k;
        info!("simulating K={k} over {} seeds, {} steps", cfg.seeds.len(), cfg.steps);
        let result = sim::run_experiment(&cfg).map_err(invalid)?;
        let dir = if ks.len() > 1 { args.out.join(format!("K{k}")) } else { args.out.clone() };
        if cfg.steps > 0 {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for run in &result.runs {
                write_series(&dir, run.summary.seed, &run.series, args.format)?;
            }
            write_aggregate(&dir, &result)?;
        }
        results.push(result);
    }

    let summary = Summary {
        config: &results[0].config,
        neighbors: ks.clone(),
        runs: results.iter().collect(),
    };
    let path = args.out.join("summary.json");
    fs::write(&path, serde_json::to_vec_pretty(&summary)?).with_context(|| format!("writing {}", path.display()))?;

    let rows: Vec<SweepRow> = ks
        .iter()
        .zip(&results)
        .map(|(&k, r)| SweepRow { neighbors: k, aggregate: r.aggregate.clone() })
        .collect();
    print!("{}", table(&rows, cfg.grpo.use_memory));
    Ok(())
}
