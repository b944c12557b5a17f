//! Multi-seed training runs, summaries and the K sweep.

use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::MemoryConfig;
use crate::rewards::{EngineConfig, RewardConfig, RewardEngine};
use crate::sim::grpo::{grpo_step, GrpoConfig};
use crate::sim::metrics::{detect_collapse, percentile, semantic_diversity, CollapseEvent, CollapseThresholds, StepMetrics};
use crate::sim::policy::SimPolicy;
use crate::sim::task::{generate_task, SyntheticTask, TaskSpec};

/// Responses sampled per query for the end-of-run diversity score.
pub const DIVERSITY_SAMPLES: usize = 3;

const EVAL_STREAM: u64 = 0x5eed_d1ce_0000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub task: TaskSpec,
    pub memory: MemoryConfig,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub temperature: f64,
    /// Standard deviation of the initial weights, i.e. of the initial
    /// scores. Zero starts from the uniform policy.
    pub init_scale: f64,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub collapse: CollapseThresholds,
}

impl Default for SimConfig {
    fn default() -> Self {
        let task = TaskSpec::default();
        Self {
            memory: MemoryConfig {
                capacity: task.queries,
                ..MemoryConfig::default()
            },
            collapse: CollapseThresholds {
                max_length: task.max_length as f64,
                ..CollapseThresholds::default()
            },
            task,
            reward: RewardConfig::default(),
            grpo: GrpoConfig::default(),
            temperature: 1.0,
            init_scale: 3.0,
            steps: 500,
            seeds: (0..5).collect(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.memory.validate()?;
        self.reward.validate()?;
        if self.grpo.group_size < 2 {
            return Err(Error::InvalidConfig("group size must be >= 2".into()));
        }
        if !(self.grpo.learning_rate.is_finite() && self.grpo.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning rate must be finite and >= 0".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidConfig("init scale must be finite and >= 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        Ok(())
    }

    fn engine_config(&self) -> EngineConfig {
        EngineConfig::new(self.task.dimension, self.memory, self.reward)
    }
}

/// Expected accuracy `Σ_{a correct} π(a | q)`, averaged over queries.
pub fn success_rate(policy: &SimPolicy, task: &SyntheticTask) -> f64 {
    let total: f64 = task
        .queries
        .iter()
        .map(|q| {
            let probs = policy.probabilities(&q.embedding, q.candidate_matrix());
            q.correct_indices().map(|i| probs[i]).sum::<f64>()
        })
        .sum();
    (total / task.len() as f64).clamp(0.0, 1.0)
}

/// Mean over queries of the diversity of [`DIVERSITY_SAMPLES`] sampled
/// responses. Uses its own RNG so it never perturbs training.
pub fn sampled_diversity(policy: &SimPolicy, task: &SyntheticTask, seed: u64) -> Result<f64> {
    use rand::distr::weighted::WeightedIndex;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_STREAM);
    let mut total = 0.0;
    for q in &task.queries {
        let probs = policy.probabilities(&q.embedding, q.candidate_matrix());
        let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidConfig(format!("policy distribution: {e}")))?;
        let picks: Vec<&[f64]> = (0..DIVERSITY_SAMPLES)
            .map(|_| q.candidates[dist.sample(&mut rng)].embedding.as_slice())
            .collect();
        total += semantic_diversity(&picks)?;
    }
    Ok(total / task.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: usize,
    pub initial_success: f64,
    pub final_success: f64,
    pub final_diversity: f64,
    pub degenerate_groups: usize,
    pub collapse_events: Vec<CollapseEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub series: Vec<StepMetrics>,
    pub summary: RunSummary,
}

fn group_mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// One full training run. The task is shared across seeds; the seed drives
/// query order, sampling and the final evaluation.
pub fn run_seed(config: &SimConfig, task: &SyntheticTask, seed: u64) -> Result<SeedRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = SimPolicy::new(task.dimension(), config.temperature)?;
    if config.init_scale > 0.0 {
        let normal = Normal::new(0.0, config.init_scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        policy.weights_mut().iter_mut().for_each(|w| *w = normal.sample(&mut rng));
    }
    let mut engine = RewardEngine::new(config.engine_config())?;
    let initial_success = success_rate(&policy, task);

    let mut order: Vec<usize> = Vec::new();
    let mut series = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        if order.is_empty() {
            order = (0..task.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let query = order.pop().expect("refilled above");
        let g = grpo_step(&mut policy, task, query, &mut engine, &config.grpo, &mut rng)?;
        let q = &task.queries[query];
        let n = g.picks.len();
        let picked = || g.picks.iter().map(|&p| &q.candidates[p]);
        let lengths: Vec<f64> = picked().map(|c| c.token_length as f64).collect();
        let embeddings: Vec<&[f64]> = picked().map(|c| c.embedding.as_slice()).collect();
        series.push(StepMetrics {
            step: step as u64,
            seed,
            query,
            success_rate: success_rate(&policy, task),
            correctness: group_mean(g.outcome.iter().copied(), n),
            mean_total_reward: group_mean(g.total.iter().copied(), n),
            mean_r_mem: group_mean(g.scored.iter().map(|s| s.r_mem), n),
            mean_norm_exploit: group_mean(g.scored.iter().map(|s| s.norm_exploit.unwrap_or(0.0)), n),
            mean_norm_explore: group_mean(g.scored.iter().map(|s| s.norm_explore.unwrap_or(0.0)), n),
            mean_length: group_mean(lengths.iter().copied(), n),
            p95_length: percentile(&lengths, 95.0),
            diversity: semantic_diversity(&embeddings)?,
            xml_reward: group_mean(picked().map(|c| c.xml_reward), n),
            integer_reward: group_mean(picked().map(|c| c.integer_reward), n),
            degenerate: g.degenerate,
        });
    }

    let collapse_events = if series.len() >= config.collapse.window.max(1) {
        detect_collapse(&series, &config.collapse)?
    } else {
        Vec::new()
    };
    let summary = RunSummary {
        seed,
        steps: config.steps,
        initial_success,
        final_success: series.last().map_or(initial_success, |m| m.success_rate),
        final_diversity: sampled_diversity(&policy, task, seed)?,
        degenerate_groups: series.iter().filter(|m| m.degenerate).count(),
        collapse_events,
    };
    Ok(SeedRun { series, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub initial_success: MeanStd,
    pub final_success: MeanStd,
    pub final_diversity: MeanStd,
    pub collapse_events: usize,
}

impl Aggregate {
    pub fn of(runs: &[SeedRun]) -> Self {
        let pick = |f: fn(&RunSummary) -> f64| MeanStd::of(&runs.iter().map(|r| f(&r.summary)).collect::<Vec<_>>());
        Self {
            initial_success: pick(|s| s.initial_success),
            final_success: pick(|s| s.final_success),
            final_diversity: pick(|s| s.final_diversity),
            collapse_events: runs.iter().map(|r| r.summary.collapse_events.len()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: SimConfig,
    /// In the order of `config.seeds`.
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
}

impl ExperimentResult {
    /// Per-step mean of a metric across seeds.
    pub fn seed_mean(&self, metric: impl Fn(&StepMetrics) -> f64) -> Vec<f64> {
        let steps = self.runs.iter().map(|r| r.series.len()).min().unwrap_or(0);
        (0..steps)
            .map(|i| self.runs.iter().map(|r| metric(&r.series[i])).sum::<f64>() / self.runs.len() as f64)
            .collect()
    }
}

/// Runs every seed on its own thread with isolated state.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let task = generate_task(&config.task)?;
    let runs: Vec<Result<SeedRun>> = thread::scope(|s| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let task = &task;
                s.spawn(move || run_seed(config, task, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidConfig("seed worker panicked".into()))))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        aggregate: Aggregate::of(&runs),
        config: config.clone(),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub neighbors: usize,
    pub aggregate: Aggregate,
}

/// Repeats the experiment for each neighbour count `K`.
pub fn k_sweep(config: &SimConfig, ks: &[usize]) -> Result<Vec<SweepRow>> {
    ks.iter()
        .map(|&k| {
            let mut cfg = config.clone();
            cfg.memory.neighbors = k;
            let result = run_experiment(&cfg)?;
            Ok(SweepRow {
                neighbors: k,
                aggregate: result.aggregate,
            })
        })
        .collect()
}

/// Plain-text table with one row per K.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("K\tinitial_success\tfinal_success\tfinal_diversity\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.neighbors, r.aggregate.initial_success, r.aggregate.final_success, r.aggregate.final_diversity
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            task: TaskSpec {
                dimension: 8,
                queries: 4,
                candidates: 20,
                sparsity: 0.1,
                ..Default::default()
            },
            memory: MemoryConfig {
                capacity: 4,
                ..Default::default()
            },
            steps: 30,
            seeds: vec![1, 2],
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_gives_empty_series() {
        let cfg = SimConfig { steps: 0, ..small() };
        let result = run_experiment(&cfg).unwrap();
        for run in &result.runs {
            assert!(run.series.is_empty());
            assert_eq!(run.summary.final_success, run.summary.initial_success);
        }
    }

    #[test]
    fn runs_are_deterministic_per_seed() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.runs[0].series, a.runs[1].series);
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn empty_seed_list_rejected() {
        let cfg = SimConfig { seeds: vec![], ..small() };
        assert!(run_experiment(&cfg).is_err());
    }
}
