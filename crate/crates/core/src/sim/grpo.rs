//! One group-relative policy-gradient step.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewards::{ResponseInput, RewardEngine, ScoredResponse};
use crate::sim::policy::SimPolicy;
use crate::sim::task::SyntheticTask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub learning_rate: f64,
    pub adv_epsilon: f64,
    /// Add `r_mem` to the outcome reward. Memories are written either way.
    pub use_memory: bool,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 16,
            learning_rate: 0.12,
            adv_epsilon: 1e-8,
            use_memory: true,
        }
    }
}

/// `(r_i − mean) / (std + ε)` with the population std. The second value is
/// true when every reward is identical; advantages are then all zero.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> (Vec<f64>, bool) {
    let n = rewards.len() as f64;
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if rewards.is_empty() || lo == hi {
        return (vec![0.0; rewards.len()], true);
    }
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    (rewards.iter().map(|r| (r - mean) / (std + epsilon)).collect(), false)
}

/// A sampled group, as seen before the policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub query: usize,
    pub picks: Vec<usize>,
    pub scored: Vec<ScoredResponse>,
    pub outcome: Vec<f64>,
    pub total: Vec<f64>,
    pub advantages: Vec<f64>,
    /// All totals equal: no update was applied.
    pub degenerate: bool,
}

/// Samples `G` candidates, scores them (outcome + optional `r_mem`), takes
/// one gradient-ascent step on `Σ adv_i log π(a_i | q)` and commits the
/// group to memory.
pub fn grpo_step<R: Rng>(
    policy: &mut SimPolicy,
    task: &SyntheticTask,
    query: usize,
    engine: &mut RewardEngine,
    config: &GrpoConfig,
    rng: &mut R,
) -> Result<GroupSample> {
    if config.group_size < 2 {
        return Err(Error::InvalidConfig("group size must be >= 2".into()));
    }
    let q = task
        .queries
        .get(query)
        .ok_or_else(|| Error::InvalidConfig(format!("query index {query} out of range")))?;
    let matrix = q.candidate_matrix();
    let probs = policy.probabilities(&q.embedding, matrix);
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidConfig(format!("policy distribution: {e}")))?;
    let picks: Vec<usize> = (0..config.group_size).map(|_| dist.sample(rng)).collect();

    let inputs: Vec<ResponseInput> = picks
        .iter()
        .map(|&p| ResponseInput {
            embedding: q.candidates[p].embedding.clone(),
            text: Some(q.candidates[p].text.clone()),
        })
        .collect();
    let batch = engine.score_batch(&q.embedding, &inputs)?;
    let outcome: Vec<f64> = picks.iter().map(|&p| q.candidates[p].outcome).collect();
    let scored: Vec<ScoredResponse> = batch
        .scores
        .into_iter()
        .zip(&outcome)
        .map(|(s, &r)| s.with_outcome(r))
        .collect();
    let total: Vec<f64> = scored
        .iter()
        .map(|s| if config.use_memory { s.total_reward } else { s.outcome_reward })
        .collect();

    let (advantages, degenerate) = group_advantages(&total, config.adv_epsilon);
    if !degenerate {
        let grad = policy.surrogate_gradient(&q.embedding, matrix, &picks, &advantages);
        policy.ascend(&grad, config.learning_rate);
    }
    engine.commit_outcomes(&q.embedding, Some(&q.text), &scored)?;

    Ok(GroupSample {
        query,
        picks,
        scored,
        outcome,
        total,
        advantages,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::MemoryConfig;
    use crate::rewards::{EngineConfig, RewardConfig};
    use crate::sim::task::{generate_task, TaskSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_winner_of_four() {
        let (adv, degenerate) = group_advantages(&[1.0, 0.0, 0.0, 0.0], 1e-8);
        assert!(!degenerate);
        // mean 1/4, population std √3/4
        let std = (3.0f64).sqrt() / 4.0;
        assert!((adv[0] - 0.75 / (std + 1e-8)).abs() < 1e-12);
        assert!((adv[0] - 1.7321).abs() < 1e-4);
        for a in &adv[1..] {
            assert!((a + 0.5774).abs() < 1e-4);
        }
    }

    #[test]
    fn equal_rewards_are_degenerate() {
        let (adv, degenerate) = group_advantages(&[0.3; 16], 1e-8);
        assert!(degenerate);
        assert!(adv.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn degenerate_group_leaves_policy_unchanged() {
        // every candidate correct -> all outcomes 1, memory off -> no update
        let spec = TaskSpec {
            sparsity: 1.0,
            queries: 2,
            candidates: 8,
            dimension: 8,
            ..Default::default()
        };
        let task = generate_task(&spec).unwrap();
        let mut policy = SimPolicy::new(8, 1.0).unwrap();
        let before = policy.clone();
        let mut engine = RewardEngine::new(EngineConfig::new(8, MemoryConfig::default(), RewardConfig::default())).unwrap();
        let cfg = GrpoConfig {
            use_memory: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grpo_step(&mut policy, &task, 0, &mut engine, &cfg, &mut rng).unwrap();
        assert!(g.degenerate);
        assert_eq!(policy, before);
        // the group was still committed
        assert_eq!(engine.step(), 1);
        assert_eq!(engine.memories().success.total_responses(), 16);
    }

    #[test]
    fn rejects_tiny_groups() {
        let task = generate_task(&TaskSpec::default()).unwrap();
        let mut policy = SimPolicy::new(32, 1.0).unwrap();
        let mut engine = RewardEngine::new(EngineConfig::new(32, MemoryConfig::default(), RewardConfig::default())).unwrap();
        let cfg = GrpoConfig {
            group_size: 1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(grpo_step(&mut policy, &task, 0, &mut engine, &cfg, &mut rng).is_err());
    }
}
