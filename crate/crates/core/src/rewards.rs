//! Memory-based intrinsic rewards.
//!
//! For a response embedding `a` to query `q`:
//!
//! * exploit: `−‖a − c‖`, with `c` the centroid of the success responses
//!   stored under the `K` nearest queries;
//! * explore: `1 − max_j cos(a, a_j)` over the failure responses stored
//!   under the `K` nearest queries, withheld during warm-up;
//! * each raw value is pushed into a global sliding window of its kind and
//!   min-max scaled against it: `(x − min) / (max − min + ε)`;
//! * `r_mem = β_s·exploit_norm + β_e·explore_norm`.
//!
//! A component that cannot be computed (empty retrieval, warm-up) is absent:
//! it is not pushed into its window and contributes 0 to `r_mem`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::encoder::{centroid, check_dim, cosine_similarity, euclidean_distance, Embedding};
use crate::error::{Error, Result};
use crate::memory::{route_and_write, EpisodicMemory, MemoryConfig, ResponseRecord, WriteReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub beta_s: f64,
    pub beta_e: f64,
    pub window: usize,
    pub epsilon: f64,
    pub warmup_steps: u64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta_s: 1.0,
            beta_e: 1.0,
            window: 100,
            epsilon: 1e-8,
            warmup_steps: 50,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig("epsilon must be a positive finite number".into()));
        }
        if !(self.beta_s >= 0.0 && self.beta_e >= 0.0) || !self.beta_s.is_finite() || !self.beta_e.is_finite() {
            return Err(Error::InvalidConfig("beta weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Exploit,
    Explore,
}

/// The last `capacity` raw rewards of one kind, most recent last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindow {
    kind: WindowKind,
    capacity: usize,
    values: VecDeque<f64>,
}

/// Range and fill level of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindowSummary {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub len: usize,
    pub capacity: usize,
}

/// Largest `f64` strictly below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

impl SlidingWindow {
    pub fn new(kind: WindowKind, capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be >= 1");
        Self {
            kind,
            capacity,
            values: VecDeque::with_capacity(capacity),
        }
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = &f64> {
        self.values.iter()
    }

    pub fn push(&mut self, raw: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(raw);
    }

    pub fn min(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }

    pub fn summary(&self) -> SlidingWindowSummary {
        SlidingWindowSummary {
            min: self.min(),
            max: self.max(),
            len: self.len(),
            capacity: self.capacity,
        }
    }

    /// Pushes `raw`, then scales it against the window that now includes it.
    pub fn normalize(&mut self, raw: f64, epsilon: f64) -> f64 {
        self.push(raw);
        let (lo, hi) = (self.min().unwrap_or(raw), self.max().unwrap_or(raw));
        let x = (raw - lo) / (hi - lo + epsilon);
        // mathematically < 1; rounding can only reach 1 for ranges ~1e8·ε
        x.min(BELOW_ONE)
    }
}

/// `−‖a − centroid(retrieved)‖`, or `None` when nothing was retrieved.
pub fn exploit_raw(response: &[f64], retrieved: &[&ResponseRecord]) -> Result<Option<f64>> {
    if retrieved.is_empty() {
        return Ok(None);
    }
    let c = centroid(retrieved.iter().map(|r| r.embedding.as_slice()))?;
    Ok(Some(-euclidean_distance(response, &c)?))
}

/// `1 − max cos(a, a_j)` over retrieved failures; `None` during warm-up or
/// when nothing was retrieved.
pub fn explore_raw(
    response: &[f64],
    retrieved: &[&ResponseRecord],
    current_step: u64,
    warmup_steps: u64,
) -> Result<Option<f64>> {
    if current_step < warmup_steps || retrieved.is_empty() {
        return Ok(None);
    }
    let mut best = f64::NEG_INFINITY;
    for r in retrieved {
        best = best.max(cosine_similarity(response, &r.embedding)?);
    }
    Ok(Some(1.0 - best))
}

pub fn combine(norm_exploit: Option<f64>, norm_explore: Option<f64>, config: &RewardConfig) -> f64 {
    config.beta_s * norm_exploit.unwrap_or(0.0) + config.beta_e * norm_explore.unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub response: ResponseRecord,
    pub raw_exploit: Option<f64>,
    pub raw_explore: Option<f64>,
    pub norm_exploit: Option<f64>,
    pub norm_explore: Option<f64>,
    pub r_mem: f64,
    pub outcome_reward: f64,
    pub total_reward: f64,
}

impl ScoredResponse {
    /// Attaches the verifier's outcome reward; `total_reward` follows.
    pub fn with_outcome(mut self, outcome_reward: f64) -> Self {
        self.set_outcome(outcome_reward);
        self
    }

    pub fn set_outcome(&mut self, outcome_reward: f64) {
        self.outcome_reward = outcome_reward;
        self.response.outcome_reward = outcome_reward;
        self.total_reward = outcome_reward + self.r_mem;
    }
}

/// A response to score: its embedding and, optionally, its text.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseInput {
    pub embedding: Embedding,
    pub text: Option<String>,
}

impl From<Embedding> for ResponseInput {
    fn from(embedding: Embedding) -> Self {
        Self { embedding, text: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub dimension: usize,
    pub success: MemoryConfig,
    pub failure: MemoryConfig,
    pub reward: RewardConfig,
    #[serde(default = "default_identity_tolerance")]
    pub identity_tolerance: f64,
}

fn default_identity_tolerance() -> f64 {
    crate::memory::DEFAULT_IDENTITY_TOLERANCE
}

impl EngineConfig {
    /// Same memory settings for both memories.
    pub fn new(dimension: usize, memory: MemoryConfig, reward: RewardConfig) -> Self {
        Self {
            dimension,
            success: memory,
            failure: memory,
            reward,
            identity_tolerance: default_identity_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be > 0".into()));
        }
        self.success.validate()?;
        self.failure.validate()?;
        self.reward.validate()
    }
}

/// Raw components for one batch, computed from a read-only view of the
/// memories.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBatch {
    pub components: Vec<(Option<f64>, Option<f64>)>,
    pub success_hits: usize,
    pub failure_hits: usize,
    pub step: u64,
}

/// Success and failure memories sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryPair {
    pub success: EpisodicMemory,
    pub failure: EpisodicMemory,
}

impl MemoryPair {
    pub fn new(config: &EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            success: EpisodicMemory::new(config.success, config.dimension)?
                .with_identity_tolerance(config.identity_tolerance),
            failure: EpisodicMemory::new(config.failure, config.dimension)?
                .with_identity_tolerance(config.identity_tolerance),
        })
    }

    pub fn dimension(&self) -> usize {
        self.success.dimension()
    }

    /// One retrieval per memory, shared by every response in the batch.
    pub fn raw_batch(
        &self,
        query: &[f64],
        responses: &[&[f64]],
        step: u64,
        reward: &RewardConfig,
    ) -> Result<RawBatch> {
        let d = self.dimension();
        check_dim(d, query.len())?;
        for r in responses {
            check_dim(d, r.len())?;
        }
        let good = self.success.retrieve(query, self.success.config().neighbors)?;
        let bad = self.failure.retrieve(query, self.failure.config().neighbors)?;
        let components = responses
            .iter()
            .map(|a| {
                Ok((
                    exploit_raw(a, &good)?,
                    explore_raw(a, &bad, step, reward.warmup_steps)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RawBatch {
            components,
            success_hits: good.len(),
            failure_hits: bad.len(),
            step,
        })
    }

    /// Unit-normalizes the inputs and computes their raw components. The
    /// read-only half of scoring; pair with [`NormWindows::apply`] and
    /// [`assemble_scores`].
    pub fn prepare_batch(
        &self,
        query: &[f64],
        responses: &[ResponseInput],
        step: u64,
        reward: &RewardConfig,
    ) -> Result<(Vec<Embedding>, RawBatch)> {
        let units = responses
            .iter()
            .map(|r| {
                check_dim(self.dimension(), r.embedding.dim())?;
                r.embedding.to_unit()
            })
            .collect::<Result<Vec<_>>>()?;
        let slices: Vec<&[f64]> = units.iter().map(|e| e.as_slice()).collect();
        let raw = self.raw_batch(query, &slices, step, reward)?;
        Ok((units, raw))
    }

    pub fn commit(
        &mut self,
        query: &[f64],
        query_text: Option<&str>,
        records: Vec<ResponseRecord>,
    ) -> Result<(WriteReport, WriteReport)> {
        route_and_write(&mut self.success, &mut self.failure, query, query_text, records)
    }
}

/// The two global normalization windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormWindows {
    pub exploit: SlidingWindow,
    pub explore: SlidingWindow,
    /// Bumped once per scored batch; lets clients tell window effects apart.
    pub version: u64,
}

impl NormWindows {
    pub fn new(window: usize) -> Self {
        Self {
            exploit: SlidingWindow::new(WindowKind::Exploit, window),
            explore: SlidingWindow::new(WindowKind::Explore, window),
            version: 0,
        }
    }

    /// Pushes every present raw value in batch order and returns
    /// `(norm_exploit, norm_explore, r_mem)` per response.
    pub fn apply(&mut self, raw: &RawBatch, config: &RewardConfig) -> Vec<(Option<f64>, Option<f64>, f64)> {
        self.version += 1;
        raw.components
            .iter()
            .map(|&(ex, xp)| {
                let ne = ex.map(|x| self.exploit.normalize(x, config.epsilon));
                let nx = xp.map(|x| self.explore.normalize(x, config.epsilon));
                (ne, nx, combine(ne, nx, config))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    pub scores: Vec<ScoredResponse>,
    pub success_hits: usize,
    pub failure_hits: usize,
    pub step: u64,
    pub window_version: u64,
}

/// Both memories, both windows and the training-step counter.
///
/// Scoring only touches the windows; memories change only on commit, which
/// also advances the step. Two identical `score_batch` calls with no commit
/// in between therefore produce the same raw components and differ only
/// through what the first call pushed into the windows.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardEngine {
    config: EngineConfig,
    memories: MemoryPair,
    windows: NormWindows,
    step: u64,
}

impl RewardEngine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        Ok(Self {
            memories: MemoryPair::new(&config)?,
            windows: NormWindows::new(config.reward.window),
            config,
            step: 0,
        })
    }

    pub fn from_parts(config: EngineConfig, memories: MemoryPair, windows: NormWindows, step: u64) -> Result<Self> {
        config.validate()?;
        check_dim(config.dimension, memories.dimension())?;
        Ok(Self {
            config,
            memories,
            windows,
            step,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn memories(&self) -> &MemoryPair {
        &self.memories
    }

    pub fn windows(&self) -> &NormWindows {
        &self.windows
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn score_batch(&mut self, query: &[f64], responses: &[ResponseInput]) -> Result<ScoreBatch> {
        let step = self.step;
        self.score_batch_at(query, responses, step)
    }

    /// Scores at an explicit step (only warm-up gating reads it).
    pub fn score_batch_at(&mut self, query: &[f64], responses: &[ResponseInput], step: u64) -> Result<ScoreBatch> {
        let (units, raw) = self.memories.prepare_batch(query, responses, step, &self.config.reward)?;
        let normed = self.windows.apply(&raw, &self.config.reward);
        let scores = assemble_scores(responses, units, &raw, normed, step);
        Ok(ScoreBatch {
            scores,
            success_hits: raw.success_hits,
            failure_hits: raw.failure_hits,
            step,
            window_version: self.windows.version,
        })
    }

    /// Writes scored responses (with their outcome rewards) into memory and
    /// advances the step. An empty set changes nothing.
    pub fn commit_outcomes(
        &mut self,
        query: &[f64],
        query_text: Option<&str>,
        scored: &[ScoredResponse],
    ) -> Result<(WriteReport, WriteReport)> {
        let records = scored
            .iter()
            .map(|s| {
                let mut r = s.response.clone();
                r.outcome_reward = s.outcome_reward;
                r
            })
            .collect();
        self.commit_records(query, query_text, records)
    }

    /// Like [`commit_outcomes`](Self::commit_outcomes) for responses that
    /// were never scored. Each record's step is set to the engine step.
    pub fn commit_records(
        &mut self,
        query: &[f64],
        query_text: Option<&str>,
        mut records: Vec<ResponseRecord>,
    ) -> Result<(WriteReport, WriteReport)> {
        if records.is_empty() {
            check_dim(self.config.dimension, query.len())?;
            return Ok(Default::default());
        }
        for r in &mut records {
            r.step = self.step;
        }
        let reports = self.memories.commit(query, query_text, records)?;
        self.step += 1;
        Ok(reports)
    }
}

/// Builds the per-response results from the inputs, their unit vectors,
/// the raw batch and the normalized components.
pub fn assemble_scores(
    inputs: &[ResponseInput],
    units: Vec<Embedding>,
    raw: &RawBatch,
    normed: Vec<(Option<f64>, Option<f64>, f64)>,
    step: u64,
) -> Vec<ScoredResponse> {
    inputs
        .iter()
        .zip(units)
        .zip(raw.components.iter().zip(normed))
        .map(|((input, unit), (&(re, rx), (ne, nx, r_mem)))| ScoredResponse {
            response: ResponseRecord {
                embedding: unit,
                text: input.text.clone(),
                outcome_reward: 0.0,
                step,
            },
            raw_exploit: re,
            raw_explore: rx,
            norm_exploit: ne,
            norm_explore: nx,
            r_mem,
            outcome_reward: 0.0,
            total_reward: r_mem,
        })
        .collect()
}
