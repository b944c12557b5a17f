//! Episodic-memory intrinsic rewards for RL fine-tuning.
//!
//! Two bounded memories hold past responses that succeeded or failed on a
//! query. New responses are scored against the nearest stored queries: an
//! exploitation term pulls them toward the centroid of past successes and an
//! exploration term pushes them away from past failures. Both terms are
//! min-max normalized over a sliding window and summed into `r_mem`, which is
//! added to the outcome reward before group-relative advantages are taken.
//!
//! The [`sim`] module contains a small GRPO simulator used to check that the
//! mechanism does what it claims on a sparse-reward toy task.

pub mod encoder;
pub mod error;
pub mod memory;
pub mod rewards;
pub mod sim;
pub mod snapshot;
pub mod verifier;

pub use encoder::{Embedding, EncoderKind, EncoderSpec, HashEncoder, TextEncoder};
pub use error::{Error, Result};
pub use memory::{EpisodicMemory, MemoryConfig, QueryEntry, ResponseRecord, Route, WriteReport};
pub use rewards::{
    EngineConfig, MemoryPair, NormWindows, ResponseInput, RewardConfig, RewardEngine, ScoreBatch, ScoredResponse, SlidingWindow,
    SlidingWindowSummary,
};
