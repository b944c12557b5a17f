//! Shared engine state and its locking discipline.
//!
//! Memories and the step counter sit under one `RwLock`: scores read them
//! concurrently, commits and restores write. The normalization windows have
//! their own `Mutex` because every score pushes into them. Lock order is
//! always memories before windows. A separate async mutex marks the single
//! writer slot; commits and restores take it with `try_lock` and report a
//! conflict instead of queueing.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};

use memreward::snapshot::{self, EngineSnapshot};
use memreward::{MemoryPair, NormWindows, RewardEngine};

use crate::config::ServiceConfig;
use crate::encoding::Encoder;
use crate::error::ServiceError;

pub struct Stored {
    pub memories: MemoryPair,
    pub step: u64,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub encoder: Encoder,
    stored: RwLock<Stored>,
    windows: Mutex<NormWindows>,
    writer: tokio::sync::Mutex<()>,
    ready: AtomicBool,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<SharedState, ServiceError> {
        config.validate()?;
        let encoder = Encoder::from_spec(&config.encoder)?;
        let snap = if config.restore_on_start && snapshot::exists(&config.snapshot_path) {
            log::info!("restoring snapshot from {}", config.snapshot_path.display());
            snapshot::load(&config.snapshot_path, &config.engine)?
        } else {
            EngineSnapshot {
                memories: MemoryPair::new(&config.engine)?,
                windows: NormWindows::new(config.engine.reward.window),
                step: 0,
            }
        };
        Ok(Arc::new(Self {
            config,
            encoder,
            stored: RwLock::new(Stored {
                memories: snap.memories,
                step: snap.step,
            }),
            windows: Mutex::new(snap.windows),
            writer: tokio::sync::Mutex::new(()),
            ready: AtomicBool::new(true),
        }))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Stored> {
        self.stored.read().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Stored> {
        self.stored.write().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn windows(&self) -> MutexGuard<'_, NormWindows> {
        self.windows.lock().unwrap_or_else(PoisonError::into_inner)
    }

    /// The single writer slot, or `None` when a commit or restore holds it.
    pub fn try_writer(&self) -> Option<tokio::sync::MutexGuard<'_, ()>> {
        self.writer.try_lock().ok()
    }

    pub fn is_ready(&self) -> bool {
        self.ready.load(Ordering::Acquire)
    }

    pub fn set_ready(&self, ready: bool) {
        self.ready.store(ready, Ordering::Release);
    }

    /// Replaces memories, windows and step. Caller holds the writer slot.
    pub fn install(&self, snap: EngineSnapshot) {
        let mut stored = self.write();
        let mut windows = self.windows();
        stored.memories = snap.memories;
        stored.step = snap.step;
        *windows = snap.windows;
    }

    /// Writes a consistent snapshot of the current state.
    pub fn save(&self, dir: &Path) -> Result<(u64, u64), memreward::Error> {
        let stored = self.read();
        let windows = self.windows();
        let bytes = snapshot::save(dir, &stored.memories, &windows, stored.step)?;
        Ok((bytes, stored.step))
    }

    /// An in-process engine with a copy of the current state.
    pub fn to_engine(&self) -> RewardEngine {
        let stored = self.read();
        let windows = self.windows().clone();
        RewardEngine::from_parts(self.config.engine, stored.memories.clone(), windows, stored.step)
            .expect("service state always matches its engine config")
    }

    /// Hash of both memories' serialized contents.
    pub fn memory_digest(&self) -> String {
        let stored = self.read();
        let mut h = DefaultHasher::new();
        h.write(&stored.memories.success.snapshot());
        h.write(&stored.memories.failure.snapshot());
        format!("{:016x}", h.finish())
    }
}
