//! On-disk engine snapshots.
//!
//! A snapshot is a directory holding `success.jsonl` and `failure.jsonl` (the
//! memory format) plus `engine.json` with the step counter and the
//! normalization windows. Files are written to temporaries and renamed, so a
//! reader never sees a half-written file.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::check_dim;
use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;
use crate::rewards::{EngineConfig, MemoryPair, NormWindows, RewardEngine, SlidingWindow};

pub const SUCCESS_FILE: &str = "success.jsonl";
pub const FAILURE_FILE: &str = "failure.jsonl";
pub const ENGINE_FILE: &str = "engine.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub version: u32,
    pub dimension: usize,
    pub step: u64,
    pub windows: NormWindows,
}

/// Everything needed to rebuild a [`RewardEngine`].
#[derive(Debug, Clone, PartialEq)]
pub struct EngineSnapshot {
    pub memories: MemoryPair,
    pub windows: NormWindows,
    pub step: u64,
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<u64> {
    let tmp = path.with_extension("tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write(&mut out)?;
        out.flush()?;
        out.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(fs::metadata(path)?.len())
}

/// Writes a snapshot into `dir`, creating it if needed. Returns the total
/// number of bytes written.
pub fn save(dir: &Path, memories: &MemoryPair, windows: &NormWindows, step: u64) -> Result<u64> {
    fs::create_dir_all(dir)?;
    let mut bytes = write_atomic(&dir.join(SUCCESS_FILE), |w| memories.success.snapshot_to(w))?;
    bytes += write_atomic(&dir.join(FAILURE_FILE), |w| memories.failure.snapshot_to(w))?;
    let state = EngineState {
        version: crate::memory::SNAPSHOT_VERSION,
        dimension: memories.dimension(),
        step,
        windows: windows.clone(),
    };
    bytes += write_atomic(&dir.join(ENGINE_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &state).map_err(std::io::Error::from)?;
        Ok(w.write_all(b"\n")?)
    })?;
    Ok(bytes)
}

/// True when `dir` holds all three snapshot files.
pub fn exists(dir: &Path) -> bool {
    [SUCCESS_FILE, FAILURE_FILE, ENGINE_FILE].iter().all(|f| dir.join(f).is_file())
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(dir.join(name))?))
}

/// Reads a snapshot under `config`. The dimension must match; memory and
/// window bounds follow `config`, dropping the oldest data if they shrank.
pub fn load(dir: &Path, config: &EngineConfig) -> Result<EngineSnapshot> {
    config.validate()?;
    let state: EngineState = serde_json::from_reader(open(dir, ENGINE_FILE)?)
        .map_err(|e| Error::CorruptSnapshot(format!("{ENGINE_FILE}: {e}")))?;
    check_dim(config.dimension, state.dimension)?;
    let success = EpisodicMemory::restore(open(dir, SUCCESS_FILE)?, &config.success, config.dimension)?
        .with_identity_tolerance(config.identity_tolerance);
    let failure = EpisodicMemory::restore(open(dir, FAILURE_FILE)?, &config.failure, config.dimension)?
        .with_identity_tolerance(config.identity_tolerance);
    Ok(EngineSnapshot {
        memories: MemoryPair { success, failure },
        windows: resize_windows(state.windows, config.reward.window),
        step: state.step,
    })
}

fn resize_windows(windows: NormWindows, capacity: usize) -> NormWindows {
    let refill = |old: &SlidingWindow| {
        let mut w = SlidingWindow::new(old.kind(), capacity);
        old.values().for_each(|&v| w.push(v));
        w
    };
    NormWindows {
        exploit: refill(&windows.exploit),
        explore: refill(&windows.explore),
        version: windows.version,
    }
}

impl RewardEngine {
    pub fn save_snapshot(&self, dir: &Path) -> Result<u64> {
        save(dir, self.memories(), self.windows(), self.step())
    }

    pub fn load_snapshot(dir: &Path, config: EngineConfig) -> Result<Self> {
        let snap = load(dir, &config)?;
        RewardEngine::from_parts(config, snap.memories, snap.windows, snap.step)
    }
}

/// Resolves a path that may be a snapshot directory or a single memory file
/// into the memory files it contains.
pub fn memory_files(path: &Path) -> Vec<PathBuf> {
    if path.is_dir() {
        [SUCCESS_FILE, FAILURE_FILE]
            .iter()
            .map(|f| path.join(f))
            .filter(|p| p.is_file())
            .collect()
    } else {
        vec![path.to_path_buf()]
    }
}
