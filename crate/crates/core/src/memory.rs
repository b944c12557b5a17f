//! Bounded query → responses store with FIFO eviction and kNN read.
//!
//! One [`EpisodicMemory`] holds at most `capacity` query entries, each with
//! at most `responses_per_query` responses. A novel query evicts the oldest
//! entry (with all of its responses) when full; a known query appends and
//! drops its own oldest responses beyond the bound.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::encoder::{check_dim, dot, Embedding};
use crate::error::{Error, Result};

/// Cosine tolerance for deciding that a probe is an already stored query.
pub const DEFAULT_IDENTITY_TOLERANCE: f64 = 1e-6;
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    /// Maximum number of stored queries (N).
    pub capacity: usize,
    /// Maximum responses kept per query (L).
    pub responses_per_query: usize,
    /// Neighbors considered on read (K).
    pub neighbors: usize,
    pub success_threshold: f64,
    pub failure_threshold: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            capacity: 10_000,
            responses_per_query: 100,
            neighbors: 1,
            success_threshold: 0.5,
            failure_threshold: 0.5,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.responses_per_query == 0 || self.neighbors == 0 {
            return Err(Error::InvalidConfig(
                "capacity, responses_per_query and neighbors must all be >= 1".into(),
            ));
        }
        if !self.success_threshold.is_finite() || !self.failure_threshold.is_finite() {
            return Err(Error::InvalidConfig("thresholds must be finite".into()));
        }
        if self.failure_threshold > self.success_threshold {
            return Err(Error::InvalidConfig(format!(
                "failure threshold {} exceeds success threshold {}",
                self.failure_threshold, self.success_threshold
            )));
        }
        Ok(())
    }

    /// Where a response with this outcome reward belongs.
    pub fn route(&self, outcome_reward: f64) -> Route {
        if outcome_reward > self.success_threshold {
            Route::Success
        } else if outcome_reward <= self.failure_threshold {
            Route::Failure
        } else {
            Route::Discarded
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Success,
    Failure,
    Discarded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub embedding: Embedding,
    pub text: Option<String>,
    pub outcome_reward: f64,
    pub step: u64,
}

impl ResponseRecord {
    pub fn new(embedding: Embedding, outcome_reward: f64, step: u64) -> Self {
        Self {
            embedding,
            text: None,
            outcome_reward,
            step,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEntry {
    embedding: Embedding,
    key_text: Option<String>,
    responses: VecDeque<ResponseRecord>,
    inserted_at: u64,
}

impl QueryEntry {
    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn key_text(&self) -> Option<&str> {
        self.key_text.as_deref()
    }

    pub fn responses(&self) -> impl ExactSizeIterator<Item = &ResponseRecord> {
        self.responses.iter()
    }

    pub fn response_count(&self) -> usize {
        self.responses.len()
    }

    pub fn inserted_at(&self) -> u64 {
        self.inserted_at
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub entry: &'a QueryEntry,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteReport {
    pub written: usize,
    pub evicted_queries: usize,
    pub evicted_responses: usize,
    pub matched_existing: bool,
}

impl WriteReport {
    pub fn merge(self, other: WriteReport) -> WriteReport {
        WriteReport {
            written: self.written + other.written,
            evicted_queries: self.evicted_queries + other.evicted_queries,
            evicted_responses: self.evicted_responses + other.evicted_responses,
            matched_existing: self.matched_existing || other.matched_existing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory {
    config: MemoryConfig,
    dimension: usize,
    identity_tolerance: f64,
    entries: VecDeque<QueryEntry>,
    next_insert: u64,
}

impl EpisodicMemory {
    pub fn new(config: MemoryConfig, dimension: usize) -> Result<Self> {
        config.validate()?;
        if dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be > 0".into()));
        }
        Ok(Self {
            config,
            dimension,
            identity_tolerance: DEFAULT_IDENTITY_TOLERANCE,
            entries: VecDeque::new(),
            next_insert: 0,
        })
    }

    pub fn with_identity_tolerance(mut self, tolerance: f64) -> Self {
        self.identity_tolerance = tolerance;
        self
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn identity_tolerance(&self) -> f64 {
        self.identity_tolerance
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_responses(&self) -> usize {
        self.entries.iter().map(|e| e.responses.len()).sum()
    }

    /// Entries oldest first.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = &QueryEntry> {
        self.entries.iter()
    }

    fn find_identical(&self, query: &[f64], text: Option<&str>) -> Option<usize> {
        self.entries.iter().position(|e| match (text, e.key_text.as_deref()) {
            (Some(a), Some(b)) => a == b,
            _ => dot(query, &e.embedding) >= 1.0 - self.identity_tolerance,
        })
    }

    /// Stores `responses` under `query`. An empty response set leaves the
    /// memory untouched, even for a novel query.
    pub fn write(
        &mut self,
        query: &[f64],
        query_text: Option<&str>,
        responses: Vec<ResponseRecord>,
    ) -> Result<WriteReport> {
        check_dim(self.dimension, query.len())?;
        for r in &responses {
            check_dim(self.dimension, r.embedding.dim())?;
        }
        if responses.is_empty() {
            return Ok(WriteReport::default());
        }
        let query = Embedding::normalized(query.to_vec())?;
        let responses = responses
            .into_iter()
            .map(|mut r| {
                r.embedding = r.embedding.to_unit()?;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut report = WriteReport {
            written: responses.len(),
            ..Default::default()
        };
        let limit = self.config.responses_per_query;
        let idx = match self.find_identical(&query, query_text) {
            Some(idx) => {
                report.matched_existing = true;
                idx
            }
            None => {
                if self.entries.len() >= self.config.capacity {
                    if let Some(old) = self.entries.pop_front() {
                        report.evicted_queries += 1;
                        report.evicted_responses += old.responses.len();
                    }
                }
                self.entries.push_back(QueryEntry {
                    embedding: query,
                    key_text: query_text.map(str::to_owned),
                    responses: VecDeque::with_capacity(responses.len().min(limit)),
                    inserted_at: self.next_insert,
                });
                self.next_insert += 1;
                self.entries.len() - 1
            }
        };
        let entry = &mut self.entries[idx];
        entry.responses.extend(responses);
        while entry.responses.len() > limit {
            entry.responses.pop_front();
            report.evicted_responses += 1;
        }
        Ok(report)
    }

    /// The `k` stored queries most cosine-similar to `probe`, best first.
    /// Ties go to the older entry.
    pub fn nearest_queries(&self, probe: &[f64], k: usize) -> Result<Vec<Neighbor<'_>>> {
        check_dim(self.dimension, probe.len())?;
        if self.entries.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let probe = Embedding::normalized(probe.to_vec())?;
        let mut scored: Vec<Neighbor<'_>> = self
            .entries
            .iter()
            .map(|entry| Neighbor {
                entry,
                similarity: dot(&probe, &entry.embedding),
            })
            .collect();
        let order = |a: &Neighbor<'_>, b: &Neighbor<'_>| {
            b.similarity
                .total_cmp(&a.similarity)
                .then(a.entry.inserted_at.cmp(&b.entry.inserted_at))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored)
    }

    /// Concatenated responses of the `k` nearest entries (duplicates kept).
    pub fn retrieve(&self, probe: &[f64], k: usize) -> Result<Vec<&ResponseRecord>> {
        Ok(self
            .nearest_queries(probe, k)?
            .into_iter()
            .flat_map(|n| n.entry.responses.iter())
            .collect())
    }

    /// JSONL snapshot: a header line, then one line per entry, oldest first.
    pub fn snapshot_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = SnapshotHeader {
            version: SNAPSHOT_VERSION,
            dimension: self.dimension,
            config: self.config,
            identity_tolerance: self.identity_tolerance,
            entries: self.entries.len(),
            next_insert: self.next_insert,
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for e in &self.entries {
            let line = EntryLine {
                q: e.embedding.as_slice().to_vec(),
                text: e.key_text.clone(),
                inserted_at: e.inserted_at,
                responses: e
                    .responses
                    .iter()
                    .map(|r| ResponseLine {
                        v: r.embedding.as_slice().to_vec(),
                        r: r.outcome_reward,
                        step: r.step,
                        text: r.text.clone(),
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.snapshot_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Restores under the stored header's own configuration.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let (header, entries) = parse_snapshot(reader)?;
        Self::assemble(header, entries, header.config, header.dimension)
    }

    /// Restores a snapshot under `config`, which must agree on `dimension`.
    /// Entries or responses beyond the new bounds are dropped oldest first.
    pub fn restore<R: BufRead>(reader: R, config: &MemoryConfig, dimension: usize) -> Result<Self> {
        let (header, entries) = parse_snapshot(reader)?;
        check_dim(dimension, header.dimension)?;
        Self::assemble(header, entries, *config, dimension)
    }

    fn assemble(
        header: SnapshotHeader,
        lines: Vec<EntryLine>,
        config: MemoryConfig,
        dimension: usize,
    ) -> Result<Self> {
        let mut mem = Self::new(config, dimension)?.with_identity_tolerance(header.identity_tolerance);
        let mut last: Option<u64> = None;
        for line in lines {
            if last.is_some_and(|l| line.inserted_at <= l) {
                return Err(Error::CorruptSnapshot("entries not in insertion order".into()));
            }
            last = Some(line.inserted_at);
            let corrupt = |e: Error| Error::CorruptSnapshot(e.to_string());
            check_dim(dimension, line.q.len()).map_err(corrupt)?;
            let mut responses = VecDeque::with_capacity(line.responses.len());
            for r in line.responses {
                check_dim(dimension, r.v.len()).map_err(corrupt)?;
                responses.push_back(ResponseRecord {
                    embedding: Embedding::from_raw(r.v).map_err(corrupt)?,
                    text: r.text,
                    outcome_reward: r.r,
                    step: r.step,
                });
            }
            while responses.len() > config.responses_per_query {
                responses.pop_front();
            }
            mem.entries.push_back(QueryEntry {
                embedding: Embedding::from_raw(line.q).map_err(corrupt)?,
                key_text: line.text,
                responses,
                inserted_at: line.inserted_at,
            });
        }
        while mem.entries.len() > config.capacity {
            mem.entries.pop_front();
        }
        mem.next_insert = header.next_insert.max(last.map_or(0, |l| l + 1));
        Ok(mem)
    }
}

/// Routes each response to success, failure or nowhere by its outcome
/// reward, then writes both memories under the same query.
pub fn route_and_write(
    success: &mut EpisodicMemory,
    failure: &mut EpisodicMemory,
    query: &[f64],
    query_text: Option<&str>,
    responses: Vec<ResponseRecord>,
) -> Result<(WriteReport, WriteReport)> {
    check_dim(success.dimension, failure.dimension)?;
    check_dim(success.dimension, query.len())?;
    for r in &responses {
        check_dim(success.dimension, r.embedding.dim())?;
    }
    let tau_s = success.config.success_threshold;
    let tau_f = failure.config.failure_threshold;
    let (mut good, mut bad) = (Vec::new(), Vec::new());
    for r in responses {
        if r.outcome_reward > tau_s {
            good.push(r);
        } else if r.outcome_reward <= tau_f {
            bad.push(r);
        }
    }
    let s = success.write(query, query_text, good)?;
    let f = failure.write(query, query_text, bad)?;
    Ok((s, f))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub version: u32,
    pub dimension: usize,
    pub config: MemoryConfig,
    #[serde(default = "default_tolerance")]
    pub identity_tolerance: f64,
    pub entries: usize,
    #[serde(default)]
    pub next_insert: u64,
}

fn default_tolerance() -> f64 {
    DEFAULT_IDENTITY_TOLERANCE
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryLine {
    q: Vec<f64>,
    text: Option<String>,
    inserted_at: u64,
    responses: Vec<ResponseLine>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResponseLine {
    v: Vec<f64>,
    r: f64,
    step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

fn parse_snapshot<R: BufRead>(reader: R) -> Result<(SnapshotHeader, Vec<EntryLine>)> {
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::CorruptSnapshot("missing header".into()))??;
    let header: SnapshotHeader =
        serde_json::from_str(&first).map_err(|e| Error::CorruptSnapshot(format!("header: {e}")))?;
    if header.version != SNAPSHOT_VERSION {
        return Err(Error::CorruptSnapshot(format!("unsupported version {}", header.version)));
    }
    let mut entries = Vec::with_capacity(header.entries);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: EntryLine = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptSnapshot(format!("entry line {}: {e}", i + 2)))?;
        entries.push(entry);
    }
    if entries.len() != header.entries {
        return Err(Error::CorruptSnapshot(format!(
            "header announces {} entries, found {}",
            header.entries,
            entries.len()
        )));
    }
    Ok((header, entries))
}
