//! Per-step metrics, response diversity and training-collapse detectors.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::encoder::cosine_similarity;
use crate::error::{Error, Result};

/// Column order of the metrics CSV; also the field order of [`StepMetrics`].
pub const CSV_HEADER: &[&str] = &[
    "step",
    "seed",
    "query",
    "success_rate",
    "correctness",
    "mean_total_reward",
    "mean_r_mem",
    "mean_norm_exploit",
    "mean_norm_explore",
    "mean_length",
    "p95_length",
    "diversity",
    "xml_reward",
    "integer_reward",
    "degenerate",
];

/// One logged training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub seed: u64,
    pub query: usize,
    /// Expected accuracy of the updated policy, averaged over all queries.
    pub success_rate: f64,
    /// Mean outcome reward of the sampled group.
    pub correctness: f64,
    pub mean_total_reward: f64,
    pub mean_r_mem: f64,
    /// Absent components count as 0.
    pub mean_norm_exploit: f64,
    pub mean_norm_explore: f64,
    pub mean_length: f64,
    pub p95_length: f64,
    /// Semantic diversity of the sampled group.
    pub diversity: f64,
    pub xml_reward: f64,
    pub integer_reward: f64,
    pub degenerate: bool,
}

impl StepMetrics {
    /// Named numeric series, for tidy plot data.
    pub fn value(&self, metric: &str) -> Option<f64> {
        Some(match metric {
            "success_rate" => self.success_rate,
            "correctness" => self.correctness,
            "mean_total_reward" => self.mean_total_reward,
            "mean_r_mem" => self.mean_r_mem,
            "mean_norm_exploit" => self.mean_norm_exploit,
            "mean_norm_explore" => self.mean_norm_explore,
            "mean_length" => self.mean_length,
            "p95_length" => self.p95_length,
            "diversity" => self.diversity,
            "xml_reward" => self.xml_reward,
            "integer_reward" => self.integer_reward,
            _ => return None,
        })
    }
}

pub fn write_csv<W: Write>(out: W, series: &[StepMetrics]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in series {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<StepMetrics>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidConfig(format!("unexpected metrics header: {}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn write_jsonl<W: Write>(mut out: W, series: &[StepMetrics]) -> Result<()> {
    for row in series {
        serde_json::to_writer(&mut out, row).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<StepMetrics>> {
    let mut rows = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line).map_err(std::io::Error::from)?);
        }
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiversityMode {
    Semantic,
    Lexical,
}

/// `1 − mean pairwise cosine` over all unordered pairs. Negative
/// similarities are clamped to 0 so the score stays in `[0, 1]`.
pub fn semantic_diversity(embeddings: &[&[f64]]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::TooFewResponses(embeddings.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            total += cosine_similarity(embeddings[i], embeddings[j])?.max(0.0);
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}

/// Same as [`semantic_diversity`] over term-frequency vectors of the texts
/// (lower-cased alphanumeric tokens).
pub fn lexical_diversity(texts: &[&str]) -> Result<f64> {
    if texts.len() < 2 {
        return Err(Error::TooFewResponses(texts.len()));
    }
    let mut vocab: HashMap<String, usize> = HashMap::new();
    let docs: Vec<Vec<usize>> = texts
        .iter()
        .map(|t| {
            t.split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .map(|w| {
                    let next = vocab.len();
                    *vocab.entry(w.to_lowercase()).or_insert(next)
                })
                .collect()
        })
        .collect();
    let vectors: Vec<Vec<f64>> = docs
        .iter()
        .map(|doc| {
            let mut v = vec![0.0; vocab.len()];
            doc.iter().for_each(|&i| v[i] += 1.0);
            v
        })
        .collect();
    let refs: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
    semantic_diversity(&refs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollapseThresholds {
    /// Trailing window length, in steps.
    pub window: usize,
    /// Format reward mean that counts as "learned".
    pub format_high: f64,
    /// Minimum rise of the format mean over the first window.
    pub format_rise: f64,
    /// Correctness mean below which correctness counts as flat.
    pub correctness_floor: f64,
    /// Mean length at or below which responses count as collapsed short.
    pub length_floor: f64,
    /// Maximum generation length; p95 at or above it counts as pinned.
    pub max_length: f64,
}

impl Default for CollapseThresholds {
    fn default() -> Self {
        Self {
            window: 20,
            format_high: 0.8,
            format_rise: 0.3,
            correctness_floor: 0.1,
            length_floor: 20.0,
            max_length: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapseKind {
    RewardMode,
    LengthShortening,
    LengthLengthening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub kind: CollapseKind,
    /// Step at which the trailing window first satisfied the condition.
    pub step: u64,
    pub evidence: String,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Scans trailing windows for the three collapse patterns and reports the
/// first step of each contiguous triggered stretch.
pub fn detect_collapse(series: &[StepMetrics], th: &CollapseThresholds) -> Result<Vec<CollapseEvent>> {
    let w = th.window.max(1);
    if series.len() < w {
        return Err(Error::SeriesTooShort {
            needed: w,
            got: series.len(),
        });
    }
    let first = &series[..w];
    let base_xml = mean(first.iter().map(|m| m.xml_reward));
    let base_int = mean(first.iter().map(|m| m.integer_reward));

    let mut events = Vec::new();
    let mut active: HashMap<CollapseKind, bool> = HashMap::new();
    for end in w..=series.len() {
        let win = &series[end - w..end];
        let correctness = mean(win.iter().map(|m| m.correctness));
        let xml = mean(win.iter().map(|m| m.xml_reward));
        let int = mean(win.iter().map(|m| m.integer_reward));
        let step = win[w - 1].step;

        let mut checks: Vec<(CollapseKind, Option<String>)> = Vec::with_capacity(3);
        let format_hit = [("xml", xml, base_xml), ("integer", int, base_int)]
            .into_iter()
            .find(|&(_, now, base)| now >= th.format_high && now - base >= th.format_rise);
        checks.push((
            CollapseKind::RewardMode,
            format_hit.filter(|_| correctness < th.correctness_floor).map(|(name, now, base)| {
                format!("{name} reward mean {now:.3} (from {base:.3}) while correctness mean {correctness:.3}")
            }),
        ));
        checks.push((
            CollapseKind::LengthShortening,
            win.iter().all(|m| m.mean_length <= th.length_floor).then(|| {
                format!("mean length <= {} for {w} steps", th.length_floor)
            }),
        ));
        checks.push((
            CollapseKind::LengthLengthening,
            win.iter().all(|m| m.p95_length >= th.max_length).then(|| {
                format!("p95 length pinned at {} for {w} steps", th.max_length)
            }),
        ));

        for (kind, hit) in checks {
            let was = active.get(&kind).copied().unwrap_or(false);
            match hit {
                Some(evidence) if !was => {
                    events.push(CollapseEvent { kind, step, evidence });
                    active.insert(kind, true);
                }
                Some(_) => {}
                None => {
                    active.insert(kind, false);
                }
            }
        }
    }
    Ok(events)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs.iter().copied());
    let my = mean(ys.iter().copied());
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Nearest-rank percentile of unsorted values.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diversity_examples() {
        let v = [1.0, 0.0, 0.0];
        assert_eq!(semantic_diversity(&[&v, &v, &v]).unwrap(), 0.0);
        let (a, b, c) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
        assert_eq!(semantic_diversity(&[&a, &b, &c]).unwrap(), 1.0);
        let u = [1.0, 0.0];
        let w = [0.8, 0.6];
        assert!((semantic_diversity(&[&u, &w]).unwrap() - 0.2).abs() < 1e-12);
        assert!(matches!(semantic_diversity(&[&u]), Err(Error::TooFewResponses(1))));
    }

    #[test]
    fn lexical_diversity_uses_term_counts() {
        assert!(lexical_diversity(&["a b", "A b", "b a"]).unwrap().abs() < 1e-12);
        assert_eq!(lexical_diversity(&["x", "y", "z"]).unwrap(), 1.0);
        assert!(lexical_diversity(&["only one"]).is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&v, 100.0), 20.0);
        assert_eq!(percentile(&[5.0], 95.0), 5.0);
    }

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        assert!((least_squares_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(least_squares_slope(&[1.0], &[1.0]), None);
    }

    fn row(step: u64) -> StepMetrics {
        StepMetrics {
            step,
            seed: 0,
            query: 0,
            success_rate: 0.0,
            correctness: 0.0,
            mean_total_reward: 0.0,
            mean_r_mem: 0.0,
            mean_norm_exploit: 0.0,
            mean_norm_explore: 0.0,
            mean_length: 100.0,
            p95_length: 150.0,
            diversity: 0.5,
            xml_reward: 0.2,
            integer_reward: 0.2,
            degenerate: false,
        }
    }

    #[test]
    fn csv_round_trip_keeps_header() {
        let series: Vec<_> = (0..3).map(row).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &series).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&CSV_HEADER.join(",")));
        assert_eq!(read_csv(&buf[..]).unwrap(), series);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &series).unwrap();
        assert_eq!(read_jsonl(&buf[..]).unwrap(), series);
    }

    #[test]
    fn short_series_rejected() {
        let series: Vec<_> = (0..5).map(row).collect();
        assert!(matches!(
            detect_collapse(&series, &CollapseThresholds::default()),
            Err(Error::SeriesTooShort { needed: 20, got: 5 })
        ));
    }
}
