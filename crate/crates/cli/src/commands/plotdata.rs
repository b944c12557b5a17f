use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memreward::sim::metrics::{read_csv, read_jsonl};
use memreward::sim::StepMetrics;

use crate::args::{Figure, PlotdataArgs};

fn metrics_for(figure: Figure) -> &'static [&'static str] {
    match figure {
        Figure::Rewards => &["correctness", "xml_reward", "integer_reward", "mean_total_reward"],
        Figure::Lengths => &["mean_length", "p95_length"],
        Figure::Intrinsic => &["mean_norm_exploit", "mean_norm_explore", "mean_r_mem"],
        Figure::Success => &["success_rate", "diversity"],
    }
}

/// Per-seed files in `dir`, CSV preferred over JSONL for the same seed.
fn seed_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = Vec::new();
    let mut jsonl = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if !name.starts_with("metrics_seed") {
            continue;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => csv.push(path),
            Some("jsonl") => jsonl.push(path),
            _ => {}
        }
    }
    let mut files = if csv.is_empty() { jsonl } else { csv };
    files.sort();
    Ok(files)
}

fn load(path: &Path) -> Result<Vec<StepMetrics>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let series = if path.extension().is_some_and(|e| e == "csv") {
        read_csv(reader)
    } else {
        read_jsonl(reader)
    };
    series.with_context(|| format!("parsing {}", path.display()))
}

pub fn run(args: PlotdataArgs) -> Result<()> {
    let files = seed_files(&args.metrics)?;
    if files.is_empty() {
        bail!("no metrics_seed* files in {}", args.metrics.display());
    }
    let mut rows: Vec<StepMetrics> = Vec::new();
    for path in &files {
        rows.extend(load(path)?);
    }
    rows.sort_by_key(|m| (m.seed, m.step));

    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    writeln!(out, "step,seed,metric,value")?;
    for m in &rows {
        for &name in metrics_for(args.figure) {
            let value = m.value(name).unwrap_or(f64::NAN);
            writeln!(out, "{},{},{name},{value}", m.step, m.seed)?;
        }
    }
    out.flush()?;
    Ok(())
}
