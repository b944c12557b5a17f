use std::fs::File;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use memreward::snapshot::memory_files;
use memreward::{EpisodicMemory, HashEncoder, QueryEntry, TextEncoder};

use super::usage;
use crate::args::InspectArgs;

fn parse_vec(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--query-vec: `{s}` is not a number")))
        })
        .collect()
}

fn describe(entry: &QueryEntry) -> String {
    format!(
        "inserted_at={} responses={} text={:?}",
        entry.inserted_at(),
        entry.response_count(),
        entry.key_text().unwrap_or("")
    )
}

pub fn run(args: InspectArgs) -> Result<()> {
    if !args.snapshot.exists() {
        bail!("snapshot {} not found", args.snapshot.display());
    }
    if args.k == 0 {
        return Err(usage("--K must be >= 1"));
    }
    let files = memory_files(&args.snapshot);
    if files.is_empty() {
        println!("{}: 0 entries (no memory files)", args.snapshot.display());
        return Ok(());
    }
    for path in files {
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let memory = EpisodicMemory::load(BufReader::new(file)).with_context(|| format!("loading {}", path.display()))?;
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let cfg = memory.config();
        println!(
            "{name}: {} entries, {} responses (dimension {}, capacity {}, per-query {})",
            memory.len(),
            memory.total_responses(),
            memory.dimension(),
            cfg.capacity,
            cfg.responses_per_query
        );

        let probe = match (&args.query_text, &args.query_vec) {
            (Some(text), _) => Some(
                HashEncoder::new(memory.dimension(), args.ngram, args.encoder_seed)?
                    .encode(text)?
                    .into_vec(),
            ),
            (None, Some(raw)) => Some(parse_vec(raw)?),
            (None, None) => None,
        };
        match probe {
            Some(probe) => {
                for (rank, n) in memory.nearest_queries(&probe, args.k)?.iter().enumerate() {
                    println!("  #{} cos={:.6} {}", rank + 1, n.similarity, describe(n.entry));
                }
            }
            None => {
                for entry in memory.entries().take(args.limit) {
                    println!("  {}", describe(entry));
                }
                if memory.len() > args.limit {
                    println!("  ... {} more", memory.len() - args.limit);
                }
            }
        }
    }
    Ok(())
}
