use std::fs::File;
use std::io::{BufRead, BufReader};

use anyhow::{Context, Result};
use memreward::sim::metrics::{lexical_diversity, semantic_diversity};
use serde::Deserialize;

use super::usage;
use crate::args::{DiversityArgs, Mode};

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Vector(Vec<f64>),
    Record {
        #[serde(default)]
        vector: Option<Vec<f64>>,
        #[serde(default)]
        text: Option<String>,
    },
}

pub fn run(args: DiversityArgs) -> Result<()> {
    let file = File::open(&args.embeddings).with_context(|| format!("opening {}", args.embeddings.display()))?;
    let mut vectors = Vec::new();
    let mut texts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| usage(format!("{} line {}: {e}", args.embeddings.display(), i + 1)))?;
        let (vector, text) = match parsed {
            Line::Vector(v) => (Some(v), None),
            Line::Record { vector, text } => (vector, text),
        };
        match args.mode {
            Mode::Semantic => vectors.push(vector.ok_or_else(|| usage(format!("line {}: no vector", i + 1)))?),
            Mode::Lexical => texts.push(text.ok_or_else(|| usage(format!("line {}: no text", i + 1)))?),
        }
    }
    let score = match args.mode {
        Mode::Semantic => semantic_diversity(&vectors.iter().map(Vec::as_slice).collect::<Vec<_>>())?,
        Mode::Lexical => lexical_diversity(&texts.iter().map(String::as_str).collect::<Vec<_>>())?,
    };
    println!("{score}");
    Ok(())
}
