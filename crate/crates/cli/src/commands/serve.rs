use std::fs;

use anyhow::{Context, Result};
use memreward_service::ServiceConfig;

use super::usage;
use crate::args::ServeArgs;

pub fn run(args: ServeArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ServiceConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ServiceConfig::default(),
    };
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    runtime.block_on(memreward_service::serve(config))?;
    Ok(())
}
