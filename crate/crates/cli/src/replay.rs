use std::path::PathBuf;

use anyhow::Context;
use attune_core::domain::SessionTimeline;
use attune_core::runner::replay;
use clap::Args;
use serde_json::json;

use crate::bench::detector_scorer;
use crate::output::{usage, CliError, Output};
use crate::serve::load_config;
use crate::ScoringArgs;

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A persisted timeline.json, or the session directory holding one.
    #[arg(long)]
    pub session: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

pub fn run(args: ReplayArgs, out: &Output) -> Result<(), CliError> {
    let config = load_config(args.scoring.config.as_ref())?;
    let path = if args.session.is_dir() {
        args.session.join("timeline.json")
    } else {
        args.session.clone()
    };
    let bytes = std::fs::read(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let recorded: SessionTimeline =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    // Live sessions score with metadata, so replay does too.
    let scorer = detector_scorer(args.scoring.scorer, &config, true)?;
    let report = replay(&recorded, &scorer, config.engine.clone()).context("replaying")?;
    let text = if report.divergences.is_empty() {
        format!(
            "{}: {} samples replayed, no divergence",
            recorded.session_id.as_str(),
            recorded.samples.len()
        )
    } else {
        let mut t = format!(
            "{}: {} divergences\n",
            recorded.session_id.as_str(),
            report.divergences.len()
        );
        for d in &report.divergences {
            t.push_str(d);
            t.push('\n');
        }
        t
    };
    out.emit(
        &json!({
            "session_id": recorded.session_id,
            "samples": recorded.samples.len(),
            "notifications": report.timeline.notifications.len(),
            "divergences": report.divergences,
        }),
        &text,
    );
    Ok(())
}
