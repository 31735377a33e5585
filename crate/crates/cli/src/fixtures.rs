use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use attune_core::bench::fixtures::{
    focused_corpus, redaction_corpus, FixtureVariant, FIXTURE_COUNT, FIXTURE_SEED,
};
use attune_core::bench::synth_corpus;
use attune_core::jsonl;
use clap::{Args, ValueEnum};
use serde_json::json;

use crate::bench::write_mixed;
use crate::output::{CliError, Output};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Base,
    /// Adds indirectly related segments that draw correctable false alarms.
    FpSeeded,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "base")]
    pub variant: Variant,
}

/// Writes `focused/`, `mixed/` (with manifest) and `redaction.jsonl`.
pub fn run(args: FixturesArgs, out: &Output) -> Result<(), CliError> {
    let variant = match args.variant {
        Variant::Base => FixtureVariant::Base,
        Variant::FpSeeded => FixtureVariant::FalsePositiveSeeded,
    };
    let focused = focused_corpus(variant);
    let focused_dir = args.out.join("focused");
    fs::create_dir_all(&focused_dir)
        .with_context(|| format!("creating {}", focused_dir.display()))?;
    for (i, s) in focused.iter().enumerate() {
        let p = focused_dir.join(format!("focused-{i:02}.json"));
        let mut bytes = serde_json::to_vec(s).context("serializing")?;
        bytes.push(b'\n');
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    let mixed = synth_corpus(&focused, FIXTURE_COUNT, FIXTURE_SEED).context("synthesizing")?;
    let manifest = write_mixed(&args.out.join("mixed"), &mixed, &focused, FIXTURE_SEED)?;

    let redaction: String = redaction_corpus()
        .iter()
        .map(|(text, pii)| jsonl::to_line(&json!({"text": text, "pii": pii})))
        .collect();
    let p = args.out.join("redaction.jsonl");
    fs::write(&p, redaction).with_context(|| format!("writing {}", p.display()))?;

    let ticks: usize = manifest.sessions.iter().map(|s| s.entry.ticks).sum();
    out.emit(
        &json!({
            "out": args.out.display().to_string(),
            "focused": focused.len(),
            "mixed": manifest.count,
            "ticks": ticks,
        }),
        &format!(
            "wrote {} focused and {} mixed sessions ({ticks} ticks) to {}",
            focused.len(),
            manifest.count,
            args.out.display()
        ),
    );
    Ok(())
}
