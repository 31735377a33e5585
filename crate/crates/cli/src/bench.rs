use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use attune_core::bench::{synth_corpus, ManifestEntry};
use attune_core::domain::{FocusedSession, MixedSession};
use attune_core::eval::{
    ablation_report, evaluate, report_row, rows_csv, rows_table, trace_jsonl, AblationRow,
    EvalConfig, OracleScorer, TickScorer,
};
use attune_core::gateway::{Gateway, GatewayConfig, ProviderKind};
use attune_core::runner::DetectorScorer;
use attune_service::ServiceConfig;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{usage, CliError, Output};
use crate::serve::load_config;
use crate::{ScorerKind, ScoringArgs};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of focused sessions, one JSON file each.
    #[arg(long)]
    pub focused: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of labeled sessions written by `bench synth`.
    #[arg(long)]
    pub sessions: PathBuf,
    /// Run all four clarification/feedback configurations.
    #[arg(long)]
    pub ablate: bool,
    /// Use clarification expansions (single-row mode).
    #[arg(long, conflicts_with = "ablate")]
    pub clarification: bool,
    /// Simulate feedback on every false positive (single-row mode).
    #[arg(long, conflicts_with = "ablate")]
    pub feedback: bool,
    /// Send application and URL lines to the scorer.
    #[arg(long)]
    pub include_metadata: bool,
    #[arg(long, default_value_t = attune_core::domain::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Directory for ablation.csv, report.json and per-row traces.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Written next to the synthesized sessions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: usize,
    pub focused: Vec<String>,
    pub sessions: Vec<ManifestFile>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub file: String,
    #[serde(flatten)]
    pub entry: ManifestEntry,
}

/// JSON files of a directory in name order, skipping the manifest.
fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != MANIFEST))
        .collect();
    files.sort();
    Ok(files)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?)
}

pub fn read_focused(dir: &Path) -> Result<Vec<FocusedSession>, CliError> {
    json_files(dir)?.iter().map(|p| read_json(p)).collect()
}

pub fn read_mixed(dir: &Path) -> Result<Vec<MixedSession>, CliError> {
    json_files(dir)?.iter().map(|p| read_json(p)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec(value).context("serializing")?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes `mixed-NNNN.json` files and the manifest. Output bytes depend only
/// on the inputs.
pub fn write_mixed(
    out: &Path,
    sessions: &[MixedSession],
    focused: &[FocusedSession],
    seed: u64,
) -> Result<Manifest, CliError> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::with_capacity(sessions.len());
    for (i, s) in sessions.iter().enumerate() {
        let file = format!("mixed-{i:04}.json");
        write_json(&out.join(&file), s)?;
        files.push(ManifestFile {
            file,
            entry: ManifestEntry::from(s),
        });
    }
    let manifest = Manifest {
        seed,
        count: sessions.len(),
        focused: focused.iter().map(|f| f.id.clone()).collect(),
        sessions: files,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn synth(args: SynthArgs, out: &Output) -> Result<(), CliError> {
    let focused = read_focused(&args.focused)?;
    if focused.len() < 2 {
        return Err(usage(format!(
            "need at least two focused sessions in {}, found {}",
            args.focused.display(),
            focused.len()
        )));
    }
    let sessions = synth_corpus(&focused, args.count, args.seed).context("synthesizing")?;
    let manifest = write_mixed(&args.out, &sessions, &focused, args.seed)?;
    let ticks: usize = manifest.sessions.iter().map(|s| s.entry.ticks).sum();
    out.emit(
        &json!({"out": args.out.display().to_string(), "sessions": manifest.count, "ticks": ticks}),
        &format!(
            "wrote {} sessions ({ticks} ticks) to {}",
            manifest.count,
            args.out.display()
        ),
    );
    Ok(())
}

/// Builds the detector-backed scorer for `mock` or `remote`.
pub fn detector_scorer(
    kind: ScorerKind,
    config: &ServiceConfig,
    include_metadata: bool,
) -> Result<DetectorScorer, CliError> {
    let gateway = match kind {
        ScorerKind::Mock => Gateway::from_config(GatewayConfig {
            provider: ProviderKind::DeterministicMock,
            ..config.gateway.clone()
        }),
        ScorerKind::Remote => Gateway::from_config(GatewayConfig {
            provider: ProviderKind::RemoteHttp,
            ..config.gateway.clone()
        }),
        ScorerKind::Oracle => return Err(usage("the oracle scorer only applies to bench eval")),
    }
    .context("configuring the scoring gateway")?;
    Ok(DetectorScorer {
        include_metadata,
        image_root: config.image_root.clone(),
        refiner: config.refiner.clone(),
        ..DetectorScorer::new(Arc::new(gateway))
    })
}

fn write_eval_outputs(
    dir: &Path,
    rows: &[AblationRow],
    traces: &[Vec<attune_core::eval::TickTrace>],
) -> Result<(), CliError> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, text: String| -> Result<(), CliError> {
        let p = dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    };
    write("ablation.csv", rows_csv(rows))?;
    write(
        "report.json",
        serde_json::to_string_pretty(&json!({ "rows": rows })).context("serializing")? + "\n",
    )?;
    for (row, trace) in rows.iter().zip(traces) {
        let name = format!(
            "trace-c{}-f{}.jsonl",
            u8::from(row.use_clarification),
            u8::from(row.use_feedback)
        );
        write(&name, trace_jsonl(trace))?;
    }
    Ok(())
}

pub fn eval(args: EvalArgs, out: &Output) -> Result<(), CliError> {
    let config = load_config(args.scoring.config.as_ref())?;
    let sessions = read_mixed(&args.sessions)?;
    if sessions.is_empty() {
        return Err(usage(format!("no sessions in {}", args.sessions.display())));
    }
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(usage("threshold must lie in [0, 1]"));
    }
    let scorer: Box<dyn TickScorer> = match args.scoring.scorer {
        ScorerKind::Oracle => Box::new(OracleScorer),
        kind => Box::new(detector_scorer(kind, &config, args.include_metadata)?),
    };
    let base = EvalConfig {
        use_clarification: args.clarification,
        use_feedback: args.feedback,
        threshold: args.threshold,
        include_metadata: args.include_metadata,
    };
    let (rows, traces) = if args.ablate {
        let r = ablation_report(&sessions, scorer.as_ref(), &base).context("evaluating")?;
        (r.rows, r.traces)
    } else {
        let r = evaluate(&sessions, &base, scorer.as_ref()).context("evaluating")?;
        (
            vec![report_row(&r).context("computing metrics")?],
            vec![r.trace],
        )
    };
    if let Some(dir) = &args.out {
        write_eval_outputs(dir, &rows, &traces)?;
    }
    let ticks: usize = sessions.iter().map(|s| s.ticks.len()).sum();
    out.emit(
        &json!({"sessions": sessions.len(), "ticks": ticks, "rows": rows}),
        &format!(
            "{} sessions, {ticks} ticks\n{}",
            sessions.len(),
            rows_table(&rows)
        ),
    );
    Ok(())
}
