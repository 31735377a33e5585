//! Benchmark synthesis: segmentation of focused sessions, seeded mixing into
//! labeled sessions, and instruction relabeling.

pub mod fixtures;

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    ActivitySample, BoundaryReason, FocusedSession, MixedSegment, MixedSession, Segment,
    SegmentSource, Tick, TICK_SPACING_MS,
};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("session {0} has no segments")]
    Unsegmented(String),
    #[error("cannot mix session {0} with itself")]
    SameSession(String),
    #[error("need at least two focused sessions, got {0}")]
    TooFewSessions(usize),
}

const INSTRUCTIONS_CSV: &str = include_str!("../../assets/instruction_relabels.csv");

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct InstructionRow {
    pub id: u32,
    pub instruction: String,
    pub relabeled: String,
}

static INSTRUCTIONS: LazyLock<Vec<InstructionRow>> = LazyLock::new(|| {
    csv::Reader::from_reader(INSTRUCTIONS_CSV.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("bundled instruction table is valid CSV")
});

static BY_INSTRUCTION: LazyLock<HashMap<&'static str, &'static str>> = LazyLock::new(|| {
    INSTRUCTIONS
        .iter()
        .map(|r| (r.instruction.as_str(), r.relabeled.as_str()))
        .collect()
});

/// The bundled 50-row instruction table.
pub fn instruction_table() -> &'static [InstructionRow] {
    &INSTRUCTIONS
}

pub fn lookup_relabel(instruction: &str) -> Option<&'static str> {
    BY_INSTRUCTION.get(instruction.trim()).copied()
}

/// Relabeled form of a bundled instruction; unknown text is returned unchanged.
pub fn relabel(instruction: &str) -> String {
    match lookup_relabel(instruction) {
        Some(r) => r.to_string(),
        None => {
            tracing::warn!(
                instruction,
                "instruction not in the bundled table; keeping it as is"
            );
            instruction.to_string()
        }
    }
}

/// Scheme, host, port and path of a URL. Query and fragment are dropped.
pub fn normalize_url(raw: &str) -> String {
    match url::Url::parse(raw.trim()) {
        Ok(u) => {
            let mut s = format!("{}://{}", u.scheme(), u.host_str().unwrap_or(""));
            if let Some(p) = u.port() {
                s.push_str(&format!(":{p}"));
            }
            s.push_str(u.path());
            s
        }
        Err(_) => raw
            .trim()
            .split(['?', '#'])
            .next()
            .unwrap_or_default()
            .to_string(),
    }
}

fn boundary(prev: &ActivitySample, cur: &ActivitySample) -> Option<BoundaryReason> {
    if prev.app_title != cur.app_title {
        return Some(BoundaryReason::AppSwitch);
    }
    let norm = |s: &ActivitySample| s.url.as_deref().map(normalize_url);
    (norm(prev) != norm(cur)).then_some(BoundaryReason::UrlChange)
}

/// Splits samples at every application or normalized-URL change.
///
/// Each segment records why it started; the first starts at the session edge.
pub fn segment(session: &FocusedSession) -> FocusedSession {
    let mut segments = Vec::new();
    let samples = &session.samples;
    if !samples.is_empty() {
        let mut start = 0;
        let mut reason = BoundaryReason::SessionEdge;
        for i in 1..samples.len() {
            if let Some(r) = boundary(&samples[i - 1], &samples[i]) {
                segments.push(Segment {
                    start,
                    end: i,
                    boundary_reason: reason,
                });
                start = i;
                reason = r;
            }
        }
        segments.push(Segment {
            start,
            end: samples.len(),
            boundary_reason: reason,
        });
    }
    FocusedSession {
        segments,
        ..session.clone()
    }
}

/// Indices kept by downsampling: the first sample of each 2000 ms bucket,
/// buckets measured from the first sample.
pub fn downsample_indices(samples: &[ActivitySample]) -> Vec<usize> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let mut kept = Vec::new();
    let mut last_bucket = None;
    for (i, s) in samples.iter().enumerate() {
        let bucket = (s.timestamp - first.timestamp).div_euclid(TICK_SPACING_MS);
        if last_bucket != Some(bucket) {
            kept.push(i);
            last_bucket = Some(bucket);
        }
    }
    kept
}

/// Mixes the segments of `a` (on-task) and `b` (off-task) in a seeded
/// uniform permutation, re-timed at 2000 ms spacing from zero.
pub fn synthesize(
    a: &FocusedSession,
    b: &FocusedSession,
    seed: u64,
) -> Result<MixedSession, BenchError> {
    for s in [a, b] {
        if s.segments.is_empty() {
            return Err(BenchError::Unsegmented(s.id.clone()));
        }
    }
    if a.id == b.id {
        return Err(BenchError::SameSession(a.id.clone()));
    }

    let kept: [BTreeSet<usize>; 2] = [
        downsample_indices(&a.samples).into_iter().collect(),
        downsample_indices(&b.samples).into_iter().collect(),
    ];
    let mut pieces: Vec<(SegmentSource, usize)> = (0..a.segments.len())
        .map(|i| (SegmentSource::A, i))
        .chain((0..b.segments.len()).map(|i| (SegmentSource::B, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pieces.shuffle(&mut rng);

    let mut ticks = Vec::new();
    let mut segments = Vec::new();
    for (source, idx) in pieces {
        let (session, kept) = match source {
            SegmentSource::A => (a, &kept[0]),
            SegmentSource::B => (b, &kept[1]),
        };
        let seg = &session.segments[idx];
        let tick_start = ticks.len();
        for i in (seg.start..seg.end).filter(|i| kept.contains(i)) {
            let mut sample = session.samples[i].clone();
            sample.timestamp = ticks.len() as i64 * TICK_SPACING_MS;
            ticks.push(Tick {
                sample,
                label: source.label(),
            });
        }
        segments.push(MixedSegment {
            source,
            segment_index: idx,
            tick_start,
            tick_end: ticks.len(),
        });
    }

    Ok(MixedSession {
        id: format!("{}+{}@{seed}", a.id, b.id),
        intention: a.relabeled_intention.clone(),
        clarification: a.clarification.clone(),
        segments,
        ticks,
        seed,
        source_a: a.id.clone(),
        source_b: b.id.clone(),
    })
}

/// One manifest line per synthesized session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub source_a: String,
    pub source_b: String,
    pub ticks: usize,
}

impl From<&MixedSession> for ManifestEntry {
    fn from(m: &MixedSession) -> Self {
        Self {
            id: m.id.clone(),
            seed: m.seed,
            source_a: m.source_a.clone(),
            source_b: m.source_b.clone(),
            ticks: m.ticks.len(),
        }
    }
}

/// Draws `count` ordered pairs of distinct sessions and mixes each with its
/// own derived seed. Sessions are segmented first if needed.
pub fn synth_corpus(
    focused: &[FocusedSession],
    count: usize,
    seed: u64,
) -> Result<Vec<MixedSession>, BenchError> {
    if focused.len() < 2 {
        return Err(BenchError::TooFewSessions(focused.len()));
    }
    let segmented: Vec<FocusedSession> = focused
        .iter()
        .map(|s| {
            if s.segments.is_empty() {
                segment(s)
            } else {
                s.clone()
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = segmented.len();
    (0..count)
        .map(|_| {
            let ia = rng.random_range(0..n);
            let ib = (ia + rng.random_range(1..n)) % n;
            let pair_seed: u64 = rng.random();
            synthesize(&segmented[ia], &segmented[ib], pair_seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Classification, ScreenshotRef, Validate};

    fn sample(ts: i64, app: &str, url: Option<&str>) -> ActivitySample {
        ActivitySample {
            timestamp: ts,
            screenshot_ref: ScreenshotRef::Absent,
            app_title: app.into(),
            url: url.map(String::from),
            screen_text: vec![],
        }
    }

    fn session(id: &str, apps: &[&str]) -> FocusedSession {
        FocusedSession {
            id: id.into(),
            instruction: "x".into(),
            relabeled_intention: format!("intention {id}"),
            clarification: None,
            samples: apps
                .iter()
                .enumerate()
                .map(|(i, a)| sample(i as i64 * 1000, a, None))
                .collect(),
            segments: vec![],
        }
    }

    #[test]
    fn single_app_is_one_segment() {
        let s = segment(&session("a", &["Editor"; 6]));
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].boundary_reason, BoundaryReason::SessionEdge);
    }

    #[test]
    fn app_sequence_segments() {
        let s = segment(&session("a", &["A", "A", "B", "B", "A"]));
        let ranges: Vec<_> = s.segments.iter().map(|g| (g.start, g.end)).collect();
        assert_eq!(ranges, vec![(0, 2), (2, 4), (4, 5)]);
        assert!(s.is_valid());
    }

    #[test]
    fn restaurant_flow_has_three_segments() {
        let samples = vec![
            sample(0, "Messenger", None),
            sample(1000, "Messenger", None),
            sample(
                2000,
                "Chrome",
                Some("https://maps.example.com/search?q=pasta"),
            ),
            sample(
                3000,
                "Chrome",
                Some("https://maps.example.com/search?q=pasta&z=14"),
            ),
            sample(4000, "Chrome", Some("https://reviews.example.com/place/7")),
        ];
        let s = FocusedSession {
            samples,
            ..session("r", &[])
        };
        let s = segment(&s);
        let reasons: Vec<_> = s.segments.iter().map(|g| g.boundary_reason).collect();
        assert_eq!(
            reasons,
            vec![
                BoundaryReason::SessionEdge,
                BoundaryReason::AppSwitch,
                BoundaryReason::UrlChange
            ]
        );
    }

    #[test]
    fn url_normalization() {
        assert_eq!(
            normalize_url("https://Example.com:8443/a/b?x=1#frag"),
            "https://example.com:8443/a/b"
        );
        assert_eq!(normalize_url("not a url?q"), "not a url");
    }

    #[test]
    fn relabel_table() {
        assert_eq!(instruction_table().len(), 50);
        assert_eq!(relabel("Order kids' books online"), "Buy books");
        assert_eq!(relabel("Chill by watching YouTube shorts"), "Watch YouTube");
        assert_eq!(relabel("Something else"), "Something else");
    }

    #[test]
    fn label_conservation_and_determinism() {
        let a = segment(&session("a", &["A1", "A1", "A2", "A2", "A2"]));
        let b = segment(&session("b", &["B1", "B1", "B1"]));
        let m = synthesize(&a, &b, 42).unwrap();
        assert!(m.is_valid(), "{:?}", m.validate());
        let on = m
            .ticks
            .iter()
            .filter(|t| t.label == Classification::OnTask)
            .count();
        assert_eq!(on, downsample_indices(&a.samples).len());
        assert_eq!(m.segments.len(), 3);
        assert_eq!(m, synthesize(&a, &b, 42).unwrap());
        assert_eq!(m.intention, "intention a");
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = session("a", &["A"]);
        let sa = segment(&a);
        assert_eq!(
            synthesize(&a, &sa, 1),
            Err(BenchError::Unsegmented("a".into()))
        );
        assert_eq!(
            synthesize(&sa, &sa, 1),
            Err(BenchError::SameSession("a".into()))
        );
        assert_eq!(
            synth_corpus(&[sa], 3, 1),
            Err(BenchError::TooFewSessions(1))
        );
    }

    #[test]
    fn downsampling_keeps_first_of_bucket() {
        let s = session("a", &["A"; 7]);
        assert_eq!(downsample_indices(&s.samples), vec![0, 2, 4, 6]);
    }
}
