//! Offline evaluation over labeled mixed sessions: per-tick classification,
//! simulated feedback, metrics and the clarification x feedback ablation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    ActivitySample, Classification, DistractionAssessment, FeedbackEvent, IntentionProfile, Millis,
    MixedSession, RefinementNote, Score, SessionId, SessionTimeline, Tick, Validate, Verdict,
    DEFAULT_THRESHOLD,
};
use crate::runner::Scorer;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("confusion counts are empty")]
    EmptyCounts,
    #[error("no sessions to evaluate")]
    NoSessions,
    #[error("session {id} is invalid: {reason}")]
    InvalidSession { id: String, reason: String },
    #[error("session {0} has no clarification context")]
    MissingClarification(String),
    #[error("timeline has no assessments")]
    EmptyTimeline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub use_clarification: bool,
    pub use_feedback: bool,
    pub threshold: f64,
    /// Send application and URL context. Off in benchmark mode.
    pub include_metadata: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            use_clarification: false,
            use_feedback: false,
            threshold: DEFAULT_THRESHOLD,
            include_metadata: false,
        }
    }
}

/// Scores a labeled tick. Anything that scores plain samples qualifies; the
/// oracle additionally reads the label.
pub trait TickScorer: Send + Sync {
    fn score_tick(
        &self,
        profile: &IntentionProfile,
        sample: &ActivitySample,
        label: Classification,
        threshold: f64,
    ) -> Result<DistractionAssessment, String>;

    fn reflect_tick(
        &self,
        profile: &IntentionProfile,
        sample: &ActivitySample,
        prior: &DistractionAssessment,
        feedback: &FeedbackEvent,
    ) -> Option<RefinementNote>;
}

impl<S: Scorer + ?Sized> TickScorer for S {
    fn score_tick(
        &self,
        profile: &IntentionProfile,
        sample: &ActivitySample,
        _label: Classification,
        _threshold: f64,
    ) -> Result<DistractionAssessment, String> {
        self.assess(profile, sample)
    }

    fn reflect_tick(
        &self,
        profile: &IntentionProfile,
        sample: &ActivitySample,
        prior: &DistractionAssessment,
        feedback: &FeedbackEvent,
    ) -> Option<RefinementNote> {
        self.reflect(profile, sample, prior, feedback)
    }
}

/// Emits the ground-truth label as an extreme score.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleScorer;

impl OracleScorer {
    pub fn score_for(label: Classification, threshold: f64) -> DistractionAssessment {
        let score = match label {
            Classification::OffTask => Score::MAX,
            Classification::OnTask => Score::MIN,
        };
        DistractionAssessment::new(score, threshold, "ground truth", "")
    }
}

// Not a `Scorer`, so it can read labels without conflicting with the blanket impl.
impl TickScorer for OracleScorer {
    fn score_tick(
        &self,
        _profile: &IntentionProfile,
        _sample: &ActivitySample,
        label: Classification,
        threshold: f64,
    ) -> Result<DistractionAssessment, String> {
        Ok(Self::score_for(label, threshold))
    }

    fn reflect_tick(
        &self,
        _profile: &IntentionProfile,
        _sample: &ActivitySample,
        _prior: &DistractionAssessment,
        _feedback: &FeedbackEvent,
    ) -> Option<RefinementNote> {
        None
    }
}

/// Scores every sample the same.
#[derive(Clone, Copy, Debug)]
pub struct ConstantScorer {
    pub score: Score,
    pub threshold: f64,
}

impl Scorer for ConstantScorer {
    fn assess(
        &self,
        _profile: &IntentionProfile,
        _sample: &ActivitySample,
    ) -> Result<DistractionAssessment, String> {
        Ok(DistractionAssessment::new(
            self.score,
            self.threshold,
            "constant",
            "",
        ))
    }
}

/// Confusion counts with OffTask as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, label: Classification, predicted: Classification) {
        use Classification::*;
        match (label, predicted) {
            (OffTask, OffTask) => self.tp += 1,
            (OnTask, OffTask) => self.fp += 1,
            (OffTask, OnTask) => self.fn_ += 1,
            (OnTask, OnTask) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    /// No predicted positives; precision reported as 0.
    pub precision_undefined: bool,
    /// No actual positives; recall reported as 0.
    pub recall_undefined: bool,
    /// No actual negatives; the true-negative rate counts as 0.
    pub specificity_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(c: &ConfusionCounts) -> Result<Metrics, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyCounts);
    }
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let (tnr, specificity_undefined) = ratio(c.tn, c.tn + c.fp);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
        balanced_accuracy: (recall + tnr) / 2.0,
        precision_undefined,
        recall_undefined,
        specificity_undefined,
    })
}

/// Fraction of assessments classified off-task.
pub fn offtask_ratio(timeline: &SessionTimeline) -> Result<f64, EvalError> {
    let n = timeline.assessments.len();
    if n == 0 {
        return Err(EvalError::EmptyTimeline);
    }
    let off = timeline
        .assessments
        .iter()
        .filter(|a| a.classification.is_off_task())
        .count();
    Ok(off as f64 / n as f64)
}

/// One audited tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickTrace {
    pub session_id: String,
    pub tick: usize,
    pub timestamp: Millis,
    pub label: Classification,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub active_refinements: usize,
    /// A refinement note was created from this tick's simulated feedback.
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session_id: String,
    pub counts: ConfusionCounts,
    pub scoring_errors: usize,
    pub refinements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub counts: ConfusionCounts,
    pub sessions: Vec<SessionResult>,
    pub trace: Vec<TickTrace>,
}

impl EvalReport {
    pub fn metrics(&self) -> Result<Metrics, EvalError> {
        metrics(&self.counts)
    }

    pub fn scoring_errors(&self) -> usize {
        self.sessions.iter().map(|s| s.scoring_errors).sum()
    }
}

fn session_profile(session: &MixedSession, use_clarification: bool) -> IntentionProfile {
    let mut profile = IntentionProfile::new(SessionId(session.id.clone()), &session.intention);
    if use_clarification {
        if let Some(c) = &session.clarification {
            profile.qa_pairs = c.qa_pairs.clone();
            profile.expanded_activities = c.expanded_activities.clone();
        }
    }
    profile
}

fn evaluate_session(
    session: &MixedSession,
    config: &EvalConfig,
    scorer: &dyn TickScorer,
) -> (SessionResult, Vec<TickTrace>) {
    // Refinements live only within one session.
    let mut profile = session_profile(session, config.use_clarification);
    let mut counts = ConfusionCounts::default();
    let mut trace = Vec::with_capacity(session.ticks.len());
    let mut scoring_errors = 0;
    for (i, Tick { sample, label }) in session.ticks.iter().enumerate() {
        let sample = if config.include_metadata {
            sample.clone()
        } else {
            sample.without_metadata()
        };
        let active = profile
            .refinements
            .iter()
            .filter(|n| n.is_active_at(sample.timestamp))
            .count();
        let mut entry = TickTrace {
            session_id: session.id.clone(),
            tick: i,
            timestamp: sample.timestamp,
            label: *label,
            score: None,
            predicted: None,
            error: None,
            active_refinements: active,
            refined: false,
        };
        match scorer.score_tick(&profile, &sample, *label, config.threshold) {
            Ok(assessment) => {
                let predicted = assessment.classification;
                counts.record(*label, predicted);
                entry.score = Some(assessment.score);
                entry.predicted = Some(predicted);
                let false_positive = predicted.is_off_task() && !label.is_off_task();
                if config.use_feedback && false_positive {
                    let feedback = FeedbackEvent {
                        timestamp: sample.timestamp,
                        target_notification: i as u64,
                        verdict: Verdict::Incorrect,
                        free_text: None,
                    };
                    if let Some(note) =
                        scorer.reflect_tick(&profile, &sample, &assessment, &feedback)
                    {
                        profile.refinements.push(note);
                        entry.refined = true;
                    }
                }
            }
            Err(e) => {
                scoring_errors += 1;
                entry.error = Some(e);
            }
        }
        trace.push(entry);
    }
    let result = SessionResult {
        session_id: session.id.clone(),
        counts,
        scoring_errors,
        refinements: profile.refinements.len(),
    };
    (result, trace)
}

/// Scores every tick of every session in temporal order. Sessions run in
/// parallel; results keep input order.
pub fn evaluate(
    sessions: &[MixedSession],
    config: &EvalConfig,
    scorer: &dyn TickScorer,
) -> Result<EvalReport, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::NoSessions);
    }
    for s in sessions {
        let errors = s.validate();
        if !errors.is_empty() {
            return Err(EvalError::InvalidSession {
                id: s.id.clone(),
                reason: errors.join("; "),
            });
        }
    }
    let results: Vec<(SessionResult, Vec<TickTrace>)> = sessions
        .par_iter()
        .map(|s| evaluate_session(s, config, scorer))
        .collect();
    let mut counts = ConfusionCounts::default();
    let mut per_session = Vec::with_capacity(results.len());
    let mut trace = Vec::new();
    for (r, t) in results {
        counts.merge(&r.counts);
        per_session.push(r);
        trace.extend(t);
    }
    Ok(EvalReport {
        config: config.clone(),
        counts,
        sessions: per_session,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub use_clarification: bool,
    pub use_feedback: bool,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub scoring_errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    #[serde(skip)]
    pub traces: Vec<Vec<TickTrace>>,
}

/// Axis order of the four rows: neither, clarification, feedback, both.
pub const ABLATION_AXES: [(bool, bool); 4] =
    [(false, false), (true, false), (false, true), (true, true)];

pub fn report_row(report: &EvalReport) -> Result<AblationRow, EvalError> {
    Ok(AblationRow {
        use_clarification: report.config.use_clarification,
        use_feedback: report.config.use_feedback,
        counts: report.counts,
        metrics: report.metrics()?,
        scoring_errors: report.scoring_errors(),
    })
}

/// Runs `evaluate` once per ablation configuration. `base` supplies the
/// threshold and metadata switch.
pub fn ablation_report(
    sessions: &[MixedSession],
    scorer: &dyn TickScorer,
    base: &EvalConfig,
) -> Result<AblationReport, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::NoSessions);
    }
    if let Some(s) = sessions.iter().find(|s| s.clarification.is_none()) {
        return Err(EvalError::MissingClarification(s.id.clone()));
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (use_clarification, use_feedback) in ABLATION_AXES {
        let config = EvalConfig {
            use_clarification,
            use_feedback,
            ..base.clone()
        };
        let report = evaluate(sessions, &config, scorer)?;
        rows.push(report_row(&report)?);
        traces.push(report.trace);
    }
    Ok(AblationReport { rows, traces })
}

fn mark(on: bool) -> &'static str {
    if on {
        "yes"
    } else {
        "-"
    }
}

pub fn rows_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "clarification",
        "feedback",
        "tp",
        "fp",
        "fn",
        "tn",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "balanced_accuracy",
        "scoring_errors",
    ])
    .expect("in-memory write");
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.use_clarification.to_string(),
            r.use_feedback.to_string(),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.fn_.to_string(),
            r.counts.tn.to_string(),
            format!("{:.6}", m.accuracy),
            format!("{:.6}", m.precision),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.f1),
            format!("{:.6}", m.balanced_accuracy),
            r.scoring_errors.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Human-readable ablation table.
pub fn rows_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<13} {:<8} {:>8} {:>9} {:>8} {:>8} {:>8}",
        "Clarification", "Feedback", "Accuracy", "Precision", "Recall", "F1", "BalAcc"
    );
    for r in rows {
        let m = &r.metrics;
        let flag = |undefined: bool| if undefined { "*" } else { " " };
        let _ = writeln!(
            out,
            "{:<13} {:<8} {:>8.3} {:>8.3}{} {:>7.3}{} {:>8.3} {:>8.3}",
            mark(r.use_clarification),
            mark(r.use_feedback),
            m.accuracy,
            m.precision,
            flag(m.precision_undefined),
            m.recall,
            flag(m.recall_undefined),
            m.f1,
            m.balanced_accuracy,
        );
    }
    if rows
        .iter()
        .any(|r| r.metrics.precision_undefined || r.metrics.recall_undefined)
    {
        let _ = writeln!(out, "* denominator was zero; reported as 0");
    }
    out
}

pub fn trace_jsonl(trace: &[TickTrace]) -> String {
    trace.iter().map(crate::jsonl::to_line).collect()
}
