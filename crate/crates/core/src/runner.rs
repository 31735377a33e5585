//! Drives one session: scores samples, steps the engine and records the timeline.

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::detector::{self, DetectionRequest};
use crate::domain::{
    ActivitySample, Classification, DistractionAssessment, FeedbackEvent, IntentionProfile, Millis,
    NotificationEvent, NotificationKind, RefinementNote, Score, ScoringErrorRecord,
    SessionTimeline, StateTransition, Verdict,
};
use crate::engine::{Engine, EngineConfig, EngineError, EngineState};
use crate::gateway::Gateway;
use crate::refiner::{self, RefinerConfig, ReflectionRequest};

#[derive(Debug, Error, PartialEq)]
pub enum RunnerError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("sample timestamp {now} is not after {last}")]
    NonMonotonicSample { now: Millis, last: Millis },
    #[error("unknown notification {0}")]
    UnknownNotification(u64),
    #[error("notification {0} already has feedback")]
    DuplicateFeedback(u64),
    #[error("alignment rating {0} outside 1..=5")]
    InvalidRating(u8),
}

/// Produces an assessment for one sample.
pub trait Scorer: Send + Sync {
    fn assess(
        &self,
        profile: &IntentionProfile,
        sample: &ActivitySample,
    ) -> Result<DistractionAssessment, String>;

    /// Turns a verdict on a judged sample into a refinement note, if supported.
    fn reflect(
        &self,
        _profile: &IntentionProfile,
        _sample: &ActivitySample,
        _prior: &DistractionAssessment,
        _feedback: &FeedbackEvent,
    ) -> Option<RefinementNote> {
        None
    }
}

/// Scores through the detector prompt and a gateway.
#[derive(Clone, Debug)]
pub struct DetectorScorer {
    pub gateway: Arc<Gateway>,
    pub threshold: f64,
    /// Send application and URL lines (live mode).
    pub include_metadata: bool,
    /// Base directory for relative screenshot paths.
    pub image_root: Option<PathBuf>,
    pub refiner: RefinerConfig,
}

impl DetectorScorer {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Self {
            gateway,
            threshold: crate::domain::DEFAULT_THRESHOLD,
            include_metadata: true,
            image_root: None,
            refiner: RefinerConfig::default(),
        }
    }

    fn image(&self, sample: &ActivitySample) -> Option<crate::gateway::ImageAttachment> {
        let redaction = self.gateway.config().redaction_enabled;
        match detector::load_image(sample, self.image_root.as_deref(), redaction) {
            Ok(img) => img,
            Err(e) => {
                tracing::warn!(error = %e, "screenshot unusable; scoring from metadata only");
                None
            }
        }
    }
}

impl Scorer for DetectorScorer {
    fn assess(
        &self,
        profile: &IntentionProfile,
        sample: &ActivitySample,
    ) -> Result<DistractionAssessment, String> {
        let request = DetectionRequest {
            profile,
            sample,
            image: self.image(sample),
            now: sample.timestamp,
            threshold: self.threshold,
            include_metadata: self.include_metadata,
        };
        detector::assess(&self.gateway, &request).map_err(|e| e.to_string())
    }

    fn reflect(
        &self,
        profile: &IntentionProfile,
        sample: &ActivitySample,
        prior: &DistractionAssessment,
        feedback: &FeedbackEvent,
    ) -> Option<RefinementNote> {
        let request = ReflectionRequest {
            profile,
            prior,
            feedback,
            sample: self.include_metadata.then_some(sample),
            image: self.image(sample),
        };
        match refiner::reflect(&self.gateway, &request, &self.refiner) {
            Ok(note) => note,
            Err(e) => {
                tracing::warn!(error = %e, "reflection failed");
                None
            }
        }
    }
}

/// What one ingested sample produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub assessment: DistractionAssessment,
    pub notifications: Vec<NotificationEvent>,
    pub transition: Option<StateTransition>,
    pub scoring_error: Option<String>,
}

/// Incremental session state shared by the batch runner and the service.
#[derive(Clone, Debug)]
pub struct SessionRunner {
    engine: Engine,
    state: EngineState,
    timeline: SessionTimeline,
}

impl SessionRunner {
    pub fn new(profile: IntentionProfile, config: EngineConfig) -> Result<Self, RunnerError> {
        let engine = Engine::new(config)?;
        let state = engine.init();
        Ok(Self {
            engine,
            state,
            timeline: SessionTimeline {
                session_id: profile.session_id.clone(),
                intention: profile,
                samples: Vec::new(),
                assessments: Vec::new(),
                notifications: Vec::new(),
                feedback: Vec::new(),
                alignment_rating: None,
                transitions: Vec::new(),
                scoring_errors: Vec::new(),
            },
        })
    }

    pub fn profile(&self) -> &IntentionProfile {
        &self.timeline.intention
    }

    pub fn timeline(&self) -> &SessionTimeline {
        &self.timeline
    }

    pub fn engine_state(&self) -> &EngineState {
        &self.state
    }

    pub fn confirmed_state(&self) -> Classification {
        self.state.confirmed_state
    }

    pub fn last_timestamp(&self) -> Option<Millis> {
        self.timeline.samples.last().map(|s| s.timestamp)
    }

    /// Checks that `timestamp` may follow the samples seen so far.
    pub fn check_timestamp(&self, timestamp: Millis) -> Result<(), RunnerError> {
        match self.last_timestamp() {
            Some(last) if timestamp <= last => Err(RunnerError::NonMonotonicSample {
                now: timestamp,
                last,
            }),
            _ => Ok(()),
        }
    }

    /// Notes created during the session apply to later scoring only.
    pub fn add_refinement(&mut self, note: RefinementNote) {
        self.timeline.intention.refinements.push(note);
        self.timeline
            .intention
            .refinements
            .sort_by_key(|n| n.created_at);
    }

    /// Records a scored sample. A scoring failure carries the previous
    /// classification forward (on-task before any assessment exists).
    pub fn ingest(
        &mut self,
        sample: ActivitySample,
        scored: Result<DistractionAssessment, String>,
    ) -> Result<StepReport, RunnerError> {
        self.check_timestamp(sample.timestamp)?;
        let now = sample.timestamp;
        let (assessment, scoring_error) = match scored {
            Ok(a) => (a, None),
            Err(e) => {
                let carried = match self.timeline.assessments.last() {
                    Some(prev) => DistractionAssessment {
                        rationale: format!("scoring failed; carried forward: {e}"),
                        ..prev.clone()
                    },
                    None => DistractionAssessment::new(
                        Score::MIN,
                        self.engine.config().threshold,
                        format!("scoring failed; presumed on-task: {e}"),
                        "",
                    ),
                };
                self.timeline.scoring_errors.push(ScoringErrorRecord {
                    sample_index: self.timeline.samples.len(),
                    timestamp: now,
                    error: e.clone(),
                });
                (carried, Some(e))
            }
        };
        let next_id = self.timeline.notifications.len() as u64;
        let outcome = self.engine.step(&self.state, &assessment, now, next_id)?;
        self.state = outcome.state;
        self.timeline.samples.push(sample);
        self.timeline.assessments.push(assessment.clone());
        self.timeline
            .notifications
            .extend(outcome.notifications.iter().cloned());
        if let Some(t) = &outcome.transition {
            self.timeline.transitions.push(t.clone());
        }
        Ok(StepReport {
            assessment,
            notifications: outcome.notifications,
            transition: outcome.transition,
            scoring_error,
        })
    }

    /// Scores and ingests a sample with `scorer`.
    pub fn observe(
        &mut self,
        sample: ActivitySample,
        scorer: &dyn Scorer,
    ) -> Result<StepReport, RunnerError> {
        self.check_timestamp(sample.timestamp)?;
        let scored = scorer.assess(self.profile(), &sample);
        self.ingest(sample, scored)
    }

    /// The notification and the sample it was raised on.
    pub fn notification_context(
        &self,
        id: u64,
    ) -> Option<(&NotificationEvent, &ActivitySample, &DistractionAssessment)> {
        let n = self.timeline.notifications.get(id as usize)?;
        let idx = self
            .timeline
            .samples
            .iter()
            .position(|s| s.timestamp == n.timestamp)?;
        Some((
            n,
            &self.timeline.samples[idx],
            &self.timeline.assessments[idx],
        ))
    }

    /// Validates and records feedback. Each notification takes one verdict.
    pub fn record_feedback(&mut self, feedback: FeedbackEvent) -> Result<(), RunnerError> {
        let id = feedback.target_notification;
        if id as usize >= self.timeline.notifications.len() {
            return Err(RunnerError::UnknownNotification(id));
        }
        if self
            .timeline
            .feedback
            .iter()
            .any(|f| f.target_notification == id)
        {
            return Err(RunnerError::DuplicateFeedback(id));
        }
        self.timeline.feedback.push(feedback);
        Ok(())
    }

    /// Records feedback and, for verdicts that warrant it, reflects and adds
    /// the resulting note. Returns the note, if one was created.
    pub fn feedback(
        &mut self,
        feedback: FeedbackEvent,
        scorer: &dyn Scorer,
    ) -> Result<Option<RefinementNote>, RunnerError> {
        self.record_feedback(feedback.clone())?;
        let note = self
            .notification_context(feedback.target_notification)
            .and_then(|(_, sample, prior)| {
                scorer.reflect(self.profile(), sample, prior, &feedback)
            });
        if let Some(n) = &note {
            self.add_refinement(n.clone());
        }
        Ok(note)
    }

    pub fn finish(mut self, rating: Option<u8>) -> Result<SessionTimeline, RunnerError> {
        if let Some(r) = rating {
            if !(1..=5).contains(&r) {
                return Err(RunnerError::InvalidRating(r));
            }
        }
        self.timeline.alignment_rating = rating;
        Ok(self.timeline)
    }
}

/// Runs a whole session with no feedback.
pub fn run_session(
    profile: IntentionProfile,
    samples: impl IntoIterator<Item = ActivitySample>,
    scorer: &dyn Scorer,
    config: EngineConfig,
) -> Result<SessionTimeline, RunnerError> {
    let mut runner = SessionRunner::new(profile, config)?;
    for s in samples {
        runner.observe(s, scorer)?;
    }
    runner.finish(None)
}

/// Differences between a recorded timeline and its re-run.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub timeline: SessionTimeline,
    pub divergences: Vec<String>,
}

/// Re-scores a recorded timeline's samples and reruns the engine.
///
/// Each refinement applies to samples strictly after its creation time, as it
/// did live. Recorded feedback is carried over unchanged.
pub fn replay(
    recorded: &SessionTimeline,
    scorer: &dyn Scorer,
    config: EngineConfig,
) -> Result<ReplayReport, RunnerError> {
    let mut base = recorded.intention.clone();
    let notes = std::mem::take(&mut base.refinements);
    let mut runner = SessionRunner::new(base, config)?;
    let mut pending = notes.into_iter().peekable();
    for sample in &recorded.samples {
        while let Some(n) = pending.next_if(|n| n.created_at < sample.timestamp) {
            runner.add_refinement(n);
        }
        runner.observe(sample.clone(), scorer)?;
    }
    runner.timeline.intention.refinements.extend(pending);
    runner.timeline.feedback = recorded.feedback.clone();
    runner.timeline.alignment_rating = recorded.alignment_rating;
    let timeline = runner.timeline;

    let mut divergences = Vec::new();
    for (i, (old, new)) in recorded
        .assessments
        .iter()
        .zip(&timeline.assessments)
        .enumerate()
    {
        if old.score != new.score || old.classification != new.classification {
            divergences.push(format!(
                "sample {i} at {}: recorded score {} ({}), replayed {} ({})",
                recorded.samples[i].timestamp,
                old.score,
                old.classification,
                new.score,
                new.classification
            ));
        }
    }
    if recorded.assessments.len() != timeline.assessments.len() {
        divergences.push(format!(
            "recorded {} assessments, replayed {}",
            recorded.assessments.len(),
            timeline.assessments.len()
        ));
    }
    let key = |n: &NotificationEvent| (n.timestamp, n.kind);
    let old: Vec<(Millis, NotificationKind)> = recorded.notifications.iter().map(key).collect();
    let new: Vec<(Millis, NotificationKind)> = timeline.notifications.iter().map(key).collect();
    if old != new {
        divergences.push(format!(
            "notifications differ: recorded {old:?}, replayed {new:?}"
        ));
    }
    Ok(ReplayReport {
        timeline,
        divergences,
    })
}

/// Whether `verdict` on notification kind `kind` marks a false alarm.
pub fn is_false_alarm(kind: NotificationKind, verdict: Verdict) -> bool {
    kind.judged_state().is_off_task() && verdict == Verdict::Incorrect
}
