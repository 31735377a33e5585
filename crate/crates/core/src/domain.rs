//! Shared data types for sessions, assessments, feedback and benchmark data.
//!
//! Everything here is an immutable value object. Serialization is JSON with
//! snake_case keys; log files hold one entity per line. Timestamps are integer
//! milliseconds since the Unix epoch (UTC).

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Milliseconds since the Unix epoch.
pub type Millis = i64;

/// How long a refinement note stays active after it is created.
pub const RETENTION_WINDOW_MS: Millis = 86_400_000;

/// Maximum number of clarification exchanges per session.
pub const MAX_QA_PAIRS: usize = 2;

/// Number of expanded activity variants produced by clarification.
pub const EXPANSION_COUNT: usize = 10;

/// Default on/off-task decision threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A distraction score restricted to the grid {0.0, 0.2, ..., 1.0}.
///
/// Stored as a level in `0..=5`. Reals are snapped to the nearest grid value,
/// with exact midpoints rounding up (0.5 becomes 0.6).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(u8);

impl Score {
    pub const GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    pub const MIN: Score = Score(0);
    pub const MAX: Score = Score(5);

    /// Tolerance for treating a value as lying exactly on a midpoint.
    const MIDPOINT_EPS: f64 = 1e-9;

    pub fn from_level(level: u8) -> Option<Self> {
        (level <= 5).then_some(Self(level))
    }

    /// Snaps an arbitrary real onto the grid. Returns `None` for NaN/infinite input.
    pub fn snap(raw: f64) -> Option<Self> {
        if !raw.is_finite() {
            return None;
        }
        let clamped = raw.clamp(0.0, 1.0);
        let level = (clamped * 5.0 + 0.5 + Self::MIDPOINT_EPS).floor();
        Some(Self(level.clamp(0.0, 5.0) as u8))
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        Self::GRID[self.0 as usize]
    }

    /// Moves the score by `delta` grid steps, saturating at both ends.
    pub fn shifted(self, delta: i32) -> Self {
        Self((self.0 as i32 + delta).clamp(0, 5) as u8)
    }

    pub fn classify(self, threshold: f64) -> Classification {
        if self.value() >= threshold {
            Classification::OffTask
        } else {
            Classification::OnTask
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = f64::deserialize(deserializer)?;
        Score::snap(raw).ok_or_else(|| serde::de::Error::custom("score must be a finite number"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    OnTask,
    OffTask,
}

impl Classification {
    pub fn opposite(self) -> Self {
        match self {
            Self::OnTask => Self::OffTask,
            Self::OffTask => Self::OnTask,
        }
    }

    pub fn is_off_task(self) -> bool {
        self == Self::OffTask
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OnTask => "on-task",
            Self::OffTask => "off-task",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// Text placed in the answer slot when the user submits an empty answer.
pub const SKIPPED_ANSWER: &str = "(skipped)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentDirection {
    /// Judge matching activity as more aligned (lower score).
    RaiseAlignment,
    /// Judge matching activity as less aligned (higher score).
    LowerAlignment,
}

impl AlignmentDirection {
    /// Reads the direction out of a policy sentence such as
    /// "Output high alignment (low score output) for ... when detected."
    ///
    /// Returns `None` when the sentence names neither direction or both.
    pub fn from_policy_text(text: &str) -> Option<Self> {
        let lower = text.to_lowercase();
        let raise = [
            "high alignment",
            "higher alignment",
            "low score",
            "lower score",
        ]
        .iter()
        .any(|p| lower.contains(p));
        let lowered = [
            "low alignment",
            "lower alignment",
            "high score",
            "higher score",
        ]
        .iter()
        .any(|p| lower.contains(p));
        match (raise, lowered) {
            (true, false) => Some(Self::RaiseAlignment),
            (false, true) => Some(Self::LowerAlignment),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementNote {
    pub created_at: Millis,
    pub activity_description: String,
    pub implicit_intention: String,
    pub policy_adjustment: String,
    pub direction: AlignmentDirection,
}

impl RefinementNote {
    pub fn is_active_at(&self, now: Millis) -> bool {
        self.created_at <= now && now - self.created_at <= RETENTION_WINDOW_MS
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentionProfile {
    pub session_id: SessionId,
    pub stated_intention: String,
    #[serde(default)]
    pub qa_pairs: Vec<QaPair>,
    #[serde(default)]
    pub expanded_activities: Vec<String>,
    #[serde(default)]
    pub refinements: Vec<RefinementNote>,
}

impl IntentionProfile {
    pub fn new(session_id: SessionId, stated_intention: impl Into<String>) -> Self {
        Self {
            session_id,
            stated_intention: stated_intention.into(),
            qa_pairs: Vec::new(),
            expanded_activities: Vec::new(),
            refinements: Vec::new(),
        }
    }

    /// Copy of this profile with clarification context removed.
    pub fn without_clarification(&self) -> Self {
        Self {
            qa_pairs: Vec::new(),
            expanded_activities: Vec::new(),
            ..self.clone()
        }
    }
}

/// One annotated text box on a screenshot.
///
/// Benchmark and test data supply these instead of running OCR; the redaction
/// pass and the offline mock both read them as the screen's text layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRegion {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub redacted: bool,
}

/// Where a sample's screenshot lives.
///
/// Serialized as a plain string (relative path), `{"inline": "<base64>"}`, or `null`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScreenshotRef {
    Path(String),
    Inline { inline: String },
    Absent,
}

impl ScreenshotRef {
    pub fn is_absent(&self) -> bool {
        matches!(self, Self::Absent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySample {
    pub timestamp: Millis,
    pub screenshot_ref: ScreenshotRef,
    #[serde(default)]
    pub app_title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub screen_text: Vec<TextRegion>,
}

impl ActivitySample {
    /// The same observation with application title and URL removed.
    pub fn without_metadata(&self) -> Self {
        Self {
            app_title: String::new(),
            url: None,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistractionAssessment {
    pub score: Score,
    pub rationale: String,
    pub classification: Classification,
    pub message: String,
}

impl DistractionAssessment {
    pub fn new(
        score: Score,
        threshold: f64,
        rationale: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Self {
            score,
            rationale: rationale.into(),
            classification: score.classify(threshold),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    OffTaskNudge,
    OnTaskPraise,
    OffTaskReminder,
}

impl NotificationKind {
    /// The confirmed state the user was judged to be in when this fired.
    pub fn judged_state(self) -> Classification {
        match self {
            Self::OnTaskPraise => Classification::OnTask,
            Self::OffTaskNudge | Self::OffTaskReminder => Classification::OffTask,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotificationEvent {
    /// Position of this notification within its session.
    pub id: u64,
    pub timestamp: Millis,
    pub kind: NotificationKind,
    pub message: String,
    pub assessment_score: Score,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub timestamp: Millis,
    /// `id` of the notification being judged.
    pub target_notification: u64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateTransition {
    pub timestamp: Millis,
    pub from: Classification,
    pub to: Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringErrorRecord {
    pub sample_index: usize,
    pub timestamp: Millis,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTimeline {
    pub session_id: SessionId,
    pub intention: IntentionProfile,
    pub samples: Vec<ActivitySample>,
    pub assessments: Vec<DistractionAssessment>,
    pub notifications: Vec<NotificationEvent>,
    pub feedback: Vec<FeedbackEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_rating: Option<u8>,
    #[serde(default)]
    pub transitions: Vec<StateTransition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scoring_errors: Vec<ScoringErrorRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Clarification {
    #[serde(default)]
    pub qa_pairs: Vec<QaPair>,
    #[serde(default)]
    pub expanded_activities: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryReason {
    AppSwitch,
    UrlChange,
    SessionEdge,
}

/// Half-open sample index range `[start, end)` within a focused session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub boundary_reason: BoundaryReason,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusedSession {
    pub id: String,
    pub instruction: String,
    pub relabeled_intention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<Clarification>,
    pub samples: Vec<ActivitySample>,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentSource {
    A,
    B,
}

impl SegmentSource {
    pub fn label(self) -> Classification {
        match self {
            Self::A => Classification::OnTask,
            Self::B => Classification::OffTask,
        }
    }
}

/// A source segment placed into a mixed session, with the tick range it produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedSegment {
    pub source: SegmentSource,
    pub segment_index: usize,
    pub tick_start: usize,
    pub tick_end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub sample: ActivitySample,
    pub label: Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedSession {
    pub id: String,
    pub intention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<Clarification>,
    pub segments: Vec<MixedSegment>,
    pub ticks: Vec<Tick>,
    pub seed: u64,
    pub source_a: String,
    pub source_b: String,
}

/// Spacing between consecutive benchmark ticks.
pub const TICK_SPACING_MS: Millis = 2000;

/// Invariant checks. Violations are returned as data; checking never fails.
pub trait Validate {
    fn validate(&self) -> Vec<String>;

    fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

fn check_qa_and_expansions(qa: &[QaPair], expansions: &[String], out: &mut Vec<String>) {
    if qa.len() > MAX_QA_PAIRS {
        out.push(format!("qa_pairs exceeds {MAX_QA_PAIRS}"));
    }
    if !expansions.is_empty() && expansions.len() != EXPANSION_COUNT {
        out.push(format!(
            "expanded_activities must be empty or exactly {EXPANSION_COUNT} entries, got {}",
            expansions.len()
        ));
    }
    if expansions.iter().any(|e| e.trim().is_empty()) {
        out.push("expanded_activities contains an empty entry".into());
    }
}

impl Validate for RefinementNote {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        match AlignmentDirection::from_policy_text(&self.policy_adjustment) {
            Some(d) if d == self.direction => {}
            Some(_) => out.push("direction inconsistent with policy_adjustment".into()),
            None => out.push("policy_adjustment names no alignment direction".into()),
        }
        out
    }
}

impl Validate for IntentionProfile {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.stated_intention.trim().is_empty() {
            out.push("stated_intention is empty".into());
        }
        check_qa_and_expansions(&self.qa_pairs, &self.expanded_activities, &mut out);
        if self
            .refinements
            .windows(2)
            .any(|w| w[1].created_at < w[0].created_at)
        {
            out.push("refinements not ordered by creation time".into());
        }
        for (i, note) in self.refinements.iter().enumerate() {
            out.extend(
                note.validate()
                    .into_iter()
                    .map(|v| format!("refinements[{i}]: {v}")),
            );
        }
        out
    }
}

impl Validate for ActivitySample {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(url) = &self.url {
            if url.trim().is_empty() {
                out.push("url present but empty".into());
            }
        }
        if let ScreenshotRef::Path(p) = &self.screenshot_ref {
            if p.trim().is_empty() {
                out.push("screenshot_ref path is empty".into());
            }
        }
        if self
            .screen_text
            .iter()
            .any(|r| r.width == 0 || r.height == 0)
        {
            out.push("screen_text contains a zero-area region".into());
        }
        out
    }
}

impl Validate for DistractionAssessment {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.score.classify(DEFAULT_THRESHOLD) != self.classification {
            out.push("classification inconsistent with score".into());
        }
        out
    }
}

impl Validate for FeedbackEvent {
    fn validate(&self) -> Vec<String> {
        Vec::new()
    }
}

fn check_monotone(samples: &[ActivitySample], out: &mut Vec<String>) {
    if let Some(i) = samples
        .windows(2)
        .position(|w| w[1].timestamp <= w[0].timestamp)
    {
        out.push(format!(
            "sample timestamps not strictly increasing at index {}",
            i + 1
        ));
    }
}

impl Validate for SessionTimeline {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.intention.session_id != self.session_id {
            out.push("intention belongs to a different session".into());
        }
        out.extend(
            self.intention
                .validate()
                .into_iter()
                .map(|v| format!("intention: {v}")),
        );
        if self.assessments.len() != self.samples.len() {
            out.push(format!(
                "assessments ({}) not aligned with samples ({})",
                self.assessments.len(),
                self.samples.len()
            ));
        }
        check_monotone(&self.samples, &mut out);
        for (i, s) in self.samples.iter().enumerate() {
            out.extend(
                s.validate()
                    .into_iter()
                    .map(|v| format!("samples[{i}]: {v}")),
            );
        }
        for (i, a) in self.assessments.iter().enumerate() {
            out.extend(
                a.validate()
                    .into_iter()
                    .map(|v| format!("assessments[{i}]: {v}")),
            );
        }
        if let Some(r) = self.alignment_rating {
            if !(1..=5).contains(&r) {
                out.push(format!("alignment_rating {r} outside 1..=5"));
            }
        }
        for (i, n) in self.notifications.iter().enumerate() {
            if n.id != i as u64 {
                out.push(format!("notification {i} has id {}", n.id));
            }
        }
        for f in &self.feedback {
            if f.target_notification as usize >= self.notifications.len() {
                out.push(format!(
                    "feedback targets unknown notification {}",
                    f.target_notification
                ));
            }
        }
        out
    }
}

impl Validate for FocusedSession {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(c) = &self.clarification {
            check_qa_and_expansions(&c.qa_pairs, &c.expanded_activities, &mut out);
        }
        check_monotone(&self.samples, &mut out);
        if !self.segments.is_empty() {
            let mut cursor = 0;
            for (i, seg) in self.segments.iter().enumerate() {
                if seg.start != cursor || seg.end <= seg.start {
                    out.push(format!("segment {i} does not continue the partition"));
                    break;
                }
                cursor = seg.end;
            }
            if cursor != self.samples.len() {
                out.push("segments do not cover every sample".into());
            }
        }
        out
    }
}

impl Validate for MixedSession {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(c) = &self.clarification {
            check_qa_and_expansions(&c.qa_pairs, &c.expanded_activities, &mut out);
        }
        if let Some(i) = self
            .ticks
            .windows(2)
            .position(|w| w[1].sample.timestamp - w[0].sample.timestamp < TICK_SPACING_MS)
        {
            out.push(format!(
                "ticks closer than {TICK_SPACING_MS} ms at index {}",
                i + 1
            ));
        }
        let mut cursor = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.tick_start != cursor || seg.tick_end < seg.tick_start {
                out.push(format!(
                    "segment {i} tick range does not continue the partition"
                ));
                break;
            }
            cursor = seg.tick_end;
            let expected = seg.source.label();
            if self.ticks[seg.tick_start..seg.tick_end.min(self.ticks.len())]
                .iter()
                .any(|t| t.label != expected)
            {
                out.push(format!("segment {i} has ticks not labeled {expected}"));
            }
        }
        if cursor != self.ticks.len() {
            out.push("segments do not cover every tick".into());
        }
        out
    }
}
