//! Session registry and the synchronous operations behind each endpoint.
//!
//! Every operation holds its session's lock from validation through the
//! fsynced log append to event broadcast, so per-session handling is
//! serialized and stream order equals emission order.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

use attune_core::clarifier::{Dialogue, DialogueStep};
use attune_core::domain::{
    ActivitySample, Clarification, Classification, DistractionAssessment, FeedbackEvent, Millis,
    NotificationEvent, RefinementNote, ScreenshotRef, SessionTimeline, TextRegion, Validate,
    Verdict,
};
use attune_core::gateway::redact::{contains_pii, redact, REDACTED_TEXT};
use attune_core::gateway::{Gateway, GatewayError};
use attune_core::jsonl;
use attune_core::runner::{DetectorScorer, RunnerError, Scorer};

use crate::config::{valid_user, ServiceConfig};
use crate::session::{LogRecord, Phase, ServerEvent, Session, SessionError};
use crate::store::{IndexEntry, Store, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl From<SessionError> for ServiceError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::WrongPhase { .. } => Self::Conflict(msg),
            SessionError::Runner(RunnerError::UnknownNotification(_)) => Self::NotFound(msg),
            SessionError::Runner(RunnerError::DuplicateFeedback(_)) => Self::Conflict(msg),
            SessionError::Runner(_) | SessionError::Invalid(_) => Self::Unprocessable(msg),
        }
    }
}

pub struct SessionHandle {
    session: Mutex<Session>,
    tx: broadcast::Sender<ServerEvent>,
}

impl SessionHandle {
    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CreateRequest {
    pub stated_intention: String,
    #[serde(default)]
    pub user: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub first_question: Option<String>,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClarifyResponse {
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_question: Option<String>,
    pub expansions_ready: bool,
    pub expanded_activities: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub assessment: DistractionAssessment,
    pub confirmed_state: Classification,
    pub notifications: Vec<NotificationEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring_error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub target_notification: u64,
    pub verdict: Verdict,
    #[serde(default)]
    pub free_text: Option<String>,
    /// Defaults to the session's latest sample time.
    #[serde(default)]
    pub timestamp: Option<Millis>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub feedback: FeedbackEvent,
    pub refinement: Option<RefinementNote>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StopRequest {
    #[serde(default)]
    pub alignment_rating: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub user: String,
    pub stated_intention: String,
    pub created_at: Millis,
    pub phase: Phase,
    pub pending_question: Option<String>,
    pub clarification: Clarification,
    pub confirmed_state: Classification,
    pub samples: usize,
    pub notifications: Vec<NotificationEvent>,
    pub feedback: Vec<FeedbackEvent>,
    pub refinements: Vec<RefinementNote>,
    pub events: u64,
    pub log_records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline: Option<SessionTimeline>,
}

/// What the event stream needs: history after the cursor, and the live feed.
pub struct Subscription {
    pub history: Vec<ServerEvent>,
    pub live: broadcast::Receiver<ServerEvent>,
    pub finished: bool,
}

pub struct AppState {
    config: ServiceConfig,
    store: Store,
    gateway: Arc<Gateway>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

fn now_ms() -> Millis {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as Millis)
        .unwrap_or_default()
}

fn scrub(text: &str) -> String {
    if contains_pii(text) {
        REDACTED_TEXT.to_string()
    } else {
        text.to_string()
    }
}

fn scrub_regions(regions: &[TextRegion]) -> Vec<TextRegion> {
    regions
        .iter()
        .map(|r| {
            if contains_pii(&r.text) {
                TextRegion {
                    text: REDACTED_TEXT.into(),
                    redacted: true,
                    ..r.clone()
                }
            } else {
                r.clone()
            }
        })
        .collect()
}

impl AppState {
    /// Opens the store and replays every persisted session.
    pub fn open(config: ServiceConfig, gateway: Arc<Gateway>) -> Result<Self, ServiceError> {
        let store = Store::open(&config.data_dir)?;
        let state = Self {
            config,
            store,
            gateway,
            sessions: RwLock::new(HashMap::new()),
        };
        state.recover()?;
        Ok(state)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn recover(&self) -> Result<(), ServiceError> {
        let indexed: HashSet<String> = self
            .store
            .read_index()?
            .into_iter()
            .map(|e| e.session_id)
            .collect();
        let mut user_notes: HashMap<String, Vec<RefinementNote>> = HashMap::new();
        for id in self.store.session_ids()? {
            let log = self.store.log_path(&id);
            let records = crate::store::read_repair::<LogRecord>(&log)?.records;
            let Some(first) = records.first() else {
                continue;
            };
            let mut session = Session::create(first).map_err(|e| corrupt(&log, 1, e))?;
            for (i, r) in records.iter().enumerate().skip(1) {
                session
                    .apply(r, &self.config.engine)
                    .map_err(|e| corrupt(&log, i + 1, e))?;
                if let LogRecord::Feedback {
                    refinement: Some(n),
                    ..
                } = r
                {
                    user_notes
                        .entry(session.user.clone())
                        .or_default()
                        .push(n.clone());
                }
            }
            if !indexed.contains(&id) {
                self.store
                    .append(&self.store.index_path(), &index_entry(&session))?;
            }
            if let Some(t) = session.timeline() {
                if !self.store.timeline_path(&id).exists() {
                    self.write_timeline(&id, t)?;
                }
            }
            self.register(session);
        }
        // Notes logged just before a crash may be missing from the user file.
        for (user, notes) in user_notes {
            let have = self.store.user_refinements(&user)?;
            for n in notes.into_iter().filter(|n| !have.contains(n)) {
                self.store.append(&self.store.refinements_path(&user), &n)?;
            }
        }
        Ok(())
    }

    fn register(&self, session: Session) -> Arc<SessionHandle> {
        let (tx, _) = broadcast::channel(self.config.event_buffer);
        let id = session.id.clone();
        let handle = Arc::new(SessionHandle {
            session: Mutex::new(session),
            tx,
        });
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, handle.clone());
        handle
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session {id}")))
    }

    /// Checks, persists, applies and broadcasts one record.
    fn commit(
        &self,
        handle: &SessionHandle,
        session: &mut Session,
        record: LogRecord,
    ) -> Result<Vec<ServerEvent>, ServiceError> {
        session.check(&record)?;
        self.store
            .append(&self.store.log_path(&session.id), &record)?;
        let events = session.apply(&record, &self.config.engine)?;
        for e in &events {
            // No subscribers is fine.
            let _ = handle.tx.send(e.clone());
        }
        Ok(events)
    }

    fn write_timeline(&self, id: &str, t: &SessionTimeline) -> Result<(), ServiceError> {
        let bytes = serde_json::to_vec_pretty(t).expect("timeline serializes");
        Ok(self
            .store
            .write_atomic(&self.store.timeline_path(id), &bytes)?)
    }

    fn scorer(&self) -> DetectorScorer {
        DetectorScorer {
            threshold: self.config.engine.threshold,
            include_metadata: true,
            image_root: self.config.image_root.clone(),
            refiner: self.config.refiner.clone(),
            ..DetectorScorer::new(self.gateway.clone())
        }
    }

    pub fn create(&self, req: CreateRequest) -> Result<CreateResponse, ServiceError> {
        let intention = req.stated_intention.trim();
        if intention.is_empty() {
            return Err(ServiceError::BadRequest("stated_intention is empty".into()));
        }
        let user = req.user.unwrap_or_else(|| self.config.user.clone());
        if !valid_user(&user) {
            return Err(ServiceError::BadRequest(format!("bad user name {user:?}")));
        }
        let mut dialogue = Dialogue::new(intention);
        // An unavailable gateway skips clarification; the session still starts.
        let first_question = dialogue.begin(&self.gateway);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = LogRecord::Created {
            session_id: id.clone(),
            user,
            stated_intention: intention.to_string(),
            created_at: now_ms(),
            first_question: first_question.clone(),
        };
        let session = Session::create(&record)?;
        self.store.append(&self.store.log_path(&id), &record)?;
        self.store
            .append(&self.store.index_path(), &index_entry(&session))?;
        let phase = session.phase;
        self.register(session);
        Ok(CreateResponse {
            session_id: id,
            first_question,
            phase,
        })
    }

    fn clarify_response(session: &Session) -> ClarifyResponse {
        ClarifyResponse {
            phase: session.phase,
            next_question: session.dialogue().pending_question().map(String::from),
            expansions_ready: session.phase != Phase::Clarifying,
            expanded_activities: session.clarification().expanded_activities.clone(),
        }
    }

    pub fn answer(&self, id: &str, answer: &str) -> Result<ClarifyResponse, ServiceError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock();
        session.check(&LogRecord::Skipped {
            clarification: Clarification::default(),
        })?;
        let mut dialogue = session.dialogue().clone();
        let step = dialogue.answer(&self.gateway, answer);
        let qa = dialogue
            .qa_pairs()
            .last()
            .cloned()
            .ok_or_else(|| ServiceError::Conflict("no pending question".into()))?;
        let record = match step {
            DialogueStep::Ask(q) => LogRecord::Answered {
                qa,
                next_question: Some(q),
                clarification: None,
            },
            DialogueStep::Done(c) => LogRecord::Answered {
                qa,
                next_question: None,
                clarification: Some(c),
            },
        };
        self.commit(&handle, &mut session, record)?;
        Ok(Self::clarify_response(&session))
    }

    fn skip_locked(
        &self,
        handle: &SessionHandle,
        session: &mut Session,
    ) -> Result<(), ServiceError> {
        let mut dialogue = session.dialogue().clone();
        let clarification = dialogue.finish(&self.gateway);
        self.commit(handle, session, LogRecord::Skipped { clarification })?;
        Ok(())
    }

    pub fn skip(&self, id: &str) -> Result<ClarifyResponse, ServiceError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock();
        session.check(&LogRecord::Skipped {
            clarification: Clarification::default(),
        })?;
        self.skip_locked(&handle, &mut session)?;
        Ok(Self::clarify_response(&session))
    }

    /// Starts monitoring. From the clarifying phase this skips the rest of
    /// the dialogue first.
    pub fn start(&self, id: &str) -> Result<SessionView, ServiceError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock();
        if session.phase == Phase::Clarifying {
            self.skip_locked(&handle, &mut session)?;
        }
        let carried = LogRecord::Started {
            carried_refinements: Vec::new(),
        };
        session.check(&carried)?;
        let carried_refinements = self.store.user_refinements(&session.user)?;
        self.commit(
            &handle,
            &mut session,
            LogRecord::Started {
                carried_refinements,
            },
        )?;
        Ok(view(&session))
    }

    /// Redacts a posted sample before it is scored or stored.
    fn sanitize(&self, mut sample: ActivitySample) -> Result<ActivitySample, ServiceError> {
        if !self.config.gateway.redaction_enabled {
            return Ok(sample);
        }
        let bytes = match &sample.screenshot_ref {
            ScreenshotRef::Absent => None,
            ScreenshotRef::Inline { inline } => Some(
                base64::engine::general_purpose::STANDARD
                    .decode(inline.trim())
                    .map_err(|e| ServiceError::Unprocessable(format!("screenshot: {e}")))?,
            ),
            ScreenshotRef::Path(p) => {
                let path = match &self.config.image_root {
                    Some(root) => root.join(p),
                    None => Path::new(p).to_path_buf(),
                };
                std::fs::read(&path).ok()
            }
        };
        match bytes {
            Some(bytes) => {
                let r = redact(&bytes, &sample.screen_text)
                    .map_err(|e| ServiceError::Unprocessable(format!("screenshot: {e}")))?;
                sample.screenshot_ref = ScreenshotRef::Inline {
                    inline: base64::engine::general_purpose::STANDARD.encode(&r.bytes),
                };
                sample.screen_text = r.regions;
            }
            None => {
                // A missing file degrades to metadata-only scoring.
                sample.screenshot_ref = ScreenshotRef::Absent;
                sample.screen_text = scrub_regions(&sample.screen_text);
            }
        }
        sample.app_title = scrub(&sample.app_title);
        sample.url = sample.url.as_deref().map(scrub);
        Ok(sample)
    }

    pub fn sample(&self, id: &str, sample: ActivitySample) -> Result<SampleResponse, ServiceError> {
        let problems = sample.validate();
        if !problems.is_empty() {
            return Err(ServiceError::Unprocessable(problems.join("; ")));
        }
        let handle = self.handle(id)?;
        let mut session = handle.lock();
        let probe = LogRecord::Sample {
            sample: sample.clone(),
            assessment: None,
            scoring_error: None,
        };
        session.check(&probe)?;
        let sample = self.sanitize(sample)?;
        let profile = session.profile();
        let (assessment, scoring_error) = match self.scorer().assess(&profile, &sample) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e)),
        };
        self.commit(
            &handle,
            &mut session,
            LogRecord::Sample {
                sample,
                assessment,
                scoring_error,
            },
        )?;
        let runner = session.runner().expect("running session has a runner");
        let t = runner.timeline();
        let assessment = t.assessments.last().cloned().expect("just ingested");
        let ts = t.samples.last().map(|s| s.timestamp);
        Ok(SampleResponse {
            assessment,
            confirmed_state: runner.confirmed_state(),
            notifications: t
                .notifications
                .iter()
                .filter(|n| Some(n.timestamp) == ts)
                .cloned()
                .collect(),
            scoring_error: t
                .scoring_errors
                .last()
                .filter(|e| Some(e.timestamp) == ts)
                .map(|e| e.error.clone()),
        })
    }

    pub fn feedback(
        &self,
        id: &str,
        req: FeedbackRequest,
    ) -> Result<FeedbackResponse, ServiceError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock();
        if session.phase != Phase::Running {
            return Err(SessionError::WrongPhase {
                expected: "running".into(),
                actual: session.phase,
            }
            .into());
        }
        let runner = session.runner().expect("running session has a runner");
        let feedback = FeedbackEvent {
            timestamp: req
                .timestamp
                .or_else(|| runner.last_timestamp())
                .unwrap_or_default(),
            target_notification: req.target_notification,
            verdict: req.verdict,
            free_text: req.free_text.filter(|t| !t.trim().is_empty()),
        };
        let problems = feedback.validate();
        if !problems.is_empty() {
            return Err(ServiceError::Unprocessable(problems.join("; ")));
        }
        session.check_feedback(&feedback)?;
        let refinement = runner
            .notification_context(feedback.target_notification)
            .and_then(|(_, sample, prior)| {
                self.scorer()
                    .reflect(runner.profile(), sample, prior, &feedback)
            });
        self.commit(
            &handle,
            &mut session,
            LogRecord::Feedback {
                feedback: feedback.clone(),
                refinement: refinement.clone(),
            },
        )?;
        if let Some(n) = &refinement {
            self.store
                .append(&self.store.refinements_path(&session.user), n)?;
        }
        Ok(FeedbackResponse {
            feedback,
            refinement,
        })
    }

    pub fn stop(&self, id: &str, req: StopRequest) -> Result<SessionView, ServiceError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock();
        self.commit(
            &handle,
            &mut session,
            LogRecord::Stopped {
                alignment_rating: req.alignment_rating,
            },
        )?;
        let t = session
            .timeline()
            .expect("stopped session has a timeline")
            .clone();
        self.write_timeline(id, &t)?;
        Ok(view(&session))
    }

    pub fn view(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(view(&self.handle(id)?.lock()))
    }

    pub fn list(&self) -> Result<Vec<IndexEntry>, ServiceError> {
        Ok(self.store.read_index()?)
    }

    pub fn subscribe(&self, id: &str, cursor: u64) -> Result<Subscription, ServiceError> {
        let handle = self.handle(id)?;
        let session = handle.lock();
        // Subscribing under the lock means no event falls between history and live.
        let live = handle.tx.subscribe();
        Ok(Subscription {
            history: session.events_after(cursor),
            live,
            finished: session.phase == Phase::Stopped,
        })
    }

    /// Persisted bytes as one JSONL dump; used by the CLI and tests.
    pub fn export_log(&self, id: &str) -> Result<String, ServiceError> {
        self.handle(id)?;
        let records = crate::store::read_repair::<LogRecord>(&self.store.log_path(id))?.records;
        Ok(records.iter().map(jsonl::to_line).collect())
    }
}

fn corrupt(path: &Path, line: usize, e: SessionError) -> StoreError {
    StoreError::Corrupt {
        path: path.display().to_string(),
        line,
        reason: e.to_string(),
    }
}

fn index_entry(s: &Session) -> IndexEntry {
    IndexEntry {
        session_id: s.id.clone(),
        user: s.user.clone(),
        stated_intention: s.stated_intention.clone(),
        created_at: s.created_at,
    }
}

fn view(s: &Session) -> SessionView {
    let (confirmed_state, samples, notifications, feedback, refinements) =
        match (s.runner(), s.timeline()) {
            (Some(r), _) => {
                let t = r.timeline();
                (
                    r.confirmed_state(),
                    t.samples.len(),
                    t.notifications.clone(),
                    t.feedback.clone(),
                    t.intention.refinements.clone(),
                )
            }
            (None, Some(t)) => (
                t.transitions
                    .last()
                    .map(|x| x.to)
                    .unwrap_or(Classification::OnTask),
                t.samples.len(),
                t.notifications.clone(),
                t.feedback.clone(),
                t.intention.refinements.clone(),
            ),
            (None, None) => (Classification::OnTask, 0, vec![], vec![], vec![]),
        };
    SessionView {
        session_id: s.id.clone(),
        user: s.user.clone(),
        stated_intention: s.stated_intention.clone(),
        created_at: s.created_at,
        phase: s.phase,
        pending_question: s.dialogue().pending_question().map(String::from),
        clarification: s.clarification().clone(),
        confirmed_state,
        samples,
        notifications,
        feedback,
        refinements,
        events: s.events().len() as u64,
        log_records: s.records(),
        timeline: s.timeline().cloned(),
    }
}
