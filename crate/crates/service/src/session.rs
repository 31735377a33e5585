//! One live session as a pure fold over its log records.
//!
//! The service validates a record with [`Session::check`], persists it, then
//! applies it. Restart replays the same records through the same path, so the
//! rebuilt session and its event history equal the pre-crash ones.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use attune_core::clarifier::Dialogue;
use attune_core::domain::{
    ActivitySample, Clarification, Classification, DistractionAssessment, FeedbackEvent,
    IntentionProfile, Millis, NotificationEvent, QaPair, RefinementNote, Score, SessionId,
    SessionTimeline,
};
use attune_core::engine::EngineConfig;
use attune_core::runner::{RunnerError, SessionRunner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Clarifying,
    Ready,
    Running,
    Stopped,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Clarifying => "clarifying",
            Phase::Ready => "ready",
            Phase::Running => "running",
            Phase::Stopped => "stopped",
        };
        f.write_str(s)
    }
}

/// One accepted API call, with everything the gateway contributed to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogRecord {
    Created {
        session_id: String,
        user: String,
        stated_intention: String,
        created_at: Millis,
        first_question: Option<String>,
    },
    Answered {
        qa: QaPair,
        next_question: Option<String>,
        clarification: Option<Clarification>,
    },
    Skipped {
        clarification: Clarification,
    },
    Started {
        /// Notes carried over from the user's earlier sessions.
        carried_refinements: Vec<RefinementNote>,
    },
    Sample {
        sample: ActivitySample,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        assessment: Option<DistractionAssessment>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scoring_error: Option<String>,
    },
    Feedback {
        feedback: FeedbackEvent,
        refinement: Option<RefinementNote>,
    },
    Stopped {
        alignment_rating: Option<u8>,
    },
}

/// Streamed to subscribers in emission order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Phase {
        phase: Phase,
    },
    Question {
        question: String,
    },
    Clarified {
        clarification: Clarification,
    },
    Assessment {
        timestamp: Millis,
        score: Score,
        classification: Classification,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scoring_error: Option<String>,
    },
    /// Confirmed state changed; drives the red/green status box.
    Status {
        timestamp: Millis,
        state: Classification,
    },
    Notification {
        notification: NotificationEvent,
    },
    Feedback {
        feedback: FeedbackEvent,
    },
    Refinement {
        note: RefinementNote,
    },
    Stopped {
        alignment_rating: Option<u8>,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Phase { .. } => "phase",
            EventKind::Question { .. } => "question",
            EventKind::Clarified { .. } => "clarified",
            EventKind::Assessment { .. } => "assessment",
            EventKind::Status { .. } => "status",
            EventKind::Notification { .. } => "notification",
            EventKind::Feedback { .. } => "feedback",
            EventKind::Refinement { .. } => "refinement",
            EventKind::Stopped { .. } => "stopped",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerEvent {
    /// 1-based position in the session's event history; the stream cursor.
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("session is {actual}; this call needs {expected}")]
    WrongPhase { expected: String, actual: Phase },
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub user: String,
    pub stated_intention: String,
    pub created_at: Millis,
    pub phase: Phase,
    dialogue: Dialogue,
    clarification: Clarification,
    runner: Option<SessionRunner>,
    timeline: Option<SessionTimeline>,
    events: Vec<ServerEvent>,
    records: usize,
}

fn expect(phase: Phase, allowed: &[Phase]) -> Result<(), SessionError> {
    if allowed.contains(&phase) {
        Ok(())
    } else {
        let expected = allowed
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" or ");
        Err(SessionError::WrongPhase {
            expected,
            actual: phase,
        })
    }
}

impl Session {
    /// Builds a session from its `Created` record.
    pub fn create(record: &LogRecord) -> Result<Self, SessionError> {
        let LogRecord::Created {
            session_id,
            user,
            stated_intention,
            created_at,
            first_question,
        } = record
        else {
            return Err(SessionError::Invalid(
                "log must start with a created record".into(),
            ));
        };
        let mut s = Self {
            id: session_id.clone(),
            user: user.clone(),
            stated_intention: stated_intention.clone(),
            created_at: *created_at,
            phase: Phase::Clarifying,
            dialogue: Dialogue::resume(
                stated_intention.clone(),
                Vec::new(),
                first_question.clone(),
            ),
            clarification: Clarification::default(),
            runner: None,
            timeline: None,
            events: Vec::new(),
            records: 1,
        };
        match first_question {
            Some(q) => {
                s.emit(EventKind::Phase {
                    phase: Phase::Clarifying,
                });
                s.emit(EventKind::Question {
                    question: q.clone(),
                });
            }
            None => {
                s.phase = Phase::Ready;
                s.emit(EventKind::Phase {
                    phase: Phase::Ready,
                });
            }
        }
        Ok(s)
    }

    fn emit(&mut self, kind: EventKind) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(ServerEvent { seq, kind });
    }

    pub fn events(&self) -> &[ServerEvent] {
        &self.events
    }

    pub fn events_after(&self, cursor: u64) -> Vec<ServerEvent> {
        self.events
            .iter()
            .filter(|e| e.seq > cursor)
            .cloned()
            .collect()
    }

    /// Number of log records folded into this session.
    pub fn records(&self) -> usize {
        self.records
    }

    pub fn dialogue(&self) -> &Dialogue {
        &self.dialogue
    }

    pub fn clarification(&self) -> &Clarification {
        &self.clarification
    }

    pub fn runner(&self) -> Option<&SessionRunner> {
        self.runner.as_ref()
    }

    pub fn timeline(&self) -> Option<&SessionTimeline> {
        self.timeline.as_ref()
    }

    /// Profile the session scores against once started.
    pub fn profile(&self) -> IntentionProfile {
        if let Some(r) = &self.runner {
            return r.profile().clone();
        }
        let mut p = IntentionProfile::new(SessionId(self.id.clone()), &self.stated_intention);
        p.qa_pairs = self.clarification.qa_pairs.clone();
        p.expanded_activities = self.clarification.expanded_activities.clone();
        p
    }

    /// Whether `record` may be applied now.
    pub fn check(&self, record: &LogRecord) -> Result<(), SessionError> {
        match record {
            LogRecord::Created { .. } => {
                Err(SessionError::Invalid("session already exists".into()))
            }
            LogRecord::Answered { .. } | LogRecord::Skipped { .. } => {
                expect(self.phase, &[Phase::Clarifying])
            }
            LogRecord::Started { .. } => expect(self.phase, &[Phase::Ready]),
            LogRecord::Sample { sample, .. } => {
                expect(self.phase, &[Phase::Running])?;
                self.running()?.check_timestamp(sample.timestamp)?;
                Ok(())
            }
            LogRecord::Feedback { feedback, .. } => {
                expect(self.phase, &[Phase::Running])?;
                self.check_feedback(feedback)
            }
            LogRecord::Stopped { alignment_rating } => {
                expect(
                    self.phase,
                    &[Phase::Clarifying, Phase::Ready, Phase::Running],
                )?;
                match alignment_rating {
                    Some(r) if !(1..=5).contains(r) => Err(RunnerError::InvalidRating(*r).into()),
                    _ => Ok(()),
                }
            }
        }
    }

    fn running(&self) -> Result<&SessionRunner, SessionError> {
        self.runner
            .as_ref()
            .ok_or_else(|| SessionError::Invalid("session has no runner".into()))
    }

    pub fn check_feedback(&self, feedback: &FeedbackEvent) -> Result<(), SessionError> {
        let t = self.running()?.timeline();
        let id = feedback.target_notification;
        if id as usize >= t.notifications.len() {
            return Err(RunnerError::UnknownNotification(id).into());
        }
        if t.feedback.iter().any(|f| f.target_notification == id) {
            return Err(RunnerError::DuplicateFeedback(id).into());
        }
        Ok(())
    }

    /// Applies a checked record and returns the events it emitted.
    pub fn apply(
        &mut self,
        record: &LogRecord,
        engine: &EngineConfig,
    ) -> Result<Vec<ServerEvent>, SessionError> {
        self.check(record)?;
        let before = self.events.len();
        match record {
            LogRecord::Created { .. } => unreachable!("rejected by check"),
            LogRecord::Answered {
                qa,
                next_question,
                clarification,
            } => {
                let mut pairs = self.dialogue.qa_pairs().to_vec();
                pairs.push(qa.clone());
                self.dialogue =
                    Dialogue::resume(self.stated_intention.clone(), pairs, next_question.clone());
                if let Some(q) = next_question {
                    self.emit(EventKind::Question {
                        question: q.clone(),
                    });
                }
                if let Some(c) = clarification {
                    self.finish_clarification(c.clone());
                }
            }
            LogRecord::Skipped { clarification } => {
                self.finish_clarification(clarification.clone())
            }
            LogRecord::Started {
                carried_refinements,
            } => {
                let mut runner = SessionRunner::new(self.profile(), engine.clone())?;
                for n in carried_refinements {
                    runner.add_refinement(n.clone());
                }
                self.runner = Some(runner);
                self.phase = Phase::Running;
                self.emit(EventKind::Phase {
                    phase: Phase::Running,
                });
            }
            LogRecord::Sample {
                sample,
                assessment,
                scoring_error,
            } => {
                let scored = match (assessment, scoring_error) {
                    (Some(a), _) => Ok(a.clone()),
                    (None, Some(e)) => Err(e.clone()),
                    (None, None) => Err("no assessment recorded".to_string()),
                };
                let runner = self.runner.as_mut().expect("checked running");
                let report = runner.ingest(sample.clone(), scored)?;
                self.emit(EventKind::Assessment {
                    timestamp: sample.timestamp,
                    score: report.assessment.score,
                    classification: report.assessment.classification,
                    scoring_error: report.scoring_error,
                });
                if let Some(t) = report.transition {
                    self.emit(EventKind::Status {
                        timestamp: t.timestamp,
                        state: t.to,
                    });
                }
                for n in report.notifications {
                    self.emit(EventKind::Notification { notification: n });
                }
            }
            LogRecord::Feedback {
                feedback,
                refinement,
            } => {
                let runner = self.runner.as_mut().expect("checked running");
                runner.record_feedback(feedback.clone())?;
                if let Some(n) = refinement {
                    runner.add_refinement(n.clone());
                }
                self.emit(EventKind::Feedback {
                    feedback: feedback.clone(),
                });
                if let Some(n) = refinement {
                    self.emit(EventKind::Refinement { note: n.clone() });
                }
            }
            LogRecord::Stopped { alignment_rating } => {
                let runner = match self.runner.take() {
                    Some(r) => r,
                    None => SessionRunner::new(self.profile(), engine.clone())?,
                };
                self.timeline = Some(runner.finish(*alignment_rating)?);
                self.phase = Phase::Stopped;
                self.emit(EventKind::Stopped {
                    alignment_rating: *alignment_rating,
                });
            }
        }
        self.records += 1;
        Ok(self.events[before..].to_vec())
    }

    fn finish_clarification(&mut self, c: Clarification) {
        self.dialogue = Dialogue::resume(self.stated_intention.clone(), c.qa_pairs.clone(), None);
        self.clarification = c.clone();
        self.phase = Phase::Ready;
        self.emit(EventKind::Clarified { clarification: c });
        self.emit(EventKind::Phase {
            phase: Phase::Ready,
        });
    }
}
