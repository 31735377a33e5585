//! Notification state machine.
//!
//! Sessions start presumed on-task. A change of classification must persist
//! for `transition_confirm_ms` before it is confirmed: the candidate starts at
//! the first divergent sample and is confirmed at the first sample where
//! `now - candidate_since >= transition_confirm_ms`. Confirming off-task emits
//! a nudge, confirming on-task emits praise. While confirmed off-task a
//! reminder repeats every `reminder_interval_ms`, measured from the nudge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Classification, DistractionAssessment, Millis, NotificationEvent, NotificationKind,
    StateTransition, DEFAULT_THRESHOLD,
};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("non-monotonic clock: {now} is not after {last}")]
    NonMonotonicClock { now: Millis, last: Millis },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub sample_period_ms: Millis,
    pub transition_confirm_ms: Millis,
    pub reminder_interval_ms: Millis,
    pub threshold: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            sample_period_ms: 2000,
            transition_confirm_ms: 4000,
            reminder_interval_ms: 30_000,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if self.sample_period_ms <= 0 {
            return bad("sample_period_ms must be positive");
        }
        if self.transition_confirm_ms <= 0 {
            return bad("transition_confirm_ms must be positive");
        }
        if self.reminder_interval_ms <= 0 {
            return bad("reminder_interval_ms must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie strictly between 0 and 1");
        }
        if self.transition_confirm_ms % self.sample_period_ms != 0 {
            return bad("transition_confirm_ms must be a multiple of sample_period_ms");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub state: Classification,
    pub since: Millis,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub confirmed_state: Classification,
    pub candidate: Option<Candidate>,
    pub last_reminder_at: Option<Millis>,
    /// Timestamp of the most recent accepted step.
    pub last_step_at: Option<Millis>,
}

/// Result of feeding one assessment to the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EngineState,
    pub notifications: Vec<NotificationEvent>,
    pub transition: Option<StateTransition>,
}

#[derive(Clone, Debug)]
pub struct Engine {
    config: EngineConfig,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn init(&self) -> EngineState {
        EngineState {
            confirmed_state: Classification::OnTask,
            candidate: None,
            last_reminder_at: None,
            last_step_at: None,
        }
    }

    /// Advances the state machine by one assessment observed at `now`.
    ///
    /// `next_id` is the id given to the first notification emitted, if any.
    pub fn step(
        &self,
        state: &EngineState,
        assessment: &DistractionAssessment,
        now: Millis,
        next_id: u64,
    ) -> Result<StepOutcome, EngineError> {
        let latest = [state.last_step_at, state.last_reminder_at]
            .into_iter()
            .flatten()
            .chain(state.candidate.as_ref().map(|c| c.since))
            .max();
        if let Some(last) = latest {
            if now <= last {
                return Err(EngineError::NonMonotonicClock { now, last });
            }
        }

        let mut next = state.clone();
        next.last_step_at = Some(now);
        let mut notifications = Vec::new();
        let mut transition = None;
        let notify = |kind, notifications: &mut Vec<NotificationEvent>| {
            notifications.push(NotificationEvent {
                id: next_id + notifications.len() as u64,
                timestamp: now,
                kind,
                message: assessment.message.clone(),
                assessment_score: assessment.score,
            });
        };

        let observed = assessment.classification;
        if observed == state.confirmed_state {
            next.candidate = None;
            if state.confirmed_state == Classification::OffTask {
                let due = state
                    .last_reminder_at
                    .is_none_or(|at| now - at >= self.config.reminder_interval_ms);
                if due {
                    notify(NotificationKind::OffTaskReminder, &mut notifications);
                    next.last_reminder_at = Some(now);
                }
            }
        } else {
            let since = match &state.candidate {
                Some(c) if c.state == observed => c.since,
                _ => now,
            };
            if now - since >= self.config.transition_confirm_ms {
                next.confirmed_state = observed;
                next.candidate = None;
                transition = Some(StateTransition {
                    timestamp: now,
                    from: state.confirmed_state,
                    to: observed,
                });
                match observed {
                    Classification::OffTask => {
                        notify(NotificationKind::OffTaskNudge, &mut notifications);
                        next.last_reminder_at = Some(now);
                    }
                    Classification::OnTask => {
                        notify(NotificationKind::OnTaskPraise, &mut notifications);
                        next.last_reminder_at = None;
                    }
                }
            } else {
                next.candidate = Some(Candidate {
                    state: observed,
                    since,
                });
            }
        }

        Ok(StepOutcome {
            state: next,
            notifications,
            transition,
        })
    }
}
