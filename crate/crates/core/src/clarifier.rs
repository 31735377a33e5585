//! Two-question clarification dialogue and ten-variant intention expansion.

use serde_json::Value;
use thiserror::Error;

use crate::domain::{Clarification, QaPair, EXPANSION_COUNT, MAX_QA_PAIRS, SKIPPED_ANSWER};
use crate::gateway::{
    string_field, CompletionRequest, Gateway, GatewayError, PromptKind, ResponseFormat,
};
use crate::prompt;

/// Upper bound on a returned question, in characters.
pub const MAX_QUESTION_CHARS: usize = 120;

#[derive(Debug, Error)]
pub enum ClarifyError {
    #[error("stated intention is empty")]
    EmptyIntention,
    #[error("clarification already has {MAX_QA_PAIRS} answered questions")]
    Exhausted,
    #[error("model returned an empty question")]
    EmptyQuestion,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn format_qa(qa: Option<&QaPair>) -> String {
    match qa {
        Some(p) => format!("Q: {} A: {}", p.question, p.answer),
        None => "(none)".into(),
    }
}

pub fn question_prompt(stated_intention: &str, prior_qa: &[QaPair]) -> String {
    prompt::render(
        prompt::CLARIFY_QUESTION,
        &[
            ("stated_intention", stated_intention),
            ("first_question_and_answer", &format_qa(prior_qa.first())),
            ("second_question_and_answer", &format_qa(prior_qa.get(1))),
        ],
    )
}

/// Trims model output to a single question of at most [`MAX_QUESTION_CHARS`].
fn clean_question(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line.trim_matches('"').trim();
    let q: String = line.chars().take(MAX_QUESTION_CHARS).collect();
    let q = q.trim().to_string();
    (!q.is_empty()).then_some(q)
}

pub fn next_question(
    gateway: &Gateway,
    stated_intention: &str,
    prior_qa: &[QaPair],
) -> Result<String, ClarifyError> {
    if stated_intention.trim().is_empty() {
        return Err(ClarifyError::EmptyIntention);
    }
    if prior_qa.len() >= MAX_QA_PAIRS {
        return Err(ClarifyError::Exhausted);
    }
    let request = CompletionRequest {
        kind: PromptKind::Clarify,
        prompt: question_prompt(stated_intention, prior_qa),
        image: None,
        format: ResponseFormat::Text,
    };
    let v = gateway.complete(&request)?;
    string_field(&v, "text")
        .and_then(|t| clean_question(&t))
        .ok_or(ClarifyError::EmptyQuestion)
}

pub fn expansion_prompt(stated_intention: &str, qa_pairs: &[QaPair]) -> String {
    let block = if qa_pairs.is_empty() {
        "(none)".to_string()
    } else {
        let mut b = String::new();
        for (i, p) in qa_pairs.iter().enumerate() {
            b.push_str(&format!(
                "\nQ{n}: {}\nA{n}: {}",
                p.question,
                p.answer,
                n = i + 1
            ));
        }
        b
    };
    prompt::render(
        prompt::EXPAND_INTENTION,
        &[
            ("clarification_block", &block),
            ("stated_intention", stated_intention),
        ],
    )
}

fn parse_expansions(v: &Value) -> Result<Vec<String>, String> {
    (1..=EXPANSION_COUNT)
        .map(|k| {
            string_field(v, &k.to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| format!("variant \"{k}\" missing or empty"))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    /// Either empty or exactly ten variants, in key order.
    pub activities: Vec<String>,
    pub warning: Option<String>,
}

/// Expands the intention into ten activity variants.
///
/// Failures degrade to an empty list with a warning; the profile stays valid.
pub fn expand(
    gateway: &Gateway,
    stated_intention: &str,
    qa_pairs: &[QaPair],
) -> Result<Expansion, ClarifyError> {
    if stated_intention.trim().is_empty() {
        return Err(ClarifyError::EmptyIntention);
    }
    let keys: Vec<String> = (1..=EXPANSION_COUNT).map(|k| k.to_string()).collect();
    let request = CompletionRequest {
        kind: PromptKind::Expand,
        prompt: expansion_prompt(stated_intention, qa_pairs),
        image: None,
        format: ResponseFormat::Json(keys),
    };
    Ok(match gateway.complete_with(&request, parse_expansions) {
        Ok(activities) => Expansion {
            activities,
            warning: None,
        },
        Err(e) => {
            tracing::warn!(error = %e, "intention expansion failed; continuing without it");
            Expansion {
                activities: Vec::new(),
                warning: Some(e.to_string()),
            }
        }
    })
}

/// Where a clarification dialogue stands after an input.
#[derive(Clone, Debug, PartialEq)]
pub enum DialogueStep {
    Ask(String),
    Done(Clarification),
}

/// Drives the capped question/answer exchange for one session.
#[derive(Clone, Debug, PartialEq)]
pub struct Dialogue {
    stated_intention: String,
    qa: Vec<QaPair>,
    pending: Option<String>,
}

impl Dialogue {
    pub fn new(stated_intention: impl Into<String>) -> Self {
        Self {
            stated_intention: stated_intention.into(),
            qa: Vec::new(),
            pending: None,
        }
    }

    /// Rebuilds a dialogue from persisted progress.
    pub fn resume(
        stated_intention: impl Into<String>,
        qa: Vec<QaPair>,
        pending: Option<String>,
    ) -> Self {
        Self {
            stated_intention: stated_intention.into(),
            qa,
            pending,
        }
    }

    pub fn qa_pairs(&self) -> &[QaPair] {
        &self.qa
    }

    pub fn pending_question(&self) -> Option<&str> {
        self.pending.as_deref()
    }

    /// Asks the first question. Gateway failure skips the dialogue.
    pub fn begin(&mut self, gateway: &Gateway) -> Option<String> {
        self.ask(gateway)
    }

    fn ask(&mut self, gateway: &Gateway) -> Option<String> {
        match next_question(gateway, &self.stated_intention, &self.qa) {
            Ok(q) => {
                self.pending = Some(q.clone());
                Some(q)
            }
            Err(e) => {
                tracing::warn!(error = %e, "clarification question unavailable");
                self.pending = None;
                None
            }
        }
    }

    /// Records an answer to the pending question, then asks the next one or
    /// finishes with an expansion. An empty answer is stored as skipped.
    pub fn answer(&mut self, gateway: &Gateway, answer: &str) -> DialogueStep {
        if let Some(question) = self.pending.take() {
            let answer = answer.trim();
            self.qa.push(QaPair {
                question,
                answer: if answer.is_empty() {
                    SKIPPED_ANSWER.into()
                } else {
                    answer.into()
                },
            });
        }
        if self.qa.len() < MAX_QA_PAIRS {
            if let Some(q) = self.ask(gateway) {
                return DialogueStep::Ask(q);
            }
        }
        DialogueStep::Done(self.finish(gateway))
    }

    /// Ends the dialogue. With no answered question there is nothing to
    /// expand on; otherwise the partial exchange still drives expansion.
    pub fn finish(&mut self, gateway: &Gateway) -> Clarification {
        self.pending = None;
        let expanded_activities = if self.qa.is_empty() {
            Vec::new()
        } else {
            expand(gateway, &self.stated_intention, &self.qa)
                .map(|e| e.activities)
                .unwrap_or_default()
        };
        Clarification {
            qa_pairs: self.qa.clone(),
            expanded_activities,
        }
    }
}
