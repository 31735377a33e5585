//! Turns a user's verdict on a notification into a scoring refinement note.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{
    ActivitySample, AlignmentDirection, Classification, DistractionAssessment, FeedbackEvent,
    IntentionProfile, Millis, RefinementNote, Verdict,
};
use crate::gateway::{
    string_field, CompletionRequest, Gateway, GatewayError, ImageAttachment, PromptKind,
    ResponseFormat,
};
use crate::prompt;

pub const REFLECT_KEYS: [&str; 5] = [
    "analysis_assistant_response",
    "user_activity_description",
    "analysis_user_feedback",
    "user_implicit_intention_prediction",
    "policy_adjustment",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinerConfig {
    /// Also derive notes from Correct verdicts, reinforcing the judgment.
    pub refine_on_correct: bool,
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Clone, Debug)]
pub struct ReflectionRequest<'a> {
    pub profile: &'a IntentionProfile,
    pub prior: &'a DistractionAssessment,
    pub feedback: &'a FeedbackEvent,
    /// The sample the prior judgment was made on, for app/URL context.
    pub sample: Option<&'a ActivitySample>,
    pub image: Option<ImageAttachment>,
}

/// Direction a note must push future scores for this verdict.
///
/// `None` when the verdict does not produce a note under `config`.
pub fn target_direction(
    prior: Classification,
    verdict: Verdict,
    config: &RefinerConfig,
) -> Option<AlignmentDirection> {
    let correcting = match verdict {
        Verdict::Incorrect => true,
        Verdict::Correct if config.refine_on_correct => false,
        Verdict::Correct => return None,
    };
    // Correcting an off-task call means the activity was aligned.
    let judged_aligned = prior == Classification::OnTask;
    Some(if correcting != judged_aligned {
        AlignmentDirection::RaiseAlignment
    } else {
        AlignmentDirection::LowerAlignment
    })
}

fn direction_phrase(d: AlignmentDirection) -> &'static str {
    match d {
        AlignmentDirection::RaiseAlignment => {
            "The activity should receive higher alignment (lower output score)."
        }
        AlignmentDirection::LowerAlignment => {
            "The activity should receive lower alignment (higher output score)."
        }
    }
}

fn assistant_response(prior: &DistractionAssessment, sample: Option<&ActivitySample>) -> String {
    let mut lines = vec![
        format!("Score: {} ({}).", prior.score, prior.classification),
        format!("Rationale: {}", prior.rationale),
        format!("Message: {}", prior.message),
    ];
    if let Some(s) = sample {
        if !s.app_title.is_empty() {
            lines.push(format!("Currently active application: {}.", s.app_title));
        }
        if let Some(url) = &s.url {
            lines.push(format!("Current URL: {url}."));
        }
    }
    // Starts on its own line so the template's lead-in sentence stays separate.
    format!("\n{}", lines.join("\n"))
}

fn user_feedback(feedback: &FeedbackEvent) -> String {
    let base = match feedback.verdict {
        Verdict::Incorrect => "The user marked your judgment as incorrect.",
        Verdict::Correct => "The user marked your judgment as correct.",
    };
    match feedback.free_text.as_deref().map(str::trim) {
        Some(t) if !t.is_empty() => format!("{base} Reason: {t}"),
        _ => base.to_string(),
    }
}

pub fn reflection_prompt(request: &ReflectionRequest<'_>, direction: AlignmentDirection) -> String {
    prompt::render(
        prompt::REFLECT,
        &[
            ("stated_intention", &request.profile.stated_intention),
            (
                "assistant_response",
                &assistant_response(request.prior, request.sample),
            ),
            ("user_feedback", &user_feedback(request.feedback)),
            ("scoring_direction", direction_phrase(direction)),
        ],
    )
}

fn parse_note(
    v: &Value,
    direction: AlignmentDirection,
    created_at: Millis,
) -> Result<RefinementNote, String> {
    let field = |k: &str| {
        string_field(v, k)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("{k} missing or empty"))
    };
    let policy = field("policy_adjustment")?;
    match AlignmentDirection::from_policy_text(&policy) {
        Some(d) if d == direction => {}
        _ => {
            return Err(format!(
                "policy_adjustment does not state the expected direction: {policy}"
            ))
        }
    }
    Ok(RefinementNote {
        created_at,
        activity_description: field("user_activity_description")?,
        implicit_intention: field("user_implicit_intention_prediction")?,
        policy_adjustment: policy,
        direction,
    })
}

/// Reflects on a judged notification.
///
/// Returns `Ok(None)` when the verdict produces no note, or when the reply
/// stays malformed after one retry (the failure is logged).
pub fn reflect(
    gateway: &Gateway,
    request: &ReflectionRequest<'_>,
    config: &RefinerConfig,
) -> Result<Option<RefinementNote>, RefineError> {
    let Some(direction) = target_direction(
        request.prior.classification,
        request.feedback.verdict,
        config,
    ) else {
        return Ok(None);
    };
    let completion = CompletionRequest {
        kind: PromptKind::Reflect,
        prompt: reflection_prompt(request, direction),
        image: request.image.clone(),
        format: ResponseFormat::json(&REFLECT_KEYS),
    };
    let created_at = request.feedback.timestamp;
    match gateway.complete_with(&completion, |v| parse_note(v, direction, created_at)) {
        Ok(note) => Ok(Some(note)),
        Err(e) if e.is_schema_failure() => {
            tracing::warn!(error = %e, "reflection reply unusable; no refinement created");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Notes with `now - created_at <= 24 h`, original order preserved.
pub fn active_refinements(store: &[RefinementNote], now: Millis) -> Vec<RefinementNote> {
    store
        .iter()
        .filter(|n| n.is_active_at(now))
        .cloned()
        .collect()
}
