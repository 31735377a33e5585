//! Deterministic offline provider.
//!
//! The mock reads the prompts the rest of the crate assembles, so what it
//! "sees" is exactly what a real model would be sent:
//!
//! * detection: intention terms come from `[intention: ...]` and the numbered
//!   clarification items; sample terms come from the image's annotated text
//!   layer plus the application/URL lines when present; guidance rules come
//!   from the user-corrected scoring guidance section. The score is
//!   `1.0 - 0.2 * min(5, overlap)`, then each applicable raise-alignment rule
//!   subtracts 0.4 and each lower-alignment rule adds 0.4, clamped to [0, 1].
//!   A rule applies when its activity terms are a non-empty subset of the
//!   sample terms. The markers `OFFTASK_FIXTURE` / `ONTASK_FIXTURE` force 1.0 / 0.0.
//! * clarification: answers from a canned question script.
//! * expansion: the worked jacket example verbatim, otherwise ten templated variants.
//! * reflection: describes the activity from the first text region (the title
//!   bar) and writes a policy sentence in the direction the prompt requests.
//!
//! Keyed rules pin the score for an (intention, screen text) pair. Canned
//! replies and a "down" switch allow fault injection.

use std::collections::{BTreeSet, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde_json::json;

use super::{CompletionRequest, GatewayConfig, GatewayError, PromptKind, Provider};
use crate::domain::{AlignmentDirection, Score};

pub const OFFTASK_MARKER: &str = "OFFTASK_FIXTURE";
pub const ONTASK_MARKER: &str = "ONTASK_FIXTURE";

/// Header of the prompt section carrying refinement notes.
pub const GUIDANCE_HEADER: &str = "[User-corrected scoring guidance]";

pub const DEFAULT_QUESTIONS: [&str; 2] = [
    "What subject are you planning to study, such as math, history, or a language?",
    "What tools or resources will you use, such as textbooks or online courses?",
];

const JACKET_EXAMPLE: [&str; 10] = [
    "Shopping",
    "Online shopping",
    "Browse for clothing",
    "Search for jackets",
    "Look up men's jackets in an online store",
    "Navigate a shopping app to find a jacket",
    "Use a search engine to locate jackets",
    "Read customer reviews on shopping sites",
    "Compare jacket prices across online stores",
    "Watch jacket review videos on YouTube",
];

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "it",
    "its", "of", "on", "or", "the", "this", "that", "to", "with", "your", "you", "my", "our", "me",
    "we", "i", "none", "unknown", "www", "com", "http", "https", "html",
];

/// Words that make up the policy sentence frame rather than the activity.
const POLICY_WORDS: &[&str] = &[
    "output",
    "high",
    "higher",
    "low",
    "lower",
    "alignment",
    "score",
    "when",
    "detected",
    "detecting",
];

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9]+").unwrap());
static INTENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[intention: ([^\]\n]*)\]").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+\. (.+)$").unwrap());

/// Lowercased content words of `text`.
pub fn terms(text: &str) -> BTreeSet<String> {
    TOKEN
        .find_iter(text)
        .map(|m| m.as_str().to_lowercase())
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// A scoring rule recovered from a refinement policy sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuidanceRule {
    pub direction: AlignmentDirection,
    pub terms: BTreeSet<String>,
}

impl GuidanceRule {
    pub fn from_policy(text: &str) -> Option<Self> {
        let direction = AlignmentDirection::from_policy_text(text)?;
        let terms: BTreeSet<String> = terms(text)
            .into_iter()
            .filter(|t| !POLICY_WORDS.contains(&t.as_str()))
            .collect();
        (!terms.is_empty()).then_some(Self { direction, terms })
    }

    pub fn applies_to(&self, sample_terms: &BTreeSet<String>) -> bool {
        self.terms.is_subset(sample_terms)
    }
}

/// The mock's scoring formula.
pub fn mock_score(
    intention_terms: &BTreeSet<String>,
    sample_terms: &BTreeSet<String>,
    rules: &[GuidanceRule],
) -> Score {
    let overlap = intention_terms.intersection(sample_terms).count().min(5) as i32;
    let mut level = 5 - overlap;
    for rule in rules.iter().filter(|r| r.applies_to(sample_terms)) {
        level += match rule.direction {
            AlignmentDirection::RaiseAlignment => -2,
            AlignmentDirection::LowerAlignment => 2,
        };
        level = level.clamp(0, 5);
    }
    Score::from_level(level as u8).unwrap_or(Score::MAX)
}

#[derive(Debug)]
pub struct MockProvider {
    questions: Vec<String>,
    keyed: Vec<KeyedRule>,
    canned: Mutex<VecDeque<Result<String, GatewayError>>>,
    down: AtomicBool,
    calls: AtomicUsize,
}

/// Fixed score for a stated intention when the screen text contains `screen_key`.
#[derive(Clone, Debug, PartialEq)]
struct KeyedRule {
    intention: String,
    screen_key: String,
    score: Score,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::with_questions(DEFAULT_QUESTIONS.iter().map(|q| q.to_string()).collect())
    }
}

impl MockProvider {
    pub fn with_questions(questions: Vec<String>) -> Self {
        Self {
            questions,
            keyed: Vec::new(),
            canned: Mutex::new(VecDeque::new()),
            down: AtomicBool::new(false),
            calls: AtomicUsize::new(0),
        }
    }

    /// Pins the score for `intention` whenever the screen text contains
    /// `screen_key`. Both comparisons ignore case.
    pub fn with_keyed_rule(mut self, intention: &str, screen_key: &str, score: Score) -> Self {
        self.keyed.push(KeyedRule {
            intention: intention.to_lowercase(),
            screen_key: screen_key.to_lowercase(),
            score,
        });
        self
    }

    /// Queues a raw reply returned verbatim by the next call.
    pub fn push_reply(&self, raw: impl Into<String>) {
        self.lock().push_back(Ok(raw.into()));
    }

    pub fn push_error(&self, err: GatewayError) {
        self.lock().push_back(Err(err));
    }

    /// While down, every call fails with [`GatewayError::Unavailable`].
    pub fn set_down(&self, down: bool) {
        self.down.store(down, Ordering::SeqCst);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, VecDeque<Result<String, GatewayError>>> {
        self.canned.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn clarify(&self, prompt: &str) -> String {
        let answered = ["First_QA: ", "Second_QA: "]
            .iter()
            .filter(|prefix| {
                line_value(prompt, prefix).is_some_and(|v| !v.is_empty() && v != "(none)")
            })
            .count();
        let idx = answered.min(self.questions.len().saturating_sub(1));
        self.questions.get(idx).cloned().unwrap_or_default()
    }
}

impl Provider for MockProvider {
    fn send(&self, request: &CompletionRequest, _: &GatewayConfig) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.down.load(Ordering::SeqCst) {
            return Err(GatewayError::Unavailable("mock provider is down".into()));
        }
        if let Some(reply) = self.lock().pop_front() {
            return reply;
        }
        let out = match request.kind {
            PromptKind::Clarify => self.clarify(&request.prompt),
            PromptKind::Expand => expand(&request.prompt),
            PromptKind::Detect => detect(request, &self.keyed),
            PromptKind::Reflect => reflect(request),
        };
        Ok(out)
    }
}

fn line_value<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.trim_start().strip_prefix(prefix))
        .map(|v| v.trim())
}

/// Lines following `header` up to the next blank line.
fn section<'a>(prompt: &'a str, header: &str) -> Vec<&'a str> {
    let mut lines = prompt.lines().skip_while(|l| !l.starts_with(header));
    if lines.next().is_none() {
        return Vec::new();
    }
    lines.take_while(|l| !l.trim().is_empty()).collect()
}

fn screen_text(request: &CompletionRequest) -> Vec<String> {
    request
        .image
        .as_ref()
        .map(|img| img.text_regions.iter().map(|r| r.text.clone()).collect())
        .unwrap_or_default()
}

fn metadata_values(prompt: &str) -> Vec<String> {
    ["Currently active application: ", "Current URL: "]
        .iter()
        .filter_map(|p| line_value(prompt, p))
        .map(|v| v.trim_end_matches('.').to_string())
        .collect()
}

fn sample_terms(request: &CompletionRequest) -> BTreeSet<String> {
    let mut text = screen_text(request).join(" ");
    for v in metadata_values(&request.prompt) {
        text.push(' ');
        text.push_str(&v);
    }
    terms(&text)
}

/// Short description of what is on screen: the title region, else app/URL.
fn activity_label(request: &CompletionRequest) -> String {
    screen_text(request)
        .into_iter()
        .next()
        .or_else(|| {
            let meta = metadata_values(&request.prompt)
                .into_iter()
                .filter(|v| v != "unknown" && v != "none")
                .collect::<Vec<_>>();
            (!meta.is_empty()).then(|| meta.join(" "))
        })
        .unwrap_or_else(|| "the current screen".into())
}

fn detect(request: &CompletionRequest, keyed: &[KeyedRule]) -> String {
    let prompt = &request.prompt;
    let intention = INTENTION
        .captures(prompt)
        .map(|c| c[1].to_string())
        .unwrap_or_default();
    let activity = activity_label(request);
    let layer = screen_text(request).join(" ");

    let lower_intention = intention.to_lowercase();
    let lower_layer = layer.to_lowercase();
    let keyed_score = keyed
        .iter()
        .find(|k| k.intention == lower_intention && lower_layer.contains(&k.screen_key))
        .map(|k| k.score);

    let forced = if let Some(s) = keyed_score {
        Some(s)
    } else if prompt.contains(OFFTASK_MARKER) || layer.contains(OFFTASK_MARKER) {
        Some(Score::MAX)
    } else if prompt.contains(ONTASK_MARKER) || layer.contains(ONTASK_MARKER) {
        Some(Score::MIN)
    } else {
        None
    };

    let (score, rationale) = match forced {
        Some(s) => (
            s,
            format!("The screen shows {activity}; a fixed rule applies."),
        ),
        None => {
            let mut intention_terms = terms(&intention);
            for line in section(prompt, "[Clarification Context]") {
                if let Some(c) = NUMBERED.captures(line.trim()) {
                    intention_terms.extend(terms(&c[1]));
                }
            }
            let rules: Vec<GuidanceRule> = section(prompt, GUIDANCE_HEADER)
                .into_iter()
                .filter_map(|l| GuidanceRule::from_policy(l.trim().trim_start_matches("- ")))
                .collect();
            let sample = sample_terms(request);
            let overlap = intention_terms.intersection(&sample).count();
            let applied = rules.iter().filter(|r| r.applies_to(&sample)).count();
            (
                mock_score(&intention_terms, &sample, &rules),
                format!(
                    "The screen shows {activity}. {overlap} intention terms appear on screen; \
                     {applied} guidance rules apply."
                ),
            )
        }
    };
    let message = if score.value() >= 0.5 {
        format!("It looks like {activity} may be pulling you away. How about switching back to {intention}?")
    } else {
        format!("I can see you're focused on {activity}. Keep going with {intention}.")
    };
    json!({ "rationale": rationale, "score": score.value(), "message": message }).to_string()
}

fn expand(prompt: &str) -> String {
    let intention = line_value(prompt, "[Input] Activity: ")
        .map(|v| v.trim_matches('"').to_string())
        .unwrap_or_default();
    let answers: Vec<String> = ["A1: ", "A2: "]
        .iter()
        .filter_map(|p| line_value(prompt, p))
        .filter(|a| !a.is_empty() && *a != crate::domain::SKIPPED_ANSWER)
        .map(str::to_string)
        .collect();

    let variants: Vec<String> = if intention.eq_ignore_ascii_case("Find a jacket for men") {
        JACKET_EXAMPLE.iter().map(|s| s.to_string()).collect()
    } else {
        let i = intention.as_str();
        let mut v = vec![
            i.to_string(),
            format!("Work on {i}"),
            format!("Make progress on {i}"),
            format!("Plan how to {i}"),
            format!("Search the web to {i}"),
            format!("Read material needed to {i}"),
        ];
        let fallback = [
            format!("Take notes to {i}"),
            format!("Message someone about {i}"),
            format!("Review progress on {i}"),
            format!("Organize files for {i}"),
        ];
        for (k, fallback) in fallback.into_iter().enumerate() {
            v.push(match answers.get(k / 2) {
                Some(a) if k % 2 == 0 => format!("Use {a} to {i}"),
                Some(a) => format!("Look up {a}"),
                None => fallback,
            });
        }
        v
    };
    let obj: serde_json::Map<String, serde_json::Value> = variants
        .into_iter()
        .enumerate()
        .map(|(k, s)| ((k + 1).to_string(), serde_json::Value::String(s)))
        .collect();
    serde_json::Value::Object(obj).to_string()
}

fn reflect(request: &CompletionRequest) -> String {
    let prompt = &request.prompt;
    let intention = line_value(prompt, "[Stated Intention] ").unwrap_or_default();
    let prior_off_task = line_value(prompt, "Score: ")
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse::<f64>().ok())
        .is_some_and(|s| s >= 0.5);
    let direction = line_value(prompt, "[Scoring Direction] ")
        .and_then(AlignmentDirection::from_policy_text)
        .unwrap_or(if prior_off_task {
            AlignmentDirection::RaiseAlignment
        } else {
            AlignmentDirection::LowerAlignment
        });

    let label = activity_label(request);
    let description: Vec<&str> = label.split_whitespace().take(20).collect();
    let description = description.join(" ");
    let (frame, implicit) = match direction {
        AlignmentDirection::RaiseAlignment => (
            "Output high alignment (low score output)",
            format!("Use {description} to {intention}"),
        ),
        AlignmentDirection::LowerAlignment => (
            "Output low alignment (high score output)",
            format!("Stay on {intention} instead"),
        ),
    };
    json!({
        "analysis_assistant_response": if prior_off_task {
            "low alignment (high score)"
        } else {
            "high alignment (low score)"
        },
        "user_activity_description": description,
        "analysis_user_feedback": "The user disagreed with the judgment. The activity serves the task.",
        "user_implicit_intention_prediction": implicit,
        "policy_adjustment": format!("{frame} for {description} when detected."),
    })
    .to_string()
}
