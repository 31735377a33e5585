//! Distraction detection: prompt assembly, gateway call and response parsing.

use std::path::Path;

use base64::Engine as _;
use serde_json::Value;
use thiserror::Error;

use crate::domain::{
    ActivitySample, DistractionAssessment, IntentionProfile, Millis, RefinementNote, Score,
    ScreenshotRef,
};
use crate::gateway::mock::GUIDANCE_HEADER;
use crate::gateway::redact::{self, RedactError};
use crate::gateway::{
    string_field, CompletionRequest, Gateway, GatewayError, ImageAttachment, PromptKind,
    ResponseFormat,
};
use crate::prompt;

/// JSON keys the detection reply must carry.
pub const DETECT_KEYS: [&str; 3] = ["rationale", "score", "message"];

/// Line added to the prompt when the sample has no usable screenshot.
pub const DEGRADED_NOTICE: &str = "[NOTICE] No screenshot is available for this sample; \
judge from the application name and URL only.";

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Everything needed to score one sample.
#[derive(Clone, Debug)]
pub struct DetectionRequest<'a> {
    pub profile: &'a IntentionProfile,
    pub sample: &'a ActivitySample,
    /// The screenshot to send, already redacted if redaction is enabled.
    pub image: Option<ImageAttachment>,
    /// Request time; selects the active refinement notes.
    pub now: Millis,
    pub threshold: f64,
    /// Include application and URL lines. Benchmark mode leaves them out.
    pub include_metadata: bool,
}

/// Notes active at `now`, in stored order.
pub fn active_refinements(notes: &[RefinementNote], now: Millis) -> Vec<&RefinementNote> {
    notes.iter().filter(|n| n.is_active_at(now)).collect()
}

pub fn build_prompt(request: &DetectionRequest<'_>) -> String {
    let profile = request.profile;
    let intention = profile.stated_intention.as_str();
    let mut parts = vec![prompt::render(
        prompt::DETECT_GENERAL,
        &[("task_name", intention)],
    )];

    if !profile.expanded_activities.is_empty() {
        let list: String = profile
            .expanded_activities
            .iter()
            .enumerate()
            .map(|(i, a)| format!("\n{}. {a}", i + 1))
            .collect();
        parts.push(prompt::render(
            prompt::DETECT_CLARIFICATION,
            &[
                ("task_name", intention),
                ("list_of_expansion_intention", &list),
            ],
        ));
    }

    parts.push(prompt::DETECT_INSTRUCTIONS.trim_end().to_string());

    let notes = active_refinements(&profile.refinements, request.now);
    if !notes.is_empty() {
        let mut section = String::from(GUIDANCE_HEADER);
        for n in notes {
            section.push_str("\n- ");
            section.push_str(&n.policy_adjustment);
        }
        parts.push(section);
    }

    let mut context = Vec::new();
    if request.include_metadata {
        let app = match request.sample.app_title.trim() {
            "" => "unknown",
            t => t,
        };
        let url = request.sample.url.as_deref().unwrap_or("none");
        context.push(
            prompt::render(
                prompt::DETECT_SCREEN_CONTEXT,
                &[("application_name", app), ("url", url)],
            )
            .trim_end()
            .to_string(),
        );
    }
    if request.image.is_none() {
        context.push(DEGRADED_NOTICE.to_string());
    }
    if !context.is_empty() {
        parts.push(context.join("\n"));
    }
    parts.join("\n\n")
}

fn parse_score(v: &Value) -> Option<f64> {
    match v.get("score")? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

pub fn parse_assessment(v: &Value, threshold: f64) -> Result<DistractionAssessment, String> {
    let raw = parse_score(v).ok_or("score is not a number")?;
    let score = Score::snap(raw).ok_or("score is not finite")?;
    Ok(DistractionAssessment::new(
        score,
        threshold,
        string_field(v, "rationale").unwrap_or_default(),
        string_field(v, "message").unwrap_or_default(),
    ))
}

pub fn assess(
    gateway: &Gateway,
    request: &DetectionRequest<'_>,
) -> Result<DistractionAssessment, DetectError> {
    let completion = CompletionRequest {
        kind: PromptKind::Detect,
        prompt: build_prompt(request),
        image: request.image.clone(),
        format: ResponseFormat::json(&DETECT_KEYS),
    };
    let threshold = request.threshold;
    Ok(gateway.complete_with(&completion, |v| parse_assessment(v, threshold))?)
}

/// Loads a sample's screenshot, optionally redacting it.
///
/// Paths resolve against `image_root`. Returns `Ok(None)` when the sample has
/// no screenshot or the file does not exist (degraded mode).
pub fn load_image(
    sample: &ActivitySample,
    image_root: Option<&Path>,
    redaction: bool,
) -> Result<Option<ImageAttachment>, RedactError> {
    let bytes = match &sample.screenshot_ref {
        ScreenshotRef::Absent => return Ok(None),
        ScreenshotRef::Inline { inline } => {
            match base64::engine::general_purpose::STANDARD.decode(inline.trim()) {
                Ok(b) => b,
                Err(e) => return Err(RedactError::Undecodable(e.to_string())),
            }
        }
        ScreenshotRef::Path(p) => {
            let path = match image_root {
                Some(root) => root.join(p),
                None => Path::new(p).to_path_buf(),
            };
            match std::fs::read(&path) {
                Ok(b) => b,
                Err(_) => return Ok(None),
            }
        }
    };
    attachment(bytes, &sample.screen_text, redaction).map(Some)
}

/// Wraps encoded image bytes, redacting PII regions first when asked.
pub fn attachment(
    bytes: Vec<u8>,
    regions: &[crate::domain::TextRegion],
    redaction: bool,
) -> Result<ImageAttachment, RedactError> {
    let (bytes, text_regions) = if redaction {
        let r = redact::redact(&bytes, regions)?;
        (r.bytes, r.regions)
    } else {
        (bytes, regions.to_vec())
    };
    let mime = match image::guess_format(&bytes) {
        Ok(image::ImageFormat::Jpeg) => "image/jpeg",
        _ => "image/png",
    };
    Ok(ImageAttachment {
        mime: mime.into(),
        bytes,
        text_regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AlignmentDirection, SessionId, TextRegion, RETENTION_WINDOW_MS};
    use crate::gateway::mock::MockProvider;
    use crate::gateway::GatewayConfig;
    use std::sync::Arc;

    fn sample(regions: &[&str]) -> ActivitySample {
        ActivitySample {
            timestamp: 0,
            screenshot_ref: ScreenshotRef::Absent,
            app_title: "Chrome".into(),
            url: Some("https://shop.example.com/cart".into()),
            screen_text: regions
                .iter()
                .map(|t| TextRegion {
                    x: 0,
                    y: 0,
                    width: 4,
                    height: 4,
                    text: t.to_string(),
                    redacted: false,
                })
                .collect(),
        }
    }

    fn image_for(s: &ActivitySample) -> Option<ImageAttachment> {
        Some(
            attachment(
                redact::blank_png(4, 4, [255, 255, 255]),
                &s.screen_text,
                true,
            )
            .unwrap(),
        )
    }

    fn note(created_at: Millis, policy: &str) -> RefinementNote {
        RefinementNote {
            created_at,
            activity_description: "x".into(),
            implicit_intention: "y".into(),
            policy_adjustment: policy.into(),
            direction: AlignmentDirection::from_policy_text(policy).unwrap(),
        }
    }

    fn request<'a>(p: &'a IntentionProfile, s: &'a ActivitySample) -> DetectionRequest<'a> {
        DetectionRequest {
            profile: p,
            sample: s,
            image: image_for(s),
            now: 0,
            threshold: 0.5,
            include_metadata: true,
        }
    }

    #[test]
    fn minimal_prompt_sections() {
        let p = IntentionProfile::new(SessionId::from("s"), "Buy a TV");
        let s = sample(&[]);
        let text = build_prompt(&request(&p, &s));
        assert!(text.starts_with("[General Instruction]"));
        assert!(text.contains("[intention: Buy a TV]"));
        assert!(!text.contains("[Clarification Context]"));
        assert!(!text.contains(GUIDANCE_HEADER));
        assert!(text.contains("Currently active application: Chrome."));
        assert!(text.contains("0.0 — Perfectly relevant"));
        assert!(text.contains("1.0 — Completely irrelevant"));
    }

    #[test]
    fn section_order_and_expansions() {
        let mut p = IntentionProfile::new(SessionId::from("s"), "study");
        p.expanded_activities = (1..=10).map(|i| format!("activity {i}")).collect();
        p.refinements = vec![note(
            0,
            "Output lower score when detecting YouTube search results page for 'HCI lecture'",
        )];
        let s = sample(&[]);
        let text = build_prompt(&request(&p, &s));
        for i in 1..=10 {
            assert!(text.contains(&format!("{i}. activity {i}")));
        }
        let order = [
            "[General Instruction]",
            "[Clarification Context]",
            "[Key Instructions",
            "[Scoring Guidelines]",
            "[Message Writing Guidelines]",
            GUIDANCE_HEADER,
            "[CURRENT SCREEN CONTEXT]",
        ];
        let pos: Vec<usize> = order.iter().map(|m| text.find(m).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
        assert!(text.contains(
            "- Output lower score when detecting YouTube search results page for 'HCI lecture'"
        ));
    }

    #[test]
    fn expired_notes_excluded() {
        let mut p = IntentionProfile::new(SessionId::from("s"), "study");
        p.refinements = vec![note(
            0,
            "Output high alignment (low score output) for zebra when detected.",
        )];
        let s = sample(&[]);
        let mut r = request(&p, &s);
        r.now = RETENTION_WINDOW_MS;
        assert!(build_prompt(&r).contains("zebra"));
        r.now = RETENTION_WINDOW_MS + 1;
        assert!(!build_prompt(&r).contains("zebra"));
    }

    #[test]
    fn degraded_mode_notice() {
        let p = IntentionProfile::new(SessionId::from("s"), "study");
        let s = sample(&[]);
        let mut r = request(&p, &s);
        r.image = None;
        assert!(build_prompt(&r).ends_with(DEGRADED_NOTICE));
    }

    #[test]
    fn benchmark_mode_omits_metadata() {
        let p = IntentionProfile::new(SessionId::from("s"), "study");
        let s = sample(&[]);
        let mut r = request(&p, &s);
        r.include_metadata = false;
        assert!(!build_prompt(&r).contains("[CURRENT SCREEN CONTEXT]"));
    }

    #[test]
    fn keyed_mock_rules() {
        let provider = MockProvider::default()
            .with_keyed_rule("Buy a TV", "shopping cart screenshot", Score::MIN)
            .with_keyed_rule("Write documents", "social feed", Score::MAX);
        let g = Gateway::with_provider(GatewayConfig::mock(), Arc::new(provider));

        let p = IntentionProfile::new(SessionId::from("s"), "Buy a TV");
        let s = sample(&["Shopping cart screenshot"]);
        let a = assess(&g, &request(&p, &s)).unwrap();
        assert_eq!(a.score, Score::MIN);
        assert!(!a.classification.is_off_task());

        let p = IntentionProfile::new(SessionId::from("s"), "Write documents");
        let s = sample(&["Social feed: friends, photos"]);
        let a = assess(&g, &request(&p, &s)).unwrap();
        assert_eq!(a.score, Score::MAX);
        assert!(a.classification.is_off_task());
    }

    // Terms {buy, tv} both appear on screen: 1.0 - 0.2 * 2 = 0.6.
    #[test]
    fn mock_overlap_formula_through_prompt() {
        let g = Gateway::mock();
        let p = IntentionProfile::new(SessionId::from("s"), "Buy a TV");
        let s = sample(&["Cart: 55 inch TV, buy now"]);
        let mut r = request(&p, &s);
        r.include_metadata = false;
        assert_eq!(assess(&g, &r).unwrap().score.value(), 0.6);
    }

    #[test]
    fn snapping_table() {
        for step in 0..=100 {
            let raw = step as f64 / 100.0;
            let v = serde_json::json!({"score": raw, "rationale": "r", "message": "m"});
            let a = parse_assessment(&v, 0.5).unwrap();
            let expected = (raw * 5.0 + 0.5 + 1e-9).floor() / 5.0;
            assert!((a.score.value() - expected).abs() < 1e-12, "{raw}");
            assert_eq!(a.classification.is_off_task(), a.score.value() >= 0.5);
        }
        let v = serde_json::json!({"score": 0.47, "rationale": "", "message": ""});
        assert_eq!(parse_assessment(&v, 0.5).unwrap().score.value(), 0.4);
        let v = serde_json::json!({"score": "0.5", "rationale": "", "message": ""});
        assert_eq!(parse_assessment(&v, 0.5).unwrap().score.value(), 0.6);
    }

    #[test]
    fn unparseable_retried_then_error() {
        let p = Arc::new(MockProvider::default());
        let g = Gateway::with_provider(GatewayConfig::mock(), p.clone());
        p.push_reply(r#"{"rationale":"r","score":"high","message":"m"}"#);
        p.push_reply("garbage");
        let prof = IntentionProfile::new(SessionId::from("s"), "study");
        let s = sample(&[]);
        assert!(assess(&g, &request(&prof, &s)).is_err());
        assert_eq!(p.calls(), 2);
    }
}
