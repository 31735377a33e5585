//! Prompt text assets and placeholder substitution.
//!
//! Templates use `{name}` placeholders. Only the names passed to [`render`]
//! are substituted; any other brace group (the message examples contain
//! `{details}`) is left verbatim. Substitution is single-pass, so inserted
//! values are never re-scanned.

/// Version tag of the bundled prompt set.
pub const PROMPT_VERSION: &str = "1";

pub const CLARIFY_QUESTION: &str = include_str!("../assets/prompts/clarify_question.txt");
pub const EXPAND_INTENTION: &str = include_str!("../assets/prompts/expand_intention.txt");
pub const DETECT_GENERAL: &str = include_str!("../assets/prompts/detect_general.txt");
pub const DETECT_CLARIFICATION: &str = include_str!("../assets/prompts/detect_clarification.txt");
pub const DETECT_INSTRUCTIONS: &str = include_str!("../assets/prompts/detect_instructions.txt");
pub const DETECT_SCREEN_CONTEXT: &str = include_str!("../assets/prompts/detect_screen_context.txt");
pub const REFLECT: &str = include_str!("../assets/prompts/reflect.txt");

pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let substituted = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match substituted {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
