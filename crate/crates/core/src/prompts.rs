//! Versioned prompt templates.

pub const EXTRACT_UNITS_V1: &str = include_str!("../assets/extract_units.v1.txt");
pub const GENERATE_ANSWER_V1: &str = include_str!("../assets/generate_answer.v1.txt");
pub const QUERY_ENTITIES_V1: &str = include_str!("../assets/query_entities.v1.txt");

/// Appended to the extraction prompt when a reply could not be parsed.
pub const JSON_REMINDER: &str = "JUST OUTPUT THE RESULTS IN JSON FORMAT!";

/// Fills `{name}` placeholders in a single left-to-right pass, so values that
/// themselves contain placeholder syntax are inserted verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in vars {
            let len = name.len() + 2;
            if tail.len() >= len && tail[1..].starts_with(name) && tail.as_bytes()[len - 1] == b'}' {
                out.push_str(value);
                rest = &tail[len..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

pub fn extraction_prompt(passage: &str) -> String {
    render(EXTRACT_UNITS_V1, &[("passage", passage)])
}

pub fn generation_prompt(context: &str, question: &str) -> String {
    render(GENERATE_ANSWER_V1, &[("context", context), ("question", question)])
}

pub fn query_entities_prompt(question: &str) -> String {
    render(QUERY_ENTITIES_V1, &[("question", question)])
}
