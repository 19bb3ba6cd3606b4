//! Rule-based sentence segmentation.
//!
//! A sentence ends at a run of `.`, `?` or `!` (plus any closing quotes or
//! brackets) that is followed by whitespace or the end of input, or at a blank
//! line. A single period after a known abbreviation does not end a sentence:
//! titles such as `Dr.` never split, and other abbreviations (including
//! dotted forms like `U.S.` or `F.C.`) split only when the next word starts
//! with an uppercase letter.

const TITLES: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "st", "sr", "jr", "gen", "col", "lt", "sgt", "capt", "rev", "hon", "mt", "ft",
    "no", "vs", "v", "fig", "sen", "rep", "gov", "pres",
];

const ABBREVIATIONS: &[&str] = &[
    "etc", "inc", "ltd", "co", "corp", "bros", "approx", "al", "ca", "cf", "jan", "feb", "mar", "apr", "jun", "jul",
    "aug", "sep", "sept", "oct", "nov", "dec", "dept", "est", "vol", "ed",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{2019}', '\u{201D}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '\u{2018}', '\u{201C}'];

fn is_terminal(ch: char) -> bool {
    matches!(ch, '.' | '?' | '!')
}

/// Splits `text` into trimmed, non-empty sentences in source order.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    fn push<'a>(text: &'a str, from: usize, to: usize, out: &mut Vec<&'a str>) {
        let s = text[from..to].trim();
        if !s.is_empty() {
            out.push(s);
        }
    }

    while i < chars.len() {
        let (pos, ch) = chars[i];

        if ch == '\n' {
            // blank line: newline, optional horizontal space, newline
            let mut j = i + 1;
            while j < chars.len() && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                push(text, start, pos, &mut out);
                start = chars[j].0;
                i = j + 1;
                continue;
            }
        }

        if !is_terminal(ch) {
            i += 1;
            continue;
        }

        let run_start = i;
        let mut j = i;
        while j < chars.len() && is_terminal(chars[j].1) {
            j += 1;
        }
        let run_len = j - run_start;
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end = if j < chars.len() { chars[j].0 } else { text.len() };
        let at_boundary = j >= chars.len() || chars[j].1.is_whitespace();

        if at_boundary && !(run_len == 1 && ch == '.' && is_abbreviation_stop(text, pos, &chars[j..])) {
            push(text, start, end, &mut out);
            start = end;
        }
        i = j;
    }
    push(text, start, text.len(), &mut out);
    out
}

/// Decides whether the period at byte `dot` belongs to an abbreviation that
/// should not end the sentence. `rest` is the input after the period.
fn is_abbreviation_stop(text: &str, dot: usize, rest: &[(usize, char)]) -> bool {
    let before = &text[..dot];
    let word_start = before
        .rfind(char::is_whitespace)
        .map(|p| p + before[p..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = before[word_start..].trim_start_matches(OPENERS);
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if TITLES.contains(&lower.as_str()) {
        return true;
    }
    let dotted = word.contains('.') && word.chars().any(char::is_alphabetic);
    if dotted || ABBREVIATIONS.contains(&lower.as_str()) {
        let next = rest.iter().map(|&(_, c)| c).find(|c| !c.is_whitespace());
        return match next {
            Some(c) => !c.is_uppercase(),
            None => false,
        };
    }
    false
}
