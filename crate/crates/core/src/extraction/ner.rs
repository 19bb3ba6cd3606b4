//! Deterministic rule-based named-entity recognizer.
//!
//! An entity is a maximal run of capitalized words, optionally bridged by
//! lowercase name connectors (`of`, `del`, `van`, ...) and extended by
//! numeric words directly attached to it (`1979-80 European Cup`). Capitalized
//! function words such as `The` or `When` never start a run. Numbers outside a
//! run are kept only when they look like years (`1970`, `1979-80`, `1990s`).

use crate::error::Result;

pub trait EntityRecognizer: Send + Sync {
    fn name(&self) -> &str;

    /// Surface forms in text order; duplicates allowed.
    fn recognize(&self, text: &str) -> Result<Vec<String>>;
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "although", "an", "and", "any", "are", "as", "at", "be", "because", "been",
    "before", "both", "but", "by", "can", "could", "did", "do", "does", "during", "each", "either", "every", "few",
    "for", "from", "had", "has", "have", "he", "her", "here", "hers", "him", "his", "how", "however", "i", "if", "in",
    "into", "is", "it", "its", "later", "many", "may", "me", "might", "more", "most", "my", "neither", "no", "nor",
    "not", "of", "on", "once", "one", "or", "our", "she", "should", "since", "so", "some", "such", "than", "that",
    "the", "their", "them", "then", "there", "these", "they", "this", "those", "though", "thus", "to", "under",
    "until", "upon", "was", "we", "were", "what", "when", "where", "whether", "which", "while", "who", "whom", "whose",
    "why", "will", "with", "would", "yes", "yet", "you", "your",
];

const CONNECTORS: &[&str] = &[
    "of", "de", "del", "della", "der", "den", "des", "di", "da", "du", "la", "le", "van", "von", "y", "al", "bin",
    "ibn",
];

const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '\u{2018}', '\u{201C}'];
const TRAILING: &[char] = &[
    ',', ';', ':', '!', '?', '"', '\'', ')', ']', '}', '\u{2019}', '\u{201D}',
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Capital,
    Number,
    Connector,
    Other,
}

#[derive(Debug)]
struct Word<'a> {
    text: &'a str,
    kind: Kind,
    /// punctuation after the word closes any open run
    breaks: bool,
    sentence_initial: bool,
}

fn classify(word: &str) -> Kind {
    let Some(first) = word.chars().next() else {
        return Kind::Other;
    };
    if first.is_uppercase() {
        Kind::Capital
    } else if first.is_ascii_digit() {
        Kind::Number
    } else if CONNECTORS.contains(&word) {
        Kind::Connector
    } else {
        Kind::Other
    }
}

fn is_year(word: &str) -> bool {
    let b = word.as_bytes();
    let digits = |s: &[u8]| s.iter().all(u8::is_ascii_digit);
    match b.len() {
        4 => digits(b),
        5 => digits(&b[..4]) && b[4] == b's',
        7 | 9 => digits(&b[..4]) && b[4] == b'-' && digits(&b[5..]),
        _ => false,
    }
}

fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut sentence_initial = true;
    for raw in text.split_whitespace() {
        let ends_sentence = raw.trim_end_matches(TRAILING).ends_with(['.', '?', '!']) || raw.ends_with(['?', '!']);
        let mut w = raw.trim_start_matches(OPENERS);
        let before = w.len();
        w = w.trim_end_matches(TRAILING);
        let mut breaks = w.len() != before;
        if let Some(stripped) = w.strip_suffix('.') {
            if !stripped.contains('.') {
                w = stripped;
                breaks = true;
            }
        }
        for suffix in ["'s", "\u{2019}s"] {
            if let Some(stripped) = w.strip_suffix(suffix) {
                w = stripped;
                breaks = true;
            }
        }
        let w = w.trim_end_matches(TRAILING);
        if !w.is_empty() {
            out.push(Word {
                text: w,
                kind: classify(w),
                breaks,
                sentence_initial,
            });
        } else if let Some(last) = out.last_mut() {
            last.breaks = true;
        }
        sentence_initial = ends_sentence;
    }
    out
}

/// The default recognizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleNer;

impl RuleNer {
    pub fn entities(&self, text: &str) -> Vec<String> {
        let words = words(text);
        let mut out = Vec::new();
        let mut run: Vec<&Word> = Vec::new();

        let close = |run: &mut Vec<&Word>, out: &mut Vec<String>| {
            while run.last().is_some_and(|w| w.kind == Kind::Connector) {
                run.pop();
            }
            if run.iter().any(|w| w.kind == Kind::Capital) {
                out.push(run.iter().map(|w| w.text).collect::<Vec<_>>().join(" "));
            } else {
                out.extend(run.iter().filter(|w| is_year(w.text)).map(|w| w.text.to_string()));
            }
            run.clear();
        };

        for (i, w) in words.iter().enumerate() {
            match w.kind {
                Kind::Capital => {
                    let lower = w.text.to_lowercase();
                    if STOPWORDS.contains(&lower.as_str()) {
                        close(&mut run, &mut out);
                        continue;
                    }
                    run.push(w);
                }
                Kind::Number => run.push(w),
                Kind::Connector => {
                    let bridges = !run.is_empty()
                        && !run.last().is_some_and(|p| p.breaks)
                        && words.get(i + 1).is_some_and(|n| {
                            n.kind == Kind::Capital
                                && !n.sentence_initial
                                && !STOPWORDS.contains(&n.text.to_lowercase().as_str())
                        });
                    if bridges {
                        run.push(w);
                    } else {
                        close(&mut run, &mut out);
                    }
                }
                Kind::Other => close(&mut run, &mut out),
            }
            if w.breaks {
                close(&mut run, &mut out);
            }
        }
        close(&mut run, &mut out);
        out
    }
}

impl EntityRecognizer for RuleNer {
    fn name(&self) -> &str {
        "rule-ner"
    }

    fn recognize(&self, text: &str) -> Result<Vec<String>> {
        Ok(self.entities(text))
    }
}
