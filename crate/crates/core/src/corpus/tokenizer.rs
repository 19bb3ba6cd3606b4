use std::ops::Range;

/// Splits text into tokens identified by byte spans into the source.
///
/// Implementations must be deterministic, and the spans they return must be
/// non-overlapping and in ascending order. `count` and `tokens` are derived
/// from `spans`, so `count(t) == tokens(t).len()` holds for every tokenizer.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn tokens<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text).into_iter().map(|r| &text[r]).collect()
    }

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

/// Whitespace and punctuation tokenizer.
///
/// A token is either a maximal run of alphanumeric characters or a single
/// non-whitespace, non-alphanumeric character. Whitespace never appears inside
/// a token, so splitting text between two tokens never changes the count.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn name(&self) -> &str {
        "words"
    }

    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut run_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if run_start.is_none() {
                    run_start = Some(i);
                }
                continue;
            }
            if let Some(start) = run_start.take() {
                spans.push(start..i);
            }
            if !ch.is_whitespace() {
                spans.push(i..i + ch.len_utf8());
            }
        }
        if let Some(start) = run_start {
            spans.push(start..text.len());
        }
        spans
    }
}

/// Pure whitespace splitting; punctuation stays attached to words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut run_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if let Some(start) = run_start.take() {
                    spans.push(start..i);
                }
            } else if run_start.is_none() {
                run_start = Some(i);
            }
        }
        if let Some(start) = run_start {
            spans.push(start..text.len());
        }
        spans
    }
}

/// Looks up a built-in tokenizer by name.
pub fn tokenizer_by_name(name: &str) -> Option<Box<dyn Tokenizer>> {
    match name {
        "words" => Some(Box::new(WordTokenizer)),
        "whitespace" => Some(Box::new(WhitespaceTokenizer)),
        _ => None,
    }
}
