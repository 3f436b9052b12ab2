//! Offset-preserving tokenization, sentence segmentation, and context
//! extraction. All offsets count Unicode scalar values.

use thiserror::Error;

use crate::model::settings::ContextPolicy;

/// A sentence-context union longer than this many scalars falls back to a
/// fixed window, keeping result files bounded.
pub const SENTENCE_CONTEXT_CAP: usize = 500;
/// Window size used for that fallback.
pub const FALLBACK_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Number,
    Punctuation,
    Symbol,
}

/// One token. `text[start, end)` equals `surface`; whitespace is never part
/// of a token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

/// A sentence, trimmed to its first and last non-whitespace scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextError {
    #[error("invalid span [{start}, {end}) for text of length {len}")]
    Bounds { start: usize, end: usize, len: usize },
}

/// Deterministic rule-based segmentation.
///
/// A word is a maximal run of alphabetic scalars, allowing an internal
/// apostrophe or hyphen between letters. A number is a maximal run of ASCII
/// digits, allowing an internal comma or dot between digits. Every other
/// non-whitespace scalar stands alone: ASCII punctuation as `Punctuation`,
/// anything else as `Symbol`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphabetic() {
            let mut j = i + 1;
            while j < chars.len() {
                if chars[j].is_alphabetic() {
                    j += 1;
                } else if matches!(chars[j], '\'' | '-')
                    && j + 1 < chars.len()
                    && chars[j + 1].is_alphabetic()
                {
                    j += 2;
                } else {
                    break;
                }
            }
            tokens.push(Token {
                surface: chars[i..j].iter().collect(),
                start: i,
                end: j,
                kind: TokenKind::Word,
            });
            i = j;
        } else if c.is_ascii_digit() {
            let mut j = i + 1;
            while j < chars.len() {
                if chars[j].is_ascii_digit() {
                    j += 1;
                } else if matches!(chars[j], ',' | '.')
                    && j + 1 < chars.len()
                    && chars[j + 1].is_ascii_digit()
                {
                    j += 2;
                } else {
                    break;
                }
            }
            tokens.push(Token {
                surface: chars[i..j].iter().collect(),
                start: i,
                end: j,
                kind: TokenKind::Number,
            });
            i = j;
        } else {
            tokens.push(Token {
                surface: c.to_string(),
                start: i,
                end: i + 1,
                kind: if c.is_ascii() {
                    TokenKind::Punctuation
                } else {
                    TokenKind::Symbol
                },
            });
            i += 1;
        }
    }
    tokens
}

/// Words that end with "." without ending a sentence, lowercased.
const ABBREVIATIONS: [&str; 28] = [
    "mr", "mrs", "ms", "dr", "prof", "jr", "sr", "st", "vs", "etc", "fig", "inc", "ltd", "co",
    "corp", "dept", "est", "al", "no", "vol", "jan", "feb", "mar", "apr", "aug", "oct", "nov",
    "dec",
];

fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    // Maximal letter run ending just before the dot.
    let mut k = dot;
    while k > 0 && chars[k - 1].is_alphabetic() {
        k -= 1;
    }
    if k == dot {
        return false;
    }
    let run: String = chars[k..dot].iter().collect();
    let single = dot - k == 1;
    // Single uppercase letters are initials ("J. Smith"); a single letter
    // preceded by another dot is part of a dotted form ("e.g.", "U.S.").
    if single && (chars[k].is_uppercase() || (k > 0 && chars[k - 1] == '.')) {
        return true;
    }
    ABBREVIATIONS.contains(&run.to_lowercase().as_str())
}

/// Splits `text` into sentence spans.
///
/// A boundary falls after '.', '!' or '?' when followed by whitespace and an
/// uppercase letter, or at end of text. Abbreviations and initials suppress
/// '.' boundaries. Spans are trimmed to non-whitespace; together they cover
/// every non-whitespace scalar exactly once.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut boundaries = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        if c == '.' && is_abbreviation(&chars, i) {
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        if j == chars.len() || (j > i + 1 && chars[j].is_uppercase()) {
            boundaries.push(i + 1);
        }
    }
    boundaries.push(chars.len());

    let mut spans = Vec::new();
    let mut seg_start = 0;
    for &seg_end in &boundaries {
        if let Some(span) = trim_span(&chars, seg_start, seg_end) {
            spans.push(span);
        }
        seg_start = seg_end;
    }
    spans
}

fn trim_span(chars: &[char], mut start: usize, mut end: usize) -> Option<SentenceSpan> {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    (start < end).then_some(SentenceSpan { start, end })
}

/// Precomputed per-document state for repeated context lookups.
pub struct ContextBuilder {
    chars: Vec<char>,
    sentences: Vec<SentenceSpan>,
    policy: ContextPolicy,
}

impl ContextBuilder {
    pub fn new(text: &str, policy: ContextPolicy) -> Self {
        let sentences = match policy {
            ContextPolicy::Sentence => split_sentences(text),
            ContextPolicy::Window { .. } => Vec::new(),
        };
        ContextBuilder {
            chars: text.chars().collect(),
            sentences,
            policy,
        }
    }

    /// The context string for the mention span `[start, end)`. Always
    /// contains the mention slice.
    pub fn context(&self, start: usize, end: usize) -> Result<String, ContextError> {
        if start >= end || end > self.chars.len() {
            return Err(ContextError::Bounds {
                start,
                end,
                len: self.chars.len(),
            });
        }
        let (from, to) = match self.policy {
            ContextPolicy::Window { chars } => self.window(start, end, chars),
            ContextPolicy::Sentence => {
                let (from, to) = self.sentence_union(start, end);
                if to - from > SENTENCE_CONTEXT_CAP {
                    self.window(start, end, FALLBACK_WINDOW)
                } else {
                    (from, to)
                }
            }
        };
        Ok(self.chars[from..to].iter().collect())
    }

    fn window(&self, start: usize, end: usize, n: usize) -> (usize, usize) {
        (start.saturating_sub(n), (end + n).min(self.chars.len()))
    }

    fn sentence_union(&self, start: usize, end: usize) -> (usize, usize) {
        let mut from = usize::MAX;
        let mut to = 0;
        for span in &self.sentences {
            if span.start < end && start < span.end {
                from = from.min(span.start);
                to = to.max(span.end);
            }
        }
        if from == usize::MAX {
            // Mention sits entirely in whitespace between sentences.
            (start, end)
        } else {
            (from.min(start), to.max(end))
        }
    }
}

/// One-shot context extraction; see [`ContextBuilder`] for repeated use.
pub fn extract_context(
    text: &str,
    start: usize,
    end: usize,
    policy: ContextPolicy,
) -> Result<String, ContextError> {
    ContextBuilder::new(text, policy).context(start, end)
}
