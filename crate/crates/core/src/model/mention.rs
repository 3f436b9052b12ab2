//! Entity mention types and the span-fidelity validator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::category::Category;

/// One recognized entity occurrence in a document.
///
/// Offsets count Unicode scalar values from the start of the document text:
/// `start` is 0-based inclusive, `end` exclusive. `surface` must equal the
/// text slice `[start, end)` and `context` must contain `surface`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub category: Category,
    pub start: usize,
    pub end: usize,
    pub context: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub model_id: String,
}

/// A violation of the mention invariants, detected by [`validate_mention`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MentionError {
    #[error("invalid span: start {start} is not below end {end}")]
    EmptySpan { start: usize, end: usize },
    #[error("invalid span: end {end} exceeds length {len}")]
    EndExceedsLength { end: usize, len: usize },
    #[error("slice mismatch: surface {surface:?} but text[{start}..{end}) is {slice:?}")]
    SliceMismatch {
        surface: String,
        slice: String,
        start: usize,
        end: usize,
    },
    #[error("context {context:?} does not contain surface {surface:?}")]
    ContextMissingSurface { context: String, surface: String },
    #[error("score {score} outside [0, 1]")]
    ScoreOutOfRange { score: f64 },
}

/// Extracts the scalar-indexed slice `[start, end)` from `text`, or `None`
/// when the span exceeds the text length.
pub fn scalar_slice(text: &str, start: usize, end: usize) -> Option<String> {
    if start > end {
        return None;
    }
    let mut iter = text.chars();
    let mut out = String::new();
    for _ in 0..start {
        iter.next()?;
    }
    for _ in start..end {
        out.push(iter.next()?);
    }
    Some(out)
}

/// Number of Unicode scalar values in `s`.
pub fn scalar_len(s: &str) -> usize {
    s.chars().count()
}

/// Checks every mention invariant against the source text: non-empty span in
/// bounds, surface equal to the text slice, context containing the surface,
/// and score (when present) within `[0, 1]`.
pub fn validate_mention(mention: &EntityMention, text: &str) -> Result<(), MentionError> {
    if mention.start >= mention.end {
        return Err(MentionError::EmptySpan {
            start: mention.start,
            end: mention.end,
        });
    }
    let len = scalar_len(text);
    if mention.end > len {
        return Err(MentionError::EndExceedsLength {
            end: mention.end,
            len,
        });
    }
    let slice = scalar_slice(text, mention.start, mention.end)
        .expect("span bounds were checked against the text length");
    if slice != mention.surface {
        return Err(MentionError::SliceMismatch {
            surface: mention.surface.clone(),
            slice,
            start: mention.start,
            end: mention.end,
        });
    }
    if !mention.context.contains(&mention.surface) {
        return Err(MentionError::ContextMissingSurface {
            context: mention.context.clone(),
            surface: mention.surface.clone(),
        });
    }
    if let Some(score) = mention.score {
        if !(0.0..=1.0).contains(&score) || score.is_nan() {
            return Err(MentionError::ScoreOutOfRange { score });
        }
    }
    Ok(())
}
