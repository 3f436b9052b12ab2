//! Pattern grammar for PERCENT, MONEY, QUANTITY, ORDINAL, and CARDINAL.

use crate::model::category::Category;
use crate::recognizers::lexicon::{default_lexicon, Lexicon};
use crate::recognizers::{resolve_overlaps, RawMention};
use crate::textkit::{tokenize, Token, TokenKind};

const NUMBER_WORDS: [&str; 25] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty", "hundred", "thousand", "million", "billion",
];

const ORDINAL_WORDS: [&str; 20] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
    "tenth", "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth",
    "seventeenth", "eighteenth", "nineteenth", "twentieth",
];

const CURRENCY_SYMBOLS: [char; 4] = ['$', '€', '£', '¥'];

fn is_number_word(token: &Token) -> bool {
    token.kind == TokenKind::Word
        && NUMBER_WORDS.contains(&token.surface.to_lowercase().as_str())
}

fn is_ordinal_suffix(surface: &str) -> bool {
    ["st", "nd", "rd", "th"]
        .iter()
        .any(|s| surface.eq_ignore_ascii_case(s))
}

fn currency_symbol(token: &Token) -> bool {
    token.surface.chars().count() == 1
        && CURRENCY_SYMBOLS.contains(&token.surface.chars().next().unwrap())
}

/// Recognizes numeric-family entities using the bundled unit and currency
/// tables.
pub fn recognize_numeric(text: &str) -> Vec<RawMention> {
    recognize_numeric_with(text, default_lexicon())
}

/// Candidates, longest-match resolution, and precedence
/// PERCENT > MONEY > QUANTITY > ORDINAL > CARDINAL:
/// - PERCENT: a numeric core followed by "%" or the word "percent".
/// - MONEY: a currency symbol directly adjacent to a number, or a numeric
///   core followed by a currency word or ISO code.
/// - QUANTITY: a numeric core followed by a measurement unit.
/// - ORDINAL: "first".."twentieth", or a digit number with an attached
///   st/nd/rd/th suffix.
/// - CARDINAL: any remaining number token or number word.
pub fn recognize_numeric_with(text: &str, lexicon: &Lexicon) -> Vec<RawMention> {
    let chars: Vec<char> = text.chars().collect();
    let tokens = tokenize(text);
    let mut candidates: Vec<(usize, usize, Category)> = Vec::new();

    for (i, token) in tokens.iter().enumerate() {
        let next = tokens.get(i + 1);
        let numeric_core = token.kind == TokenKind::Number || is_number_word(token);

        if numeric_core {
            candidates.push((token.start, token.end, Category::Cardinal));
            if let Some(follower) = next {
                let surface = follower.surface.as_str();
                if surface == "%" || surface.eq_ignore_ascii_case("percent") {
                    candidates.push((token.start, follower.end, Category::Percent));
                } else if follower.kind == TokenKind::Word && lexicon.is_currency(surface) {
                    candidates.push((token.start, follower.end, Category::Money));
                } else if follower.kind == TokenKind::Word && lexicon.is_unit(surface) {
                    candidates.push((token.start, follower.end, Category::Quantity));
                }
            }
        }

        if token.kind == TokenKind::Number {
            if let Some(follower) = next {
                // Attached ordinal suffix: "1st", "22nd".
                if follower.kind == TokenKind::Word
                    && is_ordinal_suffix(&follower.surface)
                    && follower.start == token.end
                {
                    candidates.push((token.start, follower.end, Category::Ordinal));
                }
                // Trailing currency symbol: "5€".
                if currency_symbol(follower) && follower.start == token.end {
                    candidates.push((token.start, follower.end, Category::Money));
                }
            }
        }

        if currency_symbol(token) {
            if let Some(follower) = next {
                // Leading currency symbol: "$5".
                if follower.kind == TokenKind::Number && follower.start == token.end {
                    candidates.push((token.start, follower.end, Category::Money));
                }
            }
        }

        if token.kind == TokenKind::Word
            && ORDINAL_WORDS.contains(&token.surface.to_lowercase().as_str())
        {
            candidates.push((token.start, token.end, Category::Ordinal));
        }
    }

    resolve_overlaps(&chars, candidates)
}
