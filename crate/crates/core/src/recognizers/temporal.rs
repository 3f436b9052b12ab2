//! Pattern grammar for DATE and TIME.

use crate::model::category::Category;
use crate::recognizers::{resolve_overlaps, RawMention};
use crate::textkit::{tokenize, Token, TokenKind};

const MONTHS: [(&str, u32); 12] = [
    ("january", 1),
    ("february", 2),
    ("march", 3),
    ("april", 4),
    ("may", 5),
    ("june", 6),
    ("july", 7),
    ("august", 8),
    ("september", 9),
    ("october", 10),
    ("november", 11),
    ("december", 12),
];

const WEEKDAYS: [&str; 7] = [
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];

const RELATIVE_DAYS: [&str; 3] = ["today", "yesterday", "tomorrow"];

/// Month number for a full name or three-letter abbreviation ("sept" also
/// accepted), case-insensitive. Month words only count inside composite
/// patterns, never alone, so "May" the name does not become a date.
fn month_value(surface: &str) -> Option<u32> {
    let folded = surface.to_lowercase();
    for (name, value) in MONTHS {
        if folded == name || (folded.len() == 3 && name.starts_with(&folded)) {
            return Some(value);
        }
    }
    (folded == "sept").then_some(9)
}

/// The token's value when it is a plain digit run (no grouping marks).
fn digits(token: &Token) -> Option<(u32, usize)> {
    if token.kind != TokenKind::Number || !token.surface.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    token
        .surface
        .parse::<u32>()
        .ok()
        .map(|value| (value, token.surface.len()))
}

fn is_day(token: &Token) -> bool {
    matches!(digits(token), Some((value, len)) if (1..=31).contains(&value) && len <= 2)
}

fn is_four_digit_year(token: &Token) -> bool {
    matches!(digits(token), Some((value, 4)) if (1000..=2999).contains(&value))
}

fn adjacent(a: &Token, b: &Token) -> bool {
    a.end == b.start
}

/// Recognizes DATE and TIME entities:
/// - DATE: "12 March 2021", "March 12, 2021" (comma optional), slash dates
///   with a day/month or month/day reading, dashed year-month-day,
///   standalone years 1000-2999, decades ("1990s"), weekday names, and
///   "today"/"yesterday"/"tomorrow".
/// - TIME: "hh:mm(:ss)" with optional am/pm, "h am/pm", "noon", "midnight".
pub fn recognize_temporal(text: &str) -> Vec<RawMention> {
    let chars: Vec<char> = text.chars().collect();
    let tokens = tokenize(text);
    let mut candidates: Vec<(usize, usize, Category)> = Vec::new();

    for (i, token) in tokens.iter().enumerate() {
        if token.kind == TokenKind::Word {
            let folded = token.surface.to_lowercase();
            if WEEKDAYS.contains(&folded.as_str()) || RELATIVE_DAYS.contains(&folded.as_str()) {
                candidates.push((token.start, token.end, Category::Date));
            }
            if folded == "noon" || folded == "midnight" {
                candidates.push((token.start, token.end, Category::Time));
            }
            // MONTH D [,] YYYY
            if month_value(&token.surface).is_some() {
                if let Some(day) = tokens.get(i + 1).filter(|t| is_day(t)) {
                    let after_day = tokens.get(i + 2);
                    if let Some(year) = after_day.filter(|t| is_four_digit_year(t)) {
                        candidates.push((token.start, year.end, Category::Date));
                    } else if after_day.map(|t| t.surface == ",") == Some(true)
                        && adjacent(day, after_day.unwrap())
                    {
                        if let Some(year) = tokens.get(i + 3).filter(|t| is_four_digit_year(t)) {
                            candidates.push((token.start, year.end, Category::Date));
                        }
                    }
                }
            }
        }

        if token.kind == TokenKind::Number {
            // D MONTH YYYY
            if is_day(token) {
                if let Some(month) = tokens.get(i + 1) {
                    if month_value(&month.surface).is_some() {
                        if let Some(year) = tokens.get(i + 2).filter(|t| is_four_digit_year(t)) {
                            candidates.push((token.start, year.end, Category::Date));
                        }
                    }
                }
            }
            // Slash date: d/m/y or m/d/y, components attached.
            if let Some(span) = slash_date(&tokens, i) {
                candidates.push((span.0, span.1, Category::Date));
            }
            // Dashed date: yyyy-mm-dd.
            if let Some(span) = dashed_date(&tokens, i) {
                candidates.push((span.0, span.1, Category::Date));
            }
            // Standalone year and decades.
            if is_four_digit_year(token) {
                candidates.push((token.start, token.end, Category::Date));
                let value = digits(token).unwrap().0;
                if value % 10 == 0 {
                    if let Some(suffix) = tokens.get(i + 1) {
                        if suffix.surface.eq_ignore_ascii_case("s") && adjacent(token, suffix) {
                            candidates.push((token.start, suffix.end, Category::Date));
                        }
                    }
                }
            }
            // Clock times and "h am/pm".
            if let Some(span) = clock_time(&tokens, i) {
                candidates.push((span.0, span.1, Category::Time));
            } else if let Some((hour, len)) = digits(token) {
                if (1..=12).contains(&hour) && len <= 2 {
                    if let Some(meridiem) = tokens.get(i + 1).filter(|t| is_meridiem(t)) {
                        candidates.push((token.start, meridiem.end, Category::Time));
                    }
                }
            }
        }
    }

    resolve_overlaps(&chars, candidates)
}

fn is_meridiem(token: &Token) -> bool {
    token.surface.eq_ignore_ascii_case("am") || token.surface.eq_ignore_ascii_case("pm")
}

fn slash_date(tokens: &[Token], i: usize) -> Option<(usize, usize)> {
    let a = &tokens[i];
    let sep1 = tokens.get(i + 1)?;
    let b = tokens.get(i + 2)?;
    let sep2 = tokens.get(i + 3)?;
    let c = tokens.get(i + 4)?;
    if sep1.surface != "/" || sep2.surface != "/" {
        return None;
    }
    if !(adjacent(a, sep1) && adjacent(sep1, b) && adjacent(b, sep2) && adjacent(sep2, c)) {
        return None;
    }
    let (av, alen) = digits(a)?;
    let (bv, blen) = digits(b)?;
    let (cv, clen) = digits(c)?;
    if alen > 2 || blen > 2 || !(clen == 2 || clen == 4) {
        return None;
    }
    if av == 0 || bv == 0 || cv == 0 {
        return None;
    }
    // Accept either a day/month or month/day reading.
    let plausible = (av <= 31 && bv <= 12) || (av <= 12 && bv <= 31);
    plausible.then_some((a.start, c.end))
}

fn dashed_date(tokens: &[Token], i: usize) -> Option<(usize, usize)> {
    let year = &tokens[i];
    let sep1 = tokens.get(i + 1)?;
    let month = tokens.get(i + 2)?;
    let sep2 = tokens.get(i + 3)?;
    let day = tokens.get(i + 4)?;
    if sep1.surface != "-" || sep2.surface != "-" {
        return None;
    }
    if !(adjacent(year, sep1)
        && adjacent(sep1, month)
        && adjacent(month, sep2)
        && adjacent(sep2, day))
    {
        return None;
    }
    if !is_four_digit_year(year) {
        return None;
    }
    let (mv, mlen) = digits(month)?;
    let (dv, dlen) = digits(day)?;
    if mlen > 2 || dlen > 2 || !(1..=12).contains(&mv) || !(1..=31).contains(&dv) {
        return None;
    }
    Some((year.start, day.end))
}

fn clock_time(tokens: &[Token], i: usize) -> Option<(usize, usize)> {
    let hour = &tokens[i];
    let colon1 = tokens.get(i + 1)?;
    let minute = tokens.get(i + 2)?;
    if colon1.surface != ":" || !adjacent(hour, colon1) || !adjacent(colon1, minute) {
        return None;
    }
    let (hv, hlen) = digits(hour)?;
    let (mv, mlen) = digits(minute)?;
    if hv > 23 || hlen > 2 || mv > 59 || mlen != 2 {
        return None;
    }
    let mut end = minute.end;
    let mut next_index = i + 3;
    // Optional seconds.
    if let (Some(colon2), Some(second)) = (tokens.get(i + 3), tokens.get(i + 4)) {
        if colon2.surface == ":"
            && adjacent(minute, colon2)
            && adjacent(colon2, second)
            && matches!(digits(second), Some((sv, 2)) if sv <= 59)
        {
            end = second.end;
            next_index = i + 5;
        }
    }
    if let Some(meridiem) = tokens.get(next_index) {
        if is_meridiem(meridiem) {
            end = meridiem.end;
        }
    }
    Some((hour.start, end))
}
