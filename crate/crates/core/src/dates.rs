//! Rewrites relative date expressions as absolute ISO dates, anchored at a
//! document's publication date.
//!
//! Covered phrases (case-insensitive, whole words): `today`, `yesterday`,
//! `tomorrow`, `N days ago` (digits or `one`..`twenty`), `last|this|next
//! <weekday>`, and `last week|month|year`. Weeks render as ISO weeks
//! (`2025-W07`), months as `YYYY-MM`, years as `YYYY`.

use alloc::format;
use alloc::string::String;
use chrono::{Datelike, Days, NaiveDate, Weekday};

const NUMBER_WORDS: [&str; 20] = [
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

const WEEKDAYS: [(&str, Weekday); 7] = [
    ("monday", Weekday::Mon),
    ("tuesday", Weekday::Tue),
    ("wednesday", Weekday::Wed),
    ("thursday", Weekday::Thu),
    ("friday", Weekday::Fri),
    ("saturday", Weekday::Sat),
    ("sunday", Weekday::Sun),
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// End of `word` at `p` when it matches case-insensitively as a whole word.
fn word_at(s: &str, p: usize, word: &str) -> Option<usize> {
    let end = p + word.len();
    let candidate = s.get(p..end)?;
    if !candidate.eq_ignore_ascii_case(word) {
        return None;
    }
    match s[end..].chars().next() {
        Some(c) if is_word_char(c) => None,
        _ => Some(end),
    }
}

fn any_word_at<T: Copy>(s: &str, p: usize, words: &[(&str, T)]) -> Option<(usize, T)> {
    words.iter().find_map(|&(w, v)| word_at(s, p, w).map(|e| (e, v)))
}

/// Skips at least one whitespace character.
fn gap(s: &str, p: usize) -> Option<usize> {
    let n: usize = s[p..].chars().take_while(|c| c.is_whitespace()).map(char::len_utf8).sum();
    (n > 0).then_some(p + n)
}

fn count_at(s: &str, p: usize) -> Option<(usize, u64)> {
    let digits = s[p..].bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        if digits > 4 || s[p + digits..].chars().next().is_some_and(is_word_char) {
            return None;
        }
        return s[p..p + digits].parse().ok().map(|n| (p + digits, n));
    }
    NUMBER_WORDS.iter().enumerate().find_map(|(i, w)| word_at(s, p, w).map(|e| (e, i as u64 + 1)))
}

fn iso(d: NaiveDate) -> String {
    format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day())
}

fn shift(anchor: NaiveDate, days: i64) -> Option<NaiveDate> {
    if days >= 0 {
        anchor.checked_add_days(Days::new(days as u64))
    } else {
        anchor.checked_sub_days(Days::new(days.unsigned_abs()))
    }
}

/// Most recent `day` strictly before `anchor`.
pub fn last_weekday(anchor: NaiveDate, day: Weekday) -> Option<NaiveDate> {
    let back = (anchor.weekday().num_days_from_monday() + 7 - day.num_days_from_monday()) % 7;
    shift(anchor, -(if back == 0 { 7 } else { back as i64 }))
}

/// First `day` strictly after `anchor`.
pub fn next_weekday(anchor: NaiveDate, day: Weekday) -> Option<NaiveDate> {
    let ahead = (day.num_days_from_monday() + 7 - anchor.weekday().num_days_from_monday()) % 7;
    shift(anchor, if ahead == 0 { 7 } else { ahead as i64 })
}

/// `day` within the Monday-to-Sunday week containing `anchor`.
pub fn this_weekday(anchor: NaiveDate, day: Weekday) -> Option<NaiveDate> {
    shift(anchor, day.num_days_from_monday() as i64 - anchor.weekday().num_days_from_monday() as i64)
}

fn match_phrase(s: &str, p: usize, anchor: NaiveDate) -> Option<(usize, String)> {
    // N days ago
    let prev = s[..p].chars().next_back();
    if !matches!(prev, Some('-')) {
        if let Some((e, n)) = count_at(s, p) {
            let q = gap(s, e)?;
            if let Some(e) = word_at(s, q, "days").or_else(|| word_at(s, q, "day")) {
                let q = gap(s, e)?;
                if let Some(e) = word_at(s, q, "ago") {
                    return shift(anchor, -(n as i64)).map(|d| (e, iso(d)));
                }
            }
            return None;
        }
    }
    for (lead, kind) in [("last", 0), ("this", 1), ("next", 2)] {
        let Some(e) = word_at(s, p, lead) else { continue };
        let q = gap(s, e)?;
        if let Some((e, day)) = any_word_at(s, q, &WEEKDAYS) {
            let date = match kind {
                0 => last_weekday(anchor, day),
                1 => this_weekday(anchor, day),
                _ => next_weekday(anchor, day),
            }?;
            return Some((e, iso(date)));
        }
        if kind != 0 {
            return None;
        }
        if let Some(e) = word_at(s, q, "week") {
            let w = shift(anchor, -7)?.iso_week();
            return Some((e, format!("{:04}-W{:02}", w.year(), w.week())));
        }
        if let Some(e) = word_at(s, q, "month") {
            let d = anchor.with_day(1)?.pred_opt()?;
            return Some((e, format!("{:04}-{:02}", d.year(), d.month())));
        }
        if let Some(e) = word_at(s, q, "year") {
            return Some((e, format!("{:04}", anchor.year() - 1)));
        }
        return None;
    }
    for (word, offset) in [("today", 0), ("yesterday", -1), ("tomorrow", 1)] {
        if let Some(e) = word_at(s, p, word) {
            return shift(anchor, offset).map(|d| (e, iso(d)));
        }
    }
    None
}

/// Replaces every covered relative-date phrase in `text`. Text outside the
/// matched phrases is copied unchanged.
pub fn normalize_relative_dates(text: &str, publish_date: NaiveDate) -> String {
    let mut out = String::with_capacity(text.len());
    let mut p = 0;
    let mut prev_word = false;
    while p < text.len() {
        if !prev_word {
            if let Some((end, replacement)) = match_phrase(text, p, publish_date) {
                out.push_str(&replacement);
                p = end;
                prev_word = true;
                continue;
            }
        }
        let c = text[p..].chars().next().unwrap_or_default();
        out.push(c);
        prev_word = is_word_char(c);
        p += c.len_utf8();
    }
    out
}
