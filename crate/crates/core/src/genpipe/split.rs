//! Rule-based sentence splitter.
//!
//! A boundary is a run of terminators (`.`, `!`, `?`, `…`), optionally followed by
//! closing quotes or brackets, that is followed either by the end of the text or by
//! whitespace and then an uppercase letter (possibly behind an opening quote). A single
//! `.` closing one of [`ABBREVIATIONS`] is never a boundary.

/// Recorded in run manifests; bump whenever the rules change.
pub const SPLITTER_VERSION: &str = "rule-splitter/1";

pub const ABBREVIATIONS: &[&str] = &["mr.", "mrs.", "dr.", "e.g.", "i.e.", "etc.", "vs.", "st."];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’' | '»')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '“' | '‘' | '«')
}

/// Word ending at byte offset `end` (exclusive), lowercased, leading openers dropped.
fn word_before(text: &str, end: usize) -> String {
    let start = text[..end]
        .rfind(char::is_whitespace)
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    text[start..end].trim_start_matches(is_opener).to_lowercase()
}

fn starts_like_sentence(rest: &str) -> bool {
    let mut chars = rest.chars();
    match chars.next() {
        Some(c) if c.is_uppercase() => true,
        Some(c) if is_opener(c) => chars.next().is_some_and(char::is_uppercase),
        _ => false,
    }
}

pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let run_single_period = j == i + 1 && c == '.';
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |(p, _)| *p);
        let rest = &text[end..];
        let boundary = if rest.trim().is_empty() {
            true
        } else {
            rest.starts_with(char::is_whitespace) && starts_like_sentence(rest.trim_start())
        };
        let abbreviation = run_single_period
            && ABBREVIATIONS.contains(&word_before(text, pos + c.len_utf8()).as_str());
        if boundary && !abbreviation {
            let sentence = text[start..end].trim();
            if !sentence.is_empty() {
                sentences.push(sentence.to_string());
            }
            start = end;
        }
        i = j.max(i + 1);
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}
