//! Text cleaning and the shared metric tokenizer.

use unicode_general_category::{get_general_category, GeneralCategory};

/// Code points dropped by [`clean_text`]: symbol categories So/Sk, the control
/// and format categories (Cc, Cf, Co, Cs) and emoji variation selectors.
fn is_interfering(c: char) -> bool {
    if matches!(c, '\u{FE00}'..='\u{FE0F}' | '\u{E0100}'..='\u{E01EF}') {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::OtherSymbol
            | GeneralCategory::ModifierSymbol
            | GeneralCategory::Control
            | GeneralCategory::Format
            | GeneralCategory::PrivateUse
            | GeneralCategory::Surrogate
    )
}

pub(crate) fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Remove emoji and interfering characters, then normalize whitespace.
///
/// Each removed code point acts as a word break, so `"a\u{0}b"` becomes
/// `"a b"`. Runs of whitespace collapse to a single space and the result is
/// trimmed. The empty string is a valid output.
pub fn clean_text(raw: &str) -> String {
    let spaced: String = raw
        .chars()
        .map(|c| if is_interfering(c) { ' ' } else { c })
        .collect();
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase, split on whitespace, then peel leading and trailing punctuation
/// into single-character tokens. Interior punctuation (`boho-style`) stays.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let start = chars.iter().position(|&c| !is_punctuation(c)).unwrap_or(chars.len());
        let end = chars.iter().rposition(|&c| !is_punctuation(c)).map_or(start, |i| i + 1);
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(chars[end.max(start)..].iter().map(|c| c.to_string()));
    }
    out
}
