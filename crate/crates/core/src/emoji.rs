//! Emoji detection from a fixed Unicode range table.
//!
//! A sequence is a base pictograph followed by any skin-tone modifiers,
//! variation selectors, keycap or tag characters, and further
//! pictographs joined with U+200D. Two regional indicators form one flag.

use std::ops::RangeInclusive;

/// Blocks whose code points count as emoji bases.
pub const EMOJI_RANGES: &[(&str, RangeInclusive<u32>)] = &[
    ("Miscellaneous Symbols", 0x2600..=0x26FF),
    ("Dingbats", 0x2700..=0x27BF),
    ("Regional Indicator Symbols", 0x1F1E6..=0x1F1FF),
    ("Miscellaneous Symbols and Pictographs", 0x1F300..=0x1F5FF),
    ("Emoticons", 0x1F600..=0x1F64F),
    ("Transport and Map Symbols", 0x1F680..=0x1F6FF),
    ("Supplemental Symbols and Pictographs", 0x1F900..=0x1F9FF),
    ("Symbols and Pictographs Extended-A", 0x1FA70..=0x1FAFF),
];

const ZWJ: char = '\u{200D}';
const SKIN_TONES: RangeInclusive<u32> = 0x1F3FB..=0x1F3FF;
const REGIONAL: RangeInclusive<u32> = 0x1F1E6..=0x1F1FF;

pub fn is_emoji_char(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES.iter().any(|(_, r)| r.contains(&cp))
}

fn is_modifier(c: char) -> bool {
    let cp = c as u32;
    SKIN_TONES.contains(&cp)
        || c == '\u{FE0F}'
        || c == '\u{FE0E}'
        || c == '\u{20E3}'
        || (0xE0020..=0xE007F).contains(&cp)
}

fn is_regional(c: char) -> bool {
    REGIONAL.contains(&(c as u32))
}

/// Byte length of the emoji sequence at the start of `s`, if any.
pub fn sequence_len(s: &str) -> Option<usize> {
    let mut chars = s.char_indices().peekable();
    let (_, first) = chars.next()?;
    if !is_emoji_char(first) {
        return None;
    }
    let mut end = first.len_utf8();
    if is_regional(first) {
        if let Some(&(i, c)) = chars.peek() {
            if is_regional(c) {
                return Some(i + c.len_utf8());
            }
        }
        return Some(end);
    }
    while let Some(&(i, c)) = chars.peek() {
        if is_modifier(c) {
            chars.next();
            end = i + c.len_utf8();
        } else if c == ZWJ {
            let mut ahead = chars.clone();
            ahead.next();
            match ahead.next() {
                Some((j, next)) if is_emoji_char(next) => {
                    chars = ahead;
                    end = j + next.len_utf8();
                }
                _ => break,
            }
        } else {
            break;
        }
    }
    Some(end)
}

/// All emoji sequences of `text`, in order of appearance.
pub fn sequences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        match sequence_len(rest) {
            Some(len) => {
                out.push(&rest[..len]);
                pos += len;
            }
            None => pos += rest.chars().next().map_or(1, char::len_utf8),
        }
    }
    out
}

/// Distinct emoji sequences of `text`, first occurrence order.
pub fn distinct(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for seq in sequences(text) {
        if !out.iter().any(|e| e == seq) {
            out.push(seq.to_string());
        }
    }
    out
}

/// `text` with every emoji sequence removed.
pub fn strip(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        match sequence_len(rest) {
            Some(len) => pos += len,
            None => {
                let c = rest.chars().next().expect("non-empty");
                out.push(c);
                pos += c.len_utf8();
            }
        }
    }
    out
}
