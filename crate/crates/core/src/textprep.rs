//! Tweet normalization and tokenization.
//!
//! Tokens are split wherever the character class changes. The five classes
//! are letter, digit, punctuation/symbol, emoji and whitespace; whitespace is
//! dropped. Every emoji sequence is a token of its own, and the `<user>` and
//! `<url>` placeholders produced by [`normalize`] are never split.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::emoji;
use crate::error::{Error, Result};

pub const USER_TOKEN: &str = "<user>";
pub const URL_TOKEN: &str = "<url>";

const GERMAN_STOPWORDS: &str = include_str!("../data/stopwords_de.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedTweet {
    pub source_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedTweet {
    /// Normalizes and tokenizes raw tweet text.
    pub fn from_raw(source_id: impl Into<String>, text: &str) -> Self {
        Self {
            source_id: source_id.into(),
            tokens: tokenize(&normalize(text)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharClass {
    Letter,
    Digit,
    Symbol,
    Emoji,
    Whitespace,
}

pub fn char_class(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Whitespace
    } else if emoji::is_emoji_char(c) {
        CharClass::Emoji
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Symbol
    }
}

fn is_handle_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn url_prefix(rest: &str) -> bool {
    rest.starts_with("http://") || rest.starts_with("https://") || rest.starts_with("www.")
}

/// Lowercases `text` and replaces @-mentions with `<user>` and URLs with
/// `<url>`.
///
/// A URL starts with `http://`, `https://` or `www.` at a position not
/// preceded by a letter or digit and runs to the next whitespace.
pub fn normalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    let mut prev: Option<char> = None;
    let mut pos = 0;
    while pos < lower.len() {
        let rest = &lower[pos..];
        let at_boundary = prev.is_none_or(|p| !p.is_alphanumeric());
        if at_boundary && url_prefix(rest) {
            let len = rest.find(char::is_whitespace).unwrap_or(rest.len());
            out.push_str(URL_TOKEN);
            pos += len;
            prev = Some('>');
            continue;
        }
        let c = rest.chars().next().expect("non-empty");
        if c == '@' {
            let handle: usize = rest[1..]
                .chars()
                .take_while(|&h| is_handle_char(h))
                .map(char::len_utf8)
                .sum();
            if handle > 0 {
                out.push_str(USER_TOKEN);
                pos += 1 + handle;
                prev = Some('>');
                continue;
            }
        }
        out.push(c);
        pos += c.len_utf8();
        prev = Some(c);
    }
    out
}

/// Splits normalized text at character-class boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_class: Option<CharClass> = None;
    let mut pos = 0;

    fn flush(tokens: &mut Vec<String>, current: &mut String, class: &mut Option<CharClass>) {
        if !current.is_empty() {
            tokens.push(std::mem::take(current));
        }
        *class = None;
    }

    while pos < text.len() {
        let rest = &text[pos..];
        if let Some(ph) = [USER_TOKEN, URL_TOKEN]
            .into_iter()
            .find(|p| rest.starts_with(p))
        {
            flush(&mut tokens, &mut current, &mut current_class);
            tokens.push(ph.to_string());
            pos += ph.len();
            continue;
        }
        if let Some(len) = emoji::sequence_len(rest) {
            flush(&mut tokens, &mut current, &mut current_class);
            tokens.push(rest[..len].to_string());
            pos += len;
            continue;
        }
        let c = rest.chars().next().expect("non-empty");
        pos += c.len_utf8();
        let class = char_class(c);
        if class == CharClass::Whitespace {
            flush(&mut tokens, &mut current, &mut current_class);
            continue;
        }
        if current_class != Some(class) {
            flush(&mut tokens, &mut current, &mut current_class);
            current_class = Some(class);
        }
        current.push(c);
    }
    flush(&mut tokens, &mut current, &mut current_class);
    tokens
}

pub fn is_placeholder(token: &str) -> bool {
    token == USER_TOKEN || token == URL_TOKEN
}

/// Alphanumeric tokens that are neither stopwords nor placeholders.
pub fn meaningful_tokens<'a>(tokens: &'a [String], stopwords: &StopWords) -> Vec<&'a str> {
    tokens
        .iter()
        .map(String::as_str)
        .filter(|t| {
            !t.is_empty()
                && t.chars().all(char::is_alphanumeric)
                && !is_placeholder(t)
                && !stopwords.contains(t)
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// The bundled German list.
    pub fn german() -> Self {
        Self::parse(GERMAN_STOPWORDS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}
