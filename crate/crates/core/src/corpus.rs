//! Labeled and raw tweet datasets.
//!
//! Labeled data is UTF-8 TSV with one `text<TAB>coarse<TAB>fine` record per
//! line. Raw tweets are JSON lines with string fields `id` and `text`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::emoji;
use crate::error::{Error, Result};
use crate::textprep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Coarse,
    Fine,
}

impl Task {
    pub fn class_names(self) -> Vec<String> {
        match self {
            Task::Coarse => Coarse::ALL.iter().map(|c| c.to_string()).collect(),
            Task::Fine => Fine::ALL.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            Task::Coarse => Coarse::ALL.len(),
            Task::Fine => Fine::ALL.len(),
        }
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Task::Coarse),
            "fine" => Ok(Task::Fine),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coarse {
    Offense,
    Other,
}

impl Coarse {
    pub const ALL: [Coarse; 2] = [Coarse::Offense, Coarse::Other];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fine {
    Insult,
    Profanity,
    Abuse,
    Other,
}

impl Fine {
    pub const ALL: [Fine; 4] = [Fine::Insult, Fine::Profanity, Fine::Abuse, Fine::Other];
}

impl fmt::Display for Coarse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coarse::Offense => "offense",
            Coarse::Other => "other",
        })
    }
}

impl fmt::Display for Fine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fine::Insult => "insult",
            Fine::Profanity => "profanity",
            Fine::Abuse => "abuse",
            Fine::Other => "other",
        })
    }
}

fn parse_coarse(token: &str, line: usize) -> Result<Coarse> {
    match token.to_ascii_lowercase().as_str() {
        "offense" => Ok(Coarse::Offense),
        "other" => Ok(Coarse::Other),
        _ => Err(Error::UnknownLabel {
            line,
            token: token.to_string(),
        }),
    }
}

fn parse_fine(token: &str, line: usize) -> Result<Fine> {
    match token.to_ascii_lowercase().as_str() {
        "insult" => Ok(Fine::Insult),
        "profanity" => Ok(Fine::Profanity),
        "abuse" => Ok(Fine::Abuse),
        "other" => Ok(Fine::Other),
        _ => Err(Error::UnknownLabel {
            line,
            token: token.to_string(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTweet {
    /// 1-based line number in the source file unless set otherwise.
    pub id: String,
    pub text: String,
    pub coarse: Coarse,
    pub fine: Fine,
}

impl LabeledTweet {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        coarse: Coarse,
        fine: Fine,
    ) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::invalid("tweet text is empty"));
        }
        if (fine == Fine::Other) != (coarse == Coarse::Other) {
            return Err(Error::invalid(format!(
                "inconsistent labels coarse={coarse} fine={fine}"
            )));
        }
        Ok(Self {
            id: id.into(),
            text,
            coarse,
            fine,
        })
    }

    /// Class index into [`Task::class_names`].
    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Coarse => Coarse::ALL.iter().position(|c| *c == self.coarse).unwrap(),
            Task::Fine => Fine::ALL.iter().position(|c| *c == self.fine).unwrap(),
        }
    }
}

pub fn parse_labeled(content: &str) -> Result<Vec<LabeledTweet>> {
    let mut out = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let coarse = parse_coarse(fields[1].trim(), line)?;
        let fine = parse_fine(fields[2].trim(), line)?;
        let tweet = LabeledTweet::new(line.to_string(), fields[0], coarse, fine).map_err(|e| {
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        out.push(tweet);
    }
    Ok(out)
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledTweet>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labeled(&content)
}

/// Serializes tweets in the TSV layout read by [`parse_labeled`].
pub fn serialize_labeled(tweets: &[LabeledTweet]) -> Result<String> {
    let mut out = String::new();
    for t in tweets {
        if t.text.contains(['\t', '\n', '\r']) {
            return Err(Error::invalid(format!(
                "tweet {} contains a tab or line break",
                t.id
            )));
        }
        out.push_str(&format!("{}\t{}\t{}\n", t.text, t.coarse, t.fine));
    }
    Ok(out)
}

pub fn write_labeled(path: &Path, tweets: &[LabeledTweet]) -> Result<()> {
    fs::write(path, serialize_labeled(tweets)?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledTweet>,
    pub validation: Vec<LabeledTweet>,
}

/// Keeps file order: the last `tail` items become the validation set.
pub fn split_tail(mut data: Vec<LabeledTweet>, tail: usize) -> Result<DatasetSplit> {
    if tail > data.len() {
        return Err(Error::invalid(format!(
            "tail {tail} exceeds dataset size {}",
            data.len()
        )));
    }
    let validation = data.split_off(data.len() - tail);
    Ok(DatasetSplit {
        train: data,
        validation,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTweet {
    pub id: String,
    pub text: String,
    /// Distinct handles without the `@`, first-occurrence order.
    pub mentions: Vec<String>,
    /// Distinct emoji sequences, first-occurrence order.
    pub emojis: Vec<String>,
}

impl RawTweet {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            mentions: extract_mentions(&text),
            emojis: emoji::distinct(&text),
            text,
        }
    }
}

/// Handles of the form `@` followed by letters, digits or underscores.
pub fn extract_mentions(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(at) = rest.find('@') {
        let after = &rest[at + 1..];
        let len: usize = after
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .map(char::len_utf8)
            .sum();
        if len > 0 {
            let handle = &after[..len];
            if !out.iter().any(|m| m == handle) {
                out.push(handle.to_string());
            }
        }
        rest = &after[len..];
    }
    out
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    text: Option<String>,
}

pub fn parse_raw(content: &str) -> Result<Vec<RawTweet>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(line).map_err(|e| Error::Record {
            index,
            message: e.to_string(),
        })?;
        let missing = |field: &str| Error::Record {
            index,
            message: format!("missing field `{field}`"),
        };
        let id = record.id.ok_or_else(|| missing("id"))?;
        let text = record.text.ok_or_else(|| missing("text"))?;
        if !seen.insert(id.clone()) {
            return Err(Error::Record {
                index,
                message: format!("duplicate id `{id}`"),
            });
        }
        out.push(RawTweet::new(id, text));
    }
    Ok(out)
}

pub fn load_raw(path: &Path) -> Result<Vec<RawTweet>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raw(&content)
}

pub fn serialize_raw(tweets: &[RawTweet]) -> String {
    let mut out = String::new();
    for t in tweets {
        let record = serde_json::json!({ "id": t.id, "text": t.text });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}

/// Drops tweets whose normalized text was already seen; keeps the first.
pub fn deduplicate(tweets: Vec<RawTweet>) -> Vec<RawTweet> {
    let mut seen = HashSet::new();
    tweets
        .into_iter()
        .filter(|t| seen.insert(textprep::normalize(&t.text)))
        .collect()
}

/// Mention lists of tweets with at least `min_mentions` handles, all of
/// which occur at least `min_user_freq` times in the whole corpus.
pub fn extract_mention_lists(
    tweets: &[RawTweet],
    min_mentions: usize,
    min_user_freq: usize,
) -> Vec<Vec<String>> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in tweets {
        for m in &t.mentions {
            *freq.entry(m.as_str()).or_default() += 1;
        }
    }
    tweets
        .iter()
        .filter(|t| t.mentions.len() >= min_mentions.max(1))
        .filter(|t| t.mentions.iter().all(|m| freq[m.as_str()] >= min_user_freq))
        .map(|t| t.mentions.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(n: usize) -> Vec<LabeledTweet> {
        (0..n)
            .map(|i| {
                LabeledTweet::new(i.to_string(), format!("t{i}"), Coarse::Other, Fine::Other)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn parse_single_line() {
        let t = parse_labeled("Hallo\tother\tother\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].coarse, Coarse::Other);
        assert_eq!(t[0].fine, Fine::Other);
        assert!(parse_labeled("").unwrap().is_empty());
    }

    #[test]
    fn parse_accepts_germeval_casing() {
        let t = parse_labeled("Du Idiot\tOFFENSE\tINSULT").unwrap();
        assert_eq!(t[0].fine, Fine::Insult);
        assert_eq!(t[0].label(Task::Coarse), 0);
        assert_eq!(t[0].label(Task::Fine), 0);
    }

    #[test]
    fn parse_errors_name_line_and_token() {
        let err = parse_labeled("a\tother\tother\nb\tother").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_labeled("a\tother\tother\nb\tbad\tother").unwrap_err();
        match err {
            Error::UnknownLabel { line, token } => {
                assert_eq!(line, 2);
                assert_eq!(token, "bad");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(parse_labeled("a\toffense\tother").is_err());
        assert!(parse_labeled("\tother\tother").is_err());
    }

    #[test]
    fn split_examples() {
        let s = split_tail(labeled(5008), 808).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (4200, 808));
        let s = split_tail(labeled(10), 3).unwrap();
        assert_eq!(s.train, labeled(10)[..7].to_vec());
        assert_eq!(s.validation, labeled(10)[7..].to_vec());
        assert!(split_tail(labeled(4), 0).unwrap().validation.is_empty());
        assert!(split_tail(labeled(4), 5).is_err());
    }

    #[test]
    fn raw_extraction() {
        let t = parse_raw(
            r#"{"id":"1","text":"@a @b hi"}
{"id":"2","text":"hi 😀😀🎉"}"#,
        )
        .unwrap();
        assert_eq!(t[0].mentions, vec!["a", "b"]);
        assert_eq!(t[1].emojis, vec!["😀", "🎉"]);
        let err = parse_raw("{\"id\":\"1\"}").unwrap_err();
        assert!(matches!(err, Error::Record { index: 0, .. }));
        assert!(parse_raw("{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"1\",\"text\":\"b\"}").is_err());
    }

    #[test]
    fn mentions_stop_at_non_word_chars() {
        assert_eq!(extract_mentions("@spd_de: @cdu!"), vec!["spd_de", "cdu"]);
        assert_eq!(extract_mentions("@ nobody"), Vec::<String>::new());
        assert_eq!(extract_mentions("@a @a"), vec!["a"]);
    }

    #[test]
    fn dedup_on_normalized_text() {
        let t: Vec<RawTweet> = ["Hi!", "hi!", "Yo"]
            .iter()
            .enumerate()
            .map(|(i, s)| RawTweet::new(i.to_string(), *s))
            .collect();
        let d = deduplicate(t.clone());
        assert_eq!(
            d.iter().map(|t| t.text.as_str()).collect::<Vec<_>>(),
            vec!["Hi!", "Yo"]
        );
        let distinct = vec![t[0].clone(), t[2].clone()];
        assert_eq!(deduplicate(distinct.clone()), distinct);
    }

    #[test]
    fn dedup_planted_fixture() {
        let (tweets, planted) = crate::fixtures::duplicate_corpus(1000, 100, 11);
        assert_eq!(planted, 100);
        assert_eq!(deduplicate(tweets).len(), 900);
    }

    #[test]
    fn mention_thresholds() {
        let single = vec![RawTweet::new("1", "@a hallo")];
        assert!(extract_mention_lists(&single, 2, 1).is_empty());

        // u appears 4 times, everyone else 5 times.
        let mut tweets = Vec::new();
        for i in 0..4 {
            tweets.push(RawTweet::new(format!("u{i}"), "@u @v"));
        }
        tweets.push(RawTweet::new("v", "@v @w"));
        for i in 0..4 {
            tweets.push(RawTweet::new(format!("w{i}"), "@w @x"));
        }
        tweets.push(RawTweet::new("x", "@x hallo"));
        let lists = extract_mention_lists(&tweets, 2, 5);
        // Brute force: keep a list iff every handle is counted >= 5 times.
        let count = |h: &str| {
            tweets
                .iter()
                .filter(|t| t.mentions.iter().any(|m| m == h))
                .count()
        };
        let expected: Vec<Vec<String>> = tweets
            .iter()
            .filter(|t| t.mentions.len() >= 2 && t.mentions.iter().all(|m| count(m) >= 5))
            .map(|t| t.mentions.clone())
            .collect();
        assert_eq!(lists, expected);
        assert!(lists.iter().all(|l| !l.contains(&"u".to_string())));
        assert_eq!(lists.len(), 5);
    }

    proptest! {
        #[test]
        fn split_concatenation_identity(n in 0usize..40, t in 0usize..40) {
            let data = labeled(n);
            let t = t.min(n);
            let s = split_tail(data.clone(), t).unwrap();
            let mut joined = s.train.clone();
            joined.extend(s.validation.clone());
            prop_assert_eq!(joined, data);
            prop_assert_eq!(s.validation.len(), t);
        }

        #[test]
        fn dedup_idempotent(texts in proptest::collection::vec("[aAbB! ]{1,4}", 0..30)) {
            let tweets: Vec<RawTweet> = texts.iter().enumerate().map(|(i, s)| RawTweet::new(i.to_string(), s.clone())).collect();
            let once = deduplicate(tweets);
            prop_assert_eq!(deduplicate(once.clone()), once);
        }

        #[test]
        fn mention_lists_monotone(
            lists in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..5), 0..40),
            m in 1usize..4, f in 0usize..8,
        ) {
            let tweets: Vec<RawTweet> = lists.iter().enumerate().map(|(i, l)| {
                let text: Vec<String> = l.iter().map(|u| format!("@u{u}")).collect();
                RawTweet::new(i.to_string(), text.join(" "))
            }).collect();
            let base = extract_mention_lists(&tweets, m, f).len();
            prop_assert!(extract_mention_lists(&tweets, m + 1, f).len() <= base);
            prop_assert!(extract_mention_lists(&tweets, m, f + 1).len() <= base);
        }

        #[test]
        fn labeled_round_trip(rows in proptest::collection::vec(("[^\t\r\n]{1,20}", 0usize..4), 0..20)) {
            let tweets: Vec<LabeledTweet> = rows.iter().enumerate().map(|(i, (text, f))| {
                let fine = Fine::ALL[*f];
                let coarse = if fine == Fine::Other { Coarse::Other } else { Coarse::Offense };
                LabeledTweet::new((i + 1).to_string(), text.clone(), coarse, fine).unwrap()
            }).collect();
            let back = parse_labeled(&serialize_labeled(&tweets).unwrap()).unwrap();
            prop_assert_eq!(back, tweets);
        }
    }
}
