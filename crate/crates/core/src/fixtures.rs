//! Seeded synthetic corpora with planted structure.
//!
//! Every generator is a pure function of its arguments, so the same call
//! yields the same data on every platform.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Coarse, Fine, LabeledTweet, RawTweet};
use crate::transfer::{Annotation, CommentRecord};

const CONSONANTS: &[u8] = b"bdfgklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";
const FILLERS: &[&str] = &["und", "die", "der", "ist", "nicht", "das", "ein", "auch"];

/// Emoji types used by the emoji fixture: plain, modified, joined, flags
/// and variation-selector forms.
pub const EMOJI_POOL: &[&str] = &[
    "😀",
    "🎉",
    "😂",
    "🔥",
    "⚽",
    "👍🏽",
    "👩‍💻",
    "🇩🇪",
    "❤️",
    "🙈",
    "🤔",
    "🍺",
];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distinct pronounceable letter-only words of 5 to 7 characters, none of
/// which is a filler or a German stopword.
pub fn random_words(n: usize, seed: u64) -> Vec<String> {
    let stop = crate::textprep::StopWords::german();
    let mut r = rng(seed ^ 0x5eed_0001);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = r.gen_range(5..=7);
        let w: String = (0..len)
            .map(|i| {
                let set = if i % 2 == 0 { CONSONANTS } else { VOWELS };
                set[r.gen_range(0..set.len())] as char
            })
            .collect();
        if !stop.contains(&w) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PlantedTopics {
    pub docs: Vec<Vec<String>>,
    pub topics: Vec<usize>,
    /// Disjoint vocabulary of each topic.
    pub vocab: Vec<Vec<String>>,
}

/// Documents that each draw every token uniformly from one topic's private
/// vocabulary.
pub fn planted_topic_docs(
    n_docs: usize,
    doc_len: usize,
    n_topics: usize,
    vocab_per_topic: usize,
    seed: u64,
) -> PlantedTopics {
    let words = random_words(n_topics * vocab_per_topic, seed);
    let vocab: Vec<Vec<String>> = words
        .chunks(vocab_per_topic.max(1))
        .map(<[String]>::to_vec)
        .collect();
    let mut r = rng(seed);
    let mut docs = Vec::with_capacity(n_docs);
    let mut topics = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let t = d % n_topics;
        docs.push(
            (0..doc_len)
                .map(|_| vocab[t].choose(&mut r).unwrap().clone())
                .collect(),
        );
        topics.push(t);
    }
    PlantedTopics {
        docs,
        topics,
        vocab,
    }
}

/// Raw tweets built from planted documents, with a stopword sprinkled in.
pub fn planted_topic_tweets(corpus: &PlantedTopics, seed: u64) -> Vec<RawTweet> {
    let mut r = rng(seed);
    corpus
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut words: Vec<&str> = d.iter().map(String::as_str).collect();
            let at = r.gen_range(0..=words.len());
            words.insert(at, FILLERS.choose(&mut r).unwrap());
            RawTweet::new(format!("p{i}"), words.join(" "))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MentionCliques {
    pub lists: Vec<Vec<String>>,
    pub clique_of: BTreeMap<String, usize>,
}

/// Mention lists of 2 to 6 distinct users that never cross clique borders.
pub fn mention_cliques(
    n_cliques: usize,
    users_per_clique: usize,
    n_lists: usize,
    seed: u64,
) -> MentionCliques {
    let members: Vec<Vec<String>> = (0..n_cliques)
        .map(|c| {
            (0..users_per_clique)
                .map(|u| format!("c{c}_user{u}"))
                .collect()
        })
        .collect();
    let clique_of = members
        .iter()
        .enumerate()
        .flat_map(|(c, us)| us.iter().map(move |u| (u.clone(), c)))
        .collect();
    let mut r = rng(seed);
    let max = users_per_clique.min(6);
    let lists = (0..n_lists)
        .map(|i| {
            let size = r.gen_range(2.min(max)..=max);
            members[i % n_cliques]
                .choose_multiple(&mut r, size)
                .cloned()
                .collect()
        })
        .collect();
    MentionCliques { lists, clique_of }
}

/// One tweet per list, mentioning every user of the list.
pub fn mention_tweets(cliques: &MentionCliques, seed: u64) -> Vec<RawTweet> {
    let words = random_words(30, seed);
    let mut r = rng(seed);
    cliques
        .lists
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let handles: Vec<String> = l.iter().map(|u| format!("@{u}")).collect();
            let w1 = words.choose(&mut r).unwrap();
            let w2 = words.choose(&mut r).unwrap();
            RawTweet::new(format!("m{i}"), format!("{} {w1} {w2}", handles.join(" ")))
        })
        .collect()
}

/// `n` tweets of which `dups` are case-changed copies of earlier ones.
/// Returns the tweets and the planted duplicate count.
pub fn duplicate_corpus(n: usize, dups: usize, seed: u64) -> (Vec<RawTweet>, usize) {
    assert!(dups < n || n == 0);
    let words = random_words(50, seed);
    let mut r = rng(seed);
    let mut texts: Vec<String> = (0..n - dups)
        .map(|i| {
            let picked: Vec<&str> = words
                .choose_multiple(&mut r, 4)
                .map(String::as_str)
                .collect();
            format!("{} nr {i}", picked.join(" "))
        })
        .collect();
    for _ in 0..dups {
        let src = r.gen_range(0..texts.len());
        let copy = texts[src].to_uppercase();
        let at = r.gen_range(src + 1..=texts.len());
        texts.insert(at, copy);
    }
    let tweets = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| RawTweet::new(format!("d{i}"), t))
        .collect();
    (tweets, dups)
}

fn offense_fine(r: &mut ChaCha8Rng) -> Fine {
    *[Fine::Insult, Fine::Abuse, Fine::Profanity]
        .choose(r)
        .unwrap()
}

fn labeled(id: String, text: String, offense: bool, r: &mut ChaCha8Rng) -> LabeledTweet {
    let (coarse, fine) = if offense {
        (Coarse::Offense, offense_fine(r))
    } else {
        (Coarse::Other, Fine::Other)
    };
    LabeledTweet::new(id, text, coarse, fine).expect("fixture tweets are valid")
}

#[derive(Debug, Clone)]
pub struct SeparableSet {
    pub train: Vec<LabeledTweet>,
    pub valid: Vec<LabeledTweet>,
    pub vocab: Vec<String>,
}

/// Balanced binary data where each tweet carries one or two marker words
/// of its class among shared filler words.
pub fn separable_labeled(n_train: usize, n_valid: usize, seed: u64) -> SeparableSet {
    let vocab = random_words(40, seed);
    let (markers, shared) = vocab.split_at(16);
    let (offense_markers, other_markers) = markers.split_at(8);
    let mut r = rng(seed);
    let make = |prefix: &str, n: usize, r: &mut ChaCha8Rng| -> Vec<LabeledTweet> {
        (0..n)
            .map(|i| {
                let offense = i % 2 == 0;
                let own = if offense {
                    offense_markers
                } else {
                    other_markers
                };
                let k = r.gen_range(3..=7);
                let mut words: Vec<&str> =
                    shared.choose_multiple(r, k).map(String::as_str).collect();
                for _ in 0..r.gen_range(1..=2) {
                    let at = r.gen_range(0..=words.len());
                    words.insert(at, own.choose(r).unwrap());
                }
                labeled(format!("{prefix}{i}"), words.join(" "), offense, r)
            })
            .collect()
    };
    let train = make("s", n_train, &mut r);
    let valid = make("v", n_valid, &mut r);
    SeparableSet {
        train,
        valid,
        vocab,
    }
}

/// Text vector file with a `count dim` header and uniform random vectors.
pub fn fixture_vectors<S: AsRef<str>>(words: &[S], dim: usize, seed: u64) -> String {
    let mut r = rng(seed);
    let mut out = format!("{} {}\n", words.len(), dim);
    for w in words {
        out.push_str(w.as_ref());
        for _ in 0..dim {
            let v: f64 = r.gen_range(-1.0..1.0);
            out.push_str(&format!(" {v:.6}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TransferFixture {
    /// Unlabeled tweets, half from each planted topic.
    pub background: Vec<RawTweet>,
    pub background_topics: Vec<usize>,
    /// Small labeled set restricted to a quarter of each topic's vocabulary.
    pub train: Vec<LabeledTweet>,
    /// Labeled set drawn from the full vocabulary.
    pub valid: Vec<LabeledTweet>,
    pub topic_vocab: Vec<Vec<String>>,
    pub users: Vec<Vec<String>>,
}

/// Two topics, the first of which is offensive. Topic words do not share
/// sub-word stems, so labeled data alone cannot reach unseen topic words.
pub fn transfer_fixture(
    n_background: usize,
    n_train: usize,
    n_valid: usize,
    seed: u64,
) -> TransferFixture {
    let vocab_per_topic = 40;
    let seen = vocab_per_topic / 4;
    let words = random_words(2 * vocab_per_topic, seed);
    let topic_vocab: Vec<Vec<String>> = words
        .chunks(vocab_per_topic)
        .map(<[String]>::to_vec)
        .collect();
    let users: Vec<Vec<String>> = (0..2)
        .map(|t| (0..8).map(|u| format!("t{t}_fan{u}")).collect())
        .collect();
    let mut r = rng(seed);

    let tweet = |topic: usize, pool: &[String], r: &mut ChaCha8Rng| -> String {
        let mut words: Vec<String> = (0..r.gen_range(6..=10))
            .map(|_| pool.choose(r).unwrap().clone())
            .collect();
        if r.gen_bool(0.5) {
            let at = r.gen_range(0..=words.len());
            words.insert(at, FILLERS.choose(r).unwrap().to_string());
        }
        if r.gen_bool(0.3) {
            words.insert(0, format!("@{}", users[topic].choose(r).unwrap()));
        }
        if r.gen_bool(0.3) {
            words.push("!".into());
        }
        words.join(" ")
    };

    let mut background = Vec::with_capacity(n_background);
    let mut background_topics = Vec::with_capacity(n_background);
    for i in 0..n_background {
        let t = usize::from(r.gen_bool(0.5));
        background.push(RawTweet::new(
            format!("b{i}"),
            tweet(t, &topic_vocab[t], &mut r),
        ));
        background_topics.push(t);
    }
    let train = (0..n_train)
        .map(|i| {
            let t = i % 2;
            let text = tweet(t, &topic_vocab[t][..seen], &mut r);
            labeled(format!("l{i}"), text, t == 0, &mut r)
        })
        .collect();
    let valid = (0..n_valid)
        .map(|i| {
            let t = i % 2;
            let text = tweet(t, &topic_vocab[t], &mut r);
            labeled(format!("v{i}"), text, t == 0, &mut r)
        })
        .collect();
    TransferFixture {
        background,
        background_topics,
        train,
        valid,
        topic_vocab,
        users,
    }
}

#[derive(Debug, Clone)]
pub struct EmojiFixture {
    pub tweets: Vec<RawTweet>,
    /// Distinct emoji types per tweet, in order of first occurrence.
    pub planted: Vec<Vec<&'static str>>,
}

/// Tweets carrying 0 to 4 emoji picks (repeats allowed), sometimes
/// adjacent to each other or to words.
pub fn emoji_tweets(n: usize, seed: u64) -> EmojiFixture {
    let words = random_words(30, seed);
    let mut r = rng(seed);
    let mut tweets = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(n);
    for i in 0..n {
        let k = r.gen_range(2..=5);
        let mut parts: Vec<String> = words.choose_multiple(&mut r, k).cloned().collect();
        let mut distinct: Vec<&'static str> = Vec::new();
        for _ in 0..r.gen_range(0..=4) {
            let e = *EMOJI_POOL.choose(&mut r).unwrap();
            if !distinct.contains(&e) {
                distinct.push(e);
            }
            let at = r.gen_range(0..parts.len());
            if r.gen_bool(0.5) {
                parts[at].push_str(e);
            } else {
                parts.insert(at, e.to_string());
            }
        }
        // Re-derive first-occurrence order from the final text.
        let text = parts.join(" ");
        distinct.sort_by_key(|e| text.find(e).unwrap());
        tweets.push(RawTweet::new(format!("e{i}"), text));
        planted.push(distinct);
    }
    EmojiFixture { tweets, planted }
}

/// Comment records with 1 to 5 annotators flagging at random.
pub fn comment_records(n: usize, seed: u64) -> Vec<CommentRecord> {
    let words = random_words(60, seed);
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let k = r.gen_range(3..=9);
            let text: Vec<&str> = words
                .choose_multiple(&mut r, k)
                .map(String::as_str)
                .collect();
            let annotations = (0..r.gen_range(1..=5))
                .map(|_| Annotation {
                    inappropriate: r.gen_bool(0.2),
                    discriminating: r.gen_bool(0.15),
                })
                .collect();
            CommentRecord {
                id: format!("c{i}"),
                text: text.join(" "),
                annotations,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(random_words(20, 4), random_words(20, 4));
        assert_ne!(random_words(20, 4), random_words(20, 5));
        let a = transfer_fixture(50, 10, 10, 1);
        let b = transfer_fixture(50, 10, 10, 1);
        assert_eq!(a.background, b.background);
        assert_eq!(a.valid, b.valid);
    }

    #[test]
    fn planted_vocab_is_disjoint() {
        let c = planted_topic_docs(10, 5, 3, 15, 2);
        let all: BTreeSet<&String> = c.vocab.iter().flatten().collect();
        assert_eq!(all.len(), 45);
        for (d, &t) in c.docs.iter().zip(&c.topics) {
            assert!(d.iter().all(|w| c.vocab[t].contains(w)));
        }
    }

    #[test]
    fn words_tokenize_as_single_letter_tokens() {
        for w in random_words(100, 9) {
            assert_eq!(crate::textprep::tokenize(&w), vec![w.clone()]);
        }
    }

    #[test]
    fn emoji_plants_match_extraction() {
        let f = emoji_tweets(100, 3);
        for (t, p) in f.tweets.iter().zip(&f.planted) {
            assert_eq!(&t.emojis, p, "{}", t.text);
        }
    }

    #[test]
    fn cliques_stay_within_groups() {
        let f = mention_cliques(3, 20, 60, 1);
        for l in &f.lists {
            let c = f.clique_of[&l[0]];
            assert!(l.iter().all(|u| f.clique_of[u] == c));
            assert!(l.len() >= 2);
        }
    }
}
