//! Writes the synthetic corpora used by the pipeline checks.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use offtl_core::corpus::{self, RawTweet};
use offtl_core::fixtures as fx;
use offtl_core::textprep::TokenizedTweet;
use offtl_core::transfer;

use crate::commands::{write_file, CliError};

/// Settings that shrink the network and schedules to fixture scale.
pub const DESK_CONFIG: &str = "\
# Desk-scale settings for the fixture corpora.
lstm_units = 32
filters = 64
dense_units = 32
pretrain_epochs = 10
finetune_epochs = 10
k_topics = 2
k_users = 3
lda_iterations = 200
validation_tail = 64
";

fn truth<'a>(ids: impl Iterator<Item = (&'a str, usize)>) -> String {
    let mut out = String::new();
    for (id, t) in ids {
        let _ = writeln!(out, "{id}\t{t}");
    }
    out
}

fn tokens_of(tweets: &[RawTweet], vocab: &mut BTreeSet<String>) {
    for t in tweets {
        vocab.extend(TokenizedTweet::from_raw("", &t.text).tokens);
    }
}

pub fn write_all(dir: &Path, seed: u64, dim: usize) -> Result<(), CliError> {
    let mut vocab = BTreeSet::new();
    let put = |name: &str, content: &str| write_file(&dir.join(name), content);

    let planted = fx::planted_topic_docs(200, 20, 2, 40, seed);
    let planted_tweets = fx::planted_topic_tweets(&planted, seed);
    tokens_of(&planted_tweets, &mut vocab);
    put(
        "planted_topics.jsonl",
        &corpus::serialize_raw(&planted_tweets),
    )?;
    put(
        "planted_topics_truth.tsv",
        &truth(
            planted_tweets
                .iter()
                .zip(&planted.topics)
                .map(|(t, &k)| (t.id.as_str(), k)),
        ),
    )?;

    let sep = fx::separable_labeled(64, 64, seed + 1);
    vocab.extend(sep.vocab.iter().cloned());
    put(
        "separable_train.tsv",
        &corpus::serialize_labeled(&sep.train)?,
    )?;
    put(
        "separable_valid.tsv",
        &corpus::serialize_labeled(&sep.valid)?,
    )?;

    let cliques = fx::mention_cliques(3, 20, 600, seed + 2);
    let clique_tweets = fx::mention_tweets(&cliques, seed + 2);
    tokens_of(&clique_tweets, &mut vocab);
    put(
        "mention_cliques.jsonl",
        &corpus::serialize_raw(&clique_tweets),
    )?;
    put(
        "mention_cliques_truth.tsv",
        &truth(cliques.clique_of.iter().map(|(u, &c)| (u.as_str(), c))),
    )?;

    let tr = fx::transfer_fixture(500, 200, 200, seed + 3);
    tokens_of(&tr.background, &mut vocab);
    put(
        "transfer_background.jsonl",
        &corpus::serialize_raw(&tr.background),
    )?;
    put(
        "transfer_background_truth.tsv",
        &truth(
            tr.background
                .iter()
                .zip(&tr.background_topics)
                .map(|(t, &k)| (t.id.as_str(), k)),
        ),
    )?;
    put("transfer_train.tsv", &corpus::serialize_labeled(&tr.train)?)?;
    put("transfer_valid.tsv", &corpus::serialize_labeled(&tr.valid)?)?;

    let emoji = fx::emoji_tweets(100, seed + 4);
    tokens_of(&emoji.tweets, &mut vocab);
    put("emoji.jsonl", &corpus::serialize_raw(&emoji.tweets))?;

    let comments = fx::comment_records(200, seed + 5);
    for c in &comments {
        vocab.extend(TokenizedTweet::from_raw("", &c.text).tokens);
    }
    put("comments.jsonl", &transfer::serialize_comments(&comments))?;

    let words: Vec<String> = vocab.into_iter().collect();
    put("vectors.txt", &fx::fixture_vectors(&words, dim, seed + 6))?;
    put("desk.cfg", DESK_CONFIG)?;
    println!(
        "wrote fixtures to {} ({} vector words)",
        dir.display(),
        words.len()
    );
    Ok(())
}
