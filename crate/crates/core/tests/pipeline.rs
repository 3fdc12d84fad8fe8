use offtl_core::corpus::{self, Task};
use offtl_core::embed::{self, SubwordConfig};
use offtl_core::fixtures as fx;
use offtl_core::lda::{self, InferConfig, LdaConfig};
use offtl_core::net::{
    load_checkpoint, save_checkpoint, Layer, NetConfig, NetShape, NetworkParams, OptimizerState,
};
use offtl_core::textprep::{StopWords, TokenizedTweet};
use offtl_core::transfer::{self, Encoder, TrainSettings};

#[test]
fn dedup_removes_exactly_the_planted_copies() {
    let (tweets, dups) = fx::duplicate_corpus(300, 40, 3);
    let kept = corpus::deduplicate(tweets.clone());
    assert_eq!(kept.len(), tweets.len() - dups);
    // Only the uppercased copies were dropped.
    assert!(kept.iter().all(|t| t.text.chars().any(char::is_lowercase)));
}

#[test]
fn mention_lists_recover_cliques() {
    let cliques = fx::mention_cliques(3, 20, 600, 8);
    let tweets = corpus::deduplicate(fx::mention_tweets(&cliques, 8));
    let lists = corpus::extract_mention_lists(&tweets, 2, 5);
    assert!(lists.len() > 400, "{} lists", lists.len());
    let clusters = lda::cluster_users(
        &lists,
        &LdaConfig {
            iterations: 300,
            ..LdaConfig::with_topics(3)
        },
    )
    .unwrap();
    let (assigned, truth): (Vec<usize>, Vec<usize>) = clusters
        .cluster_of
        .iter()
        .map(|(u, &c)| (c, cliques.clique_of[u]))
        .unzip();
    assert!(lda::purity(&assigned, &truth) >= 0.95);
    // Unknown handles land in the overflow slot.
    assert_eq!(clusters.features(&["nobody"]), vec![0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn topic_labels_follow_planted_topics() {
    let f = fx::transfer_fixture(400, 20, 20, 6);
    let sw = StopWords::german();
    let docs: Vec<Vec<String>> = f
        .background
        .iter()
        .map(|t| transfer::topic_document(&TokenizedTweet::from_raw("", &t.text), &sw))
        .collect();
    let model = lda::train_gibbs(
        &docs,
        &LdaConfig {
            iterations: 200,
            seed: 6,
            ..LdaConfig::with_topics(2)
        },
    )
    .unwrap();
    let task = transfer::build_topic_task(&f.background, &model, &sw, &InferConfig::default(), 2);
    task.validate().unwrap();
    let truth: Vec<usize> = task
        .examples
        .iter()
        .map(|e| {
            f.background_topics[f
                .background
                .iter()
                .position(|t| t.id == e.tweet.source_id)
                .unwrap()]
        })
        .collect();
    let labels: Vec<usize> = task.examples.iter().map(|e| e.label).collect();
    assert!(lda::purity(&labels, &truth) >= 0.95);
}

#[test]
fn category_task_from_comments() {
    let records = fx::comment_records(200, 2);
    let text = transfer::serialize_comments(&records);
    assert_eq!(transfer::parse_comments(&text).unwrap(), records);
    let task = transfer::build_category_task(&records).unwrap();
    assert_eq!(task.examples.len(), records.len());
    assert_eq!(task.label_space.len(), 2);
    assert!(task.examples.iter().any(|e| e.label == 0));
    assert!(task.examples.iter().any(|e| e.label == 1));
}

#[test]
fn pretrained_checkpoint_survives_the_disk_and_a_new_head() {
    let f = fx::emoji_tweets(60, 4);
    let task = transfer::build_emoji_task(&f.tweets);
    let words: Vec<String> = f
        .tweets
        .iter()
        .flat_map(|t| TokenizedTweet::from_raw("", &t.text).tokens)
        .collect();
    let table =
        embed::parse_vectors(&fx::fixture_vectors(&words, 8, 4), SubwordConfig::default()).unwrap();
    let enc = Encoder {
        table: &table,
        clusters: None,
        max_len: 100,
    };
    let cfg = NetConfig {
        lstm_units: 4,
        filters: 6,
        dense_units: 5,
        ..NetConfig::default()
    };
    let init = NetworkParams::init(NetShape::new(&cfg, 8, 0, task.label_space.len()), 4).unwrap();
    let mut short = task.clone();
    short.epochs = 2;
    let out = transfer::pretrain(&short, &init, &enc, &TrainSettings::default(), 4).unwrap();
    assert_eq!(out.losses.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pre.ckpt");
    let state = OptimizerState::new(&out.params, TrainSettings::default().optimizer);
    save_checkpoint(&path, &out.params, Some(&state)).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.params, out.params);
    assert_eq!(back.state.as_ref(), Some(&state));

    let head = back.params.replace_head(Task::Fine.n_classes(), 1).unwrap();
    for l in [Layer::Lstm, Layer::Conv, Layer::Dense] {
        assert_eq!(head.layer_checksum(l), out.params.layer_checksum(l));
    }
    assert_ne!(
        head.layer_checksum(Layer::Output),
        out.params.layer_checksum(Layer::Output)
    );
}

#[test]
fn labeled_split_keeps_the_tail_for_validation() {
    let sep = fx::separable_labeled(50, 10, 1);
    let all: Vec<_> = sep.train.iter().chain(&sep.valid).cloned().collect();
    let text = corpus::serialize_labeled(&all).unwrap();
    let parsed = corpus::parse_labeled(&text).unwrap();
    let split = corpus::split_tail(parsed, 10).unwrap();
    assert_eq!(split.train.len(), 50);
    assert_eq!(
        split.validation.iter().map(|t| &t.text).collect::<Vec<_>>(),
        sep.valid.iter().map(|t| &t.text).collect::<Vec<_>>()
    );
}
