//! Pre-training task construction, pre-training, and staged fine-tuning.
//!
//! A [`FreezeSchedule`] is a list of phases, each naming the trainable
//! layer groups. Optimizer moments are reset at every phase boundary. In a
//! `select_best` phase the validation metric is computed after every epoch
//! and the best epoch's parameters are carried forward; other phases carry
//! their final parameters.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_mentions, RawTweet};
use crate::embed::EmbeddingTable;
use crate::emoji;
use crate::error::{Error, Result};
use crate::evalkit;
use crate::lda::{InferConfig, LdaModel, UserClusters};
use crate::net::{
    backward, forward, loss, Batch, Dropout, FreezeMask, Layer, Mode, NadamConfig, NetworkParams,
    OptimizerState,
};
use crate::textprep::{meaningful_tokens, StopWords, TokenizedTweet};

/// One annotator's judgement of a comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub inappropriate: bool,
    pub discriminating: bool,
}

/// A comment with per-annotator flags, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    pub text: String,
    pub annotations: Vec<Annotation>,
}

pub fn parse_comments(content: &str) -> Result<Vec<CommentRecord>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_comments(path: &Path) -> Result<Vec<CommentRecord>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_comments(&content)
}

pub fn serialize_comments(records: &[CommentRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("plain struct serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Category,
    Emoji,
    Topic,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "category" => Ok(Self::Category),
            "emoji" => Ok(Self::Emoji),
            "topic" => Ok(Self::Topic),
            _ => Err(Error::invalid(format!("unknown pre-training task `{s}`"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Category => "category",
            Self::Emoji => "emoji",
            Self::Topic => "topic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskExample {
    pub tweet: TokenizedTweet,
    /// Handles mentioned in the source text, for cluster features.
    pub mentions: Vec<String>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainTask {
    pub kind: TaskKind,
    pub examples: Vec<TaskExample>,
    pub label_space: Vec<String>,
    pub batch_size: usize,
    pub epochs: usize,
}

impl PretrainTask {
    fn new(kind: TaskKind, examples: Vec<TaskExample>, label_space: Vec<String>) -> Self {
        Self {
            kind,
            examples,
            label_space,
            batch_size: 128,
            epochs: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.examples.is_empty() {
            return Err(Error::invalid(format!(
                "{} task has no examples",
                self.kind
            )));
        }
        if let Some(e) = self
            .examples
            .iter()
            .find(|e| e.label >= self.label_space.len())
        {
            return Err(Error::invalid(format!(
                "label {} outside label space",
                e.label
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

fn strict_majority(votes: usize, total: usize) -> bool {
    2 * votes > total
}

/// `offense` when a strict majority of annotators flags the comment as
/// inappropriate, or a strict majority flags it as discriminating.
pub fn build_category_task(comments: &[CommentRecord]) -> Result<PretrainTask> {
    let mut examples = Vec::with_capacity(comments.len());
    for (i, c) in comments.iter().enumerate() {
        let n = c.annotations.len();
        if n == 0 {
            return Err(Error::Record {
                index: i,
                message: format!("comment {} has no annotators", c.id),
            });
        }
        let inappropriate = c.annotations.iter().filter(|a| a.inappropriate).count();
        let discriminating = c.annotations.iter().filter(|a| a.discriminating).count();
        let offense = strict_majority(inappropriate, n) || strict_majority(discriminating, n);
        examples.push(TaskExample {
            tweet: TokenizedTweet::from_raw(c.id.clone(), &c.text),
            mentions: extract_mentions(&c.text),
            label: if offense { 0 } else { 1 },
        });
    }
    Ok(PretrainTask::new(
        TaskKind::Category,
        examples,
        vec!["offense".into(), "other".into()],
    ))
}

/// One example per distinct emoji type of each tweet, with every emoji
/// removed from the text. Labels are numbered in order of first
/// appearance in the corpus.
pub fn build_emoji_task(tweets: &[RawTweet]) -> PretrainTask {
    let mut label_space: Vec<String> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut examples = Vec::new();
    for t in tweets {
        if t.emojis.is_empty() {
            continue;
        }
        let tweet = TokenizedTweet::from_raw(t.id.clone(), &emoji::strip(&t.text));
        for e in &t.emojis {
            let label = *ids.entry(e.clone()).or_insert_with(|| {
                label_space.push(e.clone());
                label_space.len() - 1
            });
            examples.push(TaskExample {
                tweet: tweet.clone(),
                mentions: t.mentions.clone(),
                label,
            });
        }
    }
    PretrainTask::new(TaskKind::Emoji, examples, label_space)
}

/// The tokens LDA sees for a tweet: its meaningful tokens.
pub fn topic_document(tweet: &TokenizedTweet, stopwords: &StopWords) -> Vec<String> {
    meaningful_tokens(&tweet.tokens, stopwords)
        .into_iter()
        .map(String::from)
        .collect()
}

/// Labels each tweet with at least `min_meaningful` meaningful tokens by
/// its majority topic.
pub fn build_topic_task(
    tweets: &[RawTweet],
    lda: &LdaModel,
    stopwords: &StopWords,
    infer: &InferConfig,
    min_meaningful: usize,
) -> PretrainTask {
    let examples = tweets
        .iter()
        .filter_map(|t| {
            let tweet = TokenizedTweet::from_raw(t.id.clone(), &t.text);
            let doc = topic_document(&tweet, stopwords);
            (doc.len() >= min_meaningful).then(|| TaskExample {
                label: lda.majority_topic(&doc, infer),
                tweet,
                mentions: t.mentions.clone(),
            })
        })
        .collect();
    let label_space = (0..lda.k()).map(|t| format!("topic{t}")).collect();
    PretrainTask::new(TaskKind::Topic, examples, label_space)
}

/// Maps tokens and mentions to network inputs.
pub struct Encoder<'a> {
    pub table: &'a EmbeddingTable,
    pub clusters: Option<&'a UserClusters>,
    pub max_len: usize,
}

/// Encoded examples ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub inputs: Vec<Array2<f64>>,
    pub clusters: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Encoder<'_> {
    pub fn cluster_width(&self) -> usize {
        self.clusters.map_or(0, UserClusters::feature_width)
    }

    /// Encodes `(tokens, mentions, label)` triples. Sequences longer than
    /// `max_len` keep their first `max_len` tokens.
    pub fn encode<'t, I>(&self, items: I) -> EncodedSet
    where
        I: IntoIterator<Item = (&'t [String], &'t [String], usize)>,
    {
        let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut set = EncodedSet {
            inputs: Vec::new(),
            clusters: Vec::new(),
            labels: Vec::new(),
        };
        let mut truncated = 0;
        let dim = self.table.dim();
        for (tokens, mentions, label) in items {
            if tokens.len() > self.max_len {
                truncated += 1;
            }
            let kept = &tokens[..tokens.len().min(self.max_len)];
            let mut x = Array2::zeros((kept.len(), dim));
            for (row, tok) in kept.iter().enumerate() {
                let v = cache
                    .entry(tok.as_str())
                    .or_insert_with(|| self.table.embed_token(tok));
                x.row_mut(row)
                    .iter_mut()
                    .zip(v.iter())
                    .for_each(|(a, b)| *a = *b);
            }
            set.inputs.push(x);
            set.clusters.push(
                self.clusters
                    .map_or_else(Vec::new, |c| c.features(mentions)),
            );
            set.labels.push(label);
        }
        if truncated > 0 {
            log::warn!("{truncated} sequences truncated to {} tokens", self.max_len);
        }
        set
    }

    pub fn encode_task(&self, task: &PretrainTask) -> EncodedSet {
        self.encode(
            task.examples
                .iter()
                .map(|e| (e.tweet.tokens.as_slice(), e.mentions.as_slice(), e.label)),
        )
    }

    /// Tokenizes and encodes raw texts with their labels.
    pub fn encode_texts<S: AsRef<str>>(&self, texts: &[S], labels: &[usize]) -> EncodedSet {
        let prepared: Vec<(Vec<String>, Vec<String>)> = texts
            .iter()
            .map(|t| {
                (
                    TokenizedTweet::from_raw("", t.as_ref()).tokens,
                    extract_mentions(t.as_ref()),
                )
            })
            .collect();
        self.encode(
            prepared
                .iter()
                .zip(labels)
                .map(|((t, m), &y)| (t.as_slice(), m.as_slice(), y)),
        )
    }
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        Batch::new(
            indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            indices.iter().map(|&i| self.clusters[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Optimizer, dropout and batch size of a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub optimizer: NadamConfig,
    pub dropout: f64,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            optimizer: NadamConfig::default(),
            dropout: 0.5,
            batch_size: 32,
        }
    }
}

fn check_compatible(params: &NetworkParams, data: &EncodedSet) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("empty data set"));
    }
    let s = &params.shape;
    if let Some(c) = data.clusters.first() {
        if c.len() != s.cluster_width {
            return Err(Error::Shape(format!(
                "cluster features have width {}, network expects {}",
                c.len(),
                s.cluster_width
            )));
        }
    }
    if let Some(&y) = data.labels.iter().find(|&&y| y >= s.n_classes) {
        return Err(Error::Shape(format!(
            "label {y} outside a {}-class head",
            s.n_classes
        )));
    }
    Ok(())
}

/// One pass over `data` in shuffled mini-batches. Returns the mean
/// training loss.
pub fn train_epoch(
    params: &mut NetworkParams,
    state: &mut OptimizerState,
    data: &EncodedSet,
    mask: FreezeMask,
    settings: &TrainSettings,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(settings.batch_size.max(1)) {
        let batch = data.batch(chunk)?;
        let mode = Mode::Train {
            dropout: Dropout::uniform(settings.dropout),
            seed: rng.gen(),
        };
        let cache = forward(params, &batch, mode)?;
        total += loss(&cache.probs(), &batch.labels) * chunk.len() as f64;
        let grads = backward(params, &batch, &cache, mask)?;
        state.step(params, &grads, mask)?;
    }
    Ok(total / data.len() as f64)
}

/// Class probabilities in eval mode, one row per example.
pub fn predict_proba(
    params: &NetworkParams,
    data: &EncodedSet,
    batch_size: usize,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((data.len(), params.shape.n_classes));
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let probs = forward(params, &data.batch(chunk)?, Mode::Eval)?.probs();
        for (r, &i) in chunk.iter().enumerate() {
            out.row_mut(i).assign(&probs.row(r));
        }
    }
    Ok(out)
}

/// Argmax predictions in eval mode; ties go to the lowest class id.
pub fn predict(params: &NetworkParams, data: &EncodedSet, batch_size: usize) -> Result<Vec<usize>> {
    let probs = predict_proba(params, data, batch_size)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| crate::lda::argmax(r.as_slice().unwrap()))
        .collect())
}

/// Mean eval-mode cross-entropy over `data`.
pub fn mean_loss(params: &NetworkParams, data: &EncodedSet, batch_size: usize) -> Result<f64> {
    let probs = predict_proba(params, data, batch_size)?;
    Ok(loss(&probs, &data.labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub params: NetworkParams,
    /// Eval-mode loss before training, then after every epoch.
    pub losses: Vec<f64>,
}

/// Trains all layers on the task for `task.epochs` epochs.
pub fn pretrain(
    task: &PretrainTask,
    params: &NetworkParams,
    encoder: &Encoder<'_>,
    settings: &TrainSettings,
    seed: u64,
) -> Result<PretrainOutcome> {
    task.validate()?;
    if params.shape.n_classes != task.label_space.len() {
        return Err(Error::Shape(format!(
            "head has {} outputs but the task has {} labels",
            params.shape.n_classes,
            task.label_space.len()
        )));
    }
    if params.shape.cluster_width != encoder.cluster_width() {
        return Err(Error::Shape(format!(
            "network expects cluster width {}, encoder provides {}",
            params.shape.cluster_width,
            encoder.cluster_width()
        )));
    }
    let data = encoder.encode_task(task);
    check_compatible(params, &data)?;
    let settings = TrainSettings {
        batch_size: task.batch_size,
        ..*settings
    };
    let mut params = params.clone();
    let mut state = OptimizerState::new(&params, settings.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = vec![mean_loss(&params, &data, settings.batch_size)?];
    for epoch in 0..task.epochs {
        let train_loss = train_epoch(
            &mut params,
            &mut state,
            &data,
            FreezeMask::all(),
            &settings,
            &mut rng,
        )?;
        let eval_loss = mean_loss(&params, &data, settings.batch_size)?;
        log::info!(
            "pretrain epoch {}: train loss {train_loss:.5}, eval loss {eval_loss:.5}",
            epoch + 1
        );
        losses.push(eval_loss);
    }
    Ok(PretrainOutcome { params, losses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    None,
    Gradual,
    BottomUp,
    TopDown,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "gu" => Ok(Self::Gradual),
            "bu" => Ok(Self::BottomUp),
            "tu" => Ok(Self::TopDown),
            _ => Err(Error::invalid(format!("unknown strategy `{s}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Gradual => "gu",
            Self::BottomUp => "bu",
            Self::TopDown => "tu",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreezePhase {
    pub trainable: FreezeMask,
    pub max_epochs: usize,
    pub select_best: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeSchedule {
    pub phases: Vec<FreezePhase>,
}

impl FreezeSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::invalid("schedule has no phases"));
        }
        if self.phases.iter().any(|p| p.trainable.is_empty()) {
            return Err(Error::invalid("schedule phase trains no layer"));
        }
        Ok(())
    }

    pub fn trainable_sets(&self) -> Vec<FreezeMask> {
        self.phases.iter().map(|p| p.trainable).collect()
    }
}

/// Phase plan of a strategy. Gradual unfreezing spends one epoch on each
/// of its first three stages and the remaining budget, at least one
/// epoch, on the fully unfrozen stage.
pub fn make_schedule(strategy: Strategy, max_epochs: usize) -> FreezeSchedule {
    use Layer::*;
    let best = |layers: &[Layer], epochs| FreezePhase {
        trainable: FreezeMask::from_layers(layers),
        max_epochs: epochs,
        select_best: true,
    };
    let single = |layers: &[Layer]| FreezePhase {
        trainable: FreezeMask::from_layers(layers),
        max_epochs: 1,
        select_best: false,
    };
    let all = [Lstm, Conv, Dense, Output];
    let phases = match strategy {
        Strategy::None => vec![best(&all, max_epochs)],
        Strategy::Gradual => vec![
            single(&[Output]),
            single(&[Output, Dense]),
            single(&[Output, Dense, Conv]),
            best(&all, max_epochs.saturating_sub(3).max(1)),
        ],
        Strategy::BottomUp => [&[Output][..], &[Lstm], &[Conv], &[Dense], &all]
            .iter()
            .map(|l| best(l, max_epochs))
            .collect(),
        Strategy::TopDown => [&[Output][..], &[Dense], &[Conv], &[Lstm], &all]
            .iter()
            .map(|l| best(l, max_epochs))
            .collect(),
    };
    FreezeSchedule { phases }
}

/// Validation metric used for model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// F1 of the given positive class.
    BinaryF1 {
        positive: usize,
    },
    MacroF1,
}

impl Metric {
    pub fn score(self, preds: &[usize], golds: &[usize], n_classes: usize) -> Result<f64> {
        let names: Vec<String> = (0..n_classes).map(|c| c.to_string()).collect();
        let report = match self {
            Metric::BinaryF1 { positive } => {
                evalkit::binary_metrics(preds, golds, &names, positive)?
            }
            Metric::MacroF1 => evalkit::macro_metrics(preds, golds, &names)?,
        };
        Ok(report.averaged.f1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    pub trainable: FreezeMask,
    /// Validation metric after each epoch.
    pub history: Vec<f64>,
    /// Zero-based epoch whose parameters leave the phase.
    pub selected_epoch: Option<usize>,
    pub entry_checksums: [String; 4],
    pub exit_checksums: [String; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneResult {
    pub best_params: NetworkParams,
    /// Validation metric of `best_params`.
    pub best_metric: f64,
    pub phases: Vec<PhaseRecord>,
}

impl FinetuneResult {
    pub fn history(&self) -> Vec<Vec<f64>> {
        self.phases.iter().map(|p| p.history.clone()).collect()
    }

    pub fn selected_epochs(&self) -> Vec<Option<usize>> {
        self.phases.iter().map(|p| p.selected_epoch).collect()
    }
}

/// Runs the schedule's phases in order.
pub fn finetune(
    params: &NetworkParams,
    schedule: &FreezeSchedule,
    train: &EncodedSet,
    validation: &EncodedSet,
    metric: Metric,
    settings: &TrainSettings,
    seed: u64,
) -> Result<FinetuneResult> {
    schedule.validate()?;
    check_compatible(params, train)?;
    check_compatible(params, validation)?;
    let n_classes = params.shape.n_classes;
    let evaluate = |p: &NetworkParams| -> Result<f64> {
        let preds = predict(p, validation, settings.batch_size.max(32))?;
        metric.score(&preds, &validation.labels, n_classes)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = params.clone();
    let mut current_metric = None;
    let mut records = Vec::with_capacity(schedule.phases.len());
    for (pi, phase) in schedule.phases.iter().enumerate() {
        let entry_checksums = current.checksums();
        let mut working = current.clone();
        let mut state = OptimizerState::new(&working, settings.optimizer);
        let mut history = Vec::with_capacity(phase.max_epochs);
        let mut best: Option<(usize, f64, NetworkParams)> = None;
        for epoch in 0..phase.max_epochs {
            let train_loss = train_epoch(
                &mut working,
                &mut state,
                train,
                phase.trainable,
                settings,
                &mut rng,
            )?;
            let m = evaluate(&working)?;
            log::info!(
                "phase {} {} epoch {}: train loss {train_loss:.5}, validation {m:.4}",
                pi + 1,
                phase.trainable,
                epoch + 1
            );
            history.push(m);
            if phase.select_best && best.as_ref().is_none_or(|b| m > b.1) {
                best = Some((epoch, m, working.clone()));
            }
        }
        let selected_epoch = if phase.select_best {
            best.as_ref().map(|b| b.0)
        } else {
            history.len().checked_sub(1)
        };
        match best {
            Some((_, m, p)) => {
                current = p;
                current_metric = Some(m);
            }
            None => {
                current_metric = history.last().copied().or(current_metric);
                current = working;
            }
        }
        records.push(PhaseRecord {
            trainable: phase.trainable,
            history,
            selected_epoch,
            entry_checksums,
            exit_checksums: current.checksums(),
        });
    }
    let best_metric = match current_metric {
        Some(m) => m,
        None => evaluate(&current)?,
    };
    Ok(FinetuneResult {
        best_params: current,
        best_metric,
        phases: records,
    })
}
