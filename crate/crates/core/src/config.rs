//! Run configuration: every tunable value with its default.
//!
//! Config files hold `key = value` lines; `#` starts a comment. Layering is
//! defaults, then file, then command-line overrides through [`RunConfig::set`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::embed::SubwordConfig;
use crate::error::{Error, Result};
use crate::lda::{InferConfig, LdaConfig};
use crate::net::{NadamConfig, NetConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule_decay: f64,
    pub dropout: f64,
    pub pretrain_batch: usize,
    pub finetune_batch: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub lstm_units: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters: usize,
    pub dense_units: usize,
    pub leaky_slope: f64,
    pub max_len: usize,
    pub k_topics: usize,
    pub k_users: usize,
    /// `None` selects `10 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub lda_iterations: usize,
    pub infer_iterations: usize,
    pub infer_burn_in: usize,
    pub min_mentions: usize,
    pub min_user_freq: usize,
    pub min_meaningful: usize,
    pub buckets: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub validation_tail: usize,
    pub runs: usize,
    pub baseline_l2: f64,
    pub baseline_epochs: usize,
    pub baseline_lr: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nadam = NadamConfig::default();
        let net = NetConfig::default();
        let sub = SubwordConfig::default();
        let infer = InferConfig::default();
        Self {
            lr: nadam.lr,
            beta1: nadam.beta1,
            beta2: nadam.beta2,
            epsilon: nadam.eps,
            schedule_decay: nadam.schedule_decay,
            dropout: 0.5,
            pretrain_batch: 128,
            finetune_batch: 32,
            pretrain_epochs: 10,
            finetune_epochs: 50,
            lstm_units: net.lstm_units,
            kernel_sizes: net.kernel_sizes,
            filters: net.filters,
            dense_units: net.dense_units,
            leaky_slope: net.leaky_slope,
            max_len: 100,
            k_topics: 20,
            k_users: 50,
            alpha: None,
            beta: 0.01,
            lda_iterations: 1000,
            infer_iterations: infer.iterations,
            infer_burn_in: infer.burn_in,
            min_mentions: 2,
            min_user_freq: 5,
            min_meaningful: 2,
            buckets: sub.buckets,
            ngram_min: sub.ngram_min,
            ngram_max: sub.ngram_max,
            validation_tail: 808,
            runs: 10,
            baseline_l2: 1e-4,
            baseline_epochs: 30,
            baseline_lr: 0.05,
            seed: 1,
        }
    }
}

/// Every recognised key, in documentation order.
pub const KEYS: &[&str] = &[
    "lr",
    "beta1",
    "beta2",
    "epsilon",
    "schedule_decay",
    "dropout",
    "pretrain_batch",
    "finetune_batch",
    "pretrain_epochs",
    "finetune_epochs",
    "lstm_units",
    "kernel_sizes",
    "filters",
    "dense_units",
    "leaky_slope",
    "max_len",
    "k_topics",
    "k_users",
    "alpha",
    "beta",
    "lda_iterations",
    "infer_iterations",
    "infer_burn_in",
    "min_mentions",
    "min_user_freq",
    "min_meaningful",
    "buckets",
    "ngram_min",
    "ngram_max",
    "validation_tail",
    "runs",
    "baseline_l2",
    "baseline_epochs",
    "baseline_lr",
    "seed",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    pub fn parse(content: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(content)?;
        Ok(cfg)
    }

    /// Overlays the assignments in `content` on `self`.
    pub fn apply(&mut self, content: &str) -> Result<()> {
        for (i, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    /// Assigns one key without range checking.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr" => self.lr = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "schedule_decay" => self.schedule_decay = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "pretrain_batch" => self.pretrain_batch = num(key, value)?,
            "finetune_batch" => self.finetune_batch = num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value)?,
            "finetune_epochs" => self.finetune_epochs = num(key, value)?,
            "lstm_units" => self.lstm_units = num(key, value)?,
            "kernel_sizes" => {
                self.kernel_sizes = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "filters" => self.filters = num(key, value)?,
            "dense_units" => self.dense_units = num(key, value)?,
            "leaky_slope" => self.leaky_slope = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "k_topics" => self.k_topics = num(key, value)?,
            "k_users" => self.k_users = num(key, value)?,
            "alpha" => {
                self.alpha = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "beta" => self.beta = num(key, value)?,
            "lda_iterations" => self.lda_iterations = num(key, value)?,
            "infer_iterations" => self.infer_iterations = num(key, value)?,
            "infer_burn_in" => self.infer_burn_in = num(key, value)?,
            "min_mentions" => self.min_mentions = num(key, value)?,
            "min_user_freq" => self.min_user_freq = num(key, value)?,
            "min_meaningful" => self.min_meaningful = num(key, value)?,
            "buckets" => self.buckets = num(key, value)?,
            "ngram_min" => self.ngram_min = num(key, value)?,
            "ngram_max" => self.ngram_max = num(key, value)?,
            "validation_tail" => self.validation_tail = num(key, value)?,
            "runs" => self.runs = num(key, value)?,
            "baseline_l2" => self.baseline_l2 = num(key, value)?,
            "baseline_epochs" => self.baseline_epochs = num(key, value)?,
            "baseline_lr" => self.baseline_lr = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !unit_open(self.beta1) || !unit_open(self.beta2) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.schedule_decay >= 0.0) {
            return bad("epsilon must be positive and schedule_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must lie in [0, 1)");
        }
        let positive = [
            ("pretrain_batch", self.pretrain_batch),
            ("finetune_batch", self.finetune_batch),
            ("lstm_units", self.lstm_units),
            ("filters", self.filters),
            ("dense_units", self.dense_units),
            ("max_len", self.max_len),
            ("k_topics", self.k_topics),
            ("k_users", self.k_users),
            ("lda_iterations", self.lda_iterations),
            ("infer_iterations", self.infer_iterations),
            ("buckets", self.buckets),
            ("ngram_min", self.ngram_min),
            ("runs", self.runs),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be at least 1")));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return bad("kernel_sizes must list positive widths");
        }
        if self.alpha.is_some_and(|a| !(a > 0.0)) || !(self.beta > 0.0) {
            return bad("alpha and beta must be positive");
        }
        if self.infer_burn_in >= self.infer_iterations {
            return bad("infer_burn_in must be below infer_iterations");
        }
        if self.ngram_max < self.ngram_min {
            return bad("ngram_max must be >= ngram_min");
        }
        if !(self.baseline_l2 >= 0.0) || !(self.baseline_lr > 0.0) {
            return bad("baseline_l2 must be >= 0 and baseline_lr > 0");
        }
        Ok(())
    }

    pub fn nadam(&self) -> NadamConfig {
        NadamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
            schedule_decay: self.schedule_decay,
        }
    }

    pub fn net(&self) -> NetConfig {
        NetConfig {
            lstm_units: self.lstm_units,
            kernel_sizes: self.kernel_sizes.clone(),
            filters: self.filters,
            dense_units: self.dense_units,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn subword(&self) -> SubwordConfig {
        SubwordConfig {
            buckets: self.buckets,
            ngram_min: self.ngram_min,
            ngram_max: self.ngram_max,
            seed: self.seed,
        }
    }

    pub fn infer(&self) -> InferConfig {
        InferConfig {
            iterations: self.infer_iterations,
            burn_in: self.infer_burn_in,
        }
    }

    fn lda(&self, k: usize) -> LdaConfig {
        let mut c = LdaConfig::with_topics(k);
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        c.beta = self.beta;
        c.iterations = self.lda_iterations;
        c.seed = self.seed;
        c
    }

    pub fn topic_lda(&self) -> LdaConfig {
        self.lda(self.k_topics)
    }

    pub fn user_lda(&self) -> LdaConfig {
        self.lda(self.k_users)
    }

    /// Renders the configuration in the file format accepted by [`parse`](Self::parse).
    pub fn to_file(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "schedule_decay" => self.schedule_decay.to_string(),
            "dropout" => self.dropout.to_string(),
            "pretrain_batch" => self.pretrain_batch.to_string(),
            "finetune_batch" => self.finetune_batch.to_string(),
            "pretrain_epochs" => self.pretrain_epochs.to_string(),
            "finetune_epochs" => self.finetune_epochs.to_string(),
            "lstm_units" => self.lstm_units.to_string(),
            "kernel_sizes" => self
                .kernel_sizes
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "filters" => self.filters.to_string(),
            "dense_units" => self.dense_units.to_string(),
            "leaky_slope" => self.leaky_slope.to_string(),
            "max_len" => self.max_len.to_string(),
            "k_topics" => self.k_topics.to_string(),
            "k_users" => self.k_users.to_string(),
            "alpha" => self
                .alpha
                .map_or_else(|| "auto".to_string(), |a| a.to_string()),
            "beta" => self.beta.to_string(),
            "lda_iterations" => self.lda_iterations.to_string(),
            "infer_iterations" => self.infer_iterations.to_string(),
            "infer_burn_in" => self.infer_burn_in.to_string(),
            "min_mentions" => self.min_mentions.to_string(),
            "min_user_freq" => self.min_user_freq.to_string(),
            "min_meaningful" => self.min_meaningful.to_string(),
            "buckets" => self.buckets.to_string(),
            "ngram_min" => self.ngram_min.to_string(),
            "ngram_max" => self.ngram_max.to_string(),
            "validation_tail" => self.validation_tail.to_string(),
            "runs" => self.runs.to_string(),
            "baseline_l2" => self.baseline_l2.to_string(),
            "baseline_epochs" => self.baseline_epochs.to_string(),
            "baseline_lr" => self.baseline_lr.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }
}
