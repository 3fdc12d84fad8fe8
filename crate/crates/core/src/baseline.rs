//! Linear baseline over IDF-weighted mean embeddings.
//!
//! The classifier is a multiclass linear model trained with the
//! Crammer-Singer hinge loss by stochastic gradient descent. L2 shrinkage
//! is applied as a proximal step after each update, which keeps weights
//! finite for any regularizer strength.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::IdfTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// One row per class; the last column is the bias.
    pub weights: Vec<Vec<f64>>,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearConfig {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            epochs: 30,
            lr: 0.05,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub model: LinearModel,
    /// Regularized objective after each epoch.
    pub objectives: Vec<f64>,
}

fn scores(weights: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .map(|w| {
            let (bias, coef) = w.split_last().unwrap();
            coef.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
        })
        .collect()
}

/// Index of the largest score; ties resolve to the earliest class.
fn first_argmax(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in s.iter().enumerate() {
        if v > s[best] {
            best = i;
        }
    }
    best
}

/// Most violating rival class and its margin violation.
fn violation(s: &[f64], y: usize) -> Option<(usize, f64)> {
    let rival = (0..s.len())
        .filter(|&r| r != y)
        .max_by(|&a, &b| s[a].total_cmp(&s[b]).then(b.cmp(&a)))?;
    let v = 1.0 + s[rival] - s[y];
    (v > 0.0).then_some((rival, v))
}

fn objective(weights: &[Vec<f64>], features: &[Vec<f64>], labels: &[usize], l2: f64) -> f64 {
    let hinge: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| violation(&scores(weights, x), y).map_or(0.0, |(_, v)| v))
        .sum::<f64>()
        / features.len() as f64;
    let norm: f64 = weights
        .iter()
        .flat_map(|w| &w[..w.len() - 1])
        .map(|v| v * v)
        .sum();
    hinge + 0.5 * l2 * norm
}

pub fn train_linear(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: Vec<String>,
    config: &LinearConfig,
) -> Result<LinearFit> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid(
            "features and labels must be non-empty and aligned",
        ));
    }
    let dim = features[0].len();
    if let Some(i) = features.iter().position(|f| f.len() != dim) {
        return Err(Error::Shape(format!(
            "feature {i} has width {}, expected {dim}",
            features[i].len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes.len()) {
        return Err(Error::invalid(format!(
            "label {y} outside {} classes",
            classes.len()
        )));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::invalid("training data contains a single class"));
    }
    if !(config.l2 >= 0.0 && config.lr > 0.0) {
        return Err(Error::invalid("l2 must be >= 0 and lr > 0"));
    }
    let mut weights = vec![vec![0.0; dim + 1]; classes.len()];
    let shrink = 1.0 / (1.0 + config.lr * config.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut objectives = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &features[i];
            let y = labels[i];
            if let Some((rival, _)) = violation(&scores(&weights, x), y) {
                for (j, v) in x.iter().enumerate() {
                    weights[y][j] += config.lr * v;
                    weights[rival][j] -= config.lr * v;
                }
                weights[y][dim] += config.lr;
                weights[rival][dim] -= config.lr;
            }
            for w in &mut weights {
                w[..dim].iter_mut().for_each(|v| *v *= shrink);
            }
        }
        let obj = objective(&weights, features, labels, config.l2);
        log::debug!("linear epoch {}: objective {obj:.6}", objectives.len() + 1);
        objectives.push(obj);
    }
    Ok(LinearFit {
        model: LinearModel { weights, classes },
        objectives,
    })
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights[0].len() - 1
    }

    pub fn scores(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.dim() {
            return Err(Error::Shape(format!(
                "feature width {} != model width {}",
                feature.len(),
                self.dim()
            )));
        }
        Ok(scores(&self.weights, feature))
    }

    pub fn predict(&self, feature: &[f64]) -> Result<usize> {
        Ok(first_argmax(&self.scores(feature)?))
    }
}

/// Highest `idf × in-class count` tokens of every class, ties broken
/// lexicographically. Entry `c` of the result belongs to class `c`.
pub fn top_terms_per_category<D: AsRef<[String]>>(
    docs: &[D],
    labels: &[usize],
    n_classes: usize,
    idf: &IdfTable,
    n: usize,
) -> Vec<Vec<(String, f64)>> {
    let mut counts: Vec<HashMap<&str, usize>> = vec![HashMap::new(); n_classes];
    for (d, &y) in docs.iter().zip(labels) {
        for t in d.as_ref() {
            *counts[y].entry(t.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|c| {
            let mut scored: Vec<(String, f64)> = c
                .into_iter()
                .map(|(t, k)| (t.to_string(), idf.idf(t) * k as f64))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            scored.truncate(n);
            scored
        })
        .collect()
}
