//! Classification metrics, run aggregation and error reports.
//!
//! Every ratio with a zero denominator is defined as 0. Binary reports
//! average nothing: their `averaged` entry is the positive class. Macro
//! reports average per-class precision, recall and F1 without weights, so
//! macro-F1 is the mean of per-class F1 and not the harmonic mean of
//! macro-precision and macro-recall.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub averaged: Prf,
    pub n: usize,
}

fn check_inputs(preds: &[usize], golds: &[usize], n_classes: usize) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("no predictions to evaluate"));
    }
    if let Some(c) = preds.iter().chain(golds).find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!(
            "class id {c} outside {n_classes} classes"
        )));
    }
    Ok(())
}

fn one_vs_rest(preds: &[usize], golds: &[usize], class: usize) -> Prf {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &g) in preds.iter().zip(golds) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Prf::from_counts(tp, fp, fn_)
}

fn per_class(preds: &[usize], golds: &[usize], classes: &[String]) -> Vec<ClassMetrics> {
    classes
        .iter()
        .enumerate()
        .map(|(c, name)| ClassMetrics {
            class: name.clone(),
            prf: one_vs_rest(preds, golds, c),
        })
        .collect()
}

fn accuracy(preds: &[usize], golds: &[usize]) -> f64 {
    ratio(
        preds.iter().zip(golds).filter(|(p, g)| p == g).count(),
        preds.len(),
    )
}

/// Precision, recall and F1 of the `positive` class.
pub fn binary_metrics(
    preds: &[usize],
    golds: &[usize],
    classes: &[String],
    positive: usize,
) -> Result<MetricsReport> {
    check_inputs(preds, golds, classes.len())?;
    if positive >= classes.len() {
        return Err(Error::invalid("positive class out of range"));
    }
    let per_class = per_class(preds, golds, classes);
    Ok(MetricsReport {
        averaged: per_class[positive].prf,
        per_class,
        accuracy: accuracy(preds, golds),
        n: preds.len(),
    })
}

/// Unweighted means of the one-vs-rest metrics of every class.
pub fn macro_metrics(
    preds: &[usize],
    golds: &[usize],
    classes: &[String],
) -> Result<MetricsReport> {
    check_inputs(preds, golds, classes.len())?;
    let per_class = per_class(preds, golds, classes);
    let k = per_class.len() as f64;
    let averaged = Prf {
        precision: per_class.iter().map(|c| c.prf.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|c| c.prf.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|c| c.prf.f1).sum::<f64>() / k,
    };
    Ok(MetricsReport {
        per_class,
        accuracy: accuracy(preds, golds),
        averaged,
        n: preds.len(),
    })
}

fn mean_prf(items: &[Prf]) -> Prf {
    let n = items.len() as f64;
    Prf {
        precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
    }
}

/// Field-wise arithmetic mean of reports over repeated runs.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("no reports to aggregate"))?;
    for r in reports {
        let same_classes = r.per_class.len() == first.per_class.len()
            && r.per_class
                .iter()
                .zip(&first.per_class)
                .all(|(a, b)| a.class == b.class);
        if !same_classes || r.n != first.n {
            return Err(Error::Shape(
                "reports cover different classes or sample counts".into(),
            ));
        }
    }
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    let per_class = first
        .per_class
        .iter()
        .enumerate()
        .map(|(c, cm)| ClassMetrics {
            class: cm.class.clone(),
            prf: mean_prf(
                &reports
                    .iter()
                    .map(|r| r.per_class[c].prf)
                    .collect::<Vec<_>>(),
            ),
        })
        .collect();
    Ok(MetricsReport {
        per_class,
        accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / reports.len() as f64,
        averaged: mean_prf(&reports.iter().map(|r| r.averaged).collect::<Vec<_>>()),
        n: first.n,
    })
}

impl MetricsReport {
    /// Plain-text table: per-class P/R/F1, averages and accuracy, in percent.
    pub fn to_table(&self, title: &str) -> String {
        let mut header = format!("{:<24}", "");
        let mut sub = format!("{:<24}", title);
        let mut row = format!("{:<24}", "");
        for c in &self.per_class {
            let _ = write!(header, "| {:^23} ", c.class);
            sub.push_str("|   P       R       F    ");
            let _ = write!(
                row,
                "| {:>6.2}  {:>6.2}  {:>6.2} ",
                100.0 * c.prf.precision,
                100.0 * c.prf.recall,
                100.0 * c.prf.f1
            );
        }
        let _ = write!(header, "| {:^23} | {:^8}", "Average", "");
        sub.push_str("|   P       R       F    |   Acc  ");
        let _ = write!(
            row,
            "| {:>6.2}  {:>6.2}  {:>6.2} | {:>6.2}",
            100.0 * self.averaged.precision,
            100.0 * self.averaged.recall,
            100.0 * self.averaged.f1,
            100.0 * self.accuracy
        );
        format!(
            "{}\n{}\n{}\n{}\nn = {}\n",
            header.trim_end(),
            sub.trim_end(),
            "-".repeat(sub.trim_end().len()),
            row,
            self.n
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Misclassified {
    pub index: usize,
    pub text: String,
    pub gold: usize,
    pub pred: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub false_positives: Vec<Misclassified>,
    pub false_negatives: Vec<Misclassified>,
    /// FP and FN shares of all binary errors, in percent.
    pub fp_fn_ratio: (f64, f64),
}

/// Splits binary errors into false positives and false negatives of the
/// `positive` class.
pub fn error_report<S: AsRef<str>>(
    preds: &[usize],
    golds: &[usize],
    texts: &[S],
    positive: usize,
) -> Result<ErrorReport> {
    if preds.len() != golds.len() || texts.len() != golds.len() {
        return Err(Error::invalid(
            "predictions, golds and texts differ in length",
        ));
    }
    let mut fps = Vec::new();
    let mut fns = Vec::new();
    for (i, ((&p, &g), t)) in preds.iter().zip(golds).zip(texts).enumerate() {
        let item = || Misclassified {
            index: i,
            text: t.as_ref().to_string(),
            gold: g,
            pred: p,
        };
        if p == positive && g != positive {
            fps.push(item());
        } else if p != positive && g == positive {
            fns.push(item());
        }
    }
    let total = fps.len() + fns.len();
    let fp_fn_ratio = if total == 0 {
        (0.0, 0.0)
    } else {
        (
            100.0 * fps.len() as f64 / total as f64,
            100.0 * fns.len() as f64 / total as f64,
        )
    };
    Ok(ErrorReport {
        false_positives: fps,
        false_negatives: fns,
        fp_fn_ratio,
    })
}

impl ErrorReport {
    /// TSV rows `text, gold, pred, type`.
    pub fn to_tsv(&self, classes: &[String]) -> String {
        let mut out = String::from("text\tgold\tpred\ttype\n");
        let rows = self
            .false_positives
            .iter()
            .map(|m| (m, "FP"))
            .chain(self.false_negatives.iter().map(|m| (m, "FN")));
        for (m, kind) in rows {
            let text = m.text.replace(['\t', '\n', '\r'], " ");
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                text, classes[m.gold], classes[m.pred], kind
            );
        }
        out
    }
}
