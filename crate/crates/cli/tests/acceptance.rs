//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use offtl_core::config::RunConfig;
use offtl_core::corpus::{self, Task};
use offtl_core::embed::{self, SubwordConfig};
use offtl_core::evalkit::{self, Prf};
use offtl_core::lda::{self, LdaConfig, LdaModel, UserClusters};
use offtl_core::net::gradcheck;
use offtl_core::net::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
use offtl_core::net::{Layer, NetConfig, NetShape, NetworkParams};
use offtl_core::transfer::{self, Encoder, Metric, Strategy, TrainSettings};
use offtl_core::{emoji, fixtures as fx};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn(&Path) -> Check,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn offtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offtl"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs the binary and requires exit status 0.
fn offtl_ok(args: &[&str]) -> Result<Output, String> {
    let out = offtl(args);
    ensure(out.status.success(), || {
        format!(
            "`offtl {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn gradient_oracle(_: &Path) -> Check {
    let summary = gradcheck::run(3, 5, 2, 1e-5).map_err(|e| e.to_string())?;
    for c in &summary.checks {
        ensure(c.passes(1e-4), || {
            format!(
                "layers {} error {:.3e} at {} (frozen zero: {})",
                c.mask, c.max_rel_error, c.worst, c.frozen_zero
            )
        })?;
    }
    let cli = offtl_ok(&["gradcheck", "--seed", "3"])?;
    let last = String::from_utf8_lossy(&cli.stdout)
        .lines()
        .last()
        .unwrap_or_default()
        .to_string();
    Ok(format!(
        "{} mask checks, max relative error {:.3e}; cli: {last}",
        summary.checks.len(),
        summary.max_rel_error()
    ))
}

fn ids(sets: &[offtl_core::net::FreezeMask]) -> Vec<Vec<u8>> {
    sets.iter()
        .map(|m| m.layers().iter().map(|l| l.id()).collect())
        .collect()
}

struct Desk {
    table: embed::EmbeddingTable,
    fixture: fx::TransferFixture,
}

fn desk(seed: u64, dim: usize) -> Desk {
    let fixture = fx::transfer_fixture(500, 200, 200, seed);
    let mut words: Vec<String> = fixture.topic_vocab.iter().flatten().cloned().collect();
    words.extend(["und", "die", "der", "ist", "nicht", "das"].map(String::from));
    let table = embed::parse_vectors(
        &fx::fixture_vectors(&words, dim, seed + 100),
        SubwordConfig::default(),
    )
    .expect("fixture vectors parse");
    Desk { table, fixture }
}

fn encoded(enc: &Encoder<'_>, data: &[corpus::LabeledTweet]) -> transfer::EncodedSet {
    let texts: Vec<&str> = data.iter().map(|t| t.text.as_str()).collect();
    let labels: Vec<usize> = data.iter().map(|t| t.label(Task::Coarse)).collect();
    enc.encode_texts(&texts, &labels)
}

fn freeze_contract(_: &Path) -> Check {
    use Layer::*;
    let expected: [(Strategy, Vec<Vec<u8>>); 3] = [
        (
            Strategy::Gradual,
            vec![vec![4], vec![3, 4], vec![2, 3, 4], vec![1, 2, 3, 4]],
        ),
        (
            Strategy::BottomUp,
            vec![vec![4], vec![1], vec![2], vec![3], vec![1, 2, 3, 4]],
        ),
        (
            Strategy::TopDown,
            vec![vec![4], vec![3], vec![2], vec![1], vec![1, 2, 3, 4]],
        ),
    ];
    let d = desk(11, 50);
    let enc = Encoder {
        table: &d.table,
        clusters: None,
        max_len: 100,
    };
    let train = encoded(&enc, &d.fixture.train[..100]);
    let valid = encoded(&enc, &d.fixture.valid[..100]);
    let cfg = NetConfig {
        lstm_units: 16,
        filters: 32,
        dense_units: 16,
        ..NetConfig::default()
    };
    let params =
        NetworkParams::init(NetShape::new(&cfg, 50, 0, 2), 11).map_err(|e| e.to_string())?;
    let mut phases = 0;
    for (strategy, order) in expected {
        let schedule = transfer::make_schedule(strategy, 3);
        ensure(ids(&schedule.trainable_sets()) == order, || {
            format!(
                "{strategy} order {:?}, expected {order:?}",
                ids(&schedule.trainable_sets())
            )
        })?;
        let result = transfer::finetune(
            &params,
            &schedule,
            &train,
            &valid,
            Metric::BinaryF1 { positive: 0 },
            &TrainSettings::default(),
            11,
        )
        .map_err(|e| e.to_string())?;
        for (pi, rec) in result.phases.iter().enumerate() {
            for layer in [Lstm, Conv, Dense, Output] {
                let i = usize::from(layer.id() - 1);
                let same = rec.entry_checksums[i] == rec.exit_checksums[i];
                if rec.trainable.contains(layer) {
                    ensure(!same, || {
                        format!(
                            "{strategy} phase {} left trainable {layer} untouched",
                            pi + 1
                        )
                    })?;
                } else {
                    ensure(same, || {
                        format!("{strategy} phase {} changed frozen {layer}", pi + 1)
                    })?;
                }
                phases += 1;
            }
        }
    }
    Ok(format!(
        "GU/BU/TU orders match; {phases} layer-phase checksums consistent"
    ))
}

fn summary_f1(path: &Path) -> Result<(f64, serde_json::Value), String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let f1 = v["best_metric"]
        .as_f64()
        .ok_or("summary lacks best_metric")?;
    Ok((f1, v))
}

fn transfer_smoke(tmp: &Path) -> Check {
    let mut bu = Vec::new();
    let mut none = Vec::new();
    for seed in 1..=5u64 {
        let dir = tmp.join(format!("smoke{seed}"));
        let f = |name: &str| dir.join(name);
        let seed_s = seed.to_string();
        offtl_ok(&["make-fixtures", "--out", s(&dir), "--seed", &seed_s])?;
        let cfg = f("desk.cfg");
        let common = ["--config", s(&cfg), "--seed", &seed_s];
        let with = |args: &[&str]| -> Result<Output, String> {
            let mut all: Vec<&str> = args.to_vec();
            all.extend_from_slice(&common);
            offtl_ok(&all)
        };
        let (bg, lda_out, vectors) = (
            f("transfer_background.jsonl"),
            f("lda.txt"),
            f("vectors.txt"),
        );
        with(&[
            "lda-train",
            "--corpus",
            s(&bg),
            "--k",
            "2",
            "--out",
            s(&lda_out),
        ])?;
        let pre = f("pre.ckpt");
        with(&[
            "pretrain",
            "--task",
            "topic",
            "--corpus",
            s(&bg),
            "--lda",
            s(&lda_out),
            "--vectors",
            s(&vectors),
            "--out",
            s(&pre),
        ])?;
        let (train, valid) = (f("transfer_train.tsv"), f("transfer_valid.tsv"));
        let (bu_sum, none_sum) = (f("bu.json"), f("none.json"));
        let tune = |ckpt: &str, strategy: &str, extra: &[&str], out: &str, summary: &Path| {
            let mut args = vec![
                "finetune",
                "--ckpt",
                ckpt,
                "--strategy",
                strategy,
                "--task",
                "coarse",
                "--train",
                s(&train),
                "--valid",
                s(&valid),
                "--vectors",
                s(&vectors),
                "--out",
                out,
                "--summary",
                s(summary),
            ];
            args.extend_from_slice(extra);
            with(&args)
        };
        tune(s(&pre), "bu", &[], s(&f("bu.ckpt")), &bu_sum)?;
        // BU runs five phases of the configured per-phase budget.
        tune(
            "none",
            "none",
            &["--epochs", "50"],
            s(&f("none.ckpt")),
            &none_sum,
        )?;
        let (b, bv) = summary_f1(&bu_sum)?;
        let (n, _) = summary_f1(&none_sum)?;
        let phases = bv["phases"].as_array().map_or(0, Vec::len);
        ensure(phases == 5, || {
            format!("seed {seed}: BU ran {phases} phases")
        })?;
        bu.push(b);
        none.push(n);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mb, mn) = (mean(&bu), mean(&none));
    let detail = format!("BU F1 {bu:.3?} mean {mb:.4}; no transfer {none:.3?} mean {mn:.4}");
    ensure(mb >= 0.95 && mb > mn, || detail.clone())?;
    Ok(detail)
}

fn lda_recovery(_: &Path) -> Check {
    let planted = fx::planted_topic_docs(200, 20, 2, 40, 5);
    let config = LdaConfig {
        iterations: 200,
        seed: 5,
        ..LdaConfig::with_topics(2)
    };
    let mut violations = Vec::new();
    let model = lda::train_gibbs_observed(&planted.docs, &config, |sweep, m| {
        if let Err(e) = m.check_consistency() {
            violations.push(format!("sweep {sweep}: {e}"));
        }
    })
    .map_err(|e| e.to_string())?;
    ensure(violations.is_empty(), || violations.join("; "))?;
    let again = lda::train_gibbs(&planted.docs, &config).map_err(|e| e.to_string())?;
    ensure(model.assignments() == again.assignments(), || {
        "assignments differ across runs".into()
    })?;
    let assigned: Vec<usize> = (0..planted.docs.len())
        .map(|d| {
            let counts: Vec<f64> = (0..model.k())
                .map(|t| f64::from(model.doc_topic(d, t)))
                .collect();
            lda::argmax(&counts)
        })
        .collect();
    let purity = lda::purity(&assigned, &planted.topics);
    ensure(purity >= 0.95, || format!("purity {purity:.4}"))?;
    Ok(format!(
        "purity {purity:.4}; counts consistent over 200 sweeps; reruns identical"
    ))
}

fn user_clustering(_: &Path) -> Check {
    let cliques = fx::mention_cliques(3, 20, 600, 7);
    let config = LdaConfig {
        k: 3,
        ..LdaConfig::with_topics(3)
    };
    let clusters = lda::cluster_users(&cliques.lists, &config).map_err(|e| e.to_string())?;
    ensure(clusters.cluster_of.len() == 60, || {
        format!("{} users clustered", clusters.cluster_of.len())
    })?;
    let (assigned, truth): (Vec<usize>, Vec<usize>) = clusters
        .cluster_of
        .iter()
        .map(|(u, &c)| (c, cliques.clique_of[u]))
        .unzip();
    let purity = lda::purity(&assigned, &truth);
    ensure(purity >= 0.95, || format!("purity {purity:.4}"))?;
    Ok(format!("purity {purity:.4} over 60 users"))
}

fn is_emoji_part(c: char) -> bool {
    let cp = c as u32;
    emoji::is_emoji_char(c)
        || (0x1F3FB..=0x1F3FF).contains(&cp)
        || (0xE0020..=0xE007F).contains(&cp)
        || matches!(c, '\u{200D}' | '\u{FE0F}' | '\u{FE0E}' | '\u{20E3}')
}

fn emoji_builder(_: &Path) -> Check {
    let fixture = fx::emoji_tweets(100, 9);
    let task = transfer::build_emoji_task(&fixture.tweets);
    let planted: usize = fixture.planted.iter().map(Vec::len).sum();
    ensure(task.examples.len() == planted, || {
        format!(
            "{} examples for {planted} planted emoji types",
            task.examples.len()
        )
    })?;
    for e in &task.examples {
        let token = e.tweet.tokens.iter().find(|t| t.chars().any(is_emoji_part));
        ensure(token.is_none(), || {
            format!("emoji left in {}: {token:?}", e.tweet.source_id)
        })?;
    }
    Ok(format!(
        "{planted} examples, {} labels, no emoji in texts",
        task.label_space.len()
    ))
}

fn brute_force(preds: &[usize], golds: &[usize], k: usize) -> (Vec<[f64; 3]>, f64) {
    let mut m = vec![vec![0usize; k]; k];
    for (&p, &g) in preds.iter().zip(golds) {
        m[g][p] += 1;
    }
    let per = (0..k)
        .map(|c| {
            let tp = m[c][c] as f64;
            let predicted: usize = (0..k).map(|g| m[g][c]).sum();
            let actual: usize = m[c].iter().sum();
            let p = if predicted == 0 {
                0.0
            } else {
                tp / predicted as f64
            };
            let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
            let f = if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            };
            [p, r, f]
        })
        .collect();
    let acc = (0..k).map(|c| m[c][c]).sum::<usize>() as f64 / preds.len() as f64;
    (per, acc)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn metrics_oracle(_: &Path) -> Check {
    let exact = Prf::from_counts(3, 1, 2);
    ensure(exact.precision == 0.75 && exact.recall == 0.6, || {
        format!("{exact:?}")
    })?;
    ensure(close(exact.f1, 2.0 * 0.75 * 0.6 / 1.35), || {
        format!("{exact:?}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut trials = 0;
    for k in [2usize, 4] {
        let classes: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        for _ in 0..5 {
            let preds: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..k)).collect();
            let golds: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..k)).collect();
            let (per, acc) = brute_force(&preds, &golds, k);
            let macro_r =
                evalkit::macro_metrics(&preds, &golds, &classes).map_err(|e| e.to_string())?;
            for (c, [p, r, f]) in per.iter().enumerate() {
                let got = macro_r.per_class[c].prf;
                ensure(
                    close(got.precision, *p) && close(got.recall, *r) && close(got.f1, *f),
                    || format!("class {c} of {k}: {got:?} vs {p} {r} {f}"),
                )?;
            }
            let mean = |i: usize| per.iter().map(|v| v[i]).sum::<f64>() / k as f64;
            let avg = macro_r.averaged;
            ensure(
                close(avg.precision, mean(0))
                    && close(avg.recall, mean(1))
                    && close(avg.f1, mean(2)),
                || format!("macro average {avg:?}"),
            )?;
            ensure(close(macro_r.accuracy, acc), || {
                format!("accuracy {} vs {acc}", macro_r.accuracy)
            })?;
            for (positive, &[p, r, f]) in per.iter().enumerate() {
                let b = evalkit::binary_metrics(&preds, &golds, &classes, positive)
                    .map_err(|e| e.to_string())?;
                ensure(
                    close(b.averaged.precision, p)
                        && close(b.averaged.recall, r)
                        && close(b.averaged.f1, f),
                    || format!("binary positive {positive}: {:?}", b.averaged),
                )?;
                ensure(close(b.accuracy, acc), || "binary accuracy".into())?;
            }
            trials += 1;
        }
    }
    Ok(format!(
        "{trials} random sets of 1000 pairs match; P=0.75 R=0.6 case exact"
    ))
}

fn overfit(_: &Path) -> Check {
    let sep = fx::separable_labeled(64, 0, 21);
    let table = embed::parse_vectors(
        &fx::fixture_vectors(&sep.vocab, 300, 21),
        SubwordConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let enc = Encoder {
        table: &table,
        clusters: None,
        max_len: 100,
    };
    let data = encoded(&enc, &sep.train);
    let mut params = NetworkParams::init(NetShape::new(&NetConfig::default(), 300, 0, 2), 21)
        .map_err(|e| e.to_string())?;
    let settings = TrainSettings::default();
    let schedule = transfer::make_schedule(Strategy::None, 50);
    let mask = schedule.phases[0].trainable;
    let mut state = offtl_core::net::OptimizerState::new(&params, settings.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for epoch in 1..=50 {
        transfer::train_epoch(&mut params, &mut state, &data, mask, &settings, &mut rng)
            .map_err(|e| e.to_string())?;
        let preds = transfer::predict(&params, &data, 64).map_err(|e| e.to_string())?;
        let hits = preds
            .iter()
            .zip(&data.labels)
            .filter(|(p, g)| p == g)
            .count();
        if hits == data.len() {
            return Ok(format!("64/64 training accuracy after epoch {epoch}"));
        }
    }
    Err("training accuracy below 100% after 50 epochs".into())
}

fn dropout_scaling(_: &Path) -> Check {
    let (params, batch) =
        gradcheck::random_problem(&gradcheck::check_shape(), 4, 17).map_err(|e| e.to_string())?;
    let c =
        gradcheck::dropout_expectation(&params, &batch, 0.5, 10_000).map_err(|e| e.to_string())?;
    let detail = format!("relative error lstm {:.4}, pooled {:.4}", c.lstm, c.pooled);
    ensure(c.passes(0.02), || detail.clone())?;
    Ok(detail)
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

/// Every subcommand over a fresh directory; returns the stdout of each.
fn pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let fxd = dir.join("fx");
    let f = |n: &str| fxd.join(n);
    let o = |n: &str| dir.join(n);
    let cfg = f("desk.cfg");
    let mut outs = Vec::new();
    let mut go = |args: &[&str]| -> Result<(), String> {
        let mut all = args.to_vec();
        all.extend_from_slice(&["--config", s(&cfg), "--set", "pretrain_epochs=1"]);
        outs.push(offtl_ok(&all)?.stdout);
        Ok(())
    };
    offtl_ok(&["make-fixtures", "--out", s(&fxd), "--seed", "4"])?;
    go(&[
        "prepare",
        "--corpus",
        s(&f("mention_cliques.jsonl")),
        "--dedup",
        "--corpus-out",
        s(&o("dedup.jsonl")),
        "--mentions-out",
        s(&o("mentions.txt")),
        "--out",
        s(&o("raw_tokens.txt")),
    ])?;
    go(&[
        "prepare",
        "--labeled",
        s(&f("transfer_train.tsv")),
        "--tail",
        "50",
        "--train-out",
        s(&o("split_train.tsv")),
        "--valid-out",
        s(&o("split_valid.tsv")),
        "--out",
        s(&o("labeled_tokens.txt")),
    ])?;
    go(&[
        "lda-train",
        "--corpus",
        s(&f("transfer_background.jsonl")),
        "--iters",
        "50",
        "--out",
        s(&o("lda.txt")),
    ])?;
    go(&[
        "cluster-users",
        "--mentions",
        s(&o("mentions.txt")),
        "--iters",
        "50",
        "--out",
        s(&o("clusters.tsv")),
    ])?;
    let vectors = f("vectors.txt");
    go(&[
        "pretrain",
        "--task",
        "topic",
        "--corpus",
        s(&f("transfer_background.jsonl")),
        "--lda",
        s(&o("lda.txt")),
        "--vectors",
        s(&vectors),
        "--clusters",
        s(&o("clusters.tsv")),
        "--out",
        s(&o("topic.ckpt")),
    ])?;
    go(&[
        "pretrain",
        "--task",
        "emoji",
        "--corpus",
        s(&f("emoji.jsonl")),
        "--vectors",
        s(&vectors),
        "--out",
        s(&o("emoji.ckpt")),
    ])?;
    go(&[
        "pretrain",
        "--task",
        "category",
        "--corpus",
        s(&f("comments.jsonl")),
        "--vectors",
        s(&vectors),
        "--out",
        s(&o("category.ckpt")),
    ])?;
    go(&[
        "finetune",
        "--ckpt",
        s(&o("topic.ckpt")),
        "--strategy",
        "gu",
        "--task",
        "coarse",
        "--train",
        s(&o("split_train.tsv")),
        "--valid",
        s(&o("split_valid.tsv")),
        "--vectors",
        s(&vectors),
        "--clusters",
        s(&o("clusters.tsv")),
        "--epochs",
        "4",
        "--out",
        s(&o("tuned.ckpt")),
        "--summary",
        s(&o("tuned.json")),
    ])?;
    go(&[
        "finetune",
        "--ckpt",
        s(&o("category.ckpt")),
        "--strategy",
        "tu",
        "--task",
        "fine",
        "--train",
        s(&o("split_train.tsv")),
        "--valid",
        s(&o("split_valid.tsv")),
        "--vectors",
        s(&vectors),
        "--epochs",
        "1",
        "--out",
        s(&o("fine.ckpt")),
    ])?;
    go(&[
        "evaluate",
        "--ckpt",
        s(&o("tuned.ckpt")),
        "--data",
        s(&f("transfer_valid.tsv")),
        "--task",
        "coarse",
        "--vectors",
        s(&vectors),
        "--clusters",
        s(&o("clusters.tsv")),
        "--report",
        s(&o("report.txt")),
        "--errors",
        s(&o("errors.tsv")),
    ])?;
    go(&[
        "baseline",
        "--train",
        s(&f("separable_train.tsv")),
        "--valid",
        s(&f("separable_valid.tsv")),
        "--vectors",
        s(&vectors),
        "--task",
        "fine",
    ])?;
    go(&["gradcheck", "--seed", "4", "--batches", "1"])?;
    Ok(outs)
}

fn roundtrips(dir: &Path) -> Result<usize, String> {
    let err = |e: offtl_core::Error| e.to_string();
    let mut n = 0;

    let ck = dir.join("topic.ckpt");
    let bytes = fs::read(&ck).map_err(|e| e.to_string())?;
    let loaded = read_checkpoint(bytes.as_slice()).map_err(err)?;
    let mut again = Vec::new();
    write_checkpoint(&mut again, &loaded.params, loaded.state.as_ref()).map_err(err)?;
    ensure(again == bytes, || {
        "checkpoint bytes changed on rewrite".into()
    })?;
    let copy = dir.join("copy.ckpt");
    save_checkpoint(&copy, &loaded.params, loaded.state.as_ref()).map_err(err)?;
    ensure(load_checkpoint(&copy).map_err(err)? == loaded, || {
        "checkpoint differs after save/load".into()
    })?;
    let bits = |p: &NetworkParams| -> Vec<u64> {
        p.tensors()
            .iter()
            .flat_map(|t| t.data.iter().map(|v| v.to_bits()))
            .collect()
    };
    ensure(
        bits(&load_checkpoint(&copy).map_err(err)?.params) == bits(&loaded.params),
        || "checkpoint bits".into(),
    )?;
    n += 1;

    for name in [
        "split_train.tsv",
        "split_valid.tsv",
        "fx/transfer_valid.tsv",
    ] {
        let text = fs::read_to_string(dir.join(name)).map_err(|e| e.to_string())?;
        let parsed = corpus::parse_labeled(&text).map_err(err)?;
        ensure(
            corpus::serialize_labeled(&parsed).map_err(err)? == text,
            || format!("{name} changed on rewrite"),
        )?;
        n += 1;
    }

    let text = fs::read_to_string(dir.join("clusters.tsv")).map_err(|e| e.to_string())?;
    ensure(
        UserClusters::parse_tsv(&text).map_err(err)?.to_tsv() == text,
        || "clusters TSV changed".into(),
    )?;
    n += 1;

    let lda_path = dir.join("lda.txt");
    let model = LdaModel::load(&lda_path).map_err(err)?;
    let lda_copy = dir.join("lda_copy.txt");
    model.save(&lda_copy).map_err(err)?;
    ensure(fs::read(&lda_path).ok() == fs::read(&lda_copy).ok(), || {
        "topic model changed on rewrite".into()
    })?;
    n += 1;

    let cfg = RunConfig::load(&dir.join("fx/desk.cfg")).map_err(err)?;
    ensure(
        RunConfig::parse(&cfg.to_file()).map_err(err)? == cfg,
        || "config changed on rewrite".into(),
    )?;
    n += 1;

    let raw = fs::read_to_string(dir.join("dedup.jsonl")).map_err(|e| e.to_string())?;
    ensure(
        corpus::serialize_raw(&corpus::parse_raw(&raw).map_err(err)?) == raw,
        || "raw corpus changed".into(),
    )?;
    let comments = fs::read_to_string(dir.join("fx/comments.jsonl")).map_err(|e| e.to_string())?;
    ensure(
        transfer::serialize_comments(&transfer::parse_comments(&comments).map_err(err)?)
            == comments,
        || "comments changed on rewrite".into(),
    )?;
    Ok(n + 2)
}

fn determinism(tmp: &Path) -> Check {
    let (a, b) = (tmp.join("det_a"), tmp.join("det_b"));
    let out_a = pipeline(&a)?;
    let out_b = pipeline(&b)?;
    for (i, (x, y)) in out_a.iter().zip(&out_b).enumerate() {
        ensure(x == y, || format!("stdout of step {} differs", i + 1))?;
    }
    let (fa, fb) = (files(&a), files(&b));
    ensure(fa.keys().eq(fb.keys()), || "output file sets differ".into())?;
    for (name, bytes) in &fa {
        ensure(fb[name] == *bytes, || {
            format!("{} differs between reruns", name.display())
        })?;
    }
    let trips = roundtrips(&a)?;
    Ok(format!(
        "{} subcommand runs and {} files identical; {trips} round-trips exact",
        out_a.len() + 1,
        fa.len()
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "gradient oracle",
            budget: Duration::from_secs(120),
            run: gradient_oracle,
        },
        Criterion {
            name: "freeze contract",
            budget: Duration::from_secs(300),
            run: freeze_contract,
        },
        Criterion {
            name: "transfer smoke test",
            budget: Duration::from_secs(600),
            run: transfer_smoke,
        },
        Criterion {
            name: "LDA recovery",
            budget: Duration::from_secs(120),
            run: lda_recovery,
        },
        Criterion {
            name: "user clustering",
            budget: Duration::from_secs(120),
            run: user_clustering,
        },
        Criterion {
            name: "emoji task builder",
            budget: Duration::from_secs(60),
            run: emoji_builder,
        },
        Criterion {
            name: "metrics oracle",
            budget: Duration::from_secs(60),
            run: metrics_oracle,
        },
        Criterion {
            name: "overfit check",
            budget: Duration::from_secs(600),
            run: overfit,
        },
        Criterion {
            name: "dropout scaling",
            budget: Duration::from_secs(300),
            run: dropout_scaling,
        },
        Criterion {
            name: "determinism and round-trips",
            budget: Duration::from_secs(600),
            run: determinism,
        },
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    for c in &criteria {
        if !only.is_empty() && !only.iter().any(|o| c.name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)(tmp.path());
        let took = start.elapsed();
        let result = result.and_then(|d| {
            ensure(took <= c.budget, || {
                format!("took {took:.1?}, budget {:?}", c.budget)
            })
            .map(|_| d)
        });
        match result {
            Ok(detail) => println!("PASS {} ({:.1}s): {detail}", c.name, took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {} ({:.1}s): {why}", c.name, took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
