use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use offtl_core::baseline::{self, LinearConfig};
use offtl_core::config::RunConfig;
use offtl_core::corpus::{self, LabeledTweet, Task};
use offtl_core::embed::{self, EmbeddingTable};
use offtl_core::evalkit::{self, MetricsReport};
use offtl_core::lda::{self, LdaModel, UserClusters};
use offtl_core::net::{self, gradcheck, NetShape, NetworkParams};
use offtl_core::textprep::{StopWords, TokenizedTweet};
use offtl_core::transfer::{self, EncodedSet, Encoder, Metric, Strategy, TrainSettings};
use offtl_core::Error;
use serde_json::json;

use crate::{
    BaselineArgs, Cli, ClusterArgs, Command, EvaluateArgs, FinetuneArgs, GradcheckArgs,
    LdaTrainArgs, MetricArg, PrepareArgs, PretrainArgs, StrategyArg, TargetArg, TaskArg,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Check(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Check(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Check(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

pub fn write_file(path: &Path, content: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e).into())
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn config(cli: &Cli, flags: &[(&str, Option<String>)]) -> CliResult<RunConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &cli.global.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn flag<T: ToString>(key: &'static str, v: Option<T>) -> (&'static str, Option<String>) {
    (key, v.map(|x| x.to_string()))
}

fn stopwords(path: Option<&PathBuf>) -> CliResult<StopWords> {
    Ok(match path {
        Some(p) => StopWords::load(p)?,
        None => StopWords::german(),
    })
}

pub fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Prepare(a) => prepare(&cli, a),
        Command::LdaTrain(a) => lda_train(&cli, a),
        Command::ClusterUsers(a) => cluster_users(&cli, a),
        Command::Pretrain(a) => pretrain(&cli, a),
        Command::Finetune(a) => finetune(&cli, a),
        Command::Evaluate(a) => evaluate(&cli, a),
        Command::Baseline(a) => run_baseline(&cli, a),
        // These take no config keys but still reject a broken config.
        Command::Gradcheck(a) => config(&cli, &[]).and_then(|_| run_gradcheck(a)),
        Command::MakeFixtures(a) => {
            config(&cli, &[]).and_then(|_| crate::fixtures::write_all(&a.out, a.seed, a.dim))
        }
    }
}

fn tokenized_lines<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items
        .map(|t| TokenizedTweet::from_raw("", t).tokens.join(" ") + "\n")
        .collect()
}

fn prepare(cli: &Cli, a: &PrepareArgs) -> CliResult {
    let cfg = config(cli, &[flag("validation_tail", a.tail)])?;
    match (&a.corpus, &a.labeled) {
        (Some(path), None) => {
            let mut tweets = corpus::load_raw(path)?;
            let before = tweets.len();
            if a.dedup {
                tweets = corpus::deduplicate(tweets);
            }
            println!("{} tweets read, {} kept", before, tweets.len());
            if let Some(out) = &a.corpus_out {
                write_file(out, &corpus::serialize_raw(&tweets))?;
            }
            if let Some(out) = &a.mentions_out {
                let lists =
                    corpus::extract_mention_lists(&tweets, cfg.min_mentions, cfg.min_user_freq);
                println!("{} mention lists", lists.len());
                write_file(
                    out,
                    &lists.iter().map(|l| l.join(" ") + "\n").collect::<String>(),
                )?;
            }
            if let Some(out) = &a.out {
                write_file(
                    out,
                    &tokenized_lines(tweets.iter().map(|t| t.text.as_str())),
                )?;
            }
            Ok(())
        }
        (None, Some(path)) => {
            let data = corpus::load_labeled(path)?;
            if let Some(out) = &a.out {
                write_file(out, &tokenized_lines(data.iter().map(|t| t.text.as_str())))?;
            }
            if a.train_out.is_some() || a.valid_out.is_some() {
                let split = corpus::split_tail(data, cfg.validation_tail)?;
                println!(
                    "train {} / validation {}",
                    split.train.len(),
                    split.validation.len()
                );
                if let Some(out) = &a.train_out {
                    write_file(out, &corpus::serialize_labeled(&split.train)?)?;
                }
                if let Some(out) = &a.valid_out {
                    write_file(out, &corpus::serialize_labeled(&split.validation)?)?;
                }
            }
            Ok(())
        }
        _ => Err(CliError::Usage(
            "prepare needs exactly one of --corpus and --labeled".into(),
        )),
    }
}

fn lda_train(cli: &Cli, a: &LdaTrainArgs) -> CliResult {
    let cfg = config(
        cli,
        &[
            flag("k_topics", a.k),
            flag("lda_iterations", a.iters),
            flag("seed", a.seed),
        ],
    )?;
    let stop = stopwords(a.stopwords.as_ref())?;
    let tweets = corpus::load_raw(&a.corpus)?;
    let docs: Vec<Vec<String>> = tweets
        .iter()
        .map(|t| transfer::topic_document(&TokenizedTweet::from_raw(t.id.clone(), &t.text), &stop))
        .filter(|d| d.len() >= cfg.min_meaningful)
        .collect();
    let model = lda::train_gibbs(&docs, &cfg.topic_lda())?;
    model.save(&a.out)?;
    println!(
        "trained {} topics on {} documents, {} word types",
        model.k(),
        docs.len(),
        model.vocab().len()
    );
    Ok(())
}

fn cluster_users(cli: &Cli, a: &ClusterArgs) -> CliResult {
    let cfg = config(
        cli,
        &[
            flag("k_users", a.k),
            flag("lda_iterations", a.iters),
            flag("seed", a.seed),
        ],
    )?;
    let lists: Vec<Vec<String>> = read(&a.mentions)?
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .filter(|l| !l.is_empty())
        .collect();
    let clusters = lda::cluster_users(&lists, &cfg.user_lda())?;
    clusters.save(&a.out)?;
    println!(
        "{} users in {} clusters",
        clusters.cluster_of.len(),
        clusters.k
    );
    Ok(())
}

fn load_table(path: &Path, cfg: &RunConfig) -> CliResult<EmbeddingTable> {
    Ok(embed::load_vectors(path, cfg.subword())?)
}

fn load_clusters(path: Option<&PathBuf>) -> CliResult<Option<UserClusters>> {
    Ok(match path {
        Some(p) => Some(UserClusters::load(p)?),
        None => None,
    })
}

fn settings(cfg: &RunConfig, batch_size: usize) -> TrainSettings {
    TrainSettings {
        optimizer: cfg.nadam(),
        dropout: cfg.dropout,
        batch_size,
    }
}

fn pretrain(cli: &Cli, a: &PretrainArgs) -> CliResult {
    let cfg = config(
        cli,
        &[
            flag("pretrain_epochs", a.epochs),
            flag("pretrain_batch", a.batch),
            flag("seed", a.seed),
        ],
    )?;
    let mut task = match a.task {
        TaskArg::Category => transfer::build_category_task(&transfer::load_comments(&a.corpus)?)?,
        TaskArg::Emoji => transfer::build_emoji_task(&corpus::load_raw(&a.corpus)?),
        TaskArg::Topic => {
            let path = a
                .lda
                .as_ref()
                .ok_or_else(|| CliError::Usage("--task topic requires --lda".into()))?;
            let model = LdaModel::load(path)?;
            let stop = stopwords(a.stopwords.as_ref())?;
            transfer::build_topic_task(
                &corpus::load_raw(&a.corpus)?,
                &model,
                &stop,
                &cfg.infer(),
                cfg.min_meaningful,
            )
        }
    };
    task.batch_size = cfg.pretrain_batch;
    task.epochs = cfg.pretrain_epochs;
    let table = load_table(&a.vectors, &cfg)?;
    let clusters = load_clusters(a.clusters.as_ref())?;
    let encoder = Encoder {
        table: &table,
        clusters: clusters.as_ref(),
        max_len: cfg.max_len,
    };
    let shape = NetShape::new(
        &cfg.net(),
        table.dim(),
        encoder.cluster_width(),
        task.label_space.len(),
    );
    let init = NetworkParams::init(shape, cfg.seed)?;
    println!(
        "{} task: {} examples, {} labels, {} parameters",
        task.kind,
        task.examples.len(),
        task.label_space.len(),
        init.param_count()
    );
    let outcome = transfer::pretrain(
        &task,
        &init,
        &encoder,
        &settings(&cfg, cfg.pretrain_batch),
        cfg.seed,
    )?;
    for (e, l) in outcome.losses.iter().enumerate() {
        println!("epoch {e}\tloss {l:.6}");
    }
    net::save_checkpoint(&a.out, &outcome.params, None)?;
    Ok(())
}

fn target(t: TargetArg) -> Task {
    match t {
        TargetArg::Coarse => Task::Coarse,
        TargetArg::Fine => Task::Fine,
    }
}

fn encode_labeled(encoder: &Encoder<'_>, data: &[LabeledTweet], task: Task) -> EncodedSet {
    let texts: Vec<&str> = data.iter().map(|t| t.text.as_str()).collect();
    let labels: Vec<usize> = data.iter().map(|t| t.label(task)).collect();
    encoder.encode_texts(&texts, &labels)
}

fn check_input_shape(
    params: &NetworkParams,
    table: &EmbeddingTable,
    cluster_width: usize,
) -> CliResult {
    if params.shape.emb_dim != table.dim() {
        return Err(Error::Shape(format!(
            "checkpoint expects {}-dimensional embeddings, vectors have {}",
            params.shape.emb_dim,
            table.dim()
        ))
        .into());
    }
    if params.shape.cluster_width != cluster_width {
        return Err(Error::Shape(format!(
            "checkpoint expects cluster width {}, clusters give {}",
            params.shape.cluster_width, cluster_width
        ))
        .into());
    }
    Ok(())
}

fn finetune(cli: &Cli, a: &FinetuneArgs) -> CliResult {
    let cfg = config(
        cli,
        &[
            flag("finetune_epochs", a.epochs),
            flag("finetune_batch", a.batch),
            flag("seed", a.seed),
        ],
    )?;
    let task = target(a.task);
    let table = load_table(&a.vectors, &cfg)?;
    let clusters = load_clusters(a.clusters.as_ref())?;
    let encoder = Encoder {
        table: &table,
        clusters: clusters.as_ref(),
        max_len: cfg.max_len,
    };
    let params = if a.ckpt == "none" {
        let shape = NetShape::new(
            &cfg.net(),
            table.dim(),
            encoder.cluster_width(),
            task.n_classes(),
        );
        NetworkParams::init(shape, cfg.seed)?
    } else {
        let pre = net::load_checkpoint(Path::new(&a.ckpt))?.params;
        check_input_shape(&pre, &table, encoder.cluster_width())?;
        pre.replace_head(task.n_classes(), cfg.seed ^ 0x4ead)?
    };
    let train = encode_labeled(&encoder, &corpus::load_labeled(&a.train)?, task);
    let valid = encode_labeled(&encoder, &corpus::load_labeled(&a.valid)?, task);
    let metric = match a.metric.unwrap_or(match a.task {
        TargetArg::Coarse => MetricArg::Binary,
        TargetArg::Fine => MetricArg::Macro,
    }) {
        MetricArg::Binary => Metric::BinaryF1 { positive: 0 },
        MetricArg::Macro => Metric::MacroF1,
    };
    let strategy = match a.strategy {
        StrategyArg::None => Strategy::None,
        StrategyArg::Gu => Strategy::Gradual,
        StrategyArg::Bu => Strategy::BottomUp,
        StrategyArg::Tu => Strategy::TopDown,
    };
    let schedule = transfer::make_schedule(strategy, cfg.finetune_epochs);
    let result = transfer::finetune(
        &params,
        &schedule,
        &train,
        &valid,
        metric,
        &settings(&cfg, cfg.finetune_batch),
        cfg.seed,
    )?;
    for (i, p) in result.phases.iter().enumerate() {
        let hist: Vec<String> = p.history.iter().map(|m| format!("{m:.4}")).collect();
        println!(
            "phase {} {}: epochs {}, selected {}, history [{}]",
            i + 1,
            p.trainable,
            p.history.len(),
            p.selected_epoch
                .map_or("-".to_string(), |e| (e + 1).to_string()),
            hist.join(", ")
        );
    }
    println!("best validation metric {:.6}", result.best_metric);
    net::save_checkpoint(&a.out, &result.best_params, None)?;
    if let Some(path) = &a.summary {
        let phases: Vec<_> = result
            .phases
            .iter()
            .map(|p| {
                json!({
                    "trainable": p.trainable.layers().iter().map(|l| l.id()).collect::<Vec<_>>(),
                    "history": p.history,
                    "selected_epoch": p.selected_epoch,
                    "entry_checksums": p.entry_checksums,
                    "exit_checksums": p.exit_checksums,
                })
            })
            .collect();
        let summary = json!({
            "strategy": strategy.to_string(),
            "metric": match metric { Metric::BinaryF1 { .. } => "binary_f1", Metric::MacroF1 => "macro_f1" },
            "best_metric": result.best_metric,
            "phases": phases,
        });
        write_file(
            path,
            &(serde_json::to_string_pretty(&summary).expect("json value") + "\n"),
        )?;
    }
    Ok(())
}

fn expand_checkpoints(patterns: &[String], runs: usize) -> Vec<String> {
    patterns
        .iter()
        .flat_map(|p| {
            if p.contains("{run}") {
                (1..=runs)
                    .map(|r| p.replace("{run}", &r.to_string()))
                    .collect()
            } else {
                vec![p.clone()]
            }
        })
        .collect()
}

fn report_for(task: Task, preds: &[usize], golds: &[usize]) -> CliResult<MetricsReport> {
    let names = task.class_names();
    Ok(match task {
        Task::Coarse => evalkit::binary_metrics(preds, golds, &names, 0)?,
        Task::Fine => evalkit::macro_metrics(preds, golds, &names)?,
    })
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult {
    let cfg = config(cli, &[flag("runs", a.runs)])?;
    let task = target(a.task);
    let table = load_table(&a.vectors, &cfg)?;
    let clusters = load_clusters(a.clusters.as_ref())?;
    let encoder = Encoder {
        table: &table,
        clusters: clusters.as_ref(),
        max_len: cfg.max_len,
    };
    let data = corpus::load_labeled(&a.data)?;
    let set = encode_labeled(&encoder, &data, task);
    let mut reports = Vec::new();
    let mut first_preds = None;
    let ckpts = expand_checkpoints(&a.ckpt, cfg.runs);
    for path in &ckpts {
        let params = net::load_checkpoint(Path::new(path))?.params;
        check_input_shape(&params, &table, encoder.cluster_width())?;
        if params.shape.n_classes != task.n_classes() {
            return Err(Error::Shape(format!(
                "{path}: head has {} classes, task has {}",
                params.shape.n_classes,
                task.n_classes()
            ))
            .into());
        }
        let preds = transfer::predict(&params, &set, 64)?;
        reports.push(report_for(task, &preds, &set.labels)?);
        first_preds.get_or_insert(preds);
    }
    let agg = evalkit::aggregate_runs(&reports)?;
    let title = match task {
        Task::Coarse => "coarse",
        Task::Fine => "fine",
    };
    let mut text = agg.to_table(title);
    text.push_str(&format!("runs = {}\n", reports.len()));
    match &a.report {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &a.errors {
        if task != Task::Coarse {
            return Err(CliError::Usage(
                "--errors is defined for the coarse task only".into(),
            ));
        }
        let texts: Vec<&str> = data.iter().map(|t| t.text.as_str()).collect();
        let er = evalkit::error_report(
            first_preds.as_deref().unwrap_or(&[]),
            &set.labels,
            &texts,
            0,
        )?;
        write_file(path, &er.to_tsv(&task.class_names()))?;
        println!(
            "{} false positives, {} false negatives ({:.0}:{:.0})",
            er.false_positives.len(),
            er.false_negatives.len(),
            er.fp_fn_ratio.0,
            er.fp_fn_ratio.1
        );
    }
    Ok(())
}

fn run_baseline(cli: &Cli, a: &BaselineArgs) -> CliResult {
    let cfg = config(cli, &[flag("seed", a.seed)])?;
    let task = target(a.task);
    let table = load_table(&a.vectors, &cfg)?;
    let train = corpus::load_labeled(&a.train)?;
    let valid = corpus::load_labeled(&a.valid)?;
    let tok = |d: &[LabeledTweet]| -> Vec<Vec<String>> {
        d.iter()
            .map(|t| TokenizedTweet::from_raw("", &t.text).tokens)
            .collect()
    };
    let (train_tokens, valid_tokens) = (tok(&train), tok(&valid));
    let idf = embed::compute_idf(&train_tokens)?;
    let feats = |docs: &[Vec<String>]| -> Vec<Vec<f64>> {
        docs.iter()
            .map(|d| embed::idf_weighted_vector(&table, &idf, d))
            .collect()
    };
    let train_labels: Vec<usize> = train.iter().map(|t| t.label(task)).collect();
    let valid_labels: Vec<usize> = valid.iter().map(|t| t.label(task)).collect();
    let lc = LinearConfig {
        l2: cfg.baseline_l2,
        epochs: cfg.baseline_epochs,
        lr: cfg.baseline_lr,
        seed: cfg.seed,
    };
    let fit = baseline::train_linear(
        &feats(&train_tokens),
        &train_labels,
        task.class_names(),
        &lc,
    )?;
    let preds = feats(&valid_tokens)
        .iter()
        .map(|x| fit.model.predict(x))
        .collect::<offtl_core::Result<Vec<_>>>()?;
    print!(
        "{}",
        report_for(task, &preds, &valid_labels)?.to_table("baseline")
    );
    if a.top_terms > 0 {
        let top = baseline::top_terms_per_category(
            &train_tokens,
            &train_labels,
            task.n_classes(),
            &idf,
            a.top_terms,
        );
        for (name, terms) in task.class_names().iter().zip(top) {
            let t: Vec<String> = terms.iter().map(|(w, s)| format!("{w} ({s:.2})")).collect();
            println!("{name}: {}", t.join(", "));
        }
    }
    Ok(())
}

fn run_gradcheck(a: &GradcheckArgs) -> CliResult {
    let summary = gradcheck::run(a.seed, a.batches, a.samples, a.eps)?;
    let mut masks: Vec<String> = Vec::new();
    for c in &summary.checks {
        let m = c.mask.to_string();
        if !masks.contains(&m) {
            masks.push(m);
        }
    }
    for m in &masks {
        let worst = summary
            .checks
            .iter()
            .filter(|c| &c.mask.to_string() == m)
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max);
        println!("layers {m:<10} max relative error {worst:.3e}");
    }
    let max = summary.max_rel_error();
    println!("max relative error {max:.3e}");
    if summary.passes(a.tol) {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient check failed: {max:.3e} >= {:.0e}",
            a.tol
        )))
    }
}
