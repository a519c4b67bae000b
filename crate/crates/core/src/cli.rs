//! Command-line front end. [`run`] is the whole program; the binary only
//! forwards `std::env::args` and the exit code.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, vocabulary_hash, Checkpoint};
use crate::config::RunConfig;
use crate::corpus::{self, BagOfWords, Corpus, CorpusSettings};
use crate::error::Error;
use crate::evaluation::{self, AspectLabelReport, CoherenceReport, Granularity};
use crate::model::{self, ModelParams};
use crate::synthetic::{self, SyntheticConfig};
use crate::text;
use crate::training;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "valta", version, about = "Aspect-structured topic model for review corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize, filter and split a JSON-lines review file into a corpus directory.
    Preprocess(PreprocessArgs),
    /// Train a model on a corpus directory.
    Train(TrainArgs),
    /// Write the top words of every topic as TSV.
    Topics(TopicsArgs),
    /// Compute evaluation metrics as JSON.
    Eval(EvalArgs),
    /// Predict the rating of one user / item pair.
    Infer(InferArgs),
    /// Export per-review topic logits for the given items as CSV.
    Export(ExportArgs),
    /// Generate the planted-structure synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_word_count: usize,
    #[arg(long, default_value_t = 5)]
    min_reviews: usize,
    /// Stopword file, one word per line; the built-in English list by default.
    #[arg(long, conflicts_with = "no_stopwords")]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    no_stopwords: bool,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Flat TOML config; every key optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct TopicsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Output TSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Npmi,
    Mse,
    Aspects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GranularityArg {
    Sentence,
    Review,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "npmi,mse")]
    metrics: Vec<Metric>,
    /// JSON-lines labeled sentences `{"text": ..., "label": ...}`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sentence")]
    granularity: GranularityArg,
    /// Words per topic scored by NPMI.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long)]
    item: String,
    /// Plain-text review; its sentences get aspect assignments.
    #[arg(long)]
    review: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    items: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SyntheticConfig::default().seed)]
    seed: u64,
}

/// Failure of one command, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Provenance record written next to every command's output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub corpus_hash: Option<String>,
    pub seed: Option<u64>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
}

struct Run<'a> {
    command: &'static str,
    args: &'a [String],
    started_at: String,
}

impl Run<'_> {
    fn finish(&self, config: Value, corpus_hash: Option<String>, seed: Option<u64>) -> RunManifest {
        RunManifest {
            command: self.command.to_string(),
            args: self.args.to_vec(),
            config,
            corpus_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at.clone(),
            finished_at: now(),
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> CmdResult<()> {
    write_json(path, manifest)
}

/// `<file>.manifest.json` beside a file output.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn ensure_parent(path: &Path) -> CmdResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn sha256_files(paths: &[PathBuf]) -> CmdResult<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hash over the three files of a corpus directory.
pub fn corpus_hash(dir: &Path) -> crate::Result<String> {
    let files: Vec<PathBuf> = ["manifest.json", "vocab.txt", "reviews.jsonl"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    sha256_files(&files).map_err(|f| match f {
        Failure::Data(e) => e,
        Failure::Usage(m) => Error::InvalidArgument(m),
    })
}

fn load_model(path: &Path) -> CmdResult<Checkpoint> {
    Ok(checkpoint::checkpoint_load(path)?)
}

fn load_matching_corpus(dir: &Path, ck: &Checkpoint) -> CmdResult<Corpus> {
    let corpus = corpus::load_corpus(dir)?;
    if vocabulary_hash(&corpus.vocabulary) != vocabulary_hash(&ck.vocabulary) {
        return Err(Failure::Data(Error::InvalidArgument(format!(
            "corpus {} was not built with the model's vocabulary",
            dir.display()
        ))));
    }
    Ok(corpus)
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code. Results go to `out`, diagnostics to `err`.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    let args = argv.get(1..).unwrap_or_default();
    let result = match cli.command {
        Command::Preprocess(a) => preprocess(a, args, out),
        Command::Train(a) => train(a, args, out, err),
        Command::Topics(a) => topics(a, args, out, err),
        Command::Eval(a) => eval(a, args, out),
        Command::Infer(a) => infer(a, args, out, err),
        Command::Export(a) => export(a, args, out),
        Command::Synth(a) => synth(a, args, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn start<'a>(command: &'static str, args: &'a [String]) -> Run<'a> {
    Run {
        command,
        args,
        started_at: now(),
    }
}

fn preprocess(a: PreprocessArgs, args: &[String], out: &mut dyn Write) -> CmdResult<()> {
    let run = start("preprocess", args);
    let settings = CorpusSettings {
        min_word_count: a.min_word_count,
        min_reviews: a.min_reviews,
        seed: a.seed,
        test_fraction: a.test_fraction,
    };
    let stopwords: HashSet<String> = match (&a.stopwords, a.no_stopwords) {
        (_, true) => HashSet::new(),
        (Some(p), false) => text::parse_stopwords(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        (None, false) => text::default_stopwords(),
    };
    let raws = corpus::ingest(&a.input)?;
    let built = corpus::build_corpus(&raws, settings, &stopwords)?;
    corpus::save_corpus(&built, &a.out)?;
    let s = built.stats();
    let _ = writeln!(out, "users\titems\treviews\tsentences\tvocabulary");
    let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", s.users, s.items, s.reviews, s.sentences, s.vocabulary);
    let _ = writeln!(out, "train reviews: {}, test reviews: {}", s.train_reviews, s.test_reviews);

    let input_hash = sha256_files(std::slice::from_ref(&a.input))?;
    let config = json!({
        "settings": settings,
        "stopwords": a.stopwords.as_ref().map(|p| p.display().to_string()),
        "no_stopwords": a.no_stopwords,
        "input_hash": input_hash,
    });
    let m = run.finish(config, Some(corpus_hash(&a.out)?), Some(a.seed));
    write_manifest(&a.out.join("run_manifest.json"), &m)
}

fn train(a: TrainArgs, args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> CmdResult<()> {
    let run = start("train", args);
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let corpus = corpus::load_corpus(&a.corpus)?;
    let model_config = cfg.model_config(corpus.vocabulary.len())?;
    let train_config = cfg.train_config(corpus.rating_range())?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let mut log = Vec::new();
    let quiet = a.quiet;
    let outcome = training::train_with(&corpus, model_config, &train_config, |r| {
        let line = serde_json::to_string(r).expect("epoch record serializes");
        log.extend_from_slice(line.as_bytes());
        log.push(b'\n');
        if !quiet && (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == train_config.epochs) {
            let _ = writeln!(
                err,
                "epoch {:>4}  total {:.4}  gen {:.4}  mse {:.4}  kl_z {:.4}  kl_psi {:.4}  val_mse {}",
                r.epoch,
                r.total,
                r.gen,
                r.mse,
                r.kl_z,
                r.kl_psi,
                r.validation_mse.map_or("-".into(), |v| format!("{v:.4}"))
            );
        }
    })?;
    let log_path = a.out.join("train_log.jsonl");
    fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
    checkpoint::checkpoint_save(&outcome.params, &corpus.vocabulary, &a.out.join("model.ckpt"))?;
    if let Some(best) = &outcome.best {
        checkpoint::checkpoint_save(best, &corpus.vocabulary, &a.out.join("best.ckpt"))?;
    }
    let test = corpus.test_indices();
    if !test.is_empty() {
        let mse = training::mse_over(&corpus, &test, &outcome.params, train_config.rating_scale)?;
        let _ = writeln!(out, "test mse (final): {mse:.6}");
    }
    if let Some(e) = outcome.best_epoch {
        let _ = writeln!(out, "best validation epoch: {e}");
    }
    let config = json!({
        "run": cfg,
        "model": model_config,
        "train": train_config,
    });
    let m = run.finish(config, Some(corpus_hash(&a.corpus)?), Some(cfg.seed));
    write_manifest(&a.out.join("run_manifest.json"), &m)
}

fn topics(a: TopicsArgs, args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> CmdResult<()> {
    let run = start("topics", args);
    if a.top == 0 {
        return Err(Failure::Usage("--top must be at least 1".into()));
    }
    let ck = load_model(&a.model)?;
    let lists = evaluation::top_words(&ck.params, &ck.vocabulary, a.top);
    let mut buf = Vec::new();
    evaluation::write_topics_tsv(&lists, &mut buf).expect("write to Vec");
    let m = run.finish(json!({ "model": a.model, "top": a.top }), None, None);
    match &a.out {
        Some(p) => {
            ensure_parent(p)?;
            fs::write(p, &buf).map_err(|e| Error::io(p, e))?;
            write_manifest(&sidecar(p), &m)
        }
        None => {
            let _ = out.write_all(&buf);
            let _ = writeln!(err, "{}", serde_json::to_string(&m).map_err(Error::from)?);
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseReport {
    pub test_reviews: usize,
    pub mse: f64,
    /// MSE of always predicting the train mean rating.
    pub constant_baseline_mse: f64,
    pub test_rating_variance: f64,
    pub rating_scale: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub model_vocab_hash: String,
    pub npmi: Option<CoherenceReport>,
    pub mse: Option<MseReport>,
    pub aspects: Option<AspectLabelReport>,
}

#[derive(Deserialize)]
struct LabelLine {
    text: String,
    label: String,
}

fn read_labels(path: &Path) -> CmdResult<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: LabelLine = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((l.text, l.label));
    }
    Ok(out)
}

fn mse_report(corpus: &Corpus, params: &ModelParams) -> CmdResult<MseReport> {
    let test = corpus.test_indices();
    if test.is_empty() {
        return Err(Failure::Data(Error::InvalidArgument("corpus has no test reviews".into())));
    }
    let scale = corpus.rating_range();
    let mse = training::mse_over(corpus, &test, params, Some(scale))?;
    let ys: Vec<f64> = test.iter().map(|&i| corpus.reviews[i].rating).collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let variance = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let train_mean = corpus.train_mean_rating();
    let baseline = ys.iter().map(|y| (y - train_mean).powi(2)).sum::<f64>() / n;
    Ok(MseReport {
        test_reviews: test.len(),
        mse,
        constant_baseline_mse: baseline,
        test_rating_variance: variance,
        rating_scale: scale,
    })
}

/// Builds the metrics report; shared by the CLI and tests.
fn metrics(
    ck: &Checkpoint,
    corpus: &Corpus,
    which: &[Metric],
    labels: Option<&[(String, String)]>,
    granularity: Granularity,
    top: usize,
) -> CmdResult<MetricsReport> {
    let mut report = MetricsReport {
        format_version: 1,
        model_vocab_hash: vocabulary_hash(&ck.vocabulary),
        npmi: None,
        mse: None,
        aspects: None,
    };
    if which.contains(&Metric::Npmi) {
        let docs = match granularity {
            Granularity::Sentence => corpus.sentence_documents(),
            Granularity::Review => corpus.review_documents(),
        };
        let lists = evaluation::top_words(&ck.params, &ck.vocabulary, top);
        report.npmi = Some(evaluation::npmi(&lists, &docs, &ck.vocabulary, top, granularity)?);
    }
    if which.contains(&Metric::Mse) {
        report.mse = Some(mse_report(corpus, &ck.params)?);
    }
    if which.contains(&Metric::Aspects) {
        let labels = labels.ok_or_else(|| Failure::Usage("--metrics aspects needs --labels".into()))?;
        let labeled: Vec<(BagOfWords, String)> = labels
            .iter()
            .map(|(t, l)| (ck.vocabulary.bag_of_words(t), l.clone()))
            .collect();
        let set = evaluation::label_set_of(labels.iter().map(|(_, l)| l.as_str()));
        report.aspects = Some(evaluation::label_aspects(&ck.params, &labeled, &set)?);
    }
    Ok(report)
}

fn eval(a: EvalArgs, args: &[String], _out: &mut dyn Write) -> CmdResult<()> {
    let run = start("eval", args);
    if a.top == 0 {
        return Err(Failure::Usage("--top must be at least 1".into()));
    }
    let ck = load_model(&a.model)?;
    let corpus = load_matching_corpus(&a.corpus, &ck)?;
    let labels = a.labels.as_deref().map(read_labels).transpose()?;
    let granularity = match a.granularity {
        GranularityArg::Sentence => Granularity::Sentence,
        GranularityArg::Review => Granularity::Review,
    };
    let report = metrics(&ck, &corpus, &a.metrics, labels.as_deref(), granularity, a.top)?;
    ensure_parent(&a.out)?;
    write_json(&a.out, &report)?;
    let metric_names: Vec<String> = a.metrics.iter().map(|m| format!("{m:?}").to_lowercase()).collect();
    let config = json!({
        "model": a.model,
        "metrics": metric_names,
        "labels": a.labels,
        "granularity": granularity,
        "top": a.top,
    });
    let m = run.finish(config, Some(corpus_hash(&a.corpus)?), None);
    write_manifest(&sidecar(&a.out), &m)
}

#[derive(Debug, Serialize)]
struct AspectBreakdown {
    aspect: usize,
    importance: f64,
    rating: f64,
}

#[derive(Debug, Serialize)]
struct SentenceAssignment {
    sentence: String,
    aspect: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Inference {
    user: String,
    item: String,
    rating: f64,
    global_bias: f64,
    item_bias: f64,
    user_bias: f64,
    aspects: Vec<AspectBreakdown>,
    sentences: Option<Vec<SentenceAssignment>>,
}

fn infer(a: InferArgs, args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> CmdResult<()> {
    let run = start("infer", args);
    let ck = load_model(&a.model)?;
    let corpus = load_matching_corpus(&a.corpus, &ck)?;
    let review_text = a
        .review
        .as_ref()
        .map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e)))
        .transpose()?;
    let review_bow = review_text.as_deref().map(|t| ck.vocabulary.bag_of_words(t));
    let history = |map: &BTreeMap<String, BagOfWords>, id: &str, what: &str| -> CmdResult<BagOfWords> {
        match (map.get(id), &review_bow) {
            (Some(b), _) => Ok(b.clone()),
            (None, Some(r)) if !r.is_empty() => Ok(r.clone()),
            _ => Err(Failure::Data(Error::UnknownId(format!("{what} {id}")))),
        }
    };
    let user_bow = history(&corpus.user_bow, &a.user, "user")?;
    let item_bow = history(&corpus.item_bow, &a.item, "item")?;
    let p = model::predict_rating(&a.user, &a.item, &user_bow, &item_bow, &ck.params)?;
    let sentences = match &review_text {
        Some(t) => {
            let mut v = Vec::new();
            for sentence in text::segment_sentences(t) {
                let bow = ck.vocabulary.bag_of_words(&sentence);
                let aspect = if bow.is_empty() {
                    None
                } else {
                    Some(evaluation::assign_aspect(&bow, &ck.params)?)
                };
                v.push(SentenceAssignment { sentence, aspect });
            }
            Some(v)
        }
        None => None,
    };
    let result = Inference {
        user: a.user.clone(),
        item: a.item.clone(),
        rating: p.rating,
        global_bias: p.biases.0,
        item_bias: p.biases.1,
        user_bias: p.biases.2,
        aspects: (0..p.importance.len())
            .map(|i| AspectBreakdown {
                aspect: i,
                importance: p.importance[i],
                rating: p.aspect_ratings[i],
            })
            .collect(),
        sentences,
    };
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&result).map_err(Error::from)?);
    let m = run.finish(
        json!({ "model": a.model, "user": a.user, "item": a.item, "review": a.review }),
        Some(corpus_hash(&a.corpus)?),
        None,
    );
    let _ = writeln!(err, "{}", serde_json::to_string(&m).map_err(Error::from)?);
    Ok(())
}

fn export(a: ExportArgs, args: &[String], _out: &mut dyn Write) -> CmdResult<()> {
    let run = start("export", args);
    let ck = load_model(&a.model)?;
    let corpus = load_matching_corpus(&a.corpus, &ck)?;
    let known = corpus.items();
    if let Some(missing) = a.items.iter().find(|i| !known.contains(i.as_str())) {
        return Err(Failure::Data(Error::UnknownId(format!("item {missing}"))));
    }
    let rows = evaluation::export_item_representations(&corpus, &ck.params, &a.items)?;
    let mut buf = Vec::new();
    evaluation::write_representations_csv(&rows, &mut buf).expect("write to Vec");
    ensure_parent(&a.out)?;
    fs::write(&a.out, &buf).map_err(|e| Error::io(&a.out, e))?;
    let m = run.finish(
        json!({ "model": a.model, "items": a.items }),
        Some(corpus_hash(&a.corpus)?),
        None,
    );
    write_manifest(&sidecar(&a.out), &m)
}

/// Config that trains the bundled synthetic corpus to planted recovery.
pub const SYNTHETIC_TRAIN_CONFIG: &str = "\
aspects = 3
sub_aspects = 2
epochs = 200
batch_size = 20
learning_rate = 0.01
seed = 0
";

fn synth(a: SynthArgs, args: &[String], out: &mut dyn Write) -> CmdResult<()> {
    let run = start("synth", args);
    let cfg = SyntheticConfig {
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let data = synthetic::generate(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> CmdResult<()> {
        let mut buf = Vec::new();
        f(&mut buf).expect("write to Vec");
        let p = a.out.join(name);
        fs::write(&p, buf).map_err(|e| Error::io(&p, e).into())
    };
    write("reviews.jsonl", &|b| synthetic::write_reviews_jsonl(&data.reviews, b))?;
    write("labels.jsonl", &|b| synthetic::write_labeled_jsonl(&data.labeled, b))?;
    write("planted_topics.tsv", &|b| synthetic::write_planted_topics_tsv(&data.topics, b))?;
    write("train.toml", &|b| b.write_all(SYNTHETIC_TRAIN_CONFIG.as_bytes()))?;
    let _ = writeln!(
        out,
        "{} reviews, {} labeled sentences, {} planted topics written to {}",
        data.reviews.len(),
        data.labeled.len(),
        data.topics.len(),
        a.out.display()
    );
    let m = run.finish(json!(cfg), None, Some(cfg.seed));
    write_manifest(&a.out.join("run_manifest.json"), &m)
}
