use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use valta::checkpoint;
use valta::corpus::{self, CorpusSettings};
use valta::model::{ModelConfig, ModelParams};
use valta::synthetic;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_valta"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic").join(name)
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn preprocess(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    run_ok(&[
        "preprocess",
        "--input",
        p(&bundled("reviews.jsonl")),
        "--out",
        p(&out),
        "--min-word-count",
        "1",
        "--min-reviews",
        "1",
        "--no-stopwords",
    ]);
    out
}

/// Replaces every leaf by its JSON type name; arrays keep one element.
fn schema(v: &Value) -> Value {
    match v {
        Value::Null => "null".into(),
        Value::Bool(_) => "bool".into(),
        Value::Number(_) => "number".into(),
        Value::String(_) => "string".into(),
        Value::Array(a) => Value::Array(a.first().map(schema).into_iter().collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), schema(v))).collect()),
    }
}

#[test]
fn eval_output_matches_golden_schema() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = preprocess(dir.path());
    let config = dir.path().join("short.toml");
    fs::write(&config, "epochs = 3\nbatch_size = 20\nhidden = 16\n").unwrap();
    let run = dir.path().join("run");
    run_ok(&["train", "--corpus", p(&corpus), "--config", p(&config), "--out", p(&run), "--quiet"]);
    for f in ["model.ckpt", "best.ckpt", "train_log.jsonl", "run_manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["epoch", "gen", "mse", "kl_z", "kl_psi", "total", "validation_mse", "wall_time_s"] {
        assert!(first.get(key).is_some(), "{key}");
    }

    let metrics = dir.path().join("metrics.json");
    run_ok(&[
        "eval",
        "--model",
        p(&run.join("model.ckpt")),
        "--corpus",
        p(&corpus),
        "--metrics",
        "npmi,mse,aspects",
        "--labels",
        p(&bundled("labels.jsonl")),
        "--granularity",
        "review",
        "--out",
        p(&metrics),
    ]);
    let got = schema(&serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap());
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/eval_schema.json");
    let golden: Value = serde_json::from_str(&fs::read_to_string(golden_path).unwrap()).unwrap();
    assert_eq!(got, golden);

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eval");
    assert_eq!(manifest["corpus_hash"].as_str().unwrap().len(), 64);
    for key in ["config", "seed", "version", "started_at", "finished_at", "args"] {
        assert!(manifest.get(key).is_some(), "{key}");
    }
}

#[test]
fn topics_on_planted_decoder_reproduce_planted_words() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = preprocess(dir.path());
    let corpus = corpus::load_corpus(&corpus_dir).unwrap();
    let cfg = ModelConfig {
        hidden: 4,
        ..ModelConfig::new(corpus.vocabulary.len(), 3, 2)
    };
    let mut params = ModelParams::zeros(cfg, corpus.users(), corpus.items()).unwrap();
    let data = synthetic::generate(&synthetic::SyntheticConfig::default()).unwrap();
    for t in &data.topics {
        for (rank, w) in t.words.iter().enumerate() {
            let id = corpus.vocabulary.id(w).unwrap() as usize;
            params.decoder.weight[[id, t.aspect * 2 + t.sub_aspect]] = 10.0 - rank as f64;
        }
    }
    let model = dir.path().join("planted.ckpt");
    checkpoint::checkpoint_save(&params, &corpus.vocabulary, &model).unwrap();
    let tsv = dir.path().join("topics.tsv");
    run_ok(&["topics", "--model", p(&model), "--top", "10", "--out", p(&tsv)]);
    let planted = fs::read_to_string(bundled("planted_topics.tsv")).unwrap();
    let learned = fs::read_to_string(&tsv).unwrap();
    let strip_weight = |s: &str| -> Vec<String> {
        s.lines()
            .skip(1)
            .map(|l| l.split('\t').take(4).collect::<Vec<_>>().join("\t"))
            .collect()
    };
    assert_eq!(strip_weight(&learned), strip_weight(&planted));
    assert!(dir.path().join("topics.tsv.manifest.json").exists());
}

#[test]
fn untrained_model_mse_is_near_rating_variance() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = preprocess(dir.path());
    let corpus = corpus::load_corpus(&corpus_dir).unwrap();
    let cfg = ModelConfig::new(corpus.vocabulary.len(), 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParams::init(cfg, corpus.users(), corpus.items(), corpus.train_mean_rating(), &mut rng).unwrap();
    let model = dir.path().join("fresh.ckpt");
    checkpoint::checkpoint_save(&params, &corpus.vocabulary, &model).unwrap();
    let out = dir.path().join("m.json");
    run_ok(&["eval", "--model", p(&model), "--corpus", p(&corpus_dir), "--metrics", "mse", "--out", p(&out)]);
    let m: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let mse = m["mse"]["mse"].as_f64().unwrap();
    let var = m["mse"]["test_rating_variance"].as_f64().unwrap();
    assert!(mse.is_finite());
    assert!((mse - var).abs() < 0.5 * var, "mse {mse} variance {var}");
    assert!(m["npmi"].is_null());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["train", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let missing = dir.path().join("nope.jsonl");
    let out = bin()
        .args(["preprocess", "--input", p(&missing), "--out", p(&dir.path().join("c"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(p(&missing)));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "epochz = 3\n").unwrap();
    let corpus = preprocess(dir.path());
    let out = bin()
        .args(["train", "--corpus", p(&corpus), "--config", p(&bad), "--out", p(&dir.path().join("r"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

#[test]
fn infer_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = preprocess(dir.path());
    let corpus = corpus::load_corpus(&corpus_dir).unwrap();
    let cfg = ModelConfig {
        hidden: 8,
        ..ModelConfig::new(corpus.vocabulary.len(), 3, 2)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = ModelParams::init(cfg, corpus.users(), corpus.items(), 3.5, &mut rng).unwrap();
    let model = dir.path().join("m.ckpt");
    checkpoint::checkpoint_save(&params, &corpus.vocabulary, &model).unwrap();

    let review = dir.path().join("review.txt");
    fs::write(&review, "A0k0w1 a0k1w2 a0k0w3. Unknown words only. A2k1w0 a2k1w4.").unwrap();
    let text = run_ok(&[
        "infer", "--model", p(&model), "--corpus", p(&corpus_dir), "--user", "u0", "--item", "i0", "--review", p(&review),
    ]);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["aspects"].as_array().unwrap().len(), 3);
    let importance: f64 = v["aspects"].as_array().unwrap().iter().map(|a| a["importance"].as_f64().unwrap()).sum();
    assert!((importance - 1.0).abs() < 1e-12);
    let sentences = v["sentences"].as_array().unwrap();
    assert_eq!(sentences.len(), 3);
    assert!(sentences[1]["aspect"].is_null());

    let out = bin()
        .args(["infer", "--model", p(&model), "--corpus", p(&corpus_dir), "--user", "ghost", "--item", "i0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let csv = dir.path().join("rep.csv");
    run_ok(&["export", "--model", p(&model), "--corpus", p(&corpus_dir), "--items", "i0,i1", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let n_reviews = corpus.reviews.iter().filter(|r| r.item_id == "i0" || r.item_id == "i1").count();
    assert_eq!(text.lines().count(), 1 + n_reviews * 6);
}

#[test]
fn bundled_synthetic_data_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["synth", "--out", p(dir.path())]);
    for f in ["reviews.jsonl", "labels.jsonl", "planted_topics.tsv", "train.toml"] {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(bundled(f)).unwrap(), "{f}");
    }
    let raws = corpus::ingest(&bundled("reviews.jsonl")).unwrap();
    let settings = CorpusSettings {
        min_word_count: 1,
        min_reviews: 1,
        seed: 0,
        test_fraction: 0.1,
    };
    let stats = corpus::build_corpus(&raws, settings, &HashSet::new()).unwrap().stats();
    assert_eq!((stats.users, stats.items, stats.reviews, stats.sentences, stats.vocabulary), (50, 30, 200, 800, 60));
}
