//! Review ingestion, vocabulary construction and the bag-of-words views the
//! model consumes: per sentence, per review, and per user / item history.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::{segment_sentences, tokenize};

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReview {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub text: String,
}

/// Sparse count vector over the vocabulary, sorted by token id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BagOfWords {
    entries: Vec<(u32, u32)>,
}

impl BagOfWords {
    /// Builds a bag from token ids, counting repeats.
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for id in ids {
            *counts.entry(id).or_default() += 1;
        }
        Self {
            entries: counts.into_iter().collect(),
        }
    }

    /// Builds a bag from (id, count) pairs; zero counts are dropped and
    /// duplicate ids are summed.
    pub fn from_counts(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for (id, c) in pairs {
            if c > 0 {
                *counts.entry(id).or_default() += c;
            }
        }
        Self {
            entries: counts.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn count(&self, id: u32) -> u32 {
        self.entries
            .binary_search_by_key(&id, |&(i, _)| i)
            .map(|p| self.entries[p].1)
            .unwrap_or(0)
    }

    pub fn add(&mut self, other: &BagOfWords) {
        *self = Self::from_counts(
            self.entries
                .iter()
                .chain(other.entries.iter())
                .copied(),
        );
    }

    /// Token ids with repetition, ascending.
    pub fn expand(&self) -> Vec<u32> {
        self.entries
            .iter()
            .flat_map(|&(id, c)| std::iter::repeat_n(id, c as usize))
            .collect()
    }

    pub fn token_set(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|&(id, _)| id).collect()
    }

    /// l1-normalized (id, weight) pairs. Fails on an empty bag.
    pub fn normalized(&self) -> Result<Vec<(usize, f64)>> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyBagOfWords);
        }
        let t = total as f64;
        Ok(self
            .entries
            .iter()
            .map(|&(id, c)| (id as usize, c as f64 / t))
            .collect())
    }

    /// Scale every count by `factor`.
    pub fn scaled(&self, factor: u32) -> Self {
        Self::from_counts(self.entries.iter().map(|&(i, c)| (i, c * factor)))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenizes `text` and keeps in-vocabulary tokens.
    pub fn bag_of_words(&self, text: &str) -> BagOfWords {
        BagOfWords::from_ids(tokenize(text).iter().filter_map(|t| self.id(t)))
    }

    /// Segments `text` into sentences and returns the non-empty sentence bags.
    pub fn sentence_bags(&self, text: &str) -> Vec<(String, BagOfWords)> {
        segment_sentences(text)
            .into_iter()
            .map(|s| {
                let bow = self.bag_of_words(&s);
                (s, bow)
            })
            .filter(|(_, b)| !b.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRecord {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub sentences: Vec<BagOfWords>,
    pub review_bow: BagOfWords,
    pub split: Split,
}

impl ReviewRecord {
    pub fn new(
        user_id: String,
        item_id: String,
        rating: f64,
        sentences: Vec<BagOfWords>,
        split: Split,
    ) -> Self {
        let mut review_bow = BagOfWords::default();
        for s in &sentences {
            review_bow.add(s);
        }
        Self {
            user_id,
            item_id,
            rating,
            sentences,
            review_bow,
            split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSettings {
    pub min_word_count: usize,
    pub min_reviews: usize,
    pub seed: u64,
    pub test_fraction: f64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            min_word_count: 5,
            min_reviews: 5,
            seed: 0,
            test_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub reviews: Vec<ReviewRecord>,
    pub user_bow: BTreeMap<String, BagOfWords>,
    pub item_bow: BTreeMap<String, BagOfWords>,
    pub settings: CorpusSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub items: usize,
    pub reviews: usize,
    pub sentences: usize,
    pub vocabulary: usize,
    pub train_reviews: usize,
    pub test_reviews: usize,
}

impl Corpus {
    /// Assembles a corpus and derives the user / item history bags from the
    /// train split.
    pub fn from_parts(
        vocabulary: Vocabulary,
        reviews: Vec<ReviewRecord>,
        settings: CorpusSettings,
    ) -> Self {
        let mut user_bow: BTreeMap<String, BagOfWords> = BTreeMap::new();
        let mut item_bow: BTreeMap<String, BagOfWords> = BTreeMap::new();
        for r in reviews.iter().filter(|r| r.split == Split::Train) {
            user_bow
                .entry(r.user_id.clone())
                .or_default()
                .add(&r.review_bow);
            item_bow
                .entry(r.item_id.clone())
                .or_default()
                .add(&r.review_bow);
        }
        Self {
            vocabulary,
            reviews,
            user_bow,
            item_bow,
            settings,
        }
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices_for(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices_for(Split::Test)
    }

    fn indices_for(&self, split: Split) -> Vec<usize> {
        (0..self.reviews.len())
            .filter(|&i| self.reviews[i].split == split)
            .collect()
    }

    pub fn users(&self) -> BTreeSet<&str> {
        self.reviews.iter().map(|r| r.user_id.as_str()).collect()
    }

    pub fn items(&self) -> BTreeSet<&str> {
        self.reviews.iter().map(|r| r.item_id.as_str()).collect()
    }

    pub fn train_mean_rating(&self) -> f64 {
        let train: Vec<f64> = self
            .reviews
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| r.rating)
            .collect();
        if train.is_empty() {
            0.0
        } else {
            train.iter().sum::<f64>() / train.len() as f64
        }
    }

    /// (min, max) rating over all reviews.
    pub fn rating_range(&self) -> (f64, f64) {
        self.reviews.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.rating), hi.max(r.rating))
        })
    }

    /// Presence sets for every sentence of every review.
    pub fn sentence_documents(&self) -> Vec<BTreeSet<u32>> {
        self.reviews
            .iter()
            .flat_map(|r| r.sentences.iter().map(BagOfWords::token_set))
            .collect()
    }

    pub fn review_documents(&self) -> Vec<BTreeSet<u32>> {
        self.reviews.iter().map(|r| r.review_bow.token_set()).collect()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            users: self.users().len(),
            items: self.items().len(),
            reviews: self.reviews.len(),
            sentences: self.reviews.iter().map(|r| r.sentences.len()).sum(),
            vocabulary: self.vocabulary.len(),
            train_reviews: self.train_indices().len(),
            test_reviews: self.test_indices().len(),
        }
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str, line: usize) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::MissingField {
        field: name.to_string(),
        line,
    })
}

fn string_field(obj: &serde_json::Map<String, Value>, name: &str, line: usize) -> Result<String> {
    let v = field(obj, name, line)?;
    let s = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => {
            return Err(Error::MalformedLine {
                line,
                message: format!("field {name} must be a string"),
            })
        }
    };
    Ok(s)
}

/// Parses JSON-lines review records. Line numbers in errors are 1-based.
/// Blank lines are skipped.
pub fn parse_reviews(reader: impl BufRead) -> Result<Vec<RawReview>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::MalformedLine {
            line: line_no,
            message: "expected a JSON object".into(),
        })?;
        let user_id = string_field(obj, "user", line_no)?;
        let item_id = string_field(obj, "item", line_no)?;
        let rating = field(obj, "rating", line_no)?
            .as_f64()
            .filter(|r| r.is_finite())
            .ok_or_else(|| Error::MalformedLine {
                line: line_no,
                message: "rating must be a finite number".into(),
            })?;
        let text = field(obj, "text", line_no)?
            .as_str()
            .ok_or_else(|| Error::MalformedLine {
                line: line_no,
                message: "text must be a string".into(),
            })?
            .to_string();
        if user_id.is_empty() || item_id.is_empty() {
            return Err(Error::MalformedLine {
                line: line_no,
                message: "user and item must be nonempty".into(),
            });
        }
        out.push(RawReview {
            user_id,
            item_id,
            rating,
            text,
        });
    }
    Ok(out)
}

/// Reads a JSON-lines review file.
pub fn ingest(path: &Path) -> Result<Vec<RawReview>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reviews(BufReader::new(file))
}

struct Tokenized {
    user: String,
    item: String,
    rating: f64,
    sentences: Vec<Vec<String>>,
}

/// Builds the filtered corpus.
///
/// Vocabulary frequency filtering, empty-sentence removal and the
/// per-user / per-item review-count filter interact, so they are applied
/// together until nothing changes. The surviving corpus then satisfies all
/// thresholds on a fresh recount.
pub fn build_corpus(
    raws: &[RawReview],
    settings: CorpusSettings,
    stopwords: &HashSet<String>,
) -> Result<Corpus> {
    if settings.min_word_count < 1 || settings.min_reviews < 1 {
        return Err(Error::InvalidConfig(
            "min_word_count and min_reviews must be >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&settings.test_fraction) {
        return Err(Error::InvalidConfig("test_fraction must be in [0, 1)".into()));
    }

    let mut docs: Vec<Tokenized> = raws
        .iter()
        .map(|r| Tokenized {
            user: r.user_id.clone(),
            item: r.item_id.clone(),
            rating: r.rating,
            sentences: segment_sentences(&r.text)
                .iter()
                .map(|s| {
                    tokenize(s)
                        .into_iter()
                        .filter(|t| !stopwords.contains(t))
                        .collect::<Vec<_>>()
                })
                .filter(|s| !s.is_empty())
                .collect(),
        })
        .filter(|d| !d.sentences.is_empty())
        .collect();

    loop {
        let before_reviews = docs.len();

        let mut freq: HashMap<&str, usize> = HashMap::new();
        for d in &docs {
            for t in d.sentences.iter().flatten() {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let rare: HashSet<String> = freq
            .iter()
            .filter(|(_, &c)| c < settings.min_word_count)
            .map(|(t, _)| t.to_string())
            .collect();
        if !rare.is_empty() {
            for d in &mut docs {
                for s in &mut d.sentences {
                    s.retain(|t| !rare.contains(t));
                }
                d.sentences.retain(|s| !s.is_empty());
            }
            docs.retain(|d| !d.sentences.is_empty());
        }

        let mut per_user: HashMap<&str, usize> = HashMap::new();
        let mut per_item: HashMap<&str, usize> = HashMap::new();
        for d in &docs {
            *per_user.entry(d.user.as_str()).or_default() += 1;
            *per_item.entry(d.item.as_str()).or_default() += 1;
        }
        let keep: Vec<bool> = docs
            .iter()
            .map(|d| {
                per_user[d.user.as_str()] >= settings.min_reviews
                    && per_item[d.item.as_str()] >= settings.min_reviews
            })
            .collect();
        let mut k = keep.iter();
        docs.retain(|_| *k.next().unwrap());

        if rare.is_empty() && docs.len() == before_reviews {
            break;
        }
    }

    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in docs.iter().flat_map(|d| d.sentences.iter().flatten()) {
        *freq.entry(t.as_str()).or_default() += 1;
    }
    let mut tokens: Vec<(&str, usize)> = freq.into_iter().collect();
    tokens.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let vocabulary = Vocabulary::new(tokens.iter().map(|(t, _)| t.to_string()).collect())?;

    let splits = assign_splits(&docs, settings.test_fraction, settings.seed);
    let reviews = docs
        .iter()
        .zip(splits)
        .map(|(d, split)| {
            let sentences = d
                .sentences
                .iter()
                .map(|s| BagOfWords::from_ids(s.iter().map(|t| vocabulary.id(t).unwrap())))
                .collect();
            ReviewRecord::new(d.user.clone(), d.item.clone(), d.rating, sentences, split)
        })
        .collect();
    Ok(Corpus::from_parts(vocabulary, reviews, settings))
}

/// Per-item stratified split. Each item sends `round(n * fraction)` of its
/// reviews to test, skipping a candidate when it would leave its item or
/// its user without a train review.
fn assign_splits(docs: &[Tokenized], fraction: f64, seed: u64) -> Vec<Split> {
    let mut splits = vec![Split::Train; docs.len()];
    if fraction <= 0.0 {
        return splits;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_item: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut user_train: HashMap<&str, usize> = HashMap::new();
    for (i, d) in docs.iter().enumerate() {
        by_item.entry(d.item.as_str()).or_default().push(i);
        *user_train.entry(d.user.as_str()).or_default() += 1;
    }
    for (_, mut idx) in by_item {
        let target = (idx.len() as f64 * fraction).round() as usize;
        idx.shuffle(&mut rng);
        let mut item_train = idx.len();
        let mut taken = 0;
        for i in idx {
            if taken == target {
                break;
            }
            let user = docs[i].user.as_str();
            if item_train > 1 && user_train[user] > 1 {
                splits[i] = Split::Test;
                item_train -= 1;
                *user_train.get_mut(user).unwrap() -= 1;
                taken += 1;
            }
        }
    }
    splits
}

#[derive(Serialize, Deserialize)]
struct ReviewLine {
    id: usize,
    user: String,
    item: String,
    rating: f64,
    split: Split,
    sentences: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct CorpusManifest {
    format_version: u32,
    settings: CorpusSettings,
    counts: CorpusStats,
    test_reviews: Vec<usize>,
}

/// Writes `vocab.txt`, `reviews.jsonl` and `manifest.json` into `dir`.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut vocab = String::new();
    for t in corpus.vocabulary.tokens() {
        vocab.push_str(t);
        vocab.push('\n');
    }
    write_file(&dir.join("vocab.txt"), vocab.as_bytes())?;

    let mut reviews = Vec::new();
    for (id, r) in corpus.reviews.iter().enumerate() {
        let line = ReviewLine {
            id,
            user: r.user_id.clone(),
            item: r.item_id.clone(),
            rating: r.rating,
            split: r.split,
            sentences: r.sentences.iter().map(BagOfWords::expand).collect(),
        };
        serde_json::to_writer(&mut reviews, &line)?;
        reviews.write_all(b"\n").expect("write to Vec");
    }
    write_file(&dir.join("reviews.jsonl"), &reviews)?;

    let manifest = CorpusManifest {
        format_version: CORPUS_FORMAT_VERSION,
        settings: corpus.settings,
        counts: corpus.stats(),
        test_reviews: corpus.test_indices(),
    };
    write_file(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join("manifest.json");
    let manifest: CorpusManifest = serde_json::from_str(&read_file(&manifest_path)?)?;
    if manifest.format_version != CORPUS_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            what: manifest_path.display().to_string(),
            expected: CORPUS_FORMAT_VERSION,
            found: manifest.format_version,
        });
    }
    let vocabulary = Vocabulary::new(
        read_file(&dir.join("vocab.txt"))?
            .lines()
            .map(str::to_string)
            .collect(),
    )?;
    let v = vocabulary.len() as u32;
    let mut reviews = Vec::new();
    for (i, line) in read_file(&dir.join("reviews.jsonl"))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rl: ReviewLine = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rl.sentences.iter().flatten().any(|&id| id >= v) {
            return Err(Error::Corrupt(format!("token id out of range at review {}", rl.id)));
        }
        reviews.push(ReviewRecord::new(
            rl.user,
            rl.item,
            rl.rating,
            rl.sentences.into_iter().map(BagOfWords::from_ids).collect(),
            rl.split,
        ));
    }
    Ok(Corpus::from_parts(vocabulary, reviews, manifest.settings))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
