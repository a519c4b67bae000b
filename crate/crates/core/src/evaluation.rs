//! Top-word extraction, NPMI coherence, aspect labelling accuracy and the
//! per-review representation export.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::concrete;
use crate::corpus::{BagOfWords, Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{self, ModelParams};
use crate::training::history_bows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWordList {
    pub aspect: usize,
    pub sub_aspect: usize,
    pub words: Vec<String>,
    pub token_ids: Vec<u32>,
    pub weights: Vec<f64>,
}

/// The `t` highest-weight words of every decoder topic. Ties break by
/// ascending vocabulary index.
pub fn top_words(params: &ModelParams, vocabulary: &Vocabulary, t: usize) -> Vec<TopicWordList> {
    let cfg = params.config;
    let mut out = Vec::with_capacity(cfg.topics());
    for a in 0..cfg.aspects {
        for k in 0..cfg.sub_aspects {
            let column = model::decoder_topic_column(params, a, k);
            let mut order: Vec<usize> = (0..column.len()).collect();
            order.sort_by(|&x, &y| column[y].total_cmp(&column[x]).then(x.cmp(&y)));
            order.truncate(t);
            out.push(TopicWordList {
                aspect: a,
                sub_aspect: k,
                words: order.iter().map(|&v| vocabulary.word(v as u32).to_string()).collect(),
                token_ids: order.iter().map(|&v| v as u32).collect(),
                weights: order.iter().map(|&v| column[v]).collect(),
            });
        }
    }
    out
}

/// TSV with header `aspect, sub_aspect, rank, word, weight`; rank is 1-based.
pub fn write_topics_tsv(lists: &[TopicWordList], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "aspect\tsub_aspect\trank\tword\tweight")?;
    for l in lists {
        for (r, (word, weight)) in l.words.iter().zip(&l.weights).enumerate() {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", l.aspect, l.sub_aspect, r + 1, word, weight)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Review,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCoherence {
    pub aspect: usize,
    pub sub_aspect: usize,
    pub npmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub granularity: Granularity,
    pub top_t: usize,
    pub per_topic: Vec<TopicCoherence>,
    pub overall: f64,
}

/// Document frequencies over presence sets.
struct Cooccurrence {
    n_docs: f64,
    single: HashMap<u32, usize>,
    pair: HashMap<(u32, u32), usize>,
}

impl Cooccurrence {
    fn count(words: &BTreeSet<u32>, documents: &[BTreeSet<u32>]) -> Self {
        let mut single = HashMap::new();
        let mut pair = HashMap::new();
        for doc in documents {
            let present: Vec<u32> = words.iter().copied().filter(|w| doc.contains(w)).collect();
            for (i, &a) in present.iter().enumerate() {
                *single.entry(a).or_insert(0) += 1;
                for &b in &present[i + 1..] {
                    *pair.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        Self {
            n_docs: documents.len() as f64,
            single,
            pair,
        }
    }

    fn df(&self, w: u32) -> usize {
        self.single.get(&w).copied().unwrap_or(0)
    }

    fn joint(&self, a: u32, b: u32) -> usize {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair.get(&key).copied().unwrap_or(0)
    }

    /// Normalized PMI of one pair. A pair that never co-occurs takes the
    /// lower bound -1; a pair present in every document takes +1.
    fn pair_npmi(&self, a: u32, b: u32) -> f64 {
        let nij = self.joint(a, b);
        if nij == 0 {
            return -1.0;
        }
        let pij = nij as f64 / self.n_docs;
        if pij >= 1.0 {
            return 1.0;
        }
        let pi = self.df(a) as f64 / self.n_docs;
        let pj = self.df(b) as f64 / self.n_docs;
        (pij / (pi * pj)).ln() / -pij.ln()
    }
}

/// Normalized PMI of a single word pair over the given presence sets.
pub fn pair_npmi(a: u32, b: u32, documents: &[BTreeSet<u32>]) -> f64 {
    let words: BTreeSet<u32> = [a, b].into_iter().collect();
    Cooccurrence::count(&words, documents).pair_npmi(a, b)
}

/// Topic coherence: for each topic, every top word sums its pair scores with
/// the other `t - 1` words, and the topic score is that sum averaged over its
/// `t` words. The overall score is the mean over topics.
pub fn npmi(
    word_lists: &[TopicWordList],
    documents: &[BTreeSet<u32>],
    vocabulary: &Vocabulary,
    t: usize,
    granularity: Granularity,
) -> Result<CoherenceReport> {
    if documents.is_empty() {
        return Err(Error::InvalidArgument("npmi needs at least one document".into()));
    }
    if word_lists.is_empty() {
        return Err(Error::InvalidArgument("npmi needs at least one topic".into()));
    }
    let words: BTreeSet<u32> = word_lists
        .iter()
        .flat_map(|l| l.token_ids.iter().take(t).copied())
        .collect();
    let stats = Cooccurrence::count(&words, documents);
    if let Some(&w) = words.iter().find(|&&w| stats.df(w) == 0) {
        return Err(Error::ZeroDocumentFrequency(vocabulary.word(w).to_string()));
    }

    let mut per_topic = Vec::with_capacity(word_lists.len());
    for l in word_lists {
        let ids: Vec<u32> = l.token_ids.iter().take(t).copied().collect();
        let n = ids.len();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sum += stats.pair_npmi(ids[i], ids[j]);
                }
            }
        }
        per_topic.push(TopicCoherence {
            aspect: l.aspect,
            sub_aspect: l.sub_aspect,
            npmi: if n == 0 { 0.0 } else { sum / n as f64 },
        });
    }
    let overall = per_topic.iter().map(|p| p.npmi).sum::<f64>() / per_topic.len() as f64;
    Ok(CoherenceReport {
        granularity,
        top_t: t,
        per_topic,
        overall,
    })
}

/// Maximum-weight assignment of rows to columns. Returns, for each row, the
/// matched column (or `None` when there are more rows than columns).
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max = weights.iter().flatten().copied().fold(0.0, f64::max);
    // Minimization form on an n x n padded square.
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max - weights[i][j]
        } else {
            max
        }
    };
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    for (j, &i) in p.iter().enumerate().skip(1) {
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            assignment[i - 1] = Some(j - 1);
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectLabelReport {
    pub accuracy: f64,
    /// Macro F1 over gold labels.
    pub f1: f64,
    /// Aspect index -> gold label, for matched aspects.
    pub mapping: BTreeMap<usize, String>,
    pub sentences: usize,
    /// Labeled inputs with no in-vocabulary tokens.
    pub skipped: usize,
}

/// Noise-free aspect assignment: argmax of the sentence aspect logits.
pub fn assign_aspect(sentence: &BagOfWords, params: &ModelParams) -> Result<usize> {
    let logits = model::sentence_aspect_logits(sentence, params)?;
    Ok(concrete::argmax(logits.as_slice().unwrap()))
}

/// Scores predicted aspects against gold labels under the best one-to-one
/// aspect -> label mapping.
pub fn score_assignments(
    predicted: &[usize],
    gold: &[&str],
    aspects: usize,
    label_set: &[String],
) -> Result<AspectLabelReport> {
    if label_set.len() > aspects {
        return Err(Error::InvalidArgument(format!(
            "{} gold labels exceed {} aspects",
            label_set.len(),
            aspects
        )));
    }
    let label_index: HashMap<&str, usize> =
        label_set.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut confusion = vec![vec![0.0; label_set.len()]; aspects];
    let mut gold_ids = Vec::with_capacity(gold.len());
    for (&p, g) in predicted.iter().zip(gold) {
        let gi = *label_index
            .get(g)
            .ok_or_else(|| Error::InvalidArgument(format!("label {g:?} not in label set")))?;
        confusion[p][gi] += 1.0;
        gold_ids.push(gi);
    }
    let assignment = max_weight_matching(&confusion);
    let n = predicted.len();
    let correct: f64 = (0..aspects)
        .filter_map(|a| assignment[a].map(|l| confusion[a][l]))
        .sum();
    let accuracy = if n == 0 { 0.0 } else { correct / n as f64 };

    let mut f1_sum = 0.0;
    for l in 0..label_set.len() {
        let gold_count: f64 = gold_ids.iter().filter(|&&g| g == l).count() as f64;
        let (tp, predicted_count) = match (0..aspects).find(|&a| assignment[a] == Some(l)) {
            Some(a) => (confusion[a][l], confusion[a].iter().sum::<f64>()),
            None => (0.0, 0.0),
        };
        let precision = if predicted_count > 0.0 { tp / predicted_count } else { 0.0 };
        let recall = if gold_count > 0.0 { tp / gold_count } else { 0.0 };
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    let f1 = if label_set.is_empty() { 0.0 } else { f1_sum / label_set.len() as f64 };
    let mapping = (0..aspects)
        .filter_map(|a| assignment[a].map(|l| (a, label_set[l].clone())))
        .collect();
    Ok(AspectLabelReport {
        accuracy,
        f1,
        mapping,
        sentences: n,
        skipped: 0,
    })
}

pub fn label_aspects(
    params: &ModelParams,
    labeled_sentences: &[(BagOfWords, String)],
    label_set: &[String],
) -> Result<AspectLabelReport> {
    let mut predicted = Vec::with_capacity(labeled_sentences.len());
    let mut gold = Vec::with_capacity(labeled_sentences.len());
    let mut skipped = 0;
    for (bow, label) in labeled_sentences {
        if bow.is_empty() {
            skipped += 1;
            continue;
        }
        predicted.push(assign_aspect(bow, params)?);
        gold.push(label.as_str());
    }
    let mut report = score_assignments(&predicted, &gold, params.config.aspects, label_set)?;
    report.skipped = skipped;
    Ok(report)
}

/// Distinct labels in order of first appearance.
pub fn label_set_of<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for l in labels {
        if !seen.iter().any(|s| s == l) {
            seen.push(l.to_string());
        }
    }
    seen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRow {
    pub review_id: usize,
    pub item_id: String,
    pub user_id: String,
    pub aspect: usize,
    pub k: usize,
    pub rho: f64,
}

/// Rho for every review of the listed items, one row per (review, aspect, k).
pub fn export_item_representations(
    corpus: &Corpus,
    params: &ModelParams,
    item_ids: &[String],
) -> Result<Vec<RepresentationRow>> {
    let wanted: BTreeSet<&str> = item_ids.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (review_id, review) in corpus.reviews.iter().enumerate() {
        if !wanted.contains(review.item_id.as_str()) {
            continue;
        }
        let (ub, ib) = history_bows(corpus, review);
        let h_item = model::encode_hidden(ib, params)?;
        let h_user = model::encode_hidden(ub, params)?;
        let rho = model::topic_logits(h_item.view(), h_user.view(), params);
        for ((aspect, k), &value) in rho.indexed_iter() {
            rows.push(RepresentationRow {
                review_id,
                item_id: review.item_id.clone(),
                user_id: review.user_id.clone(),
                aspect,
                k,
                rho: value,
            });
        }
    }
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_representations_csv(rows: &[RepresentationRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "review_id,item_id,user_id,aspect,k,rho")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.review_id,
            csv_field(&r.item_id),
            csv_field(&r.user_id),
            r.aspect,
            r.k,
            r.rho
        )?;
    }
    Ok(())
}
