//! Planted-structure review generator.
//!
//! Every (aspect, sub-aspect) pair owns a disjoint block of made-up words
//! named `a{a}k{k}w{j}`. Each item has its own sub-aspect mixture per aspect;
//! a sentence picks one aspect and draws every word from that aspect's
//! mixture for the reviewed item. Ratings follow the biased aspect-weighted
//! form of the model's rating head, with the planted per-aspect score
//! `scale * (theta_0 - theta_{K-1})` standing in for the summed topic logits.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::concrete::softmax;
use crate::corpus::RawReview;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub aspects: usize,
    pub sub_aspects: usize,
    pub words_per_topic: usize,
    pub users: usize,
    pub items: usize,
    pub reviews: usize,
    pub sentences_per_review: usize,
    pub min_sentence_words: usize,
    pub max_sentence_words: usize,
    /// Dirichlet concentration of each item's per-aspect sub-aspect mixture.
    pub mixture_alpha: f64,
    pub global_bias: f64,
    pub item_bias_sd: f64,
    pub user_bias_sd: f64,
    pub aspect_score_scale: f64,
    pub rating_noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            aspects: 3,
            sub_aspects: 2,
            words_per_topic: 10,
            users: 50,
            items: 30,
            reviews: 200,
            sentences_per_review: 4,
            min_sentence_words: 5,
            max_sentence_words: 8,
            mixture_alpha: 0.5,
            global_bias: 3.5,
            item_bias_sd: 0.6,
            user_bias_sd: 0.2,
            aspect_score_scale: 3.0,
            rating_noise_sd: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTopic {
    pub aspect: usize,
    pub sub_aspect: usize,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub config: SyntheticConfig,
    pub reviews: Vec<RawReview>,
    pub labeled: Vec<LabeledSentence>,
    pub topics: Vec<PlantedTopic>,
    /// Item -> aspect -> sub-aspect mixture.
    pub item_mixtures: Vec<Vec<Vec<f64>>>,
    pub item_biases: Vec<f64>,
    pub user_biases: Vec<f64>,
}

pub fn planted_word(aspect: usize, sub_aspect: usize, j: usize) -> String {
    format!("a{aspect}k{sub_aspect}w{j}")
}

pub fn aspect_label(aspect: usize) -> String {
    format!("aspect{aspect}")
}

fn dirichlet(rng: &mut impl Rng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive alpha");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|d| d / total).collect();
        }
    }
}

fn categorical(rng: &mut impl Rng, p: &[f64]) -> usize {
    let mut u: f64 = rng.random();
    for (i, &pi) in p.iter().enumerate() {
        if u < pi {
            return i;
        }
        u -= pi;
    }
    p.len() - 1
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    let c = config;
    if c.aspects == 0 || c.sub_aspects == 0 || c.words_per_topic == 0 {
        return Err(Error::InvalidConfig("aspects, sub-aspects and words per topic must be positive".into()));
    }
    if c.users == 0 || c.items == 0 || c.reviews == 0 || c.sentences_per_review == 0 {
        return Err(Error::InvalidConfig("users, items, reviews and sentences must be positive".into()));
    }
    if c.min_sentence_words == 0 || c.min_sentence_words > c.max_sentence_words {
        return Err(Error::InvalidConfig("invalid sentence length range".into()));
    }
    if c.mixture_alpha.is_nan() || c.mixture_alpha <= 0.0 {
        return Err(Error::InvalidConfig("mixture_alpha must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::InvalidConfig(e.to_string()));

    let topics: Vec<PlantedTopic> = (0..c.aspects)
        .flat_map(|a| {
            (0..c.sub_aspects).map(move |k| PlantedTopic {
                aspect: a,
                sub_aspect: k,
                words: (0..c.words_per_topic).map(|j| planted_word(a, k, j)).collect(),
            })
        })
        .collect();

    let item_mixtures: Vec<Vec<Vec<f64>>> = (0..c.items)
        .map(|_| (0..c.aspects).map(|_| dirichlet(&mut rng, c.mixture_alpha, c.sub_aspects)).collect())
        .collect();
    let item_dist = normal(c.item_bias_sd)?;
    let user_dist = normal(c.user_bias_sd)?;
    let item_biases: Vec<f64> = (0..c.items).map(|_| item_dist.sample(&mut rng)).collect();
    let user_biases: Vec<f64> = (0..c.users).map(|_| user_dist.sample(&mut rng)).collect();
    let std = normal(1.0)?;
    let item_importance: Vec<Vec<f64>> = (0..c.items)
        .map(|_| (0..c.aspects).map(|_| std.sample(&mut rng)).collect())
        .collect();
    let user_importance: Vec<Vec<f64>> = (0..c.users)
        .map(|_| (0..c.aspects).map(|_| std.sample(&mut rng)).collect())
        .collect();
    let noise = normal(c.rating_noise_sd)?;

    // Balanced assignment: every user and item appears as evenly as possible.
    let mut items: Vec<usize> = (0..c.reviews).map(|r| r % c.items).collect();
    items.shuffle(&mut rng);

    let mut reviews = Vec::with_capacity(c.reviews);
    let mut labeled = Vec::with_capacity(c.reviews * c.sentences_per_review);
    for (r, &item) in items.iter().enumerate() {
        let user = r % c.users;
        let mut sentences = Vec::with_capacity(c.sentences_per_review);
        for _ in 0..c.sentences_per_review {
            let a = rng.random_range(0..c.aspects);
            let n = rng.random_range(c.min_sentence_words..=c.max_sentence_words);
            let words: Vec<String> = (0..n)
                .map(|_| {
                    let k = categorical(&mut rng, &item_mixtures[item][a]);
                    planted_word(a, k, rng.random_range(0..c.words_per_topic))
                })
                .collect();
            let text = format!("{}.", capitalize(&words.join(" ")));
            labeled.push(LabeledSentence {
                text: text.clone(),
                label: aspect_label(a),
            });
            sentences.push(text);
        }
        let mix: Vec<f64> = (0..c.aspects)
            .map(|a| 0.5 * (item_importance[item][a] + user_importance[user][a]))
            .collect();
        let weights = softmax(&mix);
        let aspect_term: f64 = (0..c.aspects)
            .map(|a| {
                let theta = &item_mixtures[item][a];
                weights[a] * c.aspect_score_scale * (theta[0] - theta[c.sub_aspects - 1])
            })
            .sum::<f64>()
            / c.aspects as f64;
        let rating = c.global_bias + item_biases[item] + user_biases[user] + aspect_term + noise.sample(&mut rng);
        reviews.push(RawReview {
            user_id: format!("u{user}"),
            item_id: format!("i{item}"),
            rating,
            text: sentences.join(" "),
        });
    }
    Ok(SyntheticData {
        config: *config,
        reviews,
        labeled,
        topics,
        item_mixtures,
        item_biases,
        user_biases,
    })
}

/// Reviews in the JSON-lines input format read by [`crate::corpus::ingest`].
pub fn write_reviews_jsonl(reviews: &[RawReview], mut w: impl Write) -> std::io::Result<()> {
    for r in reviews {
        let line = serde_json::json!({
            "user": r.user_id,
            "item": r.item_id,
            "rating": r.rating,
            "text": r.text,
        });
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_labeled_jsonl(labeled: &[LabeledSentence], mut w: impl Write) -> std::io::Result<()> {
    for l in labeled {
        writeln!(w, "{}", serde_json::to_string(l).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

/// TSV with header `aspect, sub_aspect, rank, word`.
pub fn write_planted_topics_tsv(topics: &[PlantedTopic], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "aspect\tsub_aspect\trank\tword")?;
    for t in topics {
        for (r, word) in t.words.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}\t{}", t.aspect, t.sub_aspect, r + 1, word)?;
        }
    }
    Ok(())
}
