//! Minibatch optimization of the four-term objective: reconstruction of
//! every sentence, squared rating error, and the two KL regularizers.

use std::ops::{Add, AddAssign};
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concrete::{self, ConcreteParams};
use crate::corpus::{BagOfWords, Corpus, ReviewRecord};
use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gen: f64,
    pub mse: f64,
    pub kl_z: f64,
    pub kl_psi: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gen: 1.0,
            mse: 1.0,
            kl_z: 1.0,
            kl_psi: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Predictions are clamped to this range when scoring MSE.
    pub rating_scale: Option<(f64, f64)>,
    /// Share of train reviews held out for best-checkpoint selection.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            loss_weights: LossWeights::default(),
            rating_scale: None,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("adam betas must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig("validation_fraction must be in [0, 1)".into()));
        }
        if let Some((lo, hi)) = self.rating_scale {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidConfig("rating_scale min must be <= max".into()));
            }
        }
        let w = self.loss_weights;
        if [w.gen, w.mse, w.kl_z, w.kl_psi].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub gen: f64,
    pub mse: f64,
    pub kl_z: f64,
    pub kl_psi: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(gen: f64, mse: f64, kl_z: f64, kl_psi: f64, w: &LossWeights) -> Self {
        Self {
            gen,
            mse,
            kl_z,
            kl_psi,
            total: w.gen * gen + w.mse * mse + w.kl_z * kl_z + w.kl_psi * kl_psi,
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            gen: self.gen * s,
            mse: self.mse * s,
            kl_z: self.kl_z * s,
            kl_psi: self.kl_psi * s,
            total: self.total * s,
        }
    }

    /// First non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("gen", self.gen),
            ("mse", self.mse),
            ("kl_z", self.kl_z),
            ("kl_psi", self.kl_psi),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

impl Add for LossBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            gen: self.gen + o.gen,
            mse: self.mse + o.mse,
            kl_z: self.kl_z + o.kl_z,
            kl_psi: self.kl_psi + o.kl_psi,
            total: self.total + o.total,
        }
    }
}

impl AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Uniform noise for every latent of one review.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewNoise {
    /// One A-vector per sentence.
    pub sentences: Vec<Vec<f64>>,
    /// One K-vector per aspect.
    pub topics: Vec<Vec<f64>>,
}

impl ReviewNoise {
    pub fn draw(rng: &mut impl Rng, sentences: usize, aspects: usize, sub_aspects: usize) -> Self {
        let mut row = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(Open01)).collect() };
        let sentences = (0..sentences).map(|_| row(aspects)).collect();
        let topics = (0..aspects).map(|_| row(sub_aspects)).collect();
        Self { sentences, topics }
    }
}

/// The user and item histories used to encode `review`. A user or item with
/// no train history falls back to the review's own text.
pub fn history_bows<'a>(corpus: &'a Corpus, review: &'a ReviewRecord) -> (&'a BagOfWords, &'a BagOfWords) {
    let user = corpus.user_bow.get(&review.user_id).unwrap_or(&review.review_bow);
    let item = corpus.item_bow.get(&review.item_id).unwrap_or(&review.review_bow);
    (user, item)
}

/// Single-sample estimate of the objective for one review. When `grad` is
/// given, the gradient of the weighted total is accumulated into it.
pub fn review_loss(
    review: &ReviewRecord,
    user_bow: &BagOfWords,
    item_bow: &BagOfWords,
    params: &ModelParams,
    weights: &LossWeights,
    noise: &ReviewNoise,
    mut grad: Option<&mut ModelParams>,
) -> Result<LossBreakdown> {
    let cfg = params.config;
    let (a_n, k_n, h_n) = (cfg.aspects, cfg.sub_aspects, cfg.hidden);
    if noise.sentences.len() != review.sentences.len() {
        return Err(Error::InvalidArgument("sentence noise count mismatch".into()));
    }

    let hi = model::hidden_forward(item_bow, params)?;
    let hu = model::hidden_forward(user_bow, params)?;
    let joint = ndarray::concatenate(Axis(0), &[hi.h.view(), hu.h.view()]).expect("concat");
    let rho = model::topic_logits(hi.h.view(), hu.h.view(), params);
    let psi = model::sample_topics(&rho, cfg.tau_psi, &noise.topics)?;
    let psi_m = Array2::from_shape_fn((a_n, k_n), |(a, k)| psi[a].value[k]);

    let pred = model::rating_head(&review.user_id, &review.item_id, hi.h.view(), hu.h.view(), &rho, params);
    let err = pred.rating - review.rating;
    let mse = err * err;
    let kl_psi: f64 = rho.rows().into_iter().map(|r| concrete::kl_to_uniform(r.as_slice().unwrap())).sum();

    let mut gen = 0.0;
    let mut kl_z = 0.0;
    let mut dpsi = Array2::<f64>::zeros((a_n, k_n));

    for (sentence, u) in review.sentences.iter().zip(&noise.sentences) {
        let hs = model::hidden_forward(sentence, params)?;
        let logits = params.aspect_head.forward(hs.h.view());
        let z = concrete::sample(&ConcreteParams::new(logits.to_vec(), cfg.tau_z)?, u)?;
        kl_z += concrete::kl_to_uniform(logits.as_slice().unwrap());
        let masked = model::mask_topics(&z.value, &psi_m)?;
        let log_probs = model::decode_log_probs(masked.view(), params);
        gen -= model::sentence_log_likelihood(sentence, log_probs.view());

        if let Some(g) = grad.as_deref_mut() {
            let n = sentence.total() as f64;
            let mut dw = log_probs.mapv(|lp| weights.gen * n * lp.exp());
            for &(id, c) in sentence.entries() {
                dw[id as usize] -= weights.gen * c as f64;
            }
            let dm = params.decoder.backward(masked.view(), dw.view(), &mut g.decoder);
            let mut dz = vec![0.0; a_n];
            for a in 0..a_n {
                for k in 0..k_n {
                    let d = dm[a * k_n + k];
                    dz[a] += d * psi_m[[a, k]];
                    dpsi[[a, k]] += d * z.value[a];
                }
            }
            let mut dlogits = concrete::sample_backward(&z, &dz);
            for (d, kg) in dlogits.iter_mut().zip(concrete::kl_to_uniform_grad(logits.as_slice().unwrap())) {
                *d += weights.kl_z * kg;
            }
            let dh = params.aspect_head.backward(hs.h.view(), Array1::from(dlogits).view(), &mut g.aspect_head);
            model::hidden_backward(&hs, dh.view(), params, g);
        }
    }

    if let Some(g) = grad {
        let dr = weights.mse * 2.0 * err;
        g.bias_global += dr;
        if let Some(i) = params.bias_item.index(&review.item_id) {
            g.bias_item.add_at(i, dr);
        }
        if let Some(i) = params.bias_user.index(&review.user_id) {
            g.bias_user.add_at(i, dr);
        }
        let a_f = a_n as f64;
        let dimportance: Vec<f64> = pred.aspect_ratings.iter().map(|r| dr * r / a_f).collect();
        let dscores = concrete::softmax_backward(&pred.importance, &dimportance, 1.0);
        let dhalf = Array1::from(dscores) * 0.5;
        let mut dh_item = params.aspect_head.backward(hi.h.view(), dhalf.view(), &mut g.aspect_head);
        let mut dh_user = params.aspect_head.backward(hu.h.view(), dhalf.view(), &mut g.aspect_head);

        let mut drho = Array2::<f64>::zeros((a_n, k_n));
        for a in 0..a_n {
            let from_psi = concrete::sample_backward(&psi[a], dpsi.row(a).as_slice().unwrap());
            let from_kl = concrete::kl_to_uniform_grad(rho.row(a).as_slice().unwrap());
            for k in 0..k_n {
                drho[[a, k]] = dr * pred.importance[a] / a_f + from_psi[k] + weights.kl_psi * from_kl[k];
            }
        }
        let drho_flat = drho.into_shape_with_order(a_n * k_n).expect("flatten");
        let djoint = params.topic_head.backward(joint.view(), drho_flat.view(), &mut g.topic_head);
        dh_item += &djoint.slice(ndarray::s![..h_n]);
        dh_user += &djoint.slice(ndarray::s![h_n..]);
        model::hidden_backward(&hi, dh_item.view(), params, g);
        model::hidden_backward(&hu, dh_user.view(), params, g);
    }

    Ok(LossBreakdown::new(gen, mse, kl_z, kl_psi, weights))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .groups_mut()
            .into_iter()
            .zip(grad.groups())
            .zip(self.m.groups_mut())
            .zip(self.v.groups_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gen: f64,
    pub mse: f64,
    pub kl_z: f64,
    pub kl_psi: f64,
    pub total: f64,
    pub validation_mse: Option<f64>,
    pub wall_time_s: f64,
}

impl EpochRecord {
    pub fn loss(&self) -> LossBreakdown {
        LossBreakdown {
            gen: self.gen,
            mse: self.mse,
            kl_z: self.kl_z,
            kl_psi: self.kl_psi,
            total: self.total,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Parameters with the lowest validation MSE, when a validation set exists.
    pub best: Option<ModelParams>,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

/// Splits train reviews into (fit, validation) index sets.
pub fn validation_split(corpus: &Corpus, fraction: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = corpus.train_indices();
    train.shuffle(rng);
    let n_val = (train.len() as f64 * fraction).round() as usize;
    let n_val = n_val.min(train.len().saturating_sub(1));
    let val = train[..n_val].to_vec();
    let mut fit = train[n_val..].to_vec();
    fit.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (fit, val)
}

pub fn train(corpus: &Corpus, model_config: ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(corpus, model_config, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    corpus: &Corpus,
    model_config: ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    model_config.validate()?;
    if model_config.vocab_size != corpus.vocabulary.len() {
        return Err(Error::InvalidConfig(format!(
            "model vocab_size {} does not match corpus vocabulary {}",
            model_config.vocab_size,
            corpus.vocabulary.len()
        )));
    }
    if corpus.train_indices().is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut fit, val) = validation_split(corpus, config.validation_fraction, &mut rng);
    let mut params = ModelParams::init(
        model_config,
        corpus.users(),
        corpus.items(),
        corpus.train_mean_rating(),
        &mut rng,
    )?;
    let mut adam = Adam::new(&params, config);
    let mut grad = params.zeros_like();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let started = Instant::now();
    let (a_n, k_n) = (model_config.aspects, model_config.sub_aspects);

    for epoch in 1..=config.epochs {
        fit.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for (batch_no, batch) in fit.chunks(config.batch_size).enumerate() {
            for g in grad.groups_mut() {
                g.fill(0.0);
            }
            let mut batch_sum = LossBreakdown::default();
            for &idx in batch {
                let review = &corpus.reviews[idx];
                let (ub, ib) = history_bows(corpus, review);
                let noise = ReviewNoise::draw(&mut rng, review.sentences.len(), a_n, k_n);
                batch_sum += review_loss(review, ub, ib, &params, &config.loss_weights, &noise, Some(&mut grad))?;
            }
            if let Some(term) = batch_sum.non_finite_term() {
                return Err(Error::NonFiniteLoss {
                    term,
                    epoch,
                    batch: batch_no,
                });
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grad.groups_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut params, &grad);
            sum += batch_sum;
        }

        let validation_mse = if val.is_empty() {
            None
        } else {
            Some(mse_over(corpus, &val, &params, config.rating_scale)?)
        };
        if let Some(v) = validation_mse {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, params.clone()));
            }
        }
        let avg = sum.scaled(1.0 / fit.len() as f64);
        let record = EpochRecord {
            epoch,
            gen: avg.gen,
            mse: avg.mse,
            kl_z: avg.kl_z,
            kl_psi: avg.kl_psi,
            total: avg.total,
            validation_mse,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);
    }

    let (best, best_epoch) = match best {
        Some((_, e, p)) => (Some(p), Some(e)),
        None => (None, None),
    };
    Ok(TrainOutcome {
        params,
        best,
        best_epoch,
        history,
    })
}

/// Prediction for one corpus review from its user / item histories.
pub fn predict_review(corpus: &Corpus, review: &ReviewRecord, params: &ModelParams) -> Result<model::RatingPrediction> {
    let (ub, ib) = history_bows(corpus, review);
    model::predict_rating(&review.user_id, &review.item_id, ub, ib, params)
}

/// Mean squared error over the given reviews, predictions clamped to `scale`.
pub fn mse_over(corpus: &Corpus, indices: &[usize], params: &ModelParams, scale: Option<(f64, f64)>) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no reviews to score".into()));
    }
    let mut total = 0.0;
    for &i in indices {
        let review = &corpus.reviews[i];
        let mut r = predict_review(corpus, review, params)?.rating;
        if let Some((lo, hi)) = scale {
            r = r.clamp(lo, hi);
        }
        total += (r - review.rating).powi(2);
    }
    Ok(total / indices.len() as f64)
}

/// Test-split MSE.
pub fn evaluate_mse(corpus: &Corpus, params: &ModelParams, scale: Option<(f64, f64)>) -> Result<f64> {
    mse_over(corpus, &corpus.test_indices(), params, scale)
}
