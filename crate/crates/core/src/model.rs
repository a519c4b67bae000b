//! The network: a shared bag-of-words trunk, a sentence aspect head, a
//! user-item topic head, a masked log-linear decoder and the rating head.
//!
//! Weight matrices are stored `(out, in)`. Each forward helper that the
//! trainer differentiates has a matching `*_backward` that accumulates into
//! a gradient buffer shaped like [`ModelParams`].

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::concrete::{self, ConcreteParams, ConcreteSample};
use crate::corpus::BagOfWords;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub aspects: usize,
    pub sub_aspects: usize,
    pub hidden: usize,
    pub tau_z: f64,
    pub tau_psi: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, aspects: usize, sub_aspects: usize) -> Self {
        Self {
            vocab_size,
            aspects,
            sub_aspects,
            hidden: 256,
            tau_z: 0.66,
            tau_psi: 5.0,
        }
    }

    pub fn topics(&self) -> usize {
        self.aspects * self.sub_aspects
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.aspects == 0 || self.sub_aspects == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig(
                "vocab_size, aspects, sub_aspects and hidden must be positive".into(),
            ));
        }
        for (name, t) in [("tau_z", self.tau_z), ("tau_psi", self.tau_psi)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Affine map `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn glorot(out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inp + out) as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((out, inp), |_| rng.random_range(-limit..limit)),
            bias: Array1::zeros(out),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    pub fn forward_sparse(&self, x: &[(usize, f64)]) -> Array1<f64> {
        let mut y = self.bias.clone();
        for &(j, v) in x {
            y.scaled_add(v, &self.weight.column(j));
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dx.
    pub fn backward(&self, x: ArrayView1<f64>, dy: ArrayView1<f64>, grad: &mut Affine) -> Array1<f64> {
        for (i, &g) in dy.iter().enumerate() {
            if g != 0.0 {
                grad.weight.row_mut(i).scaled_add(g, &x);
            }
        }
        grad.bias += &dy;
        self.weight.t().dot(&dy)
    }

    /// Parameter-gradient accumulation for a sparse input; no input gradient.
    pub fn backward_sparse(&self, x: &[(usize, f64)], dy: ArrayView1<f64>, grad: &mut Affine) {
        for &(j, v) in x {
            grad.weight.column_mut(j).scaled_add(v, &dy);
        }
        grad.bias += &dy;
    }
}

/// Per-id scalar biases over a fixed, sorted id set. Unknown ids read as 0.
#[derive(Debug, Clone, Default)]
pub struct BiasTable {
    ids: Vec<String>,
    values: Vec<f64>,
    lookup: HashMap<String, usize>,
}

impl PartialEq for BiasTable {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl BiasTable {
    pub fn zeros<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        ids.sort();
        ids.dedup();
        let values = vec![0.0; ids.len()];
        Self::from_parts(ids, values).expect("lengths agree")
    }

    pub fn from_parts(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if ids.len() != values.len() {
            return Err(Error::Corrupt("bias table id/value length mismatch".into()));
        }
        let lookup = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(Self { ids, values, lookup })
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn get(&self, id: &str) -> f64 {
        self.index(id).map_or(0.0, |i| self.values[i])
    }

    pub fn set(&mut self, id: &str, value: f64) -> Result<()> {
        let i = self.index(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn add_at(&mut self, index: usize, delta: f64) {
        self.values[index] += delta;
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn zeroed(&self) -> Self {
        Self {
            ids: self.ids.clone(),
            values: vec![0.0; self.values.len()],
            lookup: self.lookup.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// V -> H, shared by sentences, users and items.
    pub trunk: Affine,
    /// H -> A.
    pub aspect_head: Affine,
    /// 2H -> A*K, input is `[h_item; h_user]`.
    pub topic_head: Affine,
    /// A*K -> V; column `a*K + k` is the topic for sub-aspect k of aspect a.
    pub decoder: Affine,
    pub bias_global: f64,
    pub bias_item: BiasTable,
    pub bias_user: BiasTable,
}

/// Names of the parameter groups, in the order used by [`ModelParams::groups`].
pub const PARAM_GROUPS: [&str; 11] = [
    "trunk.weight",
    "trunk.bias",
    "aspect_head.weight",
    "aspect_head.bias",
    "topic_head.weight",
    "topic_head.bias",
    "decoder.weight",
    "decoder.bias",
    "bias_global",
    "bias_item",
    "bias_user",
];

impl ModelParams {
    pub fn zeros<U, I>(config: ModelConfig, users: U, items: I) -> Result<Self>
    where
        U: IntoIterator,
        U::Item: Into<String>,
        I: IntoIterator,
        I::Item: Into<String>,
    {
        config.validate()?;
        let (v, a, h, t) = (config.vocab_size, config.aspects, config.hidden, config.topics());
        Ok(Self {
            config,
            trunk: Affine::zeros(h, v),
            aspect_head: Affine::zeros(a, h),
            topic_head: Affine::zeros(t, 2 * h),
            decoder: Affine::zeros(v, t),
            bias_global: 0.0,
            bias_item: BiasTable::zeros(items),
            bias_user: BiasTable::zeros(users),
        })
    }

    /// Glorot-uniform weights, zero biases, global bias set to `mean_rating`.
    pub fn init<U, I>(
        config: ModelConfig,
        users: U,
        items: I,
        mean_rating: f64,
        rng: &mut impl Rng,
    ) -> Result<Self>
    where
        U: IntoIterator,
        U::Item: Into<String>,
        I: IntoIterator,
        I::Item: Into<String>,
    {
        let mut p = Self::zeros(config, users, items)?;
        let (v, a, h, t) = (config.vocab_size, config.aspects, config.hidden, config.topics());
        p.trunk = Affine::glorot(h, v, rng);
        p.aspect_head = Affine::glorot(a, h, rng);
        p.topic_head = Affine::glorot(t, 2 * h, rng);
        p.decoder = Affine::glorot(v, t, rng);
        p.bias_global = mean_rating;
        Ok(p)
    }

    /// Same shapes and ids, every value zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let c = self.config;
        Self {
            config: c,
            trunk: Affine::zeros(self.trunk.out_dim(), self.trunk.in_dim()),
            aspect_head: Affine::zeros(self.aspect_head.out_dim(), self.aspect_head.in_dim()),
            topic_head: Affine::zeros(self.topic_head.out_dim(), self.topic_head.in_dim()),
            decoder: Affine::zeros(self.decoder.out_dim(), self.decoder.in_dim()),
            bias_global: 0.0,
            bias_item: self.bias_item.zeroed(),
            bias_user: self.bias_user.zeroed(),
        }
    }

    pub fn groups(&self) -> [&[f64]; 11] {
        [
            self.trunk.weight.as_slice().expect("standard layout"),
            self.trunk.bias.as_slice().expect("standard layout"),
            self.aspect_head.weight.as_slice().expect("standard layout"),
            self.aspect_head.bias.as_slice().expect("standard layout"),
            self.topic_head.weight.as_slice().expect("standard layout"),
            self.topic_head.bias.as_slice().expect("standard layout"),
            self.decoder.weight.as_slice().expect("standard layout"),
            self.decoder.bias.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.bias_global),
            self.bias_item.values(),
            self.bias_user.values(),
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 11] {
        [
            self.trunk.weight.as_slice_mut().expect("standard layout"),
            self.trunk.bias.as_slice_mut().expect("standard layout"),
            self.aspect_head.weight.as_slice_mut().expect("standard layout"),
            self.aspect_head.bias.as_slice_mut().expect("standard layout"),
            self.topic_head.weight.as_slice_mut().expect("standard layout"),
            self.topic_head.bias.as_slice_mut().expect("standard layout"),
            self.decoder.weight.as_slice_mut().expect("standard layout"),
            self.decoder.bias.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.bias_global),
            self.bias_item.values_mut(),
            self.bias_user.values_mut(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, group by group.
    pub fn scaled_add(&mut self, scale: f64, other: &ModelParams) {
        for (dst, src) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// Checks every shape against the config.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let (v, a, h, t) = (c.vocab_size, c.aspects, c.hidden, c.topics());
        let shapes = [
            ("trunk", &self.trunk, (h, v)),
            ("aspect_head", &self.aspect_head, (a, h)),
            ("topic_head", &self.topic_head, (t, 2 * h)),
            ("decoder", &self.decoder, (v, t)),
        ];
        for (name, layer, (out, inp)) in shapes {
            if layer.weight.dim() != (out, inp) || layer.bias.len() != out {
                return Err(Error::Corrupt(format!("{name} shape does not match config")));
            }
        }
        Ok(())
    }
}

/// Trunk activation for one bag of words, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HiddenState {
    pub input: Vec<(usize, f64)>,
    pub h: Array1<f64>,
}

pub fn hidden_forward(bow: &BagOfWords, params: &ModelParams) -> Result<HiddenState> {
    let input = bow.normalized()?;
    if let Some(&(j, _)) = input.iter().find(|&&(j, _)| j >= params.config.vocab_size) {
        return Err(Error::InvalidArgument(format!("token id {j} outside vocabulary")));
    }
    let h = params.trunk.forward_sparse(&input).mapv(f64::tanh);
    Ok(HiddenState { input, h })
}

pub fn hidden_backward(state: &HiddenState, dh: ArrayView1<f64>, params: &ModelParams, grad: &mut ModelParams) {
    let dpre = &dh * &state.h.mapv(|v| 1.0 - v * v);
    params.trunk.backward_sparse(&state.input, dpre.view(), &mut grad.trunk);
}

/// `tanh(trunk(bow / sum(bow)))`.
pub fn encode_hidden(bow: &BagOfWords, params: &ModelParams) -> Result<Array1<f64>> {
    Ok(hidden_forward(bow, params)?.h)
}

/// Raw aspect-head scores for a hidden vector.
pub fn aspect_importance(h: ArrayView1<f64>, params: &ModelParams) -> Array1<f64> {
    params.aspect_head.forward(h)
}

/// Aspect logits of a sentence (no noise).
pub fn sentence_aspect_logits(sentence: &BagOfWords, params: &ModelParams) -> Result<Array1<f64>> {
    let h = encode_hidden(sentence, params)?;
    Ok(aspect_importance(h.view(), params))
}

pub fn encode_sentence_aspect(
    sentence: &BagOfWords,
    params: &ModelParams,
    noise: &[f64],
) -> Result<ConcreteSample> {
    let logits = sentence_aspect_logits(sentence, params)?;
    concrete::sample(
        &ConcreteParams::new(logits.to_vec(), params.config.tau_z)?,
        noise,
    )
}

/// Review-level topic latents inferred from the user and item histories.
#[derive(Debug, Clone)]
pub struct TopicLatent {
    /// A x K Concrete logits.
    pub rho: Array2<f64>,
    /// One K-dimensional sample per aspect.
    pub psi: Vec<ConcreteSample>,
}

impl TopicLatent {
    pub fn psi_matrix(&self) -> Array2<f64> {
        let a = self.psi.len();
        let k = self.psi.first().map_or(0, |p| p.value.len());
        Array2::from_shape_fn((a, k), |(i, j)| self.psi[i].value[j])
    }
}

/// Full latent state for one review.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub z_per_sentence: Vec<ConcreteSample>,
    pub psi: Vec<ConcreteSample>,
    pub rho: Array2<f64>,
}

pub fn topic_logits(h_item: ArrayView1<f64>, h_user: ArrayView1<f64>, params: &ModelParams) -> Array2<f64> {
    let joint = ndarray::concatenate(Axis(0), &[h_item, h_user]).expect("1-d concat");
    let flat = params.topic_head.forward(joint.view());
    flat.into_shape_with_order((params.config.aspects, params.config.sub_aspects))
        .expect("A*K logits")
}

/// Samples each aspect's topic proportions independently from the rows of rho.
pub fn sample_topics(rho: &Array2<f64>, tau: f64, noise: &[Vec<f64>]) -> Result<Vec<ConcreteSample>> {
    if noise.len() != rho.nrows() {
        return Err(Error::InvalidArgument(format!(
            "expected {} topic noise rows, got {}",
            rho.nrows(),
            noise.len()
        )));
    }
    rho.rows()
        .into_iter()
        .zip(noise)
        .map(|(row, u)| concrete::sample(&ConcreteParams::new(row.to_vec(), tau)?, u))
        .collect()
}

pub fn encode_user_item(
    user_bow: &BagOfWords,
    item_bow: &BagOfWords,
    params: &ModelParams,
    noise: &[Vec<f64>],
) -> Result<TopicLatent> {
    let h_item = encode_hidden(item_bow, params)?;
    let h_user = encode_hidden(user_bow, params)?;
    let rho = topic_logits(h_item.view(), h_user.view(), params);
    let psi = sample_topics(&rho, params.config.tau_psi, noise)?;
    Ok(TopicLatent { rho, psi })
}

/// Row `a` of the result is `z[a] * psi[a]`, flattened row-major to A*K.
pub fn mask_topics(z: &[f64], psi: &Array2<f64>) -> Result<Array1<f64>> {
    if z.len() != psi.nrows() {
        return Err(Error::InvalidArgument(format!(
            "z has {} aspects but psi has {} rows",
            z.len(),
            psi.nrows()
        )));
    }
    let mut out = psi.clone();
    for (mut row, &w) in out.rows_mut().into_iter().zip(z) {
        row *= w;
    }
    Ok(out.into_shape_with_order(z.len() * psi.ncols()).expect("flatten"))
}

/// `log_softmax(decoder(masked))` over the vocabulary.
pub fn decode_log_probs(masked: ArrayView1<f64>, params: &ModelParams) -> Array1<f64> {
    let logits = params.decoder.forward(masked);
    Array1::from(concrete::log_softmax(logits.as_slice().expect("contiguous")))
}

/// `sum_v count_v * log_prob_v`.
pub fn sentence_log_likelihood(sentence: &BagOfWords, log_probs: ArrayView1<f64>) -> f64 {
    sentence
        .entries()
        .iter()
        .map(|&(id, c)| c as f64 * log_probs[id as usize])
        .sum()
}

/// Pieces of the rating head, kept for inspection and backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingPrediction {
    pub rating: f64,
    /// Softmax of the averaged item / user importance scores.
    pub importance: Vec<f64>,
    /// Raw averaged scores before the softmax.
    pub importance_scores: Vec<f64>,
    /// Per-aspect ratings `sum_k rho[a, k]`.
    pub aspect_ratings: Vec<f64>,
    pub biases: (f64, f64, f64),
}

pub fn rating_head(
    user_id: &str,
    item_id: &str,
    h_item: ArrayView1<f64>,
    h_user: ArrayView1<f64>,
    rho: &Array2<f64>,
    params: &ModelParams,
) -> RatingPrediction {
    let a = params.config.aspects as f64;
    let scores = (aspect_importance(h_item, params) + aspect_importance(h_user, params)) * 0.5;
    let scores = scores.to_vec();
    let importance = concrete::softmax(&scores);
    let aspect_ratings: Vec<f64> = rho.sum_axis(Axis(1)).to_vec();
    let biases = (
        params.bias_global,
        params.bias_item.get(item_id),
        params.bias_user.get(user_id),
    );
    let interaction: f64 = importance
        .iter()
        .zip(&aspect_ratings)
        .map(|(l, r)| l * r)
        .sum::<f64>()
        / a;
    RatingPrediction {
        rating: biases.0 + biases.1 + biases.2 + interaction,
        importance,
        importance_scores: scores,
        aspect_ratings,
        biases,
    }
}

/// Rating prediction from user and item histories. Ids without a learned
/// bias contribute 0.
pub fn predict_rating(
    user_id: &str,
    item_id: &str,
    user_bow: &BagOfWords,
    item_bow: &BagOfWords,
    params: &ModelParams,
) -> Result<RatingPrediction> {
    let h_item = encode_hidden(item_bow, params)?;
    let h_user = encode_hidden(user_bow, params)?;
    let rho = topic_logits(h_item.view(), h_user.view(), params);
    Ok(rating_head(user_id, item_id, h_item.view(), h_user.view(), &rho, params))
}

/// Decoder weights of topic `(aspect, sub_aspect)` over the vocabulary.
pub fn decoder_topic_column(params: &ModelParams, aspect: usize, sub_aspect: usize) -> ArrayView1<'_, f64> {
    let k = params.config.sub_aspects;
    params.decoder.weight.column(aspect * k + sub_aspect)
}
