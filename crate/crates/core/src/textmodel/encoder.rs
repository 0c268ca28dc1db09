use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Params, PAD, SEP};
use crate::error::{NileError, Result};

/// Standard deviations used when drawing fresh parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub embedding_scale: f64,
    /// Multiplies 1/sqrt(d) for the projection.
    pub projection_scale: f64,
    pub head_scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            embedding_scale: 1.0,
            projection_scale: 1.0,
            head_scale: 0.1,
        }
    }
}

/// Embedding table, the projection inside `F`, and a named set of linear
/// heads `[d → 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub vocab_size: usize,
    pub d: usize,
    /// Row-major `[vocab_size × d]`; the PAD row stays zero.
    pub emb: Vec<f64>,
    /// Row-major `[d × d]`.
    pub proj: Vec<f64>,
    pub heads: BTreeMap<String, Vec<f64>>,
}

impl ScorerParams {
    pub fn new<R: Rng>(
        vocab_size: usize,
        d: usize,
        heads: &[&str],
        init: &InitConfig,
        rng: &mut R,
    ) -> Self {
        let mut draw = |n: usize, sd: f64| -> Vec<f64> {
            if sd == 0.0 {
                return vec![0.0; n];
            }
            let dist = Normal::new(0.0, sd).expect("positive std dev");
            (0..n).map(|_| dist.sample(rng)).collect()
        };
        let mut emb = draw(vocab_size * d, init.embedding_scale);
        emb[PAD * d..(PAD + 1) * d].fill(0.0);
        let proj = draw(d * d, init.projection_scale / (d as f64).sqrt());
        let heads = heads
            .iter()
            .map(|h| (h.to_string(), draw(d, init.head_scale)))
            .collect();
        ScorerParams {
            vocab_size,
            d,
            emb,
            proj,
            heads,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ScorerParams {
            vocab_size: self.vocab_size,
            d: self.d,
            emb: vec![0.0; self.emb.len()],
            proj: vec![0.0; self.proj.len()],
            heads: self
                .heads
                .iter()
                .map(|(k, v)| (k.clone(), vec![0.0; v.len()]))
                .collect(),
        }
    }

    pub fn head(&self, name: &str) -> &[f64] {
        self.heads
            .get(name)
            .unwrap_or_else(|| panic!("no head named {name}"))
    }

    pub fn head_mut(&mut self, name: &str) -> &mut Vec<f64> {
        self.heads
            .get_mut(name)
            .unwrap_or_else(|| panic!("no head named {name}"))
    }

    /// `head · h`.
    pub fn score(&self, head: &str, enc: &Encoded) -> f64 {
        dot(self.head(head), &enc.h)
    }

    /// Backpropagates `g = ∂L/∂(head · h)` into `grads` (head weights and,
    /// through `F`, the encoder).
    pub fn score_backward(&self, head: &str, enc: &Encoded, g: f64, grads: &mut ScorerParams) {
        if g == 0.0 {
            return;
        }
        for (gw, hi) in grads.head_mut(head).iter_mut().zip(&enc.h) {
            *gw += g * hi;
        }
        let dh: Vec<f64> = self.head(head).iter().map(|w| w * g).collect();
        f_backward(self, enc, &dh, grads);
    }

    /// Accumulate `other` into `self`.
    pub fn add_assign(&mut self, other: &ScorerParams) {
        for (a, b) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (x, y) in a.iter_mut().zip(b.2) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }
}

impl Params for ScorerParams {
    fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut v = vec![
            (
                "embeddings".to_string(),
                vec![self.vocab_size, self.d],
                self.emb.as_slice(),
            ),
            (
                "w_proj".to_string(),
                vec![self.d, self.d],
                self.proj.as_slice(),
            ),
        ];
        for (k, h) in &self.heads {
            v.push((format!("head.{k}"), vec![self.d], h.as_slice()));
        }
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.emb, &mut self.proj];
        for h in self.heads.values_mut() {
            v.push(h);
        }
        v
    }
}

/// Forward state of `F` kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Non-PAD token ids of the joined input.
    pub ids: Vec<usize>,
    pub pool: Vec<f64>,
    pub h: Vec<f64>,
}

/// `F(inp) = tanh(W_proj · mean(embeddings))` over the joined input. Two
/// segments are joined as `a [SEP] b`; PAD tokens are excluded from the mean.
pub fn f_encode(params: &ScorerParams, segments: &[&[usize]]) -> Result<Encoded> {
    let mut ids = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        if i > 0 {
            ids.push(SEP);
        }
        ids.extend(seg.iter().copied().filter(|&t| t != PAD));
    }
    if ids.is_empty() {
        return Err(NileError::Data("cannot encode an empty sequence".into()));
    }
    let d = params.d;
    let mut pool = vec![0.0; d];
    for &t in &ids {
        if t >= params.vocab_size {
            return Err(NileError::Data(format!(
                "token id {t} outside vocabulary of size {}",
                params.vocab_size
            )));
        }
        for (p, e) in pool.iter_mut().zip(&params.emb[t * d..(t + 1) * d]) {
            *p += e;
        }
    }
    let n = ids.len() as f64;
    pool.iter_mut().for_each(|p| *p /= n);
    let h = (0..d)
        .map(|r| dot(&params.proj[r * d..(r + 1) * d], &pool).tanh())
        .collect();
    Ok(Encoded { ids, pool, h })
}

/// Accumulates the gradient of a loss with `∂L/∂h = dh` into `grads`.
pub fn f_backward(params: &ScorerParams, enc: &Encoded, dh: &[f64], grads: &mut ScorerParams) {
    let d = params.d;
    let dz: Vec<f64> = dh
        .iter()
        .zip(&enc.h)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    let mut dpool = vec![0.0; d];
    for (r, &dzr) in dz.iter().enumerate() {
        if dzr == 0.0 {
            continue;
        }
        let row = &params.proj[r * d..(r + 1) * d];
        let grow = &mut grads.proj[r * d..(r + 1) * d];
        for c in 0..d {
            grow[c] += dzr * enc.pool[c];
            dpool[c] += dzr * row[c];
        }
    }
    let inv_n = 1.0 / enc.ids.len() as f64;
    for &t in &enc.ids {
        for (g, dp) in grads.emb[t * d..(t + 1) * d].iter_mut().zip(&dpool) {
            *g += dp * inv_n;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
