use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::bce_with_logit;
use super::{require_both_classes, Classifier, LabeledSample, Trainer};
use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, Matrix};

/// Default `(steps, features)` shape the relevance matrix is resampled to.
pub const DEFAULT_STAR_SHAPE: (usize, usize) = (32, 64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmConfig {
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Reshuffle the (canonically ordered) samples every epoch.
    pub shuffle: bool,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            layers: 2,
            epochs: 30,
            lr: 5e-4,
            batch_size: 16,
            shuffle: true,
        }
    }
}

/// Gate weights over `[x, h_prev]`, stacked as rows in the order f, i, o, c.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    /// `4H x (input + H)`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl LstmLayer {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: Matrix::zeros(4 * hidden, input + hidden),
            b: vec![0.0; 4 * hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub layers: Vec<LstmLayer>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize, layers: usize) -> Self {
        Self {
            layers: (0..layers)
                .map(|l| LstmLayer::zeros(if l == 0 { input } else { hidden }, hidden))
                .collect(),
            head_w: vec![0.0; hidden],
            head_b: 0.0,
        }
    }

    /// Uniform in `+-1/sqrt(H)` everywhere.
    pub fn seeded(input: usize, hidden: usize, layers: usize, seed: u64) -> Self {
        let mut p = Self::zeros(input, hidden, layers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (hidden as f64).sqrt();
        p.for_each_mut(|v| *v = rng.random_range(-a..a));
        p
    }

    pub fn hidden(&self) -> usize {
        self.head_w.len()
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            layer.w.data_mut().iter_mut().for_each(&mut f);
            layer.b.iter_mut().for_each(&mut f);
        }
        self.head_w.iter_mut().for_each(&mut f);
        f(&mut self.head_b);
    }

    /// All parameters in a fixed order: per layer `w` then `b`, then the head.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.w.data());
            out.extend_from_slice(&layer.b);
        }
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        self.for_each_mut(|v| *v = *it.next().expect("flat parameter vector too short"));
        assert!(it.next().is_none(), "flat parameter vector too long");
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden();
        for (l, layer) in self.layers.iter().enumerate() {
            let expect_in = if l == 0 { layer.input } else { h };
            if layer.hidden != h
                || layer.input != expect_in
                || layer.w.shape() != (4 * h, layer.input + h)
                || layer.b.len() != 4 * h
            {
                return Err(Error::shape(
                    "lstm params",
                    format!("layer {l} inconsistent with H = {h}"),
                ));
            }
        }
        if self.layers.is_empty() || h == 0 {
            return Err(Error::shape(
                "lstm params",
                "need at least one layer and H >= 1",
            ));
        }
        Ok(())
    }
}

struct StepCache {
    concat: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn step_cached(
    layer: &LstmLayer,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, StepCache) {
    let h = layer.hidden;
    let mut concat = Vec::with_capacity(x.len() + h);
    concat.extend_from_slice(x);
    concat.extend_from_slice(h_prev);
    let pre = |r: usize| dot(layer.w.row(r), &concat) + layer.b[r];
    let f: Vec<f64> = (0..h).map(|k| sigmoid(pre(k))).collect();
    let i: Vec<f64> = (0..h).map(|k| sigmoid(pre(h + k))).collect();
    let o: Vec<f64> = (0..h).map(|k| sigmoid(pre(2 * h + k))).collect();
    let g: Vec<f64> = (0..h).map(|k| pre(3 * h + k).tanh()).collect();
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_t: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    let cache = StepCache {
        concat,
        f,
        i,
        o,
        g,
        c_prev: c_prev.to_vec(),
        tanh_c,
    };
    (h_t, c, cache)
}

/// One LSTM cell update for `layer`: returns `(h_t, c_t)`.
pub fn lstm_step(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmParams,
    layer: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = params
        .layers
        .get(layer)
        .ok_or_else(|| Error::shape("lstm_step", format!("no layer {layer}")))?;
    if x_t.len() != l.input || h_prev.len() != l.hidden || c_prev.len() != l.hidden {
        return Err(Error::shape(
            "lstm_step",
            format!(
                "x {} / h {} / c {} against input {} and H {}",
                x_t.len(),
                h_prev.len(),
                c_prev.len(),
                l.input,
                l.hidden
            ),
        ));
    }
    let (h, c, _) = step_cached(l, x_t, h_prev, c_prev);
    Ok((h, c))
}

impl LstmParams {
    /// Logit of the head applied to the last top-layer hidden state.
    pub fn logit(&self, seq: &Matrix) -> f64 {
        let h = self.hidden();
        let mut inputs: Vec<Vec<f64>> = (0..seq.rows()).map(|t| seq.row(t).to_vec()).collect();
        for layer in &self.layers {
            let (mut h_t, mut c_t) = (vec![0.0; h], vec![0.0; h]);
            for x in inputs.iter_mut() {
                let (hn, cn, _) = step_cached(layer, x, &h_t, &c_t);
                h_t = hn;
                c_t = cn;
                *x = h_t.clone();
            }
        }
        dot(&self.head_w, inputs.last().expect("non-empty sequence")) + self.head_b
    }

    pub fn loss(&self, seq: &Matrix, label: bool) -> f64 {
        bce_with_logit(self.logit(seq), f64::from(u8::from(label)))
    }

    /// Adds `scale * dLoss/dparams` for one sequence into `grad`; returns the loss.
    pub fn accumulate_gradient(
        &self,
        seq: &Matrix,
        label: bool,
        scale: f64,
        grad: &mut LstmParams,
    ) -> f64 {
        let h = self.hidden();
        let steps = seq.rows();
        let mut inputs: Vec<Vec<f64>> = (0..steps).map(|t| seq.row(t).to_vec()).collect();
        let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (mut h_t, mut c_t) = (vec![0.0; h], vec![0.0; h]);
            let mut layer_cache = Vec::with_capacity(steps);
            for x in inputs.iter_mut() {
                let (hn, cn, cache) = step_cached(layer, x, &h_t, &c_t);
                h_t = hn;
                c_t = cn;
                *x = h_t.clone();
                layer_cache.push(cache);
            }
            caches.push(layer_cache);
        }
        let top = inputs.last().expect("non-empty sequence");
        let z = dot(&self.head_w, top) + self.head_b;
        let y = f64::from(u8::from(label));
        let dz = (sigmoid(z) - y) * scale;
        for (gw, &hv) in grad.head_w.iter_mut().zip(top) {
            *gw += dz * hv;
        }
        grad.head_b += dz;

        // Gradient arriving at each step's output of the current layer.
        let mut d_out = vec![vec![0.0; h]; steps];
        d_out[steps - 1] = self.head_w.iter().map(|w| dz * w).collect();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let g_layer = &mut grad.layers[l];
            let n_in = layer.input;
            let mut d_below = vec![vec![0.0; n_in]; steps];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for t in (0..steps).rev() {
                let c = &caches[l][t];
                let mut dpre = vec![0.0; 4 * h];
                for k in 0..h {
                    let dh = d_out[t][k] + dh_next[k];
                    let dc = dc_next[k] + dh * c.o[k] * (1.0 - c.tanh_c[k] * c.tanh_c[k]);
                    dpre[k] = dc * c.c_prev[k] * c.f[k] * (1.0 - c.f[k]);
                    dpre[h + k] = dc * c.g[k] * c.i[k] * (1.0 - c.i[k]);
                    dpre[2 * h + k] = dh * c.tanh_c[k] * c.o[k] * (1.0 - c.o[k]);
                    dpre[3 * h + k] = dc * c.i[k] * (1.0 - c.g[k] * c.g[k]);
                    dc_next[k] = dc * c.f[k];
                }
                let mut d_concat = vec![0.0; n_in + h];
                for (r, &dp) in dpre.iter().enumerate() {
                    if dp == 0.0 {
                        continue;
                    }
                    g_layer.b[r] += dp;
                    for (gw, &v) in g_layer.w.row_mut(r).iter_mut().zip(&c.concat) {
                        *gw += dp * v;
                    }
                    for (dc, &w) in d_concat.iter_mut().zip(layer.w.row(r)) {
                        *dc += dp * w;
                    }
                }
                d_below[t].copy_from_slice(&d_concat[..n_in]);
                dh_next.copy_from_slice(&d_concat[n_in..]);
            }
            d_out = d_below;
        }
        bce_with_logit(z, y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub params: LstmParams,
    /// `(steps, features)` every input matrix must have.
    pub shape: (usize, usize),
}

impl LstmModel {
    pub fn probability(&self, seq: &Matrix) -> Result<f64> {
        if seq.shape() != self.shape {
            return Err(Error::shape(
                "lstm predict",
                format!("expected {:?}, got {:?}", self.shape, seq.shape()),
            ));
        }
        Ok(sigmoid(self.params.logit(seq)))
    }
}

impl Classifier for LstmModel {
    fn predict(&self, sample: &LabeledSample) -> Result<bool> {
        let seq = star_of(sample)?;
        Ok(self.probability(seq)? >= 0.5)
    }
}

fn star_of(sample: &LabeledSample) -> Result<&Matrix> {
    sample.features.r_star_resampled.as_ref().ok_or_else(|| {
        Error::shape(
            "lstm features",
            format!("sample {} has no resampled matrix", sample.id),
        )
    })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grad[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Orders samples by content so the result does not depend on input order.
fn canonical_order(seqs: &[&Matrix], labels: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..seqs.len()).collect();
    idx.sort_by(|&a, &b| {
        let key = |i: usize| {
            seqs[i]
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        key(a).cmp(&key(b)).then(labels[a].cmp(&labels[b]))
    });
    idx
}

/// Mini-batch Adam on cross-entropy with full backpropagation through time.
pub fn train_lstm(
    seqs: &[&Matrix],
    labels: &[bool],
    config: &LstmConfig,
    seed: u64,
) -> Result<LstmModel> {
    if seqs.len() != labels.len() {
        return Err(Error::shape(
            "train_lstm",
            "sequence and label counts differ",
        ));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Training(
            "LSTM needs at least one sample of each class".into(),
        ));
    }
    if config.hidden == 0
        || config.layers == 0
        || config.batch_size == 0
        || config.lr.is_nan()
        || config.lr <= 0.0
    {
        return Err(Error::Config(format!(
            "invalid LSTM configuration {config:?}"
        )));
    }
    let shape = seqs[0].shape();
    if shape.0 == 0 || shape.1 == 0 {
        return Err(Error::shape("train_lstm", "empty input matrix"));
    }
    if let Some(bad) = seqs.iter().find(|s| s.shape() != shape) {
        return Err(Error::shape(
            "train_lstm",
            format!("inconsistent input shapes {shape:?} and {:?}", bad.shape()),
        ));
    }

    let mut params = LstmParams::seeded(shape.1, config.hidden, config.layers, seed);
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len());
    let mut order = canonical_order(seqs, labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f1a57);
    for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(config.batch_size) {
            let mut grad = LstmParams::zeros(shape.1, config.hidden, config.layers);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                params.accumulate_gradient(seqs[i], labels[i], scale, &mut grad);
            }
            adam.step(&mut flat, &grad.flatten(), config.lr);
            params.assign(&flat);
        }
    }
    if !flat.iter().all(|v| v.is_finite()) {
        return Err(Error::Training("LSTM parameters diverged".into()));
    }
    params.validate()?;
    Ok(LstmModel { params, shape })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LstmTrainer {
    pub config: LstmConfig,
}

impl Trainer for LstmTrainer {
    type Model = LstmModel;

    fn train(&self, samples: &[LabeledSample], seed: u64) -> Result<LstmModel> {
        require_both_classes(samples)?;
        let seqs = samples.iter().map(star_of).collect::<Result<Vec<_>>>()?;
        let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
        train_lstm(&seqs, &labels, &self.config, seed)
    }
}
