use std::sync::Arc;

use super::params::{TransformerConfig, TransformerParams};
use super::trace::{ForwardTrace, TraceBuilder};
use super::{TokenId, MASK_VALUE};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, OpKind};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct HeadWeights {
    q: Arc<Matrix>,
    k: Arc<Matrix>,
    v: Arc<Matrix>,
    /// Rows of `w_o` that read this head's slice of the concatenated context.
    o: Arc<Matrix>,
}

struct LayerWeights {
    ln1: OpKind,
    heads: Vec<HeadWeights>,
    ln2: OpKind,
    ff1: Arc<Matrix>,
    ff1_bias: Arc<Vec<f64>>,
    ff2: Arc<Matrix>,
    ff2_bias: Arc<Vec<f64>>,
}

/// Immutable model: configuration, parameters and per-head weight slices.
///
/// Safe to share across threads; each forward step owns its own trace.
pub struct Transformer {
    config: TransformerConfig,
    params: TransformerParams,
    token_embedding: Arc<Matrix>,
    position_embedding: Arc<Matrix>,
    layers: Vec<LayerWeights>,
    final_ln: OpKind,
    head: Arc<Matrix>,
}

/// Output of a decoding run: one trace per generated token.
#[derive(Debug, Clone)]
pub struct Generation {
    pub response: Vec<TokenId>,
    pub traces: Vec<ForwardTrace>,
}

impl Transformer {
    pub fn new(config: TransformerConfig, params: TransformerParams) -> Result<Self> {
        params.validate(&config)?;
        let dh = config.d_head();
        let layers = params
            .layers
            .iter()
            .map(|l| -> Result<LayerWeights> {
                let heads = (0..config.n_heads)
                    .map(|h| HeadWeights {
                        q: Arc::new(l.w_q.columns(h * dh, dh)),
                        k: Arc::new(l.w_k.columns(h * dh, dh)),
                        v: Arc::new(l.w_v.columns(h * dh, dh)),
                        o: Arc::new(l.w_o.row_block(h * dh, dh)),
                    })
                    .collect();
                Ok(LayerWeights {
                    ln1: OpKind::layer_norm(config.ln_eps, l.ln1_gain.clone(), l.ln1_bias.clone())?,
                    heads,
                    ln2: OpKind::layer_norm(config.ln_eps, l.ln2_gain.clone(), l.ln2_bias.clone())?,
                    ff1: Arc::new(l.w_ff1.clone()),
                    ff1_bias: Arc::new(l.b_ff1.clone()),
                    ff2: Arc::new(l.w_ff2.clone()),
                    ff2_bias: Arc::new(l.b_ff2.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            final_ln: OpKind::layer_norm(
                config.ln_eps,
                params.final_ln_gain.clone(),
                params.final_ln_bias.clone(),
            )?,
            token_embedding: Arc::new(params.token_embedding.clone()),
            position_embedding: Arc::new(params.position_embedding.clone()),
            head: Arc::new(params.head.clone()),
            layers,
            config,
            params,
        })
    }

    pub fn seeded(config: TransformerConfig, seed: u64) -> Result<Self> {
        let params = TransformerParams::seeded(&config, seed)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn params(&self) -> &TransformerParams {
        &self.params
    }

    /// Entries a forward step records for each block with `n_heads` heads.
    pub fn entries_per_layer(n_heads: usize) -> usize {
        // ln1, residual add, ln2, ff1, tanh, ff2, residual add
        // + per head: q, k, v, scores, scale, mask, softmax, context, out-projection
        7 + 9 * n_heads
    }

    /// Runs the causal decoder over `tokens`, recording every operation.
    ///
    /// Returns the last position's vocabulary logits together with the trace.
    pub fn forward_step(&self, tokens: &[TokenId]) -> Result<(Vec<f64>, ForwardTrace)> {
        if tokens.is_empty() {
            return Err(Error::Format(
                "cannot run a forward step on an empty sequence".into(),
            ));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::Capacity {
                len: tokens.len(),
                max: self.config.max_seq_len,
            });
        }
        let n = tokens.len();
        let scale = 1.0 / (self.config.d_head() as f64).sqrt();
        let mut tb = TraceBuilder::new();

        let mut mask = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                mask[(i, j)] = MASK_VALUE;
            }
        }

        let mut x = tb.embed(
            tokens,
            Arc::clone(&self.token_embedding),
            Arc::clone(&self.position_embedding),
        )?;
        let mask = tb.constant(mask);

        for layer in &self.layers {
            let h = tb.non_param(layer.ln1.clone(), &[x])?;
            let mut branches = vec![x];
            for head in &layer.heads {
                let q = tb.linear(h, Arc::clone(&head.q), None)?;
                let k = tb.linear(h, Arc::clone(&head.k), None)?;
                let v = tb.linear(h, Arc::clone(&head.v), None)?;
                let scores = tb.matmul(q, k, true)?;
                let scaled = tb.non_param(OpKind::Scale(scale), &[scores])?;
                let masked = tb.non_param(OpKind::Add, &[scaled, mask])?;
                let attn = tb.non_param(OpKind::Softmax, &[masked])?;
                let ctx = tb.matmul(attn, v, false)?;
                branches.push(tb.linear(ctx, Arc::clone(&head.o), None)?);
            }
            let x1 = tb.non_param(OpKind::Add, &branches)?;
            let h2 = tb.non_param(layer.ln2.clone(), &[x1])?;
            let f1 = tb.linear(
                h2,
                Arc::clone(&layer.ff1),
                Some(Arc::clone(&layer.ff1_bias)),
            )?;
            let act = tb.non_param(OpKind::Tanh, &[f1])?;
            let f2 = tb.linear(
                act,
                Arc::clone(&layer.ff2),
                Some(Arc::clone(&layer.ff2_bias)),
            )?;
            x = tb.non_param(OpKind::Add, &[x1, f2])?;
        }

        let hf = tb.non_param(self.final_ln.clone(), &[x])?;
        let logits_all = tb.linear(hf, Arc::clone(&self.head), None)?;
        let trace = tb.finish(logits_all);
        Ok((trace.logits().to_vec(), trace))
    }

    /// Argmax decoding from `prompt`.
    ///
    /// Stops after `max_new` tokens, when `stop_token` is produced (it is not
    /// appended and its trace is dropped), or when the sequence fills the context
    /// window. Fails only when the prompt alone does not fit.
    pub fn greedy_decode(
        &self,
        prompt: &[TokenId],
        max_new: usize,
        stop_token: Option<TokenId>,
    ) -> Result<Generation> {
        if max_new == 0 {
            return Err(Error::Config("max_new must be >= 1".into()));
        }
        let mut seq = prompt.to_vec();
        let mut response = Vec::new();
        let mut traces = Vec::new();
        while response.len() < max_new {
            if seq.len() > self.config.max_seq_len && !response.is_empty() {
                break;
            }
            let (logits, trace) = self.forward_step(&seq)?;
            let next = argmax(&logits) as TokenId;
            if Some(next) == stop_token {
                break;
            }
            response.push(next);
            traces.push(trace);
            seq.push(next);
        }
        Ok(Generation { response, traces })
    }

    /// Teacher-forced decoding of a known response.
    ///
    /// Step `t` sees `prompt + response[..t]` and its trace targets `response[t]`
    /// instead of the argmax.
    pub fn forced_decode(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<Generation> {
        if response.is_empty() {
            return Err(Error::Format("forced response is empty".into()));
        }
        let needed = prompt.len() + response.len() - 1;
        if needed > self.config.max_seq_len {
            return Err(Error::Capacity {
                len: needed,
                max: self.config.max_seq_len,
            });
        }
        let mut seq = prompt.to_vec();
        let mut traces = Vec::with_capacity(response.len());
        for &tok in response {
            let (_, mut trace) = self.forward_step(&seq)?;
            trace.set_target(tok as usize)?;
            traces.push(trace);
            seq.push(tok);
        }
        Ok(Generation {
            response: response.to_vec(),
            traces,
        })
    }
}
