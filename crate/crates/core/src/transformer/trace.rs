use std::sync::Arc;

use super::TokenId;
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, OpKind};

/// Index of a tensor recorded in a [`ForwardTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(pub usize);

/// One recorded operation. Every entry produces exactly one output tensor.
#[derive(Debug, Clone)]
pub enum TraceEntry {
    /// Token lookup plus learned positional embedding.
    Embed {
        tokens: Vec<TokenId>,
        token_embedding: Arc<Matrix>,
        position_embedding: Arc<Matrix>,
        output: TensorId,
    },
    /// `output = a * b`, or `a * b^T` when `transpose_b` is set.
    MatMul {
        a: TensorId,
        b: TensorId,
        transpose_b: bool,
        output: TensorId,
    },
    /// `output = input * weight (+ bias)`.
    Linear {
        weight: Arc<Matrix>,
        bias: Option<Arc<Vec<f64>>>,
        input: TensorId,
        output: TensorId,
    },
    /// A parameter-free layer. `Add` sums all inputs; every other kind has one input.
    NonParam {
        kind: OpKind,
        inputs: Vec<TensorId>,
        output: TensorId,
    },
}

impl TraceEntry {
    pub fn output(&self) -> TensorId {
        match self {
            TraceEntry::Embed { output, .. }
            | TraceEntry::MatMul { output, .. }
            | TraceEntry::Linear { output, .. }
            | TraceEntry::NonParam { output, .. } => *output,
        }
    }

    pub fn inputs(&self) -> Vec<TensorId> {
        match self {
            TraceEntry::Embed { .. } => vec![],
            TraceEntry::MatMul { a, b, .. } => vec![*a, *b],
            TraceEntry::Linear { input, .. } => vec![*input],
            TraceEntry::NonParam { inputs, .. } => inputs.clone(),
        }
    }

    /// Recomputes the output from `tensors`.
    pub fn evaluate(&self, tensors: &[Matrix]) -> Result<Matrix> {
        match self {
            TraceEntry::Embed {
                tokens,
                token_embedding,
                position_embedding,
                ..
            } => embed(tokens, token_embedding, position_embedding),
            TraceEntry::MatMul {
                a, b, transpose_b, ..
            } => {
                if *transpose_b {
                    numerics::matmul_transpose_b(&tensors[a.0], &tensors[b.0])
                } else {
                    numerics::matmul(&tensors[a.0], &tensors[b.0])
                }
            }
            TraceEntry::Linear {
                weight,
                bias,
                input,
                ..
            } => {
                let out = numerics::matmul(&tensors[input.0], weight)?;
                match bias {
                    Some(b) => out.add_row(b),
                    None => Ok(out),
                }
            }
            TraceEntry::NonParam { kind, inputs, .. } => match kind {
                OpKind::Add => {
                    let (first, rest) = inputs
                        .split_first()
                        .ok_or_else(|| Error::Graph("add with no inputs".into()))?;
                    let mut sum = tensors[first.0].clone();
                    for id in rest {
                        sum.add_assign(&tensors[id.0])?;
                    }
                    Ok(sum)
                }
                _ => {
                    let [input] = inputs.as_slice() else {
                        return Err(Error::Graph(format!(
                            "{} expects one input, got {}",
                            kind.name(),
                            inputs.len()
                        )));
                    };
                    numerics::apply(kind, &tensors[input.0])
                }
            },
        }
    }
}

fn embed(
    tokens: &[TokenId],
    token_embedding: &Matrix,
    position_embedding: &Matrix,
) -> Result<Matrix> {
    let d = token_embedding.cols();
    if tokens.len() > position_embedding.rows() {
        return Err(Error::Capacity {
            len: tokens.len(),
            max: position_embedding.rows(),
        });
    }
    let mut out = Matrix::zeros(tokens.len(), d);
    for (pos, &tok) in tokens.iter().enumerate() {
        let tok = tok as usize;
        if tok >= token_embedding.rows() {
            return Err(Error::Format(format!(
                "token id {tok} out of range for vocabulary of {}",
                token_embedding.rows()
            )));
        }
        for (k, v) in out.row_mut(pos).iter_mut().enumerate() {
            *v = token_embedding[(tok, k)] + position_embedding[(pos, k)];
        }
    }
    Ok(out)
}

/// Ordered record of one forward step: every tensor and the entry that produced it.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    tensors: Vec<Matrix>,
    /// Index of the producing entry, `None` for recorded constants.
    producers: Vec<Option<usize>>,
    entries: Vec<TraceEntry>,
    head_output: TensorId,
    logits: Vec<f64>,
    target: Option<usize>,
}

impl ForwardTrace {
    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn tensor(&self, id: TensorId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn is_constant(&self, id: TensorId) -> bool {
        self.producers[id.0].is_none()
    }

    /// Output of the vocabulary projection, `seq_len x vocab_size`.
    pub fn head_output(&self) -> TensorId {
        self.head_output
    }

    /// Vocabulary scores at the last position.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Number of input tokens this step saw.
    pub fn input_len(&self) -> usize {
        self.tensors[self.head_output.0].rows()
    }

    pub fn input_tokens(&self) -> &[TokenId] {
        match self.entries.first() {
            Some(TraceEntry::Embed { tokens, .. }) => tokens,
            _ => &[],
        }
    }

    /// Token whose logit the relevance pass explains; the argmax unless overridden.
    pub fn target(&self) -> usize {
        self.target.unwrap_or_else(|| super::argmax(&self.logits))
    }

    pub fn set_target(&mut self, token: usize) -> Result<()> {
        if token >= self.logits.len() {
            return Err(Error::Format(format!(
                "target token {token} out of range for {} logits",
                self.logits.len()
            )));
        }
        self.target = Some(token);
        Ok(())
    }

    /// Recomputes every entry from its recorded inputs and returns the largest
    /// absolute deviation from the recorded outputs.
    pub fn replay_max_deviation(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for entry in &self.entries {
            let recomputed = entry.evaluate(&self.tensors)?;
            let recorded = &self.tensors[entry.output().0];
            if recomputed.shape() != recorded.shape() {
                return Err(Error::Graph(format!(
                    "replayed shape {:?} differs from recorded {:?}",
                    recomputed.shape(),
                    recorded.shape()
                )));
            }
            worst = worst.max(recomputed.max_abs_diff(recorded));
        }
        Ok(worst)
    }

    /// Checks topological order: every input is a constant or produced earlier.
    pub fn check_topology(&self) -> Result<()> {
        for (idx, entry) in self.entries.iter().enumerate() {
            if self.producers[entry.output().0] != Some(idx) {
                return Err(Error::Graph(format!(
                    "entry {idx} output not attributed to it"
                )));
            }
            for input in entry.inputs() {
                match self.producers.get(input.0) {
                    Some(None) => {}
                    Some(Some(p)) if *p < idx => {}
                    _ => {
                        return Err(Error::Graph(format!(
                            "entry {idx} reads tensor {} before it is produced",
                            input.0
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Records operations while evaluating them.
#[derive(Debug, Default)]
pub struct TraceBuilder {
    tensors: Vec<Matrix>,
    producers: Vec<Option<usize>>,
    entries: Vec<TraceEntry>,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensor(&self, id: TensorId) -> &Matrix {
        &self.tensors[id.0]
    }

    fn next_id(&self) -> TensorId {
        TensorId(self.tensors.len())
    }

    fn record(&mut self, entry: TraceEntry) -> Result<TensorId> {
        let value = entry.evaluate(&self.tensors)?;
        let id = entry.output();
        debug_assert_eq!(id, self.next_id());
        self.tensors.push(value);
        self.producers.push(Some(self.entries.len()));
        self.entries.push(entry);
        Ok(id)
    }

    /// A tensor with no producing entry (e.g. the causal mask).
    pub fn constant(&mut self, value: Matrix) -> TensorId {
        let id = self.next_id();
        self.tensors.push(value);
        self.producers.push(None);
        id
    }

    pub fn embed(
        &mut self,
        tokens: &[TokenId],
        token_embedding: Arc<Matrix>,
        position_embedding: Arc<Matrix>,
    ) -> Result<TensorId> {
        let output = self.next_id();
        self.record(TraceEntry::Embed {
            tokens: tokens.to_vec(),
            token_embedding,
            position_embedding,
            output,
        })
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId, transpose_b: bool) -> Result<TensorId> {
        let output = self.next_id();
        self.record(TraceEntry::MatMul {
            a,
            b,
            transpose_b,
            output,
        })
    }

    pub fn linear(
        &mut self,
        input: TensorId,
        weight: Arc<Matrix>,
        bias: Option<Arc<Vec<f64>>>,
    ) -> Result<TensorId> {
        let output = self.next_id();
        self.record(TraceEntry::Linear {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn non_param(&mut self, kind: OpKind, inputs: &[TensorId]) -> Result<TensorId> {
        let output = self.next_id();
        self.record(TraceEntry::NonParam {
            kind,
            inputs: inputs.to_vec(),
            output,
        })
    }

    /// Finishes the trace; `head_output` is the `seq_len x vocab` projection.
    pub fn finish(self, head_output: TensorId) -> ForwardTrace {
        let head = &self.tensors[head_output.0];
        let logits = head.row(head.rows() - 1).to_vec();
        ForwardTrace {
            tensors: self.tensors,
            producers: self.producers,
            entries: self.entries,
            head_output,
            logits,
            target: None,
        }
    }
}
