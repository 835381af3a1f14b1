//! Relevance propagation over a [`ForwardTrace`].
//!
//! Three rules cover every recorded operation:
//!
//! - MatMul `C = A B`: `R_A = (R_C B^T) ⊙ A`, `R_B = (A^T R_C) ⊙ B`.
//! - Linear `O = I W`: `R_I = (R_O W^T) ⊙ I` (the MatMul rule with only the input side kept).
//! - Non-parameter layers: `R_I = (R_O J(I)) ⊙ I` row by row, with `J` the layer's exact
//!   Jacobian. A residual `Add` uses the identity Jacobian for every branch.
//!
//! The pass starts from the explained logit, sums relevance where an activation fans out,
//! collapses the embedding output over its feature axis and finally scales the per-token
//! vector by `1 / (sum |r| + eps)`.

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, OpKind};
use crate::transformer::{ForwardTrace, TraceEntry};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrpConfig {
    /// Stabiliser in the final `r / (sum |r| + eps)` normalisation.
    pub epsilon: f64,
    /// Also rescale the relevance leaving every traced operation to unit mass.
    pub per_layer_normalization: bool,
}

impl Default for LrpConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            per_layer_normalization: false,
        }
    }
}

/// One-hot relevance on the vocabulary: the maximum logit at its (lowest) argmax.
pub fn init_relevance(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    init_relevance_at(logits, crate::transformer::argmax(logits))
}

/// One-hot relevance carrying `logits[target]` at `target`.
pub fn init_relevance_at(logits: &[f64], target: usize) -> Vec<f64> {
    let mut r = vec![0.0; logits.len()];
    r[target] = logits[target];
    r
}

/// MatMul rule for `C = A B`. Returns `(R_A, R_B)` shaped like `A` and `B`.
pub fn prop_matmul(r_c: &Matrix, a: &Matrix, b: &Matrix) -> Result<(Matrix, Matrix)> {
    if a.cols() != b.rows() || r_c.shape() != (a.rows(), b.cols()) {
        return Err(Error::shape(
            "prop_matmul",
            format!(
                "R_C {:?} for A {:?} times B {:?}",
                r_c.shape(),
                a.shape(),
                b.shape()
            ),
        ));
    }
    let r_a = numerics::matmul_transpose_b(r_c, b)?.hadamard(a)?;
    let r_b = numerics::matmul_transpose_a(a, r_c)?.hadamard(b)?;
    Ok((r_a, r_b))
}

/// MatMul rule for `C = A B^T` with `B` stored untransposed.
fn prop_matmul_transpose_b(r_c: &Matrix, a: &Matrix, b: &Matrix) -> Result<(Matrix, Matrix)> {
    if a.cols() != b.cols() || r_c.shape() != (a.rows(), b.rows()) {
        return Err(Error::shape(
            "prop_matmul",
            format!(
                "R_C {:?} for A {:?} times B^T with B {:?}",
                r_c.shape(),
                a.shape(),
                b.shape()
            ),
        ));
    }
    let r_a = numerics::matmul(r_c, b)?.hadamard(a)?;
    // (A^T R_C)^T = R_C^T A
    let r_b = numerics::matmul_transpose_a(r_c, a)?.hadamard(b)?;
    Ok((r_a, r_b))
}

/// Linear rule for `O = I W`.
pub fn prop_linear(r: &Matrix, w: &Matrix, input: &Matrix) -> Result<Matrix> {
    if input.cols() != w.rows() || r.shape() != (input.rows(), w.cols()) {
        return Err(Error::shape(
            "prop_linear",
            format!(
                "R {:?} for I {:?} times W {:?}",
                r.shape(),
                input.shape(),
                w.shape()
            ),
        ));
    }
    numerics::matmul_transpose_b(r, w)?.hadamard(input)
}

/// Jacobian rule for a single-input non-parameter layer, applied row by row.
///
/// For [`OpKind::Add`] this is the per-branch rule `R ⊙ I`.
pub fn prop_jacobian(r: &Matrix, kind: &OpKind, input: &Matrix) -> Result<Matrix> {
    if r.shape() != input.shape() {
        return Err(Error::shape(
            "prop_jacobian",
            format!("R {:?} for input {:?}", r.shape(), input.shape()),
        ));
    }
    let mut out = Matrix::zeros(input.rows(), input.cols());
    for i in 0..input.rows() {
        let rj = numerics::vjp(kind, input.row(i), r.row(i))?;
        for ((o, v), x) in out.row_mut(i).iter_mut().zip(rj).zip(input.row(i)) {
            *o = v * x;
        }
    }
    Ok(out)
}

/// `r / (sum |r| + eps)`.
pub fn epsilon_normalize(r: &[f64], eps: f64) -> Vec<f64> {
    let mass: f64 = r.iter().map(|v| v.abs()).sum();
    r.iter().map(|v| v / (mass + eps)).collect()
}

/// Relevance attached to each recorded tensor during a backward pass.
#[derive(Debug, Clone)]
pub struct RelevanceState {
    relevance: Vec<Option<Matrix>>,
    /// Entries not yet propagated, by index.
    pending: Vec<bool>,
}

impl RelevanceState {
    fn new(trace: &ForwardTrace) -> Self {
        Self {
            relevance: vec![None; trace.tensors().len()],
            pending: vec![true; trace.entries().len()],
        }
    }

    pub fn get(&self, id: crate::transformer::TensorId) -> Option<&Matrix> {
        self.relevance[id.0].as_ref()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.iter().filter(|p| **p).count()
    }

    pub fn all_finite(&self) -> bool {
        self.relevance.iter().flatten().all(Matrix::is_finite)
    }

    /// Every stored relevance has the shape of its activation.
    pub fn shapes_match(&self, trace: &ForwardTrace) -> bool {
        self.relevance
            .iter()
            .zip(trace.tensors())
            .all(|(r, t)| r.as_ref().is_none_or(|r| r.shape() == t.shape()))
    }

    fn accumulate(
        &mut self,
        trace: &ForwardTrace,
        id: crate::transformer::TensorId,
        r: Matrix,
    ) -> Result<()> {
        if trace.is_constant(id) {
            return Ok(());
        }
        match &mut self.relevance[id.0] {
            Some(existing) => existing.add_assign(&r),
            slot @ None => {
                *slot = Some(r);
                Ok(())
            }
        }
    }
}

/// Propagates `r_init` (a relevance row over the vocabulary at the last position)
/// back to the input tokens. Returns one ε-normalised value per input token.
pub fn backward_pass(trace: &ForwardTrace, r_init: &[f64], config: &LrpConfig) -> Result<Vec<f64>> {
    backward_pass_with_state(trace, r_init, config).map(|(r, _)| r)
}

/// As [`backward_pass`], also returning every intermediate relevance.
pub fn backward_pass_with_state(
    trace: &ForwardTrace,
    r_init: &[f64],
    config: &LrpConfig,
) -> Result<(Vec<f64>, RelevanceState)> {
    let head = trace.tensor(trace.head_output());
    if r_init.len() != head.cols() {
        return Err(Error::shape(
            "backward_pass",
            format!(
                "initial relevance of width {} for {} logits",
                r_init.len(),
                head.cols()
            ),
        ));
    }
    let mut state = RelevanceState::new(trace);
    let mut r_head = Matrix::zeros(head.rows(), head.cols());
    r_head.row_mut(head.rows() - 1).copy_from_slice(r_init);
    state.relevance[trace.head_output().0] = Some(r_head);

    let mut token_relevance = None;
    for (idx, entry) in trace.entries().iter().enumerate().rev() {
        state.pending[idx] = false;
        let out = entry.output();
        let Some(r_out) = state.relevance[out.0].clone() else {
            continue;
        };
        let mut produced: Vec<(crate::transformer::TensorId, Matrix)> = match entry {
            TraceEntry::Embed { .. } => {
                token_relevance = Some(r_out.row_sums());
                Vec::new()
            }
            TraceEntry::MatMul {
                a, b, transpose_b, ..
            } => {
                let (ra, rb) = if *transpose_b {
                    prop_matmul_transpose_b(&r_out, trace.tensor(*a), trace.tensor(*b))?
                } else {
                    prop_matmul(&r_out, trace.tensor(*a), trace.tensor(*b))?
                };
                vec![(*a, ra), (*b, rb)]
            }
            TraceEntry::Linear { weight, input, .. } => {
                vec![(*input, prop_linear(&r_out, weight, trace.tensor(*input))?)]
            }
            TraceEntry::NonParam { kind, inputs, .. } => match kind {
                OpKind::Add => inputs
                    .iter()
                    .map(|id| Ok((*id, prop_jacobian(&r_out, kind, trace.tensor(*id))?)))
                    .collect::<Result<_>>()?,
                _ => {
                    let [input] = inputs.as_slice() else {
                        return Err(Error::Graph(format!(
                            "{} with {} inputs",
                            kind.name(),
                            inputs.len()
                        )));
                    };
                    vec![(*input, prop_jacobian(&r_out, kind, trace.tensor(*input))?)]
                }
            },
        };
        if config.per_layer_normalization {
            let mass: f64 = produced
                .iter()
                .filter(|(id, _)| !trace.is_constant(*id))
                .map(|(_, r)| r.abs_sum())
                .sum();
            let scale = 1.0 / (mass + config.epsilon);
            for (_, r) in produced.iter_mut() {
                *r = r.scale(scale);
            }
        }
        for (id, r) in produced {
            state.accumulate(trace, id, r)?;
        }
    }

    let r = token_relevance
        .ok_or_else(|| Error::Graph("backward pass never reached the embedding".into()))?;
    Ok((epsilon_normalize(&r, config.epsilon), state))
}

/// Response-by-prompt relevance: row `t` links generated token `t` to every prompt position.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMatrix(Matrix);

impl RelevanceMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::Graph(
                "relevance matrix contains non-finite values".into(),
            ));
        }
        Ok(Self(m))
    }

    /// Response length.
    pub fn response_len(&self) -> usize {
        self.0.rows()
    }

    /// Prompt length.
    pub fn prompt_len(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Relevance row for one generation step, restricted to the prompt positions.
pub fn relevance_row(
    trace: &ForwardTrace,
    prompt_len: usize,
    config: &LrpConfig,
) -> Result<Vec<f64>> {
    if trace.input_len() < prompt_len {
        return Err(Error::shape(
            "relevance_row",
            format!(
                "trace saw {} tokens, prompt has {prompt_len}",
                trace.input_len()
            ),
        ));
    }
    let r_init = init_relevance_at(trace.logits(), trace.target());
    let mut r = backward_pass(trace, &r_init, config)?;
    // Relevance on earlier response tokens has no column in the matrix.
    r.truncate(prompt_len);
    Ok(r)
}

/// Assembles the relevance matrix from the per-step traces of one response.
pub fn build_relevance_matrix(
    traces: &[ForwardTrace],
    prompt_len: usize,
    config: &LrpConfig,
) -> Result<RelevanceMatrix> {
    if traces.is_empty() || prompt_len == 0 {
        return Err(Error::shape(
            "build_relevance_matrix",
            format!("{} traces over a prompt of {prompt_len}", traces.len()),
        ));
    }
    let mut m = Matrix::zeros(traces.len(), prompt_len);
    for (t, trace) in traces.iter().enumerate() {
        if trace.input_len() != prompt_len + t {
            return Err(Error::shape(
                "build_relevance_matrix",
                format!(
                    "step {t} saw {} tokens, expected {}",
                    trace.input_len(),
                    prompt_len + t
                ),
            ));
        }
        m.row_mut(t)
            .copy_from_slice(&relevance_row(trace, prompt_len, config)?);
    }
    RelevanceMatrix::new(m)
}
