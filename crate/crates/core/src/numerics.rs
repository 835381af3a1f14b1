//! Dense row-major matrices, the non-parameter layer zoo and exact Jacobians.
//!
//! Everything here is a pure function of its inputs. The relevance engine relies on
//! [`jacobian`] (and its fast vector-Jacobian form [`vjp`]) for every layer that has no
//! weight matrix of its own.

use std::fmt;

use crate::error::{Error, Result};

/// Dense `rows x cols` matrix of `f64`, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Copies the column block `[start, start + width)`.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        assert!(start + width <= self.cols);
        let mut out = Matrix::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }

    /// Copies the row block `[start, start + height)`.
    pub fn row_block(&self, start: usize, height: usize) -> Matrix {
        assert!(start + height <= self.rows);
        Matrix {
            rows: height,
            cols: self.cols,
            data: self.data[start * self.cols..(start + height) * self.cols].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds `bias` to every row.
    pub fn add_row(&self, bias: &[f64]) -> Result<Matrix> {
        if bias.len() != self.cols {
            return Err(Error::shape(
                "add_row",
                format!("bias of length {} for {} columns", bias.len(), self.cols),
            ));
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, b) in out.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Sums each row, collapsing the column axis.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        self.check_same_shape(other, op)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Standard product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let c_row = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (c, &bkj) in c_row.iter_mut().zip(b_row) {
                *c += aik * bkj;
            }
        }
    }
    Ok(c)
}

/// `a * b^T` without materialising the transpose.
pub fn matmul_transpose_b(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "matmul_transpose_b",
            format!("{}x{} times ({}x{})^T", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            c[(i, j)] = dot(a_row, b.row(j));
        }
    }
    Ok(c)
}

/// `a^T * b` without materialising the transpose.
pub fn matmul_transpose_a(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(
            "matmul_transpose_a",
            format!("({}x{})^T times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let b_row = b.row(k);
        for i in 0..a.cols {
            let aki = a[(k, i)];
            if aki == 0.0 {
                continue;
            }
            let c_row = &mut c.data[i * b.cols..(i + 1) * b.cols];
            for (c, &bkj) in c_row.iter_mut().zip(b_row) {
                *c += aki * bkj;
            }
        }
    }
    Ok(c)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The non-parameter operations a traced forward pass can contain.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// Row-wise softmax.
    Softmax,
    /// Row-wise layer normalisation with per-feature gain and bias.
    LayerNorm {
        eps: f64,
        gain: Vec<f64>,
        bias: Vec<f64>,
    },
    Sigmoid,
    Relu,
    Tanh,
    Scale(f64),
    /// Residual sum. Seen from any single branch it is the identity map.
    Add,
}

impl OpKind {
    pub fn layer_norm(eps: f64, gain: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::Config(format!("layer norm eps {eps} must be >= 0")));
        }
        if gain.len() != bias.len() {
            return Err(Error::shape(
                "layer_norm",
                format!("gain {} vs bias {}", gain.len(), bias.len()),
            ));
        }
        Ok(OpKind::LayerNorm { eps, gain, bias })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Softmax => "softmax",
            OpKind::LayerNorm { .. } => "layer_norm",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Scale(_) => "scale",
            OpKind::Add => "add",
        }
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if let OpKind::LayerNorm { gain, .. } = self {
            if gain.len() != width {
                return Err(Error::shape(
                    "layer_norm",
                    format!("gain of length {} for rows of width {width}", gain.len()),
                ));
            }
        }
        Ok(())
    }
}

/// Evaluates `kind` on every row of `x`.
pub fn apply(kind: &OpKind, x: &Matrix) -> Result<Matrix> {
    kind.check_width(x.cols())?;
    let mut out = x.clone();
    for i in 0..x.rows() {
        apply_row(kind, x.row(i), out.row_mut(i));
    }
    Ok(out)
}

fn apply_row(kind: &OpKind, x: &[f64], y: &mut [f64]) {
    match kind {
        OpKind::Softmax => {
            let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = (xi - max).exp();
                total += *yi;
            }
            for yi in y.iter_mut() {
                *yi /= total;
            }
        }
        OpKind::LayerNorm { eps, gain, bias } => {
            let (mean, std) = mean_std(x, *eps);
            for (k, yi) in y.iter_mut().enumerate() {
                *yi = gain[k] * (x[k] - mean) / std + bias[k];
            }
        }
        OpKind::Sigmoid => y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi = sigmoid(xi)),
        OpKind::Relu => y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi = xi.max(0.0)),
        OpKind::Tanh => y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi = xi.tanh()),
        OpKind::Scale(c) => y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi = c * xi),
        OpKind::Add => y.copy_from_slice(x),
    }
}

/// Population mean and `sqrt(var + eps)` of a row.
fn mean_std(x: &[f64], eps: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, (var + eps).sqrt())
}

/// Analytic Jacobian `J[i][j] = dy_i / dx_j` of `kind` at the row `x`.
pub fn jacobian(kind: &OpKind, x: &[f64]) -> Result<Matrix> {
    kind.check_width(x.len())?;
    let n = x.len();
    let j = match kind {
        OpKind::Softmax => {
            let mut s = vec![0.0; n];
            apply_row(kind, x, &mut s);
            let mut j = Matrix::diag(&s);
            for a in 0..n {
                for b in 0..n {
                    j[(a, b)] -= s[a] * s[b];
                }
            }
            j
        }
        OpKind::LayerNorm { eps, gain, .. } => {
            let (mean, std) = mean_std(x, *eps);
            let xhat: Vec<f64> = x.iter().map(|v| (v - mean) / std).collect();
            let nf = n as f64;
            let mut j = Matrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    j[(a, b)] = gain[a] / std * (delta - 1.0 / nf - xhat[a] * xhat[b] / nf);
                }
            }
            j
        }
        OpKind::Sigmoid => Matrix::diag(
            &x.iter()
                .map(|&v| {
                    let s = sigmoid(v);
                    s * (1.0 - s)
                })
                .collect::<Vec<_>>(),
        ),
        // Subgradient 0 at the kink.
        OpKind::Relu => Matrix::diag(
            &x.iter()
                .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                .collect::<Vec<_>>(),
        ),
        OpKind::Tanh => Matrix::diag(
            &x.iter()
                .map(|&v| 1.0 - v.tanh().powi(2))
                .collect::<Vec<_>>(),
        ),
        OpKind::Scale(c) => Matrix::identity(n).scale(*c),
        OpKind::Add => Matrix::identity(n),
    };
    Ok(j)
}

/// Row-vector times Jacobian, `r * J(x)`, using closed forms instead of building `J`.
pub fn vjp(kind: &OpKind, x: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    kind.check_width(x.len())?;
    if r.len() != x.len() {
        return Err(Error::shape(
            "vjp",
            format!(
                "relevance of width {} for input of width {}",
                r.len(),
                x.len()
            ),
        ));
    }
    let out = match kind {
        OpKind::Softmax => {
            let mut s = vec![0.0; x.len()];
            apply_row(kind, x, &mut s);
            let rs = dot(r, &s);
            s.iter().zip(r).map(|(si, ri)| si * (ri - rs)).collect()
        }
        OpKind::LayerNorm { eps, gain, .. } => {
            let (mean, std) = mean_std(x, *eps);
            let nf = x.len() as f64;
            let xhat: Vec<f64> = x.iter().map(|v| (v - mean) / std).collect();
            let rg: Vec<f64> = r.iter().zip(gain).map(|(a, b)| a * b).collect();
            let mean_rg = rg.iter().sum::<f64>() / nf;
            let mean_rgx = dot(&rg, &xhat) / nf;
            rg.iter()
                .zip(&xhat)
                .map(|(g, xh)| (g - mean_rg - xh * mean_rgx) / std)
                .collect()
        }
        OpKind::Sigmoid => r
            .iter()
            .zip(x)
            .map(|(ri, &xi)| {
                let s = sigmoid(xi);
                ri * s * (1.0 - s)
            })
            .collect(),
        OpKind::Relu => r
            .iter()
            .zip(x)
            .map(|(&ri, &xi)| if xi > 0.0 { ri } else { 0.0 })
            .collect(),
        OpKind::Tanh => r
            .iter()
            .zip(x)
            .map(|(ri, xi)| ri * (1.0 - xi.tanh().powi(2)))
            .collect(),
        OpKind::Scale(c) => r.iter().map(|ri| c * ri).collect(),
        OpKind::Add => r.to_vec(),
    };
    Ok(out)
}

/// Central-difference Jacobian estimate, one column per perturbed input.
pub fn finite_diff_jacobian(kind: &OpKind, x: &[f64], h: f64) -> Result<Matrix> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Config(format!(
            "finite-difference step {h} must be > 0"
        )));
    }
    kind.check_width(x.len())?;
    let n = x.len();
    let mut j = Matrix::zeros(n, n);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut xp = x.to_vec();
    for col in 0..n {
        xp[col] = x[col] + h;
        apply_row(kind, &xp, &mut plus);
        xp[col] = x[col] - h;
        apply_row(kind, &xp, &mut minus);
        xp[col] = x[col];
        for row in 0..n {
            j[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
        }
    }
    Ok(j)
}
