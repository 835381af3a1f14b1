use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const PARAMS_MAGIC: &[u8; 4] = b"RPTW";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub ln_eps: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            vocab_size: 256,
            d_model: 32,
            n_heads: 2,
            n_layers: 2,
            d_ff: 64,
            max_seq_len: 512,
            ln_eps: 1e-5,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.ln_eps.is_finite() || self.ln_eps <= 0.0 {
            return Err(Error::Config(format!("ln_eps {} must be > 0", self.ln_eps)));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Weights of one transformer block. Projections act on row vectors (`y = x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w_ff1: Matrix,
    pub b_ff1: Vec<f64>,
    pub w_ff2: Matrix,
    pub b_ff2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub layers: Vec<LayerParams>,
    pub final_ln_gain: Vec<f64>,
    pub final_ln_bias: Vec<f64>,
    /// `d_model x vocab_size` output projection.
    pub head: Matrix,
}

impl TransformerParams {
    /// All weights, gains and biases zero.
    pub fn zeros(config: &TransformerConfig) -> Self {
        let d = config.d_model;
        let layer = LayerParams {
            ln1_gain: vec![0.0; d],
            ln1_bias: vec![0.0; d],
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            w_o: Matrix::zeros(d, d),
            ln2_gain: vec![0.0; d],
            ln2_bias: vec![0.0; d],
            w_ff1: Matrix::zeros(d, config.d_ff),
            b_ff1: vec![0.0; config.d_ff],
            w_ff2: Matrix::zeros(config.d_ff, d),
            b_ff2: vec![0.0; d],
        };
        Self {
            token_embedding: Matrix::zeros(config.vocab_size, d),
            position_embedding: Matrix::zeros(config.max_seq_len, d),
            layers: vec![layer; config.n_layers],
            final_ln_gain: vec![0.0; d],
            final_ln_bias: vec![0.0; d],
            head: Matrix::zeros(d, config.vocab_size),
        }
    }

    /// Seeded random initialisation.
    ///
    /// Token embeddings are unit normal and the output head is initialised as their
    /// transpose (tied at init, stored separately). Projections use `N(0, 1/fan_in)`,
    /// positional embeddings `N(0, 0.1^2)`, gains one and biases zero.
    pub fn seeded(config: &TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |rows: usize, cols: usize, std: f64| {
            let dist = Normal::new(0.0, std).expect("positive std");
            let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let d = config.d_model;
        let proj_std = (1.0 / d as f64).sqrt();
        let ff_std = (1.0 / config.d_ff as f64).sqrt();

        let token_embedding = normal(config.vocab_size, d, 1.0);
        let position_embedding = normal(config.max_seq_len, d, 0.1);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_gain: vec![1.0; d],
                ln1_bias: vec![0.0; d],
                w_q: normal(d, d, proj_std),
                w_k: normal(d, d, proj_std),
                w_v: normal(d, d, proj_std),
                w_o: normal(d, d, proj_std),
                ln2_gain: vec![1.0; d],
                ln2_bias: vec![0.0; d],
                w_ff1: normal(d, config.d_ff, proj_std),
                b_ff1: vec![0.0; config.d_ff],
                w_ff2: normal(config.d_ff, d, ff_std),
                b_ff2: vec![0.0; d],
            })
            .collect();
        let head = token_embedding.transpose();
        Ok(Self {
            token_embedding,
            position_embedding,
            layers,
            final_ln_gain: vec![1.0; d],
            final_ln_bias: vec![0.0; d],
            head,
        })
    }

    /// Checks every shape against `config` and that all values are finite.
    pub fn validate(&self, config: &TransformerConfig) -> Result<()> {
        config.validate()?;
        let d = config.d_model;
        let mut problems = Vec::new();
        let check =
            |problems: &mut Vec<String>, name: String, m: &Matrix, rows: usize, cols: usize| {
                if m.shape() != (rows, cols) {
                    problems.push(format!(
                        "{name}: {:?}, expected {:?}",
                        m.shape(),
                        (rows, cols)
                    ));
                } else if !m.is_finite() {
                    problems.push(format!("{name}: non-finite value"));
                }
            };
        check(
            &mut problems,
            "token_embedding".into(),
            &self.token_embedding,
            config.vocab_size,
            d,
        );
        check(
            &mut problems,
            "position_embedding".into(),
            &self.position_embedding,
            config.max_seq_len,
            d,
        );
        check(
            &mut problems,
            "head".into(),
            &self.head,
            d,
            config.vocab_size,
        );
        if self.layers.len() != config.n_layers {
            problems.push(format!(
                "{} layers, expected {}",
                self.layers.len(),
                config.n_layers
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, m, r, c) in [
                ("w_q", &layer.w_q, d, d),
                ("w_k", &layer.w_k, d, d),
                ("w_v", &layer.w_v, d, d),
                ("w_o", &layer.w_o, d, d),
                ("w_ff1", &layer.w_ff1, d, config.d_ff),
                ("w_ff2", &layer.w_ff2, config.d_ff, d),
            ] {
                check(&mut problems, format!("layers[{l}].{name}"), m, r, c);
            }
            for (name, v, len) in [
                ("ln1_gain", &layer.ln1_gain, d),
                ("ln1_bias", &layer.ln1_bias, d),
                ("ln2_gain", &layer.ln2_gain, d),
                ("ln2_bias", &layer.ln2_bias, d),
                ("b_ff1", &layer.b_ff1, config.d_ff),
                ("b_ff2", &layer.b_ff2, d),
            ] {
                check(
                    &mut problems,
                    format!("layers[{l}].{name}"),
                    &Matrix::row_vector(v),
                    1,
                    len,
                );
            }
        }
        check(
            &mut problems,
            "final_ln_gain".into(),
            &Matrix::row_vector(&self.final_ln_gain),
            1,
            d,
        );
        check(
            &mut problems,
            "final_ln_bias".into(),
            &Matrix::row_vector(&self.final_ln_bias),
            1,
            d,
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "bad parameters: {}",
                problems.join("; ")
            )))
        }
    }

    /// Arrays in file order. Vectors are written as single rows.
    fn arrays(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> =
            vec![self.token_embedding.data(), self.position_embedding.data()];
        for layer in &self.layers {
            out.extend([
                layer.ln1_gain.as_slice(),
                &layer.ln1_bias,
                layer.w_q.data(),
                layer.w_k.data(),
                layer.w_v.data(),
                layer.w_o.data(),
                &layer.ln2_gain,
                &layer.ln2_bias,
                layer.w_ff1.data(),
                &layer.b_ff1,
                layer.w_ff2.data(),
                &layer.b_ff2,
            ]);
        }
        out.extend([
            self.final_ln_gain.as_slice(),
            &self.final_ln_bias,
            self.head.data(),
        ]);
        out
    }

    /// Writes the `RPTW` parameter file: magic, version, config, then every array
    /// as little-endian `f64`, row-major.
    pub fn write_to<W: Write>(&self, config: &TransformerConfig, mut w: W) -> Result<()> {
        self.validate(config)?;
        w.write_all(PARAMS_MAGIC)?;
        w.write_all(&PARAMS_VERSION.to_le_bytes())?;
        for count in [
            config.vocab_size,
            config.d_model,
            config.n_heads,
            config.n_layers,
            config.d_ff,
            config.max_seq_len,
        ] {
            w.write_all(&(count as u64).to_le_bytes())?;
        }
        w.write_all(&config.ln_eps.to_le_bytes())?;
        for array in self.arrays() {
            for v in array {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<(TransformerConfig, Self)> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != PARAMS_MAGIC {
            return Err(Error::ModelFile(format!("bad magic {magic:?}")));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != PARAMS_VERSION {
            return Err(Error::ModelFile(format!("unsupported version {version}")));
        }
        let mut counts = [0usize; 6];
        for c in counts.iter_mut() {
            let v = u64::from_le_bytes(read_array(&mut r)?);
            *c =
                usize::try_from(v).map_err(|_| Error::ModelFile(format!("count {v} too large")))?;
        }
        let config = TransformerConfig {
            vocab_size: counts[0],
            d_model: counts[1],
            n_heads: counts[2],
            n_layers: counts[3],
            d_ff: counts[4],
            max_seq_len: counts[5],
            ln_eps: f64::from_le_bytes(read_array(&mut r)?),
        };
        config.validate()?;
        let mut params = Self::zeros(&config);
        for array in params.arrays_mut() {
            for v in array.iter_mut() {
                *v = f64::from_le_bytes(read_array(&mut r)?);
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::ModelFile("trailing bytes after parameters".into()));
        }
        params.validate(&config)?;
        Ok((config, params))
    }

    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.token_embedding.data_mut(),
            self.position_embedding.data_mut(),
        ];
        for layer in &mut self.layers {
            out.push(&mut layer.ln1_gain);
            out.push(&mut layer.ln1_bias);
            out.push(layer.w_q.data_mut());
            out.push(layer.w_k.data_mut());
            out.push(layer.w_v.data_mut());
            out.push(layer.w_o.data_mut());
            out.push(&mut layer.ln2_gain);
            out.push(&mut layer.ln2_bias);
            out.push(layer.w_ff1.data_mut());
            out.push(&mut layer.b_ff1);
            out.push(layer.w_ff2.data_mut());
            out.push(&mut layer.b_ff2);
        }
        out.push(&mut self.final_ln_gain);
        out.push(&mut self.final_ln_bias);
        out.push(self.head.data_mut());
        out
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::ModelFile("truncated parameter file".into()),
        _ => Error::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}
