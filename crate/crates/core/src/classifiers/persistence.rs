use std::io::{Read, Write};

use super::{Classifier, LabeledSample, LstmModel, LstmParams, MlpModel, SvmModel, ThresholdModel};
use crate::error::{Error, Result};
use crate::stats::FeatureSource;

pub const MODEL_MAGIC: &[u8; 4] = b"RPCM";
pub const MODEL_VERSION: u32 = 1;

/// Upper bound on any stored array, to reject corrupt counts before allocating.
const MAX_LEN: u64 = 1 << 28;

/// Any trained detector, in the form saved to and loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Threshold(ThresholdModel),
    Svm(SvmModel),
    Mlp(MlpModel),
    Lstm(LstmModel),
}

impl Classifier for Model {
    fn predict(&self, sample: &LabeledSample) -> Result<bool> {
        match self {
            Model::Threshold(m) => m.predict(sample),
            Model::Svm(m) => m.predict(sample),
            Model::Mlp(m) => m.predict(sample),
            Model::Lstm(m) => m.predict(sample),
        }
    }
}

fn source_tag(s: FeatureSource) -> u8 {
    match s {
        FeatureSource::Prompt => 0,
        FeatureSource::Response => 1,
        FeatureSource::Concat => 2,
    }
}

struct Writer<W>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_all(&[v])?)
    }

    fn u64(&mut self, v: usize) -> Result<()> {
        Ok(self.0.write_all(&(v as u64).to_le_bytes())?)
    }

    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.0.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::ModelFile("truncated model file".into()),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes()?);
        if v > MAX_LEN {
            return Err(Error::ModelFile(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn source(&mut self) -> Result<FeatureSource> {
        match self.u8()? {
            0 => Ok(FeatureSource::Prompt),
            1 => Ok(FeatureSource::Response),
            2 => Ok(FeatureSource::Concat),
            t => Err(Error::ModelFile(format!("unknown feature source tag {t}"))),
        }
    }
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Threshold(_) => "threshold",
            Model::Svm(_) => "svm",
            Model::Mlp(_) => "mlp",
            Model::Lstm(_) => "lstm",
        }
    }

    /// Magic, version, kind tag, hyperparameters, then weights; all little-endian.
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = Writer(w);
        w.0.write_all(MODEL_MAGIC)?;
        w.0.write_all(&MODEL_VERSION.to_le_bytes())?;
        match self {
            Model::Threshold(m) => {
                w.u8(0)?;
                w.u8(source_tag(m.source))?;
                w.f64s(&[m.t])?;
            }
            Model::Svm(m) => {
                w.u8(1)?;
                w.u8(source_tag(m.source))?;
                w.u8(u8::from(m.converged))?;
                w.f64s(&[m.gamma, m.rho, m.kkt_gap])?;
                let dim = m.support.first().map_or(0, Vec::len);
                w.u64(m.support.len())?;
                w.u64(dim)?;
                w.f64s(&m.coef)?;
                for s in &m.support {
                    w.f64s(s)?;
                }
            }
            Model::Mlp(m) => {
                w.u8(2)?;
                w.u8(source_tag(m.source))?;
                w.u64(m.dim)?;
                w.u64(m.hidden)?;
                w.f64s(&m.params)?;
            }
            Model::Lstm(m) => {
                w.u8(3)?;
                w.u64(m.shape.0)?;
                w.u64(m.shape.1)?;
                w.u64(m.params.hidden())?;
                w.u64(m.params.layers.len())?;
                w.f64s(&m.params.flatten())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader(r);
        let magic: [u8; 4] = r.bytes()?;
        if &magic != MODEL_MAGIC {
            return Err(Error::ModelFile(format!("bad magic {magic:?}")));
        }
        let version = u32::from_le_bytes(r.bytes()?);
        if version != MODEL_VERSION {
            return Err(Error::ModelFile(format!("unsupported version {version}")));
        }
        let model = match r.u8()? {
            0 => {
                let source = r.source()?;
                Model::Threshold(ThresholdModel {
                    source,
                    t: r.f64()?,
                })
            }
            1 => {
                let source = r.source()?;
                let converged = r.u8()? != 0;
                let (gamma, rho, kkt_gap) = (r.f64()?, r.f64()?, r.f64()?);
                let (n, dim) = (r.len()?, r.len()?);
                let coef = r.f64s(n)?;
                let support = (0..n).map(|_| r.f64s(dim)).collect::<Result<Vec<_>>>()?;
                Model::Svm(SvmModel {
                    source,
                    gamma,
                    support,
                    coef,
                    rho,
                    kkt_gap,
                    converged,
                })
            }
            2 => {
                let source = r.source()?;
                let (dim, hidden) = (r.len()?, r.len()?);
                let params = r.f64s(MlpModel::param_count(dim, hidden))?;
                Model::Mlp(MlpModel {
                    source,
                    dim,
                    hidden,
                    params,
                })
            }
            3 => {
                let shape = (r.len()?, r.len()?);
                let (hidden, layers) = (r.len()?, r.len()?);
                if hidden == 0 || layers == 0 || shape.1 == 0 {
                    return Err(Error::ModelFile("empty LSTM dimensions".into()));
                }
                let mut params = LstmParams::zeros(shape.1, hidden, layers);
                let n = params.flatten().len();
                params.assign(&r.f64s(n)?);
                Model::Lstm(LstmModel { params, shape })
            }
            t => return Err(Error::ModelFile(format!("unknown model kind {t}"))),
        };
        let mut trailing = [0u8; 1];
        if r.0.read(&mut trailing)? != 0 {
            return Err(Error::ModelFile("trailing bytes after model".into()));
        }
        Ok(model)
    }
}
