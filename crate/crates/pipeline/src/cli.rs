//! Command-line surface.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lrp_core::classifiers::{ThresholdGrid, DEFAULT_STAR_SHAPE};
use lrp_core::lrp::LrpConfig;
use lrp_core::stats::FeatureSource;
use lrp_core::transformer::{Transformer, TransformerConfig, TransformerParams};
use lrp_core::Matrix;

use crate::corpus::load_corpus;
use crate::dataset::{load_labeled, write_dataset};
use crate::detect::{run_detect, run_sweep, DetectOptions, Method};
use crate::error::{PipelineError, Result};
use crate::features::{DEFAULT_DETECT_L_NEW, DEFAULT_FIGURE_L_NEW};
use crate::figures::{emit_figure_csv, FigureKind, FigureOptions};
use crate::matrix_io::{export_matrix, import_matrix};
use crate::relevance::{run_relevance, RelevanceOptions};
use crate::synth::{synth_corpus, SynthSpec};
use crate::utest::{run_utest, UtestOptions};

#[derive(Debug, Parser)]
#[command(
    name = "lrp",
    version,
    about = "Relevance-based hallucination detection for RAG responses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a relevance matrix per corpus record and write a manifest.
    Relevance(RelevanceArgs),
    /// Write seeded toy-transformer parameters to a file.
    InitParams(InitParamsArgs),
    /// Cross-validate a detector on labelled relevance matrices.
    Detect(DetectArgs),
    /// Sweep the mean-relevance threshold.
    Sweep(SweepArgs),
    /// Repeated-subsample Mann-Whitney test between the classes.
    Utest(UtestArgs),
    /// Emit figure data as CSV.
    Figures(FiguresArgs),
    /// Generate a synthetic labelled corpus of relevance matrices.
    Synth(SynthArgs),
    /// Convert a CSV matrix into a binary matrix file.
    ExportMatrix(ConvertArgs),
    /// Convert a binary matrix file into CSV.
    ImportMatrix(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Parameter file; a seeded model is built when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 512)]
    pub max_seq_len: usize,
}

impl ModelArgs {
    fn config(&self) -> TransformerConfig {
        TransformerConfig {
            n_layers: self.layers,
            n_heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            ..Default::default()
        }
    }

    fn model(&self) -> Result<Transformer> {
        match &self.params {
            Some(path) => {
                let file = std::fs::File::open(path).map_err(PipelineError::io(path))?;
                let (config, params) = TransformerParams::read_from(BufReader::new(file))?;
                Ok(Transformer::new(config, params)?)
            }
            None => Ok(Transformer::seeded(self.config(), self.seed)?),
        }
    }
}

#[derive(Debug, Args)]
pub struct RelevanceArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 32)]
    pub max_new: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Rescale relevance to unit mass after every traced operation.
    #[arg(long)]
    pub per_layer_norm: bool,
}

#[derive(Debug, Args)]
pub struct InitParamsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "threshold", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value = "response", value_parser = parse_feature)]
    pub feature: FeatureSource,
    #[arg(long, default_value_t = DEFAULT_DETECT_L_NEW)]
    pub l_new: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path prefix; `.csv` and `.txt` are written.
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden width for mlp/lstm.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Matrix shape fed to the lstm, as ROWSxCOLS.
    #[arg(long, value_parser = parse_shape)]
    pub star_shape: Option<(usize, usize)>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "response", value_parser = parse_feature)]
    pub feature: FeatureSource,
    #[arg(long, default_value_t = DEFAULT_FIGURE_L_NEW)]
    pub l_new: usize,
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub stop: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UtestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// prompt, response or both.
    #[arg(long, default_value = "both")]
    pub statistic: String,
    #[arg(long, default_value_t = DEFAULT_FIGURE_L_NEW)]
    pub l_new: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: FigureKind,
    #[arg(long, default_value_t = DEFAULT_FIGURE_L_NEW)]
    pub l_new: usize,
    #[arg(long, default_value = "32x64", value_parser = parse_shape)]
    pub heatmap_shape: (usize, usize),
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long, default_value_t = 0.3)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub mean: f64,
    #[arg(long, default_value = "20x60", value_parser = parse_shape)]
    pub shape: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; CSV goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: PipelineError| e.to_string())
}

fn parse_feature(s: &str) -> std::result::Result<FeatureSource, String> {
    s.parse().map_err(|e: lrp_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<FigureKind, String> {
    s.parse().map_err(|e: PipelineError| e.to_string())
}

pub fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once('x')
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let shape = (parse(r)?, parse(c)?);
    if shape.0 == 0 || shape.1 == 0 {
        return Err(format!("shape {s} must be positive"));
    }
    Ok(shape)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(PipelineError::io(path))
}

fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out += &row.join(",");
        out.push('\n');
    }
    out
}

fn matrix_from_csv(path: &Path) -> Result<Matrix> {
    let file = std::fs::File::open(path).map_err(PipelineError::io(path))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(PipelineError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::MatrixFile {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PipelineError::MatrixFile {
            path: path.to_path_buf(),
            message: "rows have different lengths".into(),
        });
    }
    Ok(Matrix::from_vec(rows.len(), cols, rows.concat())?)
}

fn statistics(s: &str) -> Result<Vec<FeatureSource>> {
    match s {
        "prompt" => Ok(vec![FeatureSource::Prompt]),
        "response" => Ok(vec![FeatureSource::Response]),
        "both" => Ok(vec![FeatureSource::Prompt, FeatureSource::Response]),
        other => Err(PipelineError::Config(format!(
            "unknown statistic {other:?}"
        ))),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Relevance(args) => {
            let records = load_corpus(&args.corpus)?;
            let model = args.model.model()?;
            let options = RelevanceOptions {
                max_new: args.max_new,
                workers: args.workers,
                lrp: LrpConfig {
                    per_layer_normalization: args.per_layer_norm,
                    ..LrpConfig::default()
                },
                ..RelevanceOptions::default()
            };
            let run = run_relevance(&records, &model, &options, &args.out)?;
            log::info!(
                "{} matrices written to {}",
                run.entries.len(),
                args.out.display()
            );
            if !run.failures.is_empty() {
                return Err(PipelineError::Partial {
                    failed: run.failures.len(),
                    total: records.len(),
                });
            }
        }
        Command::InitParams(args) => {
            let config = args.model.config();
            let params = TransformerParams::seeded(&config, args.model.seed)?;
            let file = std::fs::File::create(&args.out).map_err(PipelineError::io(&args.out))?;
            let mut w = std::io::BufWriter::new(file);
            params.write_to(&config, &mut w)?;
            w.flush().map_err(PipelineError::io(&args.out))?;
        }
        Command::Detect(args) => {
            let items = load_labeled(&args.manifest)?;
            let mut options = DetectOptions {
                method: args.method,
                feature: args.feature,
                l_new: args.l_new,
                k: args.k,
                seed: args.seed,
                star_shape: args.star_shape.unwrap_or(DEFAULT_STAR_SHAPE),
                ..DetectOptions::default()
            };
            if let Some(h) = args.hidden {
                options.mlp.hidden = h;
                options.lstm.hidden = h;
            }
            if let Some(e) = args.epochs {
                options.mlp.epochs = e;
                options.lstm.epochs = e;
            }
            if let Some(lr) = args.lr {
                options.mlp.lr = lr;
                options.lstm.lr = lr;
            }
            options.svm.gamma = args.gamma;
            if let Some(c) = args.c {
                options.svm.c = c;
            }
            let report = run_detect(&items, &options)?;
            report.write(&args.out)?;
            print!("{}", report.to_text());
        }
        Command::Sweep(args) => {
            let items = load_labeled(&args.manifest)?;
            let grid = ThresholdGrid {
                start: args.start,
                stop: args.stop,
                step: args.step,
            };
            let report = run_sweep(&items, args.feature, args.l_new, &grid)?;
            write_text(&args.out, &report.to_csv())?;
            if let Some(best) = report.best() {
                println!(
                    "best t {:.2}: accuracy {:.2}%, f1 {:.2}% | AUC {:.4}",
                    best.t,
                    100.0 * best.metrics.accuracy,
                    100.0 * best.metrics.f1,
                    report.auc
                );
            }
        }
        Command::Utest(args) => {
            let items = load_labeled(&args.manifest)?;
            let options = UtestOptions {
                n: args.n,
                iters: args.iters,
                seed: args.seed,
                statistics: statistics(&args.statistic)?,
                l_new: args.l_new,
            };
            let report = run_utest(&items, &options)?;
            write_text(&args.out, &report.to_csv())?;
            print!("{}", report.to_csv());
        }
        Command::Figures(args) => {
            let items = load_labeled(&args.manifest)?;
            let options = FigureOptions {
                l_new: args.l_new,
                heatmap_shape: args.heatmap_shape,
            };
            emit_figure_csv(args.kind, &items, &args.out, &options)?;
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                n_samples: args.n,
                hallucination_rate: args.rate,
                delta: args.delta,
                shape: args.shape,
                sigma: args.sigma,
                base_mean: args.mean,
                seed: args.seed,
            };
            let manifest = write_dataset(&args.out, &synth_corpus(&spec)?)?;
            println!("{}", manifest.display());
        }
        Command::ExportMatrix(args) => {
            let m = matrix_from_csv(&args.input)?;
            let out = args
                .out
                .ok_or_else(|| PipelineError::Config("export-matrix needs --out".into()))?;
            export_matrix(&m, &out)?;
        }
        Command::ImportMatrix(args) => {
            let m = import_matrix(&args.input)?;
            let csv = matrix_to_csv(m.matrix());
            match args.out {
                Some(path) => write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
