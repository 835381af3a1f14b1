//! Relevance extraction over a corpus: prompt assembly, decoding, LRP, export.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use lrp_core::lrp::{build_relevance_matrix, LrpConfig, RelevanceMatrix};
use lrp_core::transformer::{assemble_prompt, ByteTokenizer, TokenId, Transformer};

use crate::corpus::CorpusRecord;
use crate::dataset::{write_manifest, ManifestEntry, MANIFEST_NAME};
use crate::error::{PipelineError, Result};
use crate::matrix_io::export_matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelevanceOptions {
    /// Longest generated response when a record has none.
    pub max_new: usize,
    pub stop_token: Option<TokenId>,
    pub workers: usize,
    pub lrp: LrpConfig,
}

impl Default for RelevanceOptions {
    fn default() -> Self {
        Self {
            max_new: 32,
            stop_token: Some(TokenId::from(b'\n')),
            workers: 1,
            lrp: LrpConfig::default(),
        }
    }
}

/// Relevance matrix and decoded response of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRelevance {
    pub matrix: RelevanceMatrix,
    pub response: String,
}

pub fn sample_relevance(
    model: &Transformer,
    tokenizer: &ByteTokenizer,
    record: &CorpusRecord,
    options: &RelevanceOptions,
) -> Result<SampleRelevance> {
    let prompt = assemble_prompt(&record.prompt_parts(tokenizer))?;
    let generation = match &record.response {
        Some(text) => model.forced_decode(&prompt.tokens, &tokenizer.encode(text))?,
        None => model.greedy_decode(&prompt.tokens, options.max_new, options.stop_token)?,
    };
    if generation.traces.is_empty() {
        return Err(PipelineError::Config(format!(
            "record {} produced an empty response",
            record.id
        )));
    }
    Ok(SampleRelevance {
        matrix: build_relevance_matrix(&generation.traces, prompt.len(), &options.lrp)?,
        response: tokenizer.decode(&generation.response),
    })
}

#[derive(Debug)]
pub struct RelevanceRun {
    pub entries: Vec<ManifestEntry>,
    /// `(record id, error)` for every record that failed.
    pub failures: Vec<(String, String)>,
}

/// Computes and exports one matrix per record into `out_dir`, then writes the manifest.
///
/// Records are processed by a pool of `options.workers` threads; files are named by
/// record position, and the manifest lists successes in corpus order. A failing
/// record is logged and skipped.
pub fn run_relevance(
    records: &[CorpusRecord],
    model: &Transformer,
    options: &RelevanceOptions,
    out_dir: &Path,
) -> Result<RelevanceRun> {
    let tokenizer = ByteTokenizer::new(model.config().vocab_size)?;
    std::fs::create_dir_all(out_dir).map_err(PipelineError::io(out_dir))?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ManifestEntry>>>> =
        Mutex::new((0..records.len()).map(|_| None).collect());
    let process = |i: usize| -> Result<ManifestEntry> {
        let record = &records[i];
        let sample = sample_relevance(model, &tokenizer, record, options)?;
        let file = format!("sample_{i:05}.lrpm");
        export_matrix(sample.matrix.matrix(), &out_dir.join(&file))?;
        Ok(ManifestEntry {
            id: record.id.clone(),
            file,
            label: record.label,
            prompt_len: sample.matrix.prompt_len(),
            response_len: sample.matrix.response_len(),
            response: sample.response,
        })
    };
    std::thread::scope(|scope| {
        for _ in 0..options.workers.clamp(1, records.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= records.len() {
                    break;
                }
                let outcome = process(i);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (record, outcome) in records
        .iter()
        .zip(results.into_inner().expect("workers joined"))
    {
        match outcome.expect("every index processed") {
            Ok(entry) => entries.push(entry),
            Err(e) => {
                log::error!("sample {}: {e}", record.id);
                failures.push((record.id.clone(), e.to_string()));
            }
        }
    }
    write_manifest(&out_dir.join(MANIFEST_NAME), &entries)?;
    Ok(RelevanceRun { entries, failures })
}
