//! JSON-lines corpus of RAG samples.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use lrp_core::transformer::{ByteTokenizer, PromptParts, TemplatePiece};
use serde_json::{Map, Value};

use crate::error::{PipelineError, Result};

pub const CONTEXT_MARKER: &str = "{C}";
pub const QUESTION_MARKER: &str = "{Q}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub context: String,
    pub question: String,
    /// Prompt text with one `{C}` and one `{Q}` marker.
    pub template: String,
    /// Generated by the model when absent.
    pub response: Option<String>,
    /// `true` = hallucinated.
    pub label: Option<bool>,
}

impl CorpusRecord {
    /// Tokenised prompt pieces; the template's literal text is split into byte tokens.
    pub fn prompt_parts(&self, tokenizer: &ByteTokenizer) -> PromptParts {
        let mut template = Vec::new();
        let mut rest = self.template.as_str();
        while !rest.is_empty() {
            let next = [
                (CONTEXT_MARKER, TemplatePiece::Context),
                (QUESTION_MARKER, TemplatePiece::Question),
            ]
            .into_iter()
            .filter_map(|(m, piece)| rest.find(m).map(|at| (at, m.len(), piece)))
            .min_by_key(|&(at, _, _)| at);
            match next {
                Some((at, len, piece)) => {
                    template.extend(
                        tokenizer
                            .encode(&rest[..at])
                            .into_iter()
                            .map(TemplatePiece::Token),
                    );
                    template.push(piece);
                    rest = &rest[at + len..];
                }
                None => {
                    template.extend(tokenizer.encode(rest).into_iter().map(TemplatePiece::Token));
                    rest = "";
                }
            }
        }
        PromptParts {
            context: tokenizer.encode(&self.context),
            question: tokenizer.encode(&self.question),
            template,
        }
    }
}

fn field_error(source_name: &str, line: usize, message: String) -> PipelineError {
    PipelineError::Corpus {
        source_name: source_name.to_string(),
        line,
        message,
    }
}

fn parse_record(obj: &Map<String, Value>, source_name: &str, line: usize) -> Result<CorpusRecord> {
    let err = |m: String| field_error(source_name, line, m);
    let text = |name: &str| -> Result<String> {
        match obj.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) if name == "id" => Ok(n.to_string()),
            Some(_) => Err(err(format!("field \"{name}\" must be a string"))),
            None => Err(err(format!("missing required field \"{name}\""))),
        }
    };
    let record = CorpusRecord {
        id: text("id")?,
        context: text("context")?,
        question: text("question")?,
        template: text("template")?,
        response: match obj.get("response") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(err("field \"response\" must be a string".into())),
        },
        label: match obj.get("label") {
            None | Some(Value::Null) => None,
            Some(Value::Bool(b)) => Some(*b),
            Some(Value::Number(n)) if n.as_u64() == Some(0) || n.as_u64() == Some(1) => {
                Some(n.as_u64() == Some(1))
            }
            Some(_) => return Err(err("field \"label\" must be a boolean".into())),
        },
    };
    for marker in [CONTEXT_MARKER, QUESTION_MARKER] {
        let n = record.template.matches(marker).count();
        if n != 1 {
            return Err(err(format!(
                "field \"template\" must contain {marker} exactly once, found {n}"
            )));
        }
    }
    Ok(record)
}

/// Parses one JSON object per non-blank line; errors carry 1-based line numbers.
pub fn parse_corpus<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<CorpusRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| field_error(source_name, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| field_error(source_name, line_no, format!("invalid JSON: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(field_error(
                source_name,
                line_no,
                "expected a JSON object".into(),
            ));
        };
        records.push(parse_record(&obj, source_name, line_no)?);
    }
    Ok(records)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = File::open(path).map_err(PipelineError::io(path))?;
    parse_corpus(BufReader::new(file), &path.display().to_string())
}

/// Serialises a record back to one JSON line (optional fields omitted when absent).
pub fn record_to_json(record: &CorpusRecord) -> String {
    let mut obj = Map::new();
    obj.insert("id".into(), Value::String(record.id.clone()));
    obj.insert("context".into(), Value::String(record.context.clone()));
    obj.insert("question".into(), Value::String(record.question.clone()));
    obj.insert("template".into(), Value::String(record.template.clone()));
    if let Some(r) = &record.response {
        obj.insert("response".into(), Value::String(r.clone()));
    }
    if let Some(l) = record.label {
        obj.insert("label".into(), Value::Bool(l));
    }
    Value::Object(obj).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use lrp_core::transformer::assemble_prompt;

    fn parse(text: &str) -> Result<Vec<CorpusRecord>> {
        parse_corpus(text.as_bytes(), "test.jsonl")
    }

    #[test]
    fn minimal_record() {
        let r =
            parse(r#"{"id":"1","context":"c","question":"q","template":"{C} {Q}","label":true}"#)
                .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].label, Some(true));
        assert_eq!(r[0].response, None);
    }

    #[test]
    fn missing_question_names_field_and_line() {
        let e = parse(r#"{"id":"1","context":"c","template":"{C} {Q}"}"#).unwrap_err();
        let msg = e.to_string();
        assert!(
            msg.contains("line 1") && msg.contains("\"question\""),
            "{msg}"
        );
    }

    #[test]
    fn errors_report_the_offending_line() {
        let text = concat!(
            r#"{"id":"1","context":"c","question":"q","template":"{C}{Q}"}"#,
            "\n\n",
            r#"{"id":"2","context":"c","question":"q","template":"{C}"}"#
        );
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("{Q}"), "{msg}");
        assert!(parse("not json")
            .unwrap_err()
            .to_string()
            .contains("line 1"));
        assert!(parse(
            r#"{"id":"1","context":"c","question":"q","template":"{C}{Q}","label":"yes"}"#
        )
        .is_err());
    }

    #[test]
    fn roundtrip_through_json() {
        let rec = CorpusRecord {
            id: "x\"1".into(),
            context: "ctx".into(),
            question: "why?".into(),
            template: "Q: {Q}\nC: {C}\nA:".into(),
            response: Some("because".into()),
            label: Some(false),
        };
        assert_eq!(parse(&record_to_json(&rec)).unwrap(), vec![rec]);
    }

    #[test]
    fn template_text_becomes_tokens() {
        let rec = CorpusRecord {
            id: "1".into(),
            context: "ab".into(),
            question: "c".into(),
            template: "<{Q}|{C}>".into(),
            response: None,
            label: None,
        };
        let tok = ByteTokenizer::new(256).unwrap();
        let prompt = assemble_prompt(&rec.prompt_parts(&tok)).unwrap();
        assert_eq!(tok.decode(&prompt.tokens), "<c|ab>");
    }
}
