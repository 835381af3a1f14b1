use super::TokenId;
use crate::error::{Error, Result};

/// One element of a prompt template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplatePiece {
    Token(TokenId),
    Context,
    Question,
}

/// The retrieved context, the question and the template that joins them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptParts {
    pub context: Vec<TokenId>,
    pub question: Vec<TokenId>,
    pub template: Vec<TemplatePiece>,
}

/// Where an assembled prompt position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Context,
    Question,
    Template,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledPrompt {
    pub tokens: Vec<TokenId>,
    /// `segments[i]` is the origin of `tokens[i]`.
    pub segments: Vec<Segment>,
}

impl AssembledPrompt {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn positions(&self, segment: Segment) -> Vec<usize> {
        self.segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| (*s == segment).then_some(i))
            .collect()
    }
}

/// Splices context and question into the template at their placeholders.
pub fn assemble_prompt(parts: &PromptParts) -> Result<AssembledPrompt> {
    let count = |piece: TemplatePiece| parts.template.iter().filter(|p| **p == piece).count();
    for (piece, name) in [
        (TemplatePiece::Context, "context"),
        (TemplatePiece::Question, "question"),
    ] {
        match count(piece) {
            1 => {}
            0 => return Err(Error::Format(format!("template has no {name} placeholder"))),
            n => {
                return Err(Error::Format(format!(
                    "template has {n} {name} placeholders, expected one"
                )))
            }
        }
    }
    let mut tokens =
        Vec::with_capacity(parts.template.len() + parts.context.len() + parts.question.len());
    let mut segments = Vec::with_capacity(tokens.capacity());
    for piece in &parts.template {
        match piece {
            TemplatePiece::Token(t) => {
                tokens.push(*t);
                segments.push(Segment::Template);
            }
            TemplatePiece::Context => {
                tokens.extend(&parts.context);
                segments.extend(std::iter::repeat_n(Segment::Context, parts.context.len()));
            }
            TemplatePiece::Question => {
                tokens.extend(&parts.question);
                segments.extend(std::iter::repeat_n(Segment::Question, parts.question.len()));
            }
        }
    }
    Ok(AssembledPrompt { tokens, segments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use TemplatePiece::*;

    const T1: TokenId = 100;
    const T2: TokenId = 101;

    #[test]
    fn splices_context_and_question() {
        let parts = PromptParts {
            context: vec![1, 2],
            question: vec![3],
            template: vec![Token(T1), Context, Question, Token(T2)],
        };
        let p = assemble_prompt(&parts).unwrap();
        assert_eq!(p.tokens, vec![T1, 1, 2, 3, T2]);
        assert_eq!(p.positions(Segment::Context), vec![1, 2]);
        assert_eq!(p.positions(Segment::Question), vec![3]);
        assert_eq!(p.positions(Segment::Template), vec![0, 4]);
    }

    #[test]
    fn empty_context_is_allowed() {
        let parts = PromptParts {
            context: vec![],
            question: vec![3],
            template: vec![Token(T1), Context, Question, Token(T2)],
        };
        assert_eq!(assemble_prompt(&parts).unwrap().tokens, vec![T1, 3, T2]);
    }

    #[test]
    fn missing_or_duplicate_placeholders_fail() {
        let missing = PromptParts {
            context: vec![1],
            question: vec![2],
            template: vec![Token(T1), Question],
        };
        assert!(matches!(assemble_prompt(&missing), Err(Error::Format(_))));
        let dup = PromptParts {
            context: vec![1],
            question: vec![2],
            template: vec![Context, Question, Question],
        };
        assert!(matches!(assemble_prompt(&dup), Err(Error::Format(_))));
    }
}
