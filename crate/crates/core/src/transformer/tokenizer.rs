use super::TokenId;
use crate::error::{Error, Result};

/// Maps each UTF-8 byte to the token id of the same value.
///
/// A convenience for driving the toy model from text; token ids are the real interface.
#[derive(Debug, Clone, Copy)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size < 256 {
            return Err(Error::Config(format!(
                "byte tokenizer needs vocab_size >= 256, got {vocab_size}"
            )));
        }
        Ok(Self)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.bytes().map(TokenId::from).collect()
    }

    /// Ids above 255 have no byte and are dropped.
    pub fn decode(&self, tokens: &[TokenId]) -> String {
        let bytes: Vec<u8> = tokens
            .iter()
            .filter_map(|&t| u8::try_from(t).ok())
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_text() {
        let tok = ByteTokenizer::new(256).unwrap();
        let ids = tok.encode("héllo");
        assert_eq!(ids.len(), 6);
        assert_eq!(tok.decode(&ids), "héllo");
        assert!(ByteTokenizer::new(100).is_err());
    }
}
