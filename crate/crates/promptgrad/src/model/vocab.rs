//! Character-level vocabulary with a reserved end-of-sequence token.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Symbol used for the reserved end-of-sequence token. It is never produced
/// by `tokenize`, so character round-trips are unambiguous.
pub const EOS_SYMBOL: &str = "<eos>";

/// Ordered list of token strings with dense ids `0..V`.
///
/// Entries are single characters except the reserved EOS token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    by_char: HashMap<char, usize>,
    eos_id: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from the unique characters of a corpus, in
    /// sorted order, with EOS reserved at id 0.
    pub fn from_corpus(text: &str) -> Self {
        let mut chars: Vec<char> = {
            let mut set: Vec<char> = text.chars().collect();
            set.sort_unstable();
            set.dedup();
            set
        };
        chars.retain(|c| !c.is_control() || *c == '\n');
        let mut tokens = vec![EOS_SYMBOL.to_string()];
        tokens.extend(chars.iter().map(|c| c.to_string()));
        Self::from_tokens(tokens, 0).expect("corpus-derived vocabulary is well-formed")
    }

    /// Builds a vocabulary from explicit token strings (deserialization
    /// path). Multi-character entries are reserved tokens and never match
    /// during tokenization.
    pub fn from_tokens(tokens: Vec<String>, eos_id: usize) -> Result<Self> {
        if eos_id >= tokens.len() {
            return Err(Error::Index {
                index: eos_id,
                limit: tokens.len(),
            });
        }
        let mut by_char = HashMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            let mut chars = tok.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if by_char.insert(c, id).is_some() {
                    return Err(Error::Parse(format!("duplicate vocabulary entry {tok:?}")));
                }
            }
        }
        Ok(Vocabulary {
            tokens,
            by_char,
            eos_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> usize {
        self.eos_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::Index {
                index: id,
                limit: self.tokens.len(),
            })
    }

    /// Maps text to token ids, one per character. Unknown symbols report
    /// the character and its offset.
    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = Vec::with_capacity(text.len());
        for (offset, c) in text.chars().enumerate() {
            match self.by_char.get(&c) {
                Some(&id) => ids.push(id),
                None => return Err(Error::Tokenize { symbol: c, offset }),
            }
        }
        Ok(ids)
    }

    /// Inverse of `tokenize` for character tokens; reserved tokens render
    /// as their symbolic names.
    pub fn detokenize(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::with_capacity(ids.len());
        for &id in ids {
            out.push_str(self.token(id)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_tokenizes_to_empty() {
        let v = Vocabulary::from_corpus("ab");
        assert_eq!(v.tokenize("").unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn direct_lookup() {
        let v = Vocabulary::from_tokens(vec!["a".into(), "b".into()], 0).unwrap();
        assert_eq!(v.tokenize("ab").unwrap(), vec![0, 1]);
    }

    #[test]
    fn unknown_symbol_reports_offset() {
        let v = Vocabulary::from_corpus("a");
        let err = v.tokenize("aé").unwrap_err();
        match err {
            Error::Tokenize { symbol, offset } => {
                assert_eq!(symbol, 'é');
                assert_eq!(offset, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn round_trip_over_corpus_text() {
        let corpus = "the quick brown fox 0123!?";
        let v = Vocabulary::from_corpus(corpus);
        let ids = v.tokenize(corpus).unwrap();
        assert_eq!(v.detokenize(&ids).unwrap(), corpus);
    }

    #[test]
    fn eos_reserved_and_never_tokenized() {
        let v = Vocabulary::from_corpus("abc");
        assert_eq!(v.eos_id(), 0);
        assert_eq!(v.token(0).unwrap(), EOS_SYMBOL);
        for id in v.tokenize("abc").unwrap() {
            assert_ne!(id, v.eos_id());
        }
    }

    #[test]
    fn ids_are_dense() {
        let v = Vocabulary::from_corpus("cba");
        let ids = v.tokenize("abc").unwrap();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3]);
        assert_eq!(v.len(), 4);
    }
}
