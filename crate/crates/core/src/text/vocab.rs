use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Bidirectional token/id map with four reserved ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Keeps the `max_size - 4` most frequent tokens; equal counts are ordered
    /// lexicographically.
    pub fn build<'a, I, S>(corpus: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if max_size < RESERVED.len() {
            return Err(Error::Config(format!("vocabulary size {max_size} is below the 4 reserved ids")));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for stream in corpus {
            for tok in stream {
                let tok = tok.as_ref();
                if !RESERVED.contains(&tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - RESERVED.len());
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Rebuilds a vocabulary from its non-reserved tokens in id order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut v = Self {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for t in RESERVED.iter().map(|s| s.to_string()).chain(tokens) {
            if v.token_to_id.contains_key(&t) {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
            v.token_to_id.insert(t.clone(), v.id_to_token.len());
            v.id_to_token.push(t);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.id_to_token.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn unk_token() -> &'static str {
        RESERVED[UNK]
    }

    /// Non-reserved tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token[RESERVED.len()..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn frequency_order_and_reserved_ids() {
        let corpus = [toks("a b a a")];
        let v = Vocabulary::build(corpus.iter().map(Vec::as_slice), 6).unwrap();
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        // five slots leave room for a single non-reserved token
        let small = Vocabulary::build(corpus.iter().map(Vec::as_slice), 5).unwrap();
        assert_eq!(small.id("a"), 4);
        assert_eq!(small.id("b"), UNK);
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.token(BOS), "<s>");
        assert_eq!(v.token(EOS), "</s>");
    }

    #[test]
    fn truncates_to_max_size() {
        let corpus = [toks("a b c d e f g h i j")];
        let v = Vocabulary::build(corpus.iter().map(Vec::as_slice), 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.tokens(), ["a"]);
        assert!(Vocabulary::build(corpus.iter().map(Vec::as_slice), 3).is_err());
    }

    #[test]
    fn encode_decode() {
        let corpus = [toks("x y z y")];
        let v = Vocabulary::build(corpus.iter().map(Vec::as_slice), 30_000).unwrap();
        let ids = v.encode(&toks("y z x"));
        assert_eq!(v.decode(&ids), toks("y z x"));
        assert_eq!(v.encode(&toks("q")), vec![UNK]);
        let rebuilt = Vocabulary::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(rebuilt, v);
    }
}
