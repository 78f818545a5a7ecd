use std::collections::HashMap;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::tokenize;

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const START: TokenId = 1;
pub const END: TokenId = 2;
pub const UNK: TokenId = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from an explicit token list whose first four
    /// entries must be the special tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..4].iter().zip(SPECIALS).any(|(a, b)| a != b) {
            return Err(Error::Data(format!(
                "vocabulary must start with {}",
                SPECIALS.join(", ")
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Index of `token`, or `<unk>` when absent.
    pub fn index(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Tokenizes a raw caption and maps words to indices (no start/end markers).
    pub fn encode(&self, raw: &str) -> Vec<TokenId> {
        tokenize(raw).iter().map(|t| self.index(t)).collect()
    }

    /// Words for `ids`, skipping special tokens and stopping at `<end>`.
    pub fn words(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != END)
            .filter(|&&i| i >= SPECIALS.len())
            .filter_map(|&i| self.token(i).map(str::to_string))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        self.words(ids).join(" ")
    }
}

/// Vocabulary over the train split: tokens seen at least `min_count` times,
/// ordered by descending count then ascending text.
pub fn build_vocab(ds: &Dataset, min_count: usize) -> Result<Vocab> {
    let train = ds.split(Split::Train);
    if train.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty train split".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for item in train {
        for cap in &item.captions {
            for t in tokenize(cap) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count.max(1) && !SPECIALS.contains(&t.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Vocab::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::super::{DatasetItem, Split};
    use super::*;
    use std::path::PathBuf;

    fn ds(caps: &[(&str, Split)]) -> Dataset {
        Dataset {
            image_root: PathBuf::new(),
            items: caps
                .iter()
                .map(|(c, s)| DatasetItem {
                    filename: "x".into(),
                    split: *s,
                    captions: vec![c.to_string()],
                })
                .collect(),
        }
    }

    #[test]
    fn ordering_and_threshold() {
        let d = ds(&[
            ("road road road b a", Split::Train),
            ("road road a b c", Split::Train),
            ("zzz zzz zzz", Split::Test),
        ]);
        let v = build_vocab(&d, 2).unwrap();
        assert_eq!(&v.tokens()[4..], ["road", "a", "b"]);
        assert_eq!(v.index("c"), UNK);
        assert_eq!(v.index("zzz"), UNK);
        assert_eq!(v.index("<end>"), END);
        for i in 0..v.len() {
            assert_eq!(v.index(v.token(i).unwrap()), i);
        }
    }

    #[test]
    fn empty_train_split() {
        let d = ds(&[("a", Split::Val)]);
        assert!(matches!(build_vocab(&d, 1), Err(Error::Data(_))));
    }

    #[test]
    fn encode_decode() {
        let v = Vocab::from_tokens(
            ["<pad>", "<start>", "<end>", "<unk>", "a", "tank"]
                .map(String::from)
                .to_vec(),
        )
        .unwrap();
        assert_eq!(v.encode("A tank, boat"), vec![4, 5, UNK]);
        assert_eq!(v.decode(&[START, 4, UNK, 5, END, 4]), "a tank");
    }

    #[test]
    fn from_tokens_validation() {
        assert!(Vocab::from_tokens(vec!["a".into()]).is_err());
        let dup = ["<pad>", "<start>", "<end>", "<unk>", "a", "a"].map(String::from).to_vec();
        assert!(Vocab::from_tokens(dup).is_err());
    }
}
