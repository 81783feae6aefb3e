use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{BOS, EOS, PAD, SEP, UNK};

const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep>"];

/// Word ↔ id table with the reserved tokens at ids `0..5`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps the `max_size − 5` most frequent words, ties broken alphabetically.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Vocab> {
        if max_size <= RESERVED.len() {
            return Err(Error::Config(format!("vocabulary size {max_size} leaves no room for words")));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            if !RESERVED.contains(&t) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(max_size - RESERVED.len());
        Vocab::from_words(RESERVED.iter().copied().chain(ranked.into_iter().map(|(w, _)| w)).map(str::to_string).collect())
    }

    /// Rebuilds from an ordered word list that starts with the reserved tokens.
    pub fn from_words(words: Vec<String>) -> Result<Vocab> {
        if words.len() < RESERVED.len() || words.iter().zip(RESERVED).any(|(w, r)| w != r) {
            return Err(Error::Config("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary entry `{w}`")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        Ok(Vocab { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Id of `word`, or the unknown-word id.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        self.words.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn is_reserved(id: usize) -> bool {
        matches!(id, PAD | BOS | EOS | UNK | SEP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_with_alphabetical_ties() {
        let v = Vocab::build("b a c a b d".split(' '), 8).unwrap();
        assert_eq!(&v.words()[5..], &["a", "b", "c"]);
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("d"), UNK);
        assert_eq!(v.word(EOS), "<eos>");
    }

    #[test]
    fn reserved_tokens_required() {
        assert!(Vocab::from_words(vec!["x".into()]).is_err());
        assert!(Vocab::build(["a"], 5).is_err());
        let v = Vocab::build(["<sep>", "a"], 10).unwrap();
        assert_eq!(v.len(), 6);
    }
}
