use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::Vocab;
use crate::collector::ExpansionMode;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::ParameterStore;

const MAGIC: &str = "KGCHAT-CHECKPOINT 1";

/// A trained model with the vocabulary it was trained on and the expansion
/// mode its knowledge was collected with.
///
/// Text layout: magic line, `key=value` config lines, `VOCAB <n>` and one word
/// per line, then the parameter archive.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocab,
    pub expansion: ExpansionMode,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{MAGIC}")?;
        for (k, v) in self.model.config.to_pairs() {
            writeln!(out, "{k}={v}")?;
        }
        writeln!(out, "expansion={}", self.expansion.as_str())?;
        writeln!(out, "VOCAB {}", self.vocab.len())?;
        for w in self.vocab.words() {
            writeln!(out, "{w}")?;
        }
        self.model.store.write_to(&mut out)?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Checkpoint> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .peekable();
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(Error::parse(1, "not a checkpoint file")),
        }
        let mut pairs = Vec::new();
        let vocab_len = loop {
            let (n, line) = lines.next().ok_or_else(|| Error::parse(0, "checkpoint ends before the vocabulary"))?;
            if let Some(count) = line.strip_prefix("VOCAB ") {
                break count.trim().parse::<usize>().map_err(|_| Error::parse(n, "bad vocabulary size"))?;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(n, "expected `key=value`"))?;
            pairs.push((k.to_string(), v.to_string()));
        };
        let mut words = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let (_, w) = lines.next().ok_or_else(|| Error::parse(0, "truncated vocabulary"))?;
            words.push(w);
        }
        let vocab = Vocab::from_words(words)?;
        let config = ModelConfig::from_pairs(&pairs)?;
        let expansion = pairs
            .iter()
            .find(|(k, _)| k == "expansion")
            .and_then(|(_, v)| ExpansionMode::parse(v))
            .ok_or_else(|| Error::Config("checkpoint lacks a valid `expansion`".into()))?;
        if config.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "checkpoint vocabulary has {} words, model expects {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let store = ParameterStore::read_from(&mut lines)?;
        Ok(Checkpoint { model: Model::from_store(config, store)?, vocab, expansion })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::read(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::tiny_config;

    #[test]
    fn round_trip_is_exact() {
        let vocab = Vocab::build("w x y z".split(' '), 9).unwrap();
        let model = Model::init(tiny_config(), None, 12).unwrap();
        let ck = Checkpoint { model, vocab, expansion: ExpansionMode::Disabled };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(Checkpoint::read("hello\n".as_bytes()), Err(Error::Parse { .. })));
        let vocab = Vocab::build("w x".split(' '), 9).unwrap();
        let ck = Checkpoint { model: Model::init(tiny_config(), None, 1).unwrap(), vocab, expansion: ExpansionMode::Filtered };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read(buf.as_slice()).is_err());
    }
}
