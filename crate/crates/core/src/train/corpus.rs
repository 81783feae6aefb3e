use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collector::{Tokenizer, WhitespaceTokenizer};
use crate::error::{Error, Result};

/// One conversation; the last turn is the response to learn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conversation {
    pub topic: String,
    /// Normalized tokens per turn.
    pub turns: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTurn {
    Text(String),
    Tokens(Vec<String>),
}

#[derive(Deserialize)]
struct RawConversation {
    topic: String,
    turns: Vec<RawTurn>,
}

#[derive(Serialize)]
struct OutConversation<'a> {
    topic: &'a str,
    turns: Vec<String>,
}

impl Conversation {
    pub fn context(&self) -> &[Vec<String>] {
        &self.turns[..self.turns.len() - 1]
    }

    pub fn response(&self) -> &[String] {
        &self.turns[self.turns.len() - 1]
    }

    /// Context turns flattened into one token sequence.
    pub fn context_tokens(&self) -> Vec<String> {
        self.context().iter().flatten().cloned().collect()
    }
}

/// Parses JSON lines `{"topic": ..., "turns": [...]}`. Turns may be strings or
/// token arrays. Blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<Conversation>> {
    parse_records(text, true)
}

/// Like [`parse_corpus`] but accepts an empty last turn, as produced when a
/// model ends its response immediately.
pub fn parse_generated(text: &str) -> Result<Vec<Conversation>> {
    parse_records(text, false)
}

fn parse_records(text: &str, require_response: bool) -> Result<Vec<Conversation>> {
    let tok = WhitespaceTokenizer;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let raw: RawConversation = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if raw.turns.len() < 2 {
            return Err(Error::parse(i + 1, "a conversation needs at least one context turn and a response"));
        }
        let turns: Vec<Vec<String>> = raw
            .turns
            .into_iter()
            .map(|t| match t {
                RawTurn::Text(s) => tok.tokenize(&s),
                RawTurn::Tokens(ts) => tok.tokenize(&ts.join(" ")),
            })
            .collect();
        if require_response && turns.last().is_some_and(Vec::is_empty) {
            return Err(Error::parse(i + 1, "empty response turn"));
        }
        if turns[..turns.len() - 1].iter().all(Vec::is_empty) {
            return Err(Error::parse(i + 1, "empty context"));
        }
        out.push(Conversation { topic: raw.topic, turns });
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_corpus(&text)
}

/// Writes one JSON object per line with space-joined turns.
pub fn write_corpus<W: Write>(convs: &[Conversation], mut out: W) -> Result<()> {
    for c in convs {
        let rec = OutConversation { topic: &c.topic, turns: c.turns.iter().map(|t| t.join(" ")).collect() };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
