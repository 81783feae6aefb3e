//! Interactive chat over a trained checkpoint.

use std::io::{BufRead, Write};

use anyhow::Result;
use kgchat::collector::{Tokenizer, WhitespaceTokenizer};
use kgchat::kb::EntityId;
use kgchat::model::DecodeMode;
use kgchat::pipeline::Responder;

use crate::trace::format_trace;

pub enum Turn {
    Reply(String),
    Quiet,
    Quit,
}

pub struct ChatSession<'a> {
    pub responder: Responder<'a>,
    pub topic: Option<EntityId>,
    pub history: Vec<Vec<String>>,
    pub trace: bool,
    pub max_len: usize,
    pub mode: DecodeMode,
    /// Token count of the history handed to the collector, one entry per model call.
    pub context_sizes: Vec<usize>,
}

impl<'a> ChatSession<'a> {
    pub fn new(responder: Responder<'a>, max_len: usize, mode: DecodeMode) -> Self {
        ChatSession { responder, topic: None, history: Vec::new(), trace: false, max_len, mode, context_sizes: Vec::new() }
    }

    /// Sets the topic film by name. Returns an explanation when it is unknown.
    pub fn set_topic(&mut self, name: &str) -> std::result::Result<(), String> {
        let kb = self.responder.kb;
        match kb.resolve(name) {
            Ok(e) => {
                self.topic = Some(e);
                self.history.clear();
                Ok(())
            }
            Err(_) => {
                let near: Vec<String> = kb.nearest_aliases(name, 5).into_iter().map(|(a, _)| a).collect();
                Err(format!("unknown topic `{name}`; closest matches: {}", near.join(", ")))
            }
        }
    }

    pub fn handle(&mut self, line: &str) -> Turn {
        let line = line.trim();
        if line.is_empty() {
            return Turn::Quiet;
        }
        if line == ":quit" {
            return Turn::Quit;
        }
        if line == ":trace" {
            self.trace = !self.trace;
            return Turn::Reply(format!("trace {}", if self.trace { "on" } else { "off" }));
        }
        if let Some(name) = line.strip_prefix(":topic") {
            return Turn::Reply(match self.set_topic(name.trim()) {
                Ok(()) => format!("topic: {}", name.trim()),
                Err(msg) => msg,
            });
        }
        if line.starts_with(':') {
            return Turn::Reply("commands: :topic <film>, :trace, :quit".into());
        }
        let Some(topic) = self.topic else {
            return Turn::Reply("no topic yet; use :topic <film>".into());
        };
        let tokens = WhitespaceTokenizer.tokenize(line);
        if tokens.is_empty() {
            return Turn::Quiet;
        }
        self.history.push(tokens);
        self.context_sizes.push(self.history.iter().map(Vec::len).sum());
        match self.responder.respond(&self.history, topic, self.max_len, self.mode) {
            Ok(reply) => {
                let mut text = reply.tokens.join(" ");
                if self.trace {
                    text.push('\n');
                    text.push_str(&format_trace(&reply.generation, &self.responder.checkpoint.vocab, &reply.knowledge, self.responder.kb));
                }
                if !reply.tokens.is_empty() {
                    self.history.push(reply.tokens);
                }
                Turn::Reply(text)
            }
            Err(e) => Turn::Reply(format!("error: {e}")),
        }
    }
}

/// Prompts, reads lines and prints replies until `:quit` or end of input.
pub fn run<R: BufRead, W: Write>(session: &mut ChatSession<'_>, input: R, mut out: W) -> Result<()> {
    write!(out, "> ")?;
    out.flush()?;
    for line in input.lines() {
        match session.handle(&line?) {
            Turn::Quit => return Ok(()),
            Turn::Quiet => {}
            Turn::Reply(text) => writeln!(out, "{text}")?,
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(())
}
