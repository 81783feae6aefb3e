use std::fmt::Write as _;

use kgchat::collector::ContextKnowledge;
use kgchat::kb::KnowledgeBase;
use kgchat::model::{Generation, Symbol};
use kgchat::train::Vocab;

fn symbol(s: Symbol, vocab: &Vocab, kb: &KnowledgeBase) -> String {
    match s {
        Symbol::Word(w) => vocab.word(w).to_string(),
        Symbol::Entity(e) => format!("[{}]", kb.name(e)),
    }
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
}

/// One line per decoding step: `t`, gate, top vocabulary words, entity
/// attention, coverage and the chosen symbol.
pub fn format_trace(gen: &Generation, vocab: &Vocab, knowledge: &ContextKnowledge, kb: &KnowledgeBase) -> String {
    let names: Vec<&str> = knowledge.candidates.iter().map(|&e| kb.name(e)).collect();
    let mut s = String::new();
    let _ = writeln!(s, "candidates: {}", names.join(" | "));
    for step in &gen.trace {
        let top: Vec<String> = step.top_vocab.iter().map(|&(w, p)| format!("{}:{p:.4}", vocab.word(w))).collect();
        let _ = writeln!(
            s,
            "t={} g={:.4} top=[{}] beta=[{}] a=[{}] -> {}",
            step.t,
            step.gate,
            top.join(" "),
            list(&step.beta),
            list(&step.coverage),
            symbol(step.choice, vocab, kb)
        );
    }
    s.pop();
    s
}
