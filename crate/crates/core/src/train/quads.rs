use std::collections::BTreeSet;

use super::{Conversation, Vocab};
use crate::collector::{link_spans, Collector, ContextKnowledge};
use crate::error::Result;
use crate::kb::EntityId;
use crate::model::{Symbol, EOS, SEP};

/// One supervised example: input ids, collected knowledge, and the target
/// sequence with gate labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingQuad {
    pub x: Vec<usize>,
    pub knowledge: ContextKnowledge,
    /// Target with entity mentions collapsed to single symbols, end marker last.
    pub target: Vec<Symbol>,
    /// `true` exactly at entity steps of `target`.
    pub gate: Vec<bool>,
    /// The response as plain word ids, end marker last.
    pub words: Vec<usize>,
    /// Entities mentioned in the response.
    pub gold_entities: BTreeSet<EntityId>,
    /// Response entities missing from the candidates. These stay as words in `target`.
    pub unreachable: Vec<EntityId>,
    pub response: Vec<String>,
}

impl TrainingQuad {
    pub fn is_flagged(&self) -> bool {
        !self.unreachable.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadSet {
    pub quads: Vec<TrainingQuad>,
    pub entity_mentions: usize,
    pub unreachable_mentions: usize,
}

impl QuadSet {
    /// Share of response entity mentions that were not among the candidates.
    pub fn unreachable_rate(&self) -> f64 {
        if self.entity_mentions == 0 {
            0.0
        } else {
            self.unreachable_mentions as f64 / self.entity_mentions as f64
        }
    }
}

/// Input ids (turns joined by the separator) and knowledge for a context.
pub fn prepare_input(
    collector: &Collector,
    vocab: &Vocab,
    context: &[Vec<String>],
    topic: EntityId,
) -> Result<(Vec<usize>, ContextKnowledge)> {
    let mut x = Vec::new();
    for turn in context.iter().filter(|t| !t.is_empty()) {
        if !x.is_empty() {
            x.push(SEP);
        }
        x.extend(vocab.encode(turn));
    }
    let flat: Vec<String> = context.iter().flatten().cloned().collect();
    let knowledge = collector.collect(&flat, topic)?;
    Ok((x, knowledge))
}

pub fn build_quad(collector: &Collector, vocab: &Vocab, conv: &Conversation) -> Result<TrainingQuad> {
    let kb = collector.kb;
    let topic = kb.resolve(&conv.topic)?;
    let (x, knowledge) = prepare_input(collector, vocab, conv.context(), topic)?;
    let response = conv.response().to_vec();

    let mut target = Vec::new();
    let mut gate = Vec::new();
    let mut gold = BTreeSet::new();
    let mut unreachable = Vec::new();
    let mut next = 0;
    for m in link_spans(&response, kb, false) {
        for tok in &response[next..m.start] {
            target.push(Symbol::Word(vocab.id(tok)));
            gate.push(false);
        }
        gold.insert(m.entity);
        if knowledge.candidates.contains(&m.entity) {
            target.push(Symbol::Entity(m.entity));
            gate.push(true);
        } else {
            unreachable.push(m.entity);
            for tok in &response[m.start..m.start + m.len] {
                target.push(Symbol::Word(vocab.id(tok)));
                gate.push(false);
            }
        }
        next = m.start + m.len;
    }
    for tok in &response[next..] {
        target.push(Symbol::Word(vocab.id(tok)));
        gate.push(false);
    }
    target.push(Symbol::Word(EOS));
    gate.push(false);
    let mut words = vocab.encode(&response);
    words.push(EOS);

    Ok(TrainingQuad { x, knowledge, target, gate, words, gold_entities: gold, unreachable, response })
}

/// Runs the collector over every context and aligns responses with KB aliases.
pub fn build_quads(collector: &Collector, vocab: &Vocab, convs: &[Conversation]) -> Result<QuadSet> {
    let mut quads = Vec::with_capacity(convs.len());
    let mut mentions = 0;
    let mut missing = 0;
    for c in convs {
        let q = build_quad(collector, vocab, c)?;
        mentions += q.gate.iter().filter(|&&g| g).count() + q.unreachable.len();
        missing += q.unreachable.len();
        quads.push(q);
    }
    Ok(QuadSet { quads, entity_mentions: mentions, unreachable_mentions: missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collector::PatternLexicon;
    use crate::kb::KnowledgeBase;
    use crate::train::parse_corpus;

    fn setup() -> (KnowledgeBase, PatternLexicon) {
        let kb = KnowledgeBase::parse(
            "T\tCrazy Stupid Love\tactBy\tRyan Gosling\n\
             T\tCrazy Stupid Love\tactBy\tEmma Stone\n\
             T\tLa La Land\tactBy\tRyan Gosling\n\
             T\tDrive\tdirectBy\tNicolas Refn\n",
        )
        .unwrap();
        (kb, PatternLexicon::parse("actBy\tactor\nactBy\tstarring\n").unwrap())
    }

    #[test]
    fn entity_steps_get_gate_labels() {
        let (kb, lex) = setup();
        let convs = parse_corpus(
            r#"{"topic": "Crazy Stupid Love", "turns": ["who is the actor", "it's Ryan Gosling"]}
{"topic": "Crazy Stupid Love", "turns": ["nice film", "i agree"]}
{"topic": "Crazy Stupid Love", "turns": ["who is the actor", "nicolas refn maybe"]}"#,
        )
        .unwrap();
        let words = convs.iter().flat_map(|c| c.turns.iter().flatten().map(String::as_str));
        let vocab = Vocab::build(words, 100).unwrap();
        let collector = Collector::new(&kb, &lex);
        let set = build_quads(&collector, &vocab, &convs).unwrap();

        let ryan = kb.entity_by_name("Ryan Gosling").unwrap();
        let q = &set.quads[0];
        assert_eq!(q.target, vec![Symbol::Word(vocab.id("its")), Symbol::Entity(ryan), Symbol::Word(EOS)]);
        assert_eq!(q.gate, vec![false, true, false]);
        assert_eq!(q.words.len(), 4);
        assert!(set.quads[1].gate.iter().all(|&g| !g));

        let refn = kb.entity_by_name("Nicolas Refn").unwrap();
        assert_eq!(set.quads[2].unreachable, vec![refn]);
        assert!(set.quads[2].gate.iter().all(|&g| !g));
        assert_eq!(set.entity_mentions, 2);
        assert_eq!(set.unreachable_rate(), 0.5);
    }

    #[test]
    fn turns_are_separated() {
        let (kb, lex) = setup();
        let vocab = Vocab::build(["a", "b"], 10).unwrap();
        let collector = Collector::new(&kb, &lex);
        let topic = kb.entity_by_name("Drive").unwrap();
        let ctx = vec![vec!["a".to_string()], vec![], vec!["b".to_string()]];
        let (x, k) = prepare_input(&collector, &vocab, &ctx, topic).unwrap();
        assert_eq!(x, vec![vocab.id("a"), SEP, vocab.id("b")]);
        assert_eq!(k.topic, topic);
    }
}
