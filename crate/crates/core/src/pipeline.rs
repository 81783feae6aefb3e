//! End-to-end glue: from KB, lexicon and corpus to a checkpoint, and from a
//! checkpoint plus dialogue history to a response.

use crate::collector::{Collector, CollectorConfig, ContextKnowledge, ExpansionMode, PatternLexicon};
use crate::embed::KgEmbedding;
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::model::{generate, DecodeMode, Generation, Model, ModelConfig};
use crate::train::{
    build_quads, prepare_input, render, train, Checkpoint, Conversation, EpochMetrics, QuadSet, TrainConfig,
    TrainOutcome, Vocab,
};

/// Which parts of the model are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ablation {
    pub expansion: bool,
    pub attribute_attention: bool,
    pub entity_decoder: bool,
    pub coverage: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation { expansion: true, attribute_attention: true, entity_decoder: true, coverage: true }
    }
}

impl Ablation {
    pub fn expansion_mode(&self) -> ExpansionMode {
        if self.expansion {
            ExpansionMode::Filtered
        } else {
            ExpansionMode::Disabled
        }
    }

    /// The full model, then expansion, attribute attention and the entity
    /// decoder removed one after another.
    pub fn ladder() -> [(&'static str, Ablation); 4] {
        let full = Ablation::default();
        let no_2he = Ablation { expansion: false, ..full };
        let no_aae = Ablation { attribute_attention: false, ..no_2he };
        let no_ead = Ablation { entity_decoder: false, ..no_aae };
        [("full", full), ("-2HE", no_2he), ("-AAE", no_aae), ("-EAD", no_ead)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub word_dim: usize,
    pub hidden: usize,
    pub max_vocab: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape { word_dim: 300, hidden: 512, max_vocab: 25000 }
    }
}

pub fn build_vocab(convs: &[Conversation], max_size: usize) -> Result<Vocab> {
    Vocab::build(convs.iter().flat_map(|c| c.turns.iter().flatten().map(String::as_str)), max_size)
}

pub fn collector_for<'a>(kb: &'a KnowledgeBase, lexicon: &'a PatternLexicon, mode: ExpansionMode) -> Collector<'a> {
    Collector::new(kb, lexicon).with_config(CollectorConfig { mode, ..CollectorConfig::default() })
}

#[derive(Clone, Debug)]
pub struct Fitted {
    pub checkpoint: Checkpoint,
    pub outcome: TrainOutcome,
    pub train: QuadSet,
    pub held_out: QuadSet,
}

/// Builds the vocabulary and quads, initializes a model around `kg`, and trains it.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    kb: &KnowledgeBase,
    lexicon: &PatternLexicon,
    kg: &KgEmbedding,
    train_convs: &[Conversation],
    held_convs: &[Conversation],
    shape: ModelShape,
    ablation: Ablation,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Fitted> {
    cfg.validate()?;
    prepare(kb, lexicon, kg, train_convs, held_convs, shape, ablation, cfg.seed)?.train(kb, cfg, on_epoch)
}

/// An initialized model with its vocabulary and quads, not yet trained.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub model: Model,
    pub vocab: Vocab,
    pub expansion: ExpansionMode,
    pub train: QuadSet,
    pub held_out: QuadSet,
}

#[allow(clippy::too_many_arguments)]
pub fn prepare(
    kb: &KnowledgeBase,
    lexicon: &PatternLexicon,
    kg: &KgEmbedding,
    train_convs: &[Conversation],
    held_convs: &[Conversation],
    shape: ModelShape,
    ablation: Ablation,
    seed: u64,
) -> Result<Prepared> {
    let vocab = build_vocab(train_convs, shape.max_vocab)?;
    let expansion = ablation.expansion_mode();
    let collector = collector_for(kb, lexicon, expansion);
    let train = build_quads(&collector, &vocab, train_convs)?;
    let held_out = build_quads(&collector, &vocab, held_convs)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        word_dim: shape.word_dim,
        hidden: shape.hidden,
        kg_dim: kg.dim(),
        num_entities: kb.num_entities(),
        num_relations: kb.num_relations(),
        attribute_attention: ablation.attribute_attention,
        entity_decoder: ablation.entity_decoder,
        coverage: ablation.coverage,
        static_context: false,
    };
    let model = Model::init(config, Some(kg), seed)?;
    Ok(Prepared { model, vocab, expansion, train, held_out })
}

impl Prepared {
    /// Overwrites word embeddings from text vectors, one `word v1 .. vd` per
    /// line. A leading `count dim` header is skipped and words outside the
    /// vocabulary are ignored. Returns how many rows were replaced.
    pub fn load_word_vectors(&mut self, text: &str) -> Result<usize> {
        let dim = self.model.config.word_dim;
        let id = self.model.ids.word_emb;
        let mut seen = 0;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(|v| v.parse().map_err(|_| Error::parse(i + 1, format!("bad number `{v}`"))))
                .collect::<Result<_>>()?;
            if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            if values.len() != dim {
                return Err(Error::parse(i + 1, format!("expected {dim} values for `{word}`, found {}", values.len())));
            }
            if self.vocab.contains(word) {
                let row = self.vocab.id(word);
                self.model.store.get_mut(id).row_mut(row).copy_from_slice(&values);
                seen += 1;
            }
        }
        Ok(seen)
    }

    pub fn train(mut self, kb: &KnowledgeBase, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochMetrics)) -> Result<Fitted> {
        let outcome = train(&mut self.model, &self.train.quads, &self.held_out.quads, &self.vocab, kb, cfg, on_epoch)?;
        let checkpoint = Checkpoint { model: self.model, vocab: self.vocab, expansion: self.expansion };
        Ok(Fitted { checkpoint, outcome, train: self.train, held_out: self.held_out })
    }
}

/// A response with the knowledge it was conditioned on.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub knowledge: ContextKnowledge,
    pub generation: Generation,
    pub tokens: Vec<String>,
}

/// Generates responses from a checkpoint.
pub struct Responder<'a> {
    pub kb: &'a KnowledgeBase,
    pub lexicon: &'a PatternLexicon,
    pub checkpoint: &'a Checkpoint,
}

impl Responder<'_> {
    pub fn respond(&self, history: &[Vec<String>], topic: EntityId, max_len: usize, mode: DecodeMode) -> Result<Reply> {
        let collector = collector_for(self.kb, self.lexicon, self.checkpoint.expansion);
        let (x, knowledge) = prepare_input(&collector, &self.checkpoint.vocab, history, topic)?;
        let generation = generate(&self.checkpoint.model, &x, &knowledge, max_len, mode)?;
        let tokens = render(&generation.symbols, &self.checkpoint.vocab, self.kb);
        Ok(Reply { knowledge, generation, tokens })
    }
}
