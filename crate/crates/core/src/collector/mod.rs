//! Contextual knowledge collection: attribute detection, entity linking and
//! attribute-constrained graph expansion around a topic film.

mod expand;
mod lexicon;
mod link;
mod text;

use std::collections::BTreeSet;
use std::fmt::Write as _;

pub use expand::{expand, expand_within};
pub use lexicon::{detect_attributes, PatternLexicon};
pub use link::{link_entities, link_spans, Mention};
pub use text::{is_segment_separator, normalize, Tokenizer, WhitespaceTokenizer};

use crate::embed::KgEmbedding;
use crate::error::Result;
use crate::kb::{EntityId, KnowledgeBase, RelationId};

/// How candidate entities beyond the seeds are gathered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExpansionMode {
    /// Follow only the detected attributes.
    #[default]
    Filtered,
    /// Follow every content relation regardless of what was detected.
    Unfiltered,
    /// Candidates are the seeds alone.
    Disabled,
}

impl ExpansionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpansionMode::Filtered => "filtered",
            ExpansionMode::Unfiltered => "unfiltered",
            ExpansionMode::Disabled => "disabled",
        }
    }

    pub fn parse(s: &str) -> Option<ExpansionMode> {
        match s {
            "filtered" => Some(ExpansionMode::Filtered),
            "unfiltered" => Some(ExpansionMode::Unfiltered),
            "disabled" => Some(ExpansionMode::Disabled),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CollectorConfig {
    pub hops: usize,
    pub mode: ExpansionMode,
    /// Linking and expansion stay inside this many hops of the topic.
    /// `None` uses the whole graph.
    pub subgraph_radius: Option<usize>,
    /// Start expansion from the mentioned entities only, leaving out the topic.
    pub expand_from_mentions_only: bool,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        CollectorConfig {
            hops: 2,
            mode: ExpansionMode::Filtered,
            subgraph_radius: Some(2),
            expand_from_mentions_only: false,
        }
    }
}

/// Knowledge gathered for one conversation context.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextKnowledge {
    pub topic: EntityId,
    /// Detected attributes, ascending.
    pub relations: Vec<RelationId>,
    /// Entities linked in the input, ascending.
    pub mentioned: Vec<EntityId>,
    /// Mentioned entities plus the topic, ascending.
    pub seeds: Vec<EntityId>,
    /// Entities added by expansion, by hop then id.
    pub expanded: Vec<EntityId>,
    /// Seeds followed by expanded entities. This is the decoder's candidate list.
    pub candidates: Vec<EntityId>,
    /// Embedding rows for `relations`, when an embedding was supplied.
    pub relation_vectors: Vec<Vec<f64>>,
    /// Embedding rows for `candidates`, when an embedding was supplied.
    pub candidate_vectors: Vec<Vec<f64>>,
}

impl ContextKnowledge {
    pub fn candidate_index(&self, e: EntityId) -> Option<usize> {
        self.candidates.iter().position(|&c| c == e)
    }

    /// Two-line rendering: `R: ...` then `E: ...`.
    pub fn render(&self, kb: &KnowledgeBase) -> String {
        let rels: Vec<String> = self.relations.iter().map(|r| r.name()).collect();
        let ents: Vec<&str> = self.candidates.iter().map(|&e| kb.name(e)).collect();
        let mut s = String::new();
        let _ = writeln!(s, "R: {{{}}}", rels.join(", "));
        let _ = writeln!(s, "E: [{}]", ents.join(", "));
        s
    }
}

/// Bundles the KB, lexicon and settings needed to run collection.
pub struct Collector<'a> {
    pub kb: &'a KnowledgeBase,
    pub lexicon: &'a PatternLexicon,
    pub embedding: Option<&'a KgEmbedding>,
    pub config: CollectorConfig,
}

impl<'a> Collector<'a> {
    pub fn new(kb: &'a KnowledgeBase, lexicon: &'a PatternLexicon) -> Self {
        Collector { kb, lexicon, embedding: None, config: CollectorConfig::default() }
    }

    pub fn with_embedding(mut self, emb: &'a KgEmbedding) -> Self {
        self.embedding = Some(emb);
        self
    }

    pub fn with_config(mut self, config: CollectorConfig) -> Self {
        self.config = config;
        self
    }

    /// Runs detection, linking and expansion over already-normalized tokens.
    pub fn collect(&self, tokens: &[String], topic: EntityId) -> Result<ContextKnowledge> {
        let kb = self.kb;
        kb.entity(topic)?;
        let scope = match self.config.subgraph_radius {
            Some(r) => Some(kb.ball(topic, r)?),
            None => None,
        };

        let relations = detect_attributes(tokens, self.lexicon);
        let mentioned: BTreeSet<EntityId> = link_entities(tokens, kb)
            .into_iter()
            .filter(|e| scope.as_ref().is_none_or(|s| s.contains(e)))
            .collect();
        let mut seeds = mentioned.clone();
        seeds.insert(topic);

        let start = if self.config.expand_from_mentions_only { &mentioned } else { &seeds };
        let edge_relations: BTreeSet<RelationId> = match self.config.mode {
            ExpansionMode::Filtered => relations.clone(),
            ExpansionMode::Unfiltered => RelationId::content_relations().collect(),
            ExpansionMode::Disabled => BTreeSet::new(),
        };
        let expanded: Vec<EntityId> =
            expand_within(kb, start, &edge_relations, self.config.hops, scope.as_ref())?
                .into_iter()
                .filter(|e| !seeds.contains(e))
                .collect();

        let candidates: Vec<EntityId> = seeds.iter().copied().chain(expanded.iter().copied()).collect();
        let relations: Vec<RelationId> = relations.into_iter().collect();
        let (relation_vectors, candidate_vectors) = match self.embedding {
            Some(emb) => (
                relations.iter().map(|&r| emb.embed_relation(r).map(<[f64]>::to_vec)).collect::<Result<_>>()?,
                candidates.iter().map(|&e| emb.embed_entity(e).map(<[f64]>::to_vec)).collect::<Result<_>>()?,
            ),
            None => (Vec::new(), Vec::new()),
        };

        Ok(ContextKnowledge {
            topic,
            relations,
            mentioned: mentioned.into_iter().collect(),
            seeds: seeds.into_iter().collect(),
            expanded,
            candidates,
            relation_vectors,
            candidate_vectors,
        })
    }

    /// Tokenizes raw text with the default tokenizer, then collects.
    pub fn collect_text(&self, text: &str, topic: EntityId) -> Result<ContextKnowledge> {
        self.collect(&WhitespaceTokenizer.tokenize(text), topic)
    }
}
