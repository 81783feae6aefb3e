use std::collections::BTreeSet;

use crate::kb::{EntityId, KnowledgeBase};

/// A linked span `tokens[start..start + len]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mention {
    pub start: usize,
    pub len: usize,
    pub entity: EntityId,
}

/// Left-to-right maximal alias matching over normalized tokens.
///
/// Full surface forms are tried longest first. When `segments` is set, a
/// single token that is an unambiguous segment of a multi-part name
/// (`leonardo` for `Leonardo DiCaprio`) links too.
pub fn link_spans(tokens: &[String], kb: &KnowledgeBase, segments: bool) -> Vec<Mention> {
    let mut out = Vec::new();
    let max = kb.max_alias_tokens();
    let mut i = 0;
    'scan: while i < tokens.len() {
        for len in (1..=max.min(tokens.len() - i)).rev() {
            let key = tokens[i..i + len].join(" ");
            if let Some(entity) = kb.alias_entry(&key) {
                out.push(Mention { start: i, len, entity });
                i += len;
                continue 'scan;
            }
        }
        if segments {
            if let Some(entity) = kb.segment_entry(&tokens[i]) {
                out.push(Mention { start: i, len: 1, entity });
            }
        }
        i += 1;
    }
    out
}

/// Entities mentioned in `tokens`, segment matches included.
pub fn link_entities(tokens: &[String], kb: &KnowledgeBase) -> BTreeSet<EntityId> {
    link_spans(tokens, kb, true).into_iter().map(|m| m.entity).collect()
}
