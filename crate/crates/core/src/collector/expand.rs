use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, RelationId};

/// Frontier-by-frontier expansion from `seeds` along the relations in `relations`
/// (and their inverses), for `hops` rounds.
///
/// Returns the added entities (seeds excluded) ordered by discovery hop, then id.
/// `hasAlias` never licenses an edge. An empty relation set adds nothing.
pub fn expand(
    kb: &KnowledgeBase,
    seeds: &BTreeSet<EntityId>,
    relations: &BTreeSet<RelationId>,
    hops: usize,
) -> Result<Vec<EntityId>> {
    expand_within(kb, seeds, relations, hops, None)
}

/// [`expand`] restricted to nodes inside `allowed`.
pub fn expand_within(
    kb: &KnowledgeBase,
    seeds: &BTreeSet<EntityId>,
    relations: &BTreeSet<RelationId>,
    hops: usize,
    allowed: Option<&BTreeSet<EntityId>>,
) -> Result<Vec<EntityId>> {
    for &s in seeds {
        if !kb.contains(s) {
            return Err(Error::Lookup(format!("unknown seed entity {s}")));
        }
    }
    let mut edge_filter: Vec<RelationId> = relations
        .iter()
        .map(|r| r.base())
        .filter(|r| !r.is_alias())
        .flat_map(|r| [r, r.inverse()])
        .collect();
    edge_filter.sort();
    edge_filter.dedup();
    if edge_filter.is_empty() {
        return Ok(Vec::new());
    }

    let mut visited = seeds.clone();
    let mut frontier: Vec<EntityId> = seeds.iter().copied().collect();
    let mut added = Vec::new();
    for _ in 0..hops {
        let mut next = BTreeSet::new();
        for &e in &frontier {
            for &(rel, tail) in kb.edges(e)? {
                if edge_filter.binary_search(&rel).is_err() {
                    continue;
                }
                if allowed.is_some_and(|a| !a.contains(&tail)) {
                    continue;
                }
                if visited.insert(tail) {
                    next.insert(tail);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        added.extend(next.iter().copied());
        frontier = next.into_iter().collect();
    }
    Ok(added)
}
