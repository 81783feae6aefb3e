//! In-memory movie knowledge base.
//!
//! Entities and relations are dense integer handles. Every stored triple
//! `(h, r, t)` has its inverse `(t, r⁻¹, h)` materialized at load time, so
//! traversal only ever follows outgoing adjacency.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::collector::normalize;
use crate::error::{Error, Result};

/// Names of the relation types that may appear in a KB file.
pub const BASE_RELATION_NAMES: [&str; 5] = ["hasAlias", "directBy", "actBy", "writeBy", "hasGenre"];

const NUM_BASE: usize = BASE_RELATION_NAMES.len();

/// Total relation count, base relations followed by their inverses.
pub const NUM_RELATIONS: usize = 2 * NUM_BASE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub usize);

impl EntityId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub usize);

impl RelationId {
    pub const HAS_ALIAS: RelationId = RelationId(0);
    pub const DIRECT_BY: RelationId = RelationId(1);
    pub const ACT_BY: RelationId = RelationId(2);
    pub const WRITE_BY: RelationId = RelationId(3);
    pub const HAS_GENRE: RelationId = RelationId(4);

    pub fn index(self) -> usize {
        self.0
    }

    pub fn is_inverse(self) -> bool {
        self.0 >= NUM_BASE
    }

    pub fn inverse(self) -> RelationId {
        if self.is_inverse() {
            RelationId(self.0 - NUM_BASE)
        } else {
            RelationId(self.0 + NUM_BASE)
        }
    }

    /// The forward relation this id belongs to.
    pub fn base(self) -> RelationId {
        RelationId(self.0 % NUM_BASE)
    }

    pub fn is_alias(self) -> bool {
        self.base() == RelationId::HAS_ALIAS
    }

    /// `actBy`, or `actBy^-1` for the inverse.
    pub fn name(self) -> String {
        let base = BASE_RELATION_NAMES[self.base().0];
        if self.is_inverse() {
            format!("{base}^-1")
        } else {
            base.to_string()
        }
    }

    /// Parses a forward relation name as written in KB and lexicon files.
    pub fn from_base_name(name: &str) -> Option<RelationId> {
        BASE_RELATION_NAMES.iter().position(|n| *n == name).map(RelationId)
    }

    /// Parses either a forward or an inverse (`^-1`) relation name.
    pub fn from_name(name: &str) -> Option<RelationId> {
        match name.strip_suffix("^-1") {
            Some(base) => Self::from_base_name(base).map(RelationId::inverse),
            None => Self::from_base_name(name),
        }
    }

    /// Relations usable for graph expansion: everything except `hasAlias`.
    pub fn content_relations() -> impl Iterator<Item = RelationId> {
        (1..NUM_BASE).map(RelationId)
    }

    pub fn all() -> impl Iterator<Item = RelationId> {
        (0..NUM_RELATIONS).map(RelationId)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Film,
    Director,
    Actor,
    Writer,
    Genre,
}

impl EntityKind {
    pub fn parse(s: &str) -> Option<EntityKind> {
        match s.to_ascii_lowercase().as_str() {
            "film" => Some(EntityKind::Film),
            "director" => Some(EntityKind::Director),
            "actor" | "actress" => Some(EntityKind::Actor),
            "writer" => Some(EntityKind::Writer),
            "genre" => Some(EntityKind::Genre),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Film => "film",
            EntityKind::Director => "director",
            EntityKind::Actor => "actor",
            EntityKind::Writer => "writer",
            EntityKind::Genre => "genre",
        }
    }

    fn tail_of(rel: RelationId) -> Option<EntityKind> {
        match rel {
            RelationId::DIRECT_BY => Some(EntityKind::Director),
            RelationId::ACT_BY => Some(EntityKind::Actor),
            RelationId::WRITE_BY => Some(EntityKind::Writer),
            RelationId::HAS_GENRE => Some(EntityKind::Genre),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub name: String,
    pub kind: EntityKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct KbStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub aliases: usize,
}

impl fmt::Display for KbStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "entities={} relations={} triples={} aliases={}",
            self.entities, self.relations, self.triples, self.aliases
        )
    }
}

/// A loaded knowledge base. Immutable once built.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeBase {
    entities: Vec<Entity>,
    by_name: HashMap<String, EntityId>,
    triples: Vec<Triple>,
    adjacency: Vec<Vec<(RelationId, EntityId)>>,
    /// Explicit surface forms as written in the source, canonical names excluded.
    explicit_aliases: Vec<(String, EntityId)>,
    /// Normalized surface form (tokens joined by one space) to entity.
    alias_map: BTreeMap<String, EntityId>,
    /// Unambiguous single-segment entries derived from multi-segment names.
    segment_map: BTreeMap<String, EntityId>,
    max_alias_tokens: usize,
}

impl KnowledgeBase {
    pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text)
    }

    /// Parses the TSV record format (`T`, `A` and `E` lines).
    pub fn parse(text: &str) -> Result<KnowledgeBase> {
        let mut builder = KbBuilder::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            match fields[0] {
                "T" => {
                    if fields.len() != 4 {
                        return Err(Error::parse(line_no, format!("triple line needs 4 fields, got {}", fields.len())));
                    }
                    let rel = RelationId::from_base_name(fields[2]).ok_or_else(|| {
                        Error::Schema(format!("line {line_no}: unknown relation `{}`", fields[2]))
                    })?;
                    check_name(fields[1], line_no)?;
                    check_name(fields[3], line_no)?;
                    if rel.is_alias() {
                        builder.alias(fields[3], fields[1]);
                    } else {
                        if fields[1] == fields[3] {
                            return Err(Error::Schema(format!("line {line_no}: self-loop on `{}`", fields[1])));
                        }
                        builder.triple(fields[1], rel, fields[3]);
                    }
                }
                "A" => {
                    if fields.len() != 3 {
                        return Err(Error::parse(line_no, format!("alias line needs 3 fields, got {}", fields.len())));
                    }
                    check_name(fields[1], line_no)?;
                    check_name(fields[2], line_no)?;
                    builder.alias(fields[1], fields[2]);
                }
                "E" => {
                    if fields.len() != 3 {
                        return Err(Error::parse(line_no, format!("entity line needs 3 fields, got {}", fields.len())));
                    }
                    check_name(fields[1], line_no)?;
                    let kind = EntityKind::parse(fields[2]).ok_or_else(|| {
                        Error::Schema(format!("line {line_no}: unknown entity kind `{}`", fields[2]))
                    })?;
                    builder.kind(fields[1], kind, line_no)?;
                }
                other => {
                    return Err(Error::parse(line_no, format!("unknown record tag `{other}`")));
                }
            }
        }
        builder.build()
    }

    /// Writes the KB back out in the TSV format. Inverse triples are not written.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.entities {
            writeln!(out, "E\t{}\t{}", e.name, e.kind.as_str())?;
        }
        for t in self.triples.iter().filter(|t| !t.relation.is_inverse()) {
            writeln!(
                out,
                "T\t{}\t{}\t{}",
                self.entities[t.head.0].name,
                t.relation.name(),
                self.entities[t.tail.0].name
            )?;
        }
        for (surface, e) in &self.explicit_aliases {
            writeln!(out, "A\t{}\t{}", surface, self.entities[e.0].name)?;
        }
        Ok(())
    }

    pub fn stats(&self) -> KbStats {
        KbStats {
            entities: self.entities.len(),
            relations: NUM_RELATIONS,
            triples: self.triples.len(),
            aliases: self.alias_map.len(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        NUM_RELATIONS
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len()).map(EntityId)
    }

    pub fn entity(&self, id: EntityId) -> Result<&Entity> {
        self.entities
            .get(id.0)
            .ok_or_else(|| Error::Lookup(format!("unknown entity {id}")))
    }

    pub fn name(&self, id: EntityId) -> &str {
        &self.entities[id.0].name
    }

    pub fn contains(&self, id: EntityId) -> bool {
        id.0 < self.entities.len()
    }

    /// Exact canonical-name lookup.
    pub fn entity_by_name(&self, name: &str) -> Result<EntityId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("unknown entity `{name}`")))
    }

    /// Resolves a surface form (canonical name or alias) after normalization.
    pub fn lookup_alias(&self, surface: &str) -> Option<EntityId> {
        self.alias_map.get(&alias_key(surface)).copied()
    }

    /// Resolves a canonical name first, then any alias.
    pub fn resolve(&self, name: &str) -> Result<EntityId> {
        self.by_name
            .get(name)
            .copied()
            .or_else(|| self.lookup_alias(name))
            .ok_or_else(|| Error::Lookup(format!("unknown entity `{name}`")))
    }

    /// Surface forms ranked by edit distance to `query`, for "did you mean" hints.
    pub fn nearest_aliases(&self, query: &str, limit: usize) -> Vec<(String, EntityId)> {
        let q = alias_key(query);
        let mut scored: Vec<(usize, &String, EntityId)> = self
            .alias_map
            .iter()
            .map(|(k, &e)| (strsim::levenshtein(&q, k), k, e))
            .collect();
        scored.sort();
        scored.into_iter().take(limit).map(|(_, k, e)| (k.clone(), e)).collect()
    }

    pub(crate) fn alias_entry(&self, key: &str) -> Option<EntityId> {
        self.alias_map.get(key).copied()
    }

    pub(crate) fn segment_entry(&self, key: &str) -> Option<EntityId> {
        self.segment_map.get(key).copied()
    }

    pub(crate) fn max_alias_tokens(&self) -> usize {
        self.max_alias_tokens
    }

    /// All normalized surface forms with their entity.
    pub fn aliases(&self) -> impl Iterator<Item = (&str, EntityId)> {
        self.alias_map.iter().map(|(k, &e)| (k.as_str(), e))
    }

    /// All stored triples, inverses included, sorted.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Outgoing `(relation, tail)` pairs of `e`, sorted.
    pub fn edges(&self, e: EntityId) -> Result<&[(RelationId, EntityId)]> {
        self.adjacency
            .get(e.0)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("unknown entity {e}")))
    }

    /// Tails of `(e, r, ·)` in ascending id order.
    pub fn neighbors(&self, e: EntityId, r: RelationId) -> Result<Vec<EntityId>> {
        let edges = self.edges(e)?;
        let start = edges.partition_point(|&(rel, _)| rel < r);
        Ok(edges[start..]
            .iter()
            .take_while(|&&(rel, _)| rel == r)
            .map(|&(_, t)| t)
            .collect())
    }

    /// Entities within `radius` undirected hops of `topic`, topic included.
    pub fn ball(&self, topic: EntityId, radius: usize) -> Result<BTreeSet<EntityId>> {
        self.entity(topic)?;
        let mut seen = BTreeSet::from([topic]);
        let mut queue = VecDeque::from([(topic, 0usize)]);
        while let Some((e, d)) = queue.pop_front() {
            if d == radius {
                continue;
            }
            for &(_, t) in &self.adjacency[e.0] {
                if seen.insert(t) {
                    queue.push_back((t, d + 1));
                }
            }
        }
        Ok(seen)
    }

    /// The KB restricted to nodes within `radius` hops of `topic`.
    ///
    /// Handles are renumbered densely in ascending order of the original ids.
    pub fn subgraph(&self, topic: EntityId, radius: usize) -> Result<KnowledgeBase> {
        if radius == 0 {
            return Err(Error::Precondition("subgraph radius must be at least 1".into()));
        }
        let keep = self.ball(topic, radius)?;
        let mut builder = KbBuilder::default();
        for &e in &keep {
            let ent = &self.entities[e.0];
            builder.entity(&ent.name);
            builder.explicit_kind.insert(ent.name.clone(), ent.kind);
        }
        for t in self.triples.iter().filter(|t| !t.relation.is_inverse()) {
            if keep.contains(&t.head) && keep.contains(&t.tail) {
                builder.triple(&self.entities[t.head.0].name, t.relation, &self.entities[t.tail.0].name);
            }
        }
        for (surface, e) in &self.explicit_aliases {
            if keep.contains(e) {
                builder.alias(surface, &self.entities[e.0].name);
            }
        }
        builder.build()
    }
}

fn check_name(name: &str, line: usize) -> Result<()> {
    if name.is_empty() {
        Err(Error::parse(line, "empty name field"))
    } else {
        Ok(())
    }
}

/// Normalized lookup key: cleaned, casefolded, whitespace collapsed.
pub(crate) fn alias_key(surface: &str) -> String {
    normalize(surface).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Segments of a name split on whitespace, interpuncts and hyphens, normalized.
fn name_segments(name: &str) -> Vec<String> {
    name.split(|c: char| c.is_whitespace() || crate::collector::is_segment_separator(c))
        .map(normalize)
        .filter(|s| s.chars().count() >= 2)
        .collect()
}

#[derive(Default)]
struct KbBuilder {
    names: Vec<String>,
    index: HashMap<String, EntityId>,
    triples: Vec<Triple>,
    aliases: Vec<(String, String)>,
    explicit_kind: HashMap<String, EntityKind>,
}

impl KbBuilder {
    fn entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = EntityId(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    fn triple(&mut self, head: &str, rel: RelationId, tail: &str) {
        let h = self.entity(head);
        let t = self.entity(tail);
        self.triples.push(Triple { head: h, relation: rel, tail: t });
    }

    fn alias(&mut self, surface: &str, canonical: &str) {
        self.aliases.push((surface.to_string(), canonical.to_string()));
    }

    fn kind(&mut self, name: &str, kind: EntityKind, line: usize) -> Result<()> {
        self.entity(name);
        match self.explicit_kind.insert(name.to_string(), kind) {
            Some(prev) if prev != kind => Err(Error::Schema(format!(
                "line {line}: `{name}` declared both {} and {}",
                prev.as_str(),
                kind.as_str()
            ))),
            _ => Ok(()),
        }
    }

    fn build(self) -> Result<KnowledgeBase> {
        let n = self.names.len();

        let mut inferred: Vec<Option<EntityKind>> = vec![None; n];
        for t in &self.triples {
            inferred[t.head.0].get_or_insert(EntityKind::Film);
            if let Some(k) = EntityKind::tail_of(t.relation) {
                inferred[t.tail.0].get_or_insert(k);
            }
        }
        let entities: Vec<Entity> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, name)| Entity {
                name: name.clone(),
                kind: self.explicit_kind.get(name).copied().or(inferred[i]).unwrap_or(EntityKind::Film),
            })
            .collect();

        let mut triples: Vec<Triple> = self
            .triples
            .iter()
            .flat_map(|t| {
                [*t, Triple { head: t.tail, relation: t.relation.inverse(), tail: t.head }]
            })
            .collect();
        triples.sort();
        triples.dedup();

        let mut adjacency = vec![Vec::new(); n];
        for t in &triples {
            adjacency[t.head.0].push((t.relation, t.tail));
        }

        let mut alias_map: BTreeMap<String, EntityId> = BTreeMap::new();
        let mut insert_alias = |key: String, e: EntityId, surface: &str| -> Result<()> {
            if key.is_empty() {
                return Err(Error::Schema(format!("surface form `{surface}` is empty after normalization")));
            }
            match alias_map.get(&key) {
                Some(&prev) if prev != e => Err(Error::Schema(format!(
                    "surface form `{surface}` maps to both `{}` and `{}`",
                    self.names[prev.0], self.names[e.0]
                ))),
                _ => {
                    alias_map.insert(key, e);
                    Ok(())
                }
            }
        };
        for (i, name) in self.names.iter().enumerate() {
            insert_alias(alias_key(name), EntityId(i), name)?;
        }
        let mut explicit_aliases = Vec::new();
        for (surface, canonical) in &self.aliases {
            let e = *self.index.get(canonical).ok_or_else(|| {
                Error::Schema(format!("alias `{surface}` refers to unknown entity `{canonical}`"))
            })?;
            insert_alias(alias_key(surface), e, surface)?;
            if surface != canonical && !explicit_aliases.iter().any(|(s, x)| s == surface && *x == e) {
                explicit_aliases.push((surface.clone(), e));
            }
        }

        let mut segment_owner: BTreeMap<String, Option<EntityId>> = BTreeMap::new();
        let surfaces = self
            .names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), EntityId(i)))
            .chain(explicit_aliases.iter().map(|(s, e)| (s.as_str(), *e)));
        for (surface, e) in surfaces {
            let segs = name_segments(surface);
            if segs.len() < 2 {
                continue;
            }
            for seg in segs {
                segment_owner
                    .entry(seg)
                    .and_modify(|owner| {
                        if *owner != Some(e) {
                            *owner = None;
                        }
                    })
                    .or_insert(Some(e));
            }
        }
        let segment_map = segment_owner
            .into_iter()
            .filter_map(|(k, owner)| owner.map(|e| (k, e)))
            .filter(|(k, _)| !alias_map.contains_key(k))
            .collect();

        let max_alias_tokens = alias_map.keys().map(|k| k.split(' ').count()).max().unwrap_or(0);

        Ok(KnowledgeBase {
            entities,
            by_name: self.index,
            triples,
            adjacency,
            explicit_aliases,
            alias_map,
            segment_map,
            max_alias_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_one() -> KnowledgeBase {
        KnowledgeBase::parse(
            "T\tTheNotebook\tactBy\tRachelMcAdams\n\
             T\tSpotlight\tactBy\tRachelMcAdams\n\
             T\tAboutTime\tactBy\tRachelMcAdams\n\
             T\tTheNotebook\tdirectBy\tNickCassavetes\n",
        )
        .unwrap()
    }

    #[test]
    fn three_line_file_doubles_triples() {
        let kb = KnowledgeBase::parse("T\tA\tactBy\tX\nT\tB\tactBy\tX\nT\tA\tdirectBy\tD\n").unwrap();
        let stats = kb.stats();
        assert_eq!(stats.triples, 6);
        assert_eq!(stats.entities, 4);
        assert_eq!(stats.relations, 10);
    }

    #[test]
    fn empty_file_gives_empty_kb() {
        let kb = KnowledgeBase::parse("").unwrap();
        assert!(kb.is_empty());
        assert_eq!(kb.stats().triples, 0);
        assert_eq!(kb.stats().aliases, 0);
    }

    #[test]
    fn alias_line_resolves_nickname() {
        let kb = KnowledgeBase::parse("T\tMermaid\tdirectBy\tStephenChow\nA\t周星星\tStephenChow\n").unwrap();
        let chow = kb.entity_by_name("StephenChow").unwrap();
        assert_eq!(kb.lookup_alias("周星星"), Some(chow));
        assert_eq!(kb.resolve("周星星").unwrap(), chow);
    }

    #[test]
    fn has_alias_triples_register_surface_forms() {
        let kb = KnowledgeBase::parse("T\tMermaid\tdirectBy\tStephenChow\nT\tStephenChow\thasAlias\t星爷\n").unwrap();
        assert_eq!(kb.lookup_alias("星爷"), kb.entity_by_name("StephenChow").ok());
        assert_eq!(kb.stats().triples, 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KnowledgeBase::parse("T\tA\tactBy\tX\nT\tB\tactBy\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_relation_is_schema_error() {
        let err = KnowledgeBase::parse("T\tA\tproducedBy\tX\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = KnowledgeBase::parse("T\tA\tactBy^-1\tX\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn duplicate_triples_are_deduplicated() {
        let kb = KnowledgeBase::parse("T\tA\tactBy\tX\nT\tA\tactBy\tX\n").unwrap();
        assert_eq!(kb.stats().triples, 2);
    }

    #[test]
    fn alias_conflict_is_rejected() {
        let err = KnowledgeBase::parse("T\tA\tactBy\tX\nT\tB\tactBy\tY\nA\tnick\tX\nA\tnick\tY\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = KnowledgeBase::parse("T\tA\tactBy\tX\nA\tA\tX\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn neighbors_on_figure_one() {
        let kb = figure_one();
        let nb = kb.entity_by_name("TheNotebook").unwrap();
        let rachel = kb.entity_by_name("RachelMcAdams").unwrap();
        assert_eq!(kb.neighbors(nb, RelationId::ACT_BY).unwrap(), vec![rachel]);
        assert!(kb.neighbors(nb, RelationId::WRITE_BY).unwrap().is_empty());
        let films = kb.neighbors(rachel, RelationId::ACT_BY.inverse()).unwrap();
        assert_eq!(films.len(), 3);
        assert!(films.windows(2).all(|w| w[0] < w[1]));
        assert!(kb.neighbors(EntityId(99), RelationId::ACT_BY).is_err());
    }

    #[test]
    fn kinds_are_inferred_and_overridable() {
        let kb = KnowledgeBase::parse("T\tF\tdirectBy\tD\nT\tF\tactBy\tA\nE\tA\twriter\n").unwrap();
        assert_eq!(kb.entity(kb.entity_by_name("F").unwrap()).unwrap().kind, EntityKind::Film);
        assert_eq!(kb.entity(kb.entity_by_name("D").unwrap()).unwrap().kind, EntityKind::Director);
        assert_eq!(kb.entity(kb.entity_by_name("A").unwrap()).unwrap().kind, EntityKind::Writer);
    }

    #[test]
    fn subgraph_on_path() {
        let kb = KnowledgeBase::parse("T\tA\tactBy\tB\nT\tC\tactBy\tB\nT\tC\tdirectBy\tD\n").unwrap();
        let a = kb.entity_by_name("A").unwrap();
        let sub = kb.subgraph(a, 2).unwrap();
        let mut names: Vec<_> = sub.entities().map(|e| sub.name(e).to_string()).collect();
        names.sort();
        assert_eq!(names, ["A", "B", "C"]);
        assert_eq!(sub.stats().triples, 4);
        let full = kb.subgraph(a, 10).unwrap();
        assert_eq!(full.num_entities(), 4);
        assert!(kb.subgraph(a, 0).is_err());
        assert!(kb.subgraph(EntityId(17), 1).is_err());
    }

    #[test]
    fn segments_index_multi_part_names() {
        let kb = KnowledgeBase::parse(
            "T\tTitanic\tactBy\tLeonardo DiCaprio\nT\tInception\tactBy\t莱昂纳多·迪卡普里奥\nT\tTitanic\tactBy\tKate Winslet\n",
        )
        .unwrap();
        let leo = kb.entity_by_name("Leonardo DiCaprio").unwrap();
        assert_eq!(kb.segment_entry("leonardo"), Some(leo));
        assert_eq!(kb.segment_entry("kate"), kb.entity_by_name("Kate Winslet").ok());
        assert!(kb.segment_entry("莱昂纳多").is_some());
        assert_eq!(kb.lookup_alias("莱昂纳多-迪卡普里奥"), kb.entity_by_name("莱昂纳多·迪卡普里奥").ok());
    }

    #[test]
    fn write_then_parse_preserves_content() {
        let src = "T\tMermaid\tdirectBy\tStephenChow\nA\t周星星\tStephenChow\nT\tMermaid\thasGenre\tComedy\n";
        let kb = KnowledgeBase::parse(src).unwrap();
        let mut buf = Vec::new();
        kb.write_tsv(&mut buf).unwrap();
        let again = KnowledgeBase::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again.stats(), kb.stats());
        assert_eq!(again.triples(), kb.triples());
    }
}
