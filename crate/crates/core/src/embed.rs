//! TransE knowledge-graph embeddings trained with a margin ranking loss.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, RelationId, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Norm> {
        match s {
            "L1" | "l1" => Ok(Norm::L1),
            "L2" | "l2" => Ok(Norm::L2),
            _ => Err(Error::Config(format!("unknown norm `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NegativeSampling {
    CorruptHead,
    CorruptTail,
    #[default]
    Both,
}

impl FromStr for NegativeSampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" | "corrupt-head" => Ok(NegativeSampling::CorruptHead),
            "tail" | "corrupt-tail" => Ok(NegativeSampling::CorruptTail),
            "both" => Ok(NegativeSampling::Both),
            _ => Err(Error::Config(format!("unknown negative sampling mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub sampling: NegativeSampling,
    pub norm: Norm,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig {
            dim: 100,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 1000,
            sampling: NegativeSampling::Both,
            norm: Norm::L1,
        }
    }
}

impl TransEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("embedding dimension must be >= 2, got {}", self.dim)));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Entity and relation embedding matrices, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct KgEmbedding {
    dim: usize,
    norm: Norm,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl KgEmbedding {
    pub fn from_rows(dim: usize, norm: Norm, entities: Vec<Vec<f64>>, relations: Vec<Vec<f64>>) -> Result<Self> {
        if entities.iter().chain(&relations).any(|r| r.len() != dim) {
            return Err(Error::Internal("embedding row length does not match dimension".into()));
        }
        Ok(KgEmbedding {
            dim,
            norm,
            entities: entities.concat(),
            relations: relations.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim
    }

    pub fn embed_entity(&self, e: EntityId) -> Result<&[f64]> {
        let k = self.dim;
        self.entities
            .get(e.0 * k..(e.0 + 1) * k)
            .ok_or_else(|| Error::Lookup(format!("no embedding for entity {e}")))
    }

    pub fn embed_relation(&self, r: RelationId) -> Result<&[f64]> {
        let k = self.dim;
        self.relations
            .get(r.0 * k..(r.0 + 1) * k)
            .ok_or_else(|| Error::Lookup(format!("no embedding for relation {r}")))
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_matrix(&self) -> &[f64] {
        &self.relations
    }

    /// Distance `‖e_h + r − e_t‖` under the configured norm. Lower is more plausible.
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<f64> {
        let (h, r, t) = (self.embed_entity(h)?, self.embed_relation(r)?, self.embed_entity(t)?);
        Ok(distance(self.norm, h, r, t))
    }

    /// Writes the `TRANSE k=.. norm=..` text format, entities then relations.
    pub fn save<W: Write>(&self, kb: &KnowledgeBase, mut out: W) -> Result<()> {
        if kb.num_entities() != self.num_entities() {
            return Err(Error::Config("embedding does not match knowledge base".into()));
        }
        writeln!(out, "TRANSE k={} norm={}", self.dim, self.norm)?;
        for e in kb.entities() {
            write_row(&mut out, kb.name(e), self.embed_entity(e)?)?;
        }
        for r in RelationId::all() {
            write_row(&mut out, &r.name(), self.embed_relation(r)?)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(kb: &KnowledgeBase, input: R) -> Result<KgEmbedding> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "missing TRANSE header"))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("TRANSE") {
            return Err(Error::parse(1, "missing TRANSE header"));
        }
        let mut dim = None;
        let mut norm = None;
        for p in parts {
            match p.split_once('=') {
                Some(("k", v)) => dim = v.parse::<usize>().ok(),
                Some(("norm", v)) => norm = Some(v.parse::<Norm>()?),
                _ => return Err(Error::parse(1, format!("unexpected header field `{p}`"))),
            }
        }
        let dim = dim.filter(|&k| k >= 1).ok_or_else(|| Error::parse(1, "bad or missing k"))?;
        let norm = norm.ok_or_else(|| Error::parse(1, "missing norm"))?;

        let expected: Vec<String> = kb
            .entities()
            .map(|e| kb.name(e).to_string())
            .chain(RelationId::all().map(|r| r.name()))
            .collect();
        let mut rows = Vec::with_capacity(expected.len());
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() < dim + 1 {
                return Err(Error::parse(line_no, "too few fields"));
            }
            let split = fields.len() - dim;
            let name = fields[..split].join(" ");
            let values = fields[split..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| Error::parse(line_no, format!("bad float `{v}`"))))
                .collect::<Result<Vec<f64>>>()?;
            let want = expected
                .get(rows.len())
                .ok_or_else(|| Error::parse(line_no, "more rows than the knowledge base has entities and relations"))?;
            if *want != name {
                return Err(Error::parse(line_no, format!("expected row `{want}`, found `{name}`")));
            }
            rows.push(values);
        }
        if rows.len() != expected.len() {
            return Err(Error::Config(format!("expected {} rows, found {}", expected.len(), rows.len())));
        }
        let relations = rows.split_off(kb.num_entities());
        KgEmbedding::from_rows(dim, norm, rows, relations)
    }
}

fn write_row<W: Write>(out: &mut W, name: &str, row: &[f64]) -> Result<()> {
    write!(out, "{name}")?;
    for v in row {
        write!(out, " {v:?}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn distance(norm: Norm, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let diffs = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
    match norm {
        Norm::L1 => diffs.map(f64::abs).sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    }
}

/// Gradient of the distance with respect to `h + r − t`.
fn distance_grad(norm: Norm, h: &[f64], r: &[f64], t: &[f64]) -> Vec<f64> {
    let diffs: Vec<f64> = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t).collect();
    match norm {
        Norm::L1 => diffs.iter().map(|d| if *d > 0.0 { 1.0 } else if *d < 0.0 { -1.0 } else { 0.0 }).collect(),
        Norm::L2 => {
            let n = diffs.iter().map(|d| d * d).sum::<f64>().sqrt();
            if n == 0.0 {
                vec![0.0; diffs.len()]
            } else {
                diffs.iter().map(|d| d / n).collect()
            }
        }
    }
}

fn normalize_row(row: &mut [f64]) {
    let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        row.iter_mut().for_each(|v| *v /= n);
    }
}

/// Result of a TransE run.
#[derive(Clone, Debug)]
pub struct TransETraining {
    pub embedding: KgEmbedding,
    /// Summed margin loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Uniform `±6/√k` initialization, all rows normalized.
pub fn init_transe(kb: &KnowledgeBase, dim: usize, norm: Norm, rng: &mut impl Rng) -> KgEmbedding {
    let bound = 6.0 / (dim as f64).sqrt();
    let mut sample = |rows: usize| {
        let mut m: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-bound..bound)).collect();
        m.chunks_mut(dim).for_each(normalize_row);
        m
    };
    let entities = sample(kb.num_entities());
    let relations = sample(kb.num_relations());
    KgEmbedding { dim, norm, entities, relations }
}

/// Trains TransE from a seeded random initialization.
pub fn train_transe(kb: &KnowledgeBase, cfg: &TransEConfig, seed: u64) -> Result<TransETraining> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = init_transe(kb, cfg.dim, cfg.norm, &mut rng);
    train_transe_from(kb, cfg, init, &mut rng)
}

/// Trains TransE from given embeddings with plain per-triple SGD.
///
/// Negatives corrupt the head or tail and are resampled while they hit a known
/// positive. Entity rows touched by an update are projected back onto the unit
/// sphere; relation rows are left unconstrained.
pub fn train_transe_from(
    kb: &KnowledgeBase,
    cfg: &TransEConfig,
    init: KgEmbedding,
    rng: &mut impl Rng,
) -> Result<TransETraining> {
    cfg.validate()?;
    if kb.triples().is_empty() {
        return Err(Error::Config("cannot train embeddings on a knowledge base with no triples".into()));
    }
    if init.dim != cfg.dim || init.num_entities() != kb.num_entities() || init.num_relations() != kb.num_relations()
    {
        return Err(Error::Config("initial embedding does not match config and knowledge base".into()));
    }
    let mut emb = init;
    emb.norm = cfg.norm;
    let k = cfg.dim;
    let n_ent = kb.num_entities();
    let positives: HashSet<Triple> = kb.triples().iter().copied().collect();
    let mut order: Vec<Triple> = kb.triples().to_vec();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for &pos in &order {
            let Some(neg) = corrupt(pos, cfg.sampling, n_ent, &positives, rng) else {
                continue;
            };
            let row = |m: &[f64], i: usize| m[i * k..(i + 1) * k].to_vec();
            let (h, t) = (row(&emb.entities, pos.head.0), row(&emb.entities, pos.tail.0));
            let (hn, tn) = (row(&emb.entities, neg.head.0), row(&emb.entities, neg.tail.0));
            let r = row(&emb.relations, pos.relation.0);
            let loss = cfg.margin + distance(cfg.norm, &h, &r, &t) - distance(cfg.norm, &hn, &r, &tn);
            if loss <= 0.0 {
                continue;
            }
            total += loss;
            let gp = distance_grad(cfg.norm, &h, &r, &t);
            let gn = distance_grad(cfg.norm, &hn, &r, &tn);
            let lr = cfg.learning_rate;
            let bump = |m: &mut Vec<f64>, i: usize, g: &[f64], sign: f64| {
                for (v, g) in m[i * k..(i + 1) * k].iter_mut().zip(g) {
                    *v -= sign * lr * g;
                }
            };
            bump(&mut emb.entities, pos.head.0, &gp, 1.0);
            bump(&mut emb.entities, pos.tail.0, &gp, -1.0);
            bump(&mut emb.relations, pos.relation.0, &gp, 1.0);
            bump(&mut emb.entities, neg.head.0, &gn, -1.0);
            bump(&mut emb.entities, neg.tail.0, &gn, 1.0);
            bump(&mut emb.relations, pos.relation.0, &gn, -1.0);
            for e in [pos.head, pos.tail, neg.head, neg.tail] {
                normalize_row(&mut emb.entities[e.0 * k..(e.0 + 1) * k]);
            }
        }
        epoch_losses.push(total);
    }
    Ok(TransETraining { embedding: emb, epoch_losses })
}

fn corrupt(
    pos: Triple,
    mode: NegativeSampling,
    n_ent: usize,
    positives: &HashSet<Triple>,
    rng: &mut impl Rng,
) -> Option<Triple> {
    const TRIES: usize = 64;
    for _ in 0..TRIES {
        let head_side = match mode {
            NegativeSampling::CorruptHead => true,
            NegativeSampling::CorruptTail => false,
            NegativeSampling::Both => rng.gen_bool(0.5),
        };
        let e = EntityId(rng.gen_range(0..n_ent));
        let cand = if head_side { Triple { head: e, ..pos } } else { Triple { tail: e, ..pos } };
        if !positives.contains(&cand) {
            return Some(cand);
        }
    }
    None
}

/// Filtered tail-prediction quality over `triples`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkPrediction {
    pub hits_at_10: f64,
    pub mean_rank: f64,
    pub mrr: f64,
}

/// Ranks every entity as the tail of each `(h, r, ?)`, skipping other known tails.
pub fn evaluate_tails(kb: &KnowledgeBase, emb: &KgEmbedding, triples: &[Triple]) -> Result<LinkPrediction> {
    if triples.is_empty() {
        return Ok(LinkPrediction { hits_at_10: 0.0, mean_rank: 0.0, mrr: 0.0 });
    }
    let mut hits = 0usize;
    let mut rank_sum = 0.0;
    let mut rr_sum = 0.0;
    for t in triples {
        let known: HashSet<EntityId> = kb.neighbors(t.head, t.relation)?.into_iter().collect();
        let target = emb.score(t.head, t.relation, t.tail)?;
        let mut rank = 1usize;
        for e in kb.entities() {
            if e != t.tail && !known.contains(&e) && emb.score(t.head, t.relation, e)? < target {
                rank += 1;
            }
        }
        if rank <= 10 {
            hits += 1;
        }
        rank_sum += rank as f64;
        rr_sum += 1.0 / rank as f64;
    }
    let n = triples.len() as f64;
    Ok(LinkPrediction { hits_at_10: hits as f64 / n, mean_rank: rank_sum / n, mrr: rr_sum / n })
}
