//! Deterministic synthetic movie KB, pattern lexicon and conversation corpus.
//!
//! Every response mentions the topic film or the entity its question asks
//! about, so each gold entity is reachable from the topic through the detected
//! attribute.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collector::PatternLexicon;
use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, RelationId};
use crate::train::{parse_corpus, write_corpus, Conversation};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    /// Films whose conversations go to the training corpus.
    pub films: usize,
    pub conversations: usize,
    /// Films reserved for the held-out corpus.
    pub held_out_films: usize,
    pub held_out_conversations: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { films: 25, conversations: 50, held_out_films: 10, held_out_conversations: 20, seed: 7 }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub kb_text: String,
    pub lexicon_text: String,
    pub kb: KnowledgeBase,
    pub lexicon: PatternLexicon,
    pub train: Vec<Conversation>,
    pub held_out: Vec<Conversation>,
}

impl SynthCorpus {
    pub fn train_jsonl(&self) -> Result<String> {
        jsonl(&self.train)
    }

    pub fn held_out_jsonl(&self) -> Result<String> {
        jsonl(&self.held_out)
    }
}

fn jsonl(convs: &[Conversation]) -> Result<String> {
    let mut buf = Vec::new();
    write_corpus(convs, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
}

const GENRES: [&str; 6] = ["comedy", "drama", "thriller", "horror", "romance", "western"];

const LEXICON: [(&str, &str); 8] = [
    ("directBy", "director"),
    ("directBy", "directed"),
    ("actBy", "actor"),
    ("actBy", "starring"),
    ("writeBy", "writer"),
    ("writeBy", "wrote"),
    ("hasGenre", "genre"),
    ("hasGenre", "kind of film"),
];

/// (question, response) pairs per relation. `{f}` is the film, `{x}` the answer.
const DIALOGUES: [(RelationId, &[(&str, &str)]); 4] = [
    (
        RelationId::ACT_BY,
        &[
            ("who is the actor", "the actor is {x}"),
            ("who was starring in {f}", "{f} stars {x}"),
            ("do you know the actor of {f}", "yes it is {x}"),
        ],
    ),
    (
        RelationId::DIRECT_BY,
        &[
            ("who is the director", "it was made by {x}"),
            ("who directed {f}", "{f} is by {x}"),
            ("do you know the director of {f}", "sure it is {x}"),
        ],
    ),
    (
        RelationId::WRITE_BY,
        &[
            ("who is the writer", "{x} did the script"),
            ("who wrote {f}", "{f} was penned by {x}"),
            ("do you know the writer of {f}", "i think it is {x}"),
        ],
    ),
    (
        RelationId::HAS_GENRE,
        &[
            ("what genre is it", "it is a {x} movie"),
            ("what kind of film is {f}", "{f} is a {x} story"),
            ("do you know the genre of {f}", "mostly {x}"),
        ],
    ),
];

const OPENINGS: [&str; 5] = ["i watched {f} last night", "have you seen {f}", "hello there", "i saw a movie yesterday", "{f} was on tv"];

struct Film {
    name: String,
    director: String,
    actor: String,
    writer: String,
    genre: &'static str,
}

impl Film {
    fn answer(&self, rel: RelationId) -> &str {
        match rel {
            RelationId::DIRECT_BY => &self.director,
            RelationId::ACT_BY => &self.actor,
            RelationId::WRITE_BY => &self.writer,
            _ => self.genre,
        }
    }
}

/// Single-token pronounceable names that collide with no template word.
fn names(count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut reserved: BTreeSet<String> = GENRES.iter().map(|g| g.to_string()).collect();
    for text in DIALOGUES.iter().flat_map(|(_, d)| d.iter().flat_map(|(q, r)| [*q, *r])).chain(OPENINGS) {
        reserved.extend(text.split(' ').map(str::to_string));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.gen_range(2..=3);
        let mut n = String::new();
        for _ in 0..syllables {
            n.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            n.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        if reserved.insert(n.clone()) {
            let mut cs = n.chars();
            let first = cs.next().map(|c| c.to_ascii_uppercase()).unwrap_or_default();
            out.push(std::iter::once(first).chain(cs).collect());
        }
    }
    out
}

fn fill(template: &str, film: &str, answer: &str) -> String {
    template.replace("{f}", film).replace("{x}", answer)
}

fn conversation(film: &Film, rng: &mut ChaCha8Rng) -> String {
    let (rel, pairs) = DIALOGUES[rng.gen_range(0..DIALOGUES.len())];
    let (q, r) = pairs[rng.gen_range(0..pairs.len())];
    let mut turns = Vec::new();
    if rng.gen_bool(0.5) {
        turns.push(fill(OPENINGS[rng.gen_range(0..OPENINGS.len())], &film.name, ""));
    }
    turns.push(fill(q, &film.name, ""));
    turns.push(fill(r, &film.name, film.answer(rel)));
    serde_json::json!({ "topic": film.name, "turns": turns }).to_string()
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.films == 0 || cfg.conversations == 0 {
        return Err(Error::Config("synthetic corpus needs at least one film and one conversation".into()));
    }
    if cfg.held_out_conversations > 0 && cfg.held_out_films == 0 {
        return Err(Error::Config("held-out conversations need held-out films".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.films + cfg.held_out_films;
    let mut pool = names(4 * total, &mut rng).into_iter();
    let mut next = || pool.next().unwrap_or_default();
    let films: Vec<Film> = (0..total)
        .map(|_| Film {
            name: next(),
            director: next(),
            actor: next(),
            writer: next(),
            genre: GENRES[rng.gen_range(0..GENRES.len())],
        })
        .collect();

    let mut kb_text = String::new();
    for f in &films {
        let _ = writeln!(kb_text, "E\t{}\tfilm", f.name);
        let _ = writeln!(kb_text, "E\t{}\tdirector", f.director);
        let _ = writeln!(kb_text, "E\t{}\tactor", f.actor);
        let _ = writeln!(kb_text, "E\t{}\twriter", f.writer);
    }
    let used: BTreeSet<&str> = films.iter().map(|f| f.genre).collect();
    for g in used {
        let _ = writeln!(kb_text, "E\t{g}\tgenre");
    }
    for f in &films {
        for rel in [RelationId::DIRECT_BY, RelationId::ACT_BY, RelationId::WRITE_BY, RelationId::HAS_GENRE] {
            let _ = writeln!(kb_text, "T\t{}\t{}\t{}", f.name, rel.name(), f.answer(rel));
        }
    }
    let mut lexicon_text = String::new();
    for (rel, pattern) in LEXICON {
        let _ = writeln!(lexicon_text, "{rel}\t{pattern}");
    }

    let (train_films, held_films) = films.split_at(cfg.films);
    let mut sample = |pool: &[Film], n: usize| -> Result<Vec<Conversation>> {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        let mut lines = Vec::with_capacity(n);
        for i in 0..n {
            if i % pool.len() == 0 {
                order.shuffle(&mut rng);
            }
            lines.push(conversation(&pool[order[i % pool.len()]], &mut rng));
        }
        parse_corpus(&lines.join("\n"))
    };
    let train = sample(train_films, cfg.conversations)?;
    let held_out = if cfg.held_out_conversations == 0 { Vec::new() } else { sample(held_films, cfg.held_out_conversations)? };

    Ok(SynthCorpus {
        kb: KnowledgeBase::parse(&kb_text)?,
        lexicon: PatternLexicon::parse(&lexicon_text)?,
        kb_text,
        lexicon_text,
        train,
        held_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collector::Collector;
    use crate::train::{build_quads, Vocab};

    #[test]
    fn same_seed_same_corpus() {
        let a = synthesize(&SynthConfig::default()).unwrap();
        let b = synthesize(&SynthConfig::default()).unwrap();
        assert_eq!(a.kb_text, b.kb_text);
        assert_eq!(a.train, b.train);
        assert_eq!(a.held_out, b.held_out);
        let c = synthesize(&SynthConfig { seed: 8, ..SynthConfig::default() }).unwrap();
        assert_ne!(a.kb_text, c.kb_text);
    }

    #[test]
    fn every_response_entity_is_reachable() {
        let s = synthesize(&SynthConfig::default()).unwrap();
        let words = s.train.iter().flat_map(|c| c.turns.iter().flatten().map(String::as_str));
        let vocab = Vocab::build(words, 1000).unwrap();
        let collector = Collector::new(&s.kb, &s.lexicon);
        for convs in [&s.train, &s.held_out] {
            let set = build_quads(&collector, &vocab, convs).unwrap();
            assert_eq!(set.unreachable_rate(), 0.0);
            assert!(set.entity_mentions >= convs.len());
            for q in &set.quads {
                assert_eq!(q.knowledge.relations.len(), 1);
            }
        }
    }

    #[test]
    fn held_out_films_are_disjoint() {
        let s = synthesize(&SynthConfig::default()).unwrap();
        assert_eq!(s.train.len(), 50);
        assert_eq!(s.held_out.len(), 20);
        let train: BTreeSet<&str> = s.train.iter().map(|c| c.topic.as_str()).collect();
        assert!(s.held_out.iter().all(|c| !train.contains(c.topic.as_str())));
        assert_eq!(train.len(), 25);
    }
}
