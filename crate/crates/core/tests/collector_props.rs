use std::collections::BTreeSet;

use kgchat::collector::{
    link_entities, link_spans, normalize, Collector, CollectorConfig, PatternLexicon, Tokenizer, WhitespaceTokenizer,
};
use kgchat::kb::{EntityId, KnowledgeBase, RelationId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIRST: [&str; 6] = ["ada", "bo", "cleo", "dmitri", "eun", "farah"];
const LAST: [&str; 6] = ["okafor", "lindqvist", "moreau", "tanaka", "silva", "novak"];

fn name_kb() -> (KnowledgeBase, Vec<String>) {
    let mut names = Vec::new();
    let mut text = String::new();
    for (i, f) in FIRST.iter().enumerate() {
        let person = format!("{f} {}", LAST[i]);
        text.push_str(&format!("T\tFilm {i}\tactBy\t{person}\n"));
        names.push(person);
    }
    (KnowledgeBase::parse(&text).unwrap(), names)
}

proptest! {
    #[test]
    fn inserted_alias_is_always_linked(noise in prop::collection::vec("[q-z]{1,6}", 0..20), which in 0usize..6, pos in 0usize..20) {
        let (kb, names) = name_kb();
        let mut tokens: Vec<String> = noise;
        let at = pos.min(tokens.len());
        let alias = WhitespaceTokenizer.tokenize(&names[which]);
        for (k, t) in alias.iter().enumerate() {
            tokens.insert(at + k, t.clone());
        }
        let e = kb.resolve(&names[which]).unwrap();
        prop_assert!(link_entities(&tokens, &kb).contains(&e));
        let spans = link_spans(&tokens, &kb, false);
        prop_assert!(spans.iter().any(|m| m.entity == e && m.start == at && m.len == alias.len()));
    }

    #[test]
    fn spans_are_disjoint_aliases(text in "\\PC{0,60}") {
        let (kb, _) = name_kb();
        let tokens = WhitespaceTokenizer.tokenize(&text);
        let mut end = 0;
        for m in link_spans(&tokens, &kb, false) {
            prop_assert!(m.start >= end && m.start + m.len <= tokens.len());
            end = m.start + m.len;
            prop_assert_eq!(kb.lookup_alias(&tokens[m.start..end].join(" ")), Some(m.entity));
        }
    }

    #[test]
    fn normalization_is_idempotent(text in "\\PC{0,40}") {
        let once = normalize(&text);
        prop_assert_eq!(normalize(&once), once.clone());
        let toks = WhitespaceTokenizer.tokenize(&text);
        prop_assert!(toks.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
    }
}

const PATTERNS: [(&str, RelationId); 4] = [
    ("pd", RelationId::DIRECT_BY),
    ("pa", RelationId::ACT_BY),
    ("pw", RelationId::WRITE_BY),
    ("pg", RelationId::HAS_GENRE),
];

#[test]
fn collection_matches_the_composed_brute_force_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let lex = PatternLexicon::parse(&PATTERNS.iter().map(|(p, r)| format!("{}\t{p}\n", r.name())).collect::<String>())
        .unwrap();
    for _ in 0..1000 {
        let n = rng.gen_range(2..=50);
        let mut text: String = (0..n).map(|i| format!("E\tn{i}\tfilm\n")).collect();
        let mut facts = Vec::new();
        for _ in 0..rng.gen_range(1..=2 * n) {
            let (h, t) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if h != t {
                let r = RelationId(rng.gen_range(1..5));
                text.push_str(&format!("T\tn{h}\t{}\tn{t}\n", r.name()));
                facts.push((h, r, t));
            }
        }
        let kb = KnowledgeBase::parse(&text).unwrap();
        let ent = |i: usize| kb.entity_by_name(&format!("n{i}")).unwrap();

        let mut utterance = Vec::new();
        for _ in 0..rng.gen_range(0..8) {
            utterance.push(match rng.gen_range(0..3) {
                0 => format!("n{}", rng.gen_range(0..n)),
                1 => PATTERNS[rng.gen_range(0..4)].0.to_string(),
                _ => format!("w{}", rng.gen_range(0..5)),
            });
        }
        let topic = ent(rng.gen_range(0..n));

        let rels: BTreeSet<RelationId> =
            PATTERNS.iter().filter(|(p, _)| utterance.iter().any(|u| u == p)).map(|&(_, r)| r).collect();
        let mentioned: BTreeSet<EntityId> =
            utterance.iter().filter_map(|u| u.strip_prefix('n')).map(|i| ent(i.parse().unwrap())).collect();
        let mut seeds = mentioned.clone();
        seeds.insert(topic);
        let mut reached = seeds.clone();
        let mut frontier = seeds.clone();
        for _ in 0..2 {
            let mut next = BTreeSet::new();
            for &(h, r, t) in &facts {
                if !rels.contains(&r) {
                    continue;
                }
                for (a, b) in [(ent(h), ent(t)), (ent(t), ent(h))] {
                    if frontier.contains(&a) && !reached.contains(&b) {
                        next.insert(b);
                    }
                }
            }
            reached.extend(next.iter().copied());
            frontier = next;
        }

        let cfg = CollectorConfig { subgraph_radius: None, ..CollectorConfig::default() };
        let k = Collector::new(&kb, &lex).with_config(cfg).collect(&utterance, topic).unwrap();
        assert_eq!(k.relations, rels.iter().copied().collect::<Vec<_>>());
        assert_eq!(k.mentioned, mentioned.iter().copied().collect::<Vec<_>>());
        assert_eq!(k.seeds, seeds.iter().copied().collect::<Vec<_>>());
        assert_eq!(k.candidates.iter().copied().collect::<BTreeSet<_>>(), reached);
        assert_eq!(k.candidates.len(), reached.len());
        assert_eq!(&k.candidates[..seeds.len()], k.seeds.as_slice());
    }
}
