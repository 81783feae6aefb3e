//! BLEU, distinct-n and entity precision/recall.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::kb::EntityId;

/// Numerator used for a zero n-gram match count when smoothing is on.
const SMOOTHING_EPS: f64 = 0.1;

fn ngrams<T: AsRef<str>>(tokens: &[T], n: usize) -> Vec<Vec<&str>> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.iter().map(AsRef::as_ref).collect()).collect()
}

/// Sentence-level BLEU with uniform weights over 1..=n grams.
///
/// Returns 0 for an empty candidate, or when some order has no match and
/// `smoothing` is off.
pub fn bleu_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize, smoothing: bool) -> f64 {
    if candidate.is_empty() || n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let cand = ngrams(candidate, k);
        if cand.is_empty() {
            return 0.0;
        }
        let mut ref_counts: HashMap<Vec<&str>, usize> = HashMap::new();
        for g in ngrams(reference, k) {
            *ref_counts.entry(g).or_default() += 1;
        }
        let mut cand_counts: HashMap<&Vec<&str>, usize> = HashMap::new();
        for g in &cand {
            *cand_counts.entry(g).or_default() += 1;
        }
        let matched: usize = cand_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(*g).copied().unwrap_or(0)))
            .sum();
        let total = cand.len() as f64;
        let p = match (matched, smoothing) {
            (0, false) => return 0.0,
            (0, true) => SMOOTHING_EPS / total,
            (m, _) => m as f64 / total,
        };
        log_sum += p.ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / n as f64).exp()
}

/// Mean sentence-level BLEU over `(candidate, reference)` pairs.
pub fn corpus_bleu<T: AsRef<str>>(pairs: &[(Vec<T>, Vec<T>)], n: usize, smoothing: bool) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|(c, r)| bleu_n(c, r, n, smoothing)).sum::<f64>() / pairs.len() as f64
}

/// Distinct n-grams over all responses divided by total n-grams.
pub fn dist_n<T: AsRef<str>>(responses: &[Vec<T>], n: usize) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for r in responses {
        for g in ngrams(r, n) {
            total += 1;
            seen.insert(g);
        }
    }
    if total == 0 {
        0.0
    } else {
        seen.len() as f64 / total as f64
    }
}

/// Micro-averaged entity precision and recall.
///
/// Precision is 0 when nothing was generated anywhere; recall is 0 when there
/// is no gold entity anywhere.
pub fn entity_pr(generated: &[BTreeSet<EntityId>], truth: &[BTreeSet<EntityId>]) -> (f64, f64) {
    let mut hit = 0usize;
    let mut gen = 0usize;
    let mut gold = 0usize;
    for (g, t) in generated.iter().zip(truth) {
        hit += g.intersection(t).count();
        gen += g.len();
        gold += t.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(hit, gen), ratio(hit, gold))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub bleu2: f64,
    pub bleu3: f64,
    pub dist1: f64,
    pub dist2: f64,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub responses: usize,
    pub generated_entities: usize,
    pub gold_entities: usize,
}

impl EvalReport {
    /// Scores generated responses against references with their entity sets.
    pub fn compute<T: AsRef<str>>(
        generated: &[Vec<T>],
        references: &[Vec<T>],
        generated_entities: &[BTreeSet<EntityId>],
        gold_entities: &[BTreeSet<EntityId>],
        smoothing: bool,
    ) -> EvalReport {
        let n = generated.len().min(references.len());
        let bleu = |k: usize| {
            if n == 0 {
                return 0.0;
            }
            (0..n).map(|i| bleu_n(&generated[i], &references[i], k, smoothing)).sum::<f64>() / n as f64
        };
        let (p, r) = entity_pr(generated_entities, gold_entities);
        EvalReport {
            bleu2: bleu(2),
            bleu3: bleu(3),
            dist1: dist_n(generated, 1),
            dist2: dist_n(generated, 2),
            entity_precision: p,
            entity_recall: r,
            responses: n,
            generated_entities: generated_entities.iter().map(BTreeSet::len).sum(),
            gold_entities: gold_entities.iter().map(BTreeSet::len).sum(),
        }
    }

    pub fn csv_header() -> &'static str {
        "bleu2,bleu3,dist1,dist2,ent_prec,ent_rec,responses"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.bleu2, self.bleu3, self.dist1, self.dist2, self.entity_precision, self.entity_recall, self.responses
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "responses    {}", self.responses)?;
        writeln!(f, "BLEU-2       {:.4}", self.bleu2)?;
        writeln!(f, "BLEU-3       {:.4}", self.bleu3)?;
        writeln!(f, "Dist-1       {:.4}", self.dist1)?;
        writeln!(f, "Dist-2       {:.4}", self.dist2)?;
        writeln!(f, "entity prec  {:.4}  ({} generated)", self.entity_precision, self.generated_entities)?;
        write!(f, "entity rec   {:.4}  ({} gold)", self.entity_recall, self.gold_entities)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn set(ids: &[usize]) -> BTreeSet<EntityId> {
        ids.iter().map(|&i| EntityId(i)).collect()
    }

    #[test]
    fn bleu_examples() {
        let x = toks("a b c");
        assert_eq!(bleu_n(&x, &x, 2, false), 1.0);
        let got = bleu_n(&toks("a b c"), &toks("a b d"), 2, false);
        assert!((got - (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-9);
        assert!((got - 0.5774).abs() < 1e-4);
        assert_eq!(bleu_n(&toks("x y"), &toks("a b"), 2, false), 0.0);
        assert!(bleu_n(&toks("x y"), &toks("a b"), 2, true) > 0.0);
        assert_eq!(bleu_n(&Vec::<String>::new(), &x, 2, false), 0.0);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let got = bleu_n(&toks("a b"), &toks("a b c d"), 2, false);
        assert!((got - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn dist_examples() {
        assert!((dist_n(&[toks("good good film")], 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((dist_n(&[toks("a a a")], 2) - 0.5).abs() < 1e-12);
        assert_eq!(dist_n(&[toks("a b c d")], 1), 1.0);
        assert_eq!(dist_n(&[toks("a")], 2), 0.0);
    }

    #[test]
    fn entity_pr_examples() {
        assert_eq!(entity_pr(&[set(&[1, 2])], &[set(&[2, 3])]), (0.5, 0.5));
        assert_eq!(entity_pr(&[set(&[4])], &[set(&[4])]), (1.0, 1.0));
        assert_eq!(entity_pr(&[set(&[])], &[set(&[3])]), (0.0, 0.0));
        assert_eq!(entity_pr(&[set(&[1]), set(&[])], &[set(&[1]), set(&[3])]), (1.0, 0.5));
    }

    #[test]
    fn report_renders() {
        let r = EvalReport::compute(&[toks("a b c")], &[toks("a b c")], &[set(&[1])], &[set(&[1])], false);
        assert_eq!(r.bleu2, 1.0);
        assert_eq!(r.csv_row().split(',').count(), EvalReport::csv_header().split(',').count());
        assert!(r.to_string().contains("BLEU-3"));
    }

    proptest! {
        #[test]
        fn bleu_of_self_is_one(words in prop::collection::vec("[a-e]", 3..12)) {
            prop_assert!((bleu_n(&words, &words, 3, false) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn duplicate_response_never_raises_dist(words in prop::collection::vec("[a-d]", 1..8), extra in prop::collection::vec("[a-d]", 1..8)) {
            let base = vec![words.clone(), extra.clone()];
            let dup = vec![words, extra.clone(), extra];
            for n in 1..=2 {
                prop_assert!(dist_n(&dup, n) <= dist_n(&base, n) + 1e-12);
            }
        }
    }
}
