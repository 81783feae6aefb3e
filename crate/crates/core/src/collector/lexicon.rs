use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::text::{Tokenizer, WhitespaceTokenizer};
use crate::error::{Error, Result};
use crate::kb::RelationId;

/// Lexical patterns (token sequences) indicating a relation.
#[derive(Clone, Debug, Default)]
pub struct PatternLexicon {
    patterns: BTreeMap<Vec<String>, RelationId>,
    max_len: usize,
}

impl PatternLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text)
    }

    /// Parses `<relation-name>\t<pattern tokens>` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = PatternLexicon::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let (rel, pattern) = raw
                .split_once('\t')
                .ok_or_else(|| Error::parse(line_no, "expected `<relation>\\t<pattern>`"))?;
            let rel = RelationId::from_base_name(rel.trim()).ok_or_else(|| {
                Error::Schema(format!("line {line_no}: unknown relation `{}`", rel.trim()))
            })?;
            lex.insert(pattern, rel).map_err(|e| match e {
                Error::Schema(m) => Error::Schema(format!("line {line_no}: {m}")),
                other => other,
            })?;
        }
        Ok(lex)
    }

    pub fn insert(&mut self, pattern: &str, rel: RelationId) -> Result<()> {
        if rel.is_inverse() || rel.is_alias() {
            return Err(Error::Schema(format!("patterns cannot indicate `{rel}`")));
        }
        let tokens = WhitespaceTokenizer.tokenize(pattern);
        if tokens.is_empty() {
            return Err(Error::Schema("empty pattern".into()));
        }
        if let Some(&prev) = self.patterns.get(&tokens) {
            if prev != rel {
                return Err(Error::Schema(format!("pattern `{pattern}` indicates both {prev} and {rel}")));
            }
        }
        self.max_len = self.max_len.max(tokens.len());
        self.patterns.insert(tokens, rel);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], RelationId)> {
        self.patterns.iter().map(|(k, &r)| (k.as_slice(), r))
    }

    /// Longest pattern starting at `tokens[0]`, as `(length, relation)`.
    fn longest_match(&self, tokens: &[String]) -> Option<(usize, RelationId)> {
        let upto = self.max_len.min(tokens.len());
        (1..=upto)
            .rev()
            .find_map(|len| self.patterns.get(&tokens[..len]).map(|&r| (len, r)))
    }
}

/// Relations whose pattern occurs in `tokens`, scanning longest-match-first.
pub fn detect_attributes(tokens: &[String], lex: &PatternLexicon) -> BTreeSet<RelationId> {
    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        match lex.longest_match(&tokens[i..]) {
            Some((len, rel)) => {
                found.insert(rel);
                i += len;
            }
            None => i += 1,
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        WhitespaceTokenizer.tokenize(s)
    }

    fn lex() -> PatternLexicon {
        PatternLexicon::parse(
            "actBy\tstarring\nactBy\tactress\nactBy\tactors\ndirectBy\tspecial effects\ndirectBy\tdirector\n",
        )
        .unwrap()
    }

    #[test]
    fn starring_indicates_act_by() {
        let r = detect_attributes(&toks("a film starring her"), &lex());
        assert_eq!(r, BTreeSet::from([RelationId::ACT_BY]));
    }

    #[test]
    fn no_pattern_gives_empty_set() {
        assert!(detect_attributes(&toks("what a lovely day"), &lex()).is_empty());
    }

    #[test]
    fn two_patterns_two_relations() {
        let r = detect_attributes(
            &toks("for a film the actors are tiles while special effects are only decorations"),
            &lex(),
        );
        assert_eq!(r, BTreeSet::from([RelationId::ACT_BY, RelationId::DIRECT_BY]));
    }

    #[test]
    fn longest_match_wins() {
        let mut lex = PatternLexicon::new();
        lex.insert("special", RelationId::HAS_GENRE).unwrap();
        lex.insert("special effects", RelationId::DIRECT_BY).unwrap();
        let r = detect_attributes(&toks("special effects"), &lex);
        assert_eq!(r, BTreeSet::from([RelationId::DIRECT_BY]));
    }

    #[test]
    fn bad_lines_rejected() {
        assert!(matches!(PatternLexicon::parse("actBy starring\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(PatternLexicon::parse("playsIn\tstarring\n"), Err(Error::Schema(_))));
        assert!(PatternLexicon::parse("actBy\tstar\ndirectBy\tstar\n").is_err());
        assert!(PatternLexicon::parse("actBy\t  \n").is_err());
    }
}
