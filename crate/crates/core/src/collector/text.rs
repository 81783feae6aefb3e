/// Guillemets, interpuncts, quotation marks and hyphen-like dashes.
const STRIPPED: &[char] = &[
    '《', '》', '〈', '〉', '«', '»', '‹', '›', // guillemets
    '·', '・', '‧', '•', '∙', // interpuncts
    '"', '\'', '“', '”', '‘', '’', '„', '‟', '「', '」', '『', '』', '＂', // quotes
    '-', '‐', '‑', '‒', '–', '—', '―', '－', // hyphens
];

/// Characters that separate segments of a multi-part name.
pub fn is_segment_separator(c: char) -> bool {
    matches!(c, '·' | '・' | '‧' | '•' | '∙' | '-' | '‐' | '‑' | '‒' | '–' | '—' | '―' | '－')
}

/// Removes the stripped punctuation set and casefolds.
pub fn normalize(text: &str) -> String {
    text.chars()
        .filter(|c| !STRIPPED.contains(c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Splits normalized text into tokens.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Sentence punctuation split off the edges of a word.
fn is_edge_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '(' | ')' | '。' | '，' | '！' | '？' | '；' | '：' | '、' | '（' | '）')
}

/// Default tokenizer: normalize, split on whitespace, then detach leading and
/// trailing punctuation as tokens of their own.
#[derive(Clone, Copy, Debug, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in normalize(text).split_whitespace() {
            let core = word.trim_matches(is_edge_punct);
            if core.is_empty() {
                out.extend(word.chars().map(String::from));
                continue;
            }
            let start = word.find(core).unwrap_or(0);
            out.extend(word[..start].chars().map(String::from));
            out.push(core.to_string());
            out.extend(word[start + core.len()..].chars().map(String::from));
        }
        out
    }
}
