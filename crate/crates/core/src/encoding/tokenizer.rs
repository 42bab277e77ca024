//! Tokenizer contract and a deterministic word-level implementation.
//!
//! The four entity markers, the classification/separator/padding tokens,
//! and the unknown token are atomic vocabulary items that tokenization
//! never splits.

use std::collections::BTreeMap;

pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const S1_MARKER: &str = "[S1]";
pub const E1_MARKER: &str = "[E1]";
pub const S2_MARKER: &str = "[S2]";
pub const E2_MARKER: &str = "[E2]";

/// All eight reserved tokens, in vocabulary-id order.
pub const SPECIAL_TOKENS: [&str; 8] = [
    PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, S1_MARKER, E1_MARKER, S2_MARKER, E2_MARKER,
];

/// Vocabulary ids of the reserved tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokenIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub s1: u32,
    pub e1: u32,
    pub s2: u32,
    pub e2: u32,
}

/// Where an encoder family expects its classification token. Downstream
/// code reads the recorded position, never a hard-coded index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClsPlacement {
    #[default]
    Start,
    /// Auto-regressive families append the classification token at the end.
    End,
}

/// Deterministic tokenization with atomic special tokens.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
    /// Vocabulary id, falling back to the unknown token.
    fn token_id(&self, token: &str) -> u32;
    fn token_text(&self, id: u32) -> Option<&str>;
    fn vocab_size(&self) -> usize;
    fn specials(&self) -> SpecialTokenIds;
    fn cls_placement(&self) -> ClsPlacement {
        ClsPlacement::Start
    }
    /// Stable identifier of the vocabulary, recorded in trained bundles.
    fn fingerprint(&self) -> String;
}

/// Whitespace-and-punctuation word tokenizer with a fixed vocabulary.
///
/// Edge punctuation is peeled into its own tokens (`"noted."` becomes
/// `noted`, `.`) while interior punctuation stays put (`3.5`, `q.i.d`,
/// `follow-up`). Non-special tokens are lowercased when built that way.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
    lowercase: bool,
    cls_placement: ClsPlacement,
}

impl WordTokenizer {
    /// Build a vocabulary from corpus texts. Token ids are the eight
    /// specials followed by corpus tokens ordered by descending frequency
    /// (ties alphabetical), so identical corpora yield identical ids.
    pub fn train<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        lowercase: bool,
        min_count: usize,
    ) -> Self {
        let splitter = WordTokenizer::from_tokens(Vec::new(), lowercase);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for token in splitter.tokenize(text) {
                if !SPECIAL_TOKENS.contains(&token.as_str()) {
                    *counts.entry(token).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then(ta.cmp(tb)));
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t).collect(), lowercase)
    }

    /// Reconstruct from persisted vocabulary lines (specials first).
    pub fn from_vocab_lines(lines: &str, lowercase: bool) -> Self {
        let tokens: Vec<String> = lines
            .lines()
            .map(str::to_string)
            .skip(SPECIAL_TOKENS.len())
            .collect();
        Self::from_tokens(tokens, lowercase)
    }

    fn from_tokens(corpus_tokens: Vec<String>, lowercase: bool) -> Self {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(corpus_tokens);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        WordTokenizer {
            tokens,
            index,
            lowercase,
            cls_placement: ClsPlacement::Start,
        }
    }

    pub fn with_cls_placement(mut self, placement: ClsPlacement) -> Self {
        self.cls_placement = placement;
        self
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    /// One token per line, id order; input to [`WordTokenizer::from_vocab_lines`].
    pub fn vocab_lines(&self) -> String {
        let mut out = String::with_capacity(self.tokens.len() * 8);
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    fn split_chunk(&self, chunk: &str, out: &mut Vec<String>) {
        if chunk.is_empty() {
            return;
        }
        if SPECIAL_TOKENS.contains(&chunk) {
            out.push(chunk.to_string());
            return;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && is_edge_punct(chars[lo]) {
            lo += 1;
        }
        while hi > lo && is_edge_punct(chars[hi - 1]) {
            hi -= 1;
        }
        for &c in &chars[..lo] {
            out.push(c.to_string());
        }
        if lo < hi {
            let middle: String = chars[lo..hi].iter().collect();
            out.push(if self.lowercase {
                middle.to_lowercase()
            } else {
                middle
            });
        }
        for &c in &chars[hi..] {
            out.push(c.to_string());
        }
    }
}

fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation()
}

impl Tokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            self.split_chunk(chunk, &mut out);
        }
        out
    }

    fn token_id(&self, token: &str) -> u32 {
        self.index
            .get(token)
            .copied()
            .unwrap_or(self.specials().unk)
    }

    fn token_text(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn specials(&self) -> SpecialTokenIds {
        SpecialTokenIds {
            pad: 0,
            unk: 1,
            cls: 2,
            sep: 3,
            s1: 4,
            e1: 5,
            s2: 6,
            e2: 7,
        }
    }

    fn cls_placement(&self) -> ClsPlacement {
        self.cls_placement
    }

    fn fingerprint(&self) -> String {
        let mut hash = Fnv1a::new();
        for t in &self.tokens {
            hash.update(t.as_bytes());
            hash.update(b"\n");
        }
        hash.update(&[self.lowercase as u8]);
        hash.update(&[matches!(self.cls_placement, ClsPlacement::End) as u8]);
        format!("{:016x}", hash.finish())
    }
}

/// FNV-1a, used only as a stable vocabulary fingerprint.
struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf29ce484222325)
    }
    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(texts: &[&str]) -> WordTokenizer {
        WordTokenizer::train(texts.iter().copied(), true, 1)
    }

    #[test]
    fn markers_stay_atomic() {
        let t = tok(&["aspirin daily"]);
        assert_eq!(
            t.tokenize("[S1] aspirin [E1] daily"),
            vec!["[S1]", "aspirin", "[E1]", "daily"]
        );
    }

    #[test]
    fn edge_punct_peels_interior_stays() {
        let t = tok(&[]);
        assert_eq!(t.tokenize("(noted.)"), vec!["(", "noted", ".", ")"]);
        assert_eq!(t.tokenize("3.5 q.i.d."), vec!["3.5", "q.i.d", "."]);
        assert_eq!(t.tokenize("follow-up"), vec!["follow-up"]);
    }

    #[test]
    fn ids_are_deterministic_and_specials_fixed() {
        let a = tok(&["b b a c c c"]);
        let b = tok(&["b b a c c c"]);
        assert_eq!(a.vocab_lines(), b.vocab_lines());
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.token_id("[PAD]"), 0);
        assert_eq!(a.token_id("[S1]"), 4);
        // Frequency order after specials: c (3), b (2), a (1).
        assert_eq!(a.token_id("c"), 8);
        assert_eq!(a.token_id("b"), 9);
        assert_eq!(a.token_id("a"), 10);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let t = tok(&["aspirin"]);
        assert_eq!(t.token_id("warfarin"), t.specials().unk);
    }

    #[test]
    fn vocab_round_trips_through_lines() {
        let t = tok(&["aspirin 81 mg daily"]);
        let back = WordTokenizer::from_vocab_lines(&t.vocab_lines(), true);
        assert_eq!(t.fingerprint(), back.fingerprint());
        assert_eq!(t.tokenize("aspirin 81"), back.tokenize("aspirin 81"));
    }
}
