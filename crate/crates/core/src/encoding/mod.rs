//! Marker-augmented two-sentence encoding of candidate pairs.
//!
//! Each pair becomes `[CLS] <sentence of Arg1 with [S1]/[E1]> [SEP]
//! <sentence of Arg2 with [S2]/[E2]> [SEP]` (classification token at the
//! end for encoder families that want it there). When both entities share
//! a sentence the two sides carry the same text, each with only its own
//! marker set. Truncation keeps a contiguous window per sentence centered
//! on the marker span; the four markers always survive or encoding fails.

mod tokenizer;

pub use tokenizer::{
    ClsPlacement, SpecialTokenIds, Tokenizer, WordTokenizer, CLS_TOKEN, E1_MARKER, E2_MARKER,
    PAD_TOKEN, S1_MARKER, S2_MARKER, SEP_TOKEN, SPECIAL_TOKENS, UNK_TOKEN,
};

use std::ops::Range;

use thiserror::Error;

use crate::candidates::CandidatePair;
use crate::corpus::{Corpus, CorpusError, Document};

/// Smallest workable sequence: framing tokens plus the four markers.
pub const MIN_MAX_LEN: usize = 8;

/// Default encoder sequence length.
pub const DEFAULT_MAX_LEN: usize = 384;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("max_len {0} is below the minimum of {MIN_MAX_LEN}")]
    MaxLenTooSmall(usize),
    #[error("{doc_id} ({arg1},{arg2}): no truncation window keeps all four entity markers within max_len {max_len}")]
    MarkersDoNotFit {
        doc_id: String,
        arg1: String,
        arg2: String,
        max_len: usize,
    },
    #[error("{doc_id} ({arg1},{arg2}): marker token {marker} appears {count} times after insertion")]
    MarkerClash {
        doc_id: String,
        arg1: String,
        arg2: String,
        marker: &'static str,
        count: usize,
    },
    #[error("candidate references unknown document {0:?}")]
    UnknownDocument(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Indices of the classification token and the four entity markers inside
/// an encoded sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerPositions {
    pub cls: usize,
    pub s1: usize,
    pub e1: usize,
    pub s2: usize,
    pub e2: usize,
}

impl MarkerPositions {
    pub fn as_array(&self) -> [usize; 5] {
        [self.cls, self.s1, self.e1, self.s2, self.e2]
    }
}

/// Identity of the pair an instance encodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRef {
    pub doc_id: String,
    pub arg1: String,
    pub arg2: String,
}

/// One encoder-ready sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub token_ids: Vec<u32>,
    /// 0 over the first sentence region, 1 over the second.
    pub segment_flags: Vec<u8>,
    pub positions: MarkerPositions,
    pub pair_ref: PairRef,
}

impl EncodedInstance {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Instances padded to a common length, with a validity mask.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub token_ids: Vec<Vec<u32>>,
    pub segment_flags: Vec<Vec<u8>>,
    /// 1 for real tokens, 0 for padding.
    pub mask: Vec<Vec<u8>>,
    pub positions: Vec<MarkerPositions>,
    pub pair_refs: Vec<PairRef>,
    pub padded_len: usize,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Render the two marked sentence texts for a pair. Arg1's sentence gets
/// `[S1]`/`[E1]` around Arg1's span, Arg2's sentence gets `[S2]`/`[E2]`;
/// a shared sentence is emitted twice, each copy with one marker set.
pub fn mark_entities(
    document: &Document,
    pair: &CandidatePair,
) -> Result<(String, String), EncodingError> {
    let e1 = document.entity(&pair.arg1)?;
    let e2 = document.entity(&pair.arg2)?;
    let s1 = document.sentence_index_of(e1)?;
    let s2 = document.sentence_index_of(e2)?;
    Ok((
        insert_markers(document, s1, e1.start, e1.end, S1_MARKER, E1_MARKER),
        insert_markers(document, s2, e2.start, e2.end, S2_MARKER, E2_MARKER),
    ))
}

fn insert_markers(
    document: &Document,
    sentence_index: usize,
    entity_start: usize,
    entity_end: usize,
    open: &str,
    close: &str,
) -> String {
    let span = document.sentences[sentence_index];
    let sentence: Vec<char> = document.sentence_text(sentence_index).chars().collect();
    // Entities may run past their start sentence; clamp to its end.
    let rel_start = entity_start - span.start;
    let rel_end = entity_end.min(span.end) - span.start;

    let prefix: String = sentence[..rel_start].iter().collect();
    let entity: String = sentence[rel_start..rel_end].iter().collect();
    let suffix: String = sentence[rel_end..].iter().collect();

    let mut out = String::with_capacity(sentence.len() + open.len() + close.len() + 4);
    out.push_str(&prefix);
    if !prefix.is_empty() && !prefix.ends_with(char::is_whitespace) {
        out.push(' ');
    }
    out.push_str(open);
    out.push(' ');
    out.push_str(&entity);
    out.push(' ');
    out.push_str(close);
    if !suffix.is_empty() && !suffix.starts_with(char::is_whitespace) {
        out.push(' ');
    }
    out.push_str(&suffix);
    out
}

/// Encode one pair as a token-id sequence of at most `max_len`, recording
/// the classification-token and marker positions.
pub fn build_instance(
    pair: &CandidatePair,
    document: &Document,
    tokenizer: &dyn Tokenizer,
    max_len: usize,
) -> Result<EncodedInstance, EncodingError> {
    if max_len < MIN_MAX_LEN {
        return Err(EncodingError::MaxLenTooSmall(max_len));
    }
    let (text1, text2) = mark_entities(document, pair)?;
    let tokens1 = tokenizer.tokenize(&text1);
    let tokens2 = tokenizer.tokenize(&text2);

    let clash = |marker: &'static str, count: usize| EncodingError::MarkerClash {
        doc_id: pair.doc_id.clone(),
        arg1: pair.arg1.clone(),
        arg2: pair.arg2.clone(),
        marker,
        count,
    };
    let span1 = marker_span(&tokens1, S1_MARKER, E1_MARKER).map_err(|(m, c)| clash(m, c))?;
    let span2 = marker_span(&tokens2, S2_MARKER, E2_MARKER).map_err(|(m, c)| clash(m, c))?;
    for (tokens, foreign) in [(&tokens1, [S2_MARKER, E2_MARKER]), (&tokens2, [S1_MARKER, E1_MARKER])]
    {
        for marker in foreign {
            let count = tokens.iter().filter(|t| *t == marker).count();
            if count != 0 {
                return Err(clash(marker, count));
            }
        }
    }

    // [CLS] + two [SEP]s frame the two windows.
    let budget = max_len - 3;
    let (win1, win2) = fit_windows(tokens1.len(), span1, tokens2.len(), span2, budget)
        .ok_or_else(|| EncodingError::MarkersDoNotFit {
            doc_id: pair.doc_id.clone(),
            arg1: pair.arg1.clone(),
            arg2: pair.arg2.clone(),
            max_len,
        })?;

    let specials = tokenizer.specials();
    let ids1: Vec<u32> = tokens1[win1.clone()].iter().map(|t| tokenizer.token_id(t)).collect();
    let ids2: Vec<u32> = tokens2[win2.clone()].iter().map(|t| tokenizer.token_id(t)).collect();

    let mut token_ids = Vec::with_capacity(ids1.len() + ids2.len() + 3);
    let mut segment_flags = Vec::with_capacity(ids1.len() + ids2.len() + 3);
    let cls_at_start = matches!(tokenizer.cls_placement(), ClsPlacement::Start);
    if cls_at_start {
        token_ids.push(specials.cls);
        segment_flags.push(0);
    }
    let base1 = token_ids.len();
    token_ids.extend(&ids1);
    segment_flags.extend(std::iter::repeat_n(0u8, ids1.len()));
    token_ids.push(specials.sep);
    segment_flags.push(0);
    let base2 = token_ids.len();
    token_ids.extend(&ids2);
    segment_flags.extend(std::iter::repeat_n(1u8, ids2.len()));
    token_ids.push(specials.sep);
    segment_flags.push(1);
    let cls = if cls_at_start {
        0
    } else {
        token_ids.push(specials.cls);
        segment_flags.push(1);
        token_ids.len() - 1
    };

    let positions = MarkerPositions {
        cls,
        s1: base1 + (span1.0 - win1.start),
        e1: base1 + (span1.1 - win1.start),
        s2: base2 + (span2.0 - win2.start),
        e2: base2 + (span2.1 - win2.start),
    };
    debug_assert_eq!(token_ids[positions.s1], specials.s1);
    debug_assert_eq!(token_ids[positions.e1], specials.e1);
    debug_assert_eq!(token_ids[positions.s2], specials.s2);
    debug_assert_eq!(token_ids[positions.e2], specials.e2);
    debug_assert_eq!(token_ids[positions.cls], specials.cls);

    Ok(EncodedInstance {
        token_ids,
        segment_flags,
        positions,
        pair_ref: PairRef {
            doc_id: pair.doc_id.clone(),
            arg1: pair.arg1.clone(),
            arg2: pair.arg2.clone(),
        },
    })
}

fn marker_span(
    tokens: &[String],
    open: &'static str,
    close: &'static str,
) -> Result<(usize, usize), (&'static str, usize)> {
    let find_one = |marker: &'static str| {
        let hits: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| (t == marker).then_some(i))
            .collect();
        match hits.as_slice() {
            [one] => Ok(*one),
            _ => Err((marker, hits.len())),
        }
    };
    let s = find_one(open)?;
    let e = find_one(close)?;
    debug_assert!(s < e, "open marker inserted before close marker");
    Ok((s, e))
}

/// Choose contiguous windows over the two token lists whose combined length
/// fits `budget`, each containing its inclusive marker span. The longer
/// sentence shrinks first; within a sentence, the end farther from the
/// marker-span midpoint is dropped. `None` when even the bare marker spans
/// exceed the budget.
fn fit_windows(
    len1: usize,
    span1: (usize, usize),
    len2: usize,
    span2: (usize, usize),
    budget: usize,
) -> Option<(Range<usize>, Range<usize>)> {
    let mut w1 = 0..len1;
    let mut w2 = 0..len2;

    fn can_shrink(w: &Range<usize>, span: (usize, usize)) -> bool {
        w.start < span.0 || w.end > span.1 + 1
    }

    fn shrink(w: &mut Range<usize>, span: (usize, usize)) {
        let mid = (span.0 + span.1) / 2;
        let front = mid - w.start;
        let back = (w.end - 1).saturating_sub(mid);
        if front >= back && w.start < span.0 {
            w.start += 1;
        } else if w.end > span.1 + 1 {
            w.end -= 1;
        } else {
            w.start += 1;
        }
    }

    while w1.len() + w2.len() > budget {
        let first_longer = w1.len() >= w2.len();
        if first_longer && can_shrink(&w1, span1) {
            shrink(&mut w1, span1);
        } else if can_shrink(&w2, span2) {
            shrink(&mut w2, span2);
        } else if can_shrink(&w1, span1) {
            shrink(&mut w1, span1);
        } else {
            return None;
        }
    }
    Some((w1, w2))
}

/// Encode pairs in order and group them into padded batches of at most
/// `batch_size`. Encoding failures carry the offending pair's identity.
pub fn batch_encode(
    pairs: &[CandidatePair],
    corpus: &Corpus,
    tokenizer: &dyn Tokenizer,
    max_len: usize,
    batch_size: usize,
) -> Result<Vec<EncodedBatch>, EncodingError> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut batches = Vec::new();
    for chunk in pairs.chunks(batch_size) {
        let mut instances = Vec::with_capacity(chunk.len());
        for pair in chunk {
            let document = corpus
                .get(&pair.doc_id)
                .ok_or_else(|| EncodingError::UnknownDocument(pair.doc_id.clone()))?;
            instances.push(build_instance(pair, document, tokenizer, max_len)?);
        }
        batches.push(pad_batch(instances, tokenizer.specials().pad));
    }
    Ok(batches)
}

/// Pad a group of instances to their longest member.
pub fn pad_batch(instances: Vec<EncodedInstance>, pad_id: u32) -> EncodedBatch {
    let padded_len = instances.iter().map(EncodedInstance::len).max().unwrap_or(0);
    let mut batch = EncodedBatch {
        token_ids: Vec::with_capacity(instances.len()),
        segment_flags: Vec::with_capacity(instances.len()),
        mask: Vec::with_capacity(instances.len()),
        positions: Vec::with_capacity(instances.len()),
        pair_refs: Vec::with_capacity(instances.len()),
        padded_len,
    };
    for instance in instances {
        let real = instance.len();
        let mut ids = instance.token_ids;
        let mut segs = instance.segment_flags;
        let mut mask = vec![1u8; real];
        ids.resize(padded_len, pad_id);
        segs.resize(padded_len, 0);
        mask.resize(padded_len, 0);
        batch.token_ids.push(ids);
        batch.segment_flags.push(segs);
        batch.mask.push(mask);
        batch.positions.push(instance.positions);
        batch.pair_refs.push(instance.pair_ref);
    }
    batch
}

/// Token texts of an instance, for debugging and round-trip checks.
pub fn decode_tokens(instance: &EncodedInstance, tokenizer: &dyn Tokenizer) -> Vec<String> {
    instance
        .token_ids
        .iter()
        .map(|&id| tokenizer.token_text(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

/// One-line debug record: pair identity, decoded tokens, and the five
/// special positions.
pub fn dump_instance(instance: &EncodedInstance, tokenizer: &dyn Tokenizer) -> String {
    let p = instance.positions;
    format!(
        "{}\t{}\t{}\t{}\tcls={} s1={} e1={} s2={} e2={}",
        instance.pair_ref.doc_id,
        instance.pair_ref.arg1,
        instance.pair_ref.arg2,
        decode_tokens(instance, tokenizer).join(" "),
        p.cls,
        p.s1,
        p.e1,
        p.s2,
        p.e2
    )
}
