//! Candidate concept pair generation, gold labeling, and CSD stratification.
//!
//! Two entities form a candidate pair only if the schema defines a relation
//! category between their semantic types and their cross-sentence distance
//! (CSD) does not exceed the configured maximum. Pairs are unordered at
//! generation; Arg1/Arg2 roles come from the schema's declared order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Document, Entity, GoldRelation};
use crate::schema::RelationSchema;

/// Label assigned to candidate pairs with no gold relation.
pub const NEGATIVE_LABEL: &str = "NEGATIVE";

/// Default CSD ceiling; wider distances add negatives without gain.
pub const DEFAULT_MAX_CSD: usize = 4;

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("{doc_id}: cannot assign Arg1/Arg2 roles for same-type pair ({semantic_type}, {semantic_type}) without a tiebreak")]
    AmbiguousRole {
        doc_id: String,
        semantic_type: String,
    },
    #[error("{doc_id}: gold relations assign both {category_a:?} and {category_b:?} to pair ({arg1}, {arg2})")]
    ConflictingGold {
        doc_id: String,
        arg1: String,
        arg2: String,
        category_a: String,
        category_b: String,
    },
    #[error("candidate set holds pairs for {found:?}, expected document {expected:?}")]
    DocumentMismatch { expected: String, found: String },
    #[error("candidate record line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One classifiable unit: two entity references with fixed roles, the pair's
/// CSD, and a gold label (or [`NEGATIVE_LABEL`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePair {
    pub doc_id: String,
    pub arg1: String,
    pub arg2: String,
    pub arg1_type: String,
    pub arg2_type: String,
    pub csd: usize,
    pub label: String,
}

impl CandidatePair {
    pub fn is_positive(&self) -> bool {
        self.label != NEGATIVE_LABEL
    }

    /// Unordered entity-id key for gold matching.
    pub fn pair_key(&self) -> (String, String) {
        unordered_key(&self.arg1, &self.arg2)
    }
}

/// A collection of candidate pairs with its generation parameters and a
/// per-label tally.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub pairs: Vec<CandidatePair>,
    pub max_csd: usize,
    pub schema_name: String,
    pub counts: BTreeMap<String, usize>,
}

impl CandidateSet {
    pub fn from_pairs(
        pairs: Vec<CandidatePair>,
        max_csd: usize,
        schema_name: impl Into<String>,
    ) -> Self {
        let counts = tally(&pairs);
        CandidateSet {
            pairs,
            max_csd,
            schema_name: schema_name.into(),
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_positive()).count()
    }

    /// Concatenate per-document sets generated with identical parameters.
    pub fn concat(sets: impl IntoIterator<Item = CandidateSet>) -> Option<CandidateSet> {
        let mut iter = sets.into_iter();
        let mut merged = iter.next()?;
        for set in iter {
            debug_assert_eq!(set.max_csd, merged.max_csd);
            debug_assert_eq!(set.schema_name, merged.schema_name);
            merged.pairs.extend(set.pairs);
        }
        merged.counts = tally(&merged.pairs);
        Some(merged)
    }
}

fn tally(pairs: &[CandidatePair]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for p in pairs {
        *counts.entry(p.label.clone()).or_insert(0) += 1;
    }
    counts
}

fn unordered_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Absolute difference of the two entities' sentence indices. 0 means same
/// sentence, 1 consecutive sentences.
pub fn compute_csd(
    document: &Document,
    e1: &Entity,
    e2: &Entity,
) -> Result<usize, CorpusError> {
    let i1 = document.sentence_index_of(e1)?;
    let i2 = document.sentence_index_of(e2)?;
    Ok(i1.abs_diff(i2))
}

/// Enumerate every schema-compatible unordered entity pair within `max_csd`,
/// roles assigned per the schema's declared order, deterministically ordered
/// by Arg1 then Arg2 start offset. All labels start as [`NEGATIVE_LABEL`].
pub fn generate_candidates(
    document: &Document,
    schema: &RelationSchema,
    max_csd: usize,
) -> Result<CandidateSet, CandidateError> {
    let mut entities: Vec<&Entity> = document.entities.values().collect();
    entities.sort_by(|a, b| {
        (a.start, a.end, &a.entity_id).cmp(&(b.start, b.end, &b.entity_id))
    });

    let mut roled: Vec<(&Entity, &Entity, usize)> = Vec::new();
    for (i, a) in entities.iter().enumerate() {
        for b in &entities[i + 1..] {
            let Some(rule) = schema.rule_for_pair(&a.semantic_type, &b.semantic_type) else {
                continue;
            };
            let csd = compute_csd(document, a, b)?;
            if csd > max_csd {
                continue;
            }
            let (arg1, arg2) = if rule.arg1_type == rule.arg2_type {
                if !schema.self_pair_tiebreak() {
                    return Err(CandidateError::AmbiguousRole {
                        doc_id: document.doc_id.clone(),
                        semantic_type: a.semantic_type.clone(),
                    });
                }
                (*a, *b) // earlier offset takes Arg1
            } else if a.semantic_type == rule.arg1_type {
                (*a, *b)
            } else {
                (*b, *a)
            };
            roled.push((arg1, arg2, csd));
        }
    }

    roled.sort_by(|(a1, a2, _), (b1, b2, _)| {
        (a1.start, a1.end, &a1.entity_id, a2.start, a2.end, &a2.entity_id).cmp(&(
            b1.start,
            b1.end,
            &b1.entity_id,
            b2.start,
            b2.end,
            &b2.entity_id,
        ))
    });

    let pairs = roled
        .into_iter()
        .map(|(arg1, arg2, csd)| CandidatePair {
            doc_id: document.doc_id.clone(),
            arg1: arg1.entity_id.clone(),
            arg2: arg2.entity_id.clone(),
            arg1_type: arg1.semantic_type.clone(),
            arg2_type: arg2.semantic_type.clone(),
            csd,
            label: NEGATIVE_LABEL.to_string(),
        })
        .collect();
    Ok(CandidateSet::from_pairs(pairs, max_csd, schema.name()))
}

/// Why a gold relation received no candidate pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    /// The pair's CSD exceeds the generation ceiling.
    ExceedsMaxCsd { csd: usize },
    /// The gold category is not defined for the pair's semantic types.
    SchemaIncompatible,
    /// The pair is absent from the supplied candidate set for another
    /// reason (set not generated from this document's parameters).
    NotInCandidates,
}

/// A gold relation that cannot be represented in the candidate set. These
/// bound achievable recall and are surfaced rather than silently dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedGold {
    pub doc_id: String,
    pub relation: GoldRelation,
    pub reason: SkipReason,
}

/// A labeled candidate set plus the gold relations it could not represent.
#[derive(Debug, Clone)]
pub struct LabeledCandidates {
    pub set: CandidateSet,
    pub skipped: Vec<SkippedGold>,
}

/// Assign gold categories to matching pairs; everything else stays
/// [`NEGATIVE_LABEL`]. Matching is on the unordered entity-id pair. Gold
/// relations duplicated with identical categories collapse to one; the same
/// pair under two categories is an error.
pub fn label_candidates(
    candidate_set: CandidateSet,
    gold: &[GoldRelation],
    document: &Document,
    schema: &RelationSchema,
) -> Result<LabeledCandidates, CandidateError> {
    for pair in &candidate_set.pairs {
        if pair.doc_id != document.doc_id {
            return Err(CandidateError::DocumentMismatch {
                expected: document.doc_id.clone(),
                found: pair.doc_id.clone(),
            });
        }
    }

    let mut gold_by_pair: BTreeMap<(String, String), &GoldRelation> = BTreeMap::new();
    for relation in gold {
        let key = unordered_key(&relation.arg1, &relation.arg2);
        match gold_by_pair.get(&key) {
            Some(existing) if existing.category != relation.category => {
                return Err(CandidateError::ConflictingGold {
                    doc_id: document.doc_id.clone(),
                    arg1: key.0,
                    arg2: key.1,
                    category_a: existing.category.clone(),
                    category_b: relation.category.clone(),
                });
            }
            Some(_) => {} // exact duplicate, collapse
            None => {
                gold_by_pair.insert(key, relation);
            }
        }
    }

    let mut set = candidate_set;
    let mut matched: BTreeSet<(String, String)> = BTreeSet::new();
    for pair in &mut set.pairs {
        let key = pair.pair_key();
        if let Some(relation) = gold_by_pair.get(&key) {
            let compatible = schema
                .compatible_categories(&pair.arg1_type, &pair.arg2_type)
                .iter()
                .any(|c| c.category == relation.category);
            if compatible {
                pair.label = relation.category.clone();
                matched.insert(key);
            }
        }
    }
    set.counts = tally(&set.pairs);

    let mut skipped = Vec::new();
    for (key, relation) in gold_by_pair {
        if matched.contains(&key) {
            continue;
        }
        let e1 = document.entity(&relation.arg1)?;
        let e2 = document.entity(&relation.arg2)?;
        let compatible = schema
            .compatible_categories(&e1.semantic_type, &e2.semantic_type)
            .iter()
            .any(|c| c.category == relation.category);
        let reason = if !compatible {
            SkipReason::SchemaIncompatible
        } else {
            let csd = compute_csd(document, e1, e2)?;
            if csd > set.max_csd {
                SkipReason::ExceedsMaxCsd { csd }
            } else {
                SkipReason::NotInCandidates
            }
        };
        skipped.push(SkippedGold {
            doc_id: document.doc_id.clone(),
            relation: relation.clone(),
            reason,
        });
    }

    Ok(LabeledCandidates { set, skipped })
}

/// Generate and label candidates for every document of a corpus,
/// concatenated in doc-id order.
pub fn generate_labeled_corpus(
    corpus: &Corpus,
    schema: &RelationSchema,
    max_csd: usize,
) -> Result<LabeledCandidates, CandidateError> {
    let mut sets = Vec::new();
    let mut skipped = Vec::new();
    for doc in corpus.docs() {
        let generated = generate_candidates(doc, schema, max_csd)?;
        let labeled = label_candidates(generated, &doc.gold_relations, doc, schema)?;
        sets.push(labeled.set);
        skipped.extend(labeled.skipped);
    }
    let set = CandidateSet::concat(sets)
        .unwrap_or_else(|| CandidateSet::from_pairs(Vec::new(), max_csd, schema.name()));
    Ok(LabeledCandidates { set, skipped })
}

/// Partition a set by exact CSD value. The parts' union is the input.
pub fn stratify_by_csd(candidate_set: &CandidateSet) -> BTreeMap<usize, CandidateSet> {
    let mut strata: BTreeMap<usize, Vec<CandidatePair>> = BTreeMap::new();
    for pair in &candidate_set.pairs {
        strata.entry(pair.csd).or_default().push(pair.clone());
    }
    strata
        .into_iter()
        .map(|(csd, pairs)| {
            (
                csd,
                CandidateSet::from_pairs(pairs, candidate_set.max_csd, &candidate_set.schema_name),
            )
        })
        .collect()
}

/// Keep at most `cap` negatives per CSD value, preserving order. Positives
/// are never dropped.
pub fn apply_negative_cap(candidate_set: CandidateSet, cap: usize) -> CandidateSet {
    let mut kept_negatives: BTreeMap<usize, usize> = BTreeMap::new();
    let pairs: Vec<CandidatePair> = candidate_set
        .pairs
        .into_iter()
        .filter(|p| {
            if p.is_positive() {
                return true;
            }
            let n = kept_negatives.entry(p.csd).or_insert(0);
            *n += 1;
            *n <= cap
        })
        .collect();
    CandidateSet::from_pairs(pairs, candidate_set.max_csd, candidate_set.schema_name)
}

/// Serialize pairs as tab-separated records, one per line, in the field
/// order `doc_id arg1 arg2 arg1_type arg2_type csd label`.
pub fn dump_candidates(candidate_set: &CandidateSet) -> String {
    let mut out = String::new();
    for p in &candidate_set.pairs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.doc_id, p.arg1, p.arg2, p.arg1_type, p.arg2_type, p.csd, p.label
        )
        .expect("string write");
    }
    out
}

/// Parse records produced by [`dump_candidates`].
pub fn parse_candidate_records(text: &str) -> Result<Vec<CandidatePair>, CandidateError> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [doc_id, arg1, arg2, arg1_type, arg2_type, csd, label] = fields.as_slice() else {
            return Err(CandidateError::MalformedRecord {
                line: lineno + 1,
                reason: "expected 7 tab-separated fields".into(),
            });
        };
        let csd = csd.parse().map_err(|_| CandidateError::MalformedRecord {
            line: lineno + 1,
            reason: "csd is not an integer".into(),
        })?;
        pairs.push(CandidatePair {
            doc_id: doc_id.to_string(),
            arg1: arg1.to_string(),
            arg2: arg2.to_string(),
            arg1_type: arg1_type.to_string(),
            arg2_type: arg2_type.to_string(),
            csd,
            label: label.to_string(),
        });
    }
    Ok(pairs)
}
