//! Strict relation scoring with gold entities: per-category and
//! micro-averaged precision/recall/F1.
//!
//! A prediction is a true positive only when a gold relation in the same
//! document has the same unordered entity pair and the same category. A
//! correct pair under the wrong category counts against both sides: a false
//! positive in the predicted category and a false negative in the gold one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, GoldRelation};
use crate::inference::PredictedRelation;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{doc_id}: prediction references entity {entity_id} absent from the gold entity file")]
    EntitySpaceMismatch { doc_id: String, entity_id: String },
    #[error("prediction references document {0:?} absent from the gold corpus")]
    UnknownDocument(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// TP/FP/FN counts with the derived metrics. Any metric with a zero
/// denominator is 0.0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Per-category and micro-averaged strict scores.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub per_category: BTreeMap<String, Metrics>,
    pub micro: Metrics,
    /// Gold relations the candidate generator could not represent; bounds
    /// achievable recall. Supplied by the pipeline, not computed here.
    pub skipped_gold_count: usize,
    /// Identical predictions collapsed before scoring.
    pub duplicates_collapsed: usize,
}

impl EvalReport {
    pub fn with_skipped_gold(mut self, count: usize) -> Self {
        self.skipped_gold_count = count;
        self
    }
}

/// Gold annotations for scoring: the entity-id space and relations of each
/// document.
#[derive(Debug, Clone, Default)]
pub struct GoldStandard {
    pub per_doc: BTreeMap<String, DocGold>,
}

#[derive(Debug, Clone, Default)]
pub struct DocGold {
    pub entity_ids: BTreeSet<String>,
    pub relations: Vec<GoldRelation>,
}

impl GoldStandard {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut per_doc = BTreeMap::new();
        for doc in corpus.docs() {
            per_doc.insert(
                doc.doc_id.clone(),
                DocGold {
                    entity_ids: doc.entities.keys().cloned().collect(),
                    relations: doc.gold_relations.clone(),
                },
            );
        }
        GoldStandard { per_doc }
    }

    pub fn insert_doc(
        &mut self,
        doc_id: impl Into<String>,
        entity_ids: impl IntoIterator<Item = String>,
        relations: Vec<GoldRelation>,
    ) {
        self.per_doc.insert(
            doc_id.into(),
            DocGold {
                entity_ids: entity_ids.into_iter().collect(),
                relations,
            },
        );
    }

    pub fn total_relations(&self) -> usize {
        self.per_doc.values().map(|d| d.relations.len()).sum()
    }
}

type MatchKey = (String, (String, String), String);

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Score predictions against gold. Matching is strict (unordered entity
/// pair plus category must both match); each gold relation matches at most
/// one prediction and vice versa. Duplicate identical predictions are
/// collapsed first and reported on the result.
pub fn score(
    gold: &GoldStandard,
    predicted: &[PredictedRelation],
) -> Result<EvalReport, EvalError> {
    let mut pred_set: BTreeSet<MatchKey> = BTreeSet::new();
    for relation in predicted {
        let doc = gold
            .per_doc
            .get(&relation.doc_id)
            .ok_or_else(|| EvalError::UnknownDocument(relation.doc_id.clone()))?;
        for entity in [&relation.arg1, &relation.arg2] {
            if !doc.entity_ids.contains(entity) {
                return Err(EvalError::EntitySpaceMismatch {
                    doc_id: relation.doc_id.clone(),
                    entity_id: entity.clone(),
                });
            }
        }
        pred_set.insert((
            relation.doc_id.clone(),
            unordered(&relation.arg1, &relation.arg2),
            relation.category.clone(),
        ));
    }
    let duplicates_collapsed = predicted.len() - pred_set.len();

    let mut gold_set: BTreeSet<MatchKey> = BTreeSet::new();
    for (doc_id, doc) in &gold.per_doc {
        for relation in &doc.relations {
            gold_set.insert((
                doc_id.clone(),
                unordered(&relation.arg1, &relation.arg2),
                relation.category.clone(),
            ));
        }
    }

    let categories: BTreeSet<&String> = gold_set
        .iter()
        .map(|(_, _, c)| c)
        .chain(pred_set.iter().map(|(_, _, c)| c))
        .collect();

    let mut per_category = BTreeMap::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for category in categories {
        let tp = pred_set
            .iter()
            .filter(|key| &key.2 == category && gold_set.contains(*key))
            .count();
        let fp = pred_set.iter().filter(|(_, _, c)| c == category).count() - tp;
        let fn_ = gold_set.iter().filter(|(_, _, c)| c == category).count() - tp;
        per_category.insert(category.clone(), Metrics::from_counts(tp, fp, fn_));
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }

    Ok(EvalReport {
        per_category,
        micro: Metrics::from_counts(tp_all, fp_all, fn_all),
        skipped_gold_count: 0,
        duplicates_collapsed,
    })
}

/// Score each cross-sentence distance separately. Relations are bucketed by
/// the CSD of their entity pair; bucket counts sum to the global report.
pub fn per_csd_breakdown(
    corpus: &Corpus,
    predicted: &[PredictedRelation],
) -> Result<BTreeMap<usize, EvalReport>, EvalError> {
    let csd_of = |doc_id: &str, arg1: &str, arg2: &str| -> Result<usize, EvalError> {
        let doc = corpus
            .get(doc_id)
            .ok_or_else(|| EvalError::UnknownDocument(doc_id.to_string()))?;
        let e1 = doc.entity(arg1).map_err(|_| EvalError::EntitySpaceMismatch {
            doc_id: doc_id.to_string(),
            entity_id: arg1.to_string(),
        })?;
        let e2 = doc.entity(arg2).map_err(|_| EvalError::EntitySpaceMismatch {
            doc_id: doc_id.to_string(),
            entity_id: arg2.to_string(),
        })?;
        Ok(crate::candidates::compute_csd(doc, e1, e2)?)
    };

    let mut gold_buckets: BTreeMap<usize, GoldStandard> = BTreeMap::new();
    let mut pred_buckets: BTreeMap<usize, Vec<PredictedRelation>> = BTreeMap::new();
    for doc in corpus.docs() {
        for relation in &doc.gold_relations {
            let csd = csd_of(&doc.doc_id, &relation.arg1, &relation.arg2)?;
            gold_buckets
                .entry(csd)
                .or_default()
                .per_doc
                .entry(doc.doc_id.clone())
                .or_default()
                .relations
                .push(relation.clone());
        }
    }
    for relation in predicted {
        let csd = csd_of(&relation.doc_id, &relation.arg1, &relation.arg2)?;
        pred_buckets.entry(csd).or_default().push(relation.clone());
        gold_buckets.entry(csd).or_default();
    }

    // Every bucket shares the full per-document entity space.
    let mut reports = BTreeMap::new();
    let buckets: BTreeSet<usize> = gold_buckets.keys().copied().collect();
    for csd in buckets {
        let mut bucket_gold = gold_buckets.remove(&csd).unwrap_or_default();
        for doc in corpus.docs() {
            bucket_gold
                .per_doc
                .entry(doc.doc_id.clone())
                .or_default()
                .entity_ids = doc.entities.keys().cloned().collect();
        }
        let bucket_preds = pred_buckets.remove(&csd).unwrap_or_default();
        reports.insert(csd, score(&bucket_gold, &bucket_preds)?);
    }
    Ok(reports)
}

fn format_row(label: &str, m: &Metrics) -> String {
    format!(
        "{label:<24} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}\n",
        m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
    )
}

/// Aligned plain-text table, one row per category plus the OVERALL row.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}",
        "category", "tp", "fp", "fn", "precision", "recall", "f1"
    );
    for (category, metrics) in &report.per_category {
        out.push_str(&format_row(category, metrics));
    }
    out.push_str(&format_row("OVERALL", &report.micro));
    if report.skipped_gold_count > 0 {
        let _ = writeln!(
            out,
            "note: {} gold relation(s) outside candidate generation bound recall",
            report.skipped_gold_count
        );
    }
    if report.duplicates_collapsed > 0 {
        let _ = writeln!(
            out,
            "warning: collapsed {} duplicate prediction(s)",
            report.duplicates_collapsed
        );
    }
    out
}

/// Machine-readable lines: `category tp fp fn precision recall f1`,
/// tab-separated, micro row labeled OVERALL.
pub fn render_records(report: &EvalReport) -> String {
    let mut out = String::new();
    let mut write_one = |label: &str, m: &Metrics| {
        let _ = writeln!(
            out,
            "{label}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
        );
    };
    for (category, metrics) in &report.per_category {
        write_one(category, metrics);
    }
    write_one("OVERALL", &report.micro);
    out
}
