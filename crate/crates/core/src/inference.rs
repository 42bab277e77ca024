//! Applying a trained bundle to candidate pairs: CSD routing, the binary
//! strategy's rule-based category inference, and standoff prediction output.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::candidates::CandidatePair;
use crate::corpus::{Corpus, CorpusError, Document};
use crate::encoding::{batch_encode, EncodingError, Tokenizer};
use crate::model::{forward, Encoder, GroupKey, ModelBundle, ModelError, Regime, Strategy};
use crate::schema::RelationSchema;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("bundle has no model for group {group} (pair csd {csd})")]
    MissingGroup { group: String, csd: usize },
    #[error("types ({arg1_type}, {arg2_type}) admit {} categories; configure a priority list", categories.len())]
    AmbiguousCategory {
        arg1_type: String,
        arg2_type: String,
        categories: Vec<String>,
    },
    #[error("no relation category defined between types ({arg1_type}, {arg2_type})")]
    NoCategoryDefined {
        arg1_type: String,
        arg2_type: String,
    },
    #[error("{doc_id} line {line}: malformed prediction record: {reason}")]
    MalformedPrediction {
        doc_id: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One extracted relation with its schema category and the probability of
/// the chosen class (the POSITIVE probability under the binary strategy).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedRelation {
    pub doc_id: String,
    pub arg1: String,
    pub arg2: String,
    pub category: String,
    pub score: f64,
}

/// What to do when a DISTANCE-SPECIFIC bundle has no model for a pair's CSD
/// (the stratum was skipped at training time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingGroupPolicy {
    #[default]
    Error,
    /// Treat the pair as negative and emit nothing.
    SkipPair,
}

#[derive(Debug, Clone)]
pub struct InferenceOptions {
    /// Override argmax with a positive-probability cutoff.
    pub positive_threshold: Option<f64>,
    pub missing_group: MissingGroupPolicy,
    pub batch_size: usize,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            positive_threshold: None,
            missing_group: MissingGroupPolicy::Error,
            batch_size: 32,
        }
    }
}

/// The routing group responsible for a pair.
pub fn route_by_csd<E>(
    pair: &CandidatePair,
    bundle: &ModelBundle<E>,
) -> Result<GroupKey, InferenceError> {
    let key = match bundle.regime {
        Regime::Unified => GroupKey::All,
        Regime::DistanceSpecific => GroupKey::Csd(pair.csd),
    };
    if bundle.groups.contains_key(&key) {
        Ok(key)
    } else {
        Err(InferenceError::MissingGroup {
            group: key.to_string(),
            csd: pair.csd,
        })
    }
}

/// Rule-based category inference for the binary strategy: the unique
/// category defined between two semantic types, or the highest-priority one
/// when the schema is ambiguous and a priority list is configured.
pub fn infer_category(
    arg1_type: &str,
    arg2_type: &str,
    schema: &RelationSchema,
) -> Result<String, InferenceError> {
    let compatible = schema.compatible_categories(arg1_type, arg2_type);
    match compatible.len() {
        0 => Err(InferenceError::NoCategoryDefined {
            arg1_type: arg1_type.to_string(),
            arg2_type: arg2_type.to_string(),
        }),
        1 => Ok(compatible[0].category.clone()),
        _ => {
            if let Some(order) = schema.priority() {
                for preferred in order {
                    if compatible.iter().any(|c| &c.category == preferred) {
                        return Ok(preferred.clone());
                    }
                }
            }
            Err(InferenceError::AmbiguousCategory {
                arg1_type: arg1_type.to_string(),
                arg2_type: arg2_type.to_string(),
                categories: compatible.into_iter().map(|c| c.category).collect(),
            })
        }
    }
}

/// Classify pairs with default options.
pub fn predict<E: Encoder>(
    pairs: &[CandidatePair],
    corpus: &Corpus,
    bundle: &ModelBundle<E>,
    tokenizer: &dyn Tokenizer,
    schema: &RelationSchema,
) -> Result<Vec<PredictedRelation>, InferenceError> {
    predict_with(pairs, corpus, bundle, tokenizer, schema, &InferenceOptions::default())
}

/// Route pairs to their CSD group, classify each batch, and keep the
/// positive decisions. Output order follows the input pair order.
pub fn predict_with<E: Encoder>(
    pairs: &[CandidatePair],
    corpus: &Corpus,
    bundle: &ModelBundle<E>,
    tokenizer: &dyn Tokenizer,
    schema: &RelationSchema,
    options: &InferenceOptions,
) -> Result<Vec<PredictedRelation>, InferenceError> {
    let mut grouped: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (index, pair) in pairs.iter().enumerate() {
        match route_by_csd(pair, bundle) {
            Ok(key) => grouped.entry(key).or_default().push(index),
            Err(err) => match options.missing_group {
                MissingGroupPolicy::Error => return Err(err),
                MissingGroupPolicy::SkipPair => {}
            },
        }
    }

    let mut indexed: Vec<(usize, PredictedRelation)> = Vec::new();
    for (key, indices) in grouped {
        let model = &bundle.groups[&key];
        let strategy = model.config.strategy;
        let group_pairs: Vec<CandidatePair> =
            indices.iter().map(|&i| pairs[i].clone()).collect();
        let batches = batch_encode(
            &group_pairs,
            corpus,
            tokenizer,
            model.config.max_len,
            options.batch_size,
        )?;
        let mut cursor = 0usize;
        for batch in batches {
            let probs = forward(&batch, &model.encoder, &model.head)?;
            for row in probs.rows() {
                let pair = &pairs[indices[cursor]];
                let (argmax, argmax_prob) = row
                    .iter()
                    .copied()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite probabilities"))
                    .expect("non-empty class row");
                let decision = match strategy {
                    Strategy::Binary => {
                        let positive_prob = row[1];
                        let is_positive = match options.positive_threshold {
                            Some(threshold) => positive_prob >= threshold,
                            None => argmax == 1,
                        };
                        is_positive.then(|| {
                            infer_category(&pair.arg1_type, &pair.arg2_type, schema)
                                .map(|category| (category, positive_prob))
                        })
                    }
                    Strategy::MultiClass => {
                        let negative_index = model.head.num_classes() - 1;
                        let above = options
                            .positive_threshold
                            .is_none_or(|threshold| argmax_prob >= threshold);
                        (argmax != negative_index && above).then(|| {
                            Ok((model.head.classes()[argmax].clone(), argmax_prob))
                        })
                    }
                };
                if let Some(outcome) = decision {
                    let (category, score) = outcome?;
                    indexed.push((
                        indices[cursor],
                        PredictedRelation {
                            doc_id: pair.doc_id.clone(),
                            arg1: pair.arg1.clone(),
                            arg2: pair.arg2.clone(),
                            category,
                            score,
                        },
                    ));
                }
                cursor += 1;
            }
        }
    }

    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, r)| r).collect())
}

fn id_sort_key(id: &str) -> (u64, String) {
    let numeric = id
        .get(1..)
        .and_then(|rest| rest.parse::<u64>().ok())
        .unwrap_or(u64::MAX);
    (numeric, id.to_string())
}

/// Deterministic ordering for prediction output.
fn sort_relations(relations: &mut [&PredictedRelation]) {
    relations.sort_by(|a, b| {
        (id_sort_key(&a.arg1), id_sort_key(&a.arg2), &a.category).cmp(&(
            id_sort_key(&b.arg1),
            id_sort_key(&b.arg2),
            &b.category,
        ))
    });
}

/// Standoff text (R-lines in schema canonical role order) for one
/// document's predictions. An empty slice yields an empty string.
pub fn predictions_to_standoff(relations: &[&PredictedRelation]) -> String {
    let mut ordered: Vec<&PredictedRelation> = relations.to_vec();
    sort_relations(&mut ordered);
    let mut out = String::new();
    for (n, relation) in ordered.iter().enumerate() {
        out.push_str(&format!(
            "R{}\t{} Arg1:{} Arg2:{}\n",
            n + 1,
            relation.category,
            relation.arg1,
            relation.arg2
        ));
    }
    out
}

/// Write one `<doc_id>.ann` per document (present even when empty) plus a
/// `scores.tsv` listing every prediction with its probability.
pub fn write_predictions(
    relations: &[PredictedRelation],
    doc_ids: impl IntoIterator<Item = String>,
    output_dir: &Path,
) -> Result<(), InferenceError> {
    let io_err = |path: &Path, e: std::io::Error| InferenceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(output_dir).map_err(|e| io_err(output_dir, e))?;

    let mut by_doc: BTreeMap<String, Vec<&PredictedRelation>> = BTreeMap::new();
    for doc_id in doc_ids {
        by_doc.entry(doc_id).or_default();
    }
    for relation in relations {
        by_doc.entry(relation.doc_id.clone()).or_default().push(relation);
    }

    let mut scores = String::new();
    for (doc_id, doc_relations) in &by_doc {
        let path = output_dir.join(format!("{doc_id}.ann"));
        let mut ordered = doc_relations.clone();
        sort_relations(&mut ordered);
        std::fs::write(&path, predictions_to_standoff(&ordered))
            .map_err(|e| io_err(&path, e))?;
        for relation in ordered {
            scores.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\n",
                relation.doc_id, relation.arg1, relation.arg2, relation.category, relation.score
            ));
        }
    }
    let scores_path = output_dir.join("scores.tsv");
    std::fs::write(&scores_path, scores).map_err(|e| io_err(&scores_path, e))
}

/// Parse a prediction file's R-lines back into [`PredictedRelation`]s
/// (scores default to 1.0). Entity lines are tolerated and ignored so gold
/// files can be scored as predictions; reference validity is checked by the
/// scorer, not here.
pub fn parse_prediction_standoff(
    annotation_text: &str,
    doc_id: &str,
) -> Result<Vec<PredictedRelation>, InferenceError> {
    let mut relations = Vec::new();
    for (lineno, raw) in annotation_text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with('T') {
            continue;
        }
        let malformed = |reason: &str| InferenceError::MalformedPrediction {
            doc_id: doc_id.to_string(),
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let mut fields = line.splitn(2, '\t');
        let id = fields.next().unwrap_or_default();
        if !id.starts_with('R') {
            return Err(malformed("expected an R-line"));
        }
        let body = fields.next().ok_or_else(|| malformed("expected <id><TAB><body>"))?;
        let parts: Vec<&str> = body.split_whitespace().collect();
        let [category, arg1, arg2] = parts.as_slice() else {
            return Err(malformed("expected <Category> Arg1:T<id> Arg2:T<id>"));
        };
        let arg1 = arg1
            .strip_prefix("Arg1:")
            .ok_or_else(|| malformed("first argument must be Arg1:<id>"))?;
        let arg2 = arg2
            .strip_prefix("Arg2:")
            .ok_or_else(|| malformed("second argument must be Arg2:<id>"))?;
        relations.push(PredictedRelation {
            doc_id: doc_id.to_string(),
            arg1: arg1.to_string(),
            arg2: arg2.to_string(),
            category: category.to_string(),
            score: 1.0,
        });
    }
    Ok(relations)
}

/// Load every `<doc>.ann` under a predictions directory, keyed like the
/// gold corpus. Documents without a prediction file yield no relations.
pub fn load_predictions_dir(
    dir: &Path,
    documents: impl IntoIterator<Item = impl AsRef<str>>,
) -> Result<Vec<PredictedRelation>, InferenceError> {
    let mut all = Vec::new();
    for doc_id in documents {
        let doc_id = doc_id.as_ref();
        let path = dir.join(format!("{doc_id}.ann"));
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| InferenceError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        all.extend(parse_prediction_standoff(&text, doc_id)?);
    }
    Ok(all)
}

/// The entities a document-level prediction may reference.
pub fn known_entities(document: &Document) -> impl Iterator<Item = &str> {
    document.entities.keys().map(String::as_str)
}
