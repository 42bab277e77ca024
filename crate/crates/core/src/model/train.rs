//! Training loop and five-fold cross-validation.
//!
//! Training is a single deterministic sequence of Adam updates: the seed
//! fixes parameter initialization and the per-epoch shuffle, all math is
//! f64 on one thread, so identical (seed, config, data) reproduce final
//! parameters bitwise.

use std::collections::BTreeMap;

use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    extract_batch, Adam, Encoder, GroupKey, ModelBundle, ModelError, Regime, RelationHead,
    Strategy, TrainConfig, TrainedModel,
};
use crate::candidates::{CandidatePair, CandidateSet, NEGATIVE_LABEL};
use crate::corpus::{Corpus, GoldRelation};
use crate::encoding::{build_instance, pad_batch, EncodedBatch, EncodedInstance, Tokenizer};
use crate::evaluation::{score, GoldStandard};
use crate::inference::{predict_with, InferenceOptions, MissingGroupPolicy};
use crate::schema::RelationSchema;

/// Mean cross-entropy loss of a batch and its gradient with respect to
/// every parameter, encoder first then head, in their flat layouts.
///
/// `class_weights`, when given, rescales each example's loss by its class
/// weight and normalizes by the batch's total weight.
pub fn loss_and_gradients<E: Encoder>(
    encoder: &E,
    head: &RelationHead,
    batch: &EncodedBatch,
    class_indices: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Vec<f64>), ModelError> {
    let batch_size = batch.len();
    assert_eq!(batch_size, class_indices.len());
    let hidden = encoder.hidden_size();
    let scheme = head.scheme();

    let (output, tape) = encoder.forward_train(batch)?;
    let reps = extract_batch(&output, &batch.positions, scheme)?;
    let probs = head.forward(&reps);

    let weight_of = |b: usize| class_weights.map_or(1.0, |w| w[class_indices[b]]);
    let total_weight: f64 = (0..batch_size).map(weight_of).sum();
    if total_weight <= 0.0 {
        return Err(ModelError::InvalidConfig(
            "class weights zero out the whole batch".into(),
        ));
    }

    let mut loss = 0.0;
    let mut d_logits = probs;
    for b in 0..batch_size {
        let target = class_indices[b];
        let weight = weight_of(b);
        loss -= weight * d_logits[[b, target]].max(1e-300).ln();
        d_logits[[b, target]] -= 1.0;
        let mut row = d_logits.row_mut(b);
        row *= weight / total_weight;
    }
    loss /= total_weight;

    // Head backward.
    let d_weight = reps.t().dot(&d_logits);
    let d_bias = d_logits.sum_axis(Axis(0));
    let d_reps = d_logits.dot(&head.weight().t());

    // Scatter representation gradients back onto the encoder output.
    let (_, seq_len, _) = output.dim();
    let mut d_output = Array3::zeros((batch_size, seq_len, hidden));
    for b in 0..batch_size {
        for (slot, position) in scheme.positions(&batch.positions[b]).into_iter().enumerate() {
            let mut target = d_output.slice_mut(ndarray::s![b, position, ..]);
            target += &d_reps.slice(ndarray::s![b, slot * hidden..(slot + 1) * hidden]);
        }
    }

    let mut flat = encoder.backward(&tape, &d_output);
    flat.extend(d_weight.iter());
    flat.extend(d_bias.iter());
    Ok((loss, flat))
}

/// Outcome of one training group.
#[derive(Debug, Clone)]
pub struct GroupReport {
    pub key: GroupKey,
    pub trained: bool,
    pub positives: usize,
    pub negatives: usize,
    /// Mean loss per epoch, empty when the group was skipped.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub groups: Vec<GroupReport>,
}

#[derive(Debug)]
pub struct TrainOutput<E> {
    pub bundle: ModelBundle<E>,
    pub report: TrainReport,
}

/// Fine-tune the encoder and a fresh head on labeled candidates.
///
/// UNIFIED trains one model on everything; DISTANCE-SPECIFIC clones the
/// starting encoder once per CSD stratum in `0..=max_csd` and trains each
/// on its slice. A stratum without positive examples is skipped (and
/// reported) unless `train_empty_strata` is set. The binary strategy maps
/// every non-negative label to POSITIVE before training.
pub fn train<E: Encoder + Clone>(
    labeled: &CandidateSet,
    corpus: &Corpus,
    encoder: &E,
    tokenizer: &dyn Tokenizer,
    schema: &RelationSchema,
    config: &TrainConfig,
) -> Result<TrainOutput<E>, ModelError> {
    config.validate(true)?;
    if config.strategy == Strategy::Binary
        && !schema.is_unambiguous()
        && schema.priority().is_none()
    {
        return Err(ModelError::AmbiguousSchemaForBinary {
            schema: schema.name().to_string(),
        });
    }

    let groups: Vec<(GroupKey, Vec<&CandidatePair>)> = match config.regime {
        Regime::Unified => vec![(GroupKey::All, labeled.pairs.iter().collect())],
        Regime::DistanceSpecific => (0..=config.max_csd)
            .map(|csd| {
                (
                    GroupKey::Csd(csd),
                    labeled.pairs.iter().filter(|p| p.csd == csd).collect(),
                )
            })
            .collect(),
    };

    let classes = config.classes(schema);
    let mut bundle = ModelBundle {
        regime: config.regime,
        groups: BTreeMap::new(),
    };
    let mut report = TrainReport::default();

    for (key, pairs) in groups {
        let positives = pairs.iter().filter(|p| p.is_positive()).count();
        let negatives = pairs.len() - positives;
        let trainable = !pairs.is_empty() && (positives > 0 || config.train_empty_strata);
        if !trainable {
            report.groups.push(GroupReport {
                key,
                trained: false,
                positives,
                negatives,
                epoch_losses: Vec::new(),
            });
            continue;
        }

        let (model, epoch_losses) =
            train_group(&pairs, corpus, encoder, tokenizer, config, &classes)?;
        bundle.groups.insert(key, model);
        report.groups.push(GroupReport {
            key,
            trained: true,
            positives,
            negatives,
            epoch_losses,
        });
    }

    Ok(TrainOutput { bundle, report })
}

fn class_index_of(label: &str, strategy: Strategy, classes: &[String]) -> usize {
    match strategy {
        Strategy::Binary => usize::from(label != NEGATIVE_LABEL),
        Strategy::MultiClass => classes
            .iter()
            .position(|c| c == label)
            .expect("candidate label is a schema category or NEGATIVE"),
    }
}

fn train_group<E: Encoder + Clone>(
    pairs: &[&CandidatePair],
    corpus: &Corpus,
    base_encoder: &E,
    tokenizer: &dyn Tokenizer,
    config: &TrainConfig,
    classes: &[String],
) -> Result<(TrainedModel<E>, Vec<f64>), ModelError> {
    let mut encoder = base_encoder.clone();
    let mut head = RelationHead::new(
        config.scheme,
        classes.to_vec(),
        encoder.hidden_size(),
        config.seed,
    );

    let mut instances: Vec<(EncodedInstance, usize)> = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let document = corpus.get(&pair.doc_id).ok_or_else(|| {
            ModelError::Encoding(crate::encoding::EncodingError::UnknownDocument(
                pair.doc_id.clone(),
            ))
        })?;
        let instance = build_instance(pair, document, tokenizer, config.max_len)?;
        instances.push((instance, class_index_of(&pair.label, config.strategy, classes)));
    }

    let class_weights = config.class_weighting.then(|| {
        let mut counts = vec![0usize; classes.len()];
        for (_, class) in &instances {
            counts[*class] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count().max(1);
        let total = instances.len() as f64;
        counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { total / (present as f64 * c as f64) })
            .collect::<Vec<f64>>()
    });

    let pad_id = tokenizer.specials().pad;
    let encoder_len = encoder.num_parameters();
    let mut params = encoder.parameters();
    params.extend(head.parameters());
    let mut optimizer = Adam::new(config.learning_rate, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = pad_batch(
                chunk.iter().map(|&i| instances[i].0.clone()).collect(),
                pad_id,
            );
            let labels: Vec<usize> = chunk.iter().map(|&i| instances[i].1).collect();
            let (loss, grads) =
                loss_and_gradients(&encoder, &head, &batch, &labels, class_weights.as_deref())?;
            optimizer.step(&mut params, &grads);
            encoder.set_parameters(&params[..encoder_len])?;
            head.set_parameters(&params[encoder_len..])?;
            epoch_loss += loss;
            steps += 1;
        }
        epoch_losses.push(if steps == 0 { 0.0 } else { epoch_loss / steps as f64 });
    }

    Ok((
        TrainedModel {
            encoder,
            head,
            config: config.clone(),
            tokenizer_fingerprint: tokenizer.fingerprint(),
        },
        epoch_losses,
    ))
}

/// Hyperparameter grid for cross-validation.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    pub epochs: Vec<usize>,
    pub batch_sizes: Vec<usize>,
}

impl SearchGrid {
    /// The standard grid: epochs 3-6, batch sizes 4, 8, 16.
    pub fn standard() -> Self {
        SearchGrid {
            epochs: vec![3, 4, 5, 6],
            batch_sizes: vec![4, 8, 16],
        }
    }

    pub fn single(epochs: usize, batch_size: usize) -> Self {
        SearchGrid {
            epochs: vec![epochs],
            batch_sizes: vec![batch_size],
        }
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone)]
pub struct CvCell {
    pub epochs: usize,
    pub batch_size: usize,
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: TrainConfig,
    pub table: Vec<CvCell>,
}

/// Five-fold cross-validation over the grid, selecting the configuration
/// with the best mean micro-F1. Folds are assigned per document so all of
/// a document's pairs stay together; ties break toward fewer epochs, then
/// the smaller batch size.
pub fn cross_validate<E: Encoder + Clone>(
    labeled: &CandidateSet,
    corpus: &Corpus,
    encoder: &E,
    tokenizer: &dyn Tokenizer,
    schema: &RelationSchema,
    base: &TrainConfig,
    grid: &SearchGrid,
) -> Result<CvOutcome, ModelError> {
    let folds = base.folds;
    let positives = labeled.positives();
    if folds == 0 || positives < folds {
        return Err(ModelError::InsufficientData {
            needed: folds.max(1),
            found: positives,
        });
    }

    let mut doc_ids: Vec<&str> = labeled.pairs.iter().map(|p| p.doc_id.as_str()).collect();
    doc_ids.sort_unstable();
    doc_ids.dedup();
    let fold_of: BTreeMap<&str, usize> = doc_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, i % folds))
        .collect();

    let mut epochs_grid = grid.epochs.clone();
    epochs_grid.sort_unstable();
    let mut batch_grid = grid.batch_sizes.clone();
    batch_grid.sort_unstable();

    let mut table = Vec::new();
    let mut best: Option<CvCell> = None;
    for &epochs in &epochs_grid {
        for &batch_size in &batch_grid {
            let mut config = base.clone();
            config.epochs = epochs;
            config.batch_size = batch_size;

            let mut fold_f1 = Vec::with_capacity(folds);
            for fold in 0..folds {
                let train_pairs: Vec<CandidatePair> = labeled
                    .pairs
                    .iter()
                    .filter(|p| fold_of[p.doc_id.as_str()] != fold)
                    .cloned()
                    .collect();
                let eval_pairs: Vec<CandidatePair> = labeled
                    .pairs
                    .iter()
                    .filter(|p| fold_of[p.doc_id.as_str()] == fold)
                    .cloned()
                    .collect();
                if train_pairs.is_empty() || eval_pairs.is_empty() {
                    fold_f1.push(0.0);
                    continue;
                }
                let train_set = CandidateSet::from_pairs(
                    train_pairs,
                    labeled.max_csd,
                    labeled.schema_name.clone(),
                );
                let outcome = train(&train_set, corpus, encoder, tokenizer, schema, &config)?;
                fold_f1.push(fold_micro_f1(
                    &eval_pairs,
                    corpus,
                    &outcome.bundle,
                    tokenizer,
                    schema,
                )?);
            }
            let mean_f1 = fold_f1.iter().sum::<f64>() / folds as f64;
            let cell = CvCell {
                epochs,
                batch_size,
                fold_f1,
                mean_f1,
            };
            // Strict comparison keeps the earliest (fewest epochs, smallest
            // batch) cell on ties.
            if best.as_ref().is_none_or(|b| cell.mean_f1 > b.mean_f1) {
                best = Some(cell.clone());
            }
            table.push(cell);
        }
    }

    let best = best.expect("non-empty grid");
    let mut config = base.clone();
    config.epochs = best.epochs;
    config.batch_size = best.batch_size;
    Ok(CvOutcome { best: config, table })
}

/// Strict micro-F1 of bundle predictions against the held-out fold's
/// candidate labels.
fn fold_micro_f1<E: Encoder>(
    eval_pairs: &[CandidatePair],
    corpus: &Corpus,
    bundle: &ModelBundle<E>,
    tokenizer: &dyn Tokenizer,
    schema: &RelationSchema,
) -> Result<f64, ModelError> {
    let options = InferenceOptions {
        // A stratum can lack positives inside a fold split; score those
        // pairs as negative instead of failing the whole cell.
        missing_group: MissingGroupPolicy::SkipPair,
        ..InferenceOptions::default()
    };
    let predictions = predict_with(eval_pairs, corpus, bundle, tokenizer, schema, &options)
        .map_err(|e| ModelError::InvalidConfig(format!("fold prediction failed: {e}")))?;

    let mut gold = GoldStandard::default();
    for pair in eval_pairs {
        let entry = gold.per_doc.entry(pair.doc_id.clone()).or_default();
        entry.entity_ids.insert(pair.arg1.clone());
        entry.entity_ids.insert(pair.arg2.clone());
        if pair.is_positive() {
            let n = entry.relations.len() + 1;
            entry.relations.push(GoldRelation {
                relation_id: format!("G{n}"),
                category: pair.label.clone(),
                arg1: pair.arg1.clone(),
                arg2: pair.arg2.clone(),
            });
        }
    }
    let report = score(&gold, &predictions)
        .map_err(|e| ModelError::InvalidConfig(format!("fold scoring failed: {e}")))?;
    Ok(report.micro.f1)
}

/// Multiset of training labels under the binary strategy: every
/// non-negative label becomes POSITIVE.
pub fn binary_label_view(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    labels
        .into_iter()
        .map(|label| {
            if label == NEGATIVE_LABEL {
                label
            } else {
                super::POSITIVE_LABEL.to_string()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{generate_candidates, label_candidates};
    use crate::corpus::{Document, Entity, SegmenterConfig};
    use crate::encoding::{batch_encode, WordTokenizer};
    use crate::inference::{predict, route_by_csd};
    use crate::model::{
        extract_representation, forward, ReferenceEncoder, ReferenceEncoderConfig, ReprScheme,
    };
    use crate::schema::builtin_schema;

    /// One document, six Drug-Strength pairs, two of them gold positives.
    fn fixture() -> (Corpus, CandidateSet) {
        let text = "aspirin 81 mg linked today. ibuprofen 200 mg linked now. naproxen 500 mg separate.";
        let entities = vec![
            ("T1", "Drug", 0, 7),
            ("T2", "Strength", 8, 13),
            ("T3", "Drug", 28, 37),
            ("T4", "Strength", 38, 44),
            ("T5", "Drug", 57, 65),
            ("T6", "Strength", 66, 72),
        ];
        let entities: Vec<Entity> = entities
            .into_iter()
            .map(|(id, ty, start, end)| Entity {
                entity_id: id.into(),
                semantic_type: ty.into(),
                start,
                end,
                surface_text: text.chars().skip(start).take(end - start).collect(),
            })
            .collect();
        let gold = vec![
            GoldRelation {
                relation_id: "R1".into(),
                category: "Strength-Drug".into(),
                arg1: "T2".into(),
                arg2: "T1".into(),
            },
            GoldRelation {
                relation_id: "R2".into(),
                category: "Strength-Drug".into(),
                arg1: "T4".into(),
                arg2: "T3".into(),
            },
        ];
        let doc =
            Document::new("d1", text, entities, gold, &SegmenterConfig::default()).unwrap();
        let schema = builtin_schema("n2c2").unwrap();
        let set = generate_candidates(&doc, &schema, 4).unwrap();
        let labeled = label_candidates(set, &doc.gold_relations.clone(), &doc, &schema).unwrap();
        (Corpus::new([doc]), labeled.set)
    }

    fn tokenizer(corpus: &Corpus) -> WordTokenizer {
        WordTokenizer::train(corpus.docs().map(|d| d.text.as_str()), true, 1)
    }

    fn tiny_encoder(vocab: usize, seed: u64) -> ReferenceEncoder {
        ReferenceEncoder::new(ReferenceEncoderConfig {
            layers: 1,
            heads: 2,
            hidden: 8,
            feed_forward: 16,
            vocab_size: vocab,
            max_positions: 64,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let mut encoder = tiny_encoder(tok.vocab_size(), 13);
        let mut head = RelationHead::new(
            ReprScheme::ClsAllMarkers,
            vec!["NEGATIVE".into(), "POSITIVE".into()],
            8,
            13,
        );
        let pairs = &labeled.pairs[..4];
        let batch = &batch_encode(pairs, &corpus, &tok, 64, 4).unwrap()[0];
        let labels: Vec<usize> = pairs.iter().map(|p| usize::from(p.is_positive())).collect();

        let n_enc = encoder.num_parameters();
        let (_, analytic) = loss_and_gradients(&encoder, &head, batch, &labels, None).unwrap();

        let mut params = encoder.parameters();
        params.extend(head.parameters());
        let loss_at = |p: &[f64], enc: &mut ReferenceEncoder, hd: &mut RelationHead| {
            enc.set_parameters(&p[..n_enc]).unwrap();
            hd.set_parameters(&p[n_enc..]).unwrap();
            loss_and_gradients(enc, hd, batch, &labels, None).unwrap().0
        };

        // Deterministically sample parameters across the whole vector,
        // including the head's tail.
        let total = params.len();
        let sampled: Vec<usize> = (0..25)
            .map(|k| (k * 2654435761usize) % total)
            .chain([total - 1, total - head.num_parameters()])
            .collect();
        for &i in &sampled {
            let step = 1e-5 * params[i].abs().max(1.0);
            let mut plus = params.clone();
            plus[i] += step;
            let mut minus = params.clone();
            minus[i] -= step;
            let numeric =
                (loss_at(&plus, &mut encoder, &mut head) - loss_at(&minus, &mut encoder, &mut head))
                    / (2.0 * step);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                rel < 1e-3,
                "param {i}: analytic {} vs numeric {} (rel {rel})",
                analytic[i],
                numeric
            );
        }
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let config = TrainConfig {
            learning_rate: 1e-3,
            epochs: 6,
            batch_size: 4,
            max_len: 64,
            ..TrainConfig::default()
        };
        let schema = builtin_schema("n2c2").unwrap();
        let out = train(&labeled, &corpus, &encoder, &tok, &schema, &config).unwrap();
        let losses = &out.report.groups[0].epoch_losses;
        assert!(
            losses.last().unwrap() < losses.first().unwrap(),
            "loss did not decrease: {losses:?}"
        );
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let config = TrainConfig {
            learning_rate: 1e-3,
            epochs: 3,
            batch_size: 4,
            max_len: 64,
            ..TrainConfig::default()
        };
        let schema = builtin_schema("n2c2").unwrap();
        let a = train(&labeled, &corpus, &encoder, &tok, &schema, &config).unwrap();
        let b = train(&labeled, &corpus, &encoder, &tok, &schema, &config).unwrap();
        let ma = &a.bundle.groups[&GroupKey::All];
        let mb = &b.bundle.groups[&GroupKey::All];
        assert_eq!(ma.encoder.parameters(), mb.encoder.parameters());
        assert_eq!(ma.head.parameters(), mb.head.parameters());
    }

    #[test]
    fn distance_specific_trains_groups_up_to_max_csd() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let config = TrainConfig {
            regime: Regime::DistanceSpecific,
            learning_rate: 1e-3,
            epochs: 3,
            batch_size: 4,
            max_csd: 4,
            max_len: 64,
            train_empty_strata: false,
            ..TrainConfig::default()
        };
        let schema = builtin_schema("n2c2").unwrap();
        let out = train(&labeled, &corpus, &encoder, &tok, &schema, &config).unwrap();
        // Five strata reported even when some are skipped.
        assert_eq!(out.report.groups.len(), 5);
        // Positives only exist at csd 0 in this fixture.
        assert!(out.bundle.groups.contains_key(&GroupKey::Csd(0)));
        let skipped: Vec<_> = out.report.groups.iter().filter(|g| !g.trained).collect();
        assert!(!skipped.is_empty());
    }

    #[test]
    fn binary_with_ambiguous_schema_is_rejected() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let schema = crate::schema::load_schema("rule\tStrength\tDrug\tA,B\n").unwrap();
        let config = TrainConfig {
            max_len: 64,
            ..TrainConfig::default()
        };
        let err = train(&labeled, &corpus, &encoder, &tok, &schema, &config).unwrap_err();
        assert!(matches!(err, ModelError::AmbiguousSchemaForBinary { .. }));
        // A priority list unlocks the binary strategy.
        let schema = crate::schema::load_schema("rule\tStrength\tDrug\tA,B\n")
            .unwrap()
            .with_priority(vec!["A".into()]);
        let relabeled = CandidateSet::from_pairs(
            labeled
                .pairs
                .iter()
                .cloned()
                .map(|mut p| {
                    if p.is_positive() {
                        p.label = "A".into();
                    }
                    p
                })
                .collect(),
            labeled.max_csd,
            labeled.schema_name.clone(),
        );
        assert!(train(&relabeled, &corpus, &encoder, &tok, &schema, &config).is_ok());
    }

    #[test]
    fn predict_routes_and_keeps_valid_categories() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let config = TrainConfig {
            learning_rate: 1e-3,
            epochs: 6,
            batch_size: 4,
            max_len: 64,
            ..TrainConfig::default()
        };
        let schema = builtin_schema("n2c2").unwrap();
        let out = train(&labeled, &corpus, &encoder, &tok, &schema, &config).unwrap();
        for pair in &labeled.pairs {
            assert_eq!(route_by_csd(pair, &out.bundle).unwrap(), GroupKey::All);
        }
        let predictions = predict(&labeled.pairs, &corpus, &out.bundle, &tok, &schema).unwrap();
        for p in &predictions {
            assert!(schema.categories().contains(&p.category));
            assert!((0.0..=1.0).contains(&p.score));
            assert!(labeled
                .pairs
                .iter()
                .any(|c| c.arg1 == p.arg1 && c.arg2 == p.arg2 && c.doc_id == p.doc_id));
        }
    }

    #[test]
    fn cross_validation_grid_and_tiebreak() {
        let (corpus, labeled) = fixture();
        // Clone the single doc into six synthetic docs so five folds have
        // documents and positives.
        let mut docs = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..6 {
            let base = corpus.get("d1").unwrap();
            let mut doc = base.clone();
            doc.doc_id = format!("d{i}");
            docs.push(doc);
            for p in &labeled.pairs {
                let mut p = p.clone();
                p.doc_id = format!("d{i}");
                pairs.push(p);
            }
        }
        let corpus = Corpus::new(docs);
        let labeled = CandidateSet::from_pairs(pairs, 4, "n2c2");
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let schema = builtin_schema("n2c2").unwrap();
        let base = TrainConfig {
            learning_rate: 1e-3,
            max_len: 64,
            ..TrainConfig::default()
        };

        let grid = SearchGrid {
            epochs: vec![1, 2],
            batch_sizes: vec![4],
        };
        let outcome =
            cross_validate(&labeled, &corpus, &encoder, &tok, &schema, &base, &grid).unwrap();
        assert_eq!(outcome.table.len(), 2);
        for cell in &outcome.table {
            assert_eq!(cell.fold_f1.len(), 5);
        }
        // Single-cell grid returns that config.
        let single =
            cross_validate(&labeled, &corpus, &encoder, &tok, &schema, &base, &SearchGrid::single(2, 4))
                .unwrap();
        assert_eq!((single.best.epochs, single.best.batch_size), (2, 4));
        // Equal means break toward fewer epochs.
        if (outcome.table[0].mean_f1 - outcome.table[1].mean_f1).abs() < f64::EPSILON {
            assert_eq!(outcome.best.epochs, 1);
        }
    }

    #[test]
    fn cross_validation_needs_positives() {
        let (corpus, labeled) = fixture();
        let negatives = CandidateSet::from_pairs(
            labeled
                .pairs
                .iter()
                .cloned()
                .map(|mut p| {
                    p.label = NEGATIVE_LABEL.into();
                    p
                })
                .collect(),
            4,
            "n2c2",
        );
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let schema = builtin_schema("n2c2").unwrap();
        let err = cross_validate(
            &negatives,
            &corpus,
            &encoder,
            &tok,
            &schema,
            &TrainConfig::default(),
            &SearchGrid::single(3, 4),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::InsufficientData { .. }));
    }

    #[test]
    fn binary_label_collapse_preserves_multiset() {
        let labels = vec![
            "Strength-Drug".to_string(),
            NEGATIVE_LABEL.to_string(),
            "ADE-Drug".to_string(),
            NEGATIVE_LABEL.to_string(),
        ];
        let collapsed = binary_label_view(labels.clone());
        assert_eq!(
            collapsed,
            vec!["POSITIVE", "NEGATIVE", "POSITIVE", "NEGATIVE"]
        );
        let negatives_before = labels.iter().filter(|l| *l == NEGATIVE_LABEL).count();
        let negatives_after = collapsed.iter().filter(|l| *l == "NEGATIVE").count();
        assert_eq!(negatives_before, negatives_after);
    }

    #[test]
    fn marker_permutation_changes_scheme3_representation() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 99);
        let pair = &labeled.pairs[0];
        let batch = &batch_encode(std::slice::from_ref(pair), &corpus, &tok, 64, 1).unwrap()[0];
        let output = encoder.encode(batch).unwrap();
        let view = output.index_axis(ndarray::Axis(0), 0);
        let original =
            extract_representation(view, &batch.positions[0], ReprScheme::ClsAllMarkers).unwrap();
        // Shift which token carries [S1]: swap the marker with its neighbor.
        let mut moved = batch.clone();
        let s1 = moved.positions[0].s1;
        moved.token_ids[0].swap(s1, s1 + 1);
        moved.positions[0].s1 += 1;
        let output2 = encoder.encode(&moved).unwrap();
        let view2 = output2.index_axis(ndarray::Axis(0), 0);
        let permuted =
            extract_representation(view2, &moved.positions[0], ReprScheme::ClsAllMarkers).unwrap();
        let diff: f64 = (&original - &permuted).iter().map(|v| v.abs()).sum();
        assert!(diff > 1e-6, "representation unchanged under marker permutation");
    }

    #[test]
    fn forward_contract_checks_dimensions() {
        let (corpus, labeled) = fixture();
        let tok = tokenizer(&corpus);
        let encoder = tiny_encoder(tok.vocab_size(), 13);
        let head = RelationHead::new(
            ReprScheme::ClsOnly,
            vec!["NEGATIVE".into(), "POSITIVE".into()],
            16, // wrong hidden size on purpose
            13,
        );
        let batch = &batch_encode(&labeled.pairs[..2], &corpus, &tok, 64, 2).unwrap()[0];
        assert!(matches!(
            forward(batch, &encoder, &head),
            Err(ModelError::DimensionMismatch { .. })
        ));
        let good = RelationHead::new(
            ReprScheme::ClsOnly,
            vec!["NEGATIVE".into(), "POSITIVE".into()],
            8,
            13,
        );
        let probs = forward(batch, &encoder, &good).unwrap();
        assert_eq!(probs.dim(), (2, 2));
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}
