//! Property tests over randomized corpora and inputs.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{random_corpus, train_tokenizer, SynthOptions};
use relex_core::candidates::{
    generate_candidates, label_candidates, stratify_by_csd,
};
use relex_core::corpus::{segment_sentences, Document};
use relex_core::encoding::{batch_encode, decode_tokens, Tokenizer, SPECIAL_TOKENS};
use relex_core::evaluation::{score, GoldStandard};
use relex_core::inference::PredictedRelation;
use relex_core::schema::builtin_schema;

fn corpus_from_seed(seed: u64, docs: usize) -> relex_core::corpus::Corpus {
    random_corpus(&SynthOptions {
        docs,
        seed,
        ..SynthOptions::default()
    })
}

/// Independent enumerate-and-filter oracle for candidate generation.
fn brute_force_pairs(
    doc: &Document,
    schema: &relex_core::schema::RelationSchema,
    max_csd: usize,
) -> BTreeSet<(String, String, usize)> {
    let entities: Vec<_> = doc.entities.values().collect();
    let mut found = BTreeSet::new();
    for i in 0..entities.len() {
        for j in 0..entities.len() {
            if j <= i {
                continue;
            }
            let (a, b) = (entities[i], entities[j]);
            let cats = schema.compatible_categories(&a.semantic_type, &b.semantic_type);
            if cats.is_empty() {
                continue;
            }
            // Linear-scan sentence lookup, independent of the binary search
            // used by the implementation.
            let sentence_of = |start: usize| {
                doc.sentences
                    .iter()
                    .position(|s| s.start <= start && start < s.end)
                    .expect("entity inside a sentence")
            };
            let csd = sentence_of(a.start).abs_diff(sentence_of(b.start));
            if csd > max_csd {
                continue;
            }
            let (arg1, arg2) = if a.semantic_type == cats[0].arg1_type {
                (a, b)
            } else {
                (b, a)
            };
            found.insert((arg1.entity_id.clone(), arg2.entity_id.clone(), csd));
        }
    }
    found
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn segmenter_is_deterministic_and_covers_content(text in "[a-zA-Z0-9 .!?\n]{0,200}") {
        let a = segment_sentences(&text);
        let b = segment_sentences(&text);
        prop_assert_eq!(&a, &b);
        let chars: Vec<char> = text.chars().collect();
        let mut previous_end = 0usize;
        for span in &a {
            prop_assert!(span.start < span.end);
            prop_assert!(span.end <= chars.len());
            prop_assert!(span.start >= previous_end, "spans overlap or unsorted");
            // Gaps hold only whitespace.
            for &c in &chars[previous_end..span.start] {
                prop_assert!(c.is_whitespace());
            }
            previous_end = span.end;
        }
        for &c in &chars[previous_end..] {
            prop_assert!(c.is_whitespace());
        }
    }

    #[test]
    fn candidates_match_brute_force_oracle(seed in any::<u64>(), max_csd in 0usize..6) {
        let corpus = corpus_from_seed(seed, 4);
        let schema = builtin_schema("n2c2").unwrap();
        for doc in corpus.docs() {
            let set = generate_candidates(doc, &schema, max_csd).unwrap();
            let got: BTreeSet<(String, String, usize)> = set
                .pairs
                .iter()
                .map(|p| (p.arg1.clone(), p.arg2.clone(), p.csd))
                .collect();
            prop_assert_eq!(got.len(), set.pairs.len(), "duplicate pairs");
            prop_assert_eq!(got, brute_force_pairs(doc, &schema, max_csd));
        }
    }

    #[test]
    fn candidate_sets_grow_monotonically_with_max_csd(seed in any::<u64>(), k in 0usize..5) {
        let corpus = corpus_from_seed(seed, 3);
        let schema = builtin_schema("n2c2").unwrap();
        for doc in corpus.docs() {
            let narrow = generate_candidates(doc, &schema, k).unwrap();
            let wide = generate_candidates(doc, &schema, k + 1).unwrap();
            let wide_keys: BTreeSet<_> = wide
                .pairs
                .iter()
                .map(|p| (p.arg1.clone(), p.arg2.clone(), p.csd))
                .collect();
            for p in &narrow.pairs {
                prop_assert!(wide_keys.contains(&(p.arg1.clone(), p.arg2.clone(), p.csd)));
            }
        }
    }

    #[test]
    fn labeling_preserves_pairs_and_accounts_for_gold(seed in any::<u64>()) {
        let corpus = corpus_from_seed(seed, 4);
        let schema = builtin_schema("n2c2").unwrap();
        for doc in corpus.docs() {
            let set = generate_candidates(doc, &schema, 2).unwrap();
            let keys_before: Vec<_> = set.pairs.iter().map(|p| p.pair_key()).collect();
            let labeled = label_candidates(set, &doc.gold_relations, doc, &schema).unwrap();
            let keys_after: Vec<_> = labeled.set.pairs.iter().map(|p| p.pair_key()).collect();
            prop_assert_eq!(keys_before, keys_after, "labeling altered pair identity");

            // Recall ceiling bookkeeping over deduplicated gold.
            let gold_unique: BTreeSet<_> = doc
                .gold_relations
                .iter()
                .map(|g| {
                    let (a, b) = if g.arg1 <= g.arg2 {
                        (g.arg1.clone(), g.arg2.clone())
                    } else {
                        (g.arg2.clone(), g.arg1.clone())
                    };
                    (a, b, g.category.clone())
                })
                .collect();
            let positives = labeled.set.positives();
            prop_assert_eq!(gold_unique.len(), positives + labeled.skipped.len());

            // Counts tally pairs exactly.
            let total: usize = labeled.set.counts.values().sum();
            prop_assert_eq!(total, labeled.set.pairs.len());
        }
    }

    #[test]
    fn stratification_partitions_the_set(seed in any::<u64>()) {
        let corpus = corpus_from_seed(seed, 4);
        let schema = builtin_schema("n2c2").unwrap();
        for doc in corpus.docs() {
            let set = generate_candidates(doc, &schema, 5).unwrap();
            let strata = stratify_by_csd(&set);
            let total: usize = strata.values().map(|s| s.pairs.len()).sum();
            prop_assert_eq!(total, set.pairs.len());
            for (csd, stratum) in &strata {
                prop_assert!(stratum.pairs.iter().all(|p| p.csd == *csd));
                let expected = set.pairs.iter().filter(|p| p.csd == *csd).count();
                prop_assert_eq!(stratum.pairs.len(), expected);
            }
        }
    }

    #[test]
    fn encoded_instances_satisfy_marker_invariants(seed in any::<u64>()) {
        let corpus = corpus_from_seed(seed, 3);
        let schema = builtin_schema("n2c2").unwrap();
        let tokenizer = train_tokenizer(&corpus);
        let specials = tokenizer.specials();
        for doc in corpus.docs() {
            let set = generate_candidates(doc, &schema, 4).unwrap();
            if set.pairs.is_empty() {
                continue;
            }
            let batches = batch_encode(&set.pairs, &corpus, &tokenizer, 384, 8).unwrap();
            for batch in &batches {
                for (row, positions) in batch.token_ids.iter().zip(&batch.positions) {
                    prop_assert!(positions.s1 < positions.e1);
                    prop_assert!(positions.s2 < positions.e2);
                    for (position, id) in [
                        (positions.cls, specials.cls),
                        (positions.s1, specials.s1),
                        (positions.e1, specials.e1),
                        (positions.s2, specials.s2),
                        (positions.e2, specials.e2),
                    ] {
                        prop_assert_eq!(row[position], id);
                        prop_assert_eq!(row.iter().filter(|&&t| t == id).count(), 1);
                    }
                }
            }
        }
    }

    #[test]
    fn marker_strip_round_trip_on_random_docs(seed in any::<u64>()) {
        let corpus = corpus_from_seed(seed, 2);
        let schema = builtin_schema("n2c2").unwrap();
        let tokenizer = train_tokenizer(&corpus);
        for doc in corpus.docs() {
            let set = generate_candidates(doc, &schema, 4).unwrap();
            for pair in &set.pairs {
                let instance =
                    relex_core::encoding::build_instance(pair, doc, &tokenizer, 384).unwrap();
                let stripped: Vec<String> = decode_tokens(&instance, &tokenizer)
                    .into_iter()
                    .filter(|t| !SPECIAL_TOKENS.contains(&t.as_str()))
                    .collect();
                let e1 = doc.entity(&pair.arg1).unwrap();
                let e2 = doc.entity(&pair.arg2).unwrap();
                let s1 = doc.sentence_index_of(e1).unwrap();
                let s2 = doc.sentence_index_of(e2).unwrap();
                let mut expected = tokenizer.tokenize(doc.sentence_text(s1));
                expected.extend(tokenizer.tokenize(doc.sentence_text(s2)));
                prop_assert_eq!(stripped, expected);
            }
        }
    }

    #[test]
    fn scoring_bounds_and_swap_symmetry(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let categories = ["A", "B", "C"];
        let mut gold = GoldStandard::default();
        let mut gold_relations = Vec::new();
        let entity_ids: Vec<String> = (1..=12).map(|i| format!("T{i}")).collect();
        for d in 0..2 {
            let doc_id = format!("d{d}");
            let mut relations = Vec::new();
            for r in 0..rng.random_range(0..6usize) {
                let a = rng.random_range(0..entity_ids.len());
                let mut b = rng.random_range(0..entity_ids.len());
                if b == a {
                    b = (b + 1) % entity_ids.len();
                }
                relations.push(relex_core::corpus::GoldRelation {
                    relation_id: format!("R{r}"),
                    category: categories[rng.random_range(0..3)].to_string(),
                    arg1: entity_ids[a].clone(),
                    arg2: entity_ids[b].clone(),
                });
            }
            gold_relations.extend(relations.iter().cloned().map(|g| (doc_id.clone(), g)));
            gold.insert_doc(doc_id, entity_ids.iter().cloned(), relations);
        }
        let mut predicted = Vec::new();
        for _ in 0..rng.random_range(0..8usize) {
            let a = rng.random_range(0..entity_ids.len());
            let mut b = rng.random_range(0..entity_ids.len());
            if b == a {
                b = (b + 1) % entity_ids.len();
            }
            predicted.push(PredictedRelation {
                doc_id: format!("d{}", rng.random_range(0..2)),
                arg1: entity_ids[a].clone(),
                arg2: entity_ids[b].clone(),
                category: categories[rng.random_range(0..3)].to_string(),
                score: 1.0,
            });
        }

        let report = score(&gold, &predicted).unwrap();
        let m = report.micro;
        prop_assert!(m.tp <= gold.total_relations().max(predicted.len()));
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if m.precision + m.recall > 0.0 {
            let identity = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - identity).abs() < 1e-12);
        }

        // Swap: gold becomes predictions and vice versa; P and R exchange.
        let mut swapped_gold = GoldStandard::default();
        for d in 0..2 {
            let doc_id = format!("d{d}");
            let relations: Vec<_> = predicted
                .iter()
                .filter(|p| p.doc_id == doc_id)
                .enumerate()
                .map(|(i, p)| relex_core::corpus::GoldRelation {
                    relation_id: format!("R{i}"),
                    category: p.category.clone(),
                    arg1: p.arg1.clone(),
                    arg2: p.arg2.clone(),
                })
                .collect();
            swapped_gold.insert_doc(doc_id, entity_ids.iter().cloned(), relations);
        }
        let swapped_preds: Vec<PredictedRelation> = gold_relations
            .iter()
            .map(|(doc_id, g)| PredictedRelation {
                doc_id: doc_id.clone(),
                arg1: g.arg1.clone(),
                arg2: g.arg2.clone(),
                category: g.category.clone(),
                score: 1.0,
            })
            .collect();
        let swapped = score(&swapped_gold, &swapped_preds).unwrap();
        prop_assert!((report.micro.precision - swapped.micro.recall).abs() < 1e-12);
        prop_assert!((report.micro.recall - swapped.micro.precision).abs() < 1e-12);
    }
}
