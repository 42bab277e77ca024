#![allow(dead_code)]
//! Synthetic corpora for integration tests: random documents for oracle
//! checks and a separable cue-word corpus for training tests.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relex_core::corpus::{Corpus, Document, Entity, GoldRelation, SegmenterConfig};
use relex_core::encoding::WordTokenizer;
use relex_core::schema::{builtin_schema, RelationSchema};

pub struct SynthOptions {
    pub docs: usize,
    pub max_sentences: usize,
    pub max_entities: usize,
    /// Upper bound on gold relations sampled per document.
    pub gold_per_doc: usize,
    pub schema_name: &'static str,
    /// Mix in semantic types that no schema rule covers.
    pub include_noise_types: bool,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            docs: 20,
            max_sentences: 10,
            max_entities: 15,
            gold_per_doc: 4,
            schema_name: "n2c2",
            include_noise_types: true,
            seed: 13,
        }
    }
}

const FILLERS: [&str; 8] = ["pt", "was", "stable", "noted", "daily", "with", "continued", "exam"];

struct DocBuilder {
    text: String,
    char_len: usize,
    entities: Vec<Entity>,
    relations: Vec<GoldRelation>,
}

impl DocBuilder {
    fn new() -> Self {
        DocBuilder {
            text: String::new(),
            char_len: 0,
            entities: Vec::new(),
            relations: Vec::new(),
        }
    }

    fn push_word(&mut self, word: &str) -> (usize, usize) {
        if !self.text.is_empty() {
            self.text.push(' ');
            self.char_len += 1;
        }
        let start = self.char_len;
        self.text.push_str(word);
        self.char_len += word.chars().count();
        (start, self.char_len)
    }

    fn push_entity(&mut self, surface: &str, semantic_type: &str) -> String {
        let (start, end) = self.push_word(surface);
        let id = format!("T{}", self.entities.len() + 1);
        self.entities.push(Entity {
            entity_id: id.clone(),
            semantic_type: semantic_type.to_string(),
            start,
            end,
            surface_text: surface.to_string(),
        });
        id
    }

    fn end_sentence(&mut self) {
        self.text.push('.');
        self.char_len += 1;
    }

    fn relate(&mut self, category: &str, arg1: &str, arg2: &str) {
        let id = format!("R{}", self.relations.len() + 1);
        self.relations.push(GoldRelation {
            relation_id: id,
            category: category.to_string(),
            arg1: arg1.to_string(),
            arg2: arg2.to_string(),
        });
    }

    fn build(self, doc_id: String) -> Document {
        Document::new(
            doc_id,
            self.text,
            self.entities,
            self.relations,
            &SegmenterConfig::default(),
        )
        .expect("synthetic document is valid")
    }
}

fn type_pool(schema_name: &str, include_noise: bool) -> Vec<&'static str> {
    let mut pool: Vec<&'static str> = match schema_name {
        "made1.0" => vec![
            "Drug", "Dosage", "Route", "Frequency", "Duration", "ADE", "Indication", "SSLIF",
            "Severity",
        ],
        _ => vec![
            "Drug", "Strength", "Dosage", "Duration", "Frequency", "Form", "Route", "Reason",
            "ADE",
        ],
    };
    if include_noise {
        pool.push("Lab");
        pool.push("Procedure");
    }
    pool
}

/// Random documents: entities of random types spread over random sentences,
/// gold relations sampled from the schema-compatible pairs.
pub fn random_corpus(options: &SynthOptions) -> Corpus {
    let schema = builtin_schema(options.schema_name).expect("builtin schema");
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let types = type_pool(options.schema_name, options.include_noise_types);

    let mut docs = Vec::with_capacity(options.docs);
    for d in 0..options.docs {
        let mut builder = DocBuilder::new();
        let n_sentences = rng.random_range(1..=options.max_sentences);
        let n_entities = rng.random_range(2..=options.max_entities.max(2));

        let mut assignments: Vec<usize> =
            (0..n_entities).map(|_| rng.random_range(0..n_sentences)).collect();
        assignments.sort_unstable();

        let mut placed: Vec<(String, String)> = Vec::new(); // (entity id, type)
        let mut entity_cursor = 0usize;
        for sentence in 0..n_sentences {
            for _ in 0..rng.random_range(1..=3usize) {
                builder.push_word(FILLERS.choose(&mut rng).unwrap());
            }
            while entity_cursor < n_entities && assignments[entity_cursor] == sentence {
                let semantic_type = *types.choose(&mut rng).unwrap();
                let surface =
                    format!("{}{}", semantic_type.to_lowercase(), entity_cursor + 1);
                let id = builder.push_entity(&surface, semantic_type);
                placed.push((id, semantic_type.to_string()));
                if rng.random_bool(0.3) {
                    builder.push_word(FILLERS.choose(&mut rng).unwrap());
                }
                entity_cursor += 1;
            }
            builder.end_sentence();
        }

        // Sample gold relations over compatible pairs, unique per pair.
        let mut compatible: Vec<(String, String, String)> = Vec::new();
        for i in 0..placed.len() {
            for j in i + 1..placed.len() {
                let (id_a, type_a) = &placed[i];
                let (id_b, type_b) = &placed[j];
                let cats = schema.compatible_categories(type_a, type_b);
                if let [one] = cats.as_slice() {
                    let (arg1, arg2) = if type_a == &one.arg1_type {
                        (id_a.clone(), id_b.clone())
                    } else {
                        (id_b.clone(), id_a.clone())
                    };
                    compatible.push((one.category.clone(), arg1, arg2));
                }
            }
        }
        compatible.shuffle(&mut rng);
        for (category, arg1, arg2) in compatible.into_iter().take(options.gold_per_doc) {
            builder.relate(&category, &arg1, &arg2);
        }

        docs.push(builder.build(format!("doc{d:04}")));
    }
    Corpus::new(docs)
}

/// A corpus whose positive pairs are marked by a category-specific cue word
/// near both entities ("adecue"/"strcue") while negatives carry "apart":
/// one candidate pair per document, CSD values cycling through
/// `0..=max_csd`, alternating positive/negative, and alternating
/// Strength-Drug / ADE-Drug categories.
pub fn separable_corpus(num_pairs: usize, max_csd: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(num_pairs);
    for i in 0..num_pairs {
        // Independent cycles keep every stratum stocked with positives and
        // negatives of both categories.
        let csd = i % (max_csd + 1);
        let positive = (i / (max_csd + 1)).is_multiple_of(2);
        let use_ade = (i / ((max_csd + 1) * 2)).is_multiple_of(2);
        let drug = format!("drug{:02}", rng.random_range(0..20));
        let (attr, attr_type, category) = if use_ade {
            (format!("event{:02}", rng.random_range(0..20)), "ADE", "ADE-Drug")
        } else {
            (format!("str{:02}", rng.random_range(0..20)), "Strength", "Strength-Drug")
        };
        let cue = match (positive, use_ade) {
            (false, _) => "apart",
            (true, true) => "adecue",
            (true, false) => "strcue",
        };

        let mut builder = DocBuilder::new();
        let drug_id;
        let attr_id;
        if csd == 0 {
            builder.push_word("pt");
            builder.push_word("took");
            drug_id = builder.push_entity(&drug, "Drug");
            builder.push_word(cue);
            attr_id = builder.push_entity(&attr, attr_type);
            builder.push_word("now");
            builder.end_sentence();
        } else {
            builder.push_word("pt");
            builder.push_word("took");
            drug_id = builder.push_entity(&drug, "Drug");
            builder.push_word(cue);
            builder.end_sentence();
            for _ in 0..csd - 1 {
                builder.push_word("status");
                builder.push_word("stable");
                builder.end_sentence();
            }
            builder.push_word(cue);
            attr_id = builder.push_entity(&attr, attr_type);
            builder.push_word("noted");
            builder.end_sentence();
        }
        if positive {
            builder.relate(category, &attr_id, &drug_id);
        }
        docs.push(builder.build(format!("sep{i:04}")));
    }
    Corpus::new(docs)
}

pub fn train_tokenizer(corpus: &Corpus) -> WordTokenizer {
    WordTokenizer::train(corpus.docs().map(|d| d.text.as_str()), true, 1)
}

pub fn schema_for(corpus_kind: &str) -> RelationSchema {
    builtin_schema(corpus_kind).expect("builtin schema")
}
