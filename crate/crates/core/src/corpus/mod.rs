//! In-memory document model: character-offset entities, sentence spans,
//! gold relations, and directory loading for `.txt`/`.ann` corpora.
//!
//! All offsets are Unicode character (not byte) offsets, matching the
//! standoff annotation convention.

mod segment;
mod standoff;

pub use segment::{segment_sentences, segment_sentences_with, SegmenterConfig};
pub use standoff::{parse_standoff, parse_standoff_with, to_standoff};

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{doc_id} line {line}: malformed annotation line: {reason}")]
    MalformedLine {
        doc_id: String,
        line: usize,
        reason: String,
    },
    #[error("{doc_id} line {line}: duplicate annotation id {id}")]
    DuplicateId {
        doc_id: String,
        line: usize,
        id: String,
    },
    #[error("{doc_id}: relation {relation_id} references unknown entity {entity_id}")]
    DanglingReference {
        doc_id: String,
        relation_id: String,
        entity_id: String,
    },
    #[error("{doc_id}: entity {entity_id} span {start}..{end} exceeds text length {text_len}")]
    OffsetOutOfRange {
        doc_id: String,
        entity_id: String,
        start: usize,
        end: usize,
        text_len: usize,
    },
    #[error("{doc_id}: entity {entity_id} surface {annotated:?} does not match text slice {actual:?}")]
    SurfaceMismatch {
        doc_id: String,
        entity_id: String,
        annotated: String,
        actual: String,
    },
    #[error("{doc_id}: relation {relation_id} links entity {entity_id} to itself")]
    SelfReferentialRelation {
        doc_id: String,
        relation_id: String,
        entity_id: String,
    },
    #[error("{doc_id}: entity {entity_id} start offset {start} is not covered by any sentence")]
    UnassignedEntity {
        doc_id: String,
        entity_id: String,
        start: usize,
    },
    #[error("entity {entity_id} does not belong to document {doc_id}")]
    UnknownEntity { doc_id: String, entity_id: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// One sentence of a document, as a half-open character-offset range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceSpan {
    pub index: usize,
    /// Inclusive start offset.
    pub start: usize,
    /// Exclusive end offset.
    pub end: usize,
}

/// A pre-annotated clinical concept anchored to a character span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub entity_id: String,
    pub semantic_type: String,
    pub start: usize,
    pub end: usize,
    /// Exactly `text[start..end]` of the owning document.
    pub surface_text: String,
}

/// A gold-standard relation between two entities of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldRelation {
    pub relation_id: String,
    pub category: String,
    pub arg1: String,
    pub arg2: String,
}

/// A parsed document: raw text, sentence segmentation, entities keyed by id,
/// and the gold relations annotated over them.
#[derive(Debug, Clone)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
    pub entities: BTreeMap<String, Entity>,
    pub gold_relations: Vec<GoldRelation>,
}

impl Document {
    /// Assemble and validate a document. Sentences are produced by the
    /// given segmenter configuration; every entity must land inside one.
    pub fn new(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        entities: Vec<Entity>,
        gold_relations: Vec<GoldRelation>,
        seg: &SegmenterConfig,
    ) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        let text = text.into();
        let text_len = char_len(&text);
        let sentences = segment_sentences_with(&text, seg);

        let mut map = BTreeMap::new();
        for entity in entities {
            if entity.start >= entity.end || entity.end > text_len {
                return Err(CorpusError::OffsetOutOfRange {
                    doc_id,
                    entity_id: entity.entity_id,
                    start: entity.start,
                    end: entity.end,
                    text_len,
                });
            }
            let actual = char_slice(&text, entity.start, entity.end);
            if entity.surface_text != actual {
                return Err(CorpusError::SurfaceMismatch {
                    doc_id,
                    entity_id: entity.entity_id,
                    annotated: entity.surface_text,
                    actual,
                });
            }
            map.insert(entity.entity_id.clone(), entity);
        }

        for relation in &gold_relations {
            for arg in [&relation.arg1, &relation.arg2] {
                if !map.contains_key(arg) {
                    return Err(CorpusError::DanglingReference {
                        doc_id,
                        relation_id: relation.relation_id.clone(),
                        entity_id: arg.clone(),
                    });
                }
            }
            if relation.arg1 == relation.arg2 {
                return Err(CorpusError::SelfReferentialRelation {
                    doc_id,
                    relation_id: relation.relation_id.clone(),
                    entity_id: relation.arg1.clone(),
                });
            }
        }

        let doc = Document {
            doc_id,
            text,
            sentences,
            entities: map,
            gold_relations,
        };
        for entity in doc.entities.values() {
            doc.sentence_index_of(entity)?;
        }
        Ok(doc)
    }

    /// Index of the sentence containing the entity's start offset.
    pub fn sentence_index_of(&self, entity: &Entity) -> Result<usize, CorpusError> {
        match self.entities.get(&entity.entity_id) {
            Some(own) if own == entity => {}
            _ => {
                return Err(CorpusError::UnknownEntity {
                    doc_id: self.doc_id.clone(),
                    entity_id: entity.entity_id.clone(),
                })
            }
        }
        self.sentence_index_at(entity.start)
            .ok_or_else(|| CorpusError::UnassignedEntity {
                doc_id: self.doc_id.clone(),
                entity_id: entity.entity_id.clone(),
                start: entity.start,
            })
    }

    /// Sentence index covering a character offset, if any.
    pub fn sentence_index_at(&self, offset: usize) -> Option<usize> {
        let idx = self.sentences.partition_point(|s| s.end <= offset);
        let span = self.sentences.get(idx)?;
        (span.start <= offset && offset < span.end).then_some(span.index)
    }

    pub fn entity(&self, entity_id: &str) -> Result<&Entity, CorpusError> {
        self.entities
            .get(entity_id)
            .ok_or_else(|| CorpusError::UnknownEntity {
                doc_id: self.doc_id.clone(),
                entity_id: entity_id.to_string(),
            })
    }

    /// Sentence text for a span index.
    pub fn sentence_text(&self, index: usize) -> &str {
        let span = &self.sentences[index];
        byte_slice(&self.text, span.start, span.end)
    }
}

/// A set of documents keyed by doc id, iterated in sorted order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: BTreeMap<String, Document>,
}

impl Corpus {
    pub fn new(docs: impl IntoIterator<Item = Document>) -> Self {
        Corpus {
            docs: docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
        }
    }

    /// Load every `<stem>.txt` / `<stem>.ann` pair under a directory.
    pub fn load_dir(dir: &Path, seg: &SegmenterConfig) -> Result<Self, CorpusError> {
        let read = |p: &Path| -> Result<String, CorpusError> {
            std::fs::read_to_string(p).map_err(|e| CorpusError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let entries = std::fs::read_dir(dir).map_err(|e| CorpusError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut text_files: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        text_files.sort();

        let mut docs = Vec::new();
        for text_path in text_files {
            let stem = text_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let ann_path = text_path.with_extension("ann");
            let text = read(&text_path)?;
            let ann = read(&ann_path)?;
            docs.push(parse_standoff_with(&ann, &text, &stem, seg)?);
        }
        Ok(Corpus::new(docs))
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }

    pub fn docs(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

pub(crate) fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slice by character offsets, allocating.
pub(crate) fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end.saturating_sub(start)).collect()
}

/// Slice by character offsets without allocating.
pub(crate) fn byte_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b);
    let byte_start = indices.nth(start).unwrap_or(text.len());
    let byte_end = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        byte_start
    };
    &text[byte_start..byte_end]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entity(id: &str, ty: &str, start: usize, end: usize, text: &str) -> Entity {
        Entity {
            entity_id: id.into(),
            semantic_type: ty.into(),
            start,
            end,
            surface_text: char_slice(text, start, end),
        }
    }

    #[test]
    fn sentence_index_of_first_and_second_sentence() {
        let text = "He takes aspirin. No rash noted.";
        let e1 = entity("T1", "Drug", 9, 16, text);
        let e2 = entity("T2", "ADE", 21, 25, text);
        let doc = Document::new(
            "d1",
            text,
            vec![e1.clone(), e2.clone()],
            vec![],
            &SegmenterConfig::default(),
        )
        .unwrap();
        assert_eq!(doc.sentence_index_of(&e1).unwrap(), 0);
        assert_eq!(doc.sentence_index_of(&e2).unwrap(), 1);
    }

    #[test]
    fn entity_crossing_boundary_assigned_by_start() {
        // Entity starts in sentence 0 but its span runs past the boundary.
        let text = "dose is 40 mg. next line";
        let e = Entity {
            entity_id: "T1".into(),
            semantic_type: "Dosage".into(),
            start: 8,
            end: 19,
            surface_text: char_slice(text, 8, 19),
        };
        let doc = Document::new("d", text, vec![e.clone()], vec![], &SegmenterConfig::default())
            .unwrap();
        assert_eq!(doc.sentence_index_of(&e).unwrap(), 0);
    }

    #[test]
    fn foreign_entity_rejected() {
        let text = "aspirin daily";
        let doc =
            Document::new("d", text, vec![], vec![], &SegmenterConfig::default()).unwrap();
        let stray = entity("T9", "Drug", 0, 7, text);
        assert!(matches!(
            doc.sentence_index_of(&stray),
            Err(CorpusError::UnknownEntity { .. })
        ));
    }

    #[test]
    fn relation_to_missing_entity_rejected() {
        let text = "aspirin daily";
        let err = Document::new(
            "d",
            text,
            vec![entity("T1", "Drug", 0, 7, text)],
            vec![GoldRelation {
                relation_id: "R1".into(),
                category: "X".into(),
                arg1: "T1".into(),
                arg2: "T9".into(),
            }],
            &SegmenterConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DanglingReference { .. }));
    }

    #[test]
    fn surface_mismatch_rejected() {
        let text = "aspirin daily";
        let mut e = entity("T1", "Drug", 0, 7, text);
        e.surface_text = "ibuprofen".into();
        let err =
            Document::new("d", text, vec![e], vec![], &SegmenterConfig::default()).unwrap_err();
        assert!(matches!(err, CorpusError::SurfaceMismatch { .. }));
    }

    #[test]
    fn char_offsets_handle_multibyte_text() {
        let text = "µg dose: naproxen."; // 'µ' is 2 bytes, 1 char
        let e = entity("T1", "Drug", 9, 17, text);
        assert_eq!(e.surface_text, "naproxen");
        let doc =
            Document::new("d", text, vec![e.clone()], vec![], &SegmenterConfig::default())
                .unwrap();
        assert_eq!(doc.sentence_index_of(&e).unwrap(), 0);
        assert_eq!(doc.sentence_text(0), text);
    }
}
