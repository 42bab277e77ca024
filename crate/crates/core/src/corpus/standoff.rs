//! Standoff annotation grammar (one record per line, UTF-8):
//!
//! ```text
//! Entity:   T<id><TAB><Type> <start> <end><TAB><surface>
//! Relation: R<id><TAB><Category> Arg1:T<id> Arg2:T<id>
//! ```
//!
//! Offsets are character offsets into the sibling text file. Lines starting
//! with `#` (annotator notes) and blank lines are skipped. Discontinuous
//! entity spans (`;`-separated fragments) are rejected.

use super::{
    char_len, char_slice, CorpusError, Document, Entity, GoldRelation, SegmenterConfig,
};

/// Parse annotations against their document text with default segmentation.
pub fn parse_standoff(
    annotation_text: &str,
    document_text: &str,
    doc_id: &str,
) -> Result<Document, CorpusError> {
    parse_standoff_with(
        annotation_text,
        document_text,
        doc_id,
        &SegmenterConfig::default(),
    )
}

pub fn parse_standoff_with(
    annotation_text: &str,
    document_text: &str,
    doc_id: &str,
    seg: &SegmenterConfig,
) -> Result<Document, CorpusError> {
    let malformed = |line: usize, reason: &str| CorpusError::MalformedLine {
        doc_id: doc_id.to_string(),
        line,
        reason: reason.to_string(),
    };

    let mut entities: Vec<Entity> = Vec::new();
    let mut relations: Vec<GoldRelation> = Vec::new();
    let mut seen_ids: Vec<String> = Vec::new();
    let text_len = char_len(document_text);

    for (lineno, raw) in annotation_text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }

        let mut fields = line.splitn(2, '\t');
        let id = fields.next().unwrap_or_default();
        let body = fields
            .next()
            .ok_or_else(|| malformed(lineno, "expected <id><TAB><body>"))?;

        if !valid_id(id) {
            return Err(malformed(
                lineno,
                "record id must be T or R followed by digits",
            ));
        }
        if seen_ids.iter().any(|s| s == id) {
            return Err(CorpusError::DuplicateId {
                doc_id: doc_id.to_string(),
                line: lineno,
                id: id.to_string(),
            });
        }
        seen_ids.push(id.to_string());

        if id.starts_with('T') {
            let mut parts = body.splitn(2, '\t');
            let spec = parts.next().unwrap_or_default();
            let surface = parts
                .next()
                .ok_or_else(|| malformed(lineno, "entity line needs a surface field"))?;
            if spec.contains(';') {
                return Err(malformed(lineno, "discontinuous entity spans are not supported"));
            }
            let spec_parts: Vec<&str> = spec.split_whitespace().collect();
            let [semantic_type, start, end] = spec_parts.as_slice() else {
                return Err(malformed(lineno, "expected <Type> <start> <end>"));
            };
            let start: usize = start
                .parse()
                .map_err(|_| malformed(lineno, "start offset is not an integer"))?;
            let end: usize = end
                .parse()
                .map_err(|_| malformed(lineno, "end offset is not an integer"))?;
            if start >= end || end > text_len {
                return Err(CorpusError::OffsetOutOfRange {
                    doc_id: doc_id.to_string(),
                    entity_id: id.to_string(),
                    start,
                    end,
                    text_len,
                });
            }
            let actual = char_slice(document_text, start, end);
            if normalize_surface(&actual) != normalize_surface(surface) {
                return Err(CorpusError::SurfaceMismatch {
                    doc_id: doc_id.to_string(),
                    entity_id: id.to_string(),
                    annotated: surface.to_string(),
                    actual,
                });
            }
            entities.push(Entity {
                entity_id: id.to_string(),
                semantic_type: semantic_type.to_string(),
                start,
                end,
                // Keep the true slice; the annotated field may have newlines
                // flattened to spaces.
                surface_text: actual,
            });
        } else {
            let parts: Vec<&str> = body.split_whitespace().collect();
            let [category, arg1, arg2] = parts.as_slice() else {
                return Err(malformed(lineno, "expected <Category> Arg1:T<id> Arg2:T<id>"));
            };
            let arg1 = arg1
                .strip_prefix("Arg1:")
                .ok_or_else(|| malformed(lineno, "first argument must be Arg1:<id>"))?;
            let arg2 = arg2
                .strip_prefix("Arg2:")
                .ok_or_else(|| malformed(lineno, "second argument must be Arg2:<id>"))?;
            if category.is_empty() {
                return Err(malformed(lineno, "relation category is empty"));
            }
            relations.push(GoldRelation {
                relation_id: id.to_string(),
                category: category.to_string(),
                arg1: arg1.to_string(),
                arg2: arg2.to_string(),
            });
        }
    }

    Document::new(doc_id, document_text, entities, relations, seg)
}

/// Serialize a document's annotations back to standoff form.
///
/// Records are ordered by numeric id, entities first. Re-parsing the output
/// against the same text reproduces the entities and relations exactly.
pub fn to_standoff(document: &Document) -> String {
    let mut entities: Vec<&Entity> = document.entities.values().collect();
    entities.sort_by_key(|e| id_number(&e.entity_id));
    let mut relations: Vec<&GoldRelation> = document.gold_relations.iter().collect();
    relations.sort_by_key(|r| id_number(&r.relation_id));

    let mut out = String::new();
    for e in entities {
        out.push_str(&format!(
            "{}\t{} {} {}\t{}\n",
            e.entity_id,
            e.semantic_type,
            e.start,
            e.end,
            normalize_surface(&e.surface_text)
        ));
    }
    for r in relations {
        out.push_str(&format!(
            "{}\t{} Arg1:{} Arg2:{}\n",
            r.relation_id, r.category, r.arg1, r.arg2
        ));
    }
    out
}

fn valid_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some('T') | Some('R')) && {
        let rest = chars.as_str();
        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
    }
}

/// Newlines inside an entity surface cannot survive a line-oriented format;
/// they are stored flattened to spaces, so compare modulo that flattening.
fn normalize_surface(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn id_number(id: &str) -> u64 {
    id[1..].parse().unwrap_or(u64::MAX)
}
