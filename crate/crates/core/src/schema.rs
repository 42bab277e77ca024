//! Relation schemas: which ordered entity-type pairs can hold which relation
//! categories. Candidate generation filters on these rules, and the binary
//! classification strategy relies on them to infer categories from types.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("unknown builtin schema {0:?} (expected \"made1.0\" or \"n2c2\")")]
    UnknownSchema(String),
    #[error("schema line {line}: {reason}")]
    MalformedSchema { line: usize, reason: String },
    #[error("schema line {line}: duplicate rule for type pair ({arg1_type}, {arg2_type})")]
    DuplicateRule {
        line: usize,
        arg1_type: String,
        arg2_type: String,
    },
}

/// One rule: the ordered type pair `(arg1_type, arg2_type)` may hold any of
/// `categories`. A rule with more than one category makes the schema
/// ambiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaRule {
    pub arg1_type: String,
    pub arg2_type: String,
    pub categories: Vec<String>,
}

/// A category applicable to a queried type pair, carrying the declared
/// role order so callers can assign Arg1/Arg2 regardless of how the query
/// was ordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibleCategory {
    pub category: String,
    pub arg1_type: String,
    pub arg2_type: String,
}

/// An immutable relation schema. Rules are keyed by their declared
/// (Arg1, Arg2) type order; lookups are symmetric in the queried types.
#[derive(Debug, Clone)]
pub struct RelationSchema {
    name: String,
    rules: Vec<SchemaRule>,
    categories: Vec<String>,
    /// Category preference order for ambiguous rules, highest first.
    priority: Option<Vec<String>>,
    /// Allow same-type rules by assigning Arg1 to the earlier-offset entity.
    self_pair_tiebreak: bool,
}

impl RelationSchema {
    pub fn new(name: impl Into<String>, rules: Vec<SchemaRule>) -> Result<Self, SchemaError> {
        let mut categories = Vec::new();
        for (i, rule) in rules.iter().enumerate() {
            for earlier in &rules[..i] {
                let same = earlier.arg1_type == rule.arg1_type
                    && earlier.arg2_type == rule.arg2_type;
                let reversed = earlier.arg1_type == rule.arg2_type
                    && earlier.arg2_type == rule.arg1_type;
                if same || reversed {
                    return Err(SchemaError::DuplicateRule {
                        line: i + 1,
                        arg1_type: rule.arg1_type.clone(),
                        arg2_type: rule.arg2_type.clone(),
                    });
                }
            }
            for cat in &rule.categories {
                if !categories.contains(cat) {
                    categories.push(cat.clone());
                }
            }
        }
        Ok(RelationSchema {
            name: name.into(),
            rules,
            categories,
            priority: None,
            self_pair_tiebreak: false,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rules(&self) -> &[SchemaRule] {
        &self.rules
    }

    /// All categories, in declaration order.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// True when every rule declares exactly one category.
    pub fn is_unambiguous(&self) -> bool {
        self.rules.iter().all(|r| r.categories.len() == 1)
    }

    pub fn priority(&self) -> Option<&[String]> {
        self.priority.as_deref()
    }

    pub fn self_pair_tiebreak(&self) -> bool {
        self.self_pair_tiebreak
    }

    /// Configure a category preference order for ambiguous rules.
    pub fn with_priority(mut self, order: Vec<String>) -> Self {
        self.priority = Some(order);
        self
    }

    /// Permit rules whose two sides share a type, resolving roles by
    /// entity offset (earlier entity takes Arg1).
    pub fn with_self_pair_tiebreak(mut self) -> Self {
        self.self_pair_tiebreak = true;
        self
    }

    /// Rename a category everywhere it appears. Corpora ship with literal
    /// label strings that need not match the builtin group names.
    pub fn with_category_alias(mut self, from: &str, to: &str) -> Self {
        for rule in &mut self.rules {
            for cat in &mut rule.categories {
                if cat == from {
                    *cat = to.to_string();
                }
            }
        }
        for cat in &mut self.categories {
            if cat == from {
                *cat = to.to_string();
            }
        }
        if let Some(order) = &mut self.priority {
            for cat in order {
                if cat == from {
                    *cat = to.to_string();
                }
            }
        }
        self
    }

    /// The rule covering an unordered type pair, if any. At most one exists
    /// because reversed duplicates are rejected at construction.
    pub fn rule_for_pair(&self, type1: &str, type2: &str) -> Option<&SchemaRule> {
        self.rules.iter().find(|r| {
            (r.arg1_type == type1 && r.arg2_type == type2)
                || (r.arg1_type == type2 && r.arg2_type == type1)
        })
    }

    /// Categories defined over `(type1, type2)` in either order, each with
    /// the declared role order. Empty when no rule exists.
    pub fn compatible_categories(&self, type1: &str, type2: &str) -> Vec<CompatibleCategory> {
        match self.rule_for_pair(type1, type2) {
            Some(rule) => rule
                .categories
                .iter()
                .map(|c| CompatibleCategory {
                    category: c.clone(),
                    arg1_type: rule.arg1_type.clone(),
                    arg2_type: rule.arg2_type.clone(),
                })
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Standalone form of [`RelationSchema::compatible_categories`].
pub fn compatible_categories(
    schema: &RelationSchema,
    type1: &str,
    type2: &str,
) -> Vec<CompatibleCategory> {
    schema.compatible_categories(type1, type2)
}

/// The two builtin schemas.
///
/// `"n2c2"` maps eight drug-attribute pairs to their categories. `"made1.0"`
/// carries the seven relation groups (four drug attributes, ADE, Indication,
/// and a Severity link to sign/symptom mentions); the corpus's literal label
/// strings can be applied over these names via
/// [`RelationSchema::with_category_alias`].
pub fn builtin_schema(name: &str) -> Result<RelationSchema, SchemaError> {
    let rule = |a1: &str, a2: &str, cat: &str| SchemaRule {
        arg1_type: a1.to_string(),
        arg2_type: a2.to_string(),
        categories: vec![cat.to_string()],
    };
    match name.to_ascii_lowercase().as_str() {
        "n2c2" => RelationSchema::new(
            "n2c2",
            vec![
                rule("Strength", "Drug", "Strength-Drug"),
                rule("Form", "Drug", "Form-Drug"),
                rule("Dosage", "Drug", "Dosage-Drug"),
                rule("Duration", "Drug", "Duration-Drug"),
                rule("Frequency", "Drug", "Frequency-Drug"),
                rule("Route", "Drug", "Route-Drug"),
                rule("Reason", "Drug", "Reason-Drug"),
                rule("ADE", "Drug", "ADE-Drug"),
            ],
        ),
        "made1.0" => RelationSchema::new(
            "made1.0",
            vec![
                rule("Dosage", "Drug", "Dosage-Drug"),
                rule("Route", "Drug", "Route-Drug"),
                rule("Frequency", "Drug", "Frequency-Drug"),
                rule("Duration", "Drug", "Duration-Drug"),
                rule("ADE", "Drug", "ADE-Drug"),
                rule("Indication", "Drug", "Indication-Drug"),
                rule("Severity", "SSLIF", "Severity-SSLIF"),
            ],
        ),
        _ => Err(SchemaError::UnknownSchema(name.to_string())),
    }
}

/// Parse a schema definition (UTF-8, one rule per line):
///
/// ```text
/// rule<TAB><Arg1Type><TAB><Arg2Type><TAB><Category>[,<Category>...]
/// ```
///
/// Lines starting with `#` are comments.
pub fn load_schema(definition_text: &str) -> Result<RelationSchema, SchemaError> {
    load_schema_named(definition_text, "custom")
}

pub fn load_schema_named(
    definition_text: &str,
    name: &str,
) -> Result<RelationSchema, SchemaError> {
    let mut rules: Vec<SchemaRule> = Vec::new();
    for (lineno, raw) in definition_text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let ["rule", arg1_type, arg2_type, cats] = fields.as_slice() else {
            return Err(SchemaError::MalformedSchema {
                line: lineno,
                reason: "expected rule<TAB><Arg1Type><TAB><Arg2Type><TAB><Category>[,...]".into(),
            });
        };
        let categories: Vec<String> = cats
            .split(',')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if categories.is_empty() {
            return Err(SchemaError::MalformedSchema {
                line: lineno,
                reason: "rule lists no categories".into(),
            });
        }
        let dup = rules.iter().any(|r| {
            (r.arg1_type == *arg1_type && r.arg2_type == *arg2_type)
                || (r.arg1_type == *arg2_type && r.arg2_type == *arg1_type)
        });
        if dup {
            return Err(SchemaError::DuplicateRule {
                line: lineno,
                arg1_type: arg1_type.to_string(),
                arg2_type: arg2_type.to_string(),
            });
        }
        rules.push(SchemaRule {
            arg1_type: arg1_type.to_string(),
            arg2_type: arg2_type.to_string(),
            categories,
        });
    }
    RelationSchema::new(name, rules)
}
