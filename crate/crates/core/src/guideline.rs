//! The semantic descriptive guideline: the attribute/value space every
//! chromosome is drawn from.
//!
//! A schema is a style token, an ordered list of discrete and continuous
//! attributes, a set of derived tags (extra prompt words implied by discrete
//! values, e.g. colour temperature from hue) and the prompt template used when
//! a chromosome is serialized. Schemas are immutable once built; every
//! constructor path goes through [`AttributeSchema::new`], which enforces the
//! invariants listed on the types below.
//!
//! The on-disk format is TOML; `crates/core/schemas/kandinsky.toml` is the
//! canonical example and the README documents the grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default prompt template: style, discrete values, derived tags, LoRA tokens.
pub const DEFAULT_TEMPLATE: &str = "{style}, {discrete}, {tags}, {lora}";

/// Source of [`AttributeSchema::kandinsky`].
pub const KANDINSKY_TOML: &str = include_str!("../schemas/kandinsky.toml");

/// Placeholders understood by the prompt template.
pub const TEMPLATE_PLACEHOLDERS: [&str; 5] = ["style", "discrete", "tags", "lora", "words"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("schema parse error: {0}")]
    Parse(String),
    #[error("invalid attribute `{attribute}`: {reason}")]
    InvalidAttribute { attribute: String, reason: String },
    #[error("value token `{token}` appears in both `{first}` and `{second}`")]
    DuplicateToken {
        token: String,
        first: String,
        second: String,
    },
    #[error("invalid derived tag `{tag}`: {reason}")]
    InvalidTag { tag: String, reason: String },
    #[error("invalid schema: {0}")]
    Invalid(String),
}

/// How many values of a discrete attribute one chromosome carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PickCount {
    pub min: usize,
    pub max: usize,
}

impl PickCount {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.min..=self.max).contains(&n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeKind {
    Discrete {
        values: Vec<String>,
        pick: PickCount,
    },
    /// Gene values always live on `[0, 1]`. `source_range` is the interval the
    /// schema document declared; genes map linearly onto it.
    Continuous {
        labels: (String, String),
        source_range: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    id: String,
    kind: AttributeKind,
}

impl Attribute {
    pub fn discrete<S: Into<String>>(id: S, values: &[&str], pick: PickCount) -> Self {
        Self {
            id: id.into(),
            kind: AttributeKind::Discrete {
                values: values.iter().map(|v| v.to_string()).collect(),
                pick,
            },
        }
    }

    pub fn continuous<S: Into<String>>(id: S, low_label: &str, high_label: &str) -> Self {
        Self::continuous_over(id, low_label, high_label, (0.0, 1.0))
    }

    pub fn continuous_over<S: Into<String>>(
        id: S,
        low_label: &str,
        high_label: &str,
        source_range: (f64, f64),
    ) -> Self {
        Self {
            id: id.into(),
            kind: AttributeKind::Continuous {
                labels: (low_label.to_string(), high_label.to_string()),
                source_range,
            },
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> &AttributeKind {
        &self.kind
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, AttributeKind::Discrete { .. })
    }

    /// Value tokens; empty for continuous attributes.
    pub fn values(&self) -> &[String] {
        match &self.kind {
            AttributeKind::Discrete { values, .. } => values,
            AttributeKind::Continuous { .. } => &[],
        }
    }

    pub fn pick(&self) -> Option<PickCount> {
        match &self.kind {
            AttributeKind::Discrete { pick, .. } => Some(*pick),
            AttributeKind::Continuous { .. } => None,
        }
    }

    /// Endpoint labels `(at 0, at 1)` of a continuous attribute.
    pub fn labels(&self) -> Option<(&str, &str)> {
        match &self.kind {
            AttributeKind::Continuous { labels, .. } => Some((&labels.0, &labels.1)),
            AttributeKind::Discrete { .. } => None,
        }
    }

    pub fn source_range(&self) -> Option<(f64, f64)> {
        match &self.kind {
            AttributeKind::Continuous { source_range, .. } => Some(*source_range),
            AttributeKind::Discrete { .. } => None,
        }
    }

    /// Maps a value from the declared source range onto the gene interval `[0, 1]`.
    pub fn normalize(&self, source_value: f64) -> Option<f64> {
        let (lo, hi) = self.source_range()?;
        Some((source_value - lo) / (hi - lo))
    }

    /// Inverse of [`Attribute::normalize`].
    pub fn denormalize(&self, gene: f64) -> Option<f64> {
        let (lo, hi) = self.source_range()?;
        Some(lo + gene * (hi - lo))
    }

    fn validate(&self) -> Result<(), SchemaError> {
        let fail = |reason: String| SchemaError::InvalidAttribute {
            attribute: self.id.clone(),
            reason,
        };
        if !is_token(&self.id) {
            return Err(fail("attribute id must be a non-empty token".into()));
        }
        match &self.kind {
            AttributeKind::Discrete { values, pick } => {
                if values.is_empty() {
                    return Err(fail("empty value set".into()));
                }
                let mut seen = BTreeSet::new();
                for v in values {
                    if !is_token(v) {
                        return Err(fail(format!("malformed value token `{v}`")));
                    }
                    if !seen.insert(v.as_str()) {
                        return Err(fail(format!("duplicate value `{v}`")));
                    }
                }
                if pick.min > pick.max || pick.max == 0 || pick.max > values.len() {
                    return Err(fail(format!(
                        "pick count {}..={} out of bounds for {} values",
                        pick.min,
                        pick.max,
                        values.len()
                    )));
                }
            }
            AttributeKind::Continuous {
                labels,
                source_range,
            } => {
                if !is_token(&labels.0) || !is_token(&labels.1) {
                    return Err(fail("endpoint labels must be tokens".into()));
                }
                let (lo, hi) = *source_range;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(fail(format!("degenerate range [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }
}

/// Extra prompt token emitted whenever the chromosome carries any of
/// `any_of` in attribute `attribute`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedTag {
    pub tag: String,
    pub attribute: String,
    pub any_of: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDocument", into = "SchemaDocument")]
pub struct AttributeSchema {
    style_token: String,
    attributes: Vec<Attribute>,
    derived_tags: Vec<DerivedTag>,
    template: String,
}

impl AttributeSchema {
    pub fn new(
        style_token: impl Into<String>,
        attributes: Vec<Attribute>,
        derived_tags: Vec<DerivedTag>,
        template: impl Into<String>,
    ) -> Result<Self, SchemaError> {
        let schema = Self {
            style_token: style_token.into(),
            attributes,
            derived_tags,
            template: template.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if !is_token(&self.style_token) {
            return Err(SchemaError::Invalid(
                "style token must be a single non-empty token".into(),
            ));
        }
        let mut ids = BTreeSet::new();
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for attr in &self.attributes {
            attr.validate()?;
            if !ids.insert(attr.id.as_str()) {
                return Err(SchemaError::InvalidAttribute {
                    attribute: attr.id.clone(),
                    reason: "duplicate attribute id".into(),
                });
            }
            for v in attr.values() {
                if let Some(first) = owner.insert(v, &attr.id) {
                    return Err(SchemaError::DuplicateToken {
                        token: v.clone(),
                        first: first.to_string(),
                        second: attr.id.clone(),
                    });
                }
            }
        }
        if !self.attributes.iter().any(Attribute::is_discrete) {
            return Err(SchemaError::Invalid("no discrete attribute".into()));
        }
        if self.attributes.iter().all(Attribute::is_discrete) {
            return Err(SchemaError::Invalid("no continuous attribute".into()));
        }
        for tag in &self.derived_tags {
            let bad = |reason: String| SchemaError::InvalidTag {
                tag: tag.tag.clone(),
                reason,
            };
            if !is_token(&tag.tag) {
                return Err(bad("tag must be a token".into()));
            }
            let attr = self
                .attribute(&tag.attribute)
                .filter(|a| a.is_discrete())
                .ok_or_else(|| bad(format!("unknown discrete attribute `{}`", tag.attribute)))?;
            if tag.any_of.is_empty() {
                return Err(bad("empty predicate".into()));
            }
            for v in &tag.any_of {
                if !attr.values().contains(v) {
                    return Err(bad(format!("references unknown value `{v}`")));
                }
            }
        }
        validate_template(&self.template)
    }

    /// The built-in Kandinsky Bauhaus guideline (`schemas/kandinsky.toml`).
    pub fn kandinsky() -> Self {
        Self::from_toml(KANDINSKY_TOML).expect("built-in schema is valid")
    }

    /// Parses and validates a TOML schema document.
    pub fn from_toml(document: &str) -> Result<Self, SchemaError> {
        let doc: SchemaDocument =
            toml::from_str(document).map_err(|e| SchemaError::Parse(e.to_string()))?;
        Self::try_from(doc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&SchemaDocument::from(self.clone())).expect("schema serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn style_token(&self) -> &str {
        &self.style_token
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn derived_tags(&self) -> &[DerivedTag] {
        &self.derived_tags
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Same schema with a different prompt template.
    pub fn with_template(&self, template: impl Into<String>) -> Result<Self, SchemaError> {
        let mut s = self.clone();
        s.template = template.into();
        s.validate()?;
        Ok(s)
    }

    pub fn attribute(&self, id: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.id == id)
    }

    pub fn discrete(&self) -> impl Iterator<Item = &Attribute> {
        self.attributes.iter().filter(|a| a.is_discrete())
    }

    pub fn continuous(&self) -> impl Iterator<Item = &Attribute> {
        self.attributes.iter().filter(|a| !a.is_discrete())
    }

    /// Every discrete value token, in schema order.
    pub fn value_tokens(&self) -> impl Iterator<Item = &str> {
        self.discrete()
            .flat_map(|a| a.values().iter().map(String::as_str))
    }

    /// The discrete attribute owning `token`.
    pub fn owner_of(&self, token: &str) -> Option<&Attribute> {
        self.discrete()
            .find(|a| a.values().iter().any(|v| v == token))
    }

    /// Derived tags implied by a set of discrete values, in declaration order.
    pub fn tags_for<'a, I>(&'a self, values: I) -> Vec<&'a str>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let held: BTreeSet<&str> = values.into_iter().collect();
        let mut out: Vec<&str> = Vec::new();
        for tag in &self.derived_tags {
            if tag.any_of.iter().any(|v| held.contains(v.as_str()))
                && !out.contains(&tag.tag.as_str())
            {
                out.push(&tag.tag);
            }
        }
        out
    }
}

impl Default for AttributeSchema {
    fn default() -> Self {
        Self::kandinsky()
    }
}

impl fmt::Display for AttributeSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} attributes, {} discrete values)",
            self.style_token,
            self.attributes.len(),
            self.value_tokens().count()
        )
    }
}

fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn validate_template(template: &str) -> Result<(), SchemaError> {
    for piece in parse_template(template)? {
        if let TemplatePiece::Slot(name) = piece {
            if !TEMPLATE_PLACEHOLDERS.contains(&name) {
                return Err(SchemaError::Invalid(format!(
                    "unknown template placeholder `{{{name}}}`"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TemplatePiece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

pub(crate) fn parse_template(template: &str) -> Result<Vec<TemplatePiece<'_>>, SchemaError> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        if rest[..open].contains('}') {
            return Err(SchemaError::Invalid("stray `}` in template".into()));
        }
        if open > 0 {
            pieces.push(TemplatePiece::Literal(&rest[..open]));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| SchemaError::Invalid("unterminated template placeholder".into()))?;
        pieces.push(TemplatePiece::Slot(&rest[open + 1..open + close]));
        rest = &rest[open + close + 1..];
    }
    if rest.contains('}') {
        return Err(SchemaError::Invalid("stray `}` in template".into()));
    }
    if !rest.is_empty() {
        pieces.push(TemplatePiece::Literal(rest));
    }
    Ok(pieces)
}

// Wire form of the schema document.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDocument {
    style_token: String,
    #[serde(default = "default_template")]
    template: String,
    attributes: Vec<AttributeDocument>,
    #[serde(default)]
    derived_tags: Vec<DerivedTag>,
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum AttributeDocument {
    Discrete {
        id: String,
        values: Vec<String>,
        pick: [usize; 2],
    },
    Continuous {
        id: String,
        labels: [String; 2],
        #[serde(default = "unit_range")]
        range: [f64; 2],
    },
}

fn unit_range() -> [f64; 2] {
    [0.0, 1.0]
}

impl TryFrom<SchemaDocument> for AttributeSchema {
    type Error = SchemaError;

    fn try_from(doc: SchemaDocument) -> Result<Self, SchemaError> {
        let attributes = doc
            .attributes
            .into_iter()
            .map(|a| match a {
                AttributeDocument::Discrete { id, values, pick } => Attribute {
                    id,
                    kind: AttributeKind::Discrete {
                        values,
                        pick: PickCount::new(pick[0], pick[1]),
                    },
                },
                AttributeDocument::Continuous { id, labels, range } => {
                    let [lo, hi] = labels;
                    Attribute {
                        id,
                        kind: AttributeKind::Continuous {
                            labels: (lo, hi),
                            source_range: (range[0], range[1]),
                        },
                    }
                }
            })
            .collect();
        AttributeSchema::new(doc.style_token, attributes, doc.derived_tags, doc.template)
    }
}

impl From<AttributeSchema> for SchemaDocument {
    fn from(s: AttributeSchema) -> Self {
        SchemaDocument {
            style_token: s.style_token,
            template: s.template,
            attributes: s
                .attributes
                .into_iter()
                .map(|a| match a.kind {
                    AttributeKind::Discrete { values, pick } => AttributeDocument::Discrete {
                        id: a.id,
                        values,
                        pick: [pick.min, pick.max],
                    },
                    AttributeKind::Continuous {
                        labels,
                        source_range,
                    } => AttributeDocument::Continuous {
                        id: a.id,
                        labels: [labels.0, labels.1],
                        range: [source_range.0, source_range.1],
                    },
                })
                .collect(),
            derived_tags: s.derived_tags,
        }
    }
}
