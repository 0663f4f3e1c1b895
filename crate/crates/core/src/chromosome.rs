//! Prompt genotypes and their serialization to prompt text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::{parse_template, Attribute, AttributeSchema, TemplatePiece};

/// Exclusive upper bound of the generation seed gene.
pub const SEED_BOUND: u32 = 2_147_483_647;

/// One prompt genotype: style token, discrete genes, continuous genes and the
/// generation seed.
///
/// Discrete genes are kept in schema value order so that structurally equal
/// chromosomes compare equal regardless of how they were built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub style: String,
    pub discrete: BTreeMap<String, Vec<String>>,
    pub continuous: BTreeMap<String, f64>,
    pub seed: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    StyleMismatch { found: String },
    MissingAttribute(String),
    UnknownAttribute(String),
    UnknownValue { attribute: String, value: String },
    DuplicateValue { attribute: String, value: String },
    PickCount { attribute: String, count: usize },
    ContinuousOutOfRange { attribute: String, value: String },
    SeedOutOfRange(u32),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StyleMismatch { found } => write!(f, "style token mismatch: `{found}`"),
            Violation::MissingAttribute(a) => write!(f, "missing attribute `{a}`"),
            Violation::UnknownAttribute(a) => write!(f, "unknown attribute `{a}`"),
            Violation::UnknownValue { attribute, value } => {
                write!(f, "unknown value `{value}` in `{attribute}`")
            }
            Violation::DuplicateValue { attribute, value } => {
                write!(f, "duplicate value `{value}` in `{attribute}`")
            }
            Violation::PickCount { attribute, count } => {
                write!(f, "pick count {count} out of bounds in `{attribute}`")
            }
            Violation::ContinuousOutOfRange { attribute, value } => {
                write!(f, "continuous value {value} out of range in `{attribute}`")
            }
            Violation::SeedOutOfRange(s) => write!(f, "seed out of range: {s}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid chromosome: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct InvalidChromosome(pub Vec<Violation>);

/// Which gene a prompt token came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gene", content = "attribute", rename_all = "snake_case")]
pub enum GeneSlot {
    Style,
    Discrete(String),
    Tag(String),
    Lora(String),
    Word(String),
    Separator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceToken {
    #[serde(flatten)]
    pub slot: GeneSlot,
    pub token: String,
}

/// Serialized prompt plus the gene that emitted every piece of it.
/// Concatenating the trace tokens in order reproduces `text` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub token_trace: Vec<TraceToken>,
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Draws `k` distinct values of `attr` uniformly.
pub(crate) fn uniform_values<R: Rng + ?Sized>(
    attr: &Attribute,
    k: usize,
    rng: &mut R,
) -> Vec<String> {
    let values = attr.values();
    let mut picked: Vec<usize> = index::sample(rng, values.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| values[i].clone()).collect()
}

/// Sorts values into the attribute's declared order.
pub(crate) fn canonicalize(attr: &Attribute, values: &mut [String]) {
    let pos = |v: &String| {
        attr.values()
            .iter()
            .position(|x| x == v)
            .unwrap_or(usize::MAX)
    };
    values.sort_by_key(pos);
}

pub(crate) fn random_pick_len<R: Rng + ?Sized>(attr: &Attribute, rng: &mut R) -> usize {
    let pick = attr.pick().expect("discrete attribute");
    rng.random_range(pick.min..=pick.max)
}

impl Chromosome {
    /// Uniform random chromosome: discrete values without replacement, continuous
    /// genes uniform on `[0, 1]`, seed uniform on `[0, SEED_BOUND)`.
    pub fn random<R: Rng + ?Sized>(schema: &AttributeSchema, rng: &mut R) -> Self {
        let mut discrete = BTreeMap::new();
        let mut continuous = BTreeMap::new();
        for attr in schema.attributes() {
            if attr.is_discrete() {
                let k = random_pick_len(attr, rng);
                discrete.insert(attr.id().to_string(), uniform_values(attr, k, rng));
            } else {
                continuous.insert(attr.id().to_string(), rng.random::<f64>());
            }
        }
        Chromosome {
            style: schema.style_token().to_string(),
            discrete,
            continuous,
            seed: rng.random_range(0..SEED_BOUND),
        }
    }

    pub fn values_of(&self, attribute: &str) -> &[String] {
        self.discrete
            .get(attribute)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All discrete values carried, attribute by attribute.
    pub fn discrete_values(&self) -> impl Iterator<Item = &str> {
        self.discrete.values().flatten().map(String::as_str)
    }

    pub fn contains_value(&self, token: &str) -> bool {
        self.discrete_values().any(|v| v == token)
    }

    pub fn gene(&self, attribute: &str) -> Option<f64> {
        self.continuous.get(attribute).copied()
    }

    /// Every invariant violation against `schema`; empty iff valid.
    pub fn validate(&self, schema: &AttributeSchema) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.style != schema.style_token() {
            out.push(Violation::StyleMismatch {
                found: self.style.clone(),
            });
        }
        for attr in schema.attributes() {
            let id = attr.id();
            if attr.is_discrete() {
                let Some(values) = self.discrete.get(id) else {
                    out.push(Violation::MissingAttribute(id.to_string()));
                    continue;
                };
                let mut seen = BTreeSet::new();
                for v in values {
                    if !attr.values().contains(v) {
                        out.push(Violation::UnknownValue {
                            attribute: id.to_string(),
                            value: v.clone(),
                        });
                    }
                    if !seen.insert(v) {
                        out.push(Violation::DuplicateValue {
                            attribute: id.to_string(),
                            value: v.clone(),
                        });
                    }
                }
                if !attr.pick().expect("discrete").contains(values.len()) {
                    out.push(Violation::PickCount {
                        attribute: id.to_string(),
                        count: values.len(),
                    });
                }
            } else {
                match self.continuous.get(id) {
                    None => out.push(Violation::MissingAttribute(id.to_string())),
                    Some(v) if !(0.0..=1.0).contains(v) => {
                        out.push(Violation::ContinuousOutOfRange {
                            attribute: id.to_string(),
                            value: v.to_string(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        for id in self.discrete.keys() {
            if !schema.attribute(id).is_some_and(Attribute::is_discrete) {
                out.push(Violation::UnknownAttribute(id.clone()));
            }
        }
        for id in self.continuous.keys() {
            if schema.attribute(id).is_none_or(Attribute::is_discrete) {
                out.push(Violation::UnknownAttribute(id.clone()));
            }
        }
        if self.seed >= SEED_BOUND {
            out.push(Violation::SeedOutOfRange(self.seed));
        }
        out
    }

    pub fn is_valid(&self, schema: &AttributeSchema) -> bool {
        self.validate(schema).is_empty()
    }

    /// Deterministic prompt text according to the schema's template.
    /// The seed is not part of the text.
    pub fn to_prompt(&self, schema: &AttributeSchema) -> Result<PromptText, InvalidChromosome> {
        let violations = self.validate(schema);
        if !violations.is_empty() {
            return Err(InvalidChromosome(violations));
        }
        let pieces = parse_template(schema.template()).expect("template validated with schema");

        let mut rendered: Vec<Option<Vec<TraceToken>>> = pieces
            .iter()
            .map(|p| match p {
                TemplatePiece::Literal(_) => None,
                TemplatePiece::Slot(name) => Some(self.render_slot(name, schema)),
            })
            .collect();

        // An empty slot swallows the literal that follows it, or the one
        // before it when it closes the template.
        let mut keep = vec![true; pieces.len()];
        for i in 0..pieces.len() {
            if rendered[i].as_ref().is_some_and(Vec::is_empty) {
                keep[i] = false;
                let next = (i + 1..pieces.len()).find(|&j| keep[j]);
                let prev = (0..i).rev().find(|&j| keep[j]);
                match (next, prev) {
                    (Some(j), _) if matches!(pieces[j], TemplatePiece::Literal(_)) => {
                        keep[j] = false
                    }
                    (None, Some(j)) if matches!(pieces[j], TemplatePiece::Literal(_)) => {
                        keep[j] = false
                    }
                    _ => {}
                }
            }
        }

        let mut trace = Vec::new();
        for (i, piece) in pieces.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            match piece {
                TemplatePiece::Literal(lit) => trace.push(TraceToken {
                    slot: GeneSlot::Separator,
                    token: lit.to_string(),
                }),
                TemplatePiece::Slot(_) => trace.append(rendered[i].as_mut().expect("slot")),
            }
        }
        let text = trace.iter().map(|t| t.token.as_str()).collect();
        Ok(PromptText {
            text,
            token_trace: trace,
        })
    }

    fn render_slot(&self, name: &str, schema: &AttributeSchema) -> Vec<TraceToken> {
        let tok = |slot: GeneSlot, token: &str| TraceToken {
            slot,
            token: token.to_string(),
        };
        let (items, sep): (Vec<TraceToken>, &str) = match name {
            "style" => (vec![tok(GeneSlot::Style, &self.style)], ""),
            "discrete" => {
                let items = schema
                    .discrete()
                    .flat_map(|attr| {
                        let held = self.values_of(attr.id());
                        attr.values()
                            .iter()
                            .filter(|v| held.contains(v))
                            .map(|v| tok(GeneSlot::Discrete(attr.id().to_string()), v))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                (items, ", ")
            }
            "tags" => {
                let items = schema
                    .derived_tags()
                    .iter()
                    .filter(|t| {
                        t.any_of
                            .iter()
                            .any(|v| self.values_of(&t.attribute).contains(v))
                    })
                    .fold(Vec::<TraceToken>::new(), |mut acc, t| {
                        if !acc.iter().any(|x| x.token == t.tag) {
                            acc.push(tok(GeneSlot::Tag(t.attribute.clone()), &t.tag));
                        }
                        acc
                    });
                (items, ", ")
            }
            "lora" => {
                let items = schema
                    .continuous()
                    .map(|attr| {
                        let w = self.continuous[attr.id()];
                        tok(
                            GeneSlot::Lora(attr.id().to_string()),
                            &format!("<lora:{}:{:.2}>", attr.id(), w),
                        )
                    })
                    .collect();
                (items, " ")
            }
            "words" => {
                let items = schema
                    .continuous()
                    .map(|attr| {
                        let (low, high) = attr.labels().expect("continuous");
                        let word = if self.continuous[attr.id()] < 0.5 {
                            low
                        } else {
                            high
                        };
                        tok(GeneSlot::Word(attr.id().to_string()), word)
                    })
                    .collect();
                (items, ", ")
            }
            other => unreachable!("template placeholder `{other}` passed validation"),
        };
        let mut out = Vec::with_capacity(items.len() * 2);
        for (i, item) in items.into_iter().enumerate() {
            if i > 0 {
                out.push(tok(GeneSlot::Separator, sep));
            }
            out.push(item);
        }
        out
    }
}
