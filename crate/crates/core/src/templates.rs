//! Template grammar for partial explanations.
//!
//! A pattern is a whitespace-separated mix of literal words and bracketed
//! slots, e.g. `[DEP1] is [COMPARE_ATTR] than [DEP2]`. Slot names ignore
//! inner whitespace, so `[DEP 1]` and `[DEP1]` are the same slot.
//! Operations whose wording depends on the outcome carry several variants,
//! keyed by `true`/`false` (boolean results) or `subject`/`object` (relate).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::program::AtomicOp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown slot `[{0}]`")]
    UnknownSlot(String),
    #[error("unterminated slot in pattern `{0}`")]
    Unterminated(String),
    #[error("slot `[{slot}]` cannot be filled by {op}")]
    UnfillableSlot { op: AtomicOp, slot: Slot },
    #[error("no template for {0}")]
    MissingTemplate(AtomicOp),
    #[error("unknown template variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Obj,
    Attr,
    Attr1,
    Attr2,
    Dep,
    Dep1,
    Dep2,
    /// Copula agreeing with the first dependency: `is` or `are`.
    Be,
    CheckExistence,
    QueryAttr,
    VerifyAttr,
    FindCommon,
    CompareAttr,
    Relation,
    Logical,
}

impl Slot {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Obj => "OBJ",
            Self::Attr => "ATTR",
            Self::Attr1 => "ATTR1",
            Self::Attr2 => "ATTR2",
            Self::Dep => "DEP",
            Self::Dep1 => "DEP1",
            Self::Dep2 => "DEP2",
            Self::Be => "BE",
            Self::CheckExistence => "CHECK_EXISTENCE",
            Self::QueryAttr => "QUERY_ATTR",
            Self::VerifyAttr => "VERIFY_ATTR",
            Self::FindCommon => "FIND_COMMON",
            Self::CompareAttr => "COMPARE_ATTR",
            Self::Relation => "RELATION",
            Self::Logical => "LOGICAL",
        }
    }

    /// Whether an operation of kind `op` has the data to fill this slot.
    pub fn fillable_by(&self, op: AtomicOp) -> bool {
        use AtomicOp::*;
        match self {
            Slot::Obj => matches!(op, Select | Filter | Relate),
            Slot::Attr => matches!(op, Filter | Query | Verify | Same | Different),
            Slot::Attr1 | Slot::Attr2 => matches!(op, Same | Different),
            Slot::Dep => op.dep_count() == 1,
            Slot::Dep1 | Slot::Dep2 => op.dep_count() == 2,
            Slot::Be => op.dep_count() >= 1,
            Slot::CheckExistence => op == Exist,
            Slot::QueryAttr => op == Query,
            Slot::VerifyAttr => op == Verify,
            Slot::FindCommon => op == Common,
            Slot::CompareAttr => op == Compare,
            Slot::Relation => op == Relate,
            Slot::Logical => matches!(op, And | Or),
        }
    }
}

impl FromStr for Slot {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_uppercase();
        Ok(match key.as_str() {
            "OBJ" => Self::Obj,
            "ATTR" => Self::Attr,
            "ATTR1" => Self::Attr1,
            "ATTR2" => Self::Attr2,
            "DEP" => Self::Dep,
            "DEP1" => Self::Dep1,
            "DEP2" => Self::Dep2,
            "BE" | "IS/ARE" => Self::Be,
            "CHECK_EXISTENCE" => Self::CheckExistence,
            "QUERY_ATTR" => Self::QueryAttr,
            "VERIFY_ATTR" => Self::VerifyAttr,
            "FIND_COMMON" => Self::FindCommon,
            "COMPARE_ATTR" => Self::CompareAttr,
            "RELATION" => Self::Relation,
            "LOGICAL" | "LOGICALAND/OR" => Self::Logical,
            _ => return Err(TemplateError::UnknownSlot(s.to_string())),
        })
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Word(String),
    Slot(Slot),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Default,
    True,
    False,
    Subject,
    Object,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Default => "default",
            Self::True => "true",
            Self::False => "false",
            Self::Subject => "subject",
            Self::Object => "object",
        }
    }
}

impl FromStr for Variant {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" => Ok(Self::Default),
            "true" | "yes" => Ok(Self::True),
            "false" | "no" => Ok(Self::False),
            "subject" => Ok(Self::Subject),
            "object" => Ok(Self::Object),
            other => Err(TemplateError::UnknownVariant(other.to_string())),
        }
    }
}

pub fn parse_pattern(pattern: &str) -> Result<Vec<Segment>, TemplateError> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('[') {
        out.extend(rest[..open].split_whitespace().map(|w| Segment::Word(w.to_string())));
        let close = rest[open..]
            .find(']')
            .ok_or_else(|| TemplateError::Unterminated(pattern.to_string()))?;
        out.push(Segment::Slot(rest[open + 1..open + close].parse()?));
        rest = &rest[open + close + 1..];
    }
    out.extend(rest.split_whitespace().map(|w| Segment::Word(w.to_string())));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub op: AtomicOp,
    variants: BTreeMap<Variant, Vec<Segment>>,
}

impl Template {
    pub fn new(op: AtomicOp, patterns: &[(Variant, &str)]) -> Result<Self, TemplateError> {
        let mut variants = BTreeMap::new();
        for (variant, pattern) in patterns {
            let segments = parse_pattern(pattern)?;
            for seg in &segments {
                if let Segment::Slot(slot) = seg {
                    if !slot.fillable_by(op) {
                        return Err(TemplateError::UnfillableSlot { op, slot: *slot });
                    }
                }
            }
            variants.insert(*variant, segments);
        }
        if variants.is_empty() {
            return Err(TemplateError::MissingTemplate(op));
        }
        Ok(Self { op, variants })
    }

    /// The requested variant, else `Default`, else the first variant declared.
    pub fn pattern(&self, variant: Variant) -> &[Segment] {
        self.variants
            .get(&variant)
            .or_else(|| self.variants.get(&Variant::Default))
            .or_else(|| self.variants.values().next())
            .expect("templates hold at least one variant")
    }

    pub fn variants(&self) -> impl Iterator<Item = (Variant, &[Segment])> {
        self.variants.iter().map(|(v, s)| (*v, s.as_slice()))
    }
}

/// Rebuilds pattern text from segments.
pub fn pattern_text(segments: &[Segment]) -> String {
    segments
        .iter()
        .map(|s| match s {
            Segment::Word(w) => w.clone(),
            Segment::Slot(slot) => format!("[{slot}]"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub const DEFAULT_ANSWER_CLAUSE: &str = "so the answer is";

/// One template per atomic operation plus the closing answer clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateTable {
    templates: BTreeMap<AtomicOp, Template>,
    answer_clause: Vec<String>,
}

impl TemplateTable {
    pub fn new(templates: Vec<Template>, answer_clause: &str) -> Result<Self, TemplateError> {
        let templates: BTreeMap<AtomicOp, Template> = templates.into_iter().map(|t| (t.op, t)).collect();
        if let Some(op) = AtomicOp::ALL.into_iter().find(|op| !templates.contains_key(op)) {
            return Err(TemplateError::MissingTemplate(op));
        }
        Ok(Self {
            templates,
            answer_clause: answer_clause.split_whitespace().map(ToString::to_string).collect(),
        })
    }

    pub fn get(&self, op: AtomicOp) -> &Template {
        &self.templates[&op]
    }

    pub fn templates(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }

    pub fn answer_clause(&self) -> &[String] {
        &self.answer_clause
    }
}

/// Built-in wording, mirrored by the shipped `templates.json`.
pub const DEFAULT_PATTERNS: &[(AtomicOp, &[(Variant, &str)])] = &[
    (AtomicOp::Select, &[(Variant::Default, "[OBJ]")]),
    (AtomicOp::Exist, &[(Variant::Default, "there [CHECK_EXISTENCE] [DEP]")]),
    (AtomicOp::Filter, &[(Variant::Default, "[ATTR] [OBJ]")]),
    (AtomicOp::Query, &[(Variant::Default, "[DEP] [BE] [QUERY_ATTR]")]),
    (AtomicOp::Verify, &[(Variant::Default, "[DEP] [BE] [VERIFY_ATTR]")]),
    (
        AtomicOp::Common,
        &[(Variant::Default, "both [DEP1] and [DEP2] are [FIND_COMMON]")],
    ),
    (
        AtomicOp::Same,
        &[
            (Variant::True, "both [DEP1] and [DEP2] are [ATTR]"),
            (Variant::False, "[DEP1] is [ATTR1] and [DEP2] is [ATTR2]"),
        ],
    ),
    (
        AtomicOp::Different,
        &[
            (Variant::True, "[DEP1] is [ATTR1] and [DEP2] is [ATTR2]"),
            (Variant::False, "both [DEP1] and [DEP2] are [ATTR]"),
        ],
    ),
    (
        AtomicOp::Compare,
        &[(Variant::Default, "[DEP1] is [COMPARE_ATTR] than [DEP2]")],
    ),
    (
        AtomicOp::Relate,
        &[
            (Variant::Subject, "[OBJ] [RELATION] [DEP]"),
            (Variant::Object, "[DEP] [RELATION] [OBJ]"),
        ],
    ),
    (AtomicOp::And, &[(Variant::Default, "[DEP1] [LOGICAL] [DEP2]")]),
    (AtomicOp::Or, &[(Variant::Default, "[DEP1] [LOGICAL] [DEP2]")]),
];

impl Default for TemplateTable {
    fn default() -> Self {
        let templates = DEFAULT_PATTERNS
            .iter()
            .map(|(op, patterns)| Template::new(*op, patterns))
            .collect::<Result<Vec<_>, _>>()
            .expect("built-in templates are valid");
        Self::new(templates, DEFAULT_ANSWER_CLAUSE).expect("built-in table is total")
    }
}
