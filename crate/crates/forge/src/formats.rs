//! JSON wire formats and their conversions to core types.
//!
//! Every `*Doc` type serializes canonically: maps are ordered, optional
//! fields are omitted when absent, so parse followed by serialize is stable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rex_forge_core::explain::{region_token, GroundedExplanation};
use rex_forge_core::mapping::{
    ExtractRules, Field, MappingEntry, MappingError, OpMappingTable, SourceProgram, SourceStep,
};
use rex_forge_core::program::{
    AtomicOp, ComparatorSpec, CompareMode, Direction, OpNode, ProgramError, ProgramHeader, ReasoningProgram,
    RelationSpec,
};
use rex_forge_core::scene::{
    Attribute, AttributeFamily, BBox, ClampWarning, RegionSet, Relation, SceneGraph, SceneObject,
};
use rex_forge_core::templates::{Template, TemplateTable, Variant, DEFAULT_ANSWER_CLAUSE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ForgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxFormat {
    #[default]
    Xyxy,
    Xywh,
}

impl BoxFormat {
    fn is_default(&self) -> bool {
        *self == BoxFormat::Xyxy
    }

    pub fn to_bbox(self, b: [f64; 4]) -> Result<BBox, ForgeError> {
        let bbox = match self {
            BoxFormat::Xyxy => BBox::new(b[0], b[1], b[2], b[3]),
            BoxFormat::Xywh => BBox::from_xywh(b[0], b[1], b[2], b[3]),
        };
        bbox.map_err(|e| ForgeError::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDoc {
    pub family: String,
    pub value: String,
}

impl From<&Attribute> for AttributeDoc {
    fn from(a: &Attribute) -> Self {
        Self {
            family: a.family.as_str().to_string(),
            value: a.value.clone(),
        }
    }
}

impl From<&AttributeDoc> for Attribute {
    fn from(a: &AttributeDoc) -> Self {
        Attribute::new(AttributeFamily::parse(&a.family), a.value.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDoc {
    pub predicate: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDoc {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default)]
    pub attributes: Vec<AttributeDoc>,
    #[serde(default)]
    pub relations: Vec<RelationDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDoc {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "BoxFormat::is_default")]
    pub box_format: BoxFormat,
    pub objects: BTreeMap<String, ObjectDoc>,
}

impl SceneDoc {
    pub fn into_scene(self) -> Result<(SceneGraph, Vec<ClampWarning>), ForgeError> {
        let mut objects = Vec::with_capacity(self.objects.len());
        for (id, obj) in self.objects {
            let bbox = self.box_format.to_bbox(obj.bbox)?;
            let attributes = obj.attributes.iter().map(Attribute::from).collect();
            let relations = obj
                .relations
                .into_iter()
                .map(|r| Relation {
                    predicate: r.predicate,
                    target: r.target,
                })
                .collect();
            let object = SceneObject::new(id, obj.name, bbox, attributes, relations)
                .map_err(|e| ForgeError::Format(e.to_string()))?;
            objects.push(object);
        }
        SceneGraph::new(self.image_id, self.width, self.height, objects).map_err(|e| ForgeError::Format(e.to_string()))
    }

    pub fn from_scene(g: &SceneGraph) -> Self {
        let objects = g
            .objects()
            .map(|o| {
                let doc = ObjectDoc {
                    name: o.name.clone(),
                    bbox: [o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2],
                    attributes: o.attributes().iter().map(AttributeDoc::from).collect(),
                    relations: o
                        .relations
                        .iter()
                        .map(|r| RelationDoc {
                            predicate: r.predicate.clone(),
                            target: r.target.clone(),
                        })
                        .collect(),
                };
                (o.id.clone(), doc)
            })
            .collect();
        Self {
            image_id: g.image_id.clone(),
            width: g.width,
            height: g.height,
            box_format: BoxFormat::Xyxy,
            objects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDoc {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "BoxFormat::is_default")]
    pub box_format: BoxFormat,
    pub regions: Vec<[f64; 4]>,
}

impl RegionDoc {
    pub fn into_regions(self) -> Result<RegionSet, ForgeError> {
        let regions = self
            .regions
            .into_iter()
            .map(|b| self.box_format.to_bbox(b))
            .collect::<Result<_, _>>()?;
        Ok(RegionSet::new(self.image_id, regions))
    }

    pub fn from_regions(r: &RegionSet) -> Self {
        Self {
            image_id: r.image_id.clone(),
            box_format: BoxFormat::Xyxy,
            regions: r.regions.iter().map(|b| [b.x1, b.y1, b.x2, b.y2]).collect(),
        }
    }
}

// ---- programs ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpecDoc {
    pub predicate: String,
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparatorDoc {
    pub word: String,
    #[serde(default = "default_mode")]
    pub mode: String,
}

fn default_mode() -> String {
    CompareMode::Boolean.as_str().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationSpecDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparator: Option<ComparatorDoc>,
    #[serde(default)]
    pub deps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramDoc {
    pub question_id: String,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub reasoning_type: String,
    #[serde(default)]
    pub image_id: String,
    pub root: String,
    pub nodes: BTreeMap<String, NodeDoc>,
}

impl ProgramDoc {
    fn header(&self) -> ProgramHeader {
        ProgramHeader {
            question_id: self.question_id.clone(),
            question: self.question.clone(),
            reasoning_type: self.reasoning_type.clone(),
            image_id: self.image_id.clone(),
        }
    }

    pub fn into_program(self) -> Result<ReasoningProgram, ProgramError> {
        let header = self.header();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (id, doc) in self.nodes {
            let bad = |msg: String| ProgramError::parse(Some(&id), msg);
            let op: AtomicOp = doc
                .op
                .parse()
                .map_err(|_| bad(format!("unknown operation `{}`", doc.op)))?;
            let mut node = OpNode::new(id.clone(), op);
            node.attribute = doc.attribute;
            node.category = doc.category;
            if let Some(rel) = doc.relation {
                let direction: Direction = rel
                    .direction
                    .parse()
                    .map_err(|_| bad(format!("bad relation direction `{}`", rel.direction)))?;
                node.relation = Some(RelationSpec {
                    predicate: rel.predicate,
                    direction,
                });
            }
            if let Some(cmp) = doc.comparator {
                let mode: CompareMode = cmp
                    .mode
                    .parse()
                    .map_err(|_| bad(format!("bad comparator mode `{}`", cmp.mode)))?;
                node.comparator = Some(ComparatorSpec { word: cmp.word, mode });
            }
            node.deps = doc.deps;
            nodes.push(node);
        }
        ReasoningProgram::new(header, nodes, self.root)
    }

    pub fn from_program(p: &ReasoningProgram) -> Self {
        let nodes = p
            .nodes()
            .map(|n| {
                let doc = NodeDoc {
                    op: n.op.as_str().to_string(),
                    attribute: n.attribute.clone(),
                    category: n.category.clone(),
                    relation: n.relation.as_ref().map(|r| RelationSpecDoc {
                        predicate: r.predicate.clone(),
                        direction: r.direction.as_str().to_string(),
                    }),
                    comparator: n.comparator.as_ref().map(|c| ComparatorDoc {
                        word: c.word.clone(),
                        mode: c.mode.as_str().to_string(),
                    }),
                    deps: n.deps.clone(),
                };
                (n.node_id.clone(), doc)
            })
            .collect();
        Self {
            question_id: p.question_id.clone(),
            question: p.question.clone(),
            reasoning_type: p.reasoning_type.clone(),
            image_id: p.image_id.clone(),
            root: p.root().to_string(),
            nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDoc {
    pub operation: String,
    #[serde(default)]
    pub argument: String,
    #[serde(default)]
    pub dependencies: Vec<usize>,
}

/// A program written in a foreign operation vocabulary, to be mapped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProgramDoc {
    pub question_id: String,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub reasoning_type: String,
    #[serde(default)]
    pub image_id: String,
    pub steps: Vec<StepDoc>,
}

impl SourceProgramDoc {
    pub fn into_source(self) -> SourceProgram {
        SourceProgram {
            header: ProgramHeader {
                question_id: self.question_id,
                question: self.question,
                reasoning_type: self.reasoning_type,
                image_id: self.image_id,
            },
            steps: self
                .steps
                .into_iter()
                .map(|s| SourceStep::new(&s.operation, &s.argument, s.dependencies))
                .collect(),
        }
    }
}

/// Parses one program line in native or `steps` form.
///
/// The question id is returned alongside failures when it could be read.
pub fn parse_program_line(
    line: &str,
    mapping: &OpMappingTable,
) -> Result<ReasoningProgram, (Option<String>, MappingError)> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| (None, ProgramError::parse(None, e.to_string()).into()))?;
    let qid = value.get("question_id").and_then(|q| q.as_str()).map(str::to_string);
    let fail = |e: MappingError| (qid.clone(), e);
    let parse_err = |e: serde_json::Error| fail(ProgramError::parse(None, e.to_string()).into());
    if value.get("steps").is_some() {
        let doc: SourceProgramDoc = serde_json::from_value(value).map_err(parse_err)?;
        rex_forge_core::mapping::map_source_program(&doc.into_source(), mapping).map_err(fail)
    } else {
        let doc: ProgramDoc = serde_json::from_value(value).map_err(parse_err)?;
        doc.into_program().map_err(|e| fail(e.into()))
    }
}

pub fn program_to_json(p: &ReasoningProgram) -> String {
    serde_json::to_string(&ProgramDoc::from_program(p)).expect("program documents serialize")
}

// ---- mapping table ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldDoc {
    /// `"argument"` or `"suffix"`.
    Named(String),
    Part {
        part: usize,
    },
    Literal {
        literal: String,
    },
}

impl FieldDoc {
    fn to_field(&self) -> Result<Field, ForgeError> {
        match self {
            FieldDoc::Named(n) if n == "argument" => Ok(Field::Argument),
            FieldDoc::Named(n) if n == "suffix" => Ok(Field::Suffix),
            FieldDoc::Named(n) => Err(ForgeError::Format(format!("unknown mapping field `{n}`"))),
            FieldDoc::Part { part } => Ok(Field::ArgumentPart(*part)),
            FieldDoc::Literal { literal } => Ok(Field::Literal(literal.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<FieldDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<FieldDoc>,
    #[serde(default)]
    pub relation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparator: Option<FieldDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingDoc {
    pub source: String,
    pub op: String,
    #[serde(default)]
    pub extract: ExtractDoc,
}

fn field(doc: &Option<FieldDoc>) -> Result<Field, ForgeError> {
    doc.as_ref().map_or(Ok(Field::None), FieldDoc::to_field)
}

pub fn mapping_from_docs(docs: &[MappingDoc]) -> Result<OpMappingTable, ForgeError> {
    let mut entries = Vec::with_capacity(docs.len());
    for doc in docs {
        let op: AtomicOp = doc
            .op
            .parse()
            .map_err(|_| ForgeError::Format(format!("mapping `{}`: unknown operation `{}`", doc.source, doc.op)))?;
        let compare_mode = match &doc.extract.compare_mode {
            Some(m) => m.parse().map_err(|e: ProgramError| ForgeError::Format(e.to_string()))?,
            None => CompareMode::default(),
        };
        entries.push(MappingEntry {
            source: doc.source.clone(),
            op,
            extract: ExtractRules {
                attribute: field(&doc.extract.attribute)?,
                category: field(&doc.extract.category)?,
                relation: doc.extract.relation,
                comparator: field(&doc.extract.comparator)?,
                compare_mode,
            },
        });
    }
    OpMappingTable::new(entries).map_err(|e| ForgeError::Format(e.to_string()))
}

/// Built-in table for GQA-style operation names.
pub const DEFAULT_MAPPING_JSON: &str = include_str!("../data/op_mapping.json");

pub fn default_mapping() -> OpMappingTable {
    let docs: Vec<MappingDoc> = serde_json::from_str(DEFAULT_MAPPING_JSON).expect("bundled mapping parses");
    mapping_from_docs(&docs).expect("bundled mapping is valid")
}

// ---- templates ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternDoc {
    Single(String),
    Variants(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatesDoc {
    #[serde(default = "default_clause")]
    pub answer_clause: String,
    pub templates: BTreeMap<String, PatternDoc>,
}

fn default_clause() -> String {
    DEFAULT_ANSWER_CLAUSE.to_string()
}

impl TemplatesDoc {
    pub fn into_table(self) -> Result<TemplateTable, ForgeError> {
        let fmt = |e: rex_forge_core::templates::TemplateError| ForgeError::Format(e.to_string());
        let mut templates = Vec::new();
        for (name, doc) in &self.templates {
            let op: AtomicOp = name
                .parse()
                .map_err(|_| ForgeError::Format(format!("template for unknown operation `{name}`")))?;
            let patterns: Vec<(Variant, &str)> = match doc {
                PatternDoc::Single(p) => vec![(Variant::Default, p.as_str())],
                PatternDoc::Variants(vs) => vs
                    .iter()
                    .map(|(v, p)| Ok((v.parse().map_err(fmt)?, p.as_str())))
                    .collect::<Result<_, ForgeError>>()?,
            };
            templates.push(Template::new(op, &patterns).map_err(fmt)?);
        }
        TemplateTable::new(templates, &self.answer_clause).map_err(fmt)
    }
}

pub const DEFAULT_TEMPLATES_JSON: &str = include_str!("../data/templates.json");

// ---- explanations ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationDoc {
    pub question_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub image_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub question: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub reasoning_type: String,
    pub answer: String,
    pub explanation: String,
    #[serde(default)]
    pub grounding: BTreeMap<usize, usize>,
    #[serde(default)]
    pub grounded_objects: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub object_categories: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<AttributeDoc>,
}

impl ExplanationDoc {
    pub fn from_explanation(e: &GroundedExplanation) -> Self {
        Self {
            question_id: e.question_id.clone(),
            image_id: e.image_id.clone(),
            question: e.question.clone(),
            reasoning_type: e.reasoning_type.clone(),
            answer: e.answer.clone(),
            explanation: e.text(),
            grounding: e.grounding.clone(),
            grounded_objects: e.grounded_objects.clone(),
            object_categories: e.object_categories.clone(),
            operations: e.operations.iter().map(|o| o.as_str().to_string()).collect(),
            attributes: e.attributes.iter().map(AttributeDoc::from).collect(),
        }
    }

    /// Rebuilds the explanation; the grounding map is recovered from the text
    /// and must agree with the stored map when one is given.
    pub fn into_explanation(self) -> Result<GroundedExplanation, ForgeError> {
        let tokens: Vec<String> = self.explanation.split_whitespace().map(str::to_string).collect();
        let grounding: BTreeMap<usize, usize> = tokens
            .iter()
            .enumerate()
            .filter_map(|(pos, t)| region_token(t).map(|i| (pos, i)))
            .collect();
        if !self.grounding.is_empty() && self.grounding != grounding {
            return Err(ForgeError::Format(format!(
                "question {}: grounding map disagrees with explanation text",
                self.question_id
            )));
        }
        let operations = self
            .operations
            .iter()
            .map(|o| {
                o.parse::<AtomicOp>()
                    .map_err(|_| ForgeError::Format(format!("unknown operation `{o}`")))
            })
            .collect::<Result<_, _>>()?;
        Ok(GroundedExplanation {
            question_id: self.question_id,
            image_id: self.image_id,
            question: self.question,
            reasoning_type: self.reasoning_type,
            tokens,
            answer: self.answer,
            grounding,
            grounded_objects: self.grounded_objects,
            object_categories: self.object_categories,
            operations,
            attributes: self.attributes.iter().map(Attribute::from).collect(),
        })
    }
}

pub fn explanation_to_json(e: &GroundedExplanation) -> String {
    serde_json::to_string(&ExplanationDoc::from_explanation(e)).expect("explanation documents serialize")
}

// ---- file helpers ----

pub fn read_text(path: &Path) -> Result<String, ForgeError> {
    fs::read_to_string(path).map_err(|source| ForgeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ForgeError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| ForgeError::Json {
        path: path.to_path_buf(),
        line: None,
        source,
    })
}

/// Non-blank lines of a JSONL file, each with its 1-based line number.
pub fn read_jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>, ForgeError> {
    Ok(read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ForgeError> {
    read_jsonl_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|source| ForgeError::Json {
                path: path.to_path_buf(),
                line: Some(line),
                source,
            })
        })
        .collect()
}

/// `*.json` files of a directory in name order, or the path itself if it is a file.
pub fn json_files(path: &Path) -> Result<Vec<PathBuf>, ForgeError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let io = |source| ForgeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_scenes(path: &Path) -> Result<BTreeMap<String, SceneGraph>, ForgeError> {
    let mut out = BTreeMap::new();
    for file in json_files(path)? {
        let doc: SceneDoc = read_json(&file)?;
        let (scene, warnings) = doc.into_scene().map_err(|e| e.in_file(&file))?;
        for w in warnings {
            log::warn!("{}: clamped box of object {} into the image", file.display(), w.object);
        }
        if out.contains_key(&scene.image_id) {
            log::warn!("{}: duplicate scene for image {}", file.display(), scene.image_id);
        }
        out.insert(scene.image_id.clone(), scene);
    }
    Ok(out)
}

pub fn load_regions(path: &Path) -> Result<BTreeMap<String, RegionSet>, ForgeError> {
    let mut out = BTreeMap::new();
    for file in json_files(path)? {
        let doc: RegionDoc = read_json(&file)?;
        let set = doc.into_regions().map_err(|e| e.in_file(&file))?;
        out.insert(set.image_id.clone(), set);
    }
    Ok(out)
}

pub fn load_templates(path: Option<&Path>) -> Result<TemplateTable, ForgeError> {
    match path {
        Some(p) => read_json::<TemplatesDoc>(p)?.into_table().map_err(|e| e.in_file(p)),
        None => Ok(TemplateTable::default()),
    }
}

pub fn load_mapping(path: Option<&Path>) -> Result<OpMappingTable, ForgeError> {
    match path {
        Some(p) => mapping_from_docs(&read_json::<Vec<MappingDoc>>(p)?).map_err(|e| e.in_file(p)),
        None => Ok(default_mapping()),
    }
}

pub fn load_explanations(path: &Path) -> Result<Vec<GroundedExplanation>, ForgeError> {
    read_jsonl::<ExplanationDoc>(path)?
        .into_iter()
        .map(|d| d.into_explanation().map_err(|e| e.in_file(path)))
        .collect()
}
