//! Scene graphs, bounding boxes, model-input regions and IoU alignment.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Minimum IoU an object must reach with its best region to be grounded.
pub const DEFAULT_MIN_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2})")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("object `{object}` has two values for attribute family `{family}`")]
    DuplicateAttribute { object: String, family: AttributeFamily },
    #[error("object `{object}` relates to unknown object `{target}`")]
    DanglingRelation { object: String, target: String },
    #[error("object id `{0}` is not unique")]
    DuplicateObject(String),
    #[error("invalid image size {width}x{height}")]
    InvalidSize { width: f64, height: f64 },
}

/// Corner-form box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, SceneError> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x1 > x2 || y1 > y2 {
            return Err(SceneError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Converts a GQA-style `(x, y, w, h)` box.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, SceneError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Clamps the box into `[0,width]x[0,height]`; the flag reports whether anything moved.
    pub fn clamped(&self, width: f64, height: f64) -> (BBox, bool) {
        let c = BBox {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        };
        (c, c != *self)
    }
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Closed set of attribute families used by the recall metric, plus a catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttributeFamily {
    Color,
    Material,
    Sport,
    Shape,
    Pose,
    Size,
    Activity,
    Relation,
    Other,
}

impl AttributeFamily {
    /// The eight families scored by attribute recall (everything except `Other`).
    pub const SCORED: [AttributeFamily; 8] = [
        AttributeFamily::Color,
        AttributeFamily::Material,
        AttributeFamily::Sport,
        AttributeFamily::Shape,
        AttributeFamily::Pose,
        AttributeFamily::Size,
        AttributeFamily::Activity,
        AttributeFamily::Relation,
    ];

    /// Unknown names map to `Other`.
    pub fn parse(name: &str) -> Self {
        match name.trim().to_ascii_lowercase().as_str() {
            "color" | "colour" => Self::Color,
            "material" => Self::Material,
            "sport" => Self::Sport,
            "shape" => Self::Shape,
            "pose" => Self::Pose,
            "size" => Self::Size,
            "activity" => Self::Activity,
            "relation" => Self::Relation,
            _ => Self::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Color => "color",
            Self::Material => "material",
            Self::Sport => "sport",
            Self::Shape => "shape",
            Self::Pose => "pose",
            Self::Size => "size",
            Self::Activity => "activity",
            Self::Relation => "relation",
            Self::Other => "other",
        }
    }
}

impl fmt::Display for AttributeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attribute {
    pub family: AttributeFamily,
    pub value: String,
}

impl Attribute {
    pub fn new(family: AttributeFamily, value: impl Into<String>) -> Self {
        Self {
            family,
            value: value.into(),
        }
    }
}

/// Outgoing edge: this object stands in `predicate` to `target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Relation {
    pub predicate: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub name: String,
    pub bbox: BBox,
    /// Sorted by `(family, value)`.
    attributes: Vec<Attribute>,
    pub relations: Vec<Relation>,
}

impl SceneObject {
    /// Named families hold at most one value; `Other` may hold several distinct values.
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        bbox: BBox,
        mut attributes: Vec<Attribute>,
        relations: Vec<Relation>,
    ) -> Result<Self, SceneError> {
        let id = id.into();
        attributes.sort();
        for pair in attributes.windows(2) {
            let same_family = pair[0].family == pair[1].family;
            if same_family && (pair[0].family != AttributeFamily::Other || pair[0] == pair[1]) {
                return Err(SceneError::DuplicateAttribute {
                    object: id,
                    family: pair[0].family,
                });
            }
        }
        Ok(Self {
            id,
            name: name.into(),
            bbox,
            attributes,
            relations,
        })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn has_value(&self, value: &str) -> bool {
        self.attributes.iter().any(|a| a.value == value)
    }

    pub fn values_in(&self, family: AttributeFamily) -> impl Iterator<Item = &str> + '_ {
        self.attributes
            .iter()
            .filter(move |a| a.family == family)
            .map(|a| a.value.as_str())
    }

    /// Family of the first attribute carrying `value`, if any.
    pub fn family_of(&self, value: &str) -> Option<AttributeFamily> {
        self.attributes.iter().find(|a| a.value == value).map(|a| a.family)
    }
}

/// A box that was pulled back inside the image bounds at load.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampWarning {
    pub object: String,
    pub original: BBox,
    pub clamped: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    objects: BTreeMap<String, SceneObject>,
}

impl SceneGraph {
    /// Validates relation targets and clamps boxes into the image, reporting each clamp.
    pub fn new(
        image_id: impl Into<String>,
        width: f64,
        height: f64,
        objects: Vec<SceneObject>,
    ) -> Result<(Self, Vec<ClampWarning>), SceneError> {
        if !(width.is_finite() && height.is_finite() && width >= 0.0 && height >= 0.0) {
            return Err(SceneError::InvalidSize { width, height });
        }
        let mut map = BTreeMap::new();
        let mut warnings = Vec::new();
        for mut obj in objects {
            let (clamped, moved) = obj.bbox.clamped(width, height);
            if moved {
                warnings.push(ClampWarning {
                    object: obj.id.clone(),
                    original: obj.bbox,
                    clamped,
                });
                obj.bbox = clamped;
            }
            if map.contains_key(&obj.id) {
                return Err(SceneError::DuplicateObject(obj.id));
            }
            map.insert(obj.id.clone(), obj);
        }
        for obj in map.values() {
            if let Some(rel) = obj.relations.iter().find(|r| !map.contains_key(&r.target)) {
                return Err(SceneError::DanglingRelation {
                    object: obj.id.clone(),
                    target: rel.target.clone(),
                });
            }
        }
        let graph = Self {
            image_id: image_id.into(),
            width,
            height,
            objects: map,
        };
        Ok((graph, warnings))
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.get(id)
    }

    /// Objects in id order.
    pub fn objects(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.values()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// Model-input regions; token `#i` names `regions[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    pub image_id: String,
    pub regions: Vec<BBox>,
}

impl RegionSet {
    pub fn new(image_id: impl Into<String>, regions: Vec<BBox>) -> Self {
        Self {
            image_id: image_id.into(),
            regions,
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&BBox> {
        self.regions.get(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("region set is empty")]
    NoRegions,
    #[error("best region #{best_index} has IoU {best_iou:.4} < {min_iou}")]
    AlignmentBelowThreshold {
        best_index: usize,
        best_iou: f64,
        min_iou: f64,
    },
}

/// Region with maximal IoU against `bbox`; ties go to the lowest index.
pub fn best_region(bbox: &BBox, regions: &RegionSet) -> Option<Alignment> {
    let mut best: Option<Alignment> = None;
    for (index, region) in regions.regions.iter().enumerate() {
        let score = iou(bbox, region);
        if best.is_none_or(|b| score > b.iou) {
            best = Some(Alignment { index, iou: score });
        }
    }
    best
}

pub fn align_object(obj: &SceneObject, regions: &RegionSet, min_iou: f64) -> Result<Alignment, AlignError> {
    let best = best_region(&obj.bbox, regions).ok_or(AlignError::NoRegions)?;
    if best.iou < min_iou {
        return Err(AlignError::AlignmentBelowThreshold {
            best_index: best.index,
            best_iou: best.iou,
            min_iou,
        });
    }
    Ok(best)
}
