//! Shared support for the integration tests: a seeded scene and program
//! generator, a deliberately naive recursive evaluator used as an oracle,
//! and writers for on-disk corpora.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

pub const NAMES: [&str; 4] = ["cup", "plate", "table", "dog"];
pub const COLORS: [&str; 3] = ["red", "blue", "green"];
pub const MATERIALS: [&str; 2] = ["wood", "metal"];
/// `giant` is deliberately missing from the size order.
pub const SIZES: [&str; 6] = ["tiny", "small", "medium", "large", "huge", "giant"];
pub const OTHERS: [&str; 3] = ["dirty", "clean", "wet"];
pub const PREDICATES: [&str; 2] = ["on", "near"];
pub const QUERY_FAMILIES: [&str; 3] = ["color", "material", "size"];
pub const COMPARATIVES: [&str; 3] = ["larger", "bigger", "smaller"];

const SIZE_ORDER: [&str; 5] = ["tiny", "small", "medium", "large", "huge"];
const FAMILY_ORDER: [&str; 9] = [
    "color", "material", "sport", "shape", "pose", "size", "activity", "relation", "other",
];

pub fn plate_table_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/plate_table")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rex-forge")
}

#[derive(Debug, Clone)]
pub struct TObj {
    pub id: String,
    pub name: String,
    pub bbox: [f64; 4],
    /// `(family, value)` pairs.
    pub attrs: Vec<(String, String)>,
    /// `(predicate, target id)` pairs.
    pub rels: Vec<(String, String)>,
}

impl TObj {
    fn has(&self, value: &str) -> bool {
        self.attrs.iter().any(|(_, v)| v == value)
    }

    fn values(&self, family: &str) -> Vec<String> {
        let mut v: Vec<String> = self
            .attrs
            .iter()
            .filter(|(f, _)| f == family)
            .map(|(_, v)| v.clone())
            .collect();
        v.sort();
        v
    }
}

#[derive(Debug, Clone)]
pub struct TScene {
    pub image_id: String,
    pub objects: Vec<TObj>,
}

impl TScene {
    fn get(&self, id: &str) -> &TObj {
        self.objects.iter().find(|o| o.id == id).expect("object exists")
    }

    pub fn to_json(&self) -> Value {
        let objects: serde_json::Map<String, Value> = self
            .objects
            .iter()
            .map(|o| {
                let attrs: Vec<Value> = o.attrs.iter().map(|(f, v)| json!({"family": f, "value": v})).collect();
                let rels: Vec<Value> = o
                    .rels
                    .iter()
                    .map(|(p, t)| json!({"predicate": p, "target": t}))
                    .collect();
                (
                    o.id.clone(),
                    json!({"name": o.name, "box": o.bbox, "attributes": attrs, "relations": rels}),
                )
            })
            .collect();
        json!({"image_id": self.image_id, "width": 100.0, "height": 100.0, "objects": objects})
    }

    /// One region per object, each corner nudged by at most one pixel, plus up to two distractors.
    pub fn regions_json(&self, rng: &mut impl Rng) -> Value {
        let mut regions: Vec<[f64; 4]> = self
            .objects
            .iter()
            .map(|o| {
                let mut b = o.bbox;
                for c in &mut b {
                    *c += rng.random_range(-1..=1) as f64;
                }
                b[2] = b[2].max(b[0] + 1.0);
                b[3] = b[3].max(b[1] + 1.0);
                b
            })
            .collect();
        for _ in 0..rng.random_range(0..=2) {
            regions.push(random_box(rng));
        }
        json!({"image_id": self.image_id, "regions": regions})
    }
}

fn random_box(rng: &mut impl Rng) -> [f64; 4] {
    let x = rng.random_range(0..75) as f64;
    let y = rng.random_range(0..75) as f64;
    let w = rng.random_range(10..=25) as f64;
    let h = rng.random_range(10..=25) as f64;
    [x, y, x + w, y + h]
}

pub fn random_scene(rng: &mut impl Rng, image_id: &str) -> TScene {
    let n = rng.random_range(1..=8);
    let ids: Vec<String> = (0..n).map(|i| format!("o{i}")).collect();
    let objects = ids
        .iter()
        .map(|id| {
            let mut attrs = Vec::new();
            if rng.random_bool(0.7) {
                attrs.push(("color".to_string(), COLORS.choose(rng).unwrap().to_string()));
            }
            if rng.random_bool(0.5) {
                attrs.push(("material".to_string(), MATERIALS.choose(rng).unwrap().to_string()));
            }
            if rng.random_bool(0.7) {
                attrs.push(("size".to_string(), SIZES.choose(rng).unwrap().to_string()));
            }
            let k = rng.random_range(0..=2);
            for v in OTHERS.choose_multiple(rng, k) {
                attrs.push(("other".to_string(), v.to_string()));
            }
            let mut rels = Vec::new();
            if n > 1 {
                for _ in 0..rng.random_range(0..=2) {
                    let target = ids.iter().filter(|t| *t != id).collect::<Vec<_>>();
                    rels.push((
                        PREDICATES.choose(rng).unwrap().to_string(),
                        target.choose(rng).unwrap().to_string(),
                    ));
                }
            }
            TObj {
                id: id.clone(),
                name: NAMES.choose(rng).unwrap().to_string(),
                bbox: random_box(rng),
                attrs,
                rels,
            }
        })
        .collect();
    TScene {
        image_id: image_id.to_string(),
        objects,
    }
}

#[derive(Debug, Clone)]
pub enum TNode {
    Select(String),
    Filter(String, Box<TNode>),
    Relate {
        predicate: String,
        subject: bool,
        category: String,
        dep: Box<TNode>,
    },
    Exist(Box<TNode>),
    Verify(String, Box<TNode>),
    Query(String, Box<TNode>),
    Common(Box<TNode>, Box<TNode>),
    Same(Option<String>, Box<TNode>, Box<TNode>),
    Different(Option<String>, Box<TNode>, Box<TNode>),
    Compare {
        word: String,
        select: bool,
        a: Box<TNode>,
        b: Box<TNode>,
    },
    And(Box<TNode>, Box<TNode>),
    Or(Box<TNode>, Box<TNode>),
}

impl TNode {
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    fn children(&self) -> Vec<&TNode> {
        match self {
            TNode::Select(_) => vec![],
            TNode::Filter(_, d) | TNode::Exist(d) | TNode::Verify(_, d) | TNode::Query(_, d) => vec![d],
            TNode::Relate { dep, .. } => vec![dep],
            TNode::Common(a, b)
            | TNode::Same(_, a, b)
            | TNode::Different(_, a, b)
            | TNode::And(a, b)
            | TNode::Or(a, b)
            | TNode::Compare { a, b, .. } => vec![a, b],
        }
    }

    pub fn reasoning_type(&self) -> &'static str {
        match self {
            TNode::Select(_) | TNode::Filter(..) | TNode::Relate { .. } => "objectSelect",
            TNode::Exist(_) => "exist",
            TNode::Verify(..) => "verifyAttr",
            TNode::Query(..) => "queryAttr",
            TNode::Common(..) => "common",
            TNode::Same(..) => "same",
            TNode::Different(..) => "different",
            TNode::Compare { select: true, .. } => "compareChoose",
            TNode::Compare { select: false, .. } => "compareVerify",
            TNode::And(..) => "logicalAnd",
            TNode::Or(..) => "logicalOr",
        }
    }

    /// Program document with node ids `n0..` assigned in post-order.
    pub fn to_program_json(&self, question_id: &str, image_id: &str) -> Value {
        let mut nodes = serde_json::Map::new();
        let root = emit(self, &mut nodes);
        json!({
            "question_id": question_id,
            "question": format!("question {question_id}"),
            "reasoning_type": self.reasoning_type(),
            "image_id": image_id,
            "root": root,
            "nodes": nodes,
        })
    }
}

fn emit(node: &TNode, nodes: &mut serde_json::Map<String, Value>) -> String {
    let deps: Vec<String> = node.children().into_iter().map(|c| emit(c, nodes)).collect();
    let id = format!("n{}", nodes.len());
    let doc = match node {
        TNode::Select(c) => json!({"op": "select", "category": c}),
        TNode::Filter(v, _) => json!({"op": "filter", "attribute": v}),
        TNode::Relate {
            predicate,
            subject,
            category,
            ..
        } => json!({
            "op": "relate",
            "category": category,
            "relation": {"predicate": predicate, "direction": if *subject { "subject" } else { "object" }},
        }),
        TNode::Exist(_) => json!({"op": "exist"}),
        TNode::Verify(v, _) => json!({"op": "verify", "attribute": v}),
        TNode::Query(f, _) => json!({"op": "query", "attribute": f}),
        TNode::Common(..) => json!({"op": "common"}),
        TNode::Same(f, ..) => json!({"op": "same", "attribute": f}),
        TNode::Different(f, ..) => json!({"op": "different", "attribute": f}),
        TNode::Compare { word, select, .. } => json!({
            "op": "compare",
            "attribute": "size",
            "comparator": {"word": word, "mode": if *select { "select" } else { "boolean" }},
        }),
        TNode::And(..) => json!({"op": "and"}),
        TNode::Or(..) => json!({"op": "or"}),
    };
    let mut doc = doc;
    let obj = doc.as_object_mut().unwrap();
    obj.retain(|_, v| !v.is_null());
    obj.insert("deps".into(), json!(deps));
    nodes.insert(id.clone(), doc);
    id
}

fn any_value(rng: &mut impl Rng) -> String {
    let pool: Vec<&str> = COLORS
        .iter()
        .chain(&MATERIALS)
        .chain(&SIZES)
        .chain(&OTHERS)
        .copied()
        .collect();
    pool.choose(rng).unwrap().to_string()
}

fn boxed(n: TNode) -> Box<TNode> {
    Box::new(n)
}

fn split(rng: &mut impl Rng, budget: usize, min_left: usize, min_right: usize) -> (usize, usize) {
    let rest = budget - 1;
    let left = rng.random_range(min_left..=rest - min_right);
    (left, rest - left)
}

fn gen_objects(rng: &mut impl Rng, budget: usize) -> TNode {
    if budget <= 1 || rng.random_bool(0.45) {
        return TNode::Select(NAMES.choose(rng).unwrap().to_string());
    }
    let dep = boxed(gen_objects(rng, budget - 1));
    if rng.random_bool(0.5) {
        TNode::Filter(any_value(rng), dep)
    } else {
        TNode::Relate {
            predicate: PREDICATES.choose(rng).unwrap().to_string(),
            subject: rng.random_bool(0.5),
            category: NAMES.choose(rng).unwrap().to_string(),
            dep,
        }
    }
}

fn same_family(rng: &mut impl Rng) -> Option<String> {
    if rng.random_bool(0.3) {
        None
    } else {
        Some(QUERY_FAMILIES.choose(rng).unwrap().to_string())
    }
}

fn gen_boolean(rng: &mut impl Rng, budget: usize) -> TNode {
    let mut choices = vec![0, 1];
    if budget >= 3 {
        choices.extend([2, 3, 4]);
    }
    if budget >= 5 {
        choices.extend([5, 6]);
    }
    match *choices.choose(rng).unwrap() {
        0 => TNode::Exist(boxed(gen_objects(rng, budget - 1))),
        1 => TNode::Verify(any_value(rng), boxed(gen_objects(rng, budget - 1))),
        k @ 2..=4 => {
            let (l, r) = split(rng, budget, 1, 1);
            let (a, b) = (boxed(gen_objects(rng, l)), boxed(gen_objects(rng, r)));
            match k {
                2 => TNode::Same(same_family(rng), a, b),
                3 => TNode::Different(same_family(rng), a, b),
                _ => TNode::Compare {
                    word: COMPARATIVES.choose(rng).unwrap().to_string(),
                    select: false,
                    a,
                    b,
                },
            }
        }
        k => {
            let (l, r) = split(rng, budget, 2, 2);
            let (a, b) = (boxed(gen_boolean(rng, l)), boxed(gen_boolean(rng, r)));
            if k == 5 {
                TNode::And(a, b)
            } else {
                TNode::Or(a, b)
            }
        }
    }
}

fn gen_value(rng: &mut impl Rng, budget: usize) -> TNode {
    let pick = if budget >= 3 { rng.random_range(0..3) } else { 0 };
    if pick == 0 {
        return TNode::Query(
            QUERY_FAMILIES.choose(rng).unwrap().to_string(),
            boxed(gen_objects(rng, budget - 1)),
        );
    }
    let (l, r) = split(rng, budget, 1, 1);
    let (a, b) = (boxed(gen_objects(rng, l)), boxed(gen_objects(rng, r)));
    if pick == 1 {
        TNode::Common(a, b)
    } else {
        TNode::Compare {
            word: COMPARATIVES.choose(rng).unwrap().to_string(),
            select: true,
            a,
            b,
        }
    }
}

/// A well-typed program tree of at most `max_nodes` nodes (at least 2).
pub fn random_program(rng: &mut impl Rng, max_nodes: usize) -> TNode {
    let budget = rng.random_range(2..=max_nodes);
    match rng.random_range(0..20) {
        0..=9 => gen_boolean(rng, budget),
        10..=16 => gen_value(rng, budget),
        _ => gen_objects(rng, budget),
    }
}

// ---- naive oracle ----

#[derive(Debug, Clone, PartialEq)]
enum NVal {
    Objs(BTreeSet<String>),
    Bool(bool),
    Value(String),
    List(Vec<(String, String)>),
}

fn objs(v: NVal) -> BTreeSet<String> {
    match v {
        NVal::Objs(s) => s,
        other => panic!("generator produced an ill-typed program: {other:?}"),
    }
}

fn boolean(v: NVal) -> bool {
    match v {
        NVal::Bool(b) => b,
        other => panic!("generator produced an ill-typed program: {other:?}"),
    }
}

fn family_rank(f: &str) -> usize {
    FAMILY_ORDER
        .iter()
        .position(|x| *x == f)
        .unwrap_or(FAMILY_ORDER.len() - 1)
}

fn one<'s>(scene: &'s TScene, ids: &BTreeSet<String>) -> Result<&'s TObj, &'static str> {
    if ids.len() == 1 {
        Ok(scene.get(ids.iter().next().unwrap()))
    } else {
        Err("NonSingletonSelection")
    }
}

fn nonempty(ids: &BTreeSet<String>) -> Result<(), &'static str> {
    if ids.is_empty() {
        Err("EmptySelection")
    } else {
        Ok(())
    }
}

fn members<'s>(scene: &'s TScene, a: &BTreeSet<String>, b: &BTreeSet<String>) -> Vec<&'s TObj> {
    a.iter().chain(b.iter()).map(|id| scene.get(id)).collect()
}

fn shared_pairs(scene: &TScene, a: &BTreeSet<String>, b: &BTreeSet<String>) -> Vec<(String, String)> {
    let all = members(scene, a, b);
    let mut out: Vec<(String, String)> = all[0]
        .attrs
        .iter()
        .filter(|p| all.iter().all(|o| o.attrs.contains(p)))
        .cloned()
        .collect();
    out.sort_by(|x, y| family_rank(&x.0).cmp(&family_rank(&y.0)).then_with(|| x.1.cmp(&y.1)));
    out.dedup();
    out
}

fn same(
    scene: &TScene,
    family: &Option<String>,
    a: &BTreeSet<String>,
    b: &BTreeSet<String>,
) -> Result<bool, &'static str> {
    nonempty(a)?;
    nonempty(b)?;
    match family {
        None => Ok(!shared_pairs(scene, a, b).is_empty()),
        Some(f) => {
            let mut common: Option<BTreeSet<String>> = None;
            for o in members(scene, a, b) {
                let vals: BTreeSet<String> = o.values(f).into_iter().collect();
                if vals.is_empty() {
                    return Err("MissingAttribute");
                }
                common = Some(match common {
                    None => vals,
                    Some(c) => c.intersection(&vals).cloned().collect(),
                });
            }
            Ok(!common.unwrap().is_empty())
        }
    }
}

fn size_rank(o: &TObj) -> Result<usize, &'static str> {
    let vals = o.values("size");
    if vals.is_empty() {
        return Err("MissingAttribute");
    }
    vals.iter()
        .find_map(|v| SIZE_ORDER.iter().position(|s| s == v))
        .ok_or("UnorderedValue")
}

fn naive(scene: &TScene, node: &TNode) -> Result<NVal, &'static str> {
    Ok(match node {
        TNode::Select(c) => NVal::Objs(
            scene
                .objects
                .iter()
                .filter(|o| &o.name == c)
                .map(|o| o.id.clone())
                .collect(),
        ),
        TNode::Filter(v, d) => {
            let ids = objs(naive(scene, d)?);
            NVal::Objs(ids.into_iter().filter(|id| scene.get(id).has(v)).collect())
        }
        TNode::Relate {
            predicate,
            subject,
            category,
            dep,
        } => {
            let anchors = objs(naive(scene, dep)?);
            let mut out = BTreeSet::new();
            for cand in scene.objects.iter().filter(|o| &o.name == category) {
                let linked = if *subject {
                    cand.rels.iter().any(|(p, t)| p == predicate && anchors.contains(t))
                } else {
                    anchors
                        .iter()
                        .any(|a| scene.get(a).rels.iter().any(|(p, t)| p == predicate && *t == cand.id))
                };
                if linked {
                    out.insert(cand.id.clone());
                }
            }
            NVal::Objs(out)
        }
        TNode::Exist(d) => NVal::Bool(!objs(naive(scene, d)?).is_empty()),
        TNode::Verify(v, d) => {
            let ids = objs(naive(scene, d)?);
            nonempty(&ids)?;
            NVal::Bool(ids.iter().all(|id| scene.get(id).has(v)))
        }
        TNode::Query(f, d) => {
            let ids = objs(naive(scene, d)?);
            let o = one(scene, &ids)?;
            NVal::Value(o.values(f).into_iter().next().ok_or("MissingAttribute")?)
        }
        TNode::Common(a, b) => {
            let (a, b) = (objs(naive(scene, a)?), objs(naive(scene, b)?));
            nonempty(&a)?;
            nonempty(&b)?;
            NVal::List(shared_pairs(scene, &a, &b))
        }
        TNode::Same(f, a, b) => {
            let (a, b) = (objs(naive(scene, a)?), objs(naive(scene, b)?));
            NVal::Bool(same(scene, f, &a, &b)?)
        }
        TNode::Different(f, a, b) => {
            let (a, b) = (objs(naive(scene, a)?), objs(naive(scene, b)?));
            NVal::Bool(!same(scene, f, &a, &b)?)
        }
        TNode::Compare { word, select, a, b } => {
            let (a, b) = (objs(naive(scene, a)?), objs(naive(scene, b)?));
            let left = one(scene, &a)?;
            let right = one(scene, &b)?;
            let (l, r) = (size_rank(left)?, size_rank(right)?);
            let holds = if word == "smaller" { l < r } else { l > r };
            if !*select {
                NVal::Bool(holds)
            } else if l == r {
                NVal::Value("neither".into())
            } else if holds {
                NVal::Value(left.name.clone())
            } else {
                NVal::Value(right.name.clone())
            }
        }
        TNode::And(a, b) => {
            let x = boolean(naive(scene, a)?);
            let y = boolean(naive(scene, b)?);
            NVal::Bool(x && y)
        }
        TNode::Or(a, b) => {
            let x = boolean(naive(scene, a)?);
            let y = boolean(naive(scene, b)?);
            NVal::Bool(x || y)
        }
    })
}

fn and_list(items: Vec<String>) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.join(" and ")
    }
}

/// Answer string, or the error class of the first failing node.
pub fn naive_answer(scene: &TScene, program: &TNode) -> Result<String, &'static str> {
    Ok(match naive(scene, program)? {
        NVal::Bool(b) => if b { "yes" } else { "no" }.into(),
        NVal::Value(v) => v,
        NVal::List(pairs) => and_list(pairs.into_iter().map(|(_, v)| v).collect()),
        NVal::Objs(ids) => {
            let names: BTreeSet<String> = ids.iter().map(|id| scene.get(id).name.clone()).collect();
            and_list(names.into_iter().collect())
        }
    })
}

// ---- corpora on disk ----

pub struct Corpus {
    pub scenes: PathBuf,
    pub regions: PathBuf,
    pub programs: PathBuf,
    pub questions: usize,
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string(v).unwrap()).unwrap();
}

/// `images` scenes with `per_image` random programs each, in `dir`.
pub fn write_corpus(dir: &Path, rng: &mut impl Rng, images: usize, per_image: usize) -> Corpus {
    let scenes = dir.join("scenes");
    let regions = dir.join("regions");
    fs::create_dir_all(&scenes).unwrap();
    fs::create_dir_all(&regions).unwrap();
    let mut lines = String::new();
    for i in 0..images {
        let image_id = format!("img{i:05}");
        let scene = random_scene(rng, &image_id);
        write_json(&scenes.join(format!("{image_id}.json")), &scene.to_json());
        write_json(&regions.join(format!("{image_id}.json")), &scene.regions_json(rng));
        for q in 0..per_image {
            let program = random_program(rng, 6);
            let qid = format!("q{i:05}-{q:02}");
            lines.push_str(&serde_json::to_string(&program.to_program_json(&qid, &image_id)).unwrap());
            lines.push('\n');
        }
    }
    let programs = dir.join("programs.jsonl");
    fs::write(&programs, lines).unwrap();
    Corpus {
        scenes,
        regions,
        programs,
        questions: images * per_image,
    }
}
