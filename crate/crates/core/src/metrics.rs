//! Scoring predicted explanations against references.
//!
//! Grounding IoU compares the union of boxes named by predicted `#i` tokens
//! with the union named by the reference, measured exactly on a
//! coordinate-compressed grid and macro-averaged over questions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::explain::GroundedExplanation;
use crate::scene::{AttributeFamily, BBox, RegionSet};

/// Stand-in for a zero clipped n-gram count.
pub const BLEU_SMOOTHING: f64 = 1e-9;
pub const BLEU_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("prediction {predicted:?} paired with reference {reference:?}")]
    QuestionMismatch { predicted: String, reference: String },
    #[error("question {question_id}: region #{index} out of range ({regions} regions)")]
    RegionIndexOutOfRange {
        question_id: String,
        index: usize,
        regions: usize,
    },
    #[error("no region set for image {0:?}")]
    MissingRegions(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub predicted: GroundedExplanation,
    pub reference: GroundedExplanation,
}

impl EvalPair {
    pub fn new(predicted: GroundedExplanation, reference: GroundedExplanation) -> Result<Self, MetricsError> {
        if predicted.question_id != reference.question_id {
            return Err(MetricsError::QuestionMismatch {
                predicted: predicted.question_id,
                reference: reference.question_id,
            });
        }
        Ok(Self { predicted, reference })
    }

    pub fn question_id(&self) -> &str {
        &self.reference.question_id
    }
}

fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Sum in a fixed order so the mean does not depend on pair order.
fn order_free_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Some(values.into_iter().sum::<f64>() / n)
}

pub fn answer_accuracy(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    let hits = pairs
        .iter()
        .filter(|p| normalize_answer(&p.predicted.answer) == normalize_answer(&p.reference.answer))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Exact area of a union of rectangles.
pub fn union_area(boxes: &[BBox]) -> f64 {
    let grid = Grid::new(boxes.iter());
    grid.area_where(|cx, cy| boxes.iter().any(|b| covers(b, cx, cy)))
}

/// Exact IoU between two unions of rectangles.
pub fn union_iou(a: &[BBox], b: &[BBox]) -> f64 {
    let grid = Grid::new(a.iter().chain(b));
    let in_a = |cx, cy| a.iter().any(|r| covers(r, cx, cy));
    let in_b = |cx, cy| b.iter().any(|r| covers(r, cx, cy));
    let area_a = grid.area_where(in_a);
    let area_b = grid.area_where(in_b);
    let inter = grid.area_where(|cx, cy| in_a(cx, cy) && in_b(cx, cy));
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn covers(b: &BBox, cx: f64, cy: f64) -> bool {
    b.x1 <= cx && cx <= b.x2 && b.y1 <= cy && cy <= b.y2
}

/// Elementary cells between consecutive distinct box edges.
struct Grid {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Grid {
    fn new<'a>(boxes: impl Iterator<Item = &'a BBox>) -> Self {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for b in boxes {
            xs.extend([b.x1, b.x2]);
            ys.extend([b.y1, b.y2]);
        }
        for v in [&mut xs, &mut ys] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        Self { xs, ys }
    }

    /// Total area of cells whose midpoint satisfies `inside`.
    fn area_where(&self, inside: impl Fn(f64, f64) -> bool) -> f64 {
        let mut area = 0.0;
        for xw in self.xs.windows(2) {
            let cx = (xw[0] + xw[1]) / 2.0;
            for yw in self.ys.windows(2) {
                let cy = (yw[0] + yw[1]) / 2.0;
                if inside(cx, cy) {
                    area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
                }
            }
        }
        area
    }
}

fn boxes_for(exp: &GroundedExplanation, question_id: &str, regions: &RegionSet) -> Result<Vec<BBox>, MetricsError> {
    exp.region_indices()
        .into_iter()
        .map(|index| {
            regions
                .regions
                .get(index)
                .copied()
                .ok_or_else(|| MetricsError::RegionIndexOutOfRange {
                    question_id: question_id.to_string(),
                    index,
                    regions: regions.regions.len(),
                })
        })
        .collect()
}

/// Grounding IoU of one pair; `None` when the reference grounds nothing.
pub fn pair_grounding(pair: &EvalPair, regions: &RegionSet) -> Result<Option<f64>, MetricsError> {
    let qid = pair.question_id();
    let reference = boxes_for(&pair.reference, qid, regions)?;
    let predicted = boxes_for(&pair.predicted, qid, regions)?;
    if reference.is_empty() {
        return Ok(None);
    }
    if pair.predicted.region_indices() == pair.reference.region_indices() {
        return Ok(Some(1.0));
    }
    Ok(Some(union_iou(&predicted, &reference)))
}

/// Mean per-question grounding IoU over questions whose reference grounds
/// something. `None` if no question qualifies.
pub fn grounding_score(pairs: &[EvalPair], regions: &BTreeMap<String, RegionSet>) -> Result<Option<f64>, MetricsError> {
    let mut scores = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let image = &pair.reference.image_id;
        let set = regions
            .get(image)
            .ok_or_else(|| MetricsError::MissingRegions(image.clone()))?;
        if let Some(s) = pair_grounding(pair, set)? {
            scores.push(s);
        }
    }
    Ok(order_free_mean(scores))
}

/// Lowercased word tokens with surrounding punctuation removed.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '#')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn contains_span(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecallStat {
    pub hits: usize,
    pub eligible: usize,
    /// Reference values skipped because the question already states them.
    pub leaked: usize,
}

impl RecallStat {
    pub fn value(&self) -> Option<f64> {
        (self.eligible > 0).then(|| self.hits as f64 / self.eligible as f64)
    }
}

/// Recall of reference attribute values of `family` in predicted text.
///
/// Each distinct reference value is one sample; values that occur in the
/// question are left out of the denominator.
pub fn attribute_recall(pairs: &[EvalPair], family: AttributeFamily) -> RecallStat {
    let mut stat = RecallStat::default();
    for pair in pairs {
        let question = word_tokens(&pair.reference.question);
        let predicted = word_tokens(&pair.predicted.tokens.join(" "));
        let values: BTreeSet<&str> = pair
            .reference
            .attributes
            .iter()
            .filter(|a| a.family == family)
            .map(|a| a.value.as_str())
            .collect();
        for value in values {
            let value = word_tokens(value);
            if value.is_empty() {
                continue;
            }
            if contains_span(&question, &value) {
                stat.leaked += 1;
                continue;
            }
            stat.eligible += 1;
            if contains_span(&predicted, &value) {
                stat.hits += 1;
            }
        }
    }
    stat
}

fn lower(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Corpus BLEU-4 with brevity penalty and uniform weights.
///
/// A zero clipped count for some order is replaced by [`BLEU_SMOOTHING`].
pub fn bleu4(pairs: &[EvalPair]) -> f64 {
    let mut matched = [0usize; BLEU_ORDER];
    let mut total = [0usize; BLEU_ORDER];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for pair in pairs {
        let cand = lower(&pair.predicted.tokens);
        let refr = lower(&pair.reference.tokens);
        cand_len += cand.len();
        ref_len += refr.len();
        for n in 1..=BLEU_ORDER {
            let ref_counts = ngram_counts(&refr, n);
            for (gram, count) in ngram_counts(&cand, n) {
                matched[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    if cand_len == 0 {
        return 0.0;
    }
    let log_precision: f64 = (0..BLEU_ORDER)
        .map(|i| {
            let m = if matched[i] > 0 {
                matched[i] as f64
            } else {
                BLEU_SMOOTHING
            };
            libm::log(m / total[i].max(1) as f64)
        })
        .sum::<f64>()
        / BLEU_ORDER as f64;
    let brevity = if cand_len >= ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / cand_len as f64)
    };
    brevity * libm::exp(log_precision)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence ROUGE-L F1.
pub fn rouge_l_sentence(candidate: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_len(&lower(candidate), &lower(reference));
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Mean sentence ROUGE-L F1; 0 for an empty set.
pub fn rouge_l(pairs: &[EvalPair]) -> f64 {
    order_free_mean(
        pairs
            .iter()
            .map(|p| rouge_l_sentence(&p.predicted.tokens, &p.reference.tokens))
            .collect(),
    )
    .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub questions: usize,
    pub accuracy: f64,
    /// `None` when no reference grounds anything.
    pub grounding: Option<f64>,
    pub grounded_questions: usize,
    pub recall: BTreeMap<AttributeFamily, RecallStat>,
    pub bleu4: f64,
    pub rouge_l: f64,
    /// Question counts per reference reasoning type.
    pub per_type: BTreeMap<String, usize>,
}

pub fn evaluate(pairs: &[EvalPair], regions: &BTreeMap<String, RegionSet>) -> Result<EvalReport, MetricsError> {
    let accuracy = answer_accuracy(pairs)?;
    let grounding = grounding_score(pairs, regions)?;
    let grounded_questions = pairs.iter().filter(|p| !p.reference.grounding.is_empty()).count();
    let recall = AttributeFamily::SCORED
        .iter()
        .map(|&f| (f, attribute_recall(pairs, f)))
        .collect();
    let mut per_type = BTreeMap::new();
    for p in pairs {
        *per_type.entry(p.reference.reasoning_type.clone()).or_insert(0) += 1;
    }
    Ok(EvalReport {
        questions: pairs.len(),
        accuracy,
        grounding,
        grounded_questions,
        recall,
        bleu4: bleu4(pairs),
        rouge_l: rouge_l(pairs),
        per_type,
    })
}
