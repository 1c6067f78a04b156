//! Joins predictions with references and renders the metric report.

use std::collections::BTreeMap;

use rex_forge_core::explain::GroundedExplanation;
use rex_forge_core::metrics::{evaluate, EvalPair, EvalReport};
use rex_forge_core::scene::RegionSet;
use serde::Serialize;

use crate::error::ForgeError;

pub const GROUNDING_NOTE: &str =
    "grounding is the macro-average over questions whose reference has at least one region token";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JoinCounts {
    /// References without a prediction; scored against an empty prediction.
    pub missing_predictions: usize,
    /// Predictions whose question id has no reference; ignored.
    pub unmatched_predictions: usize,
}

/// Pairs every reference with the prediction of the same question id.
pub fn join(
    predictions: Vec<GroundedExplanation>,
    references: Vec<GroundedExplanation>,
) -> Result<(Vec<EvalPair>, JoinCounts), ForgeError> {
    let mut by_id: BTreeMap<String, GroundedExplanation> = BTreeMap::new();
    for p in predictions {
        by_id.insert(p.question_id.clone(), p);
    }
    let mut counts = JoinCounts::default();
    let mut pairs = Vec::with_capacity(references.len());
    for r in references {
        let p = by_id.remove(&r.question_id).unwrap_or_else(|| {
            counts.missing_predictions += 1;
            GroundedExplanation {
                question_id: r.question_id.clone(),
                image_id: r.image_id.clone(),
                ..Default::default()
            }
        });
        pairs.push(EvalPair::new(p, r)?);
    }
    counts.unmatched_predictions = by_id.len();
    Ok((pairs, counts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallDoc {
    pub hits: usize,
    pub eligible: usize,
    pub leaked: usize,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReportDoc {
    pub note: &'static str,
    pub questions: usize,
    pub missing_predictions: usize,
    pub unmatched_predictions: usize,
    pub accuracy: f64,
    pub grounding: Option<f64>,
    pub grounded_questions: usize,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub attribute_recall: BTreeMap<String, RecallDoc>,
    pub per_type: BTreeMap<String, usize>,
}

impl EvalReportDoc {
    pub fn new(r: &EvalReport, counts: &JoinCounts) -> Self {
        Self {
            note: GROUNDING_NOTE,
            questions: r.questions,
            missing_predictions: counts.missing_predictions,
            unmatched_predictions: counts.unmatched_predictions,
            accuracy: r.accuracy,
            grounding: r.grounding,
            grounded_questions: r.grounded_questions,
            bleu4: r.bleu4,
            rouge_l: r.rouge_l,
            attribute_recall: r
                .recall
                .iter()
                .map(|(f, s)| {
                    let doc = RecallDoc {
                        hits: s.hits,
                        eligible: s.eligible,
                        leaked: s.leaked,
                        recall: s.value(),
                    };
                    (f.as_str().to_string(), doc)
                })
                .collect(),
            per_type: r.per_type.clone(),
        }
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let mut out = String::new();
        out.push_str(&format!("{:<22}{}\n", "questions", self.questions));
        out.push_str(&format!("{:<22}{:.4}\n", "accuracy", self.accuracy));
        out.push_str(&format!("{:<22}{}\n", "grounding", opt(self.grounding)));
        out.push_str(&format!("{:<22}{:.4}\n", "bleu-4", self.bleu4));
        out.push_str(&format!("{:<22}{:.4}\n", "rouge-l", self.rouge_l));
        for (family, r) in &self.attribute_recall {
            out.push_str(&format!(
                "{:<22}{} ({}/{})\n",
                format!("recall/{family}"),
                opt(r.recall),
                r.hits,
                r.eligible
            ));
        }
        out.push_str(&format!("({GROUNDING_NOTE})\n"));
        out
    }
}

pub fn run_eval(
    predictions: Vec<GroundedExplanation>,
    references: Vec<GroundedExplanation>,
    regions: &BTreeMap<String, RegionSet>,
) -> Result<EvalReportDoc, ForgeError> {
    let (pairs, counts) = join(predictions, references)?;
    let report = evaluate(&pairs, regions)?;
    Ok(EvalReportDoc::new(&report, &counts))
}
