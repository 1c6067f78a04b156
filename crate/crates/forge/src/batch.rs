//! Parallel compilation of program lines into explanation JSONL.
//!
//! Questions are independent; a rayon pool of the requested size compiles
//! them and the results are ordered by question id before writing, so the
//! output bytes do not depend on the worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rex_forge_core::explain::{compile_explanation, ExplainConfig, GroundedExplanation, RenderContext};
use rex_forge_core::interp::{execute, ExecConfig};
use rex_forge_core::mapping::OpMappingTable;
use rex_forge_core::scene::{RegionSet, SceneGraph};
use rex_forge_core::templates::TemplateTable;

use crate::formats::{explanation_to_json, parse_program_line};

/// Everything shared by all questions of a run.
pub struct Compiler {
    pub scenes: BTreeMap<String, SceneGraph>,
    pub regions: BTreeMap<String, RegionSet>,
    pub templates: TemplateTable,
    pub mapping: OpMappingTable,
    pub exec: ExecConfig,
    pub explain: ExplainConfig,
}

/// Why one question produced no output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub line: usize,
    pub question_id: Option<String>,
    pub class: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompileSummary {
    pub questions: usize,
    pub compiled: usize,
    /// Skip counts per error class.
    pub skipped: BTreeMap<&'static str, usize>,
}

impl CompileSummary {
    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "questions: {}\ncompiled: {}\nskipped: {}\n",
            self.questions,
            self.compiled,
            self.skipped_total()
        );
        for (class, n) in &self.skipped {
            out.push_str(&format!("  {class}: {n}\n"));
        }
        out
    }
}

pub struct CompileOutput {
    /// Explanations ordered by question id, then input position.
    pub explanations: Vec<GroundedExplanation>,
    pub skips: Vec<Skip>,
    pub summary: CompileSummary,
}

impl CompileOutput {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.explanations {
            out.push_str(&explanation_to_json(e));
            out.push('\n');
        }
        out
    }
}

impl Compiler {
    pub fn compile_one(&self, line: &str) -> Result<GroundedExplanation, (Option<String>, &'static str, String)> {
        let program = parse_program_line(line, &self.mapping).map_err(|(q, e)| (q, e.class(), e.to_string()))?;
        let qid = Some(program.question_id.clone());
        let scene = self.scenes.get(&program.image_id).ok_or_else(|| {
            (
                qid.clone(),
                "MissingScene",
                format!("no scene for image {:?}", program.image_id),
            )
        })?;
        let regions = self.regions.get(&program.image_id).ok_or_else(|| {
            (
                qid.clone(),
                "MissingRegions",
                format!("no regions for image {:?}", program.image_id),
            )
        })?;
        let trace = execute(&program, scene, &self.exec).map_err(|e| (qid.clone(), e.source.class(), e.to_string()))?;
        let ctx = RenderContext {
            templates: &self.templates,
            scene,
            regions,
            exec: &self.exec,
            config: &self.explain,
        };
        compile_explanation(&trace, &program, &ctx).map_err(|e| (qid, e.class(), e.to_string()))
    }

    /// Compiles `(line number, text)` pairs on a pool of `workers` threads.
    pub fn compile_lines(&self, lines: &[(usize, String)], workers: usize) -> CompileOutput {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool builds");
        let results: Vec<_> = pool.install(|| lines.par_iter().map(|(_, text)| self.compile_one(text)).collect());

        let mut explanations = Vec::new();
        let mut skips = Vec::new();
        let mut summary = CompileSummary {
            questions: lines.len(),
            ..CompileSummary::default()
        };
        for ((line, _), result) in lines.iter().zip(results) {
            match result {
                Ok(e) => explanations.push(e),
                Err((question_id, class, message)) => {
                    log::warn!(
                        "line {line} ({}): {class}: {message}",
                        question_id.as_deref().unwrap_or("?")
                    );
                    *summary.skipped.entry(class).or_insert(0) += 1;
                    skips.push(Skip {
                        line: *line,
                        question_id,
                        class,
                        message,
                    });
                }
            }
        }
        // stable sort keeps input order among equal ids
        explanations.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        summary.compiled = explanations.len();
        CompileOutput {
            explanations,
            skips,
            summary,
        }
    }
}
