//! Corpus statistics: how often each operation occurs, which categories get grounded.

use std::collections::BTreeMap;
use std::fmt::Write;

use rex_forge_core::explain::GroundedExplanation;
use rex_forge_core::program::AtomicOp;

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub questions: usize,
    /// Questions containing each operation, in canonical operation order.
    pub operations: Vec<(AtomicOp, usize)>,
    /// Grounded object instances in total.
    pub grounded_objects: usize,
    /// The most frequent grounded categories, most frequent first.
    pub categories: Vec<(String, usize)>,
}

pub fn corpus_stats(explanations: &[GroundedExplanation], top_k: usize) -> StatsReport {
    let mut op_counts: BTreeMap<AtomicOp, usize> = BTreeMap::new();
    let mut cat_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut grounded_objects = 0;
    for e in explanations {
        let mut seen = e.operations.clone();
        seen.sort();
        seen.dedup();
        for op in seen {
            *op_counts.entry(op).or_insert(0) += 1;
        }
        for object in e.grounded_objects.keys() {
            let cat = e.object_categories.get(object).map_or("unknown", String::as_str);
            *cat_counts.entry(cat).or_insert(0) += 1;
            grounded_objects += 1;
        }
    }
    let operations = AtomicOp::ALL
        .iter()
        .map(|op| (*op, op_counts.get(op).copied().unwrap_or(0)))
        .collect();
    let mut categories: Vec<(String, usize)> = cat_counts.into_iter().map(|(c, n)| (c.to_string(), n)).collect();
    categories.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    categories.truncate(top_k);
    StatsReport {
        questions: explanations.len(),
        operations,
        grounded_objects,
        categories,
    }
}

fn percent(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

impl StatsReport {
    /// `section,name,count,percent`. Operation percentages are over questions,
    /// category percentages over grounded object instances.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,count,percent\n");
        for (op, n) in &self.operations {
            let _ = writeln!(out, "operation,{op},{n},{:.4}", percent(*n, self.questions));
        }
        for (cat, n) in &self.categories {
            let _ = writeln!(
                out,
                "category,{},{n},{:.4}",
                csv_field(cat),
                percent(*n, self.grounded_objects)
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
