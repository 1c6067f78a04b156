//! Seeded random decoder instances for gradient verification.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rex_forge_core::decoder::{check_gradients, softmax, DecoderInstance, DecoderTargets, GradCheckReport, Matrix};

use crate::error::ForgeError;

pub const MAX_REGIONS: usize = 5;
pub const MAX_VOCAB: usize = 12;
pub const MAX_DIM: usize = 8;
pub const MAX_STEPS: usize = 6;

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("sizes agree")
}

/// One instance with N <= 5, K <= 12, D <= 8 and 2..=6 decoding steps.
///
/// Region `n` is named by a random vocabulary slot; a step's gate target is
/// set exactly when its target token names a region.
pub fn random_instance(rng: &mut impl Rng) -> (DecoderInstance, DecoderTargets) {
    let n = rng.random_range(1..=MAX_REGIONS);
    let k = rng.random_range(n + 1..=MAX_VOCAB);
    let d = rng.random_range(1..=MAX_DIM);
    let steps = rng.random_range(2..=MAX_STEPS);

    let mut slots: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        slots.swap(i, rng.random_range(0..=i));
    }
    let mut map = Matrix::zeros(n, k);
    for (region, &slot) in slots.iter().take(n).enumerate() {
        map.row_mut(region)[slot] = 1.0;
    }
    let region_tokens = &slots[..n];
    let word_tokens = &slots[n..];

    let mut tokens = Vec::with_capacity(steps);
    let mut gates = Vec::with_capacity(steps);
    for _ in 0..steps {
        let grounded = rng.random_bool(0.4);
        let pool = if grounded { region_tokens } else { word_tokens };
        tokens.push(pool[rng.random_range(0..pool.len())]);
        gates.push(grounded);
    }
    let answers = rng.random_range(2..=4);
    let answer_logits: Vec<f64> = (0..answers).map(|_| rng.random_range(-1.0..1.0)).collect();

    let inst = DecoderInstance::new(
        uniform_matrix(rng, steps, d),
        uniform_matrix(rng, n, d),
        map,
        uniform_matrix(rng, k, d),
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("generated instance is valid");
    let targets = DecoderTargets {
        tokens,
        gates,
        answer_probs: softmax(&answer_logits),
        answer: rng.random_range(0..answers),
    };
    (inst, targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub regions: usize,
    pub vocab: usize,
    pub dim: usize,
    pub steps: usize,
    pub report: GradCheckReport,
}

pub fn run(seed: u64, count: usize) -> Result<Vec<InstanceResult>, ForgeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (inst, targets) = random_instance(&mut rng);
            let report = check_gradients(&inst, &targets)?;
            Ok(InstanceResult {
                regions: inst.region_count(),
                vocab: inst.vocab_size(),
                dim: inst.gate_weights.len(),
                steps: inst.steps(),
                report,
            })
        })
        .collect()
}

pub fn render(seed: u64, results: &[InstanceResult], tolerance: f64) -> String {
    let mut out = format!("seed {seed}, {} instances, tolerance {tolerance:e}\n", results.len());
    let _ = writeln!(
        out,
        "{:>4} {:>2} {:>3} {:>2} {:>2} {:>12} {:>12} {:>12} {:>12}",
        "#", "N", "K", "D", "L", "loss", "text", "w_g", "w_f"
    );
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4} {:>2} {:>3} {:>2} {:>2} {:>12.6} {:>12.3e} {:>12.3e} {:>12.3e}",
            i,
            r.regions,
            r.vocab,
            r.dim,
            r.steps,
            r.report.loss,
            r.report.text.max_rel,
            r.report.gate_weights.max_rel,
            r.report.output_proj.max_rel
        );
    }
    let worst = max_rel_error(results);
    let verdict = if worst < tolerance { "ok" } else { "FAILED" };
    let _ = writeln!(out, "max relative error {worst:.3e}: {verdict}");
    out
}

pub fn max_rel_error(results: &[InstanceResult]) -> f64 {
    results.iter().map(|r| r.report.max_rel_error()).fold(0.0, f64::max)
}
