//! Reference math for a grounding-gated decoding head.
//!
//! For a text state `t` (length D), region features `V` (N x D), a binary
//! routing matrix `M` (N x K) that sends region `n` to its `#n` vocabulary
//! token, an output projection `W_f` (K x D) and gate weights `w_g` (D):
//!
//! ```text
//! s     = softmax(V t)              grounding distribution over regions
//! y_g   = s M                       grounding mass routed into the vocabulary
//! g     = sigmoid(w_g . t)          probability the word is grounded
//! y_f   = softmax(W_f t)            ordinary word distribution
//! y_hat = g y_g + (1 - g) y_f
//! ```
//!
//! The training objective is `L = L_ans + L_exp + L_g` where `L_g` is the
//! class-balanced BCE on the gate. Analytic gradients of `L` with respect to
//! the text states, `w_g` and `W_f` are checked against central differences.

use alloc::vec;
use alloc::vec::Vec;

/// Probability floor applied before every logarithm.
pub const PROB_EPS: f64 = 1e-12;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative gradient error. Below this magnitude a
/// component is judged by its absolute error, since central differences carry
/// round-off near `ulp(L) / h` regardless of the gradient's size.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecoderError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(&'static str),
    #[error("invalid grounding map: {0}")]
    InvalidGroundingMap(&'static str),
    #[error("non-finite loss component")]
    NonFinite,
    #[error("target index {index} out of range for {len} entries")]
    TargetOutOfRange { index: usize, len: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DecoderError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(DecoderError::DimMismatch("ragged matrix rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DecoderError> {
        if data.len() != rows * cols {
            return Err(DecoderError::DimMismatch("matrix data length"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, DecoderError> {
        if v.len() != self.cols {
            return Err(DecoderError::DimMismatch("matrix-vector product"));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn safe_ln(p: f64) -> f64 {
    libm::log(p.clamp(PROB_EPS, 1.0))
}

/// `s[n] = softmax_n(t . V_n)`.
pub fn grounding_distribution(text: &[f64], regions: &Matrix) -> Result<Vec<f64>, DecoderError> {
    if regions.rows() == 0 {
        return Err(DecoderError::DimMismatch("no regions"));
    }
    Ok(softmax(&regions.mul_vec(text)?))
}

/// `y_g = s M`.
pub fn grounding_to_vocab(s: &[f64], map: &Matrix) -> Result<Vec<f64>, DecoderError> {
    if s.len() != map.rows() {
        return Err(DecoderError::DimMismatch("grounding distribution vs map rows"));
    }
    let mut y = vec![0.0; map.cols()];
    for (n, &sn) in s.iter().enumerate() {
        for (k, yk) in y.iter_mut().enumerate() {
            *yk += sn * map.get(n, k);
        }
    }
    Ok(y)
}

/// `sigmoid(w_g . t)`, kept strictly inside (0, 1).
pub fn gate(text: &[f64], gate_weights: &[f64]) -> Result<f64, DecoderError> {
    if text.len() != gate_weights.len() {
        return Err(DecoderError::DimMismatch("gate weights vs text state"));
    }
    Ok(sigmoid(dot(gate_weights, text)).clamp(PROB_EPS, 1.0 - PROB_EPS))
}

/// `softmax(W_f t)`.
pub fn vocab_distribution(text: &[f64], output_proj: &Matrix) -> Result<Vec<f64>, DecoderError> {
    Ok(softmax(&output_proj.mul_vec(text)?))
}

/// `g y_g + (1 - g) y_f`.
pub fn mix(g: f64, y_g: &[f64], y_f: &[f64]) -> Result<Vec<f64>, DecoderError> {
    if y_g.len() != y_f.len() {
        return Err(DecoderError::DimMismatch("mixed distributions"));
    }
    Ok(y_g.iter().zip(y_f).map(|(a, b)| g * a + (1.0 - g) * b).collect())
}

/// Class-balanced BCE: positives weighted by `C-/C`, negatives by `C+/C`.
///
/// With a single class present the opposite weight is zero, so the loss is 0.
pub fn gate_loss(targets: &[bool], predicted: &[f64]) -> Result<f64, DecoderError> {
    if targets.len() != predicted.len() {
        return Err(DecoderError::DimMismatch("gate targets vs predictions"));
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let (pos_w, neg_w) = gate_class_weights(targets);
    let mut loss = 0.0;
    for (&g, &p) in targets.iter().zip(predicted) {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= if g {
            pos_w * libm::log(p)
        } else {
            neg_w * libm::log(1.0 - p)
        };
    }
    Ok(loss)
}

/// `(C-/C, C+/C)`.
fn gate_class_weights(targets: &[bool]) -> (f64, f64) {
    let total = targets.len() as f64;
    let positives = targets.iter().filter(|&&g| g).count() as f64;
    ((total - positives) / total, positives / total)
}

pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64, DecoderError> {
    probs
        .get(target)
        .map(|&p| -safe_ln(p))
        .ok_or(DecoderError::TargetOutOfRange {
            index: target,
            len: probs.len(),
        })
}

/// `L_ans + L_exp + L_g`.
pub fn total_loss(answer: f64, explanation: f64, gate: f64) -> Result<f64, DecoderError> {
    if !(answer.is_finite() && explanation.is_finite() && gate.is_finite()) {
        return Err(DecoderError::NonFinite);
    }
    Ok(answer + explanation + gate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub grounding: Vec<f64>,
    pub gate: f64,
    pub y_g: Vec<f64>,
    pub y_f: Vec<f64>,
    pub y_hat: Vec<f64>,
}

/// Parameters plus one text state per decoded word (rows of `text`).
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderInstance {
    pub text: Matrix,
    pub regions: Matrix,
    pub grounding_map: Matrix,
    pub output_proj: Matrix,
    pub gate_weights: Vec<f64>,
}

impl DecoderInstance {
    pub fn new(
        text: Matrix,
        regions: Matrix,
        grounding_map: Matrix,
        output_proj: Matrix,
        gate_weights: Vec<f64>,
    ) -> Result<Self, DecoderError> {
        let d = gate_weights.len();
        let (n, k) = (regions.rows(), output_proj.rows());
        if d == 0 || text.cols() != d || regions.cols() != d || output_proj.cols() != d {
            return Err(DecoderError::DimMismatch("feature dimension"));
        }
        if text.rows() == 0 {
            return Err(DecoderError::DimMismatch("no decoding steps"));
        }
        if n == 0 || k <= n {
            return Err(DecoderError::DimMismatch("need N >= 1 and K > N"));
        }
        if grounding_map.rows() != n || grounding_map.cols() != k {
            return Err(DecoderError::DimMismatch("grounding map is not N x K"));
        }
        check_grounding_map(&grounding_map)?;
        Ok(Self {
            text,
            regions,
            grounding_map,
            output_proj,
            gate_weights,
        })
    }

    pub fn steps(&self) -> usize {
        self.text.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.output_proj.rows()
    }

    pub fn region_count(&self) -> usize {
        self.regions.rows()
    }

    /// Vocabulary tokens that name a region.
    pub fn region_tokens(&self) -> Vec<usize> {
        (0..self.vocab_size())
            .filter(|&k| (0..self.region_count()).any(|n| self.grounding_map.get(n, k) == 1.0))
            .collect()
    }

    pub fn step(&self, i: usize) -> Result<StepOutput, DecoderError> {
        if i >= self.steps() {
            return Err(DecoderError::TargetOutOfRange {
                index: i,
                len: self.steps(),
            });
        }
        let t = self.text.row(i);
        let grounding = grounding_distribution(t, &self.regions)?;
        let y_g = grounding_to_vocab(&grounding, &self.grounding_map)?;
        let gate = gate(t, &self.gate_weights)?;
        let y_f = vocab_distribution(t, &self.output_proj)?;
        let y_hat = mix(gate, &y_g, &y_f)?;
        Ok(StepOutput {
            grounding,
            gate,
            y_g,
            y_f,
            y_hat,
        })
    }

    pub fn loss(&self, targets: &DecoderTargets) -> Result<LossBreakdown, DecoderError> {
        targets.check(self)?;
        let answer = cross_entropy(&targets.answer_probs, targets.answer)?;
        let mut explanation = 0.0;
        let mut gates = Vec::with_capacity(self.steps());
        for (i, &tok) in targets.tokens.iter().enumerate() {
            let out = self.step(i)?;
            explanation += cross_entropy(&out.y_hat, tok)?;
            gates.push(out.gate);
        }
        let gate = gate_loss(&targets.gates, &gates)?;
        Ok(LossBreakdown {
            answer,
            explanation,
            gate,
            total: total_loss(answer, explanation, gate)?,
        })
    }

    /// Analytic gradient of the total loss.
    pub fn gradients(&self, targets: &DecoderTargets) -> Result<Gradients, DecoderError> {
        targets.check(self)?;
        let (pos_w, neg_w) = gate_class_weights(&targets.gates);
        let mut grads = Gradients {
            text: Matrix::zeros(self.text.rows(), self.text.cols()),
            gate_weights: vec![0.0; self.gate_weights.len()],
            output_proj: Matrix::zeros(self.output_proj.rows(), self.output_proj.cols()),
        };
        for (i, &tok) in targets.tokens.iter().enumerate() {
            let t = self.text.row(i);
            let out = self.step(i)?;
            let g = out.gate;
            let p = out.y_hat[tok];
            // dL_exp / dy_hat[tok]; zero once the probability floor is active
            let d_p = if p > PROB_EPS { -1.0 / p } else { 0.0 };

            // gate pre-activation: explanation term plus balanced BCE term
            let mut d_z = d_p * (out.y_g[tok] - out.y_f[tok]) * g * (1.0 - g);
            d_z += if targets.gates[i] {
                -pos_w * (1.0 - g)
            } else {
                neg_w * g
            };

            // vocabulary logits W_f t
            let d_a: Vec<f64> = (0..self.vocab_size())
                .map(|k| {
                    let delta = if k == tok { 1.0 } else { 0.0 };
                    d_p * (1.0 - g) * out.y_f[tok] * (delta - out.y_f[k])
                })
                .collect();

            // region logits V t
            let d_b: Vec<f64> = (0..self.region_count())
                .map(|n| d_p * g * out.grounding[n] * (self.grounding_map.get(n, tok) - out.y_g[tok]))
                .collect();

            for (w, &x) in grads.gate_weights.iter_mut().zip(t) {
                *w += d_z * x;
            }
            for (k, &da) in d_a.iter().enumerate() {
                for (w, &x) in grads.output_proj.row_mut(k).iter_mut().zip(t) {
                    *w += da * x;
                }
            }
            let d_t = grads.text.row_mut(i);
            for (j, dt) in d_t.iter_mut().enumerate() {
                *dt += d_z * self.gate_weights[j];
                *dt += d_a
                    .iter()
                    .enumerate()
                    .map(|(k, da)| da * self.output_proj.get(k, j))
                    .sum::<f64>();
                *dt += d_b
                    .iter()
                    .enumerate()
                    .map(|(n, db)| db * self.regions.get(n, j))
                    .sum::<f64>();
            }
        }
        Ok(grads)
    }
}

fn check_grounding_map(map: &Matrix) -> Result<(), DecoderError> {
    if map.as_slice().iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(DecoderError::InvalidGroundingMap("entries must be 0 or 1"));
    }
    for n in 0..map.rows() {
        if map.row(n).iter().filter(|&&x| x == 1.0).count() != 1 {
            return Err(DecoderError::InvalidGroundingMap("each region needs exactly one token"));
        }
    }
    for k in 0..map.cols() {
        if (0..map.rows()).filter(|&n| map.get(n, k) == 1.0).count() > 1 {
            return Err(DecoderError::InvalidGroundingMap("a token names at most one region"));
        }
    }
    Ok(())
}

/// Supervision for one explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTargets {
    /// Target vocabulary index per step.
    pub tokens: Vec<usize>,
    /// Whether each step's word is grounded.
    pub gates: Vec<bool>,
    /// Answer distribution from the answering head; constant for these parameters.
    pub answer_probs: Vec<f64>,
    pub answer: usize,
}

impl DecoderTargets {
    fn check(&self, inst: &DecoderInstance) -> Result<(), DecoderError> {
        if self.tokens.len() != inst.steps() || self.gates.len() != inst.steps() {
            return Err(DecoderError::DimMismatch("targets vs decoding steps"));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t >= inst.vocab_size()) {
            return Err(DecoderError::TargetOutOfRange {
                index: bad,
                len: inst.vocab_size(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub answer: f64,
    pub explanation: f64,
    pub gate: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub text: Matrix,
    pub gate_weights: Vec<f64>,
    pub output_proj: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockError {
    pub max_rel: f64,
    /// Relative error without the denominator floor.
    pub max_raw_rel: f64,
    pub max_abs: f64,
    pub checked: usize,
}

impl BlockError {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        let scale = analytic.abs().max(numeric.abs());
        if scale > 0.0 {
            self.max_raw_rel = self.max_raw_rel.max(abs / scale);
        }
        self.max_abs = self.max_abs.max(abs);
        self.max_rel = self.max_rel.max(rel);
        self.checked += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub text: BlockError,
    pub gate_weights: BlockError,
    pub output_proj: BlockError,
    pub loss: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.text
            .max_rel
            .max(self.gate_weights.max_rel)
            .max(self.output_proj.max_rel)
    }

    pub fn max_raw_rel_error(&self) -> f64 {
        self.text
            .max_raw_rel
            .max(self.gate_weights.max_raw_rel)
            .max(self.output_proj.max_raw_rel)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.text
            .max_abs
            .max(self.gate_weights.max_abs)
            .max(self.output_proj.max_abs)
    }
}

#[derive(Clone, Copy)]
enum Param {
    Text,
    GateWeights,
    OutputProj,
}

fn param_slice(inst: &mut DecoderInstance, which: Param) -> &mut [f64] {
    match which {
        Param::Text => inst.text.as_mut_slice(),
        Param::GateWeights => &mut inst.gate_weights,
        Param::OutputProj => inst.output_proj.as_mut_slice(),
    }
}

/// Central-difference gradient of the total loss for one parameter block.
fn numeric_gradient(
    inst: &DecoderInstance,
    targets: &DecoderTargets,
    which: Param,
    h: f64,
) -> Result<Vec<f64>, DecoderError> {
    let mut work = inst.clone();
    let len = param_slice(&mut work, which).len();
    let mut out = Vec::with_capacity(len);
    for idx in 0..len {
        let orig = param_slice(&mut work, which)[idx];
        param_slice(&mut work, which)[idx] = orig + h;
        let plus = work.loss(targets)?.total;
        param_slice(&mut work, which)[idx] = orig - h;
        let minus = work.loss(targets)?.total;
        param_slice(&mut work, which)[idx] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Compares analytic gradients with central differences (step [`FD_STEP`]).
pub fn check_gradients(inst: &DecoderInstance, targets: &DecoderTargets) -> Result<GradCheckReport, DecoderError> {
    let analytic = inst.gradients(targets)?;
    let mut report = GradCheckReport {
        loss: inst.loss(targets)?.total,
        ..Default::default()
    };
    let blocks: [(Param, &[f64], &mut BlockError); 3] = [
        (Param::Text, analytic.text.as_slice(), &mut report.text),
        (Param::GateWeights, &analytic.gate_weights, &mut report.gate_weights),
        (
            Param::OutputProj,
            analytic.output_proj.as_slice(),
            &mut report.output_proj,
        ),
    ];
    for (which, grad, block) in blocks {
        let numeric = numeric_gradient(inst, targets, which, FD_STEP)?;
        for (&a, &n) in grad.iter().zip(&numeric) {
            block.record(a, n);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn uniform_grounding_cases() {
        let v = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let s = grounding_distribution(&[0.3, -0.7], &v).unwrap();
        assert!(s.iter().all(|&x| close(x, 1.0 / 3.0, 1e-15)));
        let v = Matrix::from_rows(&[vec![0.0, 5.0], vec![0.0, -1.0]]).unwrap();
        let s = grounding_distribution(&[2.0, 0.0], &v).unwrap();
        assert!(s.iter().all(|&x| close(x, 0.5, 1e-15)));
        assert!(grounding_distribution(&[1.0], &v).is_err());
    }

    #[test]
    fn softmax_of_one_two_three() {
        // logits (1,2,3) realized as t=(1) against V=[[1],[2],[3]]
        let v = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let s = grounding_distribution(&[1.0], &v).unwrap();
        for (got, want) in s.iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!(close(*got, want, 1e-5), "{got} vs {want}");
        }
    }

    #[test]
    fn routing_examples() {
        let mut m = Matrix::zeros(2, 6);
        m.row_mut(0)[5] = 1.0;
        m.row_mut(1)[4] = 1.0;
        assert_eq!(
            grounding_to_vocab(&[1.0, 0.0], &m).unwrap(),
            vec![0., 0., 0., 0., 0., 1.]
        );

        let mut m = Matrix::zeros(4, 7);
        for n in 0..4 {
            m.row_mut(n)[n + 3] = 1.0;
        }
        let y = grounding_to_vocab(&[0.25; 4], &m).unwrap();
        assert_eq!(y, vec![0., 0., 0., 0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(gate(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.5);
        let sat = gate(&[f64::MAX, 0.0], &[1.0, 0.0]).unwrap();
        assert!(sat < 1.0 && !sat.is_nan());
        let low = gate(&[-1e308, 0.0], &[1.0, 0.0]).unwrap();
        assert!(low > 0.0);
        let g = gate(&[libm::log(3.0)], &[1.0]).unwrap();
        assert!(close(g, 0.75, 1e-15));
    }

    #[test]
    fn mix_endpoints() {
        let yg = [0.2, 0.8, 0.0];
        let yf = [0.5, 0.25, 0.25];
        assert_eq!(mix(1.0, &yg, &yf).unwrap(), yg.to_vec());
        assert_eq!(mix(0.0, &yg, &yf).unwrap(), yf.to_vec());
    }

    #[test]
    fn gate_loss_examples() {
        let l = gate_loss(&[true, false], &[0.5, 0.5]).unwrap();
        assert!(close(l, core::f64::consts::LN_2, 1e-12));
        let perfect = gate_loss(&[true, false, true], &[1.0, 0.0, 1.0]).unwrap();
        assert!(perfect.abs() < 1e-9);
        // one class only: its weight C-/C is zero
        assert_eq!(gate_loss(&[true, true], &[0.1, 0.9]).unwrap(), 0.0);
        assert_eq!(gate_loss(&[false, false], &[0.1, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(total_loss(1.0, 2.0, 3.0).unwrap(), 6.0);
        assert_eq!(total_loss(f64::NAN, 0.0, 0.0), Err(DecoderError::NonFinite));
        assert_eq!(total_loss(0.0, f64::INFINITY, 0.0), Err(DecoderError::NonFinite));
    }

    #[test]
    fn grounding_map_validation() {
        let text = Matrix::from_rows(&[vec![0.1, 0.2]]).unwrap();
        let regions = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let wf = Matrix::zeros(4, 2);
        let mut m = Matrix::zeros(2, 4);
        m.row_mut(0)[2] = 1.0;
        m.row_mut(1)[2] = 1.0;
        let err = DecoderInstance::new(text.clone(), regions.clone(), m, wf.clone(), vec![0.0; 2]);
        assert!(matches!(err, Err(DecoderError::InvalidGroundingMap(_))));
        let mut m = Matrix::zeros(2, 4);
        m.row_mut(0)[2] = 1.0;
        let err = DecoderInstance::new(text.clone(), regions.clone(), m, wf.clone(), vec![0.0; 2]);
        assert!(matches!(err, Err(DecoderError::InvalidGroundingMap(_))));
        let m = Matrix::zeros(2, 2);
        let err = DecoderInstance::new(text, regions, m, Matrix::zeros(2, 2), vec![0.0; 2]);
        assert!(matches!(err, Err(DecoderError::DimMismatch(_))));
    }

    fn small_instance() -> (DecoderInstance, DecoderTargets) {
        let text = Matrix::from_rows(&[vec![0.3, -0.2, 0.5], vec![-0.4, 0.1, 0.2], vec![0.6, 0.6, -0.3]]).unwrap();
        let regions = Matrix::from_rows(&[vec![0.5, 0.1, -0.3], vec![-0.2, 0.8, 0.4]]).unwrap();
        let mut m = Matrix::zeros(2, 5);
        m.row_mut(0)[3] = 1.0;
        m.row_mut(1)[4] = 1.0;
        let wf = Matrix::from_rows(&[
            vec![0.1, 0.2, 0.3],
            vec![-0.3, 0.1, 0.0],
            vec![0.2, -0.5, 0.4],
            vec![0.0, 0.3, -0.1],
            vec![0.4, 0.0, 0.2],
        ])
        .unwrap();
        let inst = DecoderInstance::new(text, regions, m, wf, vec![0.7, -0.4, 0.2]).unwrap();
        let targets = DecoderTargets {
            tokens: vec![0, 3, 2],
            gates: vec![false, true, false],
            answer_probs: vec![0.6, 0.4],
            answer: 0,
        };
        (inst, targets)
    }

    #[test]
    fn step_distributions_sum_to_one() {
        let (inst, _) = small_instance();
        for i in 0..inst.steps() {
            let out = inst.step(i).unwrap();
            for dist in [&out.grounding, &out.y_g, &out.y_f, &out.y_hat] {
                assert!(close(dist.iter().sum::<f64>(), 1.0, 1e-12));
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (inst, targets) = small_instance();
        let report = check_gradients(&inst, &targets).unwrap();
        assert!(report.max_rel_error() < 1e-4, "{report:?}");
        assert_eq!(report.text.checked, 9);
        assert_eq!(report.gate_weights.checked, 3);
        assert_eq!(report.output_proj.checked, 15);
    }

    #[test]
    fn gradient_sign_predicts_loss_change() {
        let (inst, targets) = small_instance();
        let grads = inst.gradients(&targets).unwrap();
        let base = inst.loss(&targets).unwrap().total;
        for j in 0..inst.gate_weights.len() {
            let mut up = inst.clone();
            up.gate_weights[j] += 1e-4;
            let delta = up.loss(&targets).unwrap().total - base;
            assert_eq!(delta > 0.0, grads.gate_weights[j] > 0.0);
        }
    }
}
