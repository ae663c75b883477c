//! Loss functions over unit-norm embedding batches: contrastive,
//! positive semantics matching, margin, semantics-opposite, and the
//! combined objective.
//!
//! Temperature is learnable and shared; it is carried as log(tau) so the
//! positivity constraint is structural, and clamped to [1e-3, 100] by the
//! optimizer.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TagclError};
use crate::tape::{NodeId, Tape};

pub const TAU_MIN: f64 = 1e-3;
pub const TAU_MAX: f64 = 100.0;

/// Off-diagonal masking constant; vanishes under log-sum-exp.
const MASK: f64 = -1e30;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub tau_init: f64,
    pub margin: f64,
    pub alpha: f64,
    pub retrieval_k: usize,
    /// The printed contrastive denominator ranges over j != i; the
    /// standard InfoNCE form includes the positive. `true` selects the
    /// InfoNCE form, `false` the literal one.
    pub include_positive_in_denominator: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau_init: 0.07,
            margin: 1.0,
            alpha: 0.0,
            retrieval_k: 1,
            include_positive_in_denominator: true,
        }
    }
}

pub fn clamp_log_tau(log_tau: f64) -> f64 {
    log_tau.clamp(TAU_MIN.ln(), TAU_MAX.ln())
}

/// exp(-log_tau) as a 1x1 node: multiplying by it divides by tau.
fn inv_tau(tape: &mut Tape, log_tau: NodeId) -> NodeId {
    let neg = tape.scale(log_tau, -1.0);
    tape.exp(neg)
}

fn diag_mask(tape: &mut Tape, n: usize) -> NodeId {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = MASK;
    }
    tape.constant(m)
}

/// Mean over i of -log softmax of the matched similarity (temperature
/// scaled). Both embedding batches must be unit-norm rows.
pub fn contrastive_loss_t(
    tape: &mut Tape,
    node_embs: NodeId,
    text_embs: NodeId,
    log_tau: NodeId,
    include_positive: bool,
) -> Result<NodeId> {
    let b = tape.value(node_embs).nrows();
    if b < 2 {
        return Err(TagclError::InvalidArgument(
            "contrastive loss needs a batch of at least 2".into(),
        ));
    }
    if tape.value(node_embs).ncols() != tape.value(text_embs).ncols() {
        return Err(TagclError::ShapeMismatch(
            "node and text embedding dimensions differ".into(),
        ));
    }
    let it = inv_tau(tape, log_tau);
    let sims = tape.matmul_t(node_embs, text_embs);
    let logits = tape.mul_scalar_node(sims, it);
    let diag = tape.diag_col(logits);
    let denom_src = if include_positive {
        logits
    } else {
        let mask = diag_mask(tape, b);
        tape.add(logits, mask)
    };
    let lse = tape.logsumexp_row(denom_src);
    let per = tape.sub(diag, lse);
    let total = tape.sum_all(per);
    Ok(tape.scale(total, -1.0 / b as f64))
}

/// Positive semantics matching: numerator pools the retrieved neighbors,
/// denominator follows the contrastive index rule with the retrieved
/// candidates appended when the positive is included. Nodes with empty
/// retrieval are skipped; if all are empty the loss is exactly zero.
pub fn psm_loss_t(
    tape: &mut Tape,
    node_embs: NodeId,
    text_embs: NodeId,
    retrieved: &[Vec<Array1<f64>>],
    log_tau: NodeId,
    include_positive: bool,
) -> Result<NodeId> {
    let b = tape.value(node_embs).nrows();
    let d = tape.value(node_embs).ncols();
    if retrieved.len() != b {
        return Err(TagclError::ShapeMismatch(format!(
            "{} retrieval lists for batch of {b}",
            retrieved.len()
        )));
    }
    let it = inv_tau(tape, log_tau);
    let sims = tape.matmul_t(node_embs, text_embs);
    let logits = tape.mul_scalar_node(sims, it);
    let mask = diag_mask(tape, b);
    let masked = tape.add(logits, mask);

    let mut terms: Option<NodeId> = None;
    let mut contributing = 0usize;
    for (i, retr) in retrieved.iter().enumerate() {
        if retr.is_empty() {
            continue;
        }
        for v in retr {
            if v.len() != d {
                return Err(TagclError::ShapeMismatch(format!(
                    "retrieved vector of dim {} vs embeddings of dim {d}",
                    v.len()
                )));
            }
        }
        contributing += 1;
        let mut rmat = Array2::zeros((retr.len(), d));
        for (k, v) in retr.iter().enumerate() {
            rmat.row_mut(k).assign(v);
        }
        let rconst = tape.constant(rmat);
        let ni = tape.gather_rows(node_embs, &[i]);
        let rsims = tape.matmul_t(ni, rconst);
        let rlogits = tape.mul_scalar_node(rsims, it);
        let numer = tape.logsumexp_row(rlogits);
        let batch_row = tape.gather_rows(masked, &[i]);
        let denom_src = if include_positive {
            tape.concat_cols(batch_row, rlogits)
        } else {
            batch_row
        };
        let denom = tape.logsumexp_row(denom_src);
        let term = tape.sub(numer, denom);
        terms = Some(match terms {
            None => term,
            Some(acc) => tape.add(acc, term),
        });
    }
    match terms {
        None => Ok(tape.constant(Array2::zeros((1, 1)))),
        Some(sum) => Ok(tape.scale(sum, -1.0 / contributing as f64)),
    }
}

/// Mean over ordered pairs (i, j != i) of
/// max(0, margin + sim(n_i, t_i^neg) - sim(n_i, t_j^neg)), given the
/// precomputed similarity matrix.
pub fn margin_loss_from_sims_t(tape: &mut Tape, sims: NodeId, margin: f64) -> Result<NodeId> {
    let b = tape.value(sims).nrows();
    if b < 2 {
        return Err(TagclError::InvalidArgument(
            "margin loss needs a batch of at least 2".into(),
        ));
    }
    let diag = tape.diag_col(sims);
    let neg = tape.scale(sims, -1.0);
    let gap = tape.add_col(neg, diag);
    let shifted = tape.add_scalar(gap, margin);
    let hinge = tape.relu(shifted);
    let mut off_diag = Array2::ones((b, b));
    for i in 0..b {
        off_diag[(i, i)] = 0.0;
    }
    let mask = tape.constant(off_diag);
    let masked = tape.mul(hinge, mask);
    let total = tape.sum_all(masked);
    Ok(tape.scale(total, 1.0 / (b * (b - 1)) as f64))
}

pub fn margin_loss_t(
    tape: &mut Tape,
    node_embs: NodeId,
    neg_text_embs: NodeId,
    margin: f64,
) -> Result<NodeId> {
    if tape.value(node_embs).ncols() != tape.value(neg_text_embs).ncols() {
        return Err(TagclError::ShapeMismatch(
            "node and negative text dimensions differ".into(),
        ));
    }
    let sims = tape.matmul_t(node_embs, neg_text_embs);
    margin_loss_from_sims_t(tape, sims, margin)
}

/// Negated mean L2 distance between matched text and negative-text rows;
/// in [-2, 0] for unit-norm inputs.
pub fn semantics_opposite_loss_t(
    tape: &mut Tape,
    text_embs: NodeId,
    neg_text_embs: NodeId,
) -> Result<NodeId> {
    let shape_a = tape.value(text_embs).raw_dim();
    let shape_b = tape.value(neg_text_embs).raw_dim();
    if shape_a != shape_b {
        return Err(TagclError::ShapeMismatch(format!(
            "text {shape_a:?} vs negative text {shape_b:?}"
        )));
    }
    let b = shape_a[0];
    let diff = tape.sub(text_embs, neg_text_embs);
    let norms = tape.row_norm(diff);
    let total = tape.sum_all(norms);
    Ok(tape.scale(total, -1.0 / b as f64))
}

/// Per-component loss values for logging.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub psm: f64,
    pub margin: f64,
    pub semantics_opposite: f64,
    pub total: f64,
    pub tau: f64,
}

// Value-level wrappers for callers that only need numbers.

pub fn contrastive_loss_value(
    node_embs: &Array2<f64>,
    text_embs: &Array2<f64>,
    tau: f64,
    include_positive: bool,
) -> Result<f64> {
    let mut tape = Tape::new();
    let n = tape.constant(node_embs.clone());
    let t = tape.constant(text_embs.clone());
    let lt = tape.scalar_leaf(tau.ln());
    let l = contrastive_loss_t(&mut tape, n, t, lt, include_positive)?;
    Ok(tape.scalar(l))
}

pub fn psm_loss_value(
    node_embs: &Array2<f64>,
    text_embs: &Array2<f64>,
    retrieved: &[Vec<Array1<f64>>],
    tau: f64,
    include_positive: bool,
) -> Result<f64> {
    let mut tape = Tape::new();
    let n = tape.constant(node_embs.clone());
    let t = tape.constant(text_embs.clone());
    let lt = tape.scalar_leaf(tau.ln());
    let l = psm_loss_t(&mut tape, n, t, retrieved, lt, include_positive)?;
    Ok(tape.scalar(l))
}

pub fn margin_loss_value(
    node_embs: &Array2<f64>,
    neg_text_embs: &Array2<f64>,
    margin: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let n = tape.constant(node_embs.clone());
    let t = tape.constant(neg_text_embs.clone());
    let l = margin_loss_t(&mut tape, n, t, margin)?;
    Ok(tape.scalar(l))
}

pub fn margin_loss_from_sims_value(sims: &Array2<f64>, margin: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.constant(sims.clone());
    let l = margin_loss_from_sims_t(&mut tape, s, margin)?;
    Ok(tape.scalar(l))
}

pub fn semantics_opposite_loss_value(
    text_embs: &Array2<f64>,
    neg_text_embs: &Array2<f64>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let t = tape.constant(text_embs.clone());
    let n = tape.constant(neg_text_embs.clone());
    let l = semantics_opposite_loss_t(&mut tape, t, n)?;
    Ok(tape.scalar(l))
}
