//! Class-description prompting: discrete zero-shot templates, continuous
//! few-shot prompt tuning against a frozen encoder, negative class
//! embeddings, and the probability-average decision rule.

use ndarray::{Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::encoders::{
    encode_texts_with_prompt_t, NegativeTextEncoderParams, TextEncoderParams,
};
use crate::error::{Result, TagclError};
use crate::optim::Adam;
use crate::tape::{NodeId, Tape};
use crate::tokenizer::Tokenizer;

pub const DEFAULT_TEMPLATE: &str = "a paper of [class]";
pub const PLACEHOLDER: &str = "[class]";

/// Continuous prompt state for few-shot tuning: M learnable vectors of the
/// text encoder's token width.
#[derive(Debug, Clone)]
pub struct PromptState {
    pub template: String,
    pub continuous_prompt: Array2<f64>,
}

impl PromptState {
    /// `prompt_len` = 0 makes the few-shot path identical to zero-shot.
    pub fn init(template: &str, prompt_len: usize, token_dim: usize, seed: u64) -> Result<Self> {
        validate_template(template)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prompt = Array2::from_shape_fn((prompt_len, token_dim), |_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            0.02 * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        Ok(Self {
            template: template.to_string(),
            continuous_prompt: prompt,
        })
    }
}

fn validate_template(template: &str) -> Result<()> {
    if template.matches(PLACEHOLDER).count() != 1 {
        return Err(TagclError::InvalidArgument(format!(
            "template must contain exactly one {PLACEHOLDER} placeholder: {template:?}"
        )));
    }
    Ok(())
}

pub fn instantiate_template(template: &str, class_name: &str) -> Result<String> {
    validate_template(template)?;
    Ok(template.replace(PLACEHOLDER, class_name))
}

fn class_description_seqs(
    class_names: &[String],
    template: &str,
    tok: &Tokenizer,
) -> Result<Vec<Vec<usize>>> {
    class_names
        .iter()
        .map(|c| Ok(tok.encode(&instantiate_template(template, c)?)))
        .collect()
}

/// Template-instantiated class descriptions through the positive text
/// encoder; rows unit-norm.
pub fn build_zero_shot_class_embeddings(
    class_names: &[String],
    template: &str,
    tok: &Tokenizer,
    enc: &TextEncoderParams,
) -> Result<Array2<f64>> {
    if class_names.len() < 2 {
        return Err(TagclError::InvalidArgument(
            "need at least 2 classes".into(),
        ));
    }
    let seqs = class_description_seqs(class_names, template, tok)?;
    enc.encode(&seqs)
}

/// Class descriptions through the negative text encoder (learned negative
/// prompt prepended), for probability-average prediction.
pub fn build_negative_class_embeddings(
    class_names: &[String],
    template: &str,
    tok: &Tokenizer,
    enc: &NegativeTextEncoderParams,
) -> Result<Array2<f64>> {
    if class_names.len() < 2 {
        return Err(TagclError::InvalidArgument(
            "need at least 2 classes".into(),
        ));
    }
    let seqs = class_description_seqs(class_names, template, tok)?;
    enc.encode(&seqs)
}

/// Tape-level few-shot class embeddings: continuous prompt vectors are
/// prepended at the embedding level; only `prompt` receives gradients, the
/// encoder parameters enter as constants.
pub fn build_few_shot_class_embeddings_t(
    tape: &mut Tape,
    class_names: &[String],
    template: &str,
    tok: &Tokenizer,
    prompt: Option<NodeId>,
    enc: &TextEncoderParams,
) -> Result<NodeId> {
    let seqs = class_description_seqs(class_names, template, tok)?;
    let params = enc.params.register_frozen(tape);
    encode_texts_with_prompt_t(tape, &seqs, prompt, &params, &enc.cfg)
}

/// Value-level few-shot class embeddings for prediction.
pub fn build_few_shot_class_embeddings(
    class_names: &[String],
    prompt_state: &PromptState,
    tok: &Tokenizer,
    enc: &TextEncoderParams,
) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let prompt = if prompt_state.continuous_prompt.nrows() == 0 {
        None
    } else {
        Some(tape.constant(prompt_state.continuous_prompt.clone()))
    };
    let out = build_few_shot_class_embeddings_t(
        &mut tape,
        class_names,
        &prompt_state.template,
        tok,
        prompt,
        enc,
    )?;
    Ok(tape.value(out).clone())
}

/// Softmax over cosine similarities divided by tau.
pub fn class_probabilities(
    node_emb: ArrayView1<f64>,
    class_embs: &Array2<f64>,
    tau: f64,
) -> Result<Vec<f64>> {
    let c = class_embs.nrows();
    if c < 2 {
        return Err(TagclError::InvalidArgument(
            "need at least 2 classes".into(),
        ));
    }
    if class_embs.ncols() != node_emb.len() {
        return Err(TagclError::ShapeMismatch(format!(
            "node dim {} vs class dim {}",
            node_emb.len(),
            class_embs.ncols()
        )));
    }
    let logits: Vec<f64> = (0..c)
        .map(|i| class_embs.row(i).dot(&node_emb) / tau)
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Probability-average: score_c = (p_c + 1 - p_c^neg) / 2, argmax with
/// ties broken by lowest class id.
pub fn probability_average(p: &[f64], p_neg: &[f64]) -> Result<(usize, Vec<f64>)> {
    if p.len() != p_neg.len() || p.is_empty() {
        return Err(TagclError::ShapeMismatch(format!(
            "p of length {} vs p_neg of length {}",
            p.len(),
            p_neg.len()
        )));
    }
    let scores: Vec<f64> = p
        .iter()
        .zip(p_neg)
        .map(|(&a, &b)| (a + 1.0 - b) / 2.0)
        .collect();
    Ok((argmax(&scores), scores))
}

/// Argmax with ties broken by lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Combined zero-shot prediction from both encoders.
pub fn probability_average_predict(
    node_emb: ArrayView1<f64>,
    pos_class_embs: &Array2<f64>,
    neg_class_embs: &Array2<f64>,
    tau: f64,
) -> Result<(usize, Vec<f64>)> {
    let p = class_probabilities(node_emb, pos_class_embs, tau)?;
    let p_neg = class_probabilities(node_emb, neg_class_embs, tau)?;
    probability_average(&p, &p_neg)
}

#[derive(Debug, Clone)]
pub struct TuneTrace {
    pub support_loss: Vec<f64>,
}

/// Optimize the continuous prompt on the support set by cross-entropy,
/// full batch, encoder frozen. Returns the tuned prompt and the per-step
/// support loss. Zero steps return the prompt bit-exactly unchanged.
pub fn prompt_tune(
    support_node_embs: &Array2<f64>,
    support_labels: &[usize],
    class_names: &[String],
    prompt_state: &PromptState,
    tok: &Tokenizer,
    enc: &TextEncoderParams,
    tau: f64,
    steps: usize,
    lr: f64,
) -> Result<(Array2<f64>, TuneTrace)> {
    if support_labels.is_empty() {
        return Err(TagclError::InvalidArgument("empty support set".into()));
    }
    if support_node_embs.nrows() != support_labels.len() {
        return Err(TagclError::ShapeMismatch(
            "support embeddings and labels disagree".into(),
        ));
    }
    let c = class_names.len();
    for &l in support_labels {
        if l >= c {
            return Err(TagclError::InvalidArgument(format!(
                "support label {l} outside 0..{c}"
            )));
        }
    }
    let s = support_labels.len();
    let mut label_mask = Array2::zeros((s, c));
    for (i, &l) in support_labels.iter().enumerate() {
        label_mask[(i, l)] = 1.0;
    }
    let ones_c = Array2::ones((c, 1));

    let mut prompt = prompt_state.continuous_prompt.clone();
    let mut opt = Adam::new(lr);
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut tape = Tape::new();
        let prompt_node = if prompt.nrows() == 0 {
            None
        } else {
            Some(tape.leaf(prompt.clone()))
        };
        let class_embs = build_few_shot_class_embeddings_t(
            &mut tape,
            class_names,
            &prompt_state.template,
            tok,
            prompt_node,
            enc,
        )?;
        let support = tape.constant(support_node_embs.clone());
        let sims = tape.matmul_t(support, class_embs);
        let logits = tape.scale(sims, 1.0 / tau);
        let lse = tape.logsumexp_row(logits);
        let mask = tape.constant(label_mask.clone());
        let picked_mat = tape.mul(logits, mask);
        let ones = tape.constant(ones_c.clone());
        let picked = tape.matmul(picked_mat, ones);
        let per = tape.sub(picked, lse);
        let total = tape.sum_all(per);
        let loss = tape.scale(total, -1.0 / s as f64);
        trace.push(tape.scalar(loss));
        if let Some(pn) = prompt_node {
            let grads = tape.backward(loss);
            opt.begin_step();
            opt.update("prompt", &mut prompt, &grads[pn]);
        }
    }
    Ok((prompt, TuneTrace { support_loss: trace }))
}
