//! Pretraining loop, the combined objective, and gradient checking.
//!
//! Per step: sample a node batch, encode nodes and texts (and negative
//! texts when alpha > 0), retrieve positives from the text bank, take an
//! Adam step, then push the batch's detached text embeddings into the
//! bank. The negative encoder trains independently: the margin and
//! semantics-opposite losses see stop-gradient copies of the node and text
//! embeddings, so only the negative encoder and its prompt move.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bank::TextBank;
use crate::encoders::{
    bag_of_words_features, encode_negative_texts_t, encode_nodes_t, encode_texts_t,
    EncoderConfig, GraphEncoderParams, NegativeTextEncoderParams, TextEncoderParams,
};
use crate::error::{Result, TagclError};
use crate::graph::{normalize_adjacency, TextAttributedGraph};
use crate::losses::{
    clamp_log_tau, contrastive_loss_t, margin_loss_t, psm_loss_t, semantics_opposite_loss_t,
    LossBreakdown,
};
use crate::optim::Adam;
use crate::tape::{NodeId, Tape};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegEncoderInit {
    CopyAtStart,
    CopyAfterWarmup,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub retrieval_k: usize,
    pub bank_capacity: usize,
    pub neg_prompt_len: usize,
    pub margin: f64,
    pub alpha: f64,
    pub tau_init: f64,
    pub seed: u64,
    pub query_per_class: usize,
    pub runs: usize,
    pub min_word_freq: usize,
    pub template: String,
    /// Few-shot continuous prompt length M.
    pub prompt_len: usize,
    pub tune_steps: usize,
    pub tune_lr: f64,
    pub include_positive_in_denominator: bool,
    /// Disable to train on the contrastive objective alone (ablation).
    pub use_psm: bool,
    pub neg_encoder_init: NegEncoderInit,
    pub warmup_steps: usize,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            epochs: 2,
            batch_size: 64,
            retrieval_k: 1,
            bank_capacity: 32_768,
            neg_prompt_len: 16,
            margin: 1.0,
            alpha: 0.0,
            tau_init: 0.07,
            seed: 0,
            query_per_class: 15,
            runs: 5,
            min_word_freq: 2,
            template: crate::prompting::DEFAULT_TEMPLATE.to_string(),
            prompt_len: 4,
            tune_steps: 50,
            tune_lr: 1e-2,
            include_positive_in_denominator: true,
            use_psm: true,
            neg_encoder_init: NegEncoderInit::CopyAtStart,
            warmup_steps: 0,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.tune_lr <= 0.0 {
            return Err(TagclError::InvalidArgument("learning rates must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(TagclError::InvalidArgument("batch_size must be at least 2".into()));
        }
        if self.retrieval_k == 0 || self.bank_capacity == 0 {
            return Err(TagclError::InvalidArgument(
                "retrieval_k and bank_capacity must be positive".into(),
            ));
        }
        if self.alpha < 0.0 || self.margin < 0.0 || self.tau_init <= 0.0 {
            return Err(TagclError::InvalidArgument(
                "alpha and margin must be nonnegative, tau_init positive".into(),
            ));
        }
        if self.runs == 0 || self.query_per_class == 0 {
            return Err(TagclError::InvalidArgument(
                "runs and query_per_class must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Canonical hash of a config, used for checkpoint/report identity.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// One JSON line per optimization step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    #[serde(rename = "L_CL")]
    pub l_cl: f64,
    #[serde(rename = "L_PSM")]
    pub l_psm: f64,
    #[serde(rename = "L_ML")]
    pub l_ml: f64,
    #[serde(rename = "L_SO")]
    pub l_so: f64,
    pub total: f64,
    pub tau: f64,
}

/// Everything a trained run carries forward.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: TrainConfig,
    pub tokenizer: Tokenizer,
    pub graph_enc: GraphEncoderParams,
    pub text_enc: TextEncoderParams,
    pub neg_enc: Option<NegativeTextEncoderParams>,
    pub log_tau: f64,
    pub bank: TextBank,
    pub steps_done: u64,
}

impl Model {
    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }
}

pub struct TotalLossNodes {
    pub cl: NodeId,
    pub psm: NodeId,
    pub ml: Option<NodeId>,
    pub so: Option<NodeId>,
    pub total: NodeId,
}

/// Combined objective on an existing tape. With `alpha` = 0 the negative
/// branch must not have been built (`neg_text_embs` = None) and the margin
/// and semantics-opposite components are exactly zero. The negative
/// branch contrasts against stop-gradient copies of the node and text
/// embeddings, so those losses only train the negative encoder.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_t(
    tape: &mut Tape,
    node_embs: NodeId,
    text_embs: NodeId,
    retrieved: &[Vec<Array1<f64>>],
    neg_text_embs: Option<NodeId>,
    log_tau: NodeId,
    alpha: f64,
    margin: f64,
    include_positive: bool,
) -> Result<TotalLossNodes> {
    let cl = contrastive_loss_t(tape, node_embs, text_embs, log_tau, include_positive)?;
    let psm = psm_loss_t(tape, node_embs, text_embs, retrieved, log_tau, include_positive)?;
    let mut total = tape.add(cl, psm);
    let (mut ml, mut so) = (None, None);
    if alpha > 0.0 {
        let neg = neg_text_embs.ok_or_else(|| {
            TagclError::InvalidArgument(
                "alpha > 0 requires negative text embeddings".into(),
            )
        })?;
        let node_detached = tape.constant(tape.value(node_embs).clone());
        let text_detached = tape.constant(tape.value(text_embs).clone());
        let ml_node = margin_loss_t(tape, node_detached, neg, margin)?;
        let so_node = semantics_opposite_loss_t(tape, text_detached, neg)?;
        let nsc = tape.add(ml_node, so_node);
        let scaled = tape.scale(nsc, alpha);
        total = tape.add(total, scaled);
        ml = Some(ml_node);
        so = Some(so_node);
    } else if neg_text_embs.is_some() {
        return Err(TagclError::InvalidArgument(
            "alpha = 0 must skip the negative encoder forward".into(),
        ));
    }
    Ok(TotalLossNodes {
        cl,
        psm,
        ml,
        so,
        total,
    })
}

/// Pretrain on a graph; deterministic per seed. Returns the model and the
/// per-step loss trace.
pub fn pretrain(graph: &TextAttributedGraph, cfg: &TrainConfig) -> Result<(Model, Vec<StepLog>)> {
    cfg.validate()?;
    let tokenizer = Tokenizer::build(&graph.texts, cfg.encoder.max_seq_len, cfg.min_word_freq);
    let feats = bag_of_words_features(graph, &tokenizer);
    let adj = normalize_adjacency(graph);
    let seqs: Vec<Vec<usize>> = graph.texts.iter().map(|t| tokenizer.encode(t)).collect();

    let mut graph_enc = GraphEncoderParams::init(&cfg.encoder, tokenizer.vocab_size(), cfg.seed);
    let mut text_enc =
        TextEncoderParams::init(&cfg.encoder, tokenizer.vocab_size(), cfg.seed.wrapping_add(1));
    let mut neg_enc: Option<NegativeTextEncoderParams> = if cfg.alpha > 0.0
        && cfg.neg_encoder_init == NegEncoderInit::CopyAtStart
    {
        Some(NegativeTextEncoderParams::from_text_encoder(
            &text_enc,
            cfg.neg_prompt_len,
            cfg.seed.wrapping_add(2),
        ))
    } else {
        None
    };
    let mut log_tau = cfg.tau_init.ln();
    let mut bank = TextBank::new(cfg.bank_capacity);
    let mut opt = Adam::new(cfg.lr);
    let mut neg_opt = Adam::new(cfg.lr);

    let mut trace = Vec::new();
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..graph.node_count()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1000 + epoch as u64));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            if cfg.alpha > 0.0 && neg_enc.is_none() && step >= cfg.warmup_steps as u64 {
                neg_enc = Some(NegativeTextEncoderParams::from_text_encoder(
                    &text_enc,
                    cfg.neg_prompt_len,
                    cfg.seed.wrapping_add(2),
                ));
            }
            let use_neg = cfg.alpha > 0.0 && neg_enc.is_some();

            let mut tape = Tape::new();
            let g_params = graph_enc.params.register(&mut tape);
            let t_params = text_enc.params.register(&mut tape);
            let n_params = if use_neg {
                Some(neg_enc.as_ref().unwrap().enc.params.register(&mut tape))
            } else {
                None
            };
            let lt = tape.scalar_leaf(log_tau);
            let adj_node = tape.constant(adj.clone());
            let feat_node = tape.constant(feats.clone());
            let all_nodes = encode_nodes_t(&mut tape, adj_node, feat_node, &g_params, &cfg.encoder);
            let node_embs = tape.gather_rows(all_nodes, batch);
            let batch_seqs: Vec<Vec<usize>> = batch.iter().map(|&i| seqs[i].clone()).collect();
            let text_embs = encode_texts_t(&mut tape, &batch_seqs, &t_params, &cfg.encoder)?;

            let text_values = tape.value(text_embs).clone();
            // With PSM disabled, empty retrieval lists make that loss an
            // exact zero with zero gradients.
            let retrieved: Vec<Vec<Array1<f64>>> = if cfg.use_psm {
                batch
                    .iter()
                    .enumerate()
                    .map(|(row, &id)| {
                        let res = bank.query_topk(
                            text_values.row(row),
                            cfg.retrieval_k,
                            Some(id),
                        )?;
                        Ok(res.hits.into_iter().map(|(_, e, _)| e).collect())
                    })
                    .collect::<Result<_>>()?
            } else {
                vec![Vec::new(); batch.len()]
            };

            let neg_embs = if use_neg {
                Some(encode_negative_texts_t(
                    &mut tape,
                    &batch_seqs,
                    n_params.as_ref().unwrap(),
                    &cfg.encoder,
                    cfg.neg_prompt_len,
                )?)
            } else {
                None
            };

            let losses = total_loss_t(
                &mut tape,
                node_embs,
                text_embs,
                &retrieved,
                neg_embs,
                lt,
                if use_neg { cfg.alpha } else { 0.0 },
                cfg.margin,
                cfg.include_positive_in_denominator,
            )?;

            let breakdown = LossBreakdown {
                contrastive: tape.scalar(losses.cl),
                psm: tape.scalar(losses.psm),
                margin: losses.ml.map(|n| tape.scalar(n)).unwrap_or(0.0),
                semantics_opposite: losses.so.map(|n| tape.scalar(n)).unwrap_or(0.0),
                total: tape.scalar(losses.total),
                tau: log_tau.exp(),
            };
            if !breakdown.total.is_finite() {
                return Err(TagclError::Numerical(format!(
                    "non-finite loss at step {step}: {breakdown:?}"
                )));
            }

            let grads = tape.backward(losses.total);
            opt.begin_step();
            for (name, value) in graph_enc.params.iter_mut() {
                opt.update(&format!("g.{name}"), value, &grads[g_params[name]]);
            }
            for (name, value) in text_enc.params.iter_mut() {
                opt.update(&format!("t.{name}"), value, &grads[t_params[name]]);
            }
            let mut lt_mat = Array2::from_elem((1, 1), log_tau);
            opt.update("log_tau", &mut lt_mat, &grads[lt]);
            log_tau = clamp_log_tau(lt_mat[(0, 0)]);
            if use_neg {
                let np = n_params.as_ref().unwrap();
                neg_opt.begin_step();
                for (name, value) in neg_enc.as_mut().unwrap().enc.params.iter_mut() {
                    neg_opt.update(&format!("n.{name}"), value, &grads[np[name]]);
                }
            }

            bank.push_batch(batch, &text_values)?;
            step += 1;
            trace.push(StepLog {
                step,
                l_cl: breakdown.contrastive,
                l_psm: breakdown.psm,
                l_ml: breakdown.margin,
                l_so: breakdown.semantics_opposite,
                total: breakdown.total,
                tau: breakdown.tau,
            });
        }
    }

    Ok((
        Model {
            cfg: cfg.clone(),
            tokenizer,
            graph_enc,
            text_enc,
            neg_enc,
            log_tau,
            bank,
            steps_done: step,
        },
        trace,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub max_rel_err: f64,
    pub pass: bool,
    /// Location and values of the worst element: (tensor, row, col,
    /// analytic, finite-difference).
    pub worst: Option<(String, usize, usize, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn all_pass(&self) -> bool {
        self.groups.iter().all(|g| g.pass)
    }
}

/// Fixed micro-instance for gradient checking: an 8-node graph, d = 8,
/// one transformer block.
pub struct MicroInstance {
    pub cfg: TrainConfig,
    pub adj: Array2<f64>,
    pub feats: Array2<f64>,
    pub seqs: Vec<Vec<usize>>,
    pub batch: Vec<usize>,
    pub retrieved: Vec<Vec<Array1<f64>>>,
    pub tokenizer: Tokenizer,
}

pub fn micro_instance(alpha: f64) -> MicroInstance {
    let spec = crate::synthetic::SyntheticSpec {
        classes: 2,
        nodes_per_class: 4,
        p_intra: 0.6,
        p_inter: 0.1,
        vocab_size: 12,
        tokens_per_text: 5,
        class_token_overlap: 0.3,
        seed: 77,
    };
    let graph = crate::synthetic::generate_synthetic(&spec).expect("micro graph");
    let mut cfg = TrainConfig {
        alpha,
        neg_prompt_len: 3,
        encoder: EncoderConfig {
            gcn_layers: 2,
            gcn_hidden: 8,
            embed_dim: 8,
            token_dim: 8,
            blocks: 1,
            heads: 2,
            ff_dim: 16,
            max_seq_len: 12,
            mean_pooling: false,
        },
        ..TrainConfig::default()
    };
    cfg.batch_size = 8;
    let tokenizer = Tokenizer::build(&graph.texts, cfg.encoder.max_seq_len, 1);
    let feats = bag_of_words_features(&graph, &tokenizer);
    let adj = normalize_adjacency(&graph);
    let seqs: Vec<Vec<usize>> = graph.texts.iter().map(|t| tokenizer.encode(t)).collect();
    let batch: Vec<usize> = (0..graph.node_count()).collect();
    // Frozen retrieval targets: unit vectors derived deterministically.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let retrieved: Vec<Vec<Array1<f64>>> = batch
        .iter()
        .map(|_| {
            let v: Array1<f64> =
                Array1::from_shape_fn(cfg.encoder.embed_dim, |_| rng.gen_range(-1.0..1.0));
            let n = v.dot(&v).sqrt();
            vec![v / n]
        })
        .collect();
    MicroInstance {
        cfg,
        adj,
        feats,
        seqs,
        batch,
        retrieved,
        tokenizer,
    }
}

struct MicroParams {
    graph_enc: GraphEncoderParams,
    text_enc: TextEncoderParams,
    neg_enc: Option<NegativeTextEncoderParams>,
    log_tau: f64,
}

fn micro_params(inst: &MicroInstance) -> MicroParams {
    let graph_enc = GraphEncoderParams::init(&inst.cfg.encoder, inst.tokenizer.vocab_size(), 21);
    let text_enc = TextEncoderParams::init(&inst.cfg.encoder, inst.tokenizer.vocab_size(), 22);
    let neg_enc = if inst.cfg.alpha > 0.0 {
        Some(NegativeTextEncoderParams::from_text_encoder(
            &text_enc,
            inst.cfg.neg_prompt_len,
            23,
        ))
    } else {
        None
    };
    MicroParams {
        graph_enc,
        text_enc,
        neg_enc,
        log_tau: inst.cfg.tau_init.ln(),
    }
}

/// The positive-path objective (contrastive + PSM) as a plain number.
fn positive_objective(inst: &MicroInstance, p: &MicroParams) -> f64 {
    let mut tape = Tape::new();
    let g = p.graph_enc.params.register_frozen(&mut tape);
    let t = p.text_enc.params.register_frozen(&mut tape);
    let lt = tape.scalar_leaf(p.log_tau);
    let adj = tape.constant(inst.adj.clone());
    let feats = tape.constant(inst.feats.clone());
    let all = encode_nodes_t(&mut tape, adj, feats, &g, &inst.cfg.encoder);
    let nodes = tape.gather_rows(all, &inst.batch);
    let texts = encode_texts_t(&mut tape, &inst.seqs, &t, &inst.cfg.encoder).unwrap();
    let cl = contrastive_loss_t(&mut tape, nodes, texts, lt, true).unwrap();
    let psm = psm_loss_t(&mut tape, nodes, texts, &inst.retrieved, lt, true).unwrap();
    let total = tape.add(cl, psm);
    tape.scalar(total)
}

/// The negative-path objective alpha * (margin + semantics-opposite) with
/// the node/text embeddings frozen at the reference parameters.
fn negative_objective(
    inst: &MicroInstance,
    node_ref: &Array2<f64>,
    text_ref: &Array2<f64>,
    neg_enc: &NegativeTextEncoderParams,
) -> f64 {
    let mut tape = Tape::new();
    let n = neg_enc.enc.params.register_frozen(&mut tape);
    let neg = encode_negative_texts_t(
        &mut tape,
        &inst.seqs,
        &n,
        &inst.cfg.encoder,
        inst.cfg.neg_prompt_len,
    )
    .unwrap();
    let nodes = tape.constant(node_ref.clone());
    let texts = tape.constant(text_ref.clone());
    let ml = margin_loss_t(&mut tape, nodes, neg, inst.cfg.margin).unwrap();
    let so = semantics_opposite_loss_t(&mut tape, texts, neg).unwrap();
    let nsc = tape.add(ml, so);
    let total = tape.scale(nsc, inst.cfg.alpha);
    tape.scalar(total)
}

/// Analytic gradients of the total objective versus central finite
/// differences, per parameter group. The finite-difference
/// oracle respects the gradient routing: positive-path groups are checked
/// against the contrastive + PSM objective, negative-path groups against
/// alpha * (margin + semantics-opposite) with frozen positive embeddings.
pub fn gradient_check(alpha: f64) -> Result<GradCheckReport> {
    let tolerance = 1e-4;
    let inst = micro_instance(alpha);
    let mut p = micro_params(&inst);

    // Analytic pass, mirroring one pretrain step.
    let mut tape = Tape::new();
    let g_ids = p.graph_enc.params.register(&mut tape);
    let t_ids = p.text_enc.params.register(&mut tape);
    let n_ids = p
        .neg_enc
        .as_ref()
        .map(|ne| ne.enc.params.register(&mut tape));
    let lt = tape.scalar_leaf(p.log_tau);
    let adj = tape.constant(inst.adj.clone());
    let feats = tape.constant(inst.feats.clone());
    let all = encode_nodes_t(&mut tape, adj, feats, &g_ids, &inst.cfg.encoder);
    let nodes = tape.gather_rows(all, &inst.batch);
    let texts = encode_texts_t(&mut tape, &inst.seqs, &t_ids, &inst.cfg.encoder)?;
    let neg = match &n_ids {
        Some(ids) => Some(encode_negative_texts_t(
            &mut tape,
            &inst.seqs,
            ids,
            &inst.cfg.encoder,
            inst.cfg.neg_prompt_len,
        )?),
        None => None,
    };
    let losses = total_loss_t(
        &mut tape,
        nodes,
        texts,
        &inst.retrieved,
        neg,
        lt,
        alpha,
        inst.cfg.margin,
        true,
    )?;
    let node_ref = tape.value(nodes).clone();
    let text_ref = tape.value(texts).clone();
    let grads = tape.backward(losses.total);

    let h = 1e-4;

    // Richardson-extrapolated central difference: combines steps h and
    // h/2 to cancel the h^2 truncation term, which otherwise dominates on
    // high-curvature elements (layer norm, attention softmax).
    fn central_diff(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
        let d1 = (f(h) - f(-h)) / (2.0 * h);
        let d2 = (f(h / 2.0) - f(-h / 2.0)) / h;
        (4.0 * d2 - d1) / 3.0
    }

    // Relative error with an absolute floor: finite differences of an
    // O(1) loss carry ~1e-10 absolute noise, so elements whose gradient
    // is already tiny are compared absolutely.
    #[derive(Default)]
    struct Tracker {
        max: f64,
        worst: Option<(String, usize, usize, f64, f64)>,
    }
    impl Tracker {
        fn record(&mut self, name: &str, i: usize, j: usize, an: f64, fd: f64) {
            let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-5);
            if err > self.max {
                self.max = err;
                self.worst = Some((name.to_string(), i, j, an, fd));
            }
        }
        fn into_report(self, group: &str, tolerance: f64) -> GroupReport {
            GroupReport {
                group: group.into(),
                pass: self.max < tolerance,
                max_rel_err: self.max,
                worst: self.worst,
            }
        }
    }

    let mut groups = Vec::new();

    // Positive-path groups.
    let graph_names: Vec<String> =
        p.graph_enc.params.iter().map(|(n, _)| n.to_string()).collect();
    let mut track = Tracker::default();
    for name in &graph_names {
        let shape = p.graph_enc.params.get(name).unwrap().raw_dim();
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                let orig = p.graph_enc.params.get(name).unwrap()[(i, j)];
                let fd = central_diff(
                    |delta| {
                        p.graph_enc.params.get_mut(name).unwrap()[(i, j)] = orig + delta;
                        positive_objective(&inst, &p)
                    },
                    h,
                );
                p.graph_enc.params.get_mut(name).unwrap()[(i, j)] = orig;
                track.record(name, i, j, grads[g_ids[name]][(i, j)], fd);
            }
        }
    }
    groups.push(track.into_report("graph_encoder", tolerance));

    let text_names: Vec<String> =
        p.text_enc.params.iter().map(|(n, _)| n.to_string()).collect();
    let mut track = Tracker::default();
    for name in &text_names {
        let shape = p.text_enc.params.get(name).unwrap().raw_dim();
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                let orig = p.text_enc.params.get(name).unwrap()[(i, j)];
                let fd = central_diff(
                    |delta| {
                        p.text_enc.params.get_mut(name).unwrap()[(i, j)] = orig + delta;
                        positive_objective(&inst, &p)
                    },
                    h,
                );
                p.text_enc.params.get_mut(name).unwrap()[(i, j)] = orig;
                track.record(name, i, j, grads[t_ids[name]][(i, j)], fd);
            }
        }
    }
    groups.push(track.into_report("text_encoder", tolerance));

    {
        let orig = p.log_tau;
        let fd = central_diff(
            |delta| {
                p.log_tau = orig + delta;
                positive_objective(&inst, &p)
            },
            h,
        );
        p.log_tau = orig;
        let mut track = Tracker::default();
        track.record("log_tau", 0, 0, grads[lt][(0, 0)], fd);
        groups.push(track.into_report("temperature", tolerance));
    }

    // Negative-path groups, only present when alpha > 0.
    if let (Some(ids), Some(neg_enc)) = (&n_ids, &mut p.neg_enc) {
        let names: Vec<String> =
            neg_enc.enc.params.iter().map(|(n, _)| n.to_string()).collect();
        let mut track_enc = Tracker::default();
        let mut track_prompt = Tracker::default();
        for name in &names {
            let shape = neg_enc.enc.params.get(name).unwrap().raw_dim();
            for i in 0..shape[0] {
                for j in 0..shape[1] {
                    let orig = neg_enc.enc.params.get(name).unwrap()[(i, j)];
                    let fd = central_diff(
                        |delta| {
                            neg_enc.enc.params.get_mut(name).unwrap()[(i, j)] = orig + delta;
                            negative_objective(&inst, &node_ref, &text_ref, neg_enc)
                        },
                        h,
                    );
                    neg_enc.enc.params.get_mut(name).unwrap()[(i, j)] = orig;
                    let an = grads[ids[name]][(i, j)];
                    if name == "prompt" {
                        track_prompt.record(name, i, j, an, fd);
                    } else {
                        track_enc.record(name, i, j, an, fd);
                    }
                }
            }
        }
        groups.push(track_enc.into_report("negative_text_encoder", tolerance));
        groups.push(track_prompt.into_report("negative_prompt", tolerance));
    }

    Ok(GradCheckReport { groups, tolerance })
}
