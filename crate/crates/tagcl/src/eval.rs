//! Few-shot and zero-shot evaluation over sampled episodes.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoders::bag_of_words_features;
use crate::episode::{sample_episode, Episode};
use crate::error::{Result, TagclError};
use crate::graph::{normalize_adjacency, TextAttributedGraph};
use crate::metrics::{accuracy, macro_f1, EvalReport, RunMetrics};
use crate::prompting::{
    argmax, build_few_shot_class_embeddings, build_negative_class_embeddings,
    build_zero_shot_class_embeddings, class_probabilities, probability_average, PromptState,
};
use crate::train::{config_hash, Model};

/// One query-node prediction, dumped as a JSON line per query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub node_id: String,
    pub true_label: String,
    pub predicted: String,
    pub p: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_neg: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: EvalReport,
    /// Per run, per query node.
    pub predictions: Vec<Vec<PredictionRecord>>,
}

fn node_embeddings(model: &Model, graph: &TextAttributedGraph) -> Array2<f64> {
    let feats = bag_of_words_features(graph, &model.tokenizer);
    let adj = normalize_adjacency(graph);
    model.graph_enc.encode(&adj, &feats)
}

/// Metrics for a fixed episode given per-query predicted subset indices.
fn episode_metrics(
    episode: &Episode,
    predictions: &[usize],
) -> Result<RunMetrics> {
    let truth: Vec<usize> = episode
        .query
        .iter()
        .map(|&(_, label)| {
            episode
                .class_subset
                .iter()
                .position(|&c| c == label)
                .expect("query label in subset")
        })
        .collect();
    Ok(RunMetrics {
        accuracy: accuracy(&truth, predictions)?,
        macro_f1: macro_f1(&truth, predictions, episode.way_count)?,
    })
}

/// Few-shot evaluation: per run, sample an episode, tune the continuous
/// prompt on the support set, then classify queries by the highest
/// softmaxed node/class-description similarity. Runs differ only in
/// episode and prompt-init seeds; the pretrained encoders stay fixed.
pub fn evaluate_fewshot(
    model: &Model,
    graph: &TextAttributedGraph,
    way_count: usize,
    shot_count: usize,
    runs: usize,
    seed: u64,
) -> Result<EvalOutput> {
    if shot_count == 0 {
        return Err(TagclError::InvalidArgument(
            "shot_count 0 is the zero-shot setting; use zero-shot evaluation".into(),
        ));
    }
    if runs == 0 {
        return Err(TagclError::InvalidArgument("runs must be positive".into()));
    }
    let start = std::time::Instant::now();
    let all_embs = node_embeddings(model, graph);
    let tau = model.tau();
    let mut run_metrics = Vec::with_capacity(runs);
    let mut predictions = Vec::with_capacity(runs);
    for r in 0..runs {
        let episode = sample_episode(
            graph,
            way_count,
            shot_count,
            model.cfg.query_per_class,
            seed.wrapping_add(r as u64),
        )?;
        let class_names: Vec<String> = episode
            .class_subset
            .iter()
            .map(|&c| graph.class_names[c].clone())
            .collect();

        let mut support_embs = Array2::zeros((episode.support.len(), all_embs.ncols()));
        let mut support_labels = Vec::with_capacity(episode.support.len());
        for (i, &(node, label)) in episode.support.iter().enumerate() {
            support_embs.row_mut(i).assign(&all_embs.row(node));
            support_labels.push(
                episode
                    .class_subset
                    .iter()
                    .position(|&c| c == label)
                    .expect("support label in subset"),
            );
        }

        let prompt_state = PromptState::init(
            &model.cfg.template,
            model.cfg.prompt_len,
            model.cfg.encoder.token_dim,
            seed.wrapping_add(1000 + r as u64),
        )?;
        let (tuned_prompt, _) = crate::prompting::prompt_tune(
            &support_embs,
            &support_labels,
            &class_names,
            &prompt_state,
            &model.tokenizer,
            &model.text_enc,
            tau,
            model.cfg.tune_steps,
            model.cfg.tune_lr,
        )?;
        let tuned_state = PromptState {
            template: prompt_state.template.clone(),
            continuous_prompt: tuned_prompt,
        };
        let class_embs = build_few_shot_class_embeddings(
            &class_names,
            &tuned_state,
            &model.tokenizer,
            &model.text_enc,
        )?;

        let mut preds = Vec::with_capacity(episode.query.len());
        let mut records = Vec::with_capacity(episode.query.len());
        for &(node, label) in &episode.query {
            let p = class_probabilities(all_embs.row(node), &class_embs, tau)?;
            let pred = argmax(&p);
            records.push(PredictionRecord {
                node_id: graph.string_ids[node].clone(),
                true_label: graph.class_names[label].clone(),
                predicted: class_names[pred].clone(),
                p: p.clone(),
                p_neg: None,
            });
            preds.push(pred);
        }
        run_metrics.push(episode_metrics(&episode, &preds)?);
        predictions.push(records);
    }
    Ok(EvalOutput {
        report: EvalReport::from_runs(
            run_metrics,
            config_hash(&model.cfg),
            start.elapsed().as_secs_f64(),
        ),
        predictions,
    })
}

/// Zero-shot evaluation. With `use_probability_average` the score per
/// class is (p + 1 - p_neg) / 2, which requires a negative encoder in the
/// checkpoint; without it, plain softmax probabilities are ranked.
pub fn evaluate_zeroshot(
    model: &Model,
    graph: &TextAttributedGraph,
    way_count: usize,
    runs: usize,
    seed: u64,
    use_probability_average: bool,
) -> Result<EvalOutput> {
    if runs == 0 {
        return Err(TagclError::InvalidArgument("runs must be positive".into()));
    }
    if use_probability_average && model.neg_enc.is_none() {
        return Err(TagclError::InvalidArgument(
            "probability averaging needs a checkpoint trained with a negative encoder \
             (alpha > 0)"
                .into(),
        ));
    }
    let start = std::time::Instant::now();
    let all_embs = node_embeddings(model, graph);
    let tau = model.tau();
    let mut run_metrics = Vec::with_capacity(runs);
    let mut predictions = Vec::with_capacity(runs);
    for r in 0..runs {
        let episode = sample_episode(
            graph,
            way_count,
            0,
            model.cfg.query_per_class,
            seed.wrapping_add(r as u64),
        )?;
        let class_names: Vec<String> = episode
            .class_subset
            .iter()
            .map(|&c| graph.class_names[c].clone())
            .collect();
        let class_embs = build_zero_shot_class_embeddings(
            &class_names,
            &model.cfg.template,
            &model.tokenizer,
            &model.text_enc,
        )?;
        let neg_class_embs = if use_probability_average {
            Some(build_negative_class_embeddings(
                &class_names,
                &model.cfg.template,
                &model.tokenizer,
                model.neg_enc.as_ref().unwrap(),
            )?)
        } else {
            None
        };

        let mut preds = Vec::with_capacity(episode.query.len());
        let mut records = Vec::with_capacity(episode.query.len());
        for &(node, label) in &episode.query {
            let p = class_probabilities(all_embs.row(node), &class_embs, tau)?;
            let (pred, p_neg) = match &neg_class_embs {
                Some(neg) => {
                    let p_neg = class_probabilities(all_embs.row(node), neg, tau)?;
                    let (pred, _) = probability_average(&p, &p_neg)?;
                    (pred, Some(p_neg))
                }
                None => (argmax(&p), None),
            };
            records.push(PredictionRecord {
                node_id: graph.string_ids[node].clone(),
                true_label: graph.class_names[label].clone(),
                predicted: class_names[pred].clone(),
                p: p.clone(),
                p_neg,
            });
            preds.push(pred);
        }
        run_metrics.push(episode_metrics(&episode, &preds)?);
        predictions.push(records);
    }
    Ok(EvalOutput {
        report: EvalReport::from_runs(
            run_metrics,
            config_hash(&model.cfg),
            start.elapsed().as_secs_f64(),
        ),
        predictions,
    })
}

/// Evaluate an arbitrary predictor (query node -> subset index) over the
/// same episode schedule; the harness for stub-predictor sanity checks.
pub fn evaluate_with_predictor(
    graph: &TextAttributedGraph,
    way_count: usize,
    shot_count: usize,
    query_per_class: usize,
    runs: usize,
    seed: u64,
    mut predict: impl FnMut(usize, &Episode) -> usize,
) -> Result<Vec<RunMetrics>> {
    let mut out = Vec::with_capacity(runs);
    for r in 0..runs {
        let episode = sample_episode(
            graph,
            way_count,
            shot_count,
            query_per_class,
            seed.wrapping_add(r as u64),
        )?;
        let preds: Vec<usize> = episode
            .query
            .iter()
            .map(|&(node, _)| predict(node, &episode))
            .collect();
        out.push(episode_metrics(&episode, &preds)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;
    use crate::synthetic::{generate_synthetic, SyntheticSpec};
    use crate::train::{pretrain, TrainConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn eval_graph(seed: u64) -> TextAttributedGraph {
        generate_synthetic(&SyntheticSpec {
            classes: 4,
            nodes_per_class: 30,
            p_intra: 0.15,
            p_inter: 0.02,
            vocab_size: 40,
            tokens_per_text: 6,
            class_token_overlap: 0.2,
            seed,
        })
        .unwrap()
    }

    fn tiny_cfg(alpha: f64) -> TrainConfig {
        TrainConfig {
            lr: 2e-3,
            epochs: 2,
            batch_size: 24,
            alpha,
            bank_capacity: 128,
            neg_prompt_len: 4,
            seed: 5,
            query_per_class: 10,
            tune_steps: 10,
            encoder: EncoderConfig {
                gcn_layers: 1,
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
        }
    }

    #[test]
    fn perfect_stub_predictor_scores_one() {
        let graph = eval_graph(1);
        let runs = evaluate_with_predictor(&graph, 3, 2, 5, 4, 7, |node, ep| {
            ep.class_subset
                .iter()
                .position(|&c| c == graph.labels[node])
                .unwrap()
        })
        .unwrap();
        for r in runs {
            assert_eq!(r.accuracy, 1.0);
            assert_eq!(r.macro_f1, 1.0);
        }
    }

    #[test]
    fn uniform_random_stub_near_chance() {
        let graph = eval_graph(2);
        let way = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let runs =
            evaluate_with_predictor(&graph, way, 0, 15, 40, 3, |_, _| rng.gen_range(0..way))
                .unwrap();
        let n = runs.len() as f64 * (way * 15) as f64;
        let mean: f64 = runs.iter().map(|r| r.accuracy).sum::<f64>() / runs.len() as f64;
        // Binomial 3-sigma band around 1/way.
        let p = 1.0 / way as f64;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((mean - p).abs() < 3.0 * sigma, "mean {mean}, p {p}");
    }

    #[test]
    fn fewshot_rejects_zero_shots() {
        let graph = eval_graph(3);
        let (model, _) = pretrain(&graph, &tiny_cfg(0.0)).unwrap();
        let err = evaluate_fewshot(&model, &graph, 3, 0, 2, 1).unwrap_err();
        assert!(err.to_string().contains("zero-shot"));
    }

    #[test]
    fn zeroshot_prob_average_needs_negative_encoder() {
        let graph = eval_graph(4);
        let (model, _) = pretrain(&graph, &tiny_cfg(0.0)).unwrap();
        let err = evaluate_zeroshot(&model, &graph, 3, 2, 1, true).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        // Without probability averaging it works.
        let out = evaluate_zeroshot(&model, &graph, 3, 2, 1, false).unwrap();
        assert_eq!(out.report.runs.len(), 2);
        assert!(out.predictions[0].iter().all(|p| p.p_neg.is_none()));
    }

    #[test]
    fn fewshot_end_to_end_is_deterministic() {
        let graph = eval_graph(5);
        let (model, _) = pretrain(&graph, &tiny_cfg(0.5)).unwrap();
        let a = evaluate_fewshot(&model, &graph, 3, 2, 2, 9).unwrap();
        let b = evaluate_fewshot(&model, &graph, 3, 2, 2, 9).unwrap();
        assert_eq!(a.report.acc_mean, b.report.acc_mean);
        assert_eq!(a.report.f1_mean, b.report.f1_mean);
        for (ra, rb) in a.predictions.iter().zip(&b.predictions) {
            for (pa, pb) in ra.iter().zip(rb) {
                assert_eq!(pa.predicted, pb.predicted);
                assert_eq!(pa.p, pb.p);
            }
        }
        // Sanity on report shape.
        assert_eq!(a.report.runs.len(), 2);
        assert!(a.report.acc_mean >= 0.0 && a.report.acc_mean <= 1.0);
    }

    #[test]
    fn zeroshot_prob_average_emits_p_neg() {
        let graph = eval_graph(6);
        let (model, _) = pretrain(&graph, &tiny_cfg(0.5)).unwrap();
        let out = evaluate_zeroshot(&model, &graph, 3, 1, 2, true).unwrap();
        for rec in &out.predictions[0] {
            let p_neg = rec.p_neg.as_ref().unwrap();
            assert_eq!(p_neg.len(), rec.p.len());
            assert!((rec.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((p_neg.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
