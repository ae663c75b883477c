//! Stochastic-block-model synthetic corpus generation.
//!
//! Nodes get class-conditional token distributions: the word pool is split
//! into one core per class plus a shared pool, and `class_token_overlap`
//! controls how often a token is drawn from the shared pool instead of the
//! class core. The class name itself is the first word of each core, so
//! class descriptions built from templates stay in-vocabulary.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TagclError};
use crate::graph::TextAttributedGraph;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub vocab_size: usize,
    pub tokens_per_text: usize,
    pub class_token_overlap: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(TagclError::InvalidArgument("need at least 2 classes".into()));
        }
        if self.nodes_per_class == 0 || self.tokens_per_text == 0 {
            return Err(TagclError::InvalidArgument(
                "nodes_per_class and tokens_per_text must be positive".into(),
            ));
        }
        if self.vocab_size < self.classes {
            return Err(TagclError::InvalidArgument(
                "vocab_size smaller than class count: cannot build disjoint class token cores"
                    .into(),
            ));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(TagclError::InvalidArgument(format!(
                    "{name} must be in [0,1], got {p}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.class_token_overlap) {
            return Err(TagclError::InvalidArgument(format!(
                "class_token_overlap must be in [0,1], got {}",
                self.class_token_overlap
            )));
        }
        Ok(())
    }
}

/// Word pools for a spec: per-class cores and the shared pool.
pub fn word_pools(spec: &SyntheticSpec) -> (Vec<Vec<String>>, Vec<String>) {
    let core_size = (spec.vocab_size / (spec.classes + 1)).max(1);
    let shared_size = spec.vocab_size.saturating_sub(core_size * spec.classes);
    let cores: Vec<Vec<String>> = (0..spec.classes)
        .map(|c| {
            (0..core_size)
                .map(|k| {
                    if k == 0 {
                        format!("topic{c}")
                    } else {
                        format!("c{c}w{k}")
                    }
                })
                .collect()
        })
        .collect();
    let shared: Vec<String> = (0..shared_size).map(|k| format!("shared{k}")).collect();
    (cores, shared)
}

/// Build a stochastic-block-model graph with class-conditional texts.
/// Deterministic per seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TextAttributedGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (cores, shared) = word_pools(spec);

    let n = spec.classes * spec.nodes_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_class).collect();

    let mut texts = Vec::with_capacity(n);
    for &label in &labels {
        let core = &cores[label];
        let mut words = Vec::with_capacity(spec.tokens_per_text);
        for _ in 0..spec.tokens_per_text {
            let from_shared =
                !shared.is_empty() && rng.gen::<f64>() < spec.class_token_overlap;
            let w = if from_shared {
                &shared[rng.gen_range(0..shared.len())]
            } else {
                &core[rng.gen_range(0..core.len())]
            };
            words.push(w.clone());
        }
        texts.push(words.join(" "));
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                spec.p_intra
            } else {
                spec.p_inter
            };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let class_names: Vec<String> = (0..spec.classes).map(|c| format!("topic{c}")).collect();
    let string_ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    TextAttributedGraph::new(string_ids, texts, labels, edges, class_names)
}
