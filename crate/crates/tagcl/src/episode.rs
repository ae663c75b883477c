//! C-way K-shot episode sampling for few/zero-shot evaluation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TagclError};
use crate::graph::TextAttributedGraph;

/// One evaluation task: `way_count` classes, `shot_count` labeled support
/// nodes per class, plus a disjoint query set.
#[derive(Debug, Clone)]
pub struct Episode {
    pub way_count: usize,
    pub shot_count: usize,
    pub class_subset: Vec<usize>,
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

/// Sample an episode; deterministic for a fixed seed. `shot_count = 0`
/// yields an empty support set (the zero-shot case).
pub fn sample_episode(
    graph: &TextAttributedGraph,
    way_count: usize,
    shot_count: usize,
    query_per_class: usize,
    seed: u64,
) -> Result<Episode> {
    if way_count < 2 {
        return Err(TagclError::InvalidArgument(
            "way_count must be at least 2".into(),
        ));
    }
    if query_per_class == 0 {
        return Err(TagclError::InvalidArgument(
            "query_per_class must be positive".into(),
        ));
    }
    let needed = shot_count + query_per_class;
    let by_class = graph.nodes_by_class();
    let eligible: Vec<usize> = (0..graph.class_count())
        .filter(|&c| by_class[c].len() >= needed)
        .collect();
    if eligible.len() < way_count {
        return Err(TagclError::InvalidArgument(format!(
            "need {way_count} classes with at least {needed} nodes, found {}",
            eligible.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = eligible;
    classes.shuffle(&mut rng);
    classes.truncate(way_count);
    classes.sort_unstable();

    let mut support = Vec::with_capacity(way_count * shot_count);
    let mut query = Vec::with_capacity(way_count * query_per_class);
    for &c in &classes {
        let mut nodes = by_class[c].clone();
        nodes.shuffle(&mut rng);
        for &n in &nodes[..shot_count] {
            support.push((n, c));
        }
        for &n in &nodes[shot_count..shot_count + query_per_class] {
            query.push((n, c));
        }
    }
    Ok(Episode {
        way_count,
        shot_count,
        class_subset: classes,
        support,
        query,
    })
}
