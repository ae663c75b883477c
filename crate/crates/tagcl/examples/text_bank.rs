//! FIFO text bank: push embeddings, evict the oldest past capacity, and
//! retrieve exact top-K by cosine similarity with self-exclusion.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tagcl::bank::TextBank;

fn unit_rows(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m: Array2<f64> = Array2::from_shape_fn((rows, dim), |_| rng.gen_range(-1.0..1.0));
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|x| x / norm);
    }
    m
}

fn main() -> tagcl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bank = TextBank::new(16);

    // Push 24 embeddings into a capacity-16 bank: the first 8 get evicted.
    for batch in 0..3 {
        let embs = unit_rows(8, 4, &mut rng);
        let ids: Vec<usize> = (batch * 8..batch * 8 + 8).collect();
        bank.push_batch(&ids, &embs)?;
        println!(
            "after batch {batch}: len={} / capacity={} (total pushed {})",
            bank.len(),
            bank.capacity(),
            bank.total_pushed()
        );
    }
    let oldest = bank.entries().next().unwrap().node_id;
    println!("oldest surviving node id: {oldest} (ids 0..8 were evicted)");

    // Retrieve the 3 nearest entries to a fresh query.
    let query = unit_rows(1, 4, &mut rng);
    let result = bank.query_topk(query.row(0), 3, None)?;
    println!("top-3 for a random query:");
    for (node_id, _emb, score) in &result.hits {
        println!("  node {node_id}  cosine {score:+.4}");
    }

    // Self-exclusion: asking for neighbors of node 12 never returns node 12.
    let twelve = bank
        .entries()
        .find(|e| e.node_id == 12)
        .unwrap()
        .embedding
        .clone();
    let result = bank.query_topk(twelve.view(), 3, Some(12))?;
    println!("top-3 for node 12's own embedding, excluding node 12:");
    for (node_id, _emb, score) in &result.hits {
        assert_ne!(*node_id, 12);
        println!("  node {node_id}  cosine {score:+.4}");
    }
    Ok(())
}
