//! Save a trained model to disk and load it back bit-exactly.
//!
//! A checkpoint directory holds `manifest.json` (config, tokenizer, tensor
//! and bank metadata, temperature) and `params.bin` (little-endian f64
//! tensors plus the bank embeddings). Loading validates shapes and byte
//! lengths; `load_checkpoint_checked` additionally compares the stored
//! config against an expected one and names the first diverging field.

use tagcl::checkpoint::{load_checkpoint, load_checkpoint_checked, save_checkpoint};
use tagcl::encoders::EncoderConfig;
use tagcl::synthetic::{generate_synthetic, SyntheticSpec};
use tagcl::train::{pretrain, TrainConfig};

fn main() -> tagcl::Result<()> {
    let graph = generate_synthetic(&SyntheticSpec {
        classes: 3,
        nodes_per_class: 25,
        p_intra: 0.15,
        p_inter: 0.02,
        vocab_size: 40,
        tokens_per_text: 6,
        class_token_overlap: 0.2,
        seed: 17,
    })?;
    let cfg = TrainConfig {
        lr: 2e-3,
        epochs: 2,
        batch_size: 16,
        bank_capacity: 64,
        neg_prompt_len: 4,
        alpha: 0.5,
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
    };
    let (model, _) = pretrain(&graph, &cfg)?;

    let dir = std::env::temp_dir().join("tagcl-checkpoint-example");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(tagcl::TagclError::from)?;
    }
    save_checkpoint(&model, &dir)?;
    println!("saved checkpoint to {}", dir.display());
    for entry in std::fs::read_dir(&dir).map_err(tagcl::TagclError::from)? {
        let entry = entry.map_err(tagcl::TagclError::from)?;
        println!("  {} ({} bytes)", entry.file_name().to_string_lossy(), entry.metadata().unwrap().len());
    }

    let restored = load_checkpoint(&dir)?;
    assert_eq!(model.tau(), restored.tau());
    assert_eq!(model.bank.len(), restored.bank.len());
    assert_eq!(model.steps_done, restored.steps_done);
    println!(
        "restored: tau {:.4}, bank {}/{}, {} steps done",
        restored.tau(),
        restored.bank.len(),
        restored.bank.capacity(),
        restored.steps_done
    );

    // Config validation names the first field that disagrees.
    let mut wrong = cfg.clone();
    wrong.margin = 2.0;
    match load_checkpoint_checked(&dir, &wrong) {
        Err(e) => println!("mismatched config rejected: {e}"),
        Ok(_) => unreachable!("divergent config must be rejected"),
    }
    load_checkpoint_checked(&dir, &cfg)?;
    println!("matching config accepted");
    Ok(())
}
