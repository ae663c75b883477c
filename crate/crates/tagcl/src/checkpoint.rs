//! Checkpoint directory format: `manifest.json` describing the run and
//! every tensor, plus `params.bin` holding all tensor data as
//! little-endian f64 in manifest order. Round-trips are bit-exact.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::bank::BankEntry;
use crate::bank::TextBank;
use crate::encoders::{GraphEncoderParams, NegativeTextEncoderParams, TextEncoderParams};
use crate::error::{Result, TagclError};
use crate::tokenizer::Tokenizer;
use crate::train::{config_hash, Model, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankEntryMeta {
    pub node_id: usize,
    pub insertion: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: TrainConfig,
    pub config_hash: String,
    pub tokenizer: Tokenizer,
    pub feature_dim: usize,
    pub steps_done: u64,
    pub has_negative_encoder: bool,
    pub neg_prompt_len: usize,
    pub log_tau: f64,
    pub tensors: Vec<TensorMeta>,
    /// Bank metadata, oldest first; embeddings live in the "bank" tensor.
    pub bank_entries: Vec<BankEntryMeta>,
    pub bank_total_pushed: u64,
}

/// The tensors of a model in their canonical serialization order.
fn tensor_list(model: &Model) -> Vec<(String, Array2<f64>)> {
    let mut out = Vec::new();
    for (name, value) in model.graph_enc.params.iter() {
        out.push((format!("g.{name}"), value.clone()));
    }
    for (name, value) in model.text_enc.params.iter() {
        out.push((format!("t.{name}"), value.clone()));
    }
    if let Some(neg) = &model.neg_enc {
        for (name, value) in neg.enc.params.iter() {
            out.push((format!("n.{name}"), value.clone()));
        }
    }
    let d = model.cfg.encoder.embed_dim;
    let mut bank = Array2::<f64>::zeros((model.bank.len(), d));
    for (i, entry) in model.bank.entries().enumerate() {
        bank.row_mut(i).assign(&entry.embedding);
    }
    out.push(("bank".into(), bank));
    out
}

pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tensors = tensor_list(model);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.cfg.clone(),
        config_hash: config_hash(&model.cfg),
        tokenizer: model.tokenizer.clone(),
        feature_dim: model.graph_enc.feature_dim,
        steps_done: model.steps_done,
        has_negative_encoder: model.neg_enc.is_some(),
        neg_prompt_len: model.neg_enc.as_ref().map(|n| n.prompt_len).unwrap_or(0),
        log_tau: model.log_tau,
        tensors: tensors
            .iter()
            .map(|(name, v)| TensorMeta {
                name: name.clone(),
                rows: v.nrows(),
                cols: v.ncols(),
            })
            .collect(),
        bank_entries: model
            .bank
            .entries()
            .map(|e| BankEntryMeta {
                node_id: e.node_id,
                insertion: e.insertion,
            })
            .collect(),
        bank_total_pushed: model.bank.total_pushed(),
    };

    let mut bin = BufWriter::new(fs::File::create(dir.join(PARAMS_FILE))?);
    for (_, v) in &tensors {
        for &x in v.iter() {
            bin.write_f64::<LittleEndian>(x)?;
        }
    }
    bin.flush()?;

    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        TagclError::Checkpoint(format!("cannot read {}: {e}", path.display()))
    })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| TagclError::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TagclError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let manifest = read_manifest(dir)?;
    let expected: usize = manifest.tensors.iter().map(|t| t.rows * t.cols).sum();
    let bin_path = dir.join(PARAMS_FILE);
    let meta = fs::metadata(&bin_path).map_err(|e| {
        TagclError::Checkpoint(format!("cannot stat {}: {e}", bin_path.display()))
    })?;
    if meta.len() != (expected * 8) as u64 {
        return Err(TagclError::Checkpoint(format!(
            "{} holds {} bytes, manifest expects {}",
            bin_path.display(),
            meta.len(),
            expected * 8
        )));
    }
    let mut reader = BufReader::new(fs::File::open(&bin_path)?);
    let mut tensors: Vec<(String, Array2<f64>)> = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let mut data = vec![0.0f64; t.rows * t.cols];
        reader.read_f64_into::<LittleEndian>(&mut data)?;
        let arr = Array2::from_shape_vec((t.rows, t.cols), data)
            .map_err(|e| TagclError::Checkpoint(format!("tensor {}: {e}", t.name)))?;
        tensors.push((t.name.clone(), arr));
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(TagclError::Checkpoint("trailing bytes in params.bin".into()));
    }

    let cfg = manifest.config.clone();
    let mut graph_enc =
        GraphEncoderParams::init(&cfg.encoder, manifest.feature_dim, 0);
    let mut text_enc =
        TextEncoderParams::init(&cfg.encoder, manifest.tokenizer.vocab_size(), 0);
    let mut neg_enc = if manifest.has_negative_encoder {
        Some(NegativeTextEncoderParams::from_text_encoder(
            &text_enc,
            manifest.neg_prompt_len,
            0,
        ))
    } else {
        None
    };

    let mut bank_rows: Option<Array2<f64>> = None;
    for (name, value) in tensors {
        if let Some(rest) = name.strip_prefix("g.") {
            let slot = graph_enc.params.get_mut(rest).ok_or_else(|| {
                TagclError::Checkpoint(format!("unknown graph tensor {rest}"))
            })?;
            if slot.raw_dim() != value.raw_dim() {
                return Err(TagclError::Checkpoint(format!(
                    "graph tensor {rest} has shape {:?}, expected {:?}",
                    value.raw_dim(),
                    slot.raw_dim()
                )));
            }
            *slot = value;
        } else if let Some(rest) = name.strip_prefix("t.") {
            let slot = text_enc.params.get_mut(rest).ok_or_else(|| {
                TagclError::Checkpoint(format!("unknown text tensor {rest}"))
            })?;
            if slot.raw_dim() != value.raw_dim() {
                return Err(TagclError::Checkpoint(format!(
                    "text tensor {rest} has shape {:?}, expected {:?}",
                    value.raw_dim(),
                    slot.raw_dim()
                )));
            }
            *slot = value;
        } else if let Some(rest) = name.strip_prefix("n.") {
            let neg = neg_enc.as_mut().ok_or_else(|| {
                TagclError::Checkpoint(
                    "negative tensors present but manifest says no negative encoder".into(),
                )
            })?;
            let slot = neg.enc.params.get_mut(rest).ok_or_else(|| {
                TagclError::Checkpoint(format!("unknown negative tensor {rest}"))
            })?;
            if slot.raw_dim() != value.raw_dim() {
                return Err(TagclError::Checkpoint(format!(
                    "negative tensor {rest} has shape {:?}, expected {:?}",
                    value.raw_dim(),
                    slot.raw_dim()
                )));
            }
            *slot = value;
        } else if name == "bank" {
            bank_rows = Some(value);
        } else {
            return Err(TagclError::Checkpoint(format!("unknown tensor {name}")));
        }
    }

    let bank_rows = bank_rows
        .ok_or_else(|| TagclError::Checkpoint("manifest lists no bank tensor".into()))?;
    if bank_rows.nrows() != manifest.bank_entries.len() {
        return Err(TagclError::Checkpoint(format!(
            "bank tensor has {} rows, manifest lists {} entries",
            bank_rows.nrows(),
            manifest.bank_entries.len()
        )));
    }
    let entries: Vec<BankEntry> = manifest
        .bank_entries
        .iter()
        .zip(bank_rows.rows())
        .map(|(m, row)| BankEntry {
            node_id: m.node_id,
            embedding: Array1::from(row.to_vec()),
            insertion: m.insertion,
        })
        .collect();
    let bank = TextBank::restore(cfg.bank_capacity, entries, manifest.bank_total_pushed)?;

    Ok(Model {
        cfg,
        tokenizer: manifest.tokenizer,
        graph_enc,
        text_enc,
        neg_enc,
        log_tau: manifest.log_tau,
        bank,
        steps_done: manifest.steps_done,
    })
}

/// Load and verify the checkpoint was produced by `expected`; names the
/// first divergent config field on mismatch.
pub fn load_checkpoint_checked(dir: &Path, expected: &TrainConfig) -> Result<Model> {
    let manifest = read_manifest(dir)?;
    if config_hash(&manifest.config) != config_hash(expected) {
        let a = serde_json::to_value(&manifest.config)?;
        let b = serde_json::to_value(expected)?;
        let field = diverging_field(&a, &b).unwrap_or_else(|| "<unknown>".into());
        return Err(TagclError::Checkpoint(format!(
            "config mismatch at field `{field}`"
        )));
    }
    load_checkpoint(dir)
}

fn diverging_field(a: &serde_json::Value, b: &serde_json::Value) -> Option<String> {
    match (a, b) {
        (serde_json::Value::Object(ma), serde_json::Value::Object(mb)) => {
            for (k, va) in ma {
                match mb.get(k) {
                    Some(vb) if va == vb => {}
                    Some(vb) => {
                        return Some(match diverging_field(va, vb) {
                            Some(inner) => format!("{k}.{inner}"),
                            None => k.clone(),
                        })
                    }
                    None => return Some(k.clone()),
                }
            }
            mb.keys().find(|k| !ma.contains_key(*k)).cloned()
        }
        _ if a != b => None,
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;
    use crate::synthetic::{generate_synthetic, SyntheticSpec};
    use crate::train::pretrain;

    fn trained_model(alpha: f64) -> Model {
        let graph = generate_synthetic(&SyntheticSpec {
            classes: 2,
            nodes_per_class: 10,
            p_intra: 0.3,
            p_inter: 0.05,
            vocab_size: 20,
            tokens_per_text: 5,
            class_token_overlap: 0.2,
            seed: 11,
        })
        .unwrap();
        let cfg = TrainConfig {
            lr: 1e-3,
            epochs: 1,
            batch_size: 10,
            alpha,
            bank_capacity: 16,
            neg_prompt_len: 3,
            seed: 12,
            encoder: EncoderConfig {
                gcn_layers: 1,
                gcn_hidden: 8,
                embed_dim: 8,
                token_dim: 8,
                blocks: 1,
                heads: 2,
                ff_dim: 16,
                max_seq_len: 10,
                mean_pooling: false,
            },
            ..TrainConfig::default()
        };
        pretrain(&graph, &cfg).unwrap().0
    }

    fn assert_models_bit_equal(a: &Model, b: &Model) {
        assert_eq!(a.log_tau.to_bits(), b.log_tau.to_bits());
        assert_eq!(a.steps_done, b.steps_done);
        for ((na, va), (nb, vb)) in a.graph_enc.params.iter().zip(b.graph_enc.params.iter()) {
            assert_eq!(na, nb);
            assert!(va.iter().zip(vb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for ((na, va), (nb, vb)) in a.text_enc.params.iter().zip(b.text_enc.params.iter()) {
            assert_eq!(na, nb);
            assert!(va.iter().zip(vb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(a.neg_enc.is_some(), b.neg_enc.is_some());
        if let (Some(x), Some(y)) = (&a.neg_enc, &b.neg_enc) {
            for ((na, va), (nb, vb)) in x.enc.params.iter().zip(y.enc.params.iter()) {
                assert_eq!(na, nb);
                assert!(va.iter().zip(vb.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            }
        }
        assert_eq!(a.bank.len(), b.bank.len());
        assert_eq!(a.bank.total_pushed(), b.bank.total_pushed());
        for (ea, eb) in a.bank.entries().zip(b.bank.entries()) {
            assert_eq!(ea.node_id, eb.node_id);
            assert_eq!(ea.insertion, eb.insertion);
            assert!(ea
                .embedding
                .iter()
                .zip(eb.embedding.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for alpha in [0.0, 0.5] {
            let model = trained_model(alpha);
            let dir = tempfile::tempdir().unwrap();
            save_checkpoint(&model, dir.path()).unwrap();
            let loaded = load_checkpoint(dir.path()).unwrap();
            assert_models_bit_equal(&model, &loaded);
        }
    }

    #[test]
    fn truncated_params_is_a_clear_error() {
        let model = trained_model(0.0);
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let bin = dir.path().join(PARAMS_FILE);
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 16]).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(err, TagclError::Checkpoint(_)), "{err}");
        assert!(err.to_string().contains("bytes"), "{err}");
    }

    #[test]
    fn config_mismatch_names_the_field() {
        let model = trained_model(0.0);
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let mut other = model.cfg.clone();
        other.margin = 2.5;
        let err = load_checkpoint_checked(dir.path(), &other).unwrap_err();
        assert!(err.to_string().contains("margin"), "{err}");
        // The matching config loads fine.
        load_checkpoint_checked(dir.path(), &model.cfg).unwrap();
    }

    #[test]
    fn missing_manifest_is_a_checkpoint_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(err, TagclError::Checkpoint(_)));
    }
}
