//! Whitespace word tokenizer with reserved PAD/EOS/UNK ids.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tokenizer {
    /// word -> id; ids dense in 0..vocab_size with 0..=2 reserved.
    pub vocab: HashMap<String, usize>,
    pub max_seq_len: usize,
}

impl Tokenizer {
    /// Build over a corpus: lowercase whitespace words with frequency at
    /// least `min_freq`, in first-appearance order.
    pub fn build(corpus: &[String], max_seq_len: usize, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for text in corpus {
            for word in text.split_whitespace() {
                let w = word.to_lowercase();
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        let mut vocab = HashMap::new();
        let mut next = UNK + 1;
        for w in order {
            if counts[&w] >= min_freq {
                vocab.insert(w, next);
                next += 1;
            }
        }
        Self { vocab, max_seq_len }
    }

    /// Total id space including the three reserved ids.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() + 3
    }

    /// Lowercased whitespace tokenization, OOV mapped to UNK, truncated to
    /// `max_seq_len - 1` and terminated with EOS.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids: Vec<usize> = text
            .split_whitespace()
            .take(self.max_seq_len - 1)
            .map(|w| {
                self.vocab
                    .get(&w.to_lowercase())
                    .copied()
                    .unwrap_or(UNK)
            })
            .collect();
        ids.push(EOS);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> Tokenizer {
        let corpus = vec![
            "alpha beta alpha".to_string(),
            "beta gamma beta".to_string(),
        ];
        Tokenizer::build(&corpus, 8, 2)
    }

    #[test]
    fn empty_text_is_just_eos() {
        assert_eq!(tok().encode(""), vec![EOS]);
    }

    #[test]
    fn truncation_keeps_length_and_terminal_eos() {
        let t = Tokenizer::build(&["w".to_string()], 128, 1);
        let long = vec!["w"; 200].join(" ");
        let ids = t.encode(&long);
        assert_eq!(ids.len(), 128);
        assert_eq!(*ids.last().unwrap(), EOS);
    }

    #[test]
    fn deterministic_and_oov_to_unk() {
        let t = tok();
        let a = t.encode("alpha zzz beta");
        let b = t.encode("alpha zzz beta");
        assert_eq!(a, b);
        assert_eq!(a[1], UNK);
        assert_ne!(a[0], UNK);
    }

    #[test]
    fn min_freq_filters_rare_words() {
        let t = tok();
        // "gamma" appears once, below min_freq 2.
        assert_eq!(t.encode("gamma")[0], UNK);
    }

    #[test]
    fn case_insensitive() {
        let t = tok();
        assert_eq!(t.encode("ALPHA"), t.encode("alpha"));
    }
}
