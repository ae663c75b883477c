//! Bounded FIFO store of detached text embeddings with exact top-K cosine
//! retrieval.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Result, TagclError};

#[derive(Debug, Clone)]
pub struct BankEntry {
    pub node_id: usize,
    pub embedding: Array1<f64>,
    pub insertion: u64,
}

#[derive(Debug, Clone)]
pub struct TextBank {
    capacity: usize,
    entries: VecDeque<BankEntry>,
    insertions: u64,
}

#[derive(Debug, Clone)]
pub struct RetrievalResult {
    /// (node_id, embedding, similarity), similarity descending; ties go to
    /// the most recent insertion.
    pub hits: Vec<(usize, Array1<f64>, f64)>,
    /// Set when fewer than K candidates were available.
    pub short_count: bool,
}

impl TextBank {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "bank capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::new(),
            insertions: 0,
        }
    }

    /// Rebuild a bank from checkpointed state; `entries` must be ordered
    /// oldest first with strictly increasing insertion counters.
    pub fn restore(capacity: usize, entries: Vec<BankEntry>, total_pushed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(TagclError::InvalidArgument(
                "bank capacity must be positive".into(),
            ));
        }
        if entries.len() > capacity {
            return Err(TagclError::Checkpoint(format!(
                "bank holds {} entries but capacity is {capacity}",
                entries.len()
            )));
        }
        for pair in entries.windows(2) {
            if pair[0].insertion >= pair[1].insertion {
                return Err(TagclError::Checkpoint(
                    "bank insertion counters must be strictly increasing".into(),
                ));
            }
        }
        if let Some(last) = entries.last() {
            if total_pushed <= last.insertion {
                return Err(TagclError::Checkpoint(
                    "bank push counter behind newest entry".into(),
                ));
            }
        }
        Ok(Self {
            capacity,
            entries: entries.into(),
            insertions: total_pushed,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_pushed(&self) -> u64 {
        self.insertions
    }

    pub fn entries(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter()
    }

    /// Append a batch, evicting oldest entries past capacity. Rows are
    /// copied; the caller keeps ownership of `embeddings`.
    pub fn push_batch(&mut self, ids: &[usize], embeddings: &Array2<f64>) -> Result<()> {
        if ids.len() != embeddings.nrows() {
            return Err(TagclError::ShapeMismatch(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                embeddings.nrows()
            )));
        }
        if let Some(front) = self.entries.front() {
            if front.embedding.len() != embeddings.ncols() {
                return Err(TagclError::ShapeMismatch(format!(
                    "bank dimension {} vs pushed {}",
                    front.embedding.len(),
                    embeddings.ncols()
                )));
            }
        }
        for (row, &id) in embeddings.rows().into_iter().zip(ids) {
            self.entries.push_back(BankEntry {
                node_id: id,
                embedding: row.to_owned(),
                insertion: self.insertions,
            });
            self.insertions += 1;
            if self.entries.len() > self.capacity {
                self.entries.pop_front();
            }
        }
        Ok(())
    }

    /// Exact top-K by cosine similarity among entries whose node id differs
    /// from `exclude_id`.
    pub fn query_topk(
        &self,
        query: ArrayView1<f64>,
        k: usize,
        exclude_id: Option<usize>,
    ) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(TagclError::InvalidArgument("K must be at least 1".into()));
        }
        let mut scored: Vec<(&BankEntry, f64)> = self
            .entries
            .iter()
            .filter(|e| Some(e.node_id) != exclude_id)
            .map(|e| {
                if e.embedding.len() != query.len() {
                    return Err(TagclError::ShapeMismatch(format!(
                        "query dimension {} vs bank {}",
                        query.len(),
                        e.embedding.len()
                    )));
                }
                Ok((e, e.embedding.dot(&query)))
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(b.0.insertion.cmp(&a.0.insertion))
        });
        let short_count = scored.len() < k;
        scored.truncate(k);
        Ok(RetrievalResult {
            hits: scored
                .into_iter()
                .map(|(e, s)| (e.node_id, e.embedding.clone(), s))
                .collect(),
            short_count,
        })
    }

    /// (fill level, capacity) pair plus a histogram of pairwise-to-query
    /// similarities against the mean embedding, for the `bank-stats`
    /// command.
    pub fn stats(&self, bins: usize) -> (usize, usize, Vec<usize>) {
        let mut hist = vec![0usize; bins];
        if let Some(first) = self.entries.front() {
            let d = first.embedding.len();
            let mut mean = Array1::<f64>::zeros(d);
            for e in &self.entries {
                mean += &e.embedding;
            }
            let norm = mean.dot(&mean).sqrt().max(1e-12);
            mean /= norm;
            for e in &self.entries {
                let s = e.embedding.dot(&mean).clamp(-1.0, 1.0);
                let bin = (((s + 1.0) / 2.0) * bins as f64).min(bins as f64 - 1.0) as usize;
                hist[bin] += 1;
            }
        }
        (self.entries.len(), self.capacity, hist)
    }
}
