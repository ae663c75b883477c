//! Text-attributed graph data model, dataset I/O, and adjacency
//! normalization.
//!
//! Dataset directory layout:
//! - `nodes.jsonl`: one `{"id", "text", "label"}` object per line
//! - `edges.tsv`: two tab-separated node ids per line
//! - `classes.json`: JSON array of class-name strings

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{Result, TagclError};

/// A graph whose every node carries a text and a label; node ids are dense
/// integers in insertion order, original string ids kept in `string_ids`.
#[derive(Debug, Clone)]
pub struct TextAttributedGraph {
    pub edges: Vec<(usize, usize)>,
    pub texts: Vec<String>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub string_ids: Vec<String>,
}

impl TextAttributedGraph {
    pub fn node_count(&self) -> usize {
        self.texts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn new(
        string_ids: Vec<String>,
        texts: Vec<String>,
        labels: Vec<usize>,
        edges: Vec<(usize, usize)>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let g = Self {
            edges,
            texts,
            labels,
            class_names,
            string_ids,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let n = self.texts.len();
        if n == 0 {
            return Err(TagclError::Dataset("empty node set".into()));
        }
        if self.labels.len() != n || self.string_ids.len() != n {
            return Err(TagclError::Dataset(
                "node field lengths disagree".into(),
            ));
        }
        for &l in &self.labels {
            if l >= self.class_names.len() {
                return Err(TagclError::Dataset(format!(
                    "label id {l} outside class catalog of size {}",
                    self.class_names.len()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in &self.edges {
            if u >= n || v >= n {
                return Err(TagclError::Dataset(format!(
                    "edge ({u},{v}) references unknown node (N={n})"
                )));
            }
            if u == v {
                return Err(TagclError::Dataset(format!("self-loop on node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(TagclError::Dataset(format!(
                    "duplicate edge ({u},{v})"
                )));
            }
        }
        Ok(())
    }

    /// Node ids grouped by class.
    pub fn nodes_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    text: String,
    label: String,
}

/// Load a dataset directory (`nodes.jsonl`, `edges.tsv`, `classes.json`).
pub fn load_dataset(dir: &Path) -> Result<TextAttributedGraph> {
    let classes_path = dir.join("classes.json");
    let nodes_path = dir.join("nodes.jsonl");
    let edges_path = dir.join("edges.tsv");
    for p in [&classes_path, &nodes_path, &edges_path] {
        if !p.exists() {
            return Err(TagclError::Dataset(format!("missing file {}", p.display())));
        }
    }

    let class_names: Vec<String> = serde_json::from_str(&fs::read_to_string(&classes_path)?)?;
    let class_index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    if class_index.len() != class_names.len() {
        return Err(TagclError::Dataset("duplicate class name".into()));
    }

    let mut string_ids = Vec::new();
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    let mut id_index: HashMap<String, usize> = HashMap::new();
    let reader = BufReader::new(fs::File::open(&nodes_path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeRecord = serde_json::from_str(&line).map_err(|e| {
            TagclError::Dataset(format!("nodes.jsonl line {}: {e}", lineno + 1))
        })?;
        let label = *class_index.get(rec.label.as_str()).ok_or_else(|| {
            TagclError::Dataset(format!(
                "nodes.jsonl line {}: label {:?} not in classes.json",
                lineno + 1,
                rec.label
            ))
        })?;
        if id_index.insert(rec.id.clone(), string_ids.len()).is_some() {
            return Err(TagclError::Dataset(format!("duplicate node id {:?}", rec.id)));
        }
        string_ids.push(rec.id);
        texts.push(rec.text);
        labels.push(label);
    }
    if string_ids.is_empty() {
        return Err(TagclError::Dataset("empty node set".into()));
    }

    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let reader = BufReader::new(fs::File::open(&edges_path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(TagclError::Dataset(format!(
                    "edges.tsv line {}: expected two tab-separated ids",
                    lineno + 1
                )))
            }
        };
        let lookup = |s: &str| -> Result<usize> {
            id_index.get(s).copied().ok_or_else(|| {
                TagclError::Dataset(format!(
                    "edges.tsv line {}: unknown node id {s:?}",
                    lineno + 1
                ))
            })
        };
        let (u, v) = (lookup(a)?, lookup(b)?);
        if u == v {
            return Err(TagclError::Dataset(format!(
                "edges.tsv line {}: self-loop on {a:?}",
                lineno + 1
            )));
        }
        if seen.insert((u.min(v), u.max(v))) {
            edges.push((u, v));
        }
    }

    TextAttributedGraph::new(string_ids, texts, labels, edges, class_names)
}

/// Write a graph back out in the dataset directory format.
pub fn save_dataset(graph: &TextAttributedGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut nodes = String::new();
    for i in 0..graph.node_count() {
        let rec = serde_json::json!({
            "id": graph.string_ids[i],
            "text": graph.texts[i],
            "label": graph.class_names[graph.labels[i]],
        });
        nodes.push_str(&rec.to_string());
        nodes.push('\n');
    }
    fs::write(dir.join("nodes.jsonl"), nodes)?;
    let mut edges = String::new();
    for &(u, v) in &graph.edges {
        edges.push_str(&format!(
            "{}\t{}\n",
            graph.string_ids[u], graph.string_ids[v]
        ));
    }
    fs::write(dir.join("edges.tsv"), edges)?;
    fs::write(
        dir.join("classes.json"),
        serde_json::to_string_pretty(&graph.class_names)?,
    )?;
    Ok(())
}

/// Symmetric normalization with self-loops: D^{-1/2} (A + I) D^{-1/2}.
pub fn normalize_adjacency(graph: &TextAttributedGraph) -> Array2<f64> {
    let n = graph.node_count();
    let mut a = Array2::<f64>::eye(n);
    for &(u, v) in &graph.edges {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let deg_inv_sqrt: Vec<f64> = (0..n)
        .map(|i| a.row(i).sum().sqrt().recip())
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= deg_inv_sqrt[i] * deg_inv_sqrt[j];
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_dataset(dir: &Path, nodes: &str, edges: &str, classes: &str) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join("nodes.jsonl"), nodes).unwrap();
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("classes.json"), classes).unwrap();
    }

    #[test]
    fn loads_small_dataset() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            concat!(
                r#"{"id":"a","text":"alpha beta","label":"x"}"#,
                "\n",
                r#"{"id":"b","text":"beta gamma","label":"y"}"#,
                "\n",
                r#"{"id":"c","text":"gamma alpha","label":"x"}"#,
                "\n"
            ),
            "a\tb\nb\tc\n",
            r#"["x","y"]"#,
        );
        let g = load_dataset(tmp.path()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.class_count(), 2);
        assert_eq!(g.labels, vec![0, 1, 0]);
    }

    #[test]
    fn empty_node_file_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), "", "", r#"["x"]"#);
        let err = load_dataset(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("empty node set"), "{err}");
    }

    #[test]
    fn rejects_duplicate_node_and_bad_edges_and_labels() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            concat!(
                r#"{"id":"a","text":"t","label":"x"}"#,
                "\n",
                r#"{"id":"a","text":"t","label":"x"}"#,
                "\n"
            ),
            "",
            r#"["x"]"#,
        );
        assert!(load_dataset(tmp.path()).is_err());

        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            concat!(r#"{"id":"a","text":"t","label":"x"}"#, "\n"),
            "a\tmissing\n",
            r#"["x"]"#,
        );
        assert!(load_dataset(tmp.path()).is_err());

        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            concat!(r#"{"id":"a","text":"t","label":"nope"}"#, "\n"),
            "",
            r#"["x"]"#,
        );
        assert!(load_dataset(tmp.path()).is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(load_dataset(tmp.path()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let g = TextAttributedGraph::new(
            vec!["a".into(), "b".into()],
            vec!["one two".into(), "three".into()],
            vec![0, 1],
            vec![(0, 1)],
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        save_dataset(&g, tmp.path()).unwrap();
        let g2 = load_dataset(tmp.path()).unwrap();
        assert_eq!(g2.node_count(), 2);
        assert_eq!(g2.edges, g.edges);
        assert_eq!(g2.texts, g.texts);
    }

    #[test]
    fn adjacency_two_nodes_one_edge() {
        let g = TextAttributedGraph::new(
            vec!["a".into(), "b".into()],
            vec!["t".into(), "t".into()],
            vec![0, 0],
            vec![(0, 1)],
            vec!["x".into()],
        )
        .unwrap();
        let a = normalize_adjacency(&g);
        for &v in a.iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn adjacency_isolated_node() {
        let g = TextAttributedGraph::new(
            vec!["a".into()],
            vec!["t".into()],
            vec![0],
            vec![],
            vec!["x".into()],
        )
        .unwrap();
        let a = normalize_adjacency(&g);
        assert_eq!(a[(0, 0)], 1.0);
    }

    #[test]
    fn adjacency_triangle() {
        let g = TextAttributedGraph::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["t".into(); 3],
            vec![0, 0, 0],
            vec![(0, 1), (1, 2), (0, 2)],
            vec!["x".into()],
        )
        .unwrap();
        let a = normalize_adjacency(&g);
        for &v in a.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adjacency_symmetric_and_regular_rows_sum_to_one() {
        // 4-cycle is 2-regular; with self-loops each row sums to 1.
        let g = TextAttributedGraph::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec!["t".into(); 4],
            vec![0; 4],
            vec![(0, 1), (1, 2), (2, 3), (3, 0)],
            vec!["x".into()],
        )
        .unwrap();
        let a = normalize_adjacency(&g);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
            assert!((a.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }
}
