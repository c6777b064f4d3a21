use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::permutation::Permutation;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

pub const DATASET_FORMAT: &str = "equilens-graphs/1";

/// Padded categorical graph. Labels are stored as category indices; the
/// last node category is "not a node" and the last edge category is
/// "not an edge".
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    d_a: usize,
    d_e: usize,
    node_labels: Vec<usize>,
    /// Row-major `n x n`.
    edge_labels: Vec<usize>,
    pub props: BTreeMap<String, f64>,
}

impl Graph {
    pub fn new(
        d_a: usize,
        d_e: usize,
        node_labels: Vec<usize>,
        edge_labels: Vec<usize>,
        props: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let n = node_labels.len();
        check_dim("graph edge labels", n * n, edge_labels.len())?;
        if d_a < 2 || d_e < 2 {
            return Err(Error::Input("need at least one real and one padding category".into()));
        }
        if let Some(&bad) = node_labels.iter().find(|&&c| c >= d_a) {
            return Err(Error::Input(format!("node category {bad} out of range 0..{d_a}")));
        }
        if let Some(&bad) = edge_labels.iter().find(|&&c| c >= d_e) {
            return Err(Error::Input(format!("edge category {bad} out of range 0..{d_e}")));
        }
        for i in 0..n {
            for j in 0..n {
                if edge_labels[i * n + j] != edge_labels[j * n + i] {
                    return Err(Error::Input(format!("edge labels not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            n,
            d_a,
            d_e,
            node_labels,
            edge_labels,
            props,
        })
    }

    /// Graph of `n` padding slots.
    pub fn empty(n: usize, d_a: usize, d_e: usize) -> Self {
        Self {
            n,
            d_a,
            d_e,
            node_labels: vec![d_a - 1; n],
            edge_labels: vec![d_e - 1; n * n],
            props: BTreeMap::new(),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d_a(&self) -> usize {
        self.d_a
    }

    #[inline]
    pub fn d_e(&self) -> usize {
        self.d_e
    }

    #[inline]
    pub fn node_pad(&self) -> usize {
        self.d_a - 1
    }

    #[inline]
    pub fn edge_pad(&self) -> usize {
        self.d_e - 1
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn edge_labels(&self) -> &[usize] {
        &self.edge_labels
    }

    #[inline]
    pub fn node(&self, i: usize) -> usize {
        self.node_labels[i]
    }

    #[inline]
    pub fn edge(&self, i: usize, j: usize) -> usize {
        self.edge_labels[i * self.n + j]
    }

    pub fn set_node(&mut self, i: usize, c: usize) {
        assert!(c < self.d_a);
        self.node_labels[i] = c;
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_edge(&mut self, i: usize, j: usize, c: usize) {
        assert!(c < self.d_e);
        self.edge_labels[i * self.n + j] = c;
        self.edge_labels[j * self.n + i] = c;
    }

    /// Number of non-padding edges counted once per unordered pair.
    pub fn edge_count(&self) -> usize {
        let pad = self.edge_pad();
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.edge(i, j) != pad)
            .count()
    }

    pub fn real_node_count(&self) -> usize {
        self.node_labels.iter().filter(|&&c| c != self.node_pad()).count()
    }

    /// `n x d_A` one-hot node features, node-major.
    pub fn node_onehot<T: Scalar>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.d_a];
        for (i, &c) in self.node_labels.iter().enumerate() {
            out[i * self.d_a + c] = T::one();
        }
        out
    }

    /// `n x n x d_E` one-hot edge features.
    pub fn edge_onehot<T: Scalar>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.n * self.d_e];
        for (ij, &c) in self.edge_labels.iter().enumerate() {
            out[ij * self.d_e + c] = T::one();
        }
        out
    }

    /// `(P V, P E Pᵀ)`; properties unchanged.
    pub fn permuted(&self, p: &Permutation) -> Result<Self> {
        check_dim("graph action", self.n, p.len())?;
        Ok(Self {
            n: self.n,
            d_a: self.d_a,
            d_e: self.d_e,
            node_labels: p.apply(&self.node_labels)?,
            edge_labels: p.conjugate(&self.edge_labels, 1)?,
            props: self.props.clone(),
        })
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.d_a == other.d_a && self.d_e == other.d_e
    }

    pub fn to_record(&self) -> GraphRecord {
        GraphRecord {
            n: self.n,
            node_labels: self.node_labels.clone(),
            edge_labels: self.edge_labels.chunks(self.n.max(1)).map(<[usize]>::to_vec).collect(),
            props: self.props.clone(),
        }
    }
}

/// Node permutation acting on a graph.
pub fn act_on_graph(p: &Permutation, g: &Graph) -> Result<Graph> {
    g.permuted(p)
}

/// One graph as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub n: usize,
    pub node_labels: Vec<usize>,
    pub edge_labels: Vec<Vec<usize>>,
    #[serde(default)]
    pub props: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub n: usize,
    pub d_a: usize,
    pub d_e: usize,
}

/// Graph dataset file: a header declaring the category counts followed by
/// the graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    pub header: DatasetHeader,
    pub graphs: Vec<GraphRecord>,
}

impl GraphDataset {
    pub fn from_graphs(graphs: &[Graph]) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::Input("cannot store an empty dataset".into()))?;
        if let Some(i) = graphs.iter().position(|g| !g.same_shape(first)) {
            return Err(Error::Input(format!("graph {i} has a different shape than graph 0")));
        }
        Ok(Self {
            header: DatasetHeader {
                format: DATASET_FORMAT.into(),
                n: first.n,
                d_a: first.d_a,
                d_e: first.d_e,
            },
            graphs: graphs.iter().map(Graph::to_record).collect(),
        })
    }

    /// Validates every record against the header.
    pub fn to_graphs(&self) -> Result<Vec<Graph>> {
        let h = &self.header;
        if h.format != DATASET_FORMAT {
            return Err(Error::Input(format!(
                "unknown dataset format '{}' (expected '{DATASET_FORMAT}')",
                h.format
            )));
        }
        self.graphs
            .iter()
            .enumerate()
            .map(|(idx, r)| {
                let ctx = |e: Error| Error::Input(format!("graph {idx}: {e}"));
                if r.n != h.n || r.node_labels.len() != r.n || r.edge_labels.len() != r.n {
                    return Err(ctx(Error::Input(format!(
                        "declared n = {} but header n = {}, {} node labels, {} edge rows",
                        r.n,
                        h.n,
                        r.node_labels.len(),
                        r.edge_labels.len()
                    ))));
                }
                if let Some(row) = r.edge_labels.iter().position(|row| row.len() != r.n) {
                    return Err(ctx(Error::Input(format!("edge row {row} has wrong length"))));
                }
                let edges = r.edge_labels.concat();
                Graph::new(h.d_a, h.d_e, r.node_labels.clone(), edges, r.props.clone()).map_err(ctx)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
