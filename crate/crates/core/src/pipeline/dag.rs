//! Partially directed graphs and their comparison against a true DAG.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStatus {
    /// `i → j` for the queried pair `(i, j)`.
    Directed,
    /// `j → i` for the queried pair `(i, j)`.
    Reversed,
    Undirected,
    Absent,
}

/// Graph with directed and undirected edges. `marks[i][j]` means the edge
/// between `i` and `j` may point into `j`; both marks set is an undirected
/// edge, so a directed 2-cycle cannot be represented.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    marks: Vec<Vec<bool>>,
}

impl Dag {
    pub fn empty(d: usize) -> Self {
        Self { marks: vec![vec![false; d]; d] }
    }

    /// Complete undirected graph.
    pub fn complete(d: usize) -> Self {
        Self { marks: (0..d).map(|i| (0..d).map(|j| i != j).collect()).collect() }
    }

    /// From a directed adjacency matrix (`adj[i][j]` is `i → j`). Mutual
    /// entries become an undirected edge.
    pub fn from_adjacency(adj: &[Vec<bool>]) -> Result<Self> {
        let d = adj.len();
        if let Some(row) = adj.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension { expected: d, got: row.len() });
        }
        let mut g = Self::empty(d);
        for i in 0..d {
            for j in 0..d {
                if i != j && adj[i][j] {
                    g.marks[i][j] = true;
                }
            }
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.marks.len()
    }

    pub fn status(&self, i: usize, j: usize) -> EdgeStatus {
        match (self.marks[i][j], self.marks[j][i]) {
            (true, true) => EdgeStatus::Undirected,
            (true, false) => EdgeStatus::Directed,
            (false, true) => EdgeStatus::Reversed,
            (false, false) => EdgeStatus::Absent,
        }
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.marks[i][j] || self.marks[j][i]
    }

    pub fn is_directed(&self, i: usize, j: usize) -> bool {
        self.status(i, j) == EdgeStatus::Directed
    }

    pub fn is_undirected(&self, i: usize, j: usize) -> bool {
        self.status(i, j) == EdgeStatus::Undirected
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&j| j != i && self.adjacent(i, j)).collect()
    }

    pub fn orient(&mut self, from: usize, to: usize) {
        self.marks[from][to] = true;
        self.marks[to][from] = false;
    }

    pub fn set_undirected(&mut self, i: usize, j: usize) {
        self.marks[i][j] = true;
        self.marks[j][i] = true;
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        self.marks[i][j] = false;
        self.marks[j][i] = false;
    }

    /// Unordered pairs `i < j` joined by an undirected edge.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).filter(|&(i, j)| self.is_undirected(i, j)).collect()
    }

    /// `to` reachable from `from` along directed edges only.
    pub fn directed_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.dim()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend((0..self.dim()).filter(|&w| self.is_directed(v, w) && !seen[w]));
        }
        false
    }

    /// No cycle among the directed edges.
    pub fn directed_acyclic(&self) -> bool {
        let d = self.dim();
        !(0..d).any(|i| (0..d).any(|j| self.is_directed(i, j) && self.directed_path(j, i)))
    }

    /// `i -> j` and `i -- j` lines, pairs in row-major order.
    pub fn edge_list(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        for i in 0..d {
            for j in 0..d {
                match self.status(i, j) {
                    EdgeStatus::Directed => out.push_str(&format!("{} -> {}\n", i + 1, j + 1)),
                    EdgeStatus::Undirected if i < j => out.push_str(&format!("{} -- {}\n", i + 1, j + 1)),
                    _ => {}
                }
            }
        }
        out
    }

    /// Inverse of [`Dag::edge_list`]: 1-based `i -> j` and `i -- j` lines
    /// (or `;`-separated items), blank items ignored.
    pub fn parse_edge_list(text: &str, d: usize) -> Result<Self> {
        let mut g = Self::empty(d);
        for item in text.split(['\n', ';']).map(str::trim).filter(|s| !s.is_empty()) {
            let (sep, directed) = if item.contains("->") { ("->", true) } else { ("--", false) };
            let (a, b) = item.split_once(sep).ok_or_else(|| Error::Format(format!("`{item}` is not an edge")))?;
            let node = |s: &str| -> Result<usize> {
                match s.trim().parse::<usize>() {
                    Ok(v) if (1..=d).contains(&v) => Ok(v - 1),
                    _ => Err(Error::Format(format!("`{}` is not a node in 1..={d}", s.trim()))),
                }
            };
            let (i, j) = (node(a)?, node(b)?);
            if i == j {
                return Err(Error::Format(format!("self-loop `{item}`")));
            }
            if directed {
                g.orient(i, j);
            } else {
                g.set_undirected(i, j);
            }
        }
        Ok(g)
    }

    pub fn marks(&self) -> &[Vec<bool>] {
        &self.marks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub hamming: usize,
}

/// Ordered-pair F1 and Hamming distance of an estimate against the truth.
///
/// A directed estimated edge is a true positive when the truth has the same
/// ordered pair. An undirected estimated edge counts as one predicted edge
/// and half a true positive when the truth joins the pair in either
/// direction. Hamming counts ordered pairs whose mark differs, with an
/// undirected edge marking both orders.
pub fn dag_metrics(estimated: &Dag, truth: &Dag) -> Result<DagMetrics> {
    let d = truth.dim();
    if estimated.dim() != d {
        return Err(Error::Dimension { expected: d, got: estimated.dim() });
    }
    let (mut tp, mut predicted, mut actual, mut hamming) = (0.0, 0.0, 0.0, 0);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            if estimated.marks[i][j] != truth.marks[i][j] {
                hamming += 1;
            }
            if truth.is_directed(i, j) {
                actual += 1.0;
            }
            match estimated.status(i, j) {
                EdgeStatus::Directed => {
                    predicted += 1.0;
                    if truth.is_directed(i, j) {
                        tp += 1.0;
                    }
                }
                EdgeStatus::Undirected if i < j => {
                    predicted += 1.0;
                    if truth.adjacent(i, j) {
                        tp += 0.5;
                    }
                }
                _ => {}
            }
        }
    }
    let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let recall = if actual > 0.0 { tp / actual } else { 0.0 };
    let f1 = if tp > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else if predicted == 0.0 && actual == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(DagMetrics { f1, precision, recall, hamming })
}
