//! Fixed undirected communication topologies and the algebraic matrices
//! (adjacency, Laplacian, incidence) used by the consensus diagnostics.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoop(usize),
    #[error("node index {index} out of range for a graph with {n} nodes")]
    OutOfRange { index: usize, n: usize },
}

/// An unweighted undirected graph on nodes `0..n`.
///
/// Every edge is stored once, oriented `(min, max)`. The incidence matrix
/// uses that orientation: the edge leaves `min` and enters `max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 0-based pairs. Duplicates (in either order) are
    /// collapsed; the resulting edge list is sorted.
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(GraphError::OutOfRange { index, n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, edges, neighbors })
    }

    /// Same as [`Graph::from_edge_list`] but with the 1-based numbering used
    /// in scenario files.
    pub fn from_one_based(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut zero_based = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i == 0 || j == 0 {
                return Err(GraphError::OutOfRange { index: 0, n });
            }
            zero_based.push((i - 1, j - 1));
        }
        Self::from_edge_list(n, &zero_based).map_err(|e| match e {
            GraphError::SelfLoop(i) => GraphError::SelfLoop(i + 1),
            GraphError::OutOfRange { index, n } => GraphError::OutOfRange { index: index + 1, n },
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Oriented edges `(tail, head)` with `tail < head`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.neighbors
            .get(i)
            .map(Vec::as_slice)
            .ok_or(GraphError::OutOfRange { index: i, n: self.n })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }

    /// Node-by-edge signed incidence matrix, `-1` at the tail, `+1` at the head.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.edges.len());
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            d[(i, k)] = -1.0;
            d[(j, k)] = 1.0;
        }
        d
    }

    /// Breadth-first reachability from node 0. The empty graph and the
    /// single node graph count as connected.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut values: Vec<f64> = SymmetricEigen::new(self.laplacian()).eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }
}

/// The 12-node network used by the benchmark scenario, 1-based.
pub const BENCHMARK_EDGES: [(usize, usize); 14] = [
    (1, 2),
    (2, 3),
    (1, 8),
    (5, 12),
    (3, 4),
    (4, 5),
    (3, 6),
    (3, 7),
    (6, 10),
    (7, 10),
    (8, 9),
    (9, 10),
    (10, 11),
    (11, 12),
];

pub fn benchmark_graph() -> Graph {
    Graph::from_one_based(12, &BENCHMARK_EDGES).expect("benchmark edge list is valid")
}
