//! The two graphs every run is built on: a connected public graph used for
//! weighted averaging, and a private gossip graph whose connected components
//! shuffle state before any value is ever averaged in the open.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one node")]
    Empty,
    #[error("edge ({0}, {1}) is invalid for a simple graph on {2} nodes")]
    InvalidEdge(usize, usize, usize),
    #[error("public graph is not connected")]
    Disconnected,
    #[error("averaging weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error(
        "averaging diverges: disagreement spectral radius {radius} is not below one \
         (reduce the weight)"
    )]
    UnstableWeight { radius: f64 },
    #[error("node {0} has no private neighbor; every node must gossip")]
    IsolatedNode(usize),
}

fn normalize_edges(n: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>, GraphError> {
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let mut out = Vec::with_capacity(edges.len());
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(GraphError::InvalidEdge(a, b, n));
        }
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn neighbor_lists(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); n];
    for &(a, b) in edges {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    for list in &mut nbrs {
        list.sort_unstable();
    }
    nbrs
}

/// Connected weighted graph `G` driving the averaging stage
/// `x ← x − a·L·x`, where `L` is the unweighted Laplacian.
#[derive(Debug, Clone)]
pub struct PublicGraph {
    n: usize,
    weight: f64,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    laplacian: DMatrix<f64>,
    algebraic_connectivity: f64,
    contraction_factor: f64,
}

impl PublicGraph {
    /// Build and validate. Rejects disconnected graphs, non-positive weights,
    /// and weights for which averaging would not contract disagreement.
    pub fn new(n: usize, edges: &[(usize, usize)], weight: f64) -> Result<Self, GraphError> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(GraphError::NonPositiveWeight(weight));
        }
        let edges = normalize_edges(n, edges)?;
        let neighbors = neighbor_lists(n, &edges);

        // Connectivity by flood fill.
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(GraphError::Disconnected);
        }

        let mut laplacian = DMatrix::zeros(n, n);
        for &(a, b) in &edges {
            laplacian[(a, a)] += weight;
            laplacian[(b, b)] += weight;
            laplacian[(a, b)] -= weight;
            laplacian[(b, a)] -= weight;
        }

        let (algebraic_connectivity, contraction_factor) = if n == 1 {
            // A lone node is already at consensus.
            (1.0, 0.0)
        } else {
            let eigen = SymmetricEigen::new(laplacian.clone());
            let mut ev: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // ev[0] ≈ 0 is the consensus mode; the rest govern disagreement.
            let lambda2 = ev[1];
            let radius = ev[1..]
                .iter()
                .map(|&l| (1.0 - l).abs())
                .fold(0.0f64, f64::max);
            if radius >= 1.0 - 1e-12 {
                return Err(GraphError::UnstableWeight { radius });
            }
            (lambda2, radius)
        };

        Ok(PublicGraph {
            n,
            weight,
            edges,
            neighbors,
            laplacian,
            algebraic_connectivity,
            contraction_factor,
        })
    }

    /// Ring on `n` nodes.
    pub fn cycle(n: usize, weight: f64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let edges: Vec<_> = if n == 1 {
            Vec::new()
        } else if n == 2 {
            vec![(0, 1)]
        } else {
            (0..n).map(|i| (i, (i + 1) % n)).collect()
        };
        Self::new(n, &edges, weight)
    }

    pub fn complete(n: usize, weight: f64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges, weight)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Weighted Laplacian `a·L`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Second-smallest eigenvalue of the weighted Laplacian: the per-step
    /// contraction margin of the averaging stage.
    pub fn algebraic_connectivity(&self) -> f64 {
        self.algebraic_connectivity
    }

    /// Spectral radius of `I − a·L − (1/n)·11ᵀ`; strictly below one for any
    /// accepted graph.
    pub fn contraction_factor(&self) -> f64 {
        self.contraction_factor
    }

    /// True when the weight exceeds the customary `1/n` ceiling. Such weights
    /// are accepted as long as averaging still contracts, but callers may
    /// want to warn.
    pub fn weight_above_uniform(&self) -> bool {
        self.weight > 1.0 / self.n as f64
    }
}

/// Gossip graph `G_p`: possibly disconnected, every node must have at least
/// one neighbor. Each connected component shuffles independently.
#[derive(Debug, Clone)]
pub struct PrivateGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
    max_component_size: usize,
    degree_balance: f64,
}

impl PrivateGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let edges = normalize_edges(n, edges)?;
        let neighbors = neighbor_lists(n, &edges);
        if let Some(i) = (0..n).find(|&i| neighbors[i].is_empty()) {
            return Err(GraphError::IsolatedNode(i));
        }

        // Connected components, listed in order of their smallest node.
        let mut component_of = vec![usize::MAX; n];
        let mut components: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if component_of[start] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            component_of[start] = id;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for &j in &neighbors[i] {
                    if component_of[j] == usize::MAX {
                        component_of[j] = id;
                        members.push(j);
                        stack.push(j);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }

        let max_component_size = components.iter().map(Vec::len).max().unwrap_or(0);
        let degree_balance = components
            .iter()
            .map(|comp| {
                let degs = comp.iter().map(|&i| neighbors[i].len() as f64);
                let min = degs.clone().fold(f64::INFINITY, f64::min);
                let max = degs.fold(0.0f64, f64::max);
                min / max
            })
            .fold(f64::INFINITY, f64::min);

        Ok(PrivateGraph {
            n,
            edges,
            neighbors,
            components,
            component_of,
            max_component_size,
            degree_balance,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.component_of[i]
    }

    pub fn max_component_size(&self) -> usize {
        self.max_component_size
    }

    /// Worst-case ratio of minimum to maximum degree within a component;
    /// enters the covering-probability bound.
    pub fn degree_balance(&self) -> f64 {
        self.degree_balance
    }

    /// Number of oriented (sender, receiver) pairs per component — the
    /// per-step support size of the gossip edge choice.
    pub fn oriented_pair_counts(&self) -> Vec<usize> {
        self.components
            .iter()
            .map(|comp| comp.iter().map(|&i| self.neighbors[i].len()).sum())
            .collect()
    }
}
