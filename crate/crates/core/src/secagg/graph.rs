//! Communication graphs between clients.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AggregationError;
use crate::seed::rng_for;

/// How clients are connected for pairwise masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "degree")]
pub enum GraphMode {
    /// Every pair of clients shares a mask.
    Full,
    /// Random `k`-regular graph; falls back to full when `k >= n - 1`.
    Neighbor(usize),
    /// `Neighbor(default_degree(n))`.
    Auto,
}

/// `2 * ceil(log2 n)`, capped at `n - 1`.
pub fn default_degree(n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let log = usize::BITS - (n - 1).leading_zeros();
    (2 * log as usize).min(n - 1)
}

/// Default Shamir threshold for `k` share holders: `floor(2k/3) + 1`.
pub fn default_threshold(k: usize) -> usize {
    (2 * k / 3 + 1).min(k.max(1))
}

/// An undirected simple graph over local positions `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborGraph {
    pub n: usize,
    pub k: usize,
    pub full: bool,
    pub adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn complete(n: usize) -> Self {
        NeighborGraph {
            n,
            k: n.saturating_sub(1),
            full: true,
            adjacency: (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
        }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }
}

/// Builds the graph for `n` clients.
///
/// Neighbor mode starts from `k/2` edge-disjoint Hamiltonian-style rings on a
/// random relabeling (a circulant graph), then randomizes with double-edge
/// swaps, which keep every degree at `k`. Disconnected results are retried.
pub fn build_neighbor_graph(
    n: usize,
    mode: GraphMode,
    rng_seed: u64,
) -> Result<NeighborGraph, AggregationError> {
    if n < 2 {
        return Err(AggregationError::Parameter(format!(
            "a neighbor graph needs at least 2 clients, got {n}"
        )));
    }
    let k = match mode {
        GraphMode::Full => return Ok(NeighborGraph::complete(n)),
        GraphMode::Neighbor(k) => k,
        GraphMode::Auto => default_degree(n),
    };
    if k >= n {
        return Err(AggregationError::Parameter(format!(
            "degree {k} must be below the client count {n}"
        )));
    }
    if k == n - 1 {
        return Ok(NeighborGraph::complete(n));
    }
    if k == 0 || k % 2 == 1 {
        return Err(AggregationError::Parameter(format!(
            "degree must be even and positive (or n - 1), got {k} for n = {n}"
        )));
    }
    let mut rng = rng_for(rng_seed, "neighbor-graph", &[n as u64, k as u64]);
    for _ in 0..64 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * k / 2);
        for step in 1..=k / 2 {
            for i in 0..n {
                edges.push(ordered(order[i], order[(i + step) % n]));
            }
        }
        let mut present: HashSet<(usize, usize)> = edges.iter().copied().collect();
        for _ in 0..10 * edges.len() {
            let x = rng.random_range(0..edges.len());
            let y = rng.random_range(0..edges.len());
            let (a, b) = edges[x];
            let (c, d) = if rng.random() { edges[y] } else { (edges[y].1, edges[y].0) };
            if a == c || a == d || b == c || b == d {
                continue;
            }
            let (e1, e2) = (ordered(a, d), ordered(c, b));
            if present.contains(&e1) || present.contains(&e2) {
                continue;
            }
            present.remove(&edges[x]);
            present.remove(&edges[y]);
            present.insert(e1);
            present.insert(e2);
            edges[x] = e1;
            edges[y] = e2;
        }
        let mut adjacency = vec![BTreeSet::new(); n];
        for &(a, b) in &edges {
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let graph = NeighborGraph {
            n,
            k,
            full: false,
            adjacency: adjacency.into_iter().map(|s| s.into_iter().collect()).collect(),
        };
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(AggregationError::Parameter(format!(
        "no connected {k}-regular graph found for n = {n}"
    )))
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
