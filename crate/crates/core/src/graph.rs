//! Static undirected communication graph.
//!
//! Edges are stored once per unordered pair with a fixed orientation
//! (tail = smaller agent index, head = larger). Every undirected edge also
//! yields two directed *channels*, one per receiving agent; channels are the
//! unit at which delays and delayed positions are tracked.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Relative slack on the edge threshold, in units of machine epsilon.
const RHO_ULPS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

impl Edge {
    /// The endpoint that is not `agent`, if `agent` is on this edge.
    pub fn other(&self, agent: usize) -> Option<usize> {
        if agent == self.tail {
            Some(self.head)
        } else if agent == self.head {
            Some(self.tail)
        } else {
            None
        }
    }
}

/// A directed view of an edge: `receiver` gets the (delayed) position of
/// `source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub receiver: usize,
    pub source: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n_agents: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    channels: Vec<Channel>,
    // channels received by agent i live at channel_start[i]..channel_start[i + 1]
    channel_start: Vec<usize>,
}

impl CommGraph {
    /// Unit-weight graph from unordered pairs.
    pub fn new(n_agents: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::with_weights(n_agents, pairs.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    pub fn with_weights(
        n_agents: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidGraph("graph needs at least one agent".into()));
        }
        let mut list: Vec<Edge> = Vec::new();
        for (a, b, w) in edges {
            if a >= n_agents || b >= n_agents {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references an agent outside 0..{n_agents}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at agent {a}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has non-positive weight {w}"
                )));
            }
            let (tail, head) = if a < b { (a, b) } else { (b, a) };
            if list.iter().any(|e| e.tail == tail && e.head == head) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({tail}, {head})")));
            }
            list.push(Edge { tail, head, weight: w });
        }

        let mut neighbors = vec![Vec::new(); n_agents];
        let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_agents];
        for (k, e) in list.iter().enumerate() {
            neighbors[e.tail].push(e.head);
            neighbors[e.head].push(e.tail);
            incident[e.tail].push((e.head, k));
            incident[e.head].push((e.tail, k));
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let mut channels = Vec::with_capacity(2 * list.len());
        let mut channel_start = Vec::with_capacity(n_agents + 1);
        for (receiver, inc) in incident.iter_mut().enumerate() {
            inc.sort_unstable();
            channel_start.push(channels.len());
            channels.extend(inc.iter().map(|&(source, edge)| Channel {
                receiver,
                source,
                edge,
            }));
        }
        channel_start.push(channels.len());

        Ok(Self {
            n_agents,
            edges: list,
            neighbors,
            channels,
            channel_start,
        })
    }

    /// Edge set of the initial configuration: `{i, j}` is an edge iff
    /// `|x_i(0) - x_j(0)| <= rho`, up to a few ulps so that coordinates like
    /// 1.5 and 2.1 sit exactly 0.6 apart. Unit weights, pairs in
    /// lexicographic order.
    pub fn from_positions(positions: &[Vec<f64>], r: f64, rho: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::param("r", format!("must be positive and finite, got {r}")));
        }
        if !(rho > 0.0) || rho > r {
            return Err(Error::param("rho", format!("must satisfy 0 < rho <= r = {r}, got {rho}")));
        }
        let dim = positions.first().map_or(0, Vec::len);
        for (i, x) in positions.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Dimension(format!(
                    "agent {i} has dimension {}, expected {dim}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("positions", format!("agent {i} has a non-finite coordinate")));
            }
        }
        let threshold = rho * (1.0 + RHO_ULPS * f64::EPSILON);
        let mut pairs = Vec::new();
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if distance(&positions[i], &positions[j]) <= threshold {
                    pairs.push((i, j));
                }
            }
        }
        Self::new(positions.len(), pairs)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.neighbors[agent].len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors.get(i).is_some_and(|nb| nb.binary_search(&j).is_ok())
    }

    /// Edge pairs as `(tail, head)`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.tail, e.head)).collect()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Channels whose receiver is `agent`, ordered by source index.
    pub fn incoming(&self, agent: usize) -> &[Channel] {
        &self.channels[self.channel_start[agent]..self.channel_start[agent + 1]]
    }

    pub fn channel_range(&self, agent: usize) -> std::ops::Range<usize> {
        self.channel_start[agent]..self.channel_start[agent + 1]
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_agents, self.n_agents);
        for e in &self.edges {
            a[(e.tail, e.head)] = e.weight;
            a[(e.head, e.tail)] = e.weight;
        }
        a
    }

    /// N×M incidence matrix: +1 at the head of each edge, −1 at the tail.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_agents, self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            d[(e.head, k)] = 1.0;
            d[(e.tail, k)] = -1.0;
        }
        d
    }

    pub fn edge_weights(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.edges.len(),
            self.edges.iter().map(|e| e.weight),
        ))
    }

    /// Weighted Laplacian built from the adjacency definition
    /// (`l_ii = Σ a_ik`, `l_ij = −a_ij`).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let a = self.adjacency();
        let mut l = -a.clone();
        for i in 0..self.n_agents {
            l[(i, i)] = a.row(i).sum();
        }
        l
    }

    /// Breadth-first reachability from agent 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_agents];
        let mut queue = VecDeque::from([0usize]);
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
        count == self.n_agents
    }

    /// Second-smallest Laplacian eigenvalue (0 for a single agent).
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.n_agents < 2 {
            return 0.0;
        }
        let mut eig = SymmetricEigen::new(self.laplacian()).eigenvalues.as_slice().to_vec();
        eig.sort_by(f64::total_cmp);
        eig[1]
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
