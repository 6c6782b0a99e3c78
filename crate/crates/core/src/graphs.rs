//! Decomposable (chordal) graphs over the responses.
//!
//! Adjacency rows are bitmasks, so graphs are limited to 64 nodes. The
//! decomposition follows a maximum cardinality search: maximal cliques in
//! order of completion form a perfect sequence, each contributing a residual
//! `R_q` and separator `S_q`. Concatenating the residuals gives the node
//! order used by the factorised likelihood; in that order the earlier
//! neighbours of every node are `S_q` plus the preceding members of `R_q`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_NODES: usize = 64;

/// Symmetric adjacency with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Adjacency {
    s: usize,
    rows: Vec<u64>,
}

#[inline]
fn bit(i: usize) -> u64 {
    1u64 << i
}

fn members(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

impl Adjacency {
    pub fn empty(s: usize) -> Result<Self> {
        if s > MAX_NODES {
            return Err(Error::Dimension(format!(
                "response graphs support at most {MAX_NODES} nodes, got {s}"
            )));
        }
        Ok(Self {
            s,
            rows: vec![0; s],
        })
    }

    pub fn complete(s: usize) -> Result<Self> {
        let mut a = Self::empty(s)?;
        for i in 0..s {
            for j in i + 1..s {
                a.set(i, j, true);
            }
        }
        Ok(a)
    }

    pub fn from_edges(s: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(s)?;
        for &(i, j) in edges {
            if i >= s || j >= s {
                return Err(Error::OutOfRange {
                    index: i.max(j),
                    limit: s,
                });
            }
            if i == j {
                return Err(Error::InvalidAdjacency);
            }
            a.set(i, j, true);
        }
        Ok(a)
    }

    /// From a dense 0/1 matrix; nonzero entries are edges.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidAdjacency);
        }
        let s = m.nrows();
        let mut a = Self::empty(s)?;
        for i in 0..s {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidAdjacency);
            }
            for j in 0..s {
                if (m[(i, j)] != 0.0) != (m[(j, i)] != 0.0) {
                    return Err(Error::InvalidAdjacency);
                }
                if m[(i, j)] != 0.0 {
                    a.rows[i] |= bit(j);
                }
            }
        }
        Ok(a)
    }

    /// Enumerates a graph from the bits of `code` over the upper-triangle
    /// pairs in lexicographic order.
    pub fn from_code(s: usize, code: u64) -> Result<Self> {
        let mut a = Self::empty(s)?;
        let mut b = 0;
        for i in 0..s {
            for j in i + 1..s {
                if code >> b & 1 == 1 {
                    a.set(i, j, true);
                }
                b += 1;
            }
        }
        Ok(a)
    }

    pub fn s(&self) -> usize {
        self.s
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i] & bit(j) != 0
    }

    pub fn set(&mut self, i: usize, j: usize, present: bool) {
        if present {
            self.rows[i] |= bit(j);
            self.rows[j] |= bit(i);
        } else {
            self.rows[i] &= !bit(j);
            self.rows[j] &= !bit(i);
        }
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        members(self.rows[i]).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.s {
            for j in members(self.rows[i]).filter(|&j| j > i) {
                out.push((i, j));
            }
        }
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.s, self.s, |i, j| if self.has_edge(i, j) { 1.0 } else { 0.0 })
    }

    /// Maximum cardinality search order; ties go to the lowest index.
    pub fn mcs_order(&self) -> Vec<usize> {
        let s = self.s;
        let mut weight = vec![0usize; s];
        let mut numbered = 0u64;
        let mut order = Vec::with_capacity(s);
        for _ in 0..s {
            let mut best = usize::MAX;
            for v in 0..s {
                if numbered & bit(v) == 0 && (best == usize::MAX || weight[v] > weight[best]) {
                    best = v;
                }
            }
            numbered |= bit(best);
            order.push(best);
            for u in members(self.rows[best] & !numbered) {
                weight[u] += 1;
            }
        }
        order
    }

    /// True when, in `order`, every node's earlier neighbours are pairwise
    /// adjacent (the reverse of `order` is a perfect elimination ordering).
    pub fn is_perfect_order(&self, order: &[usize]) -> bool {
        let mut seen = 0u64;
        for &v in order {
            let pa = self.rows[v] & seen;
            for u in members(pa) {
                if pa & !bit(u) & !self.rows[u] != 0 {
                    return false;
                }
            }
            seen |= bit(v);
        }
        true
    }
}

/// Chordality test via maximum cardinality search.
pub fn is_decomposable(adj: &Adjacency) -> bool {
    adj.is_perfect_order(&adj.mcs_order())
}

/// Checks a dense 0/1 matrix, rejecting asymmetric input or self-loops.
pub fn is_decomposable_matrix(m: &DMatrix<f64>) -> Result<bool> {
    Ok(is_decomposable(&Adjacency::from_matrix(m)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub residual: Vec<usize>,
    pub separator: Vec<usize>,
}

/// Where a node sits in the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodePosition {
    pub component: usize,
    /// 1-based position inside the residual.
    pub t: usize,
    pub separator_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecomposableGraph {
    adj: Adjacency,
    components: Vec<Component>,
    order: Vec<usize>,
    positions: Vec<NodePosition>,
    parents: Vec<Vec<usize>>,
}

pub fn decompose(adj: &Adjacency) -> Result<DecomposableGraph> {
    let s = adj.s;
    let mcs = adj.mcs_order();
    if !adj.is_perfect_order(&mcs) {
        return Err(Error::NotDecomposable);
    }
    let mut rank = vec![0usize; s];
    for (i, &v) in mcs.iter().enumerate() {
        rank[v] = i;
    }
    let mut seen = 0u64;
    let mut cliques = Vec::with_capacity(s);
    for &v in &mcs {
        cliques.push((adj.rows[v] & seen) | bit(v));
        seen |= bit(v);
    }
    let maximal: Vec<u64> = (0..s)
        .filter(|&i| !(i + 1..s).any(|j| cliques[i] & !cliques[j] == 0))
        .map(|i| cliques[i])
        .collect();

    let by_rank = |mask: u64| {
        let mut v: Vec<usize> = members(mask).collect();
        v.sort_by_key(|&x| rank[x]);
        v
    };
    let mut components = Vec::with_capacity(maximal.len());
    let mut union = 0u64;
    let mut order = Vec::with_capacity(s);
    let mut positions = vec![
        NodePosition {
            component: 0,
            t: 0,
            separator_size: 0
        };
        s
    ];
    for (q, &c) in maximal.iter().enumerate() {
        let residual = by_rank(c & !union);
        let separator = by_rank(c & union);
        for (t, &v) in residual.iter().enumerate() {
            positions[v] = NodePosition {
                component: q,
                t: t + 1,
                separator_size: separator.len(),
            };
            order.push(v);
        }
        union |= c;
        components.push(Component {
            residual,
            separator,
        });
    }
    let mut placed = 0u64;
    let mut parents = vec![Vec::new(); s];
    let mut position_in_order = vec![0usize; s];
    for (i, &v) in order.iter().enumerate() {
        position_in_order[v] = i;
    }
    for &v in &order {
        let mut pa: Vec<usize> = members(adj.rows[v] & placed).collect();
        pa.sort_by_key(|&u| position_in_order[u]);
        parents[v] = pa;
        placed |= bit(v);
    }
    Ok(DecomposableGraph {
        adj: adj.clone(),
        components,
        order,
        positions,
        parents,
    })
}

impl DecomposableGraph {
    pub fn empty(s: usize) -> Result<Self> {
        decompose(&Adjacency::empty(s)?)
    }

    pub fn complete(s: usize) -> Result<Self> {
        decompose(&Adjacency::complete(s)?)
    }

    pub fn from_edges(s: usize, edges: &[(usize, usize)]) -> Result<Self> {
        decompose(&Adjacency::from_edges(s, edges)?)
    }

    pub fn s(&self) -> usize {
        self.adj.s
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.has_edge(i, j)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.edge_count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj.edges()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Cliques `C_q = S_q ∪ R_q` of the perfect sequence.
    pub fn cliques(&self) -> Vec<Vec<usize>> {
        self.components
            .iter()
            .map(|c| {
                let mut v: Vec<usize> = c.separator.iter().chain(&c.residual).copied().collect();
                v.sort_unstable();
                v
            })
            .collect()
    }

    /// Concatenated residuals: the order in which responses are factorised.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn position(&self, v: usize) -> NodePosition {
        self.positions[v]
    }

    /// Neighbours of `v` that precede it in [`order`](Self::order).
    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }
}

/// All single-edge flips that keep the graph decomposable.
pub fn legal_flips(g: &DecomposableGraph) -> Vec<(usize, usize)> {
    let s = g.s();
    let mut work = g.adj.clone();
    let mut out = Vec::new();
    for i in 0..s {
        for j in i + 1..s {
            let present = work.has_edge(i, j);
            work.set(i, j, !present);
            if is_decomposable(&work) {
                out.push((i, j));
            }
            work.set(i, j, present);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct EdgeFlip {
    pub graph: DecomposableGraph,
    pub edge: Option<(usize, usize)>,
    /// log q(g | g′) − log q(g′ | g).
    pub log_ratio: f64,
}

/// Proposes a uniformly chosen decomposability-preserving edge flip.
pub fn propose_edge_flip<R: Rng + ?Sized>(g: &DecomposableGraph, rng: &mut R) -> EdgeFlip {
    let forward = legal_flips(g);
    if forward.is_empty() {
        return EdgeFlip {
            graph: g.clone(),
            edge: None,
            log_ratio: 0.0,
        };
    }
    let (i, j) = forward[rng.random_range(0..forward.len())];
    let mut adj = g.adj.clone();
    adj.set(i, j, !adj.has_edge(i, j));
    let graph = decompose(&adj).expect("legal flips preserve decomposability");
    let backward = legal_flips(&graph).len();
    EdgeFlip {
        graph,
        edge: Some((i, j)),
        log_ratio: (forward.len() as f64).ln() - (backward as f64).ln(),
    }
}
