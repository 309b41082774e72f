//! Simple undirected labeled graphs with O(1) edge toggles and degree queries.
//!
//! Vertices are 1-based in the public API and in the edge-list text format;
//! the adjacency rows and degree table are plain bitset/counter storage.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge endpoints must be distinct positive vertex ids (got {i}, {j})")]
    BadEdge { i: u32, j: u32 },
    #[error("vertex {v} out of range for n = {n}")]
    VertexOutOfRange { v: u32, n: usize },
    #[error("codegree endpoints must differ (got {v})")]
    EqualEndpoints { v: u32 },
    #[error("invalid edge list: {0}")]
    Parse(String),
}

/// Unordered vertex pair (i, j) with 1 <= i < j. `new` normalizes the order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeIndex {
    i: u32,
    j: u32,
}

impl EdgeIndex {
    pub fn new(i: u32, j: u32) -> Result<Self, GraphError> {
        if i == 0 || j == 0 || i == j {
            return Err(GraphError::BadEdge { i, j });
        }
        Ok(if i < j { Self { i, j } } else { Self { i: j, j: i } })
    }

    pub fn i(&self) -> u32 {
        self.i
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    /// Rank in the canonical row-major order (1,2), (1,3), ..., (1,n), (2,3), ...
    /// This fixed order is what serialized runs and graph indices are built on.
    pub fn linear_index(&self, n: usize) -> usize {
        let i = self.i as usize;
        let j = self.j as usize;
        debug_assert!(j <= n);
        (i - 1) * (2 * n - i) / 2 + (j - i) - 1
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn from_linear(mut idx: usize, n: usize) -> Self {
        debug_assert!(idx < edge_index_count(n));
        let mut i = 1usize;
        while idx >= n - i {
            idx -= n - i;
            i += 1;
        }
        Self {
            i: i as u32,
            j: (i + 1 + idx) as u32,
        }
    }

    pub(crate) fn zero_based(&self) -> (usize, usize) {
        (self.i as usize - 1, self.j as usize - 1)
    }
}

/// Number of unordered vertex pairs, N = n(n-1)/2.
pub fn edge_index_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// All edge indices of an n-vertex graph in canonical order.
pub fn edge_indices(n: usize) -> impl Iterator<Item = EdgeIndex> {
    (1..=n as u32).flat_map(move |i| (i + 1..=n as u32).map(move |j| EdgeIndex { i, j }))
}

fn iter_bits(words: &[u64], mut f: impl FnMut(usize)) {
    for (wi, &word) in words.iter().enumerate() {
        let mut w = word;
        while w != 0 {
            f(wi * 64 + w.trailing_zeros() as usize);
            w &= w - 1;
        }
    }
}

fn popcount_and(x: &[u64], y: &[u64]) -> u32 {
    x.iter().zip(y).map(|(a, b)| (a & b).count_ones()).sum()
}

/// Simple undirected graph on n labeled vertices.
///
/// Adjacency is stored as one bitset row per vertex (symmetric, empty
/// diagonal); degrees and the edge count are maintained incrementally so
/// single-edge updates stay O(1) apart from the bitset flips.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words: usize,
    adj: Vec<u64>,
    degree: Vec<u32>,
    edge_count: usize,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        assert!(n >= 1, "graph needs at least one vertex");
        let words = n.div_ceil(64);
        Self {
            n,
            words,
            adj: vec![0; n * words],
            degree: vec![0; n],
            edge_count: 0,
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for s in edge_indices(n) {
            g.set_edge(s, true).expect("in range");
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    fn check(&self, s: EdgeIndex) -> Result<(usize, usize), GraphError> {
        if s.j as usize > self.n {
            return Err(GraphError::VertexOutOfRange {
                v: s.j,
                n: self.n,
            });
        }
        Ok(s.zero_based())
    }

    pub fn has_edge(&self, s: EdgeIndex) -> Result<bool, GraphError> {
        let (a, b) = self.check(s)?;
        Ok(self.has_raw(a, b))
    }

    /// Flips the edge bit at `s`, adjusting the two endpoint degrees.
    pub fn toggle(&mut self, s: EdgeIndex) -> Result<(), GraphError> {
        let (a, b) = self.check(s)?;
        self.toggle_raw(a, b);
        Ok(())
    }

    pub fn set_edge(&mut self, s: EdgeIndex, present: bool) -> Result<(), GraphError> {
        let (a, b) = self.check(s)?;
        self.set_raw(a, b, present);
        Ok(())
    }

    pub fn degree(&self, v: u32) -> Result<u32, GraphError> {
        if v == 0 || v as usize > self.n {
            return Err(GraphError::VertexOutOfRange { v, n: self.n });
        }
        Ok(self.degree[v as usize - 1])
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degree
    }

    /// Number of common neighbors of a and b (excluding a and b themselves).
    pub fn codegree(&self, a: u32, b: u32) -> Result<u32, GraphError> {
        if a == b {
            return Err(GraphError::EqualEndpoints { v: a });
        }
        let s = EdgeIndex::new(a, b)?;
        let (a, b) = self.check(s)?;
        Ok(self.codegree_raw(a, b))
    }

    pub(crate) fn row(&self, a: usize) -> &[u64] {
        &self.adj[a * self.words..(a + 1) * self.words]
    }

    pub(crate) fn has_raw(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    pub(crate) fn toggle_raw(&mut self, a: usize, b: usize) {
        debug_assert!(a != b && a < self.n && b < self.n);
        let present = self.has_raw(a, b);
        self.adj[a * self.words + b / 64] ^= 1 << (b % 64);
        self.adj[b * self.words + a / 64] ^= 1 << (a % 64);
        if present {
            self.degree[a] -= 1;
            self.degree[b] -= 1;
            self.edge_count -= 1;
        } else {
            self.degree[a] += 1;
            self.degree[b] += 1;
            self.edge_count += 1;
        }
    }

    pub(crate) fn set_raw(&mut self, a: usize, b: usize, present: bool) {
        if self.has_raw(a, b) != present {
            self.toggle_raw(a, b);
        }
    }

    pub(crate) fn degree_raw(&self, a: usize) -> u32 {
        self.degree[a]
    }

    pub(crate) fn codegree_raw(&self, a: usize, b: usize) -> u32 {
        popcount_and(self.row(a), self.row(b))
    }

    /// Number of 3-edge paths a-x-y-b with x, y distinct from a, b.
    ///
    /// Adding the edge (a, b) creates exactly this many new rectangles, so the
    /// value is independent of the current bit at (a, b).
    pub(crate) fn path3_between_raw(&self, a: usize, b: usize) -> u64 {
        // Iterate the smaller neighborhood.
        let (a, b) = if self.degree[a] <= self.degree[b] {
            (a, b)
        } else {
            (b, a)
        };
        let z_ab = self.has_raw(a, b) as u32;
        let row_b = self.row(b);
        let mut total = 0u64;
        iter_bits(self.row(a), |x| {
            if x != b {
                // y ranges over N(x) ∩ N(b) minus {a, x}; x never neighbors
                // itself and a is in the intersection exactly when (a,b) is set.
                total += (popcount_and(self.row(x), row_b) - z_ab) as u64;
            }
        });
        total
    }

    /// Number of two-star subgraphs, sum over vertices of C(deg, 2).
    pub fn two_star_count(&self) -> u64 {
        self.degree
            .iter()
            .map(|&d| d as u64 * (d as u64).saturating_sub(1) / 2)
            .sum()
    }

    /// Number of triangle subgraphs.
    pub fn triangle_count(&self) -> u64 {
        let mut acc = 0u64;
        for a in 0..self.n {
            iter_bits(self.row(a), |b| {
                if b > a {
                    acc += self.codegree_raw(a, b) as u64;
                }
            });
        }
        acc / 3
    }

    /// Number of 4-cycle subgraphs: each contributes C(codegree, 2) at both
    /// of its opposite vertex pairs.
    pub fn rectangle_count(&self) -> u64 {
        let mut acc = 0u64;
        for a in 0..self.n {
            for b in a + 1..self.n {
                let c = self.codegree_raw(a, b) as u64;
                acc += c * c.saturating_sub(1) / 2;
            }
        }
        acc / 2
    }

    /// Decodes a graph from `index` whose bit k is the edge with linear index k.
    pub fn from_index(n: usize, index: u64) -> Self {
        let count = edge_index_count(n);
        assert!(count <= 63, "graph index only supports n(n-1)/2 <= 63 bits");
        let mut g = Self::empty(n);
        for (k, s) in edge_indices(n).enumerate() {
            if index >> k & 1 == 1 {
                g.set_edge(s, true).expect("in range");
            }
        }
        let _ = count;
        g
    }

    pub fn to_index(&self) -> u64 {
        assert!(edge_index_count(self.n) <= 63);
        let mut index = 0u64;
        for (k, s) in edge_indices(self.n).enumerate() {
            if self.has_edge(s).expect("in range") {
                index |= 1 << k;
            }
        }
        index
    }

    /// Erdős–Rényi draw: every edge present independently with probability p.
    ///
    /// Consumes exactly one uniform per edge index in canonical order, so the
    /// result is a bit-exact function of the RNG state.
    pub fn gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Self {
        let mut g = Self::empty(n);
        for s in edge_indices(n) {
            let u: f64 = rng.random();
            if u < p {
                g.set_edge(s, true).expect("in range");
            }
        }
        g
    }

    /// Parses the edge-list text format: first line `n <count>`, then one
    /// `i j` pair (1-based, i < j) per line.
    pub fn read_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| GraphError::Parse("empty input".into()))?;
        let mut parts = header.split_whitespace();
        match parts.next() {
            Some("n") => {}
            other => {
                return Err(GraphError::Parse(format!(
                    "expected header `n <count>`, got {other:?}"
                )))
            }
        }
        let n: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| GraphError::Parse("bad vertex count in header".into()))?;
        if parts.next().is_some() {
            return Err(GraphError::Parse("trailing tokens in header".into()));
        }
        let mut g = Self::empty(n);
        for line in lines {
            let mut it = line.split_whitespace();
            let (i, j) = match (it.next(), it.next(), it.next()) {
                (Some(i), Some(j), None) => (i, j),
                _ => return Err(GraphError::Parse(format!("bad edge line `{line}`"))),
            };
            let i: u32 = i
                .parse()
                .map_err(|_| GraphError::Parse(format!("bad vertex id `{i}`")))?;
            let j: u32 = j
                .parse()
                .map_err(|_| GraphError::Parse(format!("bad vertex id `{j}`")))?;
            if i >= j {
                return Err(GraphError::Parse(format!(
                    "edges must be listed with i < j (got {i} {j})"
                )));
            }
            g.set_edge(EdgeIndex::new(i, j)?, true)?;
        }
        Ok(g)
    }

    pub fn write_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for s in self.present_edges() {
            out.push_str(&format!("{} {}\n", s.i(), s.j()));
        }
        out
    }

    pub fn present_edges(&self) -> Vec<EdgeIndex> {
        edge_indices(self.n)
            .filter(|&s| self.has_edge(s).expect("in range"))
            .collect()
    }
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Graph(n={}, edges={:?})",
            self.n,
            self.present_edges()
                .iter()
                .map(|s| (s.i(), s.j()))
                .collect::<Vec<_>>()
        )
    }
}
