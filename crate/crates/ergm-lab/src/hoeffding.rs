//! Centered copy counts, tilde statistics, the full orthogonal decomposition
//! of homomorphism counts under independent edges, and per-term remainders.
//!
//! The decomposition of |hom(H, G)| reads
//!
//! ```text
//! |hom(H,G)| = E_p|hom(H,G)|
//!            + sum over subgraph classes G' of H (no isolated vertices):
//!              (n - v') ... (n - v + 1) * p^(e - e') * |hom(G', H)| * ~#(G', G)
//! ```
//!
//! where ~#(G', G) sums, over all copies of G' in the complete graph, the
//! product of (Z_r - p) over the copy's edges.

use crate::graph::{EdgeIndex, Graph};
use crate::model::{ErgmSpec, ModelError};
use crate::motif::{falling_factorial, Motif, MotifError};
use itertools::Itertools;
use serde::Serialize;
use std::collections::{BTreeMap, HashSet};

/// Which leading-term coefficients the tilde statistics subtract.
///
/// `Approximate` uses the 2np and np^2 factors; `Exact` replaces them with the
/// falling-factorial coefficients 2(n-2)p and (n-2)p^2, which make the tilde
/// statistics coincide with centered copy counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Approximate,
    Exact,
}

/// Centered statistics E~, V~, T~ for one graph at density p.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TildeStats {
    pub e_tilde: f64,
    pub v_tilde: f64,
    pub t_tilde: f64,
    pub variant: Variant,
}

fn choose3(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) * (n - 2.0) / 6.0
}

/// Subtracts the leading decomposition terms from the edge, two-star and
/// triangle counts of g:
///
/// ```text
/// E~ = E - C(n,2) p
/// V~ = V - 3 C(n,3) p^2 - 2np E~          (exact: 2(n-2)p)
/// T~ = T - C(n,3) p^3 - p V~ - np^2 E~    (exact: (n-2)p^2)
/// ```
pub fn tilde_stats(g: &Graph, p: f64, variant: Variant) -> TildeStats {
    let n = g.n() as f64;
    let e = g.edge_count() as f64;
    let v = g.two_star_count() as f64;
    let t = g.triangle_count() as f64;
    let e_tilde = e - n * (n - 1.0) / 2.0 * p;
    let (v_coef, t_coef) = match variant {
        Variant::Approximate => (2.0 * n * p, n * p * p),
        Variant::Exact => (2.0 * (n - 2.0) * p, (n - 2.0) * p * p),
    };
    let v_tilde = v - 3.0 * choose3(g.n()) * p * p - v_coef * e_tilde;
    let t_tilde = t - choose3(g.n()) * p * p * p - p * v_tilde - t_coef * e_tilde;
    TildeStats {
        e_tilde,
        v_tilde,
        t_tilde,
        variant,
    }
}

/// All distinct copies of a motif in the complete graph on n vertices, each
/// given by its sorted edge list.
pub fn copy_positions(h: &Motif, n: usize) -> Result<Vec<Vec<EdgeIndex>>, MotifError> {
    let v = h.vertex_count();
    if v > n {
        return Err(MotifError::TooLargeForGraph { motif: v, graph: n });
    }
    let mut positions = Vec::new();
    for subset in (1..=n as u32).combinations(v) {
        let mut seen: HashSet<Vec<EdgeIndex>> = HashSet::new();
        for perm in subset.iter().copied().permutations(v) {
            let mut image: Vec<EdgeIndex> = h
                .edges()
                .iter()
                .map(|&(a, b)| {
                    EdgeIndex::new(perm[a as usize - 1], perm[b as usize - 1])
                        .expect("distinct vertices")
                })
                .collect();
            image.sort_unstable();
            if seen.insert(image.clone()) {
                positions.push(image);
            }
        }
    }
    Ok(positions)
}

/// ~#(h, g): sum over copies of h in the complete graph of the product of
/// (Z_r - p) over the copy's edges, with Z read from g.
pub fn centered_copy_count(h: &Motif, g: &Graph, p: f64) -> Result<f64, MotifError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(MotifError::BadProbability(p));
    }
    let positions = copy_positions(h, g.n())?;
    Ok(centered_sum(&positions, g, p))
}

/// The centered sum for a precomputed position list.
pub fn centered_sum(positions: &[Vec<EdgeIndex>], g: &Graph, p: f64) -> f64 {
    positions
        .iter()
        .map(|edges| {
            edges
                .iter()
                .map(|s| g.has_edge(*s).expect("position in range") as u8 as f64 - p)
                .product::<f64>()
        })
        .sum()
}

/// One subgraph class in the full decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionTerm {
    pub subgraph: Motif,
    /// |hom(G', H)|: injective edge-preserving maps of the class into the host.
    pub hom_into_host: u64,
    /// (n - v') ... (n - v + 1) * p^(e - e') * |hom(G', H)|.
    pub coefficient: f64,
    /// ~#(G', G).
    pub centered_count: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FullDecomposition {
    /// E_p |hom(H, G)| = n (n-1) ... (n-v+1) p^e.
    pub expected_hom: f64,
    pub terms: Vec<DecompositionTerm>,
    pub actual_hom: f64,
    pub reconstructed: f64,
}

impl FullDecomposition {
    /// |actual - reconstructed| / max(1, |actual|).
    pub fn residual(&self) -> f64 {
        (self.actual_hom - self.reconstructed).abs() / self.actual_hom.abs().max(1.0)
    }
}

/// Distinct isomorphism classes of nonempty subgraphs of h without isolated
/// vertices, in a deterministic order.
pub fn subgraph_classes(h: &Motif) -> Vec<Motif> {
    let edges = h.edges();
    let mut classes: BTreeMap<(usize, usize, Vec<(u32, u32)>), Motif> = BTreeMap::new();
    for mask in 1u32..1 << edges.len() {
        let chosen: Vec<(u32, u32)> = edges
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        // Strip isolated vertices by compacting labels.
        let mut labels: Vec<u32> = chosen
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .sorted_unstable()
            .dedup()
            .collect();
        let relabel = |x: u32| labels.binary_search(&x).expect("present") as u32 + 1;
        let compact: Vec<(u32, u32)> = chosen.iter().map(|&(a, b)| (relabel(a), relabel(b))).collect();
        let v = labels.len();
        labels.clear();
        let key = (v, compact.len(), canonical_edges(v, &compact));
        classes.entry(key).or_insert_with(|| {
            Motif::from_edges(v, compact).expect("valid subgraph")
        });
    }
    classes.into_values().collect()
}

/// Lexicographically smallest relabeling of an edge list, used as an
/// isomorphism-class key (motifs are small, so brute force is fine).
fn canonical_edges(v: usize, edges: &[(u32, u32)]) -> Vec<(u32, u32)> {
    (1..=v as u32)
        .permutations(v)
        .map(|perm| {
            edges
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (perm[a as usize - 1], perm[b as usize - 1]);
                    (x.min(y), x.max(y))
                })
                .sorted_unstable()
                .collect::<Vec<_>>()
        })
        .min()
        .expect("at least the identity")
}

pub const MAX_DECOMPOSITION_VERTICES: usize = 6;

/// Full orthogonal decomposition of |hom(h, g)| at density p.
pub fn full_decomposition(h: &Motif, g: &Graph, p: f64) -> Result<FullDecomposition, MotifError> {
    if h.vertex_count() > MAX_DECOMPOSITION_VERTICES {
        return Err(MotifError::TooManyVertices(h.vertex_count()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(MotifError::BadProbability(p));
    }
    let n = g.n();
    let v = h.vertex_count();
    let e = h.edge_count();
    let host = h.as_graph();
    let mut terms = Vec::new();
    for class in subgraph_classes(h) {
        let hom_into_host = class.hom_count(&host)?;
        let v_sub = class.vertex_count();
        let e_sub = class.edge_count();
        let coefficient = falling_factorial(n - v_sub, v - v_sub)
            * p.powi((e - e_sub) as i32)
            * hom_into_host as f64;
        let centered_count = centered_copy_count(&class, g, p)?;
        terms.push(DecompositionTerm {
            subgraph: class,
            hom_into_host,
            coefficient,
            centered_count,
        });
    }
    let expected_hom = falling_factorial(n, v) * p.powi(e as i32);
    let reconstructed = expected_hom
        + terms
            .iter()
            .map(|t| t.coefficient * t.centered_count)
            .sum::<f64>();
    Ok(FullDecomposition {
        expected_hom,
        terms,
        actual_hom: h.hom_count(g)? as f64,
        reconstructed,
    })
}

/// R_i(x) = |hom(H_i, G)| / n^(v_i - 3)
///          - 6 t_i p^(e_i-3) T~ - 2 s_i p^(e_i-2) V~ - 2 n e_i p^(e_i-1) E~,
/// with the tilde statistics in their defining (approximate-coefficient) form.
///
/// Constant in the graph when H_i is an edge or a two-star.
pub fn remainder(spec: &ErgmSpec, g: &Graph, p: f64, term_index: usize) -> Result<f64, ModelError> {
    let term = spec
        .terms()
        .get(term_index)
        .ok_or(ModelError::BadTermIndex(term_index))?;
    let h = &term.motif;
    let n = g.n() as f64;
    let hom = h.hom_count(g)? as f64;
    let ts = tilde_stats(g, p, Variant::Approximate);
    Ok(hom / n.powi(h.vertex_count() as i32 - 3) - remainder_leading(h, g.n(), p, &ts))
}

fn remainder_leading(h: &Motif, n: usize, p: f64, ts: &TildeStats) -> f64 {
    let n = n as f64;
    let e = h.edge_count() as i32;
    let mut leading = 2.0 * n * e as f64 * p.powi(e - 1) * ts.e_tilde;
    if h.two_stars() > 0 {
        leading += 2.0 * h.two_stars() as f64 * p.powi(e - 2) * ts.v_tilde;
    }
    if h.triangles() > 0 {
        leading += 6.0 * h.triangles() as f64 * p.powi(e - 3) * ts.t_tilde;
    }
    leading
}

/// Per-edge difference of [`remainder`], computed incrementally.
pub fn delta_remainder(
    spec: &ErgmSpec,
    g: &Graph,
    s: EdgeIndex,
    p: f64,
    term_index: usize,
) -> f64 {
    let term = &spec.terms()[term_index];
    let h = &term.motif;
    let n = g.n() as f64;
    let e = h.edge_count() as i32;
    let (a, b) = (s.i() as usize - 1, s.j() as usize - 1);
    let delta_hom =
        (h.automorphisms() * h.delta_copy(g, s).expect("validated graph/motif")) as f64;
    let on = g.has_raw(a, b) as u32;
    let deg_sum = (g.degree_raw(a) - on) as f64 + (g.degree_raw(b) - on) as f64;
    let delta_v = deg_sum - 2.0 * n * p;
    let delta_t = g.codegree_raw(a, b) as f64 - p * delta_v - n * p * p;
    let mut delta_leading = 2.0 * n * e as f64 * p.powi(e - 1);
    if h.two_stars() > 0 {
        delta_leading += 2.0 * h.two_stars() as f64 * p.powi(e - 2) * delta_v;
    }
    if h.triangles() > 0 {
        delta_leading += 6.0 * h.triangles() as f64 * p.powi(e - 3) * delta_t;
    }
    delta_hom / n.powi(h.vertex_count() as i32 - 3) - delta_leading
}

/// Split of a remainder into its decomposition pieces, grouped by the number
/// of vertices of the contributing subgraph classes:
/// r1 collects classes with v' >= 4, r2 the v' = 3 classes net of the tilde
/// subtraction, r3 the edge class net of its subtraction.
///
/// `constant + r1 + r2 + r3` equals [`remainder`] exactly.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderParts {
    pub constant: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl RemainderParts {
    pub fn total(&self) -> f64 {
        self.constant + self.r1 + self.r2 + self.r3
    }
}

pub fn remainder_parts(
    spec: &ErgmSpec,
    g: &Graph,
    p: f64,
    term_index: usize,
) -> Result<RemainderParts, ModelError> {
    let term = spec
        .terms()
        .get(term_index)
        .ok_or(ModelError::BadTermIndex(term_index))?;
    let h = &term.motif;
    let scale = (g.n() as f64).powi(h.vertex_count() as i32 - 3);
    let decomposition = full_decomposition(h, g, p)?;
    let ts = tilde_stats(g, p, Variant::Approximate);

    let mut by_size = [0.0f64; 3]; // v' = 2, v' = 3, v' >= 4
    for t in &decomposition.terms {
        let slot = (t.subgraph.vertex_count().min(4) - 2).min(2);
        by_size[slot] += t.coefficient * t.centered_count;
    }
    let n = g.n() as f64;
    let e = h.edge_count() as i32;
    let mut v3_leading = 0.0;
    if h.two_stars() > 0 {
        v3_leading += 2.0 * h.two_stars() as f64 * p.powi(e - 2) * ts.v_tilde;
    }
    if h.triangles() > 0 {
        v3_leading += 6.0 * h.triangles() as f64 * p.powi(e - 3) * ts.t_tilde;
    }
    Ok(RemainderParts {
        constant: decomposition.expected_hom / scale,
        r1: by_size[2] / scale,
        r2: by_size[1] / scale - v3_leading,
        r3: by_size[0] / scale - 2.0 * n * e as f64 * p.powi(e - 1) * ts.e_tilde,
    })
}
