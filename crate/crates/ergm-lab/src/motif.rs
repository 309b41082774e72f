//! Small pattern graphs: homomorphism and copy counting, per-edge count
//! deltas, and expected counts under independent edges.

use crate::graph::{EdgeIndex, Graph};
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_MOTIF_VERTICES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum MotifError {
    #[error("motifs support at most {MAX_MOTIF_VERTICES} vertices (got {0})")]
    TooManyVertices(usize),
    #[error("a motif needs at least 2 vertices and 1 edge")]
    TooSmall,
    #[error("motif vertex {0} is isolated")]
    IsolatedVertex(u32),
    #[error("bad motif edge ({0}, {1})")]
    BadEdge(u32, u32),
    #[error("motif has {motif} vertices but the graph only {graph}")]
    TooLargeForGraph { motif: usize, graph: usize },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("unknown motif name `{0}`")]
    UnknownName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedMotif {
    Edge,
    TwoStar,
    Triangle,
    Rectangle,
}

impl NamedMotif {
    pub fn parse(name: &str) -> Result<Self, MotifError> {
        match name {
            "edge" => Ok(Self::Edge),
            "two_star" => Ok(Self::TwoStar),
            "triangle" => Ok(Self::Triangle),
            "rectangle" => Ok(Self::Rectangle),
            other => Err(MotifError::UnknownName(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Edge => "edge",
            Self::TwoStar => "two_star",
            Self::Triangle => "triangle",
            Self::Rectangle => "rectangle",
        }
    }
}

/// Recognized shapes get closed-form counting kernels; everything else goes
/// through the generic backtracking counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Edge,
    TwoStar,
    Triangle,
    Rectangle,
    Generic,
}

/// A small simple graph without isolated vertices, with cached derived data.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motif {
    vertex_count: usize,
    edges: Vec<(u32, u32)>,
    shape: Shape,
    two_stars: u64,
    triangles: u64,
    automorphisms: u64,
}

impl Motif {
    pub fn named(which: NamedMotif) -> Self {
        let (v, edges): (usize, &[(u32, u32)]) = match which {
            NamedMotif::Edge => (2, &[(1, 2)]),
            NamedMotif::TwoStar => (3, &[(1, 2), (1, 3)]),
            NamedMotif::Triangle => (3, &[(1, 2), (1, 3), (2, 3)]),
            NamedMotif::Rectangle => (4, &[(1, 2), (2, 3), (3, 4), (1, 4)]),
        };
        Self::from_edges(v, edges.to_vec()).expect("named motifs are valid")
    }

    /// Builds a motif from an edge list over vertices 1..=v. Edges are
    /// normalized (ordered, sorted, deduplicated); isolated vertices are
    /// rejected.
    pub fn from_edges(v: usize, edges: Vec<(u32, u32)>) -> Result<Self, MotifError> {
        if v > MAX_MOTIF_VERTICES {
            return Err(MotifError::TooManyVertices(v));
        }
        if v < 2 || edges.is_empty() {
            return Err(MotifError::TooSmall);
        }
        let mut norm: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == 0 || b == 0 || a == b || a as usize > v || b as usize > v {
                return Err(MotifError::BadEdge(a, b));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        let mut deg = vec![0u32; v];
        for &(a, b) in &norm {
            deg[a as usize - 1] += 1;
            deg[b as usize - 1] += 1;
        }
        if let Some(iso) = deg.iter().position(|&d| d == 0) {
            return Err(MotifError::IsolatedVertex(iso as u32 + 1));
        }
        let two_stars: u64 = deg.iter().map(|&d| d as u64 * (d as u64 - 1) / 2).sum();
        let has = |a: u32, b: u32| norm.binary_search(&(a.min(b), a.max(b))).is_ok();
        let mut triangles = 0u64;
        for a in 1..=v as u32 {
            for b in a + 1..=v as u32 {
                for c in b + 1..=v as u32 {
                    if has(a, b) && has(a, c) && has(b, c) {
                        triangles += 1;
                    }
                }
            }
        }
        let automorphisms = count_automorphisms(v, &norm);
        let e = norm.len();
        let shape = match (v, e) {
            (2, 1) => Shape::Edge,
            (3, 2) => Shape::TwoStar,
            (3, 3) => Shape::Triangle,
            (4, 4) if two_stars == 4 && triangles == 0 => Shape::Rectangle,
            _ => Shape::Generic,
        };
        Ok(Self {
            vertex_count: v,
            edges: norm,
            shape,
            two_stars,
            triangles,
            automorphisms,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Number of two-star subgraphs of the motif itself.
    pub fn two_stars(&self) -> u64 {
        self.two_stars
    }

    /// Number of triangle subgraphs of the motif itself.
    pub fn triangles(&self) -> u64 {
        self.triangles
    }

    pub fn automorphisms(&self) -> u64 {
        self.automorphisms
    }

    pub fn is_edge(&self) -> bool {
        self.shape == Shape::Edge
    }

    pub fn as_graph(&self) -> Graph {
        let mut g = Graph::empty(self.vertex_count);
        for &(a, b) in &self.edges {
            g.set_edge(EdgeIndex::new(a, b).expect("valid edge"), true)
                .expect("in range");
        }
        g
    }

    fn check_fits(&self, g: &Graph) -> Result<(), MotifError> {
        if self.vertex_count > g.n() {
            return Err(MotifError::TooLargeForGraph {
                motif: self.vertex_count,
                graph: g.n(),
            });
        }
        Ok(())
    }

    /// Number of injective, edge-preserving maps from the motif into g.
    pub fn hom_count(&self, g: &Graph) -> Result<u64, MotifError> {
        self.check_fits(g)?;
        Ok(match self.shape {
            Shape::Edge => 2 * g.edge_count() as u64,
            Shape::TwoStar => 2 * g.two_star_count(),
            Shape::Triangle => 6 * g.triangle_count(),
            Shape::Rectangle => 8 * g.rectangle_count(),
            Shape::Generic => self.hom_count_backtracking(g),
        })
    }

    fn hom_count_backtracking(&self, g: &Graph) -> u64 {
        // Edges of the motif grouped by their larger endpoint, so each edge is
        // checked as soon as both endpoints are placed.
        let v = self.vertex_count;
        let mut constraints: Vec<Vec<usize>> = vec![Vec::new(); v];
        for &(a, b) in &self.edges {
            constraints[b as usize - 1].push(a as usize - 1);
        }
        fn recurse(
            level: usize,
            v: usize,
            g: &Graph,
            constraints: &[Vec<usize>],
            assignment: &mut [usize],
            used: &mut [bool],
        ) -> u64 {
            if level == v {
                return 1;
            }
            let mut total = 0;
            'candidates: for x in 0..g.n() {
                if used[x] {
                    continue;
                }
                for &earlier in &constraints[level] {
                    if !g.has_raw(assignment[earlier], x) {
                        continue 'candidates;
                    }
                }
                assignment[level] = x;
                used[x] = true;
                total += recurse(level + 1, v, g, constraints, assignment, used);
                used[x] = false;
            }
            total
        }
        let mut assignment = vec![usize::MAX; v];
        let mut used = vec![false; g.n()];
        recurse(0, v, g, &constraints, &mut assignment, &mut used)
    }

    /// Number of (not necessarily induced) copies: hom count divided by the
    /// automorphism count.
    pub fn copy_count(&self, g: &Graph) -> Result<u64, MotifError> {
        let hom = self.hom_count(g)?;
        debug_assert_eq!(hom % self.automorphisms, 0);
        Ok(hom / self.automorphisms)
    }

    /// Copy count with the edge s present minus copy count with s absent.
    /// Independent of the current state of the bit at s.
    pub fn delta_copy(&self, g: &Graph, s: EdgeIndex) -> Result<u64, MotifError> {
        self.check_fits(g)?;
        if s.j() as usize > g.n() {
            return Err(MotifError::TooLargeForGraph {
                motif: self.vertex_count,
                graph: g.n(),
            });
        }
        let (a, b) = (s.i() as usize - 1, s.j() as usize - 1);
        Ok(match self.shape {
            Shape::Edge => 1,
            Shape::TwoStar => {
                let on = g.has_raw(a, b) as u32;
                (g.degree_raw(a) - on) as u64 + (g.degree_raw(b) - on) as u64
            }
            Shape::Triangle => g.codegree_raw(a, b) as u64,
            Shape::Rectangle => g.path3_between_raw(a, b),
            Shape::Generic => {
                let mut scratch = g.clone();
                scratch.set_raw(a, b, true);
                let with = self.copy_count(&scratch)?;
                scratch.set_raw(a, b, false);
                let without = self.copy_count(&scratch)?;
                with - without
            }
        })
    }

    /// Expected copy count under independent edges with density p:
    /// (number of placements in the complete graph) * p^e.
    pub fn expected_copies(&self, n: usize, p: f64) -> Result<f64, MotifError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(MotifError::BadProbability(p));
        }
        if self.vertex_count > n {
            return Err(MotifError::TooLargeForGraph {
                motif: self.vertex_count,
                graph: n,
            });
        }
        let placements = falling_factorial(n, self.vertex_count) / self.automorphisms as f64;
        Ok(placements * p.powi(self.edges.len() as i32))
    }
}

/// n (n-1) ... (n-k+1) as f64.
pub(crate) fn falling_factorial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

fn count_automorphisms(v: usize, edges: &[(u32, u32)]) -> u64 {
    let has = |a: u32, b: u32| edges.binary_search(&(a.min(b), a.max(b))).is_ok();
    (1..=v as u32)
        .permutations(v)
        .filter(|perm| {
            edges
                .iter()
                .all(|&(a, b)| has(perm[a as usize - 1], perm[b as usize - 1]))
        })
        .count() as u64
}

/// JSON form: either `{"name": "edge"}` or `{"v": 4, "edges": [[1,2],...]}`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MotifRepr {
    Named { name: String },
    Explicit { v: usize, edges: Vec<(u32, u32)> },
}

impl Serialize for Motif {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = match self.shape {
            Shape::Edge => MotifRepr::Named { name: "edge".into() },
            Shape::TwoStar => MotifRepr::Named { name: "two_star".into() },
            Shape::Triangle => MotifRepr::Named { name: "triangle".into() },
            Shape::Rectangle => MotifRepr::Named { name: "rectangle".into() },
            Shape::Generic => MotifRepr::Explicit {
                v: self.vertex_count,
                edges: self.edges.clone(),
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Motif {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match MotifRepr::deserialize(deserializer)? {
            MotifRepr::Named { name } => {
                let named = NamedMotif::parse(&name).map_err(D::Error::custom)?;
                Ok(Motif::named(named))
            }
            MotifRepr::Explicit { v, edges } => {
                Motif::from_edges(v, edges).map_err(D::Error::custom)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::edge_indices;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k(n: usize) -> Graph {
        Graph::complete(n)
    }

    #[test]
    fn named_motif_signatures() {
        // (v, e, two-stars, triangles, automorphisms)
        let expect = [
            (NamedMotif::Edge, (2, 1, 0, 0, 2)),
            (NamedMotif::TwoStar, (3, 2, 1, 0, 2)),
            (NamedMotif::Triangle, (3, 3, 3, 1, 6)),
            (NamedMotif::Rectangle, (4, 4, 4, 0, 8)),
        ];
        for (named, (v, e, s2, t, aut)) in expect {
            let m = Motif::named(named);
            assert_eq!(
                (
                    m.vertex_count(),
                    m.edge_count(),
                    m.two_stars(),
                    m.triangles(),
                    m.automorphisms()
                ),
                (v, e, s2, t, aut),
                "{named:?}"
            );
        }
    }

    #[test]
    fn construction_rejects_bad_motifs() {
        assert_eq!(
            Motif::from_edges(3, vec![(1, 2)]).unwrap_err(),
            MotifError::IsolatedVertex(3)
        );
        assert!(Motif::from_edges(2, vec![]).is_err());
        assert!(Motif::from_edges(2, vec![(1, 1)]).is_err());
        assert!(Motif::from_edges(2, vec![(1, 3)]).is_err());
        assert!(Motif::from_edges(9, vec![(1, 2)]).is_err());
        // Duplicate and unordered edges normalize away.
        let m = Motif::from_edges(2, vec![(2, 1), (1, 2)]).unwrap();
        assert_eq!(m.edge_count(), 1);
    }

    #[test]
    fn hom_count_examples() {
        let edge = Motif::named(NamedMotif::Edge);
        let mut g = Graph::empty(5);
        g.set_edge(EdgeIndex::new(1, 4).unwrap(), true).unwrap();
        g.set_edge(EdgeIndex::new(2, 3).unwrap(), true).unwrap();
        assert_eq!(edge.hom_count(&g).unwrap(), 4); // 2E

        assert_eq!(Motif::named(NamedMotif::TwoStar).hom_count(&k(3)).unwrap(), 6);
        assert_eq!(Motif::named(NamedMotif::Triangle).hom_count(&k(3)).unwrap(), 6);
        assert_eq!(Motif::named(NamedMotif::Rectangle).hom_count(&k(4)).unwrap(), 24);
        assert!(Motif::named(NamedMotif::Rectangle).hom_count(&k(3)).is_err());
    }

    #[test]
    fn copy_count_examples() {
        let g = k(3);
        assert_eq!(Motif::named(NamedMotif::Edge).copy_count(&g).unwrap(), 3);
        assert_eq!(Motif::named(NamedMotif::TwoStar).copy_count(&g).unwrap(), 3);
        assert_eq!(Motif::named(NamedMotif::Triangle).copy_count(&g).unwrap(), 1);

        let mut single = Graph::empty(4);
        single.set_edge(EdgeIndex::new(1, 2).unwrap(), true).unwrap();
        assert_eq!(Motif::named(NamedMotif::TwoStar).copy_count(&single).unwrap(), 0);
        assert_eq!(Motif::named(NamedMotif::Triangle).copy_count(&single).unwrap(), 0);
        assert_eq!(Motif::named(NamedMotif::Rectangle).copy_count(&k(4)).unwrap(), 3);
    }

    #[test]
    fn delta_copy_examples() {
        let s = EdgeIndex::new(1, 2).unwrap();
        let empty = Graph::empty(6);
        assert_eq!(Motif::named(NamedMotif::Edge).delta_copy(&empty, s).unwrap(), 1);
        assert_eq!(Motif::named(NamedMotif::TwoStar).delta_copy(&empty, s).unwrap(), 0);
        assert_eq!(Motif::named(NamedMotif::Triangle).delta_copy(&empty, s).unwrap(), 0);

        // K4 minus (1,2): endpoint degrees without s are 2 and 2, so the
        // two-star delta is 4 (= brute-force copy difference 12 - 8).
        let mut g = k(4);
        g.set_edge(s, false).unwrap();
        assert_eq!(Motif::named(NamedMotif::TwoStar).delta_copy(&g, s).unwrap(), 4);
        assert_eq!(Motif::named(NamedMotif::Triangle).delta_copy(&g, s).unwrap(), 2);
    }

    #[test]
    fn delta_copy_matches_brute_force_and_ignores_current_bit() {
        let motifs = [
            Motif::named(NamedMotif::Edge),
            Motif::named(NamedMotif::TwoStar),
            Motif::named(NamedMotif::Triangle),
            Motif::named(NamedMotif::Rectangle),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let g = Graph::gnp(7, 0.4, &mut rng);
            for s in edge_indices(7) {
                for m in &motifs {
                    let mut on = g.clone();
                    on.set_edge(s, true).unwrap();
                    let mut off = g.clone();
                    off.set_edge(s, false).unwrap();
                    let brute = m.copy_count(&on).unwrap() - m.copy_count(&off).unwrap();
                    assert_eq!(m.delta_copy(&g, s).unwrap(), brute);
                    assert_eq!(m.delta_copy(&on, s).unwrap(), brute);
                    assert_eq!(m.delta_copy(&off, s).unwrap(), brute);
                }
            }
        }
    }

    #[test]
    fn hom_equals_aut_times_copies_for_all_small_graphs() {
        // Every isomorphism class on <= 4 vertices without isolated vertices.
        let motifs: Vec<Motif> = vec![
            Motif::named(NamedMotif::Edge),
            Motif::named(NamedMotif::TwoStar),
            Motif::named(NamedMotif::Triangle),
            Motif::named(NamedMotif::Rectangle),
            Motif::from_edges(4, vec![(1, 2), (2, 3), (3, 4)]).unwrap(), // path
            Motif::from_edges(4, vec![(1, 2), (3, 4)]).unwrap(),         // matching
            Motif::from_edges(4, vec![(1, 2), (1, 3), (1, 4)]).unwrap(), // star
            Motif::from_edges(4, vec![(1, 2), (1, 3), (2, 3), (1, 4)]).unwrap(), // paw
            Motif::from_edges(4, vec![(1, 2), (1, 3), (2, 3), (1, 4), (2, 4)]).unwrap(), // diamond
            Motif::from_edges(4, vec![(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]).unwrap(), // K4
        ];
        for index in 0..1u64 << 10 {
            let g = Graph::from_index(5, index);
            for m in &motifs {
                let hom = m.hom_count(&g).unwrap();
                assert_eq!(hom % m.automorphisms(), 0, "motif {m:?} on graph {index}");
                assert_eq!(hom / m.automorphisms(), m.copy_count(&g).unwrap());
            }
        }
    }

    #[test]
    fn generic_backtracking_agrees_with_closed_forms() {
        // Named motifs reconstructed as plain edge lists with permuted labels
        // still hit the same counts through the generic path.
        let pairs = [
            (
                Motif::named(NamedMotif::TwoStar),
                Motif::from_edges(3, vec![(2, 1), (2, 3)]).unwrap(),
            ),
            (
                Motif::named(NamedMotif::Rectangle),
                Motif::from_edges(4, vec![(1, 3), (3, 2), (2, 4), (4, 1)]).unwrap(),
            ),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let g = Graph::gnp(8, 0.5, &mut rng);
            for (named, relabeled) in &pairs {
                assert_eq!(named.hom_count(&g).unwrap(), relabeled.hom_count(&g).unwrap());
            }
        }
    }

    #[test]
    fn expected_copies_examples() {
        for named in [
            NamedMotif::Edge,
            NamedMotif::TwoStar,
            NamedMotif::Triangle,
            NamedMotif::Rectangle,
        ] {
            assert_eq!(Motif::named(named).expected_copies(6, 0.0).unwrap(), 0.0);
        }
        assert_eq!(Motif::named(NamedMotif::TwoStar).expected_copies(4, 0.5).unwrap(), 3.0);
        assert_eq!(Motif::named(NamedMotif::Edge).expected_copies(3, 0.5).unwrap(), 1.5);
        assert!(Motif::named(NamedMotif::Edge).expected_copies(3, 1.5).is_err());
    }

    #[test]
    fn expected_copies_matches_exhaustive_average() {
        // Average copy counts over all graphs on 4 vertices, weighted by G(4, p).
        for p in [0.3f64, 0.5] {
            for named in [
                NamedMotif::Edge,
                NamedMotif::TwoStar,
                NamedMotif::Triangle,
                NamedMotif::Rectangle,
            ] {
                let m = Motif::named(named);
                let mut mean = 0.0;
                for index in 0..64u64 {
                    let g = Graph::from_index(4, index);
                    let e = g.edge_count() as i32;
                    let weight = p.powi(e) * (1.0 - p).powi(6 - e);
                    mean += weight * m.copy_count(&g).unwrap() as f64;
                }
                let expect = m.expected_copies(4, p).unwrap();
                assert!((mean - expect).abs() < 1e-12, "{named:?} p={p}: {mean} vs {expect}");
            }
        }
    }

    #[test]
    fn monte_carlo_copy_means_match_expected_copies() {
        // Spot check of the G(n, p) law at n = 8 with 1e5 samples.
        let n = 8;
        let p = 0.4;
        let motifs = [
            Motif::named(NamedMotif::TwoStar),
            Motif::named(NamedMotif::Triangle),
            Motif::named(NamedMotif::Rectangle),
        ];
        let samples = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut sums = vec![0.0f64; motifs.len()];
        let mut sq = vec![0.0f64; motifs.len()];
        for _ in 0..samples {
            let g = Graph::gnp(n, p, &mut rng);
            for (i, m) in motifs.iter().enumerate() {
                let c = m.copy_count(&g).unwrap() as f64;
                sums[i] += c;
                sq[i] += c * c;
            }
        }
        for (i, m) in motifs.iter().enumerate() {
            let mean = sums[i] / samples as f64;
            let var = (sq[i] / samples as f64 - mean * mean).max(0.0);
            let se = (var / samples as f64).sqrt();
            let expect = m.expected_copies(n, p).unwrap();
            assert!(
                (mean - expect).abs() <= 4.0 * se,
                "motif {i}: mean {mean}, expected {expect}, se {se}"
            );
        }
    }

    #[test]
    fn json_round_trip() {
        let named: Motif = serde_json::from_str(r#"{"name": "rectangle"}"#).unwrap();
        assert_eq!(named, Motif::named(NamedMotif::Rectangle));
        let explicit: Motif =
            serde_json::from_str(r#"{"v": 4, "edges": [[1,2],[2,3],[3,4]]}"#).unwrap();
        assert_eq!(explicit.edge_count(), 3);
        let text = serde_json::to_string(&named).unwrap();
        assert!(text.contains("rectangle"));
        let back: Motif = serde_json::from_str(&text).unwrap();
        assert_eq!(back, named);
        assert!(serde_json::from_str::<Motif>(r#"{"name": "pentagon"}"#).is_err());
    }
}
