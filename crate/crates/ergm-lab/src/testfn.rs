//! Degree-based truncated-square test statistic and bounded-difference norms.
//!
//! The statistic attaches to each vertex i an independent standard normal W_i
//! and evaluates
//!
//! ```text
//! h_n(g) = sum_i E_W[ min( (2 d_i / (n-1) - 2p + W_i / sigma)^2, M/n ) ],
//! sigma  = sqrt(n beta2~ / 2).
//! ```
//!
//! The W-expectation is integrated out per vertex with Gauss–Hermite
//! quadrature, so chain estimates of h_n carry no W-noise. Because the value
//! depends on the graph only through its degree vector, one table of
//! per-degree values covers a whole chain.

use crate::graph::Graph;
use crate::stats::sigmoid;
use gauss_quad::GaussHermite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};
use std::num::NonZeroUsize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TestFnError {
    #[error("density p = {0} must lie strictly inside (0, 1)")]
    BadDensity(f64),
    #[error("beta2~ = {0} must be positive")]
    BadTilt(f64),
    #[error("truncation constant M = {0} must be nonnegative")]
    BadTruncation(f64),
    #[error("need at least 2 quadrature nodes (got {0})")]
    BadNodeCount(usize),
    #[error("test function built for n = {expected}, graph has n = {actual}")]
    WrongGraphSize { expected: usize, actual: usize },
}

/// Parameters of the truncated-square statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharpnessParams {
    pub p: f64,
    pub beta2_tilde: f64,
    /// Truncation constant M; the per-vertex term is capped at M/n.
    pub m_trunc: f64,
    pub quadrature_nodes: usize,
}

impl SharpnessParams {
    pub fn new(
        p: f64,
        beta2_tilde: f64,
        m_trunc: f64,
        quadrature_nodes: usize,
    ) -> Result<Self, TestFnError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(TestFnError::BadDensity(p));
        }
        if beta2_tilde <= 0.0 {
            return Err(TestFnError::BadTilt(beta2_tilde));
        }
        if !(m_trunc >= 0.0) {
            return Err(TestFnError::BadTruncation(m_trunc));
        }
        if quadrature_nodes < 2 {
            return Err(TestFnError::BadNodeCount(quadrature_nodes));
        }
        Ok(Self {
            p,
            beta2_tilde,
            m_trunc,
            quadrature_nodes,
        })
    }

    /// Noise scale sigma = sqrt(n beta2~ / 2).
    pub fn sigma(&self, n: usize) -> f64 {
        (n as f64 * self.beta2_tilde / 2.0).sqrt()
    }

    fn rule(&self) -> GaussHermite {
        GaussHermite::new(NonZeroUsize::new(self.quadrature_nodes).expect("validated"))
    }
}

fn g_vertex_with_rule(rule: &GaussHermite, d: u32, n: usize, params: &SharpnessParams) -> f64 {
    let c = 2.0 * d as f64 / (n as f64 - 1.0) - 2.0 * params.p;
    let s = 1.0 / params.sigma(n);
    let cap = params.m_trunc / n as f64;
    // E over W ~ N(0,1): substitute W = sqrt(2) x against the e^(-x^2) weight.
    rule.integrate(|x| {
        let y = c + s * std::f64::consts::SQRT_2 * x;
        (y * y).min(cap)
    }) / std::f64::consts::PI.sqrt()
}

/// Per-vertex term: E_W[min((2d/(n-1) - 2p + W/sigma)^2, M/n)].
pub fn g_vertex(d: u32, n: usize, params: &SharpnessParams) -> f64 {
    g_vertex_with_rule(&params.rule(), d, n, params)
}

/// Precomputed per-degree values of the statistic for one (n, params) pair.
#[derive(Debug, Clone)]
pub struct HnTable {
    n: usize,
    values: Vec<f64>,
}

impl HnTable {
    pub fn build(n: usize, params: &SharpnessParams) -> Result<Self, TestFnError> {
        if n < 2 {
            return Err(TestFnError::WrongGraphSize {
                expected: 2,
                actual: n,
            });
        }
        let rule = params.rule();
        let values = (0..n as u32)
            .map(|d| g_vertex_with_rule(&rule, d, n, params))
            .collect();
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// h_n(g): sum of the per-degree values over the degree vector.
    pub fn value(&self, g: &Graph) -> f64 {
        debug_assert_eq!(g.n(), self.n);
        g.degrees().iter().map(|&d| self.values[d as usize]).sum()
    }

    /// Exact bounded-difference norm: toggling one edge moves exactly two
    /// degrees by one, so sup |h(on) - h(off)| = 2 max_d |v[d+1] - v[d]|.
    pub fn bounded_diff_norm(&self) -> f64 {
        2.0 * self
            .values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }
}

/// Bounded-difference norm of h_n for the given parameters.
pub fn bounded_diff_norm_hn(n: usize, params: &SharpnessParams) -> Result<f64, TestFnError> {
    Ok(HnTable::build(n, params)?.bounded_diff_norm())
}

/// E h_n under independent edges at density p: degrees are Binomial(n-1, p)
/// and the statistic is a per-vertex sum, so
/// E h_n = n * sum_d pmf(d) g_vertex(d).
pub fn expect_hn_under_er(n: usize, params: &SharpnessParams) -> Result<f64, TestFnError> {
    let table = HnTable::build(n, params)?;
    let binom = Binomial::new(params.p, n as u64 - 1).expect("validated p");
    let mean: f64 = table
        .values
        .iter()
        .enumerate()
        .map(|(d, v)| binom.pmf(d as u64) * v)
        .sum();
    Ok(n as f64 * mean)
}

/// Empirical lower bound for the bounded-difference norm of an arbitrary
/// graph functional: max |h(toggle s) - h(g)| over `trials` sampled
/// (graph, edge) pairs with uniformly random graphs.
pub fn black_box_delta_norm<F: Fn(&Graph) -> f64>(
    h: F,
    n: usize,
    trials: usize,
    seed: u64,
) -> f64 {
    assert!(trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = crate::graph::edge_index_count(n);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut g = Graph::gnp(n, 0.5, &mut rng);
        let s = crate::graph::EdgeIndex::from_linear(rng.random_range(0..count), n);
        let before = h(&g);
        g.toggle(s).expect("in range");
        worst = worst.max((h(&g) - before).abs());
    }
    worst
}

/// The scalar constants of the sharpness comparison at (p, beta2~):
/// a1~ = theta~ - theta~^2 (1 - t~^2) with theta~ = beta2~/2, t~ = 2p - 1;
/// the target is 1/a1~ and the independent-edge ceiling is 4p(1-p) + 2/beta2~.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SharpnessConstants {
    pub a1_tilde: f64,
    pub target: f64,
    pub er_bound: f64,
}

pub fn sharpness_constants(p: f64, beta2_tilde: f64) -> SharpnessConstants {
    let theta = beta2_tilde / 2.0;
    let t = 2.0 * p - 1.0;
    let a1_tilde = theta - theta * theta * (1.0 - t * t);
    SharpnessConstants {
        a1_tilde,
        target: 1.0 / a1_tilde,
        er_bound: 4.0 * p * (1.0 - p) + 2.0 / beta2_tilde,
    }
}

/// Diagnostic companion of the per-vertex statistic without truncation:
/// E_W sum_i (2d_i/(n-1) - 1 + W_i/sqrt((n-1)theta) - t~)^2 with
/// theta = beta2~ (n-1) / (2n) and t~ = 2p - 1. The W-expectation is analytic.
/// Uses t~ in place of the O(1/n)-shifted centering, so carries an O(1/n) bias.
pub fn phi_sum_diagnostic(g: &Graph, params: &SharpnessParams) -> f64 {
    let n = g.n() as f64;
    let theta = params.beta2_tilde * (n - 1.0) / (2.0 * n);
    let noise_var = 1.0 / ((n - 1.0) * theta);
    let t = 2.0 * params.p - 1.0;
    g.degrees()
        .iter()
        .map(|&d| {
            let c = 2.0 * d as f64 / (n - 1.0) - 1.0 - t;
            c * c + noise_var
        })
        .sum()
}

/// Rao-Blackwellized edge marginal: the heat-bath conditional probability of
/// the edge being present given the rest of the graph.
pub fn conditional_edge_probability(
    model: &crate::model::ModelKind,
    spec: &crate::model::ErgmSpec,
    g: &Graph,
    s: crate::graph::EdgeIndex,
) -> f64 {
    sigmoid(crate::model::delta_log_weight(model, spec, g, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{edge_index_count, EdgeIndex};
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    fn params(p: f64, b2: f64, m: f64) -> SharpnessParams {
        SharpnessParams::new(p, b2, m, 64).unwrap()
    }

    /// Closed form of E[min((c + sW)^2, T^2)] via truncated normal moments;
    /// independent of the quadrature path.
    fn g_vertex_closed_form(d: u32, n: usize, pr: &SharpnessParams) -> f64 {
        let c = 2.0 * d as f64 / (n as f64 - 1.0) - 2.0 * pr.p;
        let s = 1.0 / pr.sigma(n);
        let cap = pr.m_trunc / n as f64;
        let t = cap.sqrt();
        let std = Normal::new(0.0, 1.0).unwrap();
        let a = (-t - c) / s;
        let b = (t - c) / s;
        let m0 = std.cdf(b) - std.cdf(a);
        let m1 = std.pdf(a) - std.pdf(b);
        let m2 = m0 + a * std.pdf(a) - b * std.pdf(b);
        c * c * m0 + 2.0 * c * s * m1 + s * s * m2 + cap * (1.0 - m0)
    }

    #[test]
    fn zero_truncation_kills_the_statistic() {
        let pr = params(0.5, 0.16, 0.0);
        assert_eq!(g_vertex(3, 10, &pr), 0.0);
        let table = HnTable::build(10, &pr).unwrap();
        assert_eq!(table.value(&Graph::complete(10)), 0.0);
        assert_eq!(table.bounded_diff_norm(), 0.0);
        assert_eq!(expect_hn_under_er(10, &pr).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_matches_closed_form_in_working_range() {
        // Degrees within +-6 standard deviations of the binomial mean, the
        // range chains actually visit. The truncation kink limits a 64-node
        // rule to a few 1e-4 there (measured); binomially weighted, the
        // resulting bias of E h_n is below 1e-5. Far-tail degrees push the
        // kink into the bulk of the W-distribution and are only ~1e-3 accurate.
        for (n, p, b2, m) in [
            (64usize, 0.5, 0.16, 200.0),
            (256, 0.5, 0.16, 200.0),
            (400, 0.5, 0.16, 200.0),
            (100, 0.3, 0.4, 150.0),
        ] {
            let pr = params(p, b2, m);
            let rule = pr.rule();
            let mean = p * (n as f64 - 1.0);
            let sd = ((n as f64 - 1.0) * p * (1.0 - p)).sqrt();
            let lo = (mean - 6.0 * sd).max(0.0) as u32;
            let hi = ((mean + 6.0 * sd) as u32).min(n as u32 - 1);
            for d in lo..=hi {
                let q = g_vertex_with_rule(&rule, d, n, &pr);
                let cf = g_vertex_closed_form(d, n, &pr);
                let tolerance = if (d as f64 - mean).abs() <= 4.0 * sd {
                    1e-4
                } else {
                    5e-4
                };
                assert!(
                    (q - cf).abs() < tolerance,
                    "n={n} d={d}: quadrature {q} vs closed form {cf}"
                );
            }
        }
    }

    #[test]
    fn binomially_weighted_quadrature_bias_is_negligible() {
        // The E h_n estimand only sees the quadrature error through the
        // binomial degree weights, which crush the far-tail kink error.
        for n in [64usize, 300] {
            let pr = params(0.5, 0.16, 200.0);
            let rule = pr.rule();
            let binom = Binomial::new(pr.p, n as u64 - 1).unwrap();
            let bias: f64 = (0..n as u32)
                .map(|d| {
                    binom.pmf(d as u64)
                        * (g_vertex_with_rule(&rule, d, n, &pr) - g_vertex_closed_form(d, n, &pr))
                })
                .sum::<f64>()
                * n as f64;
            assert!(bias.abs() < 1e-4, "n={n}: bias {bias}");
        }
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        use rand_distr::StandardNormal;
        let n = 200;
        let pr = params(0.5, 0.16, 200.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = 1.0 / pr.sigma(n);
        let cap = pr.m_trunc / n as f64;
        for d in [70u32, 100, 130] {
            let c = 2.0 * d as f64 / (n as f64 - 1.0) - 1.0;
            let draws = 1_000_000;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..draws {
                let w: f64 = rng.sample(StandardNormal);
                let y = c + s * w;
                let v = (y * y).min(cap);
                sum += v;
                sq += v * v;
            }
            let mean = sum / draws as f64;
            let var = (sq / draws as f64 - mean * mean).max(0.0);
            let se = (var / draws as f64).sqrt();
            let q = g_vertex(d, n, &pr);
            assert!(
                (q - mean).abs() <= 4.0 * se,
                "d={d}: quadrature {q}, MC {mean} +- {se}"
            );
        }
    }

    #[test]
    fn pure_noise_degree_hits_inverse_sigma_squared() {
        // d = p(n-1) exactly: the deterministic offset vanishes and the value
        // is E[W^2/sigma^2] up to a sub-1e-3 truncation correction.
        let n = 401;
        let pr = params(0.5, 0.16, 200.0);
        let d = (pr.p * (n as f64 - 1.0)) as u32;
        let expect = 2.0 / (n as f64 * pr.beta2_tilde);
        let got = g_vertex(d, n, &pr);
        assert!((got - expect).abs() < 1e-3 * expect);
        assert!(got <= expect + 1e-12);
    }

    #[test]
    fn g_vertex_respects_truncation_cap() {
        let pr = params(0.4, 0.25, 30.0);
        for n in [20usize, 50] {
            for d in 0..n as u32 {
                let v = g_vertex(d, n, &pr);
                assert!(v >= 0.0 && v <= pr.m_trunc / n as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn hn_depends_only_on_degrees() {
        let pr = params(0.5, 0.16, 200.0);
        let table = HnTable::build(6, &pr).unwrap();
        // Two labelings of the same degree sequence.
        let mut g1 = Graph::empty(6);
        for (i, j) in [(1, 2), (2, 3), (4, 5)] {
            g1.set_edge(EdgeIndex::new(i, j).unwrap(), true).unwrap();
        }
        let mut g2 = Graph::empty(6);
        for (i, j) in [(5, 6), (4, 5), (2, 3)] {
            g2.set_edge(EdgeIndex::new(i, j).unwrap(), true).unwrap();
        }
        let mut d1 = g1.degrees().to_vec();
        let mut d2 = g2.degrees().to_vec();
        d1.sort_unstable();
        d2.sort_unstable();
        assert_eq!(d1, d2);
        // Identical up to summation order.
        assert!((table.value(&g1) - table.value(&g2)).abs() < 1e-12);
    }

    #[test]
    fn bounded_diff_norm_scales_like_n_to_three_halves() {
        let pr = params(0.5, 0.16, 200.0);
        let mut scaled = Vec::new();
        for n in [50usize, 100, 200, 400, 800] {
            let norm = bounded_diff_norm_hn(n, &pr).unwrap();
            scaled.push(norm * (n as f64).powf(1.5));
        }
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            max / min < 2.0,
            "norm * n^(3/2) should be flat within x2: {scaled:?}"
        );
    }

    #[test]
    fn black_box_norm_examples() {
        // Edge count: toggling an edge changes it by exactly one.
        let norm = black_box_delta_norm(|g| g.edge_count() as f64, 8, 200, 5);
        assert_eq!(norm, 1.0);
        // Two-star count on four vertices: bounded by 2(n-2) = 4.
        let norm = black_box_delta_norm(|g| g.two_star_count() as f64, 4, 500, 6);
        assert!(norm <= 4.0 && norm > 0.0);
    }

    #[test]
    fn black_box_norm_of_hn_is_below_the_exact_bound() {
        let pr = params(0.5, 0.16, 200.0);
        let table = HnTable::build(30, &pr).unwrap();
        let bound = table.bounded_diff_norm();
        let observed = black_box_delta_norm(|g| table.value(g), 30, 2000, 7);
        assert!(observed <= bound + 1e-12, "{observed} vs bound {bound}");
        assert!(observed > 0.0);
    }

    #[test]
    fn expected_hn_under_er_matches_enumeration_at_n4() {
        let pr = SharpnessParams::new(0.35, 0.2, 50.0, 64).unwrap();
        let table = HnTable::build(4, &pr).unwrap();
        let p = pr.p;
        let mut mean = 0.0;
        for index in 0..64u64 {
            let g = Graph::from_index(4, index);
            let e = g.edge_count() as i32;
            let w = p.powi(e) * (1.0 - p).powi(edge_index_count(4) as i32 - e);
            mean += w * table.value(&g);
        }
        let direct = expect_hn_under_er(4, &pr).unwrap();
        assert!((mean - direct).abs() < 1e-10, "{mean} vs {direct}");
    }

    #[test]
    fn expected_hn_stays_under_the_er_ceiling() {
        let pr = params(0.5, 0.16, 200.0);
        let ceiling = sharpness_constants(0.5, 0.16).er_bound;
        for n in [200usize, 400, 800] {
            let v = expect_hn_under_er(n, &pr).unwrap();
            // 4p(1-p) n/(n-1) + 2/beta2~ minus the truncation deficit.
            assert!(v <= ceiling + 4.0 * 0.25 / (n as f64 - 1.0) + 1e-9, "n={n}: {v}");
            assert!(v > ceiling - 0.5);
        }
    }

    #[test]
    fn sharpness_constants_reference_point() {
        let c = sharpness_constants(0.5, 0.16);
        assert!((c.a1_tilde - 0.0736).abs() < 1e-12);
        assert!((c.target - 13.58696).abs() < 5e-5);
        assert!((c.er_bound - 13.5).abs() < 1e-12);
        assert!(c.target > c.er_bound);
    }

    #[test]
    fn phi_sum_diagnostic_tracks_untruncated_values() {
        // With a huge truncation constant the truncated statistic approaches
        // the diagnostic up to the (n-1)/n noise-scale difference.
        let n = 60;
        let pr = SharpnessParams::new(0.5, 0.16, 1e9, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let table = HnTable::build(n, &pr).unwrap();
        let g = Graph::gnp(n, 0.5, &mut rng);
        let diag = phi_sum_diagnostic(&g, &pr);
        let hn = table.value(&g);
        assert!((diag - hn).abs() < 0.05 * diag.abs().max(1.0), "{diag} vs {hn}");
    }

    #[test]
    fn parameter_validation() {
        assert!(SharpnessParams::new(0.0, 0.16, 200.0, 64).is_err());
        assert!(SharpnessParams::new(0.5, 0.0, 200.0, 64).is_err());
        assert!(SharpnessParams::new(0.5, 0.16, -1.0, 64).is_err());
        assert!(SharpnessParams::new(0.5, 0.16, 200.0, 1).is_err());
    }
}
