//! Model specifications and the four log-weight functions used for sampling:
//! the exact density, the first-order independent-edge reference, the
//! second-order two-star/triangle tilt, and its plain two-star rewrite.
//!
//! Normalizing constants are never computed here; Glauber updates only need
//! per-edge log-weight differences, and only the enumeration oracle in
//! [`crate::sampler`] ever materializes a partition function.

use crate::fixed_point::{solve_p, FixedPointError, FixedPointReport};
use crate::graph::{EdgeIndex, Graph};
use crate::hoeffding::{tilde_stats, Variant};
use crate::motif::{Motif, MotifError, NamedMotif};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("a spec needs at least one term")]
    Empty,
    #[error("the first term must be the edge motif")]
    FirstTermNotEdge,
    #[error("interaction parameter beta_{index} = {value} is negative; region classification needs beta_2..k >= 0")]
    NegativeBeta { index: usize, value: f64 },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error("the two-star rewrite needs a triangle-free spec (some t_i > 0)")]
    RewriteNeedsTriangleFree,
    #[error("term index {0} out of range")]
    BadTermIndex(usize),
}

/// One weighted motif in a model specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgmTerm {
    pub motif: Motif,
    pub beta: f64,
}

/// A parameter vector beta with its motifs. The first term is always the edge
/// motif and every later beta is nonnegative.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr")]
pub struct ErgmSpec {
    terms: Vec<ErgmTerm>,
}

#[derive(Deserialize)]
struct SpecRepr {
    terms: Vec<ErgmTerm>,
}

impl TryFrom<SpecRepr> for ErgmSpec {
    type Error = SpecError;
    fn try_from(repr: SpecRepr) -> Result<Self, SpecError> {
        Self::new(repr.terms)
    }
}

impl ErgmSpec {
    pub fn new(terms: Vec<ErgmTerm>) -> Result<Self, SpecError> {
        if terms.is_empty() {
            return Err(SpecError::Empty);
        }
        if !terms[0].motif.is_edge() {
            return Err(SpecError::FirstTermNotEdge);
        }
        for (index, term) in terms.iter().enumerate().skip(1) {
            if term.beta < 0.0 {
                return Err(SpecError::NegativeBeta {
                    index: index + 1,
                    value: term.beta,
                });
            }
        }
        Ok(Self { terms })
    }

    /// Independent-edge spec: a single edge term.
    pub fn erdos_renyi(beta1: f64) -> Self {
        Self::new(vec![ErgmTerm {
            motif: Motif::named(NamedMotif::Edge),
            beta: beta1,
        }])
        .expect("edge-only spec is valid")
    }

    /// Edge plus rectangle.
    pub fn rectangle(beta1: f64, beta2: f64) -> Result<Self, SpecError> {
        Self::new(vec![
            ErgmTerm {
                motif: Motif::named(NamedMotif::Edge),
                beta: beta1,
            },
            ErgmTerm {
                motif: Motif::named(NamedMotif::Rectangle),
                beta: beta2,
            },
        ])
    }

    /// Edge plus two-star.
    pub fn edge_two_star(beta1: f64, beta2: f64) -> Result<Self, SpecError> {
        Self::new(vec![
            ErgmTerm {
                motif: Motif::named(NamedMotif::Edge),
                beta: beta1,
            },
            ErgmTerm {
                motif: Motif::named(NamedMotif::TwoStar),
                beta: beta2,
            },
        ])
    }

    pub fn terms(&self) -> &[ErgmTerm] {
        &self.terms
    }

    pub fn max_vertices(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.motif.vertex_count())
            .max()
            .expect("nonempty")
    }

    /// True when every beta_2..k is zero, reducing the model to independent edges.
    pub fn interaction_free(&self) -> bool {
        self.terms.iter().skip(1).all(|t| t.beta == 0.0)
    }

    /// True when no motif contains a triangle (t_i = 0 for all i).
    pub fn triangle_free(&self) -> bool {
        self.terms.iter().all(|t| t.motif.triangles() == 0)
    }

    /// True when no interaction motif contains a two-star (s_i = 0 for i >= 2).
    pub fn two_star_free(&self) -> bool {
        self.terms.iter().skip(1).all(|t| t.motif.two_stars() == 0)
    }

    /// Triangle coefficient of the second-order tilt: sum_i beta_i t_i p^(e_i - 3).
    pub fn c_triangle(&self, p: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.motif.triangles() > 0)
            .map(|t| t.beta * t.motif.triangles() as f64 * p.powi(t.motif.edge_count() as i32 - 3))
            .sum()
    }

    /// Two-star coefficient of the second-order tilt: sum_i beta_i s_i p^(e_i - 2).
    pub fn c_two_star(&self, p: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.motif.two_stars() > 0)
            .map(|t| t.beta * t.motif.two_stars() as f64 * p.powi(t.motif.edge_count() as i32 - 2))
            .sum()
    }

    pub fn validate_for_graph(&self, n: usize) -> Result<(), ModelError> {
        for term in &self.terms {
            if term.motif.vertex_count() > n {
                return Err(ModelError::Motif(MotifError::TooLargeForGraph {
                    motif: term.motif.vertex_count(),
                    graph: n,
                }));
            }
        }
        Ok(())
    }
}

/// CLI-facing model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Exact,
    First,
    Second,
    TwoStar,
}

impl ModelName {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::First => "first",
            Self::Second => "second",
            Self::TwoStar => "two-star",
        }
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the four densities governs sampling.
///
/// `SecondOrder` keeps the tilde statistics in their defining form
/// (count minus leading terms with the 2np / np^2 factors); the exact
/// falling-factorial coefficients live in [`crate::hoeffding`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    Exact,
    FirstOrder {
        p: f64,
    },
    SecondOrder {
        p: f64,
        c_triangle: f64,
        c_two_star: f64,
    },
    TwoStarRewrite {
        beta1_tilde: f64,
        beta2_tilde: f64,
    },
}

impl ModelKind {
    /// Builds the model of the given name for a spec, solving the fixed point
    /// where needed.
    pub fn build(name: ModelName, spec: &ErgmSpec) -> Result<ModelKind, ModelError> {
        match name {
            ModelName::Exact => Ok(ModelKind::Exact),
            ModelName::First => {
                let p = solve_p(spec)?.p;
                Ok(ModelKind::FirstOrder { p })
            }
            ModelName::Second => {
                let p = solve_p(spec)?.p;
                Ok(ModelKind::SecondOrder {
                    p,
                    c_triangle: spec.c_triangle(p),
                    c_two_star: spec.c_two_star(p),
                })
            }
            ModelName::TwoStar => {
                if !spec.triangle_free() {
                    return Err(ModelError::RewriteNeedsTriangleFree);
                }
                let p = solve_p(spec)?.p;
                Ok(Self::two_star_rewrite_at(spec, p))
            }
        }
    }

    /// The two-star rewrite of the second-order density at a given p:
    /// beta2~ = sum beta_i s_i p^(e_i - 2), beta1~ = log(p/(1-p))/2 - 2p beta2~.
    pub fn two_star_rewrite_at(spec: &ErgmSpec, p: f64) -> ModelKind {
        let c_v = spec.c_two_star(p);
        ModelKind::TwoStarRewrite {
            beta1_tilde: 0.5 * (p / (1.0 - p)).ln() - 2.0 * p * c_v,
            beta2_tilde: c_v,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::FirstOrder { .. } => "first",
            Self::SecondOrder { .. } => "second",
            Self::TwoStarRewrite { .. } => "two-star",
        }
    }

    /// Reference edge density, when the model carries one.
    pub fn p(&self) -> Option<f64> {
        match self {
            Self::FirstOrder { p } | Self::SecondOrder { p, .. } => Some(*p),
            _ => None,
        }
    }
}

fn log_odds(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unnormalized log-probability of a graph under a model.
pub fn log_weight(model: &ModelKind, spec: &ErgmSpec, g: &Graph) -> Result<f64, ModelError> {
    let n = g.n() as f64;
    let edges = g.edge_count() as f64;
    Ok(match *model {
        ModelKind::Exact => {
            let mut total = 0.0;
            for term in spec.terms() {
                let hom = term.motif.hom_count(g)? as f64;
                total += term.beta * hom / n.powi(term.motif.vertex_count() as i32 - 2);
            }
            total
        }
        ModelKind::FirstOrder { p } => edges * log_odds(p),
        ModelKind::SecondOrder {
            p,
            c_triangle,
            c_two_star,
        } => {
            spec.validate_for_graph(g.n())?;
            let ts = tilde_stats(g, p, Variant::Approximate);
            (6.0 * c_triangle / n) * ts.t_tilde
                + (2.0 * c_two_star / n) * ts.v_tilde
                + edges * log_odds(p)
        }
        ModelKind::TwoStarRewrite {
            beta1_tilde,
            beta2_tilde,
        } => {
            (2.0 * beta2_tilde / n) * g.two_star_count() as f64 + 2.0 * beta1_tilde * edges
        }
    })
}

/// log_weight with the edge s present minus log_weight with s absent,
/// computed incrementally. Independent of the current bit at s.
///
/// The pair (model, spec) must fit the graph (see
/// [`ErgmSpec::validate_for_graph`]); chains validate once up front.
pub fn delta_log_weight(model: &ModelKind, spec: &ErgmSpec, g: &Graph, s: EdgeIndex) -> f64 {
    let n = g.n() as f64;
    let (a, b) = (s.i() as usize - 1, s.j() as usize - 1);
    match *model {
        ModelKind::Exact => {
            let mut total = 0.0;
            for term in spec.terms() {
                let delta_hom = (term.motif.automorphisms()
                    * term
                        .motif
                        .delta_copy(g, s)
                        .expect("validated model/graph pair")) as f64;
                total += term.beta * delta_hom / n.powi(term.motif.vertex_count() as i32 - 2);
            }
            total
        }
        ModelKind::FirstOrder { p } => log_odds(p),
        ModelKind::SecondOrder {
            p,
            c_triangle,
            c_two_star,
        } => {
            let on = g.has_raw(a, b) as u32;
            let deg_sum = (g.degree_raw(a) - on) as f64 + (g.degree_raw(b) - on) as f64;
            let delta_v = deg_sum - 2.0 * n * p;
            let delta_t = g.codegree_raw(a, b) as f64 - p * delta_v - n * p * p;
            (6.0 * c_triangle / n) * delta_t + (2.0 * c_two_star / n) * delta_v + log_odds(p)
        }
        ModelKind::TwoStarRewrite {
            beta1_tilde,
            beta2_tilde,
        } => {
            let on = g.has_raw(a, b) as u32;
            let deg_sum = (g.degree_raw(a) - on) as f64 + (g.degree_raw(b) - on) as f64;
            (2.0 * beta2_tilde / n) * deg_sum + 2.0 * beta1_tilde
        }
    }
}

/// Fixed-point report plus the spec-level symmetry flags, the shape the CLI
/// reports for validation.
#[derive(Debug, Clone, Serialize)]
pub struct SpecValidation {
    pub fixed_point: FixedPointReport,
    pub triangle_free: bool,
    pub two_star_free: bool,
}

pub fn validate_spec(spec: &ErgmSpec) -> Result<SpecValidation, ModelError> {
    Ok(SpecValidation {
        fixed_point: solve_p(spec)?,
        triangle_free: spec.triangle_free(),
        two_star_free: spec.two_star_free(),
    })
}
