//! Simulation laboratory for exponential random graph models (ERGMs) built
//! from edge, two-star, triangle and rectangle statistics.
//!
//! The crate provides:
//!
//! * [`graph`] — labeled simple graphs with O(1) edge toggles;
//! * [`motif`] — small pattern graphs with homomorphism/copy counting and
//!   per-edge count deltas;
//! * [`fixed_point`] — the scalar fixed-point equation behind the
//!   Erdős–Rényi reference density, with subcritical/Dobrushin classification;
//! * [`model`] — the exact ERGM log-weight and its first-order (independent
//!   edges), second-order (two-star/triangle tilt) and two-star-rewrite forms;
//! * [`hoeffding`] — centered copy counts, tilde statistics and the full
//!   orthogonal decomposition of homomorphism counts, plus remainder terms;
//! * [`sampler`] — Glauber heat-bath chains over any of the model densities
//!   and an exact enumeration oracle for tiny vertex counts;
//! * [`testfn`] — the degree-based truncated-square test statistic used by
//!   the sharpness and scaling studies, with bounded-difference norms;
//! * [`experiments`] — reproducible experiment drivers (sharpness, scaling,
//!   marginals, decomposition, remainders) with CSV/JSON outputs.

pub mod experiments;
pub mod fixed_point;
pub mod graph;
pub mod hoeffding;
pub mod model;
pub mod motif;
pub mod sampler;
pub mod stats;
pub mod testfn;

pub use fixed_point::{solve_p, FixedPointReport};
pub use graph::{edge_index_count, edge_indices, EdgeIndex, Graph, GraphError};
pub use model::{ErgmSpec, ModelKind, ModelName};
pub use motif::{Motif, MotifError, NamedMotif};
pub use sampler::{enumerate, run_chain, ChainConfig, Scan};
