//! The scalar fixed-point equation behind the reference edge density.
//!
//! For a spec with terms (H_i, beta_i) define
//!
//! ```text
//! Phi(a)   = sum_i beta_i e_i a^(e_i - 1),
//! phi(a)   = exp(2 Phi(a)) / (exp(2 Phi(a)) + 1),
//! ```
//!
//! and solve phi(a) = a on (0, 1). A unique root p with phi'(p) < 1 marks the
//! subcritical region; Phi'(1) < 2 is the stronger Dobrushin condition.

use crate::model::ErgmSpec;
use crate::stats::sigmoid;
use serde::Serialize;
use thiserror::Error;

const GRID_STEP: f64 = 1e-4;
const BISECTION_ITERATIONS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum FixedPointError {
    #[error("no root of phi(a) = a found in (0, 1)")]
    NoRoot,
}

/// Phi(a) = sum_i beta_i e_i a^(e_i - 1).
pub fn phi_cap(spec: &ErgmSpec, a: f64) -> f64 {
    spec.terms()
        .iter()
        .map(|t| {
            let e = t.motif.edge_count() as i32;
            t.beta * e as f64 * a.powi(e - 1)
        })
        .sum()
}

/// Phi'(a) = sum_{e_i >= 2} beta_i e_i (e_i - 1) a^(e_i - 2).
pub fn phi_cap_prime(spec: &ErgmSpec, a: f64) -> f64 {
    spec.terms()
        .iter()
        .filter(|t| t.motif.edge_count() >= 2)
        .map(|t| {
            let e = t.motif.edge_count() as i32;
            t.beta * (e * (e - 1)) as f64 * a.powi(e - 2)
        })
        .sum()
}

/// phi(a) = sigmoid(2 Phi(a)); maps [0, 1] into (0, 1).
pub fn phi(spec: &ErgmSpec, a: f64) -> f64 {
    sigmoid(2.0 * phi_cap(spec, a))
}

/// phi'(a) = 2 Phi'(a) phi(a) (1 - phi(a)).
pub fn phi_prime(spec: &ErgmSpec, a: f64) -> f64 {
    let v = phi(spec, a);
    2.0 * phi_cap_prime(spec, a) * v * (1.0 - v)
}

/// Classification of the fixed-point equation for one spec.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    /// Root of phi(a) = a (the one with smallest residual when several exist).
    pub p: f64,
    /// |phi(p) - p| at the returned root.
    pub residual: f64,
    pub phi_prime_p: f64,
    pub phi_cap_prime_1: f64,
    pub roots_found: usize,
    pub subcritical: bool,
    pub dobrushin: bool,
}

/// Locates all roots of phi(a) = a in (0, 1) by a sign-change scan with
/// bisection refinement, and classifies the parameter region.
///
/// Specs whose interaction parameters are all zero reduce to the closed-form
/// independent-edge density and skip the scan entirely.
pub fn solve_p(spec: &ErgmSpec) -> Result<FixedPointReport, FixedPointError> {
    if spec.interaction_free() {
        let p = sigmoid(2.0 * spec.terms()[0].beta);
        return Ok(FixedPointReport {
            p,
            residual: 0.0,
            phi_prime_p: 0.0,
            phi_cap_prime_1: 0.0,
            roots_found: 1,
            subcritical: true,
            dobrushin: true,
        });
    }

    let f = |a: f64| phi(spec, a) - a;
    let steps = (1.0 / GRID_STEP) as usize;
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_a = GRID_STEP;
    let mut prev_f = f(prev_a);
    if prev_f == 0.0 {
        roots.push(prev_a);
    }
    for k in 2..steps {
        let a = k as f64 * GRID_STEP;
        let fa = f(a);
        if fa == 0.0 {
            roots.push(a);
        } else if prev_f != 0.0 && prev_f.signum() != fa.signum() {
            roots.push(bisect(&f, prev_a, a));
        }
        prev_a = a;
        prev_f = fa;
    }

    if roots.is_empty() {
        // phi maps into (0, 1), so a continuous sign change always exists on a
        // fine enough grid; reaching this indicates a degenerate spec.
        return Err(FixedPointError::NoRoot);
    }

    let p = *roots
        .iter()
        .min_by(|a, b| {
            f(**a)
                .abs()
                .partial_cmp(&f(**b).abs())
                .expect("residuals are finite")
        })
        .expect("nonempty");
    let phi_prime_p = phi_prime(spec, p);
    let roots_found = roots.len();
    Ok(FixedPointReport {
        p,
        residual: f(p).abs(),
        phi_prime_p,
        phi_cap_prime_1: phi_cap_prime(spec, 1.0),
        roots_found,
        subcritical: roots_found == 1 && phi_prime_p < 1.0,
        dobrushin: phi_cap_prime(spec, 1.0) < 2.0,
    })
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if flo.signum() == fmid.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}
