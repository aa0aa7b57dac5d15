//! Discounted future-state distributions and the restart ("Google") matrix
//! `P_γ = γP + (1−γ) e μᵀ` whose stationary distribution they are.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::check_gamma;
use crate::linalg::{self, resolvent_solve, Matrix, Side};
use crate::mdp::InducedChain;

/// Tail mass left out of the truncated series.
pub const SERIES_TAIL: f64 = 1e-14;
/// Hard cap on the number of series terms.
pub const SERIES_MAX_TERMS: usize = 1_000_000;
/// Maximum pairwise ℓ₁ disagreement tolerated between the three routes.
pub const METHOD_AGREEMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DiscountedTransition {
    pub gamma: f64,
    pub matrix: Matrix,
}

/// `γP + (1−γ) e μᵀ`
pub fn google_matrix(p: &Matrix, mu: &[f64], gamma: f64) -> Matrix {
    p.scale(gamma).add(&Matrix::repeat_row(mu).scale(1.0 - gamma))
}

pub fn discounted_transition(chain: &InducedChain, mu: &[f64], gamma: f64) -> Result<DiscountedTransition> {
    check_gamma(gamma)?;
    check_mu(chain, mu)?;
    Ok(DiscountedTransition {
        gamma,
        matrix: google_matrix(&chain.transition, mu, gamma),
    })
}

fn check_mu(chain: &InducedChain, mu: &[f64]) -> Result<()> {
    if mu.len() != chain.n_states() {
        return Err(Error::Shape {
            what: "initial distribution",
            expected: chain.n_states(),
            got: mu.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccupancyMethod {
    /// `(1−γ) Σ_{t≤T} γᵗ μᵀPᵗ`, truncated once `γ^{T+1} ≤ 1e-14`.
    Series,
    /// `(1−γ) μᵀ (I − γP)⁻¹`
    Resolvent,
    /// Stationary distribution of `P_γ`.
    Stationary,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscountedOccupancy {
    pub gamma: f64,
    pub dist: Vec<f64>,
    pub method: OccupancyMethod,
}

fn series_terms(gamma: f64) -> usize {
    if gamma == 0.0 {
        return 0;
    }
    // smallest T with γ^{T+1} ≤ tail
    let t = (SERIES_TAIL.ln() / gamma.ln()).ceil() as usize;
    t.saturating_sub(1).min(SERIES_MAX_TERMS)
}

fn series(p: &Matrix, mu: &[f64], gamma: f64) -> Vec<f64> {
    let mut term = mu.to_vec();
    let mut acc = mu.to_vec();
    let mut weight = 1.0;
    for _ in 0..series_terms(gamma) {
        term = p.vec_mul(&term);
        weight *= gamma;
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += weight * t;
        }
    }
    acc.iter().map(|v| (1.0 - gamma) * v).collect()
}

/// `d_γ^π` by the requested route.
pub fn occupancy(
    chain: &InducedChain,
    mu: &[f64],
    gamma: f64,
    method: OccupancyMethod,
) -> Result<DiscountedOccupancy> {
    check_gamma(gamma)?;
    check_mu(chain, mu)?;
    let p = &chain.transition;
    let dist = match method {
        OccupancyMethod::Series => series(p, mu, gamma),
        OccupancyMethod::Resolvent => {
            let b: Vec<f64> = mu.iter().map(|m| (1.0 - gamma) * m).collect();
            resolvent_solve(p, gamma, &b, Side::Left)?
                .into_iter()
                .map(|v| v.max(0.0))
                .collect()
        }
        OccupancyMethod::Stationary => linalg::stationary_distribution(&google_matrix(p, mu, gamma))?,
    };
    Ok(DiscountedOccupancy { gamma, dist, method })
}

/// All three routes plus their cross-checks.
#[derive(Debug, Clone, Serialize)]
pub struct OccupancyAgreement {
    pub gamma: f64,
    pub series: Vec<f64>,
    pub resolvent: Vec<f64>,
    pub stationary: Vec<f64>,
    /// Largest pairwise ℓ₁ distance between the routes.
    pub max_pairwise_l1: f64,
    /// `‖dᵀP_γ − dᵀ‖₁` for the resolvent result.
    pub stationarity_residual: f64,
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Computes `d_γ^π` by every route and fails if they disagree beyond `1e-8`.
pub fn occupancy_all(chain: &InducedChain, mu: &[f64], gamma: f64) -> Result<OccupancyAgreement> {
    let series = occupancy(chain, mu, gamma, OccupancyMethod::Series)?.dist;
    let resolvent = occupancy(chain, mu, gamma, OccupancyMethod::Resolvent)?.dist;
    let stationary = occupancy(chain, mu, gamma, OccupancyMethod::Stationary)?.dist;
    let max_pairwise_l1 = l1_distance(&series, &resolvent)
        .max(l1_distance(&series, &stationary))
        .max(l1_distance(&resolvent, &stationary));
    if max_pairwise_l1 > METHOD_AGREEMENT_TOL {
        return Err(Error::Inconsistent {
            what: "discounted occupancy routes",
            gap: max_pairwise_l1,
            tolerance: METHOD_AGREEMENT_TOL,
        });
    }
    let stationarity_residual =
        linalg::stationarity_residual(&google_matrix(&chain.transition, mu, gamma), &resolvent);
    Ok(OccupancyAgreement {
        gamma,
        series,
        resolvent,
        stationary,
        max_pairwise_l1,
        stationarity_residual,
    })
}
