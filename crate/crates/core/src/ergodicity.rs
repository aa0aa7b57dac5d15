//! One-norm ergodicity coefficient `τ₁` and the discounted group inverse.
//!
//! `τ₁[A] = max{‖Aᵀx‖₁ : ‖x‖₁ = 1, xᵀe = 0}`. The feasible set is a polytope
//! whose vertices are `(e_i − e_j)/2`, and a convex function attains its
//! maximum at a vertex, so `τ₁[A] = ½ max_{i,j} ‖A(i,·) − A(j,·)‖₁`. The
//! pairwise form makes `τ₁[A + e cᵀ] = τ₁[A]` hold exactly in floating point
//! since both rows shift by the same `c`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::check_gamma;
use crate::linalg::{self, GroupInverseResult, Matrix, GROUP_INVERSE_TOL};
use crate::mdp::{analyze_chain, InducedChain};
use crate::occupancy::{google_matrix, occupancy, OccupancyMethod};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicityCoefficient {
    pub value: f64,
    /// Rows `(i, j)` at maximal ℓ₁ distance.
    pub argmax_pair: (usize, usize),
}

/// `τ₁[A] = ½ max_{i,j} Σ_z |A(i,z) − A(j,z)|`.
pub fn tau1(a: &Matrix) -> ErgodicityCoefficient {
    let n = a.order();
    let mut best = ErgodicityCoefficient {
        value: 0.0,
        argmax_pair: (0, 0),
    };
    for i in 0..n {
        let ri = a.row(i);
        for j in i + 1..n {
            let dist: f64 = ri.iter().zip(a.row(j)).map(|(x, y)| (x - y).abs()).sum();
            let value = 0.5 * dist;
            if value > best.value {
                best = ErgodicityCoefficient {
                    value,
                    argmax_pair: (i, j),
                };
            }
        }
    }
    best
}

/// `|τ₁[A] − τ₁[A + e cᵀ]|`
pub fn tau1_translation_check(a: &Matrix, c: &[f64]) -> f64 {
    (tau1(a).value - tau1(&a.add(&Matrix::repeat_row(c))).value).abs()
}

/// Group inverse of `I − P_γ` with the discounted occupancy it was built from.
#[derive(Debug, Clone)]
pub struct DiscountedGroupInverse {
    pub gamma: f64,
    pub occupancy: Vec<f64>,
    pub result: GroupInverseResult,
}

/// Group inverse of `I − P_γ` for `P_γ = γP + (1−γ) e μᵀ`.
///
/// Refused when some state is unreachable from `support(μ)`: `P_γ` is then
/// reducible.
pub fn discounted_group_inverse(chain: &InducedChain, mu: &[f64], gamma: f64) -> Result<DiscountedGroupInverse> {
    check_gamma(gamma)?;
    let report = analyze_chain(&chain.transition, mu);
    if !report.all_reachable() {
        return Err(Error::NotIrreducible {
            unreachable: chain.n_states() - report.reachable.len(),
        });
    }
    let d_gamma = occupancy(chain, mu, gamma, OccupancyMethod::Resolvent)?.dist;
    let result = linalg::group_inverse(&google_matrix(&chain.transition, mu, gamma), &d_gamma)?;
    accept_group_inverse("discounted group inverse", &result)?;
    Ok(DiscountedGroupInverse {
        gamma,
        occupancy: d_gamma,
        result,
    })
}

/// Group inverse of `I − P` for a unichain `P`, with its stationary distribution.
pub fn chain_group_inverse(p: &Matrix) -> Result<(Vec<f64>, GroupInverseResult)> {
    let d = linalg::stationary_distribution(p)?;
    let result = linalg::group_inverse(p, &d)?;
    accept_group_inverse("group inverse", &result)?;
    Ok((d, result))
}

fn accept_group_inverse(what: &'static str, g: &GroupInverseResult) -> Result<()> {
    let gap = g.max_residual();
    if gap > GROUP_INVERSE_TOL {
        return Err(Error::Inconsistent {
            what,
            gap,
            tolerance: GROUP_INVERSE_TOL,
        });
    }
    Ok(())
}

/// Both sides of the resolvent representation of `D_γ`.
#[derive(Debug, Clone, Serialize)]
pub struct MatrDiffReport {
    pub gamma: f64,
    /// `max |D_γ − [R + e d_γᵀ(I − R) − e dᵀ]|` with `R = (I − γP)⁻¹`.
    pub identity_gap: f64,
    /// `max |D_γ − (I − e d_γᵀ) R|`.
    pub corrected_identity_gap: f64,
    /// `max |d_γ − d|`: the size of the rank-one term separating the two forms.
    pub occupancy_stationary_gap: f64,
    /// `|τ₁[D_γ] − τ₁[R]|`
    pub tau1_gap: f64,
    pub tau1_group_inverse: f64,
    pub tau1_resolvent: f64,
}

/// Compares `D_γ` with `R + e d_γᵀ(I − R) − e dᵀ`, `R = (I − γP)⁻¹`.
///
/// The two differ by exactly `e (d_γ − d)ᵀ`; the exact identity is
/// `D_γ = (I − e d_γᵀ) R`, which is reported alongside. Either way the τ₁
/// values agree, since the matrices differ by `e cᵀ`.
pub fn matr_diff_check(chain: &InducedChain, mu: &[f64], gamma: f64) -> Result<MatrDiffReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("discount factor {gamma} outside (0, 1)")));
    }
    let p = &chain.transition;
    analyze_chain(p, mu).require_unichain()?;
    let n = p.order();
    let (d, _) = chain_group_inverse(p)?;
    let dg = discounted_group_inverse(chain, mu, gamma)?;
    let r = linalg::Lu::factor(&Matrix::identity(n).sub(&p.scale(gamma)))?.inverse();
    let id = Matrix::identity(n);
    let e_dg = Matrix::repeat_row(&dg.occupancy);
    let stated = r
        .add(&e_dg.matmul(&id.sub(&r)))
        .sub(&Matrix::repeat_row(&d));
    let corrected = id.sub(&e_dg).matmul(&r);
    let tau1_group_inverse = tau1(&dg.result.d_matrix).value;
    let tau1_resolvent = tau1(&r).value;
    Ok(MatrDiffReport {
        gamma,
        identity_gap: dg.result.d_matrix.max_abs_diff(&stated),
        corrected_identity_gap: dg.result.d_matrix.max_abs_diff(&corrected),
        occupancy_stationary_gap: dg
            .occupancy
            .iter()
            .zip(&d)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        tau1_gap: (tau1_group_inverse - tau1_resolvent).abs(),
        tau1_group_inverse,
        tau1_resolvent,
    })
}

/// Spectral upper bounds on `τ₁[D_γ]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralBounds {
    pub gamma: f64,
    pub tau1: f64,
    /// `trace(D_γ) = Σ_{i≥2} 1/(1 − γλ_i)`
    pub trace_bound: f64,
    /// `(n − 1)/(1 − γ|λ₂|)`
    pub cardinality_bound: f64,
    /// `|λ₂|` of `P`
    pub subdominant_modulus: f64,
    pub eigen_converged: bool,
}

pub fn spectral_bounds(chain: &InducedChain, mu: &[f64], gamma: f64) -> Result<SpectralBounds> {
    let p = &chain.transition;
    analyze_chain(p, mu).require_aperiodic_unichain()?;
    let n = p.order();
    let dg = discounted_group_inverse(chain, mu, gamma)?;
    let d = linalg::stationary_distribution(p)?;
    let sub = linalg::subdominant_modulus(p, &d);
    Ok(SpectralBounds {
        gamma,
        tau1: tau1(&dg.result.d_matrix).value,
        trace_bound: dg.result.d_matrix.trace(),
        cardinality_bound: (n - 1) as f64 / (1.0 - gamma * sub.modulus),
        subdominant_modulus: sub.modulus,
        eigen_converged: sub.converged,
    })
}

/// `(P^ℓ)(x, y) ≥ δ μ(y)` for all `x, y`, with the resulting bound `2ℓ/(1 − γ + γ^ℓ δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorizationCertificate {
    pub ell: usize,
    pub delta: f64,
    pub gamma: f64,
    pub bound_value: f64,
}

/// Default search cap `2n²` on the minorization power.
pub fn default_ell_cap(n_states: usize) -> usize {
    2 * n_states * n_states
}

/// Smallest `ℓ ≤ ell_cap` whose power is positive on every column in
/// `support(μ)`, with the largest admissible `δ` for that `ℓ`. Columns
/// outside the support impose no constraint.
pub fn minorization_constants(p: &Matrix, mu: &[f64], ell_cap: usize) -> Result<(usize, f64)> {
    let n = p.order();
    let support: Vec<usize> = (0..n).filter(|&y| mu[y] > 0.0).collect();
    let mut power = p.clone();
    for ell in 1..=ell_cap {
        if ell > 1 {
            power = power.matmul(p);
        }
        let positive = support.iter().all(|&y| (0..n).all(|x| power[(x, y)] > 0.0));
        if positive {
            let delta = support
                .iter()
                .flat_map(|&y| (0..n).map(move |x| (x, y)))
                .map(|(x, y)| power[(x, y)] / mu[y])
                .fold(f64::INFINITY, f64::min)
                .min(1.0);
            return Ok((ell, delta));
        }
    }
    Err(Error::NoMinorization { cap: ell_cap })
}

pub fn minorization_bound(
    chain: &InducedChain,
    mu: &[f64],
    gamma: f64,
    ell_cap: usize,
) -> Result<MinorizationCertificate> {
    check_gamma(gamma)?;
    let (ell, delta) = minorization_constants(&chain.transition, mu, ell_cap)?;
    Ok(MinorizationCertificate {
        ell,
        delta,
        gamma,
        bound_value: 2.0 * ell as f64 / (1.0 - gamma + gamma.powi(ell as i32) * delta),
    })
}
