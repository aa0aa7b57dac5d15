//! Policy-improvement lower bounds on `η^{π̃} − η^π`.
//!
//! All three bounds share the surrogate `E_{x∼d^π, a∼π̃}[A^π(x,a)]` and a
//! penalty `c · ε · E_{x∼d^π}[TV(π̃(·|x) ‖ π(·|x))]`; they differ only in the
//! constant `c`:
//!
//! | bound            | constant                 |
//! |------------------|--------------------------|
//! | classical        | `2γ / (1 − γ)`           |
//! | refined          | `2γ · τ₁[D_γ^{π̃}]`       |
//! | average reward   | `2 · τ₁[D^{π̃}]`          |
//!
//! `D_γ^{π̃}` is the group inverse of `I − P_γ^{π̃}` and `D^{π̃}` that of
//! `I − P^{π̃}`. Since `τ₁[D_γ] ≤ 1/(1−γ)` the refined bound is never looser,
//! and unlike the classical one it stays finite as `γ → 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ergodicity::{chain_group_inverse, discounted_group_inverse, tau1};
use crate::evaluation::{check_gamma, eval_average_chain, eval_discounted_chain, DiscountedEval};
use crate::linalg::{self, resolvent_solve, Matrix, Side};
use crate::mdp::{analyze_chain, induce_chain, InducedChain, Mdp, Policy};
use crate::occupancy::{l1_distance, occupancy, OccupancyMethod};

/// Slack tolerance: anything below `−1e-9` is a hard failure.
pub const SLACK_TOL: f64 = 1e-9;

/// Side-by-side comparison of the bounds for one pair of policies.
///
/// `gamma` is `None` for the average-reward report, which has no classical
/// counterpart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub gamma: Option<f64>,
    pub surrogate: f64,
    pub epsilon: f64,
    pub tv_mean: f64,
    pub tau1_value: Option<f64>,
    pub classical_rhs: Option<f64>,
    pub refined_rhs: Option<f64>,
    pub true_lhs: f64,
    pub classical_slack: Option<f64>,
    pub refined_slack: Option<f64>,
}

impl BoundReport {
    /// Names of violated report invariants at tolerance `tol`.
    pub fn violations(&self, tol: f64) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.classical_slack.is_some_and(|s| s < -tol) {
            v.push("classical slack");
        }
        if self.refined_slack.is_some_and(|s| s < -tol) {
            v.push("refined slack");
        }
        if let (Some(c), Some(r)) = (self.classical_rhs, self.refined_rhs) {
            if r < c - tol {
                v.push("refinement dominance");
            }
        }
        if !(0.0..=1.0 + tol).contains(&self.tv_mean) || self.epsilon < 0.0 {
            v.push("tv/epsilon range");
        }
        v
    }

    pub fn min_slack(&self) -> Option<f64> {
        match (self.classical_slack, self.refined_slack) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// `½ Σ_a |π̃(a|x) − π(a|x)|` for every state.
pub fn tv_per_state(pi: &Policy, pi_tilde: &Policy) -> Result<Vec<f64>> {
    if pi.n_states() != pi_tilde.n_states() || pi.n_actions() != pi_tilde.n_actions() {
        return Err(Error::Shape {
            what: "policy pair",
            expected: pi.n_states() * pi.n_actions(),
            got: pi_tilde.n_states() * pi_tilde.n_actions(),
        });
    }
    Ok((0..pi.n_states())
        .map(|x| 0.5 * l1_distance(pi.row(x), pi_tilde.row(x)))
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Surrogate, `ε` and mean TV under a state weighting.
struct PenaltyTerms {
    surrogate: f64,
    epsilon: f64,
    tv_mean: f64,
}

fn penalty_terms(adv: &[Vec<f64>], weights: &[f64], pi: &Policy, pi_tilde: &Policy) -> Result<PenaltyTerms> {
    let tv = tv_per_state(pi, pi_tilde)?;
    let expected_adv: Vec<f64> = adv
        .iter()
        .zip(pi_tilde.probs())
        .map(|(a, p)| dot(a, p))
        .collect();
    Ok(PenaltyTerms {
        surrogate: dot(weights, &expected_adv),
        epsilon: expected_adv.iter().fold(0.0, |m, v| m.max(v.abs())),
        tv_mean: dot(weights, &tv),
    })
}

/// Evaluation of the reference policy `π` at one discount factor, reusable
/// across many candidate policies.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub gamma: f64,
    pub eval: DiscountedEval,
    /// `d_γ^π`
    pub occupancy: Vec<f64>,
}

impl Baseline {
    pub fn new(mdp: &Mdp, pi: &Policy, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let chain = induce_chain(mdp, pi)?;
        let eval = eval_discounted_chain(mdp, &chain, gamma)?;
        let occupancy = occupancy(&chain, mdp.initial_dist(), gamma, OccupancyMethod::Resolvent)?.dist;
        Ok(Self { gamma, eval, occupancy })
    }

    fn pair(&self, mdp: &Mdp, pi: &Policy, pi_tilde: &Policy) -> Result<DiscountedPair> {
        let gamma = self.gamma;
        let chain_tilde = induce_chain(mdp, pi_tilde)?;
        let v_tilde = resolvent_solve(&chain_tilde.transition, gamma, &chain_tilde.reward, Side::Right)?;
        let eta_tilde = (1.0 - gamma) * dot(mdp.initial_dist(), &v_tilde);
        Ok(DiscountedPair {
            gamma,
            terms: penalty_terms(&self.eval.adv, &self.occupancy, pi, pi_tilde)?,
            chain_tilde,
            true_lhs: eta_tilde - self.eval.eta,
        })
    }

    /// Classical bound for `π̃` against this baseline.
    pub fn classical(&self, mdp: &Mdp, pi: &Policy, pi_tilde: &Policy) -> Result<BoundReport> {
        Ok(classical_from(&self.pair(mdp, pi, pi_tilde)?))
    }

    /// Refined and classical bounds for `π̃` against this baseline.
    pub fn refined(&self, mdp: &Mdp, pi: &Policy, pi_tilde: &Policy) -> Result<BoundReport> {
        let pair = self.pair(mdp, pi, pi_tilde)?;
        let gamma = self.gamma;
        let dg = discounted_group_inverse(&pair.chain_tilde, mdp.initial_dist(), gamma)?;
        let tau = tau1(&dg.result.d_matrix).value;
        let t = &pair.terms;
        let rhs = t.surrogate - 2.0 * gamma * t.epsilon * tau * t.tv_mean;
        Ok(BoundReport {
            tau1_value: Some(tau),
            refined_rhs: Some(rhs),
            refined_slack: Some(pair.true_lhs - rhs),
            ..classical_from(&pair)
        })
    }
}

struct DiscountedPair {
    gamma: f64,
    chain_tilde: InducedChain,
    terms: PenaltyTerms,
    true_lhs: f64,
}

fn classical_from(pair: &DiscountedPair) -> BoundReport {
    let g = pair.gamma;
    let t = &pair.terms;
    let rhs = t.surrogate - 2.0 * g * t.epsilon / (1.0 - g) * t.tv_mean;
    BoundReport {
        gamma: Some(g),
        surrogate: t.surrogate,
        epsilon: t.epsilon,
        tv_mean: t.tv_mean,
        tau1_value: None,
        classical_rhs: Some(rhs),
        refined_rhs: None,
        true_lhs: pair.true_lhs,
        classical_slack: Some(pair.true_lhs - rhs),
        refined_slack: None,
    }
}

/// Classical bound `surrogate − 2γε/(1−γ) · tv_mean`.
pub fn classical_bound(mdp: &Mdp, pi: &Policy, pi_tilde: &Policy, gamma: f64) -> Result<BoundReport> {
    Baseline::new(mdp, pi, gamma)?.classical(mdp, pi, pi_tilde)
}

/// Refined bound `surrogate − 2γε τ₁[D_γ^{π̃}] · tv_mean`, reported with the
/// classical one.
///
/// Fails with [`Error::NotIrreducible`] when `P_γ^{π̃}` is reducible.
pub fn refined_bound(mdp: &Mdp, pi: &Policy, pi_tilde: &Policy, gamma: f64) -> Result<BoundReport> {
    Baseline::new(mdp, pi, gamma)?.refined(mdp, pi, pi_tilde)
}

/// Average-reward bound `surrogate − 2ε τ₁[D^{π̃}] · tv_mean` with all terms
/// taken from average-reward evaluation under `d^π`.
pub fn average_bound(mdp: &Mdp, pi: &Policy, pi_tilde: &Policy) -> Result<BoundReport> {
    let mu = mdp.initial_dist();
    let chain = induce_chain(mdp, pi)?;
    let chain_tilde = induce_chain(mdp, pi_tilde)?;
    analyze_chain(&chain.transition, mu).require_aperiodic_unichain()?;
    analyze_chain(&chain_tilde.transition, mu).require_aperiodic_unichain()?;
    let eval = eval_average_chain(mdp, &chain)?;
    let (d_tilde, gi_tilde) = chain_group_inverse(&chain_tilde.transition)?;
    let eta_tilde = dot(&d_tilde, &chain_tilde.reward);
    let terms = penalty_terms(&eval.adv, &eval.stationary, pi, pi_tilde)?;
    let tau = tau1(&gi_tilde.d_matrix).value;
    let rhs = terms.surrogate - 2.0 * terms.epsilon * tau * terms.tv_mean;
    let lhs = eta_tilde - eval.eta;
    Ok(BoundReport {
        gamma: None,
        surrogate: terms.surrogate,
        epsilon: terms.epsilon,
        tv_mean: terms.tv_mean,
        tau1_value: Some(tau),
        classical_rhs: None,
        refined_rhs: Some(rhs),
        true_lhs: lhs,
        classical_slack: None,
        refined_slack: Some(lhs - rhs),
    })
}

struct OccupancyPair {
    d: Vec<f64>,
    d_tilde: Vec<f64>,
    p_diff: Matrix,
    group_inverse_tilde: Matrix,
    tv_mean: f64,
}

fn occupancy_pair(mdp: &Mdp, pi: &Policy, pi_tilde: &Policy, gamma: f64) -> Result<OccupancyPair> {
    check_gamma(gamma)?;
    let mu = mdp.initial_dist();
    let chain = induce_chain(mdp, pi)?;
    let chain_tilde = induce_chain(mdp, pi_tilde)?;
    let d = occupancy(&chain, mu, gamma, OccupancyMethod::Resolvent)?.dist;
    let dg = discounted_group_inverse(&chain_tilde, mu, gamma)?;
    let tv = tv_per_state(pi, pi_tilde)?;
    Ok(OccupancyPair {
        tv_mean: dot(&d, &tv),
        d,
        d_tilde: dg.occupancy,
        p_diff: chain.transition.sub(&chain_tilde.transition),
        group_inverse_tilde: dg.result.d_matrix,
    })
}

/// Residuals of the occupancy perturbation identity in both sign conventions.
///
/// With `D` the group inverse of `I − P`, the identity that holds is
/// `d_γ^{π̃} − d_γ^π = γ (d_γ^π)ᵀ (P^{π̃} − P^π) D_γ^{π̃}` (`corrected`).
/// The form with `P^π − P^{π̃}` (`as_stated`) flips the sign of the right-hand
/// side and is off by `2‖d_γ^{π̃} − d_γ^π‖₁`; it is reported because it is the
/// commonly quoted form. Norm bounds built on either are identical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationResiduals {
    pub gamma: f64,
    pub as_stated: f64,
    pub corrected: f64,
}

pub fn perturbation_identity_check(
    mdp: &Mdp,
    pi: &Policy,
    pi_tilde: &Policy,
    gamma: f64,
) -> Result<PerturbationResiduals> {
    let o = occupancy_pair(mdp, pi, pi_tilde, gamma)?;
    // γ dᵀ(P^π − P^{π̃}) D̃
    let rhs: Vec<f64> = o
        .group_inverse_tilde
        .vec_mul(&o.p_diff.vec_mul(&o.d))
        .into_iter()
        .map(|v| gamma * v)
        .collect();
    let lhs: Vec<f64> = o.d_tilde.iter().zip(&o.d).map(|(a, b)| a - b).collect();
    let flipped: Vec<f64> = rhs.iter().map(|v| -v).collect();
    Ok(PerturbationResiduals {
        gamma,
        as_stated: l1_distance(&lhs, &rhs),
        corrected: l1_distance(&lhs, &flipped),
    })
}

/// The three quantities of the occupancy-gap chain
/// `‖d̃ − d‖₁ ≤ γ τ₁ ‖(P − P̃)ᵀ d‖₁ ≤ 2γ τ₁ tv_mean`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapChain {
    pub gamma: f64,
    pub occupancy_gap: f64,
    pub contraction_bound: f64,
    pub tv_bound: f64,
    /// `‖(P^π − P^{π̃})ᵀ d_γ^π‖₁`
    pub drift_norm: f64,
    pub tau1_value: f64,
}

impl GapChain {
    pub fn ordered(&self, tol: f64) -> bool {
        self.occupancy_gap <= self.contraction_bound + tol && self.contraction_bound <= self.tv_bound + tol
    }
}

pub fn occupancy_gap_chain(mdp: &Mdp, pi: &Policy, pi_tilde: &Policy, gamma: f64) -> Result<GapChain> {
    let o = occupancy_pair(mdp, pi, pi_tilde, gamma)?;
    let tau = tau1(&o.group_inverse_tilde).value;
    let drift_norm: f64 = o.p_diff.vec_mul(&o.d).iter().map(|v| v.abs()).sum();
    let chain = GapChain {
        gamma,
        occupancy_gap: l1_distance(&o.d_tilde, &o.d),
        contraction_bound: gamma * tau * drift_norm,
        tv_bound: 2.0 * gamma * tau * o.tv_mean,
        drift_norm,
        tau1_value: tau,
    };
    if !chain.ordered(SLACK_TOL) {
        return Err(Error::Inconsistent {
            what: "occupancy gap chain",
            gap: (chain.occupancy_gap - chain.contraction_bound).max(chain.contraction_bound - chain.tv_bound),
            tolerance: SLACK_TOL,
        });
    }
    Ok(chain)
}

/// A one-row perturbation of `P̃` attaining `‖d − d̃‖₁ = τ₁[D̃] ‖(P − P̃)ᵀ d‖₁`.
#[derive(Debug, Clone)]
pub struct TightnessWitness {
    pub perturbed: Matrix,
    pub ratio: f64,
    pub tau1_value: f64,
    /// Row that was perturbed.
    pub row: usize,
    /// Mass moved from column `.0` to column `.1`.
    pub columns: (usize, usize),
}

/// Moves `epsilon_mass` within one row of `p_tilde` along the argmax row pair
/// of `τ₁[D̃]`, which makes the stationary-distribution perturbation bound an
/// equality.
pub fn tightness_witness(p_tilde: &Matrix, epsilon_mass: f64) -> Result<TightnessWitness> {
    if !(epsilon_mass > 0.0) {
        return Err(Error::InvalidParameter(format!("witness mass {epsilon_mass} must be positive")));
    }
    let n = p_tilde.order();
    let uniform = vec![1.0 / n as f64; n];
    analyze_chain(p_tilde, &uniform).require_aperiodic_unichain()?;
    let (d_tilde, gi) = chain_group_inverse(p_tilde)?;
    let t = tau1(&gi.d_matrix);
    let (a, b) = t.argmax_pair;
    let best_row = |col: usize| {
        (0..n)
            .map(|x| (x, p_tilde[(x, col)]))
            .fold((0, f64::NEG_INFINITY), |m, c| if c.1 > m.1 { c } else { m })
    };
    let (from, to, (row, mass)) = [(a, b), (b, a)]
        .into_iter()
        .map(|(i, j)| (i, j, best_row(i)))
        .fold(None, |acc: Option<(usize, usize, (usize, f64))>, c| match acc {
            Some(m) if m.2 .1 >= c.2 .1 => Some(m),
            _ => Some(c),
        })
        .expect("two orientations");
    if mass < epsilon_mass {
        return Err(Error::WitnessInfeasible {
            column: from,
            needed: epsilon_mass,
        });
    }
    let mut p = p_tilde.clone();
    p[(row, from)] -= epsilon_mass;
    p[(row, to)] += epsilon_mass;
    let d = linalg::stationary_distribution(&p)?;
    let drift: f64 = p.sub(p_tilde).vec_mul(&d).iter().map(|v| v.abs()).sum();
    Ok(TightnessWitness {
        ratio: l1_distance(&d, &d_tilde) / drift,
        perturbed: p,
        tau1_value: t.value,
        row,
        columns: (from, to),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn instance() -> (Mdp, Policy, Policy) {
        let mdp = Mdp::new(
            vec![
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                vec![vec![0.4, 0.6], vec![0.5, 0.5]],
            ],
            vec![vec![1.0, 0.3], vec![-0.5, 2.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let pi = Policy::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let pi_tilde = Policy::new(vec![vec![0.8, 0.2], vec![0.1, 0.9]]).unwrap();
        (mdp, pi, pi_tilde)
    }

    #[test]
    fn tv_examples() {
        let pi = Policy::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let other = Policy::new(vec![vec![0.8, 0.2], vec![0.0, 1.0]]).unwrap();
        let tv = tv_per_state(&pi, &other).unwrap();
        assert_abs_diff_eq!(tv[0], 0.3, epsilon = 1e-15);
        assert_eq!(tv[1], 1.0);
        assert_eq!(tv_per_state(&pi, &pi).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identical_policies_give_zero_reports() {
        let (mdp, pi, _) = instance();
        let r = refined_bound(&mdp, &pi, &pi, 0.9).unwrap();
        assert!(r.surrogate.abs() < 1e-14 && r.epsilon < 1e-14 && r.true_lhs.abs() < 1e-14);
        assert_eq!(r.tv_mean, 0.0);
        let a = average_bound(&mdp, &pi, &pi).unwrap();
        assert!(a.refined_rhs.unwrap().abs() < 1e-14 && a.true_lhs.abs() < 1e-14);
    }

    #[test]
    fn myopic_case_is_tight() {
        let (mdp, pi, pi_tilde) = instance();
        let r = classical_bound(&mdp, &pi, &pi_tilde, 0.0).unwrap();
        let c = induce_chain(&mdp, &pi).unwrap();
        let ct = induce_chain(&mdp, &pi_tilde).unwrap();
        let direct: f64 = (0..2).map(|x| mdp.initial_dist()[x] * (ct.reward[x] - c.reward[x])).sum();
        assert_abs_diff_eq!(r.true_lhs, direct, epsilon = 1e-14);
        assert_abs_diff_eq!(r.classical_rhs.unwrap(), direct, epsilon = 1e-14);
        assert!(r.classical_slack.unwrap().abs() < 1e-14);
    }

    #[test]
    fn bounds_hold_and_refinement_dominates() {
        let (mdp, pi, pi_tilde) = instance();
        for gamma in [0.5, 0.9, 0.99, 0.999] {
            let r = refined_bound(&mdp, &pi, &pi_tilde, gamma).unwrap();
            assert!(r.violations(SLACK_TOL).is_empty(), "{r:?}");
        }
        let a = average_bound(&mdp, &pi, &pi_tilde).unwrap();
        assert!(a.violations(SLACK_TOL).is_empty());
    }

    #[test]
    fn perturbation_identity_and_gap_chain() {
        let (mdp, pi, pi_tilde) = instance();
        let same = perturbation_identity_check(&mdp, &pi, &pi, 0.9).unwrap();
        assert!(same.as_stated < 1e-15 && same.corrected < 1e-15);
        for gamma in [0.5, 0.9, 0.99] {
            let r = perturbation_identity_check(&mdp, &pi, &pi_tilde, gamma).unwrap();
            assert!(r.corrected < 1e-10, "{r:?}");
            let gap = occupancy_gap_chain(&mdp, &pi, &pi_tilde, gamma).unwrap().occupancy_gap;
            assert!((r.as_stated - 2.0 * gap).abs() < 1e-10, "{r:?}");
            assert!(occupancy_gap_chain(&mdp, &pi, &pi_tilde, gamma).unwrap().ordered(SLACK_TOL));
        }
        let same = occupancy_gap_chain(&mdp, &pi, &pi, 0.9).unwrap();
        assert_eq!((same.occupancy_gap, same.contraction_bound, same.tv_bound), (0.0, 0.0, 0.0));
    }

    #[test]
    fn witness_two_state_fixture() {
        let p = Matrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let w = tightness_witness(&p, 0.01).unwrap();
        assert_abs_diff_eq!(w.tau1_value, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.ratio, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn witness_rank_one_chain() {
        let d = [0.2, 0.5, 0.3];
        let w = tightness_witness(&Matrix::repeat_row(&d), 0.05).unwrap();
        assert_abs_diff_eq!(w.ratio, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn witness_infeasible_mass() {
        let p = Matrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        assert!(matches!(tightness_witness(&p, 0.9), Err(Error::WitnessInfeasible { .. })));
    }
}
