//! Conservative mixture-policy iteration with bound-certified step sizes.
//!
//! Each iteration moves from `π` to `π_α = (1 − α)π + α·greedy(π)` for the
//! `α` on a grid that maximizes the refined lower bound on `η_γ^{π_α} − η_γ^π`.
//! The certificate at `α = 0` is exactly zero, so a selected step never has a
//! negative certified gain. This is one way to turn the bounds into an update
//! rule, not the only one.

use serde::{Deserialize, Serialize};

use crate::bounds::{Baseline, SLACK_TOL};
use crate::error::{Error, Result};
use crate::evaluation::DiscountedEval;
use crate::mdp::{Mdp, Policy};

/// `{0, 0.05, …, 1}`
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

/// Deterministic policy maximizing the advantage in every state, ties to the
/// smallest action index.
pub fn greedy_policy(eval: &DiscountedEval) -> Policy {
    let n_actions = eval.adv[0].len();
    let actions: Vec<usize> = eval
        .adv
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (a, &v)| if v > best.1 { (a, v) } else { best })
                .0
        })
        .collect();
    Policy::deterministic(n_actions, &actions).expect("greedy actions are in range")
}

/// Certificates at one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub classical: f64,
    pub refined: Option<f64>,
    pub realized: f64,
    /// Why the refined certificate is missing, if it is.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImprovementStep {
    pub alpha: f64,
    /// Greedy policy the mixture moves toward.
    pub candidate: Policy,
    pub certified_gain_classical: f64,
    pub certified_gain_refined: f64,
    pub realized_gain: f64,
    /// Step the classical certificate alone would have chosen.
    pub classical_alpha: f64,
    pub grid: Vec<GridPoint>,
}

impl ImprovementStep {
    /// `π_α` for the selected step.
    pub fn next_policy(&self, pi: &Policy) -> Result<Policy> {
        pi.mixture(&self.candidate, self.alpha)
    }

    /// Realized gain is at least each certificate, within `tol`.
    pub fn certified(&self, tol: f64) -> bool {
        self.realized_gain >= self.certified_gain_refined.max(self.certified_gain_classical) - tol
    }
}

fn argmax_alpha(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    points.fold((0.0, 0.0), |best, (a, v)| if v > best.1 { (a, v) } else { best })
}

/// Evaluates both certificates along `alpha_grid` and picks the step with the
/// largest refined certificate.
pub fn line_search(mdp: &Mdp, pi: &Policy, gamma: f64, alpha_grid: &[f64]) -> Result<ImprovementStep> {
    if alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) || !alpha_grid.contains(&0.0) {
        return Err(Error::InvalidParameter("alpha grid must lie in [0, 1] and contain 0".into()));
    }
    let baseline = Baseline::new(mdp, pi, gamma)?;
    let candidate = greedy_policy(&baseline.eval);
    let mut grid = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        if alpha == 0.0 {
            grid.push(GridPoint {
                alpha,
                classical: 0.0,
                refined: Some(0.0),
                realized: 0.0,
                skipped: None,
            });
            continue;
        }
        let mixed = pi.mixture(&candidate, alpha)?;
        let point = match baseline.refined(mdp, pi, &mixed) {
            Ok(r) => GridPoint {
                alpha,
                classical: r.classical_rhs.expect("refined report carries the classical bound"),
                refined: r.refined_rhs,
                realized: r.true_lhs,
                skipped: None,
            },
            Err(e @ (Error::NotIrreducible { .. } | Error::Linalg(_) | Error::Inconsistent { .. })) => {
                let r = baseline.classical(mdp, pi, &mixed)?;
                GridPoint {
                    alpha,
                    classical: r.classical_rhs.expect("classical report"),
                    refined: None,
                    realized: r.true_lhs,
                    skipped: Some(e.to_string()),
                }
            }
            Err(e) => return Err(e),
        };
        grid.push(point);
    }
    let (alpha, _) = argmax_alpha(grid.iter().filter_map(|g| g.refined.map(|r| (g.alpha, r))));
    let (classical_alpha, _) = argmax_alpha(grid.iter().map(|g| (g.alpha, g.classical)));
    let chosen = grid
        .iter()
        .find(|g| g.alpha == alpha)
        .expect("selected alpha is on the grid");
    Ok(ImprovementStep {
        alpha,
        certified_gain_classical: chosen.classical,
        certified_gain_refined: chosen.refined.unwrap_or(0.0),
        realized_gain: chosen.realized,
        candidate,
        classical_alpha,
        grid,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub eta_before: f64,
    pub eta_after: f64,
    pub greedy_surrogate: f64,
    pub alpha: f64,
    pub classical_alpha: f64,
    pub certified_gain_classical: f64,
    pub certified_gain_refined: f64,
    pub realized_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Greedy surrogate fell below `1e-10`.
    Converged,
    /// No grid point has a positive refined certificate.
    Stalled,
    IterationLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImprovementTrace {
    pub gamma: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_policy: Policy,
}

impl ImprovementTrace {
    /// `η_γ` before the first step and after every step.
    pub fn etas(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.records.first().map(|r| r.eta_before).into_iter().collect();
        v.extend(self.records.iter().filter(|r| r.alpha > 0.0).map(|r| r.eta_after));
        v
    }

    pub fn monotone(&self, tol: f64) -> bool {
        self.etas().windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

/// Greedy surrogate below which the loop stops.
pub const CONVERGENCE_TOL: f64 = 1e-10;

/// Runs up to `iterations` certified steps from `pi`.
pub fn improve(
    mdp: &Mdp,
    pi: &Policy,
    gamma: f64,
    iterations: usize,
    alpha_grid: &[f64],
) -> Result<ImprovementTrace> {
    let mut policy = pi.clone();
    let mut records = Vec::new();
    let mut termination = Termination::IterationLimit;
    for iteration in 0..iterations {
        let step = line_search(mdp, &policy, gamma, alpha_grid)?;
        let baseline = Baseline::new(mdp, &policy, gamma)?;
        let greedy_surrogate = baseline
            .eval
            .adv
            .iter()
            .zip(&baseline.occupancy)
            .map(|(row, d)| d * row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>();
        records.push(IterationRecord {
            iteration,
            eta_before: baseline.eval.eta,
            eta_after: baseline.eval.eta + step.realized_gain,
            greedy_surrogate,
            alpha: step.alpha,
            classical_alpha: step.classical_alpha,
            certified_gain_classical: step.certified_gain_classical,
            certified_gain_refined: step.certified_gain_refined,
            realized_gain: step.realized_gain,
        });
        if greedy_surrogate <= CONVERGENCE_TOL {
            termination = Termination::Converged;
            break;
        }
        if step.alpha == 0.0 {
            termination = Termination::Stalled;
            break;
        }
        debug_assert!(step.certified(SLACK_TOL));
        policy = step.next_policy(&policy)?;
    }
    Ok(ImprovementTrace {
        gamma,
        records,
        termination,
        final_policy: policy,
    })
}
