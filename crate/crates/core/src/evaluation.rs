//! Exact policy evaluation, discounted and long-run average.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, resolvent_solve, Matrix, Side};
use crate::mdp::{analyze_chain, induce_chain, InducedChain, Mdp, Policy};

/// `V_γ`, `Q_γ`, `A_γ` and the normalized return `η_γ(μ) = (1−γ) μᵀ V_γ`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscountedEval {
    pub gamma: f64,
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub adv: Vec<Vec<f64>>,
    pub eta: f64,
    /// `‖V − (r^π + γ P^π V)‖∞`
    pub bellman_residual: f64,
}

/// Long-run average reward `η`, relative values normalized by `dᵀV = 0`, and `d`.
#[derive(Debug, Clone, Serialize)]
pub struct AverageEval {
    pub eta: f64,
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub adv: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    /// `‖V − (r^π − η e + P^π V)‖∞`
    pub poisson_residual: f64,
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("discount factor {gamma} outside [0, 1)")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `Q(x,a) = r(x,a) − offset + scale·Σ_y P(y|x,a) V(y)` and the matching
/// advantage.
///
/// The advantage is formed as `r(x,a) − r^π(x) + scale·Σ_y (P(y|x,a) − P^π(x,y))(V(y) − c)`
/// with `c` the mean of `V`; the bracket sums to zero, so the shift is exact
/// and keeps the large constant component of `V_γ` out of the cancellation.
fn action_tables(
    mdp: &Mdp,
    chain: &InducedChain,
    v: &[f64],
    scale: f64,
    offset: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = mdp.n_states();
    let centre = v.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = v.iter().map(|x| x - centre).collect();
    let mut q = vec![vec![0.0; mdp.n_actions()]; n];
    let mut adv = vec![vec![0.0; mdp.n_actions()]; n];
    for x in 0..n {
        let pi_row = chain.transition.row(x);
        for a in 0..mdp.n_actions() {
            let p = mdp.transition(x, a);
            q[x][a] = mdp.reward(x, a) - offset + scale * dot(p, v);
            let drift: f64 = p
                .iter()
                .zip(pi_row)
                .zip(&centred)
                .map(|((pa, ppi), w)| (pa - ppi) * w)
                .sum();
            adv[x][a] = mdp.reward(x, a) - chain.reward[x] + scale * drift;
        }
    }
    (q, adv)
}

/// Discounted evaluation from an already induced chain.
pub fn eval_discounted_chain(mdp: &Mdp, chain: &InducedChain, gamma: f64) -> Result<DiscountedEval> {
    check_gamma(gamma)?;
    let v = resolvent_solve(&chain.transition, gamma, &chain.reward, Side::Right)?;
    let pv = chain.transition.mul_vec(&v);
    let bellman_residual = max_abs(
        v.iter()
            .zip(&pv)
            .zip(&chain.reward)
            .map(|((vx, pvx), rx)| vx - (rx + gamma * pvx)),
    );
    let (q, adv) = action_tables(mdp, chain, &v, gamma, 0.0);
    let eta = (1.0 - gamma) * dot(mdp.initial_dist(), &v);
    Ok(DiscountedEval {
        gamma,
        v,
        q,
        adv,
        eta,
        bellman_residual,
    })
}

/// `V = (I − γP^π)⁻¹ r^π`, `Q = r + γ P V`, `A = Q − V`, `η = (1−γ) μᵀV`.
pub fn eval_discounted(mdp: &Mdp, policy: &Policy, gamma: f64) -> Result<DiscountedEval> {
    let chain = induce_chain(mdp, policy)?;
    eval_discounted_chain(mdp, &chain, gamma)
}

/// Average-reward evaluation from an already induced chain.
pub fn eval_average_chain(mdp: &Mdp, chain: &InducedChain) -> Result<AverageEval> {
    let report = analyze_chain(&chain.transition, mdp.initial_dist());
    report.require_unichain()?;
    let p = &chain.transition;
    let n = p.order();
    let (eta, v, stationary) = if report.aperiodic {
        let d = linalg::stationary_distribution(p)?;
        let gi = linalg::group_inverse(p, &d)?;
        let v = gi.d_matrix.mul_vec(&chain.reward);
        (dot(&d, &chain.reward), v, d)
    } else {
        // Bordered Poisson system [[I − P, e], [dᵀ, 0]] (V, η) = (r, 0).
        let d = linalg::stationary_distribution(p)?;
        let m = Matrix::from_fn(n + 1, |i, j| match (i < n, j < n) {
            (true, true) => f64::from(u8::from(i == j)) - p[(i, j)],
            (true, false) => 1.0,
            (false, true) => d[j],
            (false, false) => 0.0,
        });
        let mut rhs = chain.reward.clone();
        rhs.push(0.0);
        let mut sol = linalg::solve(&m, &rhs)?;
        let eta = sol.pop().expect("bordered system has n + 1 unknowns");
        (eta, sol, d)
    };
    let pv = p.mul_vec(&v);
    let poisson_residual = max_abs(
        v.iter()
            .zip(&pv)
            .zip(&chain.reward)
            .map(|((vx, pvx), rx)| vx - (rx - eta + pvx)),
    );
    let (q, adv) = action_tables(mdp, chain, &v, 1.0, eta);
    Ok(AverageEval {
        eta,
        v,
        q,
        adv,
        stationary,
        poisson_residual,
    })
}

/// `η = dᵀ r^π`, `V = D r^π` with `D` the group inverse of `I − P^π`.
pub fn eval_average(mdp: &Mdp, policy: &Policy) -> Result<AverageEval> {
    let chain = induce_chain(mdp, policy)?;
    eval_average_chain(mdp, &chain)
}

/// `1 − 10⁻ᵏ` for `k = 1..=6`.
pub fn default_gamma_schedule() -> Vec<f64> {
    (1..=6).map(|k| 1.0 - 10f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitRow {
    pub gamma: f64,
    /// `|η_γ(μ) − η|`
    pub eta_gap: f64,
    /// `‖V_γ − η/(1−γ)·e − V‖∞`
    pub v_gap: f64,
    /// `max |Q_γ − η/(1−γ) − Q|`
    pub q_gap: f64,
    /// `max |A_γ − A|`
    pub adv_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitReport {
    pub rows: Vec<LimitRow>,
    pub periodic: bool,
    /// Per gap sequence (η, V, Q, A): nonincreasing over the second half of the schedule.
    pub monotone_tail: [bool; 4],
}

impl LimitReport {
    pub fn last(&self) -> Option<&LimitRow> {
        self.rows.last()
    }
}

fn nonincreasing_tail(values: &[f64]) -> bool {
    let start = values.len() / 2;
    values[start..].windows(2).all(|w| w[1] <= w[0])
}

/// Gaps between discounted quantities and their average-reward limits along
/// a schedule of discount factors increasing to one.
pub fn limit_check(mdp: &Mdp, policy: &Policy, schedule: &[f64]) -> Result<LimitReport> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("gamma schedule must be strictly increasing".into()));
    }
    let chain = induce_chain(mdp, policy)?;
    let avg = eval_average_chain(mdp, &chain)?;
    let periodic = !analyze_chain(&chain.transition, mdp.initial_dist()).aperiodic;
    let mut rows = Vec::with_capacity(schedule.len());
    for &gamma in schedule {
        let disc = eval_discounted_chain(mdp, &chain, gamma)?;
        // V_γ − η/(1−γ)e and Q_γ − η/(1−γ) are formed from the centred
        // solve w = (I − γP)⁻¹(r − ηe) rather than by subtracting a shift of
        // order 1/(1−γ): rounding in the row sums of P would otherwise be
        // amplified by 1/(1−γ)² and swamp the O(1−γ) gap near γ = 1.
        let centred_reward: Vec<f64> = chain.reward.iter().map(|r| r - avg.eta).collect();
        let w = resolvent_solve(&chain.transition, gamma, &centred_reward, Side::Right)?;
        let v_gap = max_abs(w.iter().zip(&avg.v).map(|(a, b)| a - b));
        let (centred_q, _) = action_tables(mdp, &chain, &w, gamma, avg.eta);
        let q_gap = max_abs(
            centred_q
                .iter()
                .flatten()
                .zip(avg.q.iter().flatten())
                .map(|(a, b)| a - b),
        );
        let adv_gap = max_abs(
            disc.adv
                .iter()
                .flatten()
                .zip(avg.adv.iter().flatten())
                .map(|(a, b)| a - b),
        );
        rows.push(LimitRow {
            gamma,
            eta_gap: (disc.eta - avg.eta).abs(),
            v_gap,
            q_gap,
            adv_gap,
        });
    }
    let column = |f: fn(&LimitRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let monotone_tail = [
        nonincreasing_tail(&column(|r| r.eta_gap)),
        nonincreasing_tail(&column(|r| r.v_gap)),
        nonincreasing_tail(&column(|r| r.q_gap)),
        nonincreasing_tail(&column(|r| r.adv_gap)),
    ];
    Ok(LimitReport {
        rows,
        periodic,
        monotone_tail,
    })
}
