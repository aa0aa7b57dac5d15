//! Independent reference computations for the integration tests.
//!
//! Everything here is deliberately naive (series, brute force, sampling, or
//! nalgebra's general-purpose routines) so that it shares no code path with
//! the library implementation it checks.

#![allow(dead_code)]

use mdplab::linalg::Matrix;
use mdplab::{Mdp, Policy};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    let n = m.order();
    DMatrix::from_fn(n, n, |i, j| m[(i, j)])
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), |i, j| m[(i, j)])
}

/// Dense random row-stochastic matrix with entries bounded away from zero.
pub fn random_stochastic<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::from_fn(n, |_, _| 0.05 + rng.random::<f64>());
    for i in 0..n {
        let s: f64 = m.row(i).iter().sum();
        for j in 0..n {
            m[(i, j)] /= s;
        }
    }
    m
}

/// Row-stochastic matrix with some exact zeros, still primitive (positive diagonal, full first column).
pub fn random_sparse_stochastic<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::from_fn(n, |i, j| {
        if i == j || j == 0 || rng.random::<f64>() < 0.4 {
            0.05 + rng.random::<f64>()
        } else {
            0.0
        }
    });
    for i in 0..n {
        let s: f64 = m.row(i).iter().sum();
        for j in 0..n {
            m[(i, j)] /= s;
        }
    }
    m
}

/// Stochastic matrix with entries `k/256`, so every row sums to exactly one in floating point.
pub fn random_dyadic_stochastic<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        let mut left = 256 - n as u32;
        for j in 0..n {
            let k = if j + 1 == n { left } else { rng.random_range(0..=left / 2) };
            left -= k;
            m[(i, j)] = f64::from(k + 1) / 256.0;
        }
    }
    m
}

/// `(d, D)` with `d` from nalgebra's LU on the bordered system and `D` from its general inverse.
pub fn nalgebra_group_inverse(p: &Matrix) -> (Vec<f64>, Matrix) {
    let n = p.order();
    let a = DMatrix::identity(n, n) - to_na(p);
    // dᵀ(I − P) = 0, dᵀe = 1  ⇔  [(I−P)ᵀ; eᵀ] d = [0; 1], solved in the least-squares sense.
    let mut bordered = DMatrix::zeros(n + 1, n);
    bordered.view_mut((0, 0), (n, n)).copy_from(&a.transpose());
    bordered.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let normal = bordered.transpose() * &bordered;
    let d = normal.lu().solve(&(bordered.transpose() * rhs)).expect("stationary system solvable");
    let ed = DMatrix::from_fn(n, n, |_, j| d[j]);
    let z = (a + &ed).try_inverse().expect("fundamental matrix invertible");
    (d.iter().copied().collect(), from_na(&(z - ed)))
}

/// `Σ_k (Pᵏ − e dᵀ)` for a primitive chain, truncated once the term is below `1e-16`.
pub fn series_group_inverse(p: &Matrix, d: &[f64]) -> Matrix {
    let n = p.order();
    let ed = Matrix::repeat_row(d);
    let mut power = Matrix::identity(n);
    let mut acc = Matrix::zeros(n);
    for _ in 0..200_000 {
        let term = power.sub(&ed);
        acc = acc.add(&term);
        if term.max_abs() < 1e-16 {
            break;
        }
        power = power.matmul(p);
    }
    acc
}

/// `(1−γ) μᵀ (I − γP)⁻¹` via nalgebra.
pub fn nalgebra_occupancy(p: &Matrix, mu: &[f64], gamma: f64) -> Vec<f64> {
    let n = p.order();
    let a = (DMatrix::identity(n, n) - to_na(p) * gamma).transpose();
    let b = DVector::from_iterator(n, mu.iter().map(|m| (1.0 - gamma) * m));
    a.lu().solve(&b).expect("nonsingular").iter().copied().collect()
}

/// `(I − γP)⁻¹ r` via nalgebra.
pub fn nalgebra_values(p: &Matrix, r: &[f64], gamma: f64) -> Vec<f64> {
    let n = p.order();
    let a = DMatrix::identity(n, n) - to_na(p) * gamma;
    a.lu()
        .solve(&DVector::from_column_slice(r))
        .expect("nonsingular")
        .iter()
        .copied()
        .collect()
}

/// `(I − γP)⁻¹ b` by splitting off the stationary direction: `dᵀx = dᵀb/(1−γ)`
/// exactly, and the remainder solves the well-conditioned `(I − γP + e dᵀ) y = b − (dᵀb) e`.
/// Accurate near `γ = 1`, where a direct solve loses `κ·ε`, provided the rows of
/// `P` sum to one exactly.
pub fn split_resolvent(p: &Matrix, b: &[f64], gamma: f64) -> Vec<f64> {
    let n = p.order();
    let (d, _) = nalgebra_group_inverse(p);
    let db: f64 = d.iter().zip(b).map(|(d, b)| d * b).sum();
    let a = DMatrix::identity(n, n) - to_na(p) * gamma + DMatrix::from_fn(n, n, |_, j| d[j]);
    let rhs = DVector::from_iterator(n, b.iter().map(|v| v - db));
    let y = a.lu().solve(&rhs).expect("nonsingular");
    y.iter().map(|y| y + db / (1.0 - gamma)).collect()
}

/// Triple-loop `P^π(x,y) = Σ_a π(a|x) P(y|x,a)` and `r^π`.
pub fn brute_force_chain(mdp: &Mdp, pi: &Policy) -> (Matrix, Vec<f64>) {
    let n = mdp.n_states();
    let mut p = Matrix::zeros(n);
    let mut r = vec![0.0; n];
    for x in 0..n {
        for a in 0..mdp.n_actions() {
            r[x] += pi.prob(x, a) * mdp.reward(x, a);
            for y in 0..n {
                p[(x, y)] += pi.prob(x, a) * mdp.transition(x, a)[y];
            }
        }
    }
    (p, r)
}

/// Largest `‖xᵀA‖₁` over `samples` random zero-sum `x` with `‖x‖₁ = 1`.
pub fn sampled_tau1<R: Rng>(a: &Matrix, samples: usize, rng: &mut R) -> f64 {
    let n = a.order();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let norm: f64 = centered.iter().map(|v| v.abs()).sum();
        if norm == 0.0 {
            continue;
        }
        let x: Vec<f64> = centered.iter().map(|v| v / norm).collect();
        best = best.max(a.vec_mul(&x).iter().map(|v| v.abs()).sum());
    }
    best
}

/// Every deterministic policy of a small MDP.
pub fn deterministic_policies(n_states: usize, n_actions: usize) -> Vec<Policy> {
    let total = n_actions.pow(n_states as u32);
    (0..total)
        .map(|mut code| {
            let actions: Vec<usize> = (0..n_states)
                .map(|_| {
                    let a = code % n_actions;
                    code /= n_actions;
                    a
                })
                .collect();
            Policy::deterministic(n_actions, &actions).unwrap()
        })
        .collect()
}

/// `η_γ` of a policy from the nalgebra value solve.
pub fn discounted_eta(mdp: &Mdp, pi: &Policy, gamma: f64) -> f64 {
    let (p, r) = brute_force_chain(mdp, pi);
    let v = nalgebra_values(&p, &r, gamma);
    (1.0 - gamma) * mdp.initial_dist().iter().zip(&v).map(|(m, v)| m * v).sum::<f64>()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// The 2-state fixture `[[0.7, 0.3], [0.2, 0.8]]`, rewards `(1, 0)`, one action.
pub fn two_state(mu: [f64; 2]) -> (Mdp, Policy) {
    let mdp = Mdp::new(
        vec![vec![vec![0.7, 0.3]], vec![vec![0.2, 0.8]]],
        vec![vec![1.0], vec![0.0]],
        mu.to_vec(),
    )
    .unwrap();
    (mdp, Policy::uniform(2, 1))
}
