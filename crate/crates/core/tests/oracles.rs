mod common;

use approx::assert_abs_diff_eq;
use common::*;
use mdplab::bounds::{perturbation_identity_check, refined_bound, tightness_witness};
use mdplab::ergodicity::{chain_group_inverse, discounted_group_inverse, tau1};
use mdplab::evaluation::{eval_average, eval_discounted};
use mdplab::improve::{default_alpha_grid, greedy_policy, improve, line_search};
use mdplab::linalg::{self, group_inverse, resolvent_solve, Matrix, Side};
use mdplab::mdp::{garnet, induce_chain, GarnetParams};
use mdplab::occupancy::{occupancy, OccupancyMethod};
use mdplab::{Mdp, Policy};
use rand::Rng;

fn garnet_instance(seed: u64, n: usize, a: usize) -> (Mdp, Policy) {
    let mdp = garnet(&GarnetParams {
        n_states: n,
        n_actions: a,
        branching: n.min(3),
        reward_sparsity: 0.2,
        seed,
    })
    .unwrap();
    let pi = Policy::random(n, a, &mut rng(seed ^ 0xabc));
    (mdp, pi)
}

#[test]
fn induced_chain_matches_triple_loop() {
    for seed in 0..40 {
        let (mdp, pi) = garnet_instance(seed, 2 + (seed as usize % 9), 1 + (seed as usize % 4));
        let chain = induce_chain(&mdp, &pi).unwrap();
        let (p, r) = brute_force_chain(&mdp, &pi);
        assert!(chain.transition.max_abs_diff(&p) < 1e-15);
        assert!(max_abs_diff(&chain.reward, &r) < 1e-15);
    }
}

#[test]
fn stationary_and_group_inverse_match_nalgebra_and_series() {
    let mut g = rng(7);
    for i in 0..40 {
        let n = 2 + i % 10;
        let p = if i % 2 == 0 {
            random_stochastic(n, &mut g)
        } else {
            random_sparse_stochastic(n, &mut g)
        };
        let (d_ref, gi_ref) = nalgebra_group_inverse(&p);
        let d = linalg::stationary_distribution(&p).unwrap();
        assert!(max_abs_diff(&d, &d_ref) < 1e-12, "n={n}");
        let gi = group_inverse(&p, &d).unwrap();
        assert!(gi.d_matrix.max_abs_diff(&gi_ref) < 1e-10);
        let series = series_group_inverse(&p, &d);
        assert!(gi.d_matrix.max_abs_diff(&series) < 1e-9, "series gap {}", gi.d_matrix.max_abs_diff(&series));
    }
}

#[test]
fn discounted_group_inverse_matches_nalgebra_on_google_matrix() {
    for seed in 0..20 {
        let (mdp, pi) = garnet_instance(seed, 6, 3);
        let chain = induce_chain(&mdp, &pi).unwrap();
        for gamma in [0.5, 0.9, 0.99] {
            let Ok(dg) = discounted_group_inverse(&chain, mdp.initial_dist(), gamma) else {
                continue;
            };
            let pg = chain
                .transition
                .scale(gamma)
                .add(&Matrix::repeat_row(mdp.initial_dist()).scale(1.0 - gamma));
            let (d_ref, gi_ref) = nalgebra_group_inverse(&pg);
            assert!(max_abs_diff(&dg.occupancy, &d_ref) < 1e-12);
            assert!(dg.result.d_matrix.max_abs_diff(&gi_ref) < 1e-9);
        }
    }
}

#[test]
fn occupancy_methods_match_nalgebra() {
    for seed in 0..30 {
        let (mdp, pi) = garnet_instance(seed, 2 + seed as usize % 12, 3);
        let chain = induce_chain(&mdp, &pi).unwrap();
        for gamma in [0.0, 0.5, 0.9, 0.99, 0.999] {
            let reference = nalgebra_occupancy(&chain.transition, mdp.initial_dist(), gamma);
            for method in [OccupancyMethod::Series, OccupancyMethod::Resolvent, OccupancyMethod::Stationary] {
                let d = occupancy(&chain, mdp.initial_dist(), gamma, method).unwrap().dist;
                assert!(max_abs_diff(&d, &reference) < 1e-10, "{method:?} gamma={gamma}");
            }
        }
    }
}

#[test]
fn discounted_values_match_nalgebra_solve() {
    for seed in 0..30 {
        let (mdp, pi) = garnet_instance(seed, 8, 3);
        let (p, r) = brute_force_chain(&mdp, &pi);
        for gamma in [0.1, 0.9, 0.999] {
            let eval = eval_discounted(&mdp, &pi, gamma).unwrap();
            let v = nalgebra_values(&p, &r, gamma);
            let scale = 1.0 / (1.0 - gamma);
            assert!(max_abs_diff(&eval.v, &v) < 1e-12 * scale);
            assert_abs_diff_eq!(eval.eta, discounted_eta(&mdp, &pi, gamma), epsilon = 1e-11);
            for x in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    let q = mdp.reward(x, a)
                        + gamma * mdp.transition(x, a).iter().zip(&v).map(|(p, v)| p * v).sum::<f64>();
                    assert!((eval.q[x][a] - q).abs() < 1e-11 * scale);
                }
            }
        }
    }
}

#[test]
fn gain_matches_cesaro_average_of_rewards() {
    for seed in 0..20 {
        let (mdp, pi) = garnet_instance(seed, 6, 2);
        let Ok(avg) = eval_average(&mdp, &pi) else { continue };
        let (p, r) = brute_force_chain(&mdp, &pi);
        // (1/T) Σ_{t<T} Pᵗ r converges to η e at rate O(1/T).
        let mut v = r.clone();
        let mut acc = r.clone();
        let t = 20_000;
        for _ in 1..t {
            v = p.mul_vec(&v);
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
        for a in acc {
            assert!((a / t as f64 - avg.eta).abs() < 1e-3);
        }
    }
}

#[test]
fn resolvent_solve_matches_nalgebra_near_unit_discount() {
    let mut g = rng(11);
    for _ in 0..20 {
        let p = random_dyadic_stochastic(7, &mut g);
        let b: Vec<f64> = (0..7).map(|_| g.random_range(-1.0..1.0)).collect();
        for gamma in [0.9, 0.9999, 1.0 - 1e-6] {
            let x = resolvent_solve(&p, gamma, &b, Side::Right).unwrap();
            let reference = split_resolvent(&p, &b, gamma);
            // |x| reaches 1/(1−γ) = 1e6; this is relative accuracy of ~1e-15.
            assert!(max_abs_diff(&x, &reference) < 1e-9, "gamma={gamma} {:e}", max_abs_diff(&x, &reference));
        }
    }
}

#[test]
fn tau1_dominates_sampled_definition() {
    let mut g = rng(3);
    for i in 0..30 {
        let n = 2 + i % 6;
        let p = random_stochastic(n, &mut g);
        let (_, d) = chain_group_inverse(&p).unwrap();
        for m in [&p, &d.d_matrix] {
            let closed = tau1(m).value;
            let sampled = sampled_tau1(m, 2_000, &mut g);
            assert!(sampled <= closed + 1e-12);
        }
    }
}

#[test]
fn subdominant_modulus_matches_eigenvalues_of_p() {
    let mut g = rng(5);
    for i in 0..30 {
        let n = 2 + i % 8;
        let p = random_stochastic(n, &mut g);
        let d = linalg::stationary_distribution(&p).unwrap();
        let sub = linalg::subdominant_modulus(&p, &d);
        let mut moduli: Vec<f64> = to_na(&p).complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((moduli[0] - 1.0).abs() < 1e-10);
        let expected = moduli.get(1).copied().unwrap_or(0.0);
        assert!(sub.converged);
        assert!((sub.modulus - expected).abs() < 1e-8, "{} vs {expected}", sub.modulus);
    }
}

#[test]
fn greedy_of_optimal_policy_is_optimal_among_deterministic() {
    for seed in 0..10 {
        let mdp = garnet(&GarnetParams {
            n_states: 4,
            n_actions: 3,
            branching: 2,
            reward_sparsity: 0.0,
            seed,
        })
        .unwrap();
        let gamma = 0.9;
        let policies = deterministic_policies(4, 3);
        let etas: Vec<f64> = policies.iter().map(|p| discounted_eta(&mdp, p, gamma)).collect();
        let best = etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let opt = &policies[etas.iter().position(|&e| e == best).unwrap()];
        // An optimal policy has no positive advantage: its greedy policy is
        // also optimal, and the line search takes no step.
        let eval = eval_discounted(&mdp, opt, gamma).unwrap();
        let greedy = greedy_policy(&eval);
        assert!((discounted_eta(&mdp, &greedy, gamma) - best).abs() < 1e-10);
        let step = line_search(&mdp, opt, gamma, &default_alpha_grid()).unwrap();
        assert!(step.realized_gain.abs() < 1e-12);
        assert!(step.certified_gain_refined.abs() < 1e-12);
        // The improvement loop can never overshoot the optimum.
        let trace = improve(&mdp, &Policy::uniform(4, 3), gamma, 30, &default_alpha_grid()).unwrap();
        for eta in trace.etas() {
            assert!(eta <= best + 1e-10);
        }
    }
}

#[test]
fn perturbation_identity_matches_direct_difference() {
    for seed in 0..20 {
        let (mdp, pi) = garnet_instance(seed, 5, 3);
        let other = Policy::random(5, 3, &mut rng(seed + 100));
        let pi_tilde = pi.mixture(&other, 0.3).unwrap();
        for gamma in [0.5, 0.9, 0.99] {
            let Ok(r) = perturbation_identity_check(&mdp, &pi, &pi_tilde, gamma) else { continue };
            let (p, _) = brute_force_chain(&mdp, &pi);
            let (pt, _) = brute_force_chain(&mdp, &pi_tilde);
            let d = nalgebra_occupancy(&p, mdp.initial_dist(), gamma);
            let dt = nalgebra_occupancy(&pt, mdp.initial_dist(), gamma);
            let gap: f64 = d.iter().zip(&dt).map(|(a, b)| (a - b).abs()).sum();
            assert!(r.corrected < 1e-10);
            assert!((r.as_stated - 2.0 * gap).abs() < 1e-10);
        }
    }
}

#[test]
fn refined_bound_terms_match_direct_formulas() {
    for seed in 0..10 {
        let (mdp, pi) = garnet_instance(seed, 5, 3);
        let pi_tilde = pi.mixture(&Policy::uniform(5, 3), 0.4).unwrap();
        let gamma = 0.9;
        let Ok(r) = refined_bound(&mdp, &pi, &pi_tilde, gamma) else { continue };
        let lhs = discounted_eta(&mdp, &pi_tilde, gamma) - discounted_eta(&mdp, &pi, gamma);
        assert_abs_diff_eq!(r.true_lhs, lhs, epsilon = 1e-11);
        let eval = eval_discounted(&mdp, &pi, gamma).unwrap();
        let (p, _) = brute_force_chain(&mdp, &pi);
        let d = nalgebra_occupancy(&p, mdp.initial_dist(), gamma);
        let mut surrogate = 0.0;
        let mut eps: f64 = 0.0;
        let mut tv_mean = 0.0;
        for x in 0..5 {
            let s: f64 = (0..3).map(|a| pi_tilde.prob(x, a) * eval.adv[x][a]).sum();
            surrogate += d[x] * s;
            eps = eps.max(s.abs());
            tv_mean += d[x] * 0.5 * (0..3).map(|a| (pi_tilde.prob(x, a) - pi.prob(x, a)).abs()).sum::<f64>();
        }
        assert_abs_diff_eq!(r.surrogate, surrogate, epsilon = 1e-12);
        assert_abs_diff_eq!(r.epsilon, eps, epsilon = 1e-12);
        assert_abs_diff_eq!(r.tv_mean, tv_mean, epsilon = 1e-12);
    }
}

#[test]
fn witness_ratio_matches_definition() {
    let mut g = rng(9);
    for _ in 0..10 {
        let p_tilde = random_stochastic(5, &mut g);
        let w = tightness_witness(&p_tilde, 1e-3).unwrap();
        let (d_ref, _) = nalgebra_group_inverse(&w.perturbed);
        let (dt_ref, _) = nalgebra_group_inverse(&p_tilde);
        let num: f64 = d_ref.iter().zip(&dt_ref).map(|(a, b)| (a - b).abs()).sum();
        let den: f64 = w.perturbed.sub(&p_tilde).vec_mul(&d_ref).iter().map(|v| v.abs()).sum();
        assert!((num / den - w.ratio).abs() < 1e-8);
    }
}
