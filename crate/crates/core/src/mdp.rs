//! Finite MDPs, stationary randomized policies and the Markov chains they induce.

use std::path::Path;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Tolerance on row sums of user-supplied probability tables.
pub const PROB_TOL: f64 = 1e-12;

/// Tolerance used when checking derived quantities.
pub const DERIVED_TOL: f64 = 1e-9;

fn check_distribution(what: &'static str, row: usize, p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what, row });
    }
    let sum: f64 = p.iter().sum();
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 0.0 || (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::NotStochastic { what, row, sum, min });
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { what, expected, got });
    }
    Ok(())
}

/// On-disk layout of an [`Mdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
}

/// A finite MDP `(X, A, P, r, μ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
}

impl TryFrom<MdpFile> for Mdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        Mdp::new(f.transition, f.reward, f.initial_dist).and_then(|m| {
            check_len("n_states", m.n_states, f.n_states)?;
            check_len("n_actions", m.n_actions, f.n_actions)?;
            Ok(m)
        })
    }
}

impl From<Mdp> for MdpFile {
    fn from(m: Mdp) -> Self {
        MdpFile {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: m.transition,
            reward: m.reward,
            initial_dist: m.initial_dist,
        }
    }
}

impl Mdp {
    /// `transition[x][a][y] = P(y | x, a)`, `reward[x][a]`, `initial_dist[x]`.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::InvalidParameter("MDP needs at least one state".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidParameter("MDP needs at least one action".into()));
        }
        for (x, per_action) in transition.iter().enumerate() {
            check_len("transition actions", n_actions, per_action.len())?;
            for row in per_action {
                check_len("transition successors", n_states, row.len())?;
                check_distribution("transition", x, row)?;
            }
        }
        check_len("reward states", n_states, reward.len())?;
        for (x, row) in reward.iter().enumerate() {
            check_len("reward actions", n_actions, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "reward", row: x });
            }
        }
        check_len("initial_dist", n_states, initial_dist.len())?;
        check_distribution("initial_dist", 0, &initial_dist)?;
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            initial_dist,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `P(· | x, a)`
    pub fn transition(&self, x: usize, a: usize) -> &[f64] {
        &self.transition[x][a]
    }

    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.reward[x][a]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Same MDP with `c` added to every reward.
    pub fn shift_rewards(&self, c: f64) -> Mdp {
        let mut m = self.clone();
        m.reward.iter_mut().flatten().for_each(|r| *r += c);
        m
    }

    /// Same MDP with a different initial distribution.
    pub fn with_initial_dist(&self, mu: Vec<f64>) -> Result<Mdp> {
        Mdp::new(self.transition.clone(), self.reward.clone(), mu)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyFile {
    probs: Vec<Vec<f64>>,
}

/// Stationary randomized policy `π(a | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<PolicyFile> for Policy {
    type Error = Error;

    fn try_from(f: PolicyFile) -> Result<Self> {
        Policy::new(f.probs)
    }
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        PolicyFile { probs: p.probs }
    }
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || n_actions == 0 {
            return Err(Error::InvalidParameter("policy table is empty".into()));
        }
        for (x, row) in probs.iter().enumerate() {
            check_len("policy actions", n_actions, row.len())?;
            check_distribution("policy", x, row)?;
        }
        Ok(Self { probs })
    }

    /// Deterministic policy choosing `actions[x]` in state `x`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let probs = actions
            .iter()
            .map(|&a| {
                if a >= n_actions {
                    return Err(Error::InvalidParameter(format!(
                        "action {a} out of range for {n_actions} actions"
                    )));
                }
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Self::new(probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    /// Every row drawn uniformly from the probability simplex.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        Self {
            probs: (0..n_states)
                .map(|_| uniform_simplex(n_actions, rng))
                .collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x][a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x]
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// `(1 − α)·self + α·other`, rows renormalised against rounding drift.
    pub fn mixture(&self, other: &Policy, alpha: f64) -> Result<Policy> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("mixture weight {alpha} outside [0, 1]")));
        }
        check_len("mixture states", self.n_states(), other.n_states())?;
        check_len("mixture actions", self.n_actions(), other.n_actions())?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| {
                let row: Vec<f64> = p.iter().zip(q).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect();
                let s: f64 = row.iter().sum();
                row.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Policy::new(probs)
    }

    /// Checks that this policy's shape matches `mdp`.
    pub fn check_shape(&self, mdp: &Mdp) -> Result<()> {
        check_len("policy states", mdp.n_states(), self.n_states())?;
        check_len("policy actions", mdp.n_actions(), self.n_actions())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// State-to-state chain `P^π` and expected one-step reward `r^π`.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    pub transition: Matrix,
    pub reward: Vec<f64>,
}

impl InducedChain {
    pub fn n_states(&self) -> usize {
        self.reward.len()
    }
}

/// `P^π(x, y) = Σ_a π(a|x) P(y|x,a)` and `r^π(x) = Σ_a π(a|x) r(x,a)`.
pub fn induce_chain(mdp: &Mdp, policy: &Policy) -> Result<InducedChain> {
    policy.check_shape(mdp)?;
    let n = mdp.n_states();
    let mut transition = Matrix::zeros(n);
    let mut reward = vec![0.0; n];
    for x in 0..n {
        for a in 0..mdp.n_actions() {
            let w = policy.prob(x, a);
            if w == 0.0 {
                continue;
            }
            reward[x] += w * mdp.reward(x, a);
            for (y, &p) in mdp.transition(x, a).iter().enumerate() {
                transition[(x, y)] += w * p;
            }
        }
        check_distribution("induced chain", x, transition.row(x))?;
    }
    Ok(InducedChain { transition, reward })
}

/// Structural diagnostics of a chain's positive-transition graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachabilityReport {
    /// States reachable from the support of the start distribution, sorted.
    pub reachable: Vec<usize>,
    /// Closed communicating classes over the whole state space, each sorted.
    pub recurrent_classes: Vec<Vec<usize>>,
    /// Exactly one recurrent class among the reachable states.
    pub reachable_single_recurrent_class: bool,
    /// Exactly one recurrent class over the whole state space.
    pub unichain: bool,
    pub irreducible: bool,
    /// Period of the recurrent class, when the chain is unichain.
    pub period: Option<usize>,
    pub aperiodic: bool,
    pub n_states: usize,
}

impl ReachabilityReport {
    pub fn all_reachable(&self) -> bool {
        self.reachable.len() == self.n_states
    }

    /// Fails unless the chain has a single recurrent class.
    pub fn require_unichain(&self) -> Result<()> {
        if self.unichain {
            Ok(())
        } else {
            Err(Error::NotUnichain {
                closed_classes: self.recurrent_classes.len(),
            })
        }
    }

    /// Fails unless the chain is unichain with an aperiodic recurrent class.
    pub fn require_aperiodic_unichain(&self) -> Result<()> {
        self.require_unichain()?;
        match self.period {
            Some(p) if p > 1 => Err(Error::Periodic { period: p }),
            _ => Ok(()),
        }
    }
}

/// Analyzes the graph of positive entries of `p`, starting from `support(start)`.
pub fn analyze_chain(p: &Matrix, start: &[f64]) -> ReachabilityReport {
    let n = p.order();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }

    let mut reachable = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| start[i] > 0.0).collect();
    for &i in &stack {
        reachable[i] = true;
    }
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if p[(i, j)] > 0.0 && !reachable[j] {
                reachable[j] = true;
                stack.push(j);
            }
        }
    }

    let mut component = vec![0usize; n];
    let sccs = tarjan_scc(&graph);
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    let mut recurrent_classes: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter().all(|node| {
                let i = node.index();
                (0..n).all(|j| p[(i, j)] <= 0.0 || component[j] == *c)
            })
        })
        .map(|(_, scc)| {
            let mut v: Vec<usize> = scc.iter().map(|node| node.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    recurrent_classes.sort();

    let reachable_classes = recurrent_classes
        .iter()
        .filter(|class| reachable[class[0]])
        .count();
    let unichain = recurrent_classes.len() == 1;
    let irreducible = sccs.len() == 1;
    let period = unichain.then(|| class_period(p, &recurrent_classes[0]));

    ReachabilityReport {
        reachable: (0..n).filter(|&i| reachable[i]).collect(),
        recurrent_classes,
        reachable_single_recurrent_class: reachable_classes == 1,
        unichain,
        irreducible,
        period,
        aperiodic: period == Some(1),
        n_states: n,
    }
}

/// gcd of `level(u) + 1 − level(v)` over edges inside a strongly connected class.
fn class_period(p: &Matrix, class: &[usize]) -> usize {
    let n = p.order();
    let mut in_class = vec![false; n];
    for &i in class {
        in_class[i] = true;
    }
    let mut level = vec![usize::MAX; n];
    level[class[0]] = 0;
    let mut queue = std::collections::VecDeque::from([class[0]]);
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if in_class[j] && p[(i, j)] > 0.0 && level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let mut g = 0usize;
    for &i in class {
        for &j in class {
            if p[(i, j)] > 0.0 {
                g = gcd(g, (level[i] + 1).abs_diff(level[j]));
            }
        }
    }
    g
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Reachability, recurrent-class and periodicity diagnostics for `P^π` from `μ`.
pub fn validate_reachability(mdp: &Mdp, policy: &Policy) -> Result<ReachabilityReport> {
    let chain = induce_chain(mdp, policy)?;
    Ok(analyze_chain(&chain.transition, mdp.initial_dist()))
}

/// Uniform sample from the `k`-simplex (normalised i.i.d. exponentials).
pub fn uniform_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 && w.iter().all(|&v| v > 0.0) {
            return w.into_iter().map(|v| v / s).collect();
        }
    }
}

/// Parameters of a Garnet random MDP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarnetParams {
    pub n_states: usize,
    pub n_actions: usize,
    /// Number of successors of every state-action pair.
    pub branching: usize,
    /// Probability that a sampled reward is zeroed.
    pub reward_sparsity: f64,
    pub seed: u64,
}

/// Garnet instance: each `(x, a)` has `branching` distinct successors with
/// uniform-simplex probabilities; rewards are `U[0, 1)` zeroed with
/// probability `reward_sparsity`; `μ` is uniform.
pub fn garnet(params: &GarnetParams) -> Result<Mdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    garnet_with_rng(params, &mut rng)
}

pub(crate) fn garnet_with_rng<R: Rng + ?Sized>(params: &GarnetParams, rng: &mut R) -> Result<Mdp> {
    let &GarnetParams {
        n_states: n,
        n_actions,
        branching,
        reward_sparsity,
        ..
    } = params;
    if n == 0 || n_actions == 0 {
        return Err(Error::InvalidParameter("garnet needs n_states, n_actions ≥ 1".into()));
    }
    if branching == 0 || branching > n {
        return Err(Error::InvalidParameter(format!(
            "branching {branching} outside [1, {n}]"
        )));
    }
    if !(0.0..=1.0).contains(&reward_sparsity) {
        return Err(Error::InvalidParameter(format!(
            "reward sparsity {reward_sparsity} outside [0, 1]"
        )));
    }
    let mut transition = vec![vec![vec![0.0; n]; n_actions]; n];
    let mut reward = vec![vec![0.0; n_actions]; n];
    for x in 0..n {
        for a in 0..n_actions {
            let successors = index::sample(rng, n, branching);
            let probs = uniform_simplex(branching, rng);
            for (y, p) in successors.iter().zip(probs) {
                transition[x][a][y] = p;
            }
            let r: f64 = rng.random();
            let zeroed = rng.random::<f64>() < reward_sparsity;
            reward[x][a] = if zeroed { 0.0 } else { r };
        }
    }
    Mdp::new(transition, reward, vec![1.0 / n as f64; n])
}
