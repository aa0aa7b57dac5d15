//! Batch experiments and the command implementations behind the `mdplab` binary.
//!
//! Output formats:
//!
//! * sweep records: CSV with one row per `(instance, γ)` plus one
//!   average-reward row per instance (`gamma` column empty), or the same
//!   records as a JSON array;
//! * summaries, evaluation reports and improvement traces: pretty JSON.
//!
//! Column dictionaries for both formats are in `docs/columns.md`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, average_bound, classical_bound, refined_bound, BoundReport, SLACK_TOL};
use crate::ergodicity::{
    self, chain_group_inverse, default_ell_cap, discounted_group_inverse, matr_diff_check,
    minorization_bound, spectral_bounds,
};
use crate::error::{Error, Result};
use crate::evaluation::{self, AverageEval, DiscountedEval};
use crate::improve::{self, ImprovementTrace};
use crate::linalg::Matrix;
use crate::mdp::{self, analyze_chain, garnet_with_rng, induce_chain, GarnetParams, Mdp, Policy, ReachabilityReport};
use crate::occupancy::occupancy_all;

/// Tolerances applied by the sweep when counting violations.
pub mod tol {
    pub const STATIONARITY: f64 = 1e-9;
    pub const METHOD_AGREEMENT: f64 = 1e-8;
    pub const GROUP_INVERSE: f64 = 1e-8;
    pub const ROW_SUM: f64 = 1e-9;
    pub const MATR_DIFF: f64 = 1e-8;
    pub const TAU1_TRANSLATION: f64 = 1e-12;
    pub const PERTURBATION: f64 = 1e-9;
    pub const ORDERING: f64 = 1e-9;
}

// ── instances ────────────────────────────────────────────────────────────

/// Distribution of random instances in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceSpec {
    /// Inclusive range of state counts.
    pub n_states: (usize, usize),
    /// Inclusive range of action counts.
    pub n_actions: (usize, usize),
    /// Fixed branching factor; drawn from `[min(2, n), n]` when absent.
    pub branching: Option<usize>,
    pub reward_sparsity: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            n_states: (2, 20),
            n_actions: (2, 5),
            branching: None,
            reward_sparsity: 0.0,
        }
    }
}

/// A Garnet MDP with a reference policy `π` and a candidate `π̃`.
///
/// `π` has uniform-simplex rows; `π̃ = (1 − β)π + βq` for another
/// uniform-simplex policy `q` and `β ∼ U[0, 1)`.
#[derive(Debug, Clone)]
pub struct BatchInstance {
    pub seed: u64,
    pub mdp: Mdp,
    pub pi: Policy,
    pub pi_tilde: Policy,
}

fn sample_range<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi.max(lo))
}

pub fn batch_instance(seed: u64, spec: &InstanceSpec) -> Result<BatchInstance> {
    if spec.n_states.0 == 0 || spec.n_actions.0 == 0 {
        return Err(Error::InvalidParameter("instance ranges must start at 1 or more".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sample_range(&mut rng, spec.n_states);
    let a = sample_range(&mut rng, spec.n_actions);
    let branching = match spec.branching {
        Some(b) => b,
        None => sample_range(&mut rng, (2.min(n), n)),
    };
    let params = GarnetParams {
        n_states: n,
        n_actions: a,
        branching,
        reward_sparsity: spec.reward_sparsity,
        seed,
    };
    let mdp = garnet_with_rng(&params, &mut rng)?;
    let pi = Policy::random(n, a, &mut rng);
    let other = Policy::random(n, a, &mut rng);
    let beta: f64 = rng.random();
    let pi_tilde = pi.mixture(&other, beta)?;
    Ok(BatchInstance {
        seed,
        mdp,
        pi,
        pi_tilde,
    })
}

// ── records ──────────────────────────────────────────────────────────────

/// Which checks a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Occupancy,
    GroupInverse,
    MatrDiff,
    Perturbation,
    Spectral,
    Minorization,
    Average,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Occupancy,
        Check::GroupInverse,
        Check::MatrDiff,
        Check::Perturbation,
        Check::Spectral,
        Check::Minorization,
        Check::Average,
    ];
}

/// One row of sweep output. Optional fields are empty when a check was not
/// requested or not applicable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub seed: Option<u64>,
    pub n_states: usize,
    pub n_actions: usize,
    /// Empty for the average-reward row.
    pub gamma: Option<f64>,
    pub surrogate: Option<f64>,
    pub epsilon: Option<f64>,
    pub tv_mean: Option<f64>,
    pub tau1: Option<f64>,
    pub classical_rhs: Option<f64>,
    pub refined_rhs: Option<f64>,
    pub true_lhs: Option<f64>,
    pub classical_slack: Option<f64>,
    pub refined_slack: Option<f64>,
    pub trace_bound: Option<f64>,
    pub cardinality_bound: Option<f64>,
    pub subdominant_modulus: Option<f64>,
    pub minorization_bound: Option<f64>,
    pub minorization_ell: Option<usize>,
    pub minorization_delta: Option<f64>,
    pub stationarity_residual: Option<f64>,
    pub occupancy_agreement: Option<f64>,
    pub group_inverse_residual: Option<f64>,
    pub group_inverse_row_sum: Option<f64>,
    pub matr_diff_gap: Option<f64>,
    pub matr_diff_corrected_gap: Option<f64>,
    pub matr_diff_tau1_gap: Option<f64>,
    pub perturbation_residual: Option<f64>,
    /// Residual of the sign-flipped form; expected to be `2‖d̃ − d‖₁`, not a violation.
    pub perturbation_residual_as_stated: Option<f64>,
    pub gap_chain_ordered: Option<bool>,
    pub unichain: bool,
    pub aperiodic: bool,
    pub note: Option<String>,
}

impl SweepRecord {
    /// Names of mathematical contracts this record violates at slack tolerance `slack_tol`.
    pub fn violations(&self, slack_tol: f64) -> Vec<&'static str> {
        let mut v = Vec::new();
        let over = |x: Option<f64>, t: f64| x.is_some_and(|x| x > t);
        if self.classical_slack.is_some_and(|s| s < -slack_tol) {
            v.push("classical slack");
        }
        if self.refined_slack.is_some_and(|s| s < -slack_tol) {
            v.push("refined slack");
        }
        if let (Some(c), Some(r)) = (self.classical_rhs, self.refined_rhs) {
            if r < c - slack_tol {
                v.push("refinement dominance");
            }
        }
        if over(self.stationarity_residual, tol::STATIONARITY) {
            v.push("discounted stationarity");
        }
        if over(self.occupancy_agreement, tol::METHOD_AGREEMENT) {
            v.push("occupancy agreement");
        }
        if over(self.group_inverse_residual, tol::GROUP_INVERSE) {
            v.push("group inverse identities");
        }
        if over(self.group_inverse_row_sum, tol::ROW_SUM) {
            v.push("group inverse row sums");
        }
        if over(self.matr_diff_corrected_gap, tol::MATR_DIFF) {
            v.push("resolvent form of discounted group inverse");
        }
        if over(self.matr_diff_tau1_gap, tol::TAU1_TRANSLATION) {
            v.push("tau1 translation invariance");
        }
        if over(self.perturbation_residual, tol::PERTURBATION) {
            v.push("perturbation identity");
        }
        if self.gap_chain_ordered == Some(false) {
            v.push("occupancy gap chain");
        }
        if let (Some(t), Some(tr), Some(c)) = (self.tau1, self.trace_bound, self.cardinality_bound) {
            if t > tr + tol::ORDERING || tr > c + tol::ORDERING {
                v.push("spectral ordering");
            }
        }
        if let (Some(t), Some(m)) = (self.tau1, self.minorization_bound) {
            if t > m + tol::ORDERING {
                v.push("minorization ordering");
            }
        }
        v
    }

    fn apply_bounds(&mut self, r: &BoundReport) {
        self.surrogate = Some(r.surrogate);
        self.epsilon = Some(r.epsilon);
        self.tv_mean = Some(r.tv_mean);
        self.tau1 = r.tau1_value;
        self.classical_rhs = r.classical_rhs;
        self.refined_rhs = r.refined_rhs;
        self.true_lhs = Some(r.true_lhs);
        self.classical_slack = r.classical_slack;
        self.refined_slack = r.refined_slack;
    }

    fn add_note(&mut self, what: &str, e: &Error) {
        let msg = format!("{what}: {e}");
        self.note = Some(match self.note.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }
}

fn max_row_sum(d: &Matrix) -> f64 {
    d.rows().map(|r| r.iter().sum::<f64>().abs()).fold(0.0, f64::max)
}

/// Options shared by every record-producing command.
#[derive(Debug, Clone)]
pub struct RecordOptions {
    pub checks: Vec<Check>,
    pub ell_cap: Option<usize>,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            checks: Check::ALL.to_vec(),
            ell_cap: None,
        }
    }
}

impl RecordOptions {
    fn has(&self, c: Check) -> bool {
        self.checks.contains(&c)
    }
}

/// Records for one `(MDP, π, π̃)` triple: one per `γ`, then the average-reward row.
pub fn instance_records(
    seed: Option<u64>,
    mdp: &Mdp,
    pi: &Policy,
    pi_tilde: &Policy,
    gammas: &[f64],
    opts: &RecordOptions,
) -> Result<Vec<SweepRecord>> {
    let mu = mdp.initial_dist();
    let chain = induce_chain(mdp, pi)?;
    let chain_tilde = induce_chain(mdp, pi_tilde)?;
    let diag = analyze_chain(&chain.transition, mu);
    let diag_tilde = analyze_chain(&chain_tilde.transition, mu);
    let base = SweepRecord {
        seed,
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        unichain: diag.unichain && diag_tilde.unichain,
        aperiodic: diag.aperiodic && diag_tilde.aperiodic,
        ..SweepRecord::default()
    };
    let ell_cap = opts.ell_cap.unwrap_or_else(|| default_ell_cap(mdp.n_states()));
    let mut out = Vec::with_capacity(gammas.len() + 1);

    for &gamma in gammas {
        let mut rec = SweepRecord {
            gamma: Some(gamma),
            ..base.clone()
        };
        match refined_bound(mdp, pi, pi_tilde, gamma) {
            Ok(r) => rec.apply_bounds(&r),
            Err(e) => {
                rec.add_note("refined bound", &e);
                classical_bound(mdp, pi, pi_tilde, gamma)
                    .map(|r| rec.apply_bounds(&r))
                    .unwrap_or_else(|e| rec.add_note("classical bound", &e));
            }
        }
        if opts.has(Check::Occupancy) {
            match occupancy_all(&chain, mu, gamma) {
                Ok(a) => {
                    rec.stationarity_residual = Some(a.stationarity_residual);
                    rec.occupancy_agreement = Some(a.max_pairwise_l1);
                }
                Err(e) => rec.add_note("occupancy", &e),
            }
        }
        if opts.has(Check::GroupInverse) {
            match discounted_group_inverse(&chain, mu, gamma) {
                Ok(dg) => {
                    rec.group_inverse_residual = Some(dg.result.max_residual());
                    rec.group_inverse_row_sum = Some(max_row_sum(&dg.result.d_matrix));
                }
                Err(e) => rec.add_note("discounted group inverse", &e),
            }
        }
        if opts.has(Check::MatrDiff) && diag.unichain && gamma > 0.0 {
            match matr_diff_check(&chain, mu, gamma) {
                Ok(m) => {
                    rec.matr_diff_gap = Some(m.identity_gap);
                    rec.matr_diff_corrected_gap = Some(m.corrected_identity_gap);
                    rec.matr_diff_tau1_gap = Some(m.tau1_gap);
                }
                Err(e) => rec.add_note("matr_diff", &e),
            }
        }
        if opts.has(Check::Perturbation) {
            match bounds::perturbation_identity_check(mdp, pi, pi_tilde, gamma) {
                Ok(r) => {
                    rec.perturbation_residual = Some(r.corrected);
                    rec.perturbation_residual_as_stated = Some(r.as_stated);
                }
                Err(e) => rec.add_note("perturbation identity", &e),
            }
            match bounds::occupancy_gap_chain(mdp, pi, pi_tilde, gamma) {
                Ok(_) => rec.gap_chain_ordered = Some(true),
                Err(Error::Inconsistent { .. }) => rec.gap_chain_ordered = Some(false),
                Err(e) => rec.add_note("gap chain", &e),
            }
        }
        if opts.has(Check::Spectral) && diag_tilde.aperiodic {
            match spectral_bounds(&chain_tilde, mu, gamma) {
                Ok(s) => {
                    rec.tau1.get_or_insert(s.tau1);
                    rec.trace_bound = Some(s.trace_bound);
                    rec.cardinality_bound = Some(s.cardinality_bound);
                    rec.subdominant_modulus = Some(s.subdominant_modulus);
                }
                Err(e) => rec.add_note("spectral bounds", &e),
            }
        }
        if opts.has(Check::Minorization) {
            match minorization_bound(&chain_tilde, mu, gamma, ell_cap) {
                Ok(c) => {
                    rec.minorization_bound = Some(c.bound_value);
                    rec.minorization_ell = Some(c.ell);
                    rec.minorization_delta = Some(c.delta);
                }
                Err(e) => rec.add_note("minorization", &e),
            }
        }
        out.push(rec);
    }

    if opts.has(Check::Average) {
        let mut rec = base.clone();
        match average_bound(mdp, pi, pi_tilde) {
            Ok(r) => rec.apply_bounds(&r),
            Err(e) => rec.add_note("average bound", &e),
        }
        if diag.unichain && opts.has(Check::GroupInverse) {
            match chain_group_inverse(&chain.transition) {
                Ok((_, g)) => {
                    rec.group_inverse_residual = Some(g.max_residual());
                    rec.group_inverse_row_sum = Some(max_row_sum(&g.d_matrix));
                }
                Err(e) => rec.add_note("group inverse", &e),
            }
        }
        out.push(rec);
    }
    Ok(out)
}

// ── sweep ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

/// Sweep configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seeds: SeedSpec,
    #[serde(default)]
    pub instances: InstanceSpec,
    pub gammas: Vec<f64>,
    #[serde(default = "all_checks")]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub ell_cap: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn all_checks() -> Vec<Check> {
    Check::ALL.to_vec()
}

fn default_tolerance() -> f64 {
    SLACK_TOL
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for &g in &self.gammas {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidParameter(format!("gamma {g} outside [0, 1)")));
            }
        }
        let InstanceSpec { n_states, n_actions, .. } = self.instances;
        if n_states.0 == 0 || n_states.0 > n_states.1 || n_actions.0 == 0 || n_actions.0 > n_actions.1 {
            return Err(Error::InvalidParameter("empty instance range".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidParameter("tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub instances: usize,
    pub records: usize,
    pub violations: usize,
    /// Records with at least one missing check (see their `note`).
    pub records_with_notes: usize,
    pub aperiodic_unichain_instances: usize,
    pub min_classical_slack: Option<f64>,
    pub min_refined_slack: Option<f64>,
    pub min_average_slack: Option<f64>,
    pub max_stationarity_residual: Option<f64>,
    pub max_occupancy_agreement: Option<f64>,
    pub max_group_inverse_residual: Option<f64>,
    pub max_group_inverse_row_sum: Option<f64>,
    pub max_matr_diff_gap: Option<f64>,
    pub max_matr_diff_corrected_gap: Option<f64>,
    pub max_matr_diff_tau1_gap: Option<f64>,
    pub max_perturbation_residual: Option<f64>,
    pub max_perturbation_residual_as_stated: Option<f64>,
    /// Wall-clock time; only filled in on request so summaries stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u128>,
}

fn fold_opt(acc: Option<f64>, v: Option<f64>, f: fn(f64, f64) -> f64) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(f(a, b)),
        (a, b) => a.or(b),
    }
}

impl SweepSummary {
    pub fn from_records(records: &[SweepRecord], tolerance: f64) -> Self {
        let mut s = SweepSummary {
            records: records.len(),
            ..Default::default()
        };
        let mut seeds: Vec<Option<u64>> = records.iter().map(|r| r.seed).collect();
        seeds.dedup();
        s.instances = seeds.len();
        s.aperiodic_unichain_instances = records
            .iter()
            .filter(|r| r.gamma.is_none() && r.unichain && r.aperiodic)
            .count();
        for r in records {
            if !r.violations(tolerance).is_empty() {
                s.violations += 1;
            }
            if r.note.is_some() {
                s.records_with_notes += 1;
            }
            if r.gamma.is_some() {
                s.min_classical_slack = fold_opt(s.min_classical_slack, r.classical_slack, f64::min);
                s.min_refined_slack = fold_opt(s.min_refined_slack, r.refined_slack, f64::min);
            } else {
                s.min_average_slack = fold_opt(s.min_average_slack, r.refined_slack, f64::min);
            }
            s.max_stationarity_residual = fold_opt(s.max_stationarity_residual, r.stationarity_residual, f64::max);
            s.max_occupancy_agreement = fold_opt(s.max_occupancy_agreement, r.occupancy_agreement, f64::max);
            s.max_group_inverse_residual = fold_opt(s.max_group_inverse_residual, r.group_inverse_residual, f64::max);
            s.max_group_inverse_row_sum = fold_opt(s.max_group_inverse_row_sum, r.group_inverse_row_sum, f64::max);
            s.max_matr_diff_gap = fold_opt(s.max_matr_diff_gap, r.matr_diff_gap, f64::max);
            s.max_matr_diff_corrected_gap =
                fold_opt(s.max_matr_diff_corrected_gap, r.matr_diff_corrected_gap, f64::max);
            s.max_matr_diff_tau1_gap = fold_opt(s.max_matr_diff_tau1_gap, r.matr_diff_tau1_gap, f64::max);
            s.max_perturbation_residual = fold_opt(s.max_perturbation_residual, r.perturbation_residual, f64::max);
            s.max_perturbation_residual_as_stated = fold_opt(
                s.max_perturbation_residual_as_stated,
                r.perturbation_residual_as_stated,
                f64::max,
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
}

/// Runs the batch in parallel; records come back ordered by seed, then by
/// the configured `γ` order with the average row last.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let opts = RecordOptions {
        checks: cfg.checks.clone(),
        ell_cap: cfg.ell_cap,
    };
    let mut seeds = cfg.seeds.seeds();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed: Vec<Vec<SweepRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let inst = batch_instance(seed, &cfg.instances)?;
            instance_records(Some(seed), &inst.mdp, &inst.pi, &inst.pi_tilde, &cfg.gammas, &opts)
        })
        .collect::<Result<_>>()?;
    let records: Vec<SweepRecord> = per_seed.into_iter().flatten().collect();
    let summary = SweepSummary::from_records(&records, cfg.tolerance);
    Ok(SweepOutput { records, summary })
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize infallibly") + "\n"
}

// ── commands ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub diagnostics: ReachabilityReport,
    pub discounted: Option<DiscountedEval>,
    pub average: Option<AverageEval>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Residual contracts: Bellman and Poisson residuals within `1e-9`.
    pub fn within_contract(&self) -> bool {
        self.discounted.as_ref().is_none_or(|d| d.bellman_residual <= 1e-9)
            && self.average.as_ref().is_none_or(|a| a.poisson_residual <= 1e-9)
    }
}

pub fn cmd_eval(mdp: &Mdp, policy: &Policy, gamma: Option<f64>) -> Result<EvalReport> {
    let diagnostics = mdp::validate_reachability(mdp, policy)?;
    let mut warnings = Vec::new();
    let discounted = gamma
        .map(|g| evaluation::eval_discounted(mdp, policy, g))
        .transpose()?;
    if discounted.is_some() && !diagnostics.all_reachable() {
        warnings.push(format!(
            "{} states unreachable from the initial distribution receive zero discounted occupancy",
            mdp.n_states() - diagnostics.reachable.len()
        ));
    }
    let average = match evaluation::eval_average(mdp, policy) {
        Ok(a) => Some(a),
        Err(e @ Error::NotUnichain { .. }) => {
            warnings.push(format!("average-reward evaluation skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        diagnostics,
        discounted,
        average,
        warnings,
    })
}


/// Records for a fixed `(MDP, π, π̃)` and a list of discount factors.
pub fn cmd_bounds(
    mdp: &Mdp,
    pi: &Policy,
    pi_tilde: &Policy,
    gammas: &[f64],
    ell_cap: Option<usize>,
) -> Result<Vec<SweepRecord>> {
    for &g in gammas {
        evaluation::check_gamma(g)?;
    }
    pi.check_shape(mdp)?;
    pi_tilde.check_shape(mdp)?;
    instance_records(
        None,
        mdp,
        pi,
        pi_tilde,
        gammas,
        &RecordOptions {
            checks: Check::ALL.to_vec(),
            ell_cap,
        },
    )
}

/// Step sizes each certificate would choose from the same starting policy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepSizePoint {
    pub gamma: f64,
    pub refined_alpha: f64,
    pub classical_alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImproveOutput {
    pub trace: ImprovementTrace,
    pub step_sizes: Vec<StepSizePoint>,
}

pub fn cmd_improve(
    mdp: &Mdp,
    pi: &Policy,
    gamma: f64,
    iterations: usize,
    step_size_gammas: &[f64],
) -> Result<ImproveOutput> {
    let grid = improve::default_alpha_grid();
    let trace = improve::improve(mdp, pi, gamma, iterations, &grid)?;
    let step_sizes = step_size_gammas
        .iter()
        .map(|&g| {
            improve::line_search(mdp, pi, g, &grid).map(|s| StepSizePoint {
                gamma: g,
                refined_alpha: s.alpha,
                classical_alpha: s.classical_alpha,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ImproveOutput { trace, step_sizes })
}

/// `(iteration, η_γ)` rows.
pub fn eta_series_csv(trace: &ImprovementTrace) -> String {
    let mut s = String::from("iteration,eta\n");
    for (i, eta) in trace.etas().iter().enumerate() {
        s.push_str(&format!("{i},{eta}\n"));
    }
    s
}

pub fn step_size_csv(points: &[StepSizePoint]) -> String {
    let mut s = String::from("gamma,refined_alpha,classical_alpha\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.gamma, p.refined_alpha, p.classical_alpha));
    }
    s
}

/// Consistency of `τ₁` with the group inverse it was computed from; used by
/// the `check` command on a single chain.
pub fn tau1_of_chain(p: &Matrix) -> Result<f64> {
    let (_, g) = chain_group_inverse(p)?;
    Ok(ergodicity::tau1(&g.d_matrix).value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_instances_are_deterministic_and_valid() {
        let spec = InstanceSpec::default();
        for seed in 0..20 {
            let a = batch_instance(seed, &spec).unwrap();
            let b = batch_instance(seed, &spec).unwrap();
            assert_eq!(a.mdp.to_json(), b.mdp.to_json());
            assert_eq!(a.pi, b.pi);
            assert_eq!(a.pi_tilde, b.pi_tilde);
            assert!((2..=20).contains(&a.mdp.n_states()));
            assert!((2..=5).contains(&a.mdp.n_actions()));
        }
    }

    #[test]
    fn identical_policies_give_zero_bound_columns() {
        let inst = batch_instance(3, &InstanceSpec::default()).unwrap();
        let recs = cmd_bounds(&inst.mdp, &inst.pi, &inst.pi, &[0.9, 0.99], None).unwrap();
        for r in &recs {
            for v in [r.surrogate, r.epsilon, r.tv_mean, r.true_lhs].into_iter().flatten() {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_seed_list_gives_empty_output() {
        let cfg = SweepConfig {
            seeds: SeedSpec::List(vec![]),
            instances: InstanceSpec::default(),
            gammas: vec![0.9],
            checks: all_checks(),
            ell_cap: None,
            tolerance: SLACK_TOL,
        };
        let out = run_sweep(&cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary.instances, 0);
        assert_eq!(out.summary.violations, 0);
        let mut buf = Vec::new();
        write_csv(&out.records, &mut buf).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn config_rejects_unknown_fields_and_bad_gamma() {
        assert!(serde_json::from_str::<SweepConfig>(r#"{"seeds":[1],"gammas":[0.9],"bogus":1}"#).is_err());
        let cfg: SweepConfig = serde_json::from_str(r#"{"seeds":{"start":0,"count":3},"gammas":[1.0]}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let inst = batch_instance(5, &InstanceSpec::default()).unwrap();
        let recs = cmd_bounds(&inst.mdp, &inst.pi, &inst.pi_tilde, &[0.9], None).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read_csv(&text).unwrap();
        assert_eq!(back, recs);
        let mut again = Vec::new();
        write_csv(&back, &mut again).unwrap();
        assert_eq!(String::from_utf8(again).unwrap(), text);
    }
}
