//! Upper-tail CVaR and the designer's regularized selection problem.
//!
//! For a fixed scoring vector `w` the upper-tail CVaR of the scores `w.x_i` at
//! level `rho` is the mean of the `rho*n` largest scores. Maximizing
//! `CVaR(w) - (lambda/2)|w|^2` reduces, through the LP dual over the capped
//! simplex, to picking the `rho*n`-subset `I` whose feature sum `s_I` has the
//! largest norm; then `w = s_I / (lambda * rho * n)`.
//!
//! That reduced problem maximizes a convex function over a polytope, so two
//! solvers are offered:
//!
//! * `Alternating`: from a starting subset, repeat `I <- top(w(I))` until `I`
//!   stops changing. Since `top(s_I)` maximizes `s_J . s_I` over subsets `J`,
//!   the next sum satisfies `|s'| |s| >= s'.s >= |s|^2`, so `|s_I|` never
//!   decreases and the loop terminates. Several restarts are run and the best
//!   fixed point kept.
//! * `Exhaustive`: enumerate every subset. Exact, only viable for small `n`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::PopulationState;

const RHO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Alternating,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub rho: f64,
    pub lambda: f64,
    pub solver: SolverKind,
    pub restarts: usize,
    pub max_iters: usize,
    /// Seed for the random restart subsets. Independent of population generation.
    pub seed: u64,
    /// Largest number of subsets the exhaustive solver will enumerate.
    pub exhaustive_cap: u128,
}

impl SelectionConfig {
    pub fn new(rho: f64, lambda: f64) -> Self {
        SelectionConfig {
            rho,
            lambda,
            solver: SolverKind::Alternating,
            restarts: 32,
            max_iters: 1000,
            seed: 0,
            exhaustive_cap: 1_000_000,
        }
    }

    pub fn exhaustive(mut self) -> Self {
        self.solver = SolverKind::Exhaustive;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::Config(
                "restarts and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub w: Vec<f64>,
    pub eta: f64,
    /// Ascending candidate positions.
    pub selected: Vec<usize>,
    pub rejected: Vec<usize>,
    pub alpha: Vec<f64>,
    /// `upper_cvar(scores) - (lambda/2)|w|^2`.
    pub objective: f64,
    /// Squared norm of the selected feature sum.
    pub tail_norm_sq: f64,
    /// `w` is identically zero, so selection fell back to candidate order.
    pub degenerate: bool,
}

/// Tail size `rho * n`, which must be an integer in `1..=n`.
pub fn tail_size(n: usize, rho: f64) -> Result<usize> {
    let product = rho * n as f64;
    let k = product.round();
    if !(rho > 0.0 && rho <= 1.0) || (product - k).abs() > RHO_TOLERANCE || k < 1.0 || k > n as f64
    {
        return Err(Error::RhoNotIntegral { rho, n, product });
    }
    Ok(k as usize)
}

fn sorted_desc(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Mean of the `rho*n` largest scores.
pub fn upper_cvar(scores: &[f64], rho: f64) -> Result<f64> {
    let k = tail_size(scores.len(), rho)?;
    let sorted = sorted_desc(scores);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// The `rho*n`-th largest score.
pub fn tail_threshold(scores: &[f64], rho: f64) -> Result<f64> {
    let k = tail_size(scores.len(), rho)?;
    Ok(sorted_desc(scores)[k - 1])
}

pub fn score(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

pub fn scores(state: &PopulationState, w: &[f64]) -> Vec<f64> {
    state
        .candidates()
        .iter()
        .map(|c| score(w, &c.features))
        .collect()
}

/// Positions of the `k` largest scores, earlier positions winning ties,
/// returned in ascending order.
pub fn top_k_positions(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps candidate order among equal scores.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut top = order[..k].to_vec();
    top.sort_unstable();
    top
}

pub fn select_top(state: &PopulationState, w: &[f64], rho: f64) -> Result<Vec<usize>> {
    if w.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: w.len(),
        });
    }
    let k = tail_size(state.len(), rho)?;
    Ok(top_k_positions(&scores(state, w), k))
}

/// Indicator weights `1/(rho*n)` on `selected`, zero elsewhere.
pub fn dual_weights(selected: &[usize], n: usize, rho: f64) -> Result<Vec<f64>> {
    let k = tail_size(n, rho)?;
    if selected.len() != k {
        return Err(Error::Cardinality {
            expected: k,
            got: selected.len(),
        });
    }
    let mut alpha = vec![0.0; n];
    let weight = 1.0 / k as f64;
    for &i in selected {
        if i >= n || alpha[i] != 0.0 {
            return Err(Error::Domain(format!("invalid or repeated index {i}")));
        }
        alpha[i] = weight;
    }
    Ok(alpha)
}

fn subset_sum(state: &PopulationState, subset: &[usize]) -> Vec<f64> {
    let mut sum = vec![0.0; state.dim()];
    for &i in subset {
        for (s, x) in sum.iter_mut().zip(state.features(i)) {
            *s += x;
        }
    }
    sum
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn weights_from_sum(sum: &[f64], lambda: f64, k: usize) -> Vec<f64> {
    let denom = lambda * k as f64;
    sum.iter().map(|s| s / denom).collect()
}

/// Assembles the outcome for a selected subset (ascending positions).
pub fn outcome_for_subset(
    state: &PopulationState,
    subset: &[usize],
    rho: f64,
    lambda: f64,
) -> Result<SelectionOutcome> {
    let n = state.len();
    let k = tail_size(n, rho)?;
    let alpha = dual_weights(subset, n, rho)?;
    let sum = subset_sum(state, subset);
    let w = weights_from_sum(&sum, lambda, k);
    let s = scores(state, &w);
    let eta = tail_threshold(&s, rho)?;
    let objective = upper_cvar(&s, rho)? - 0.5 * lambda * norm_sq(&w);
    let rejected = (0..n).filter(|i| alpha[*i] == 0.0).collect();
    Ok(SelectionOutcome {
        degenerate: w.iter().all(|v| *v == 0.0),
        w,
        eta,
        selected: subset.to_vec(),
        rejected,
        alpha,
        objective,
        tail_norm_sq: norm_sq(&sum),
    })
}

/// Path of one alternating ascent: every visited subset with its sum norm.
#[derive(Debug, Clone)]
pub struct Ascent {
    pub subsets: Vec<Vec<usize>>,
    pub norms_sq: Vec<f64>,
}

impl Ascent {
    pub fn fixed_point(&self) -> &[usize] {
        self.subsets
            .last()
            .expect("ascent visits at least one subset")
    }
}

/// Runs `I <- top(w(I))` from `start` until `I` repeats.
pub fn alternating_ascent(
    state: &PopulationState,
    start: Vec<usize>,
    lambda: f64,
    max_iters: usize,
) -> Result<Ascent> {
    let k = start.len();
    let mut subset = start;
    subset.sort_unstable();
    let mut sum = subset_sum(state, &subset);
    let mut ascent = Ascent {
        subsets: vec![subset.clone()],
        norms_sq: vec![norm_sq(&sum)],
    };
    for _ in 0..max_iters {
        let w = weights_from_sum(&sum, lambda, k);
        let next = top_k_positions(&scores(state, &w), k);
        if next == subset {
            return Ok(ascent);
        }
        subset = next;
        sum = subset_sum(state, &subset);
        ascent.subsets.push(subset.clone());
        ascent.norms_sq.push(norm_sq(&sum));
    }
    Err(Error::NotConverged { max_iters })
}

fn better(candidate: (f64, &[usize]), incumbent: Option<(f64, &[usize])>) -> bool {
    match incumbent {
        None => true,
        Some((norm, subset)) => candidate.0 > norm || (candidate.0 == norm && candidate.1 < subset),
    }
}

/// Number of `k`-subsets of `n` items, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) at every step.
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

fn solve_alternating(
    state: &PopulationState,
    cfg: &SelectionConfig,
    k: usize,
) -> Result<Vec<usize>> {
    let n = state.len();
    let mean: Vec<f64> = subset_sum(state, &(0..n).collect::<Vec<_>>())
        .into_iter()
        .map(|v| v / n as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut last_err = None;
    for restart in 0..cfg.restarts {
        let start = if restart == 0 {
            top_k_positions(&scores(state, &mean), k)
        } else {
            index::sample(&mut rng, n, k).into_vec()
        };
        match alternating_ascent(state, start, cfg.lambda, cfg.max_iters) {
            Ok(ascent) => {
                let norm = *ascent.norms_sq.last().unwrap();
                let subset = ascent.fixed_point();
                if better(
                    (norm, subset),
                    best.as_ref().map(|(v, s)| (*v, s.as_slice())),
                ) {
                    best = Some((norm, subset.to_vec()));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, subset)), _) => Ok(subset),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one restart runs"),
    }
}

fn solve_exhaustive(
    state: &PopulationState,
    cfg: &SelectionConfig,
    k: usize,
) -> Result<Vec<usize>> {
    let n = state.len();
    let count = binomial(n, k);
    if count > cfg.exhaustive_cap {
        return Err(Error::EnumerationCap {
            subsets: count,
            cap: cfg.exhaustive_cap,
        });
    }
    // Lexicographic enumeration; strict improvement keeps the earliest maximizer.
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = (norm_sq(&subset_sum(state, &subset)), subset.clone());
    while let Some(pivot) = (0..k).rev().find(|&i| subset[i] < n - k + i) {
        subset[pivot] += 1;
        for i in pivot + 1..k {
            subset[i] = subset[i - 1] + 1;
        }
        let norm = norm_sq(&subset_sum(state, &subset));
        if norm > best.0 {
            best = (norm, subset.clone());
        }
    }
    // A global maximizer is a fixed point up to score ties; settle those so the
    // outcome is consistent with `select_top`.
    let ascent = alternating_ascent(state, best.1, cfg.lambda, cfg.max_iters)?;
    Ok(ascent.fixed_point().to_vec())
}

/// Solves the designer's problem for the current population.
pub fn solve_designer(state: &PopulationState, cfg: &SelectionConfig) -> Result<SelectionOutcome> {
    cfg.validate()?;
    let k = tail_size(state.len(), cfg.rho)?;
    let subset = match cfg.solver {
        SolverKind::Alternating => solve_alternating(state, cfg, k)?,
        SolverKind::Exhaustive => solve_exhaustive(state, cfg, k)?,
    };
    outcome_for_subset(state, &subset, cfg.rho, cfg.lambda)
}
