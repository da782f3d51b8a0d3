//! Slow reference implementations used by tests and the `verify` command.
//!
//! Nothing here calls into the solvers it checks: subsets are enumerated
//! recursively, CVaR is found by scanning the threshold, effort by searching a
//! grid, recourse by sampling feasible actions. The one deliberate overlap is
//! arithmetic order: the designer oracle sums features and scores in the same
//! order as the solver so that objectives on the same subset agree bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::effort::EffortParams;
use crate::error::{Error, Result};
use crate::population::{Candidate, FeaturePartition, PopulationState};
use crate::selection::{SelectionConfig, SelectionOutcome};

/// Largest subset count the designer oracle will enumerate.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleFailure {
    pub digest: String,
    pub expected: f64,
    pub got: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub case_count: usize,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub failures: Vec<OracleFailure>,
    /// Reason the suite could not run, if it was skipped.
    pub skipped: Option<String>,
}

impl OracleReport {
    fn new(name: &str, tolerance: f64) -> Self {
        OracleReport {
            name: name.to_string(),
            case_count: 0,
            max_abs_error: 0.0,
            tolerance,
            failures: Vec::new(),
            skipped: None,
        }
    }

    fn record(&mut self, digest: u64, expected: f64, got: f64) {
        self.case_count += 1;
        let err = if expected == got {
            0.0
        } else {
            (expected - got).abs()
        };
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.max_abs_error = self.max_abs_error.max(err);
        if err > self.tolerance {
            self.failures.push(OracleFailure {
                digest: format!("{digest:016x}"),
                expected,
                got,
            });
        }
    }

    /// Marks a case as failed outright (a violated structural property).
    fn record_violation(&mut self, digest: u64) {
        self.record(digest, 0.0, f64::INFINITY);
    }

    pub fn passed(&self) -> bool {
        self.skipped.is_none() && self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let status = match (&self.skipped, self.failures.is_empty()) {
            (Some(_), _) => "SKIP",
            (None, true) => "PASS",
            (None, false) => "FAIL",
        };
        let mut line = format!(
            "[{status}] {:<10} cases={:<5} max_abs_error={:.3e} tolerance={:.1e} failures={}",
            self.name,
            self.case_count,
            self.max_abs_error,
            self.tolerance,
            self.failures.len()
        );
        if let Some(reason) = &self.skipped {
            line.push_str(&format!(" ({reason})"));
        }
        line
    }
}

/// FNV-1a over the bit patterns of a case's inputs.
pub fn digest(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn tail_count(n: usize, rho: f64) -> Result<usize> {
    let exact = rho * n as f64;
    let k = exact.round();
    if rho <= 0.0 || rho > 1.0 || (exact - k).abs() > 1e-9 || k < 1.0 {
        return Err(Error::RhoNotIntegral {
            rho,
            n,
            product: exact,
        });
    }
    Ok(k as usize)
}

/// Minimizes `eta + (1/(rho n)) sum (s_i - eta)_+` over `eta` in the score set.
pub fn oracle_cvar(scores: &[f64], rho: f64) -> Result<f64> {
    let k = tail_count(scores.len(), rho)?;
    let phi = |eta: f64| {
        let excess: f64 = scores.iter().map(|s| (s - eta).max(0.0)).sum();
        eta + excess / k as f64
    };
    Ok(scores
        .iter()
        .map(|&eta| phi(eta))
        .fold(f64::INFINITY, f64::min))
}

fn choose(n: usize, k: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    c
}

/// Exact designer solution by enumerating every `rho*n`-subset. Ties in the
/// sum norm go to the lexicographically smallest subset.
pub fn oracle_designer(state: &PopulationState, rho: f64, lambda: f64) -> Result<SelectionOutcome> {
    let n = state.len();
    let d = state.dim();
    let k = tail_count(n, rho)?;
    let count = choose(n, k);
    if count > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            subsets: count,
            cap: ENUMERATION_CAP,
        });
    }
    let rows: Vec<&[f64]> = state
        .candidates()
        .iter()
        .map(|c| c.features.as_slice())
        .collect();

    fn visit(
        rows: &[&[f64]],
        k: usize,
        start: usize,
        chosen: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if chosen.len() == k {
            let mut sum = vec![0.0; rows[0].len()];
            for &i in chosen.iter() {
                for j in 0..sum.len() {
                    sum[j] += rows[i][j];
                }
            }
            let norm: f64 = sum.iter().map(|v| v * v).sum();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                *best = Some((norm, chosen.clone()));
            }
            return;
        }
        for i in start..=rows.len() - (k - chosen.len()) {
            chosen.push(i);
            visit(rows, k, i + 1, chosen, best);
            chosen.pop();
        }
    }

    let mut best = None;
    visit(&rows, k, 0, &mut Vec::with_capacity(k), &mut best);
    let (tail_norm_sq, selected) = best.expect("k <= n so some subset exists");

    let mut sum = vec![0.0; d];
    for &i in &selected {
        for j in 0..d {
            sum[j] += rows[i][j];
        }
    }
    let denom = lambda * k as f64;
    let w: Vec<f64> = sum.iter().map(|s| s / denom).collect();
    let scores: Vec<f64> = rows
        .iter()
        .map(|x| w.iter().zip(x.iter()).map(|(a, b)| a * b).sum())
        .collect();
    let mut desc = scores.clone();
    desc.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let cvar = desc[..k].iter().sum::<f64>() / k as f64;
    let w_norm_sq: f64 = w.iter().map(|v| v * v).sum();
    let mut alpha = vec![0.0; n];
    for &i in &selected {
        alpha[i] = 1.0 / k as f64;
    }
    Ok(SelectionOutcome {
        degenerate: w.iter().all(|v| *v == 0.0),
        eta: desc[k - 1],
        rejected: (0..n).filter(|i| !selected.contains(i)).collect(),
        selected,
        alpha,
        objective: cvar - 0.5 * lambda * w_norm_sq,
        tail_norm_sq,
        w,
    })
}

/// Grid argmax of `S g - (k/2) g^2 + theta ln(gap - g)` over
/// `{0, res, 2 res, ..} ∩ [0, gap (1 - 1e-9)]`.
///
/// The objective is concave, so its restriction to the grid is unimodal; a
/// ternary search over grid indices narrows the window, which is then scanned
/// point by point. Ties go to the smaller grid point.
pub fn oracle_effort(s: f64, params: &EffortParams, gap: f64, resolution: f64) -> f64 {
    let f = |i: u64| {
        let g = i as f64 * resolution;
        s * g - 0.5 * params.k * g * g + params.theta * (gap - g).ln()
    };
    let last = (gap * (1.0 - 1e-9) / resolution).floor() as u64;
    let (mut lo, mut hi) = (0u64, last);
    while hi - lo > 2048 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if f(m1) < f(m2) {
            lo = m1 + 1;
        } else {
            hi = m2;
        }
    }
    let mut best = lo;
    for i in lo..=hi {
        if f(i) > f(best) {
            best = i;
        }
    }
    best as f64 * resolution
}

/// Cheapest of `samples` random feasible actions and the Lagrangian candidate
/// for reaching `eta` from `x` using actionable coordinates only.
pub fn oracle_recourse(
    x: &[f64],
    w: &[f64],
    eta: f64,
    partition: &FeaturePartition,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let margin = eta - x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    if margin <= 0.0 {
        return Ok(0.0);
    }
    let act = partition.actionable();
    let wa: Vec<f64> = act.iter().map(|&j| w[j]).collect();
    let wa_sq: f64 = wa.iter().map(|v| v * v).sum();
    if wa_sq == 0.0 {
        return Err(Error::Domain(
            "no actionable weight: recourse is infeasible".into(),
        ));
    }
    let cost = |a: &[f64]| 0.5 * a.iter().map(|v| v * v).sum::<f64>();
    let gain = |a: &[f64]| a.iter().zip(&wa).map(|(p, q)| p * q).sum::<f64>();

    // Stationary point of the Lagrangian: a = mu * w_A with w_A.a = margin.
    let mu = margin / wa_sq;
    let analytic: Vec<f64> = wa.iter().map(|v| mu * v).collect();
    let mut best = cost(&analytic);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..samples {
        // Alternate between arbitrary directions and small tilts of w_A.
        let dir: Vec<f64> = if s % 2 == 0 {
            wa.iter()
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else {
            let tilt = 10f64.powf(rng.random_range(-6.0..0.0));
            wa.iter()
                .map(|v| v + tilt * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let along = gain(&dir);
        if along == 0.0 {
            continue;
        }
        let slack = if rng.random_bool(0.5) {
            1.0
        } else {
            1.0 + rng.random_range(0.0..0.1)
        };
        let scale = margin / along * slack;
        let a: Vec<f64> = dir.iter().map(|v| v * scale).collect();
        if gain(&a) >= margin {
            best = best.min(cost(&a));
        }
    }
    Ok(best)
}

/// Uniform random features in `[-5, 5]` with unit effort parameters.
pub fn random_population(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PopulationState {
    let partition = FeaturePartition::from_actionable(d, (0..d).collect(), 0, f64::INFINITY)
        .expect("all-actionable partition is valid");
    let candidates = (0..n)
        .map(|i| Candidate {
            id: i as u64,
            features: (0..d).map(|_| rng.random_range(-5.0..5.0)).collect(),
            effort: EffortParams::default(),
        })
        .collect();
    PopulationState::new(candidates, partition, 0).expect("random population is valid")
}

/// Case counts for the oracle suites.
#[derive(Debug, Clone, Copy)]
pub struct VerifyScale {
    pub cvar_cases: usize,
    pub designer_cases: usize,
    pub effort_cases: usize,
    pub recourse_cases: usize,
    pub recourse_samples: usize,
}

impl VerifyScale {
    pub fn full() -> Self {
        VerifyScale {
            cvar_cases: 500,
            designer_cases: 200,
            effort_cases: 1000,
            recourse_cases: 100,
            recourse_samples: 1000,
        }
    }

    pub fn fast() -> Self {
        VerifyScale {
            cvar_cases: 50,
            designer_cases: 20,
            effort_cases: 100,
            recourse_cases: 10,
            recourse_samples: 200,
        }
    }
}

pub fn check_cvar_with<F>(cases: usize, seed: u64, upper_cvar: F) -> OracleReport
where
    F: Fn(&[f64], f64) -> Result<f64>,
{
    let mut report = OracleReport::new("cvar", 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.random_range(4..=40);
        let d = rng.random_range(2..=6);
        let k = rng.random_range(1..=n);
        let rho = k as f64 / n as f64;
        let state = random_population(&mut rng, n, d);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let scores: Vec<f64> = state
            .candidates()
            .iter()
            .map(|c| c.features.iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect();
        let mut key = scores.clone();
        key.push(rho);
        let expected = oracle_cvar(&scores, rho).expect("valid rho");
        match upper_cvar(&scores, rho) {
            Ok(got) => report.record(digest(&key), expected, got),
            Err(_) => report.record_violation(digest(&key)),
        }
    }
    report
}

pub fn check_designer_with<F>(cases: usize, seed: u64, solve: F) -> OracleReport
where
    F: Fn(&PopulationState, &SelectionConfig) -> Result<SelectionOutcome>,
{
    let mut report = OracleReport::new("designer", 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.random_range(2..=12);
        let d = rng.random_range(2..=6);
        let k = rng.random_range(1..=n);
        let rho = k as f64 / n as f64;
        let lambda = rng.random_range(0.1..2.0);
        let state = random_population(&mut rng, n, d);
        let mut key: Vec<f64> = state
            .candidates()
            .iter()
            .flat_map(|c| c.features.clone())
            .collect();
        key.extend([rho, lambda]);
        let key = digest(&key);
        let mut cfg = SelectionConfig::new(rho, lambda);
        cfg.seed = case as u64;
        let oracle = oracle_designer(&state, rho, lambda).expect("small instance");
        match solve(&state, &cfg) {
            Ok(out) => {
                let vertex = out.alpha.iter().filter(|a| **a == 1.0 / k as f64).count() == k
                    && out.alpha.iter().filter(|a| **a == 0.0).count() == n - k;
                if vertex {
                    report.record(key, oracle.objective, out.objective);
                } else {
                    report.record_violation(key);
                }
            }
            Err(_) => report.record_violation(key),
        }
    }
    report
}

/// Draws one effort case `(S, params, gap)`.
pub fn random_effort_case(rng: &mut ChaCha8Rng) -> (f64, EffortParams, f64) {
    let s = rng.random_range(-2.0..10.0);
    let k = rng.random_range(0.1..5.0);
    let theta = rng.random_range(0.01..5.0);
    let gap = rng.random_range(0.05..5.0);
    (
        s,
        EffortParams {
            beta: 1.0,
            k,
            theta,
        },
        gap,
    )
}

pub fn check_effort_with<F>(cases: usize, seed: u64, optimal_effort: F) -> OracleReport
where
    F: Fn(f64, &EffortParams, f64) -> Result<f64>,
{
    let resolution = 1e-6;
    let mut report = OracleReport::new("effort", 2.0 * resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let (s, params, gap) = random_effort_case(&mut rng);
        let key = digest(&[s, params.k, params.theta, gap]);
        let expected = oracle_effort(s, &params, gap, resolution);
        match optimal_effort(s, &params, gap) {
            Ok(got) => report.record(key, expected, got),
            Err(_) => report.record_violation(key),
        }
    }
    report
}

pub fn check_recourse_with<F>(cases: usize, samples: usize, seed: u64, cost_of: F) -> OracleReport
where
    F: Fn(&[f64], &[f64], f64, &FeaturePartition) -> Result<f64>,
{
    let mut report = OracleReport::new("recourse", 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while report.case_count < cases {
        let (x, w, eta, partition) = random_recourse_case(&mut rng);
        let Ok(expected) = oracle_recourse(&x, &w, eta, &partition, samples, rng.random()) else {
            continue;
        };
        let mut key = x.clone();
        key.extend(&w);
        key.push(eta);
        let key = digest(&key);
        match cost_of(&x, &w, eta, &partition) {
            Ok(got) => report.record(key, expected, got),
            Err(_) => report.record_violation(key),
        }
    }
    report
}

/// Random `(x, w, eta, partition)` with a positive margin and nonzero `w_A`.
pub fn random_recourse_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, f64, FeaturePartition) {
    loop {
        let d = rng.random_range(2..=6);
        let mut actionable: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.5)).collect();
        if actionable.is_empty() {
            actionable.push(rng.random_range(0..d));
        }
        let ceiling_index = actionable[0];
        let partition =
            FeaturePartition::from_actionable(d, actionable, ceiling_index, f64::INFINITY)
                .expect("valid partition");
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let score: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let eta = score + rng.random_range(0.01..10.0);
        let wa_sq: f64 = partition.actionable().iter().map(|&j| w[j] * w[j]).sum();
        if wa_sq > 1e-6 {
            return (x, w, eta, partition);
        }
    }
}

/// Runs every oracle suite at the given scale against the library solvers.
pub fn verify_all(scale: VerifyScale, seed: u64) -> Vec<OracleReport> {
    use crate::{effort, recourse, selection};
    vec![
        check_cvar_with(scale.cvar_cases, seed, selection::upper_cvar),
        check_designer_with(
            scale.designer_cases,
            seed.wrapping_add(1),
            selection::solve_designer,
        ),
        check_effort_with(scale.effort_cases, seed.wrapping_add(2), |s, p, gap| {
            effort::optimal_effort(s, p, gap).map(|r| r.gamma)
        }),
        check_recourse_with(
            scale.recourse_cases,
            scale.recourse_samples,
            seed.wrapping_add(3),
            |x, w, eta, p| recourse::minimal_recourse(x, w, eta, p).map(|plan| plan.cost),
        ),
    ]
}
