//! The closed-loop map: designer solve, actionable direction, candidate
//! responses, state update. Also equilibrium detection and stratification
//! metrics.
//!
//! Each step reads the pipeline `X -> I -> w -> d -> responses -> X'`. Selected
//! candidates never move; immutable coordinates never change; under the barrier
//! rule the ceiling coordinate only increases and stays strictly below the
//! ceiling.

use serde::{Deserialize, Serialize};

use crate::effort::{benefit_coefficient, optimal_effort};
use crate::error::Result;
use crate::population::{FeaturePartition, PopulationState};
use crate::recourse::{clamp_to_ceiling, minimal_recourse};
use crate::selection::{solve_designer, SelectionConfig, SelectionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Actionable direction counts as zero at or below this norm.
    pub eps_d: f64,
    /// Responses at or below this size count as no effort.
    pub eps_gamma: f64,
    /// Headroom at or below this counts as sitting on the ceiling.
    pub eps_gap: f64,
    /// Largest per-coordinate change allowed at a reported equilibrium.
    pub eps_x: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_d: 1e-9,
            eps_gamma: 1e-9,
            eps_gap: 1e-12,
            eps_x: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_d", self.eps_d),
            ("eps_gamma", self.eps_gamma),
            ("eps_gap", self.eps_gap),
            ("eps_x", self.eps_x),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(crate::error::Error::Config(format!(
                    "tolerance {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Optimal barrier-limited effort along the normalized direction.
    BarrierEffort,
    /// Least-norm threshold-crossing action, clamped at the ceiling.
    MinimalRecourse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    None,
    Structural,
    EffortSuppressed,
    MixedZero,
}

impl EquilibriumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EquilibriumKind::None => "none",
            EquilibriumKind::Structural => "structural",
            EquilibriumKind::EffortSuppressed => "effort_suppressed",
            EquilibriumKind::MixedZero => "mixed_zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumStatus {
    pub kind: EquilibriumKind,
    pub detail: String,
}

impl EquilibriumStatus {
    fn new(kind: EquilibriumKind, detail: &str) -> Self {
        EquilibriumStatus {
            kind,
            detail: detail.to_string(),
        }
    }

    pub fn is_equilibrium(&self) -> bool {
        self.kind != EquilibriumKind::None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionableDirection {
    /// `w` with immutable coordinates zeroed.
    pub d: Vec<f64>,
    /// `d` rescaled so its ceiling coordinate is exactly 1. Absent when that
    /// coordinate is not above `eps_d`.
    pub d_tilde: Option<Vec<f64>>,
}

impl ActionableDirection {
    pub fn norm(&self) -> f64 {
        norm(&self.d)
    }
}

pub fn actionable_direction(
    w: &[f64],
    partition: &FeaturePartition,
    eps_d: f64,
) -> ActionableDirection {
    let d = partition.project_actionable(w);
    let c = d[partition.ceiling_index()];
    let d_tilde = (c > eps_d).then(|| {
        let mut t: Vec<f64> = d.iter().map(|v| v / c).collect();
        t[partition.ceiling_index()] = 1.0;
        t
    });
    ActionableDirection { d, d_tilde }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub gap_d: f64,
    pub immutable_gap: f64,
    pub centroid_selected: Vec<f64>,
    pub centroid_rejected: Vec<f64>,
    /// False when either group is empty; the gaps are then reported as 0.
    pub defined: bool,
}

fn centroid(state: &PopulationState, group: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; state.dim()];
    if group.is_empty() {
        return c;
    }
    for &i in group {
        for (acc, x) in c.iter_mut().zip(state.features(i)) {
            *acc += x;
        }
    }
    let m = group.len() as f64;
    c.iter_mut().for_each(|v| *v /= m);
    c
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Intergroup centroid distance and its immutable component.
pub fn stratification_metrics(
    state: &PopulationState,
    outcome: &SelectionOutcome,
) -> Stratification {
    let centroid_selected = centroid(state, &outcome.selected);
    let centroid_rejected = centroid(state, &outcome.rejected);
    let defined = !outcome.selected.is_empty() && !outcome.rejected.is_empty();
    let (gap_d, immutable_gap) = if defined {
        let diff: Vec<f64> = centroid_selected
            .iter()
            .zip(&centroid_rejected)
            .map(|(a, b)| a - b)
            .collect();
        (
            norm(&diff),
            norm(&state.partition().project_immutable(&diff)),
        )
    } else {
        (0.0, 0.0)
    };
    Stratification {
        gap_d,
        immutable_gap,
        centroid_selected,
        centroid_rejected,
        defined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub eta: f64,
    pub w: Vec<f64>,
    pub d_norm: f64,
    pub selected: Vec<usize>,
    pub rejected: Vec<usize>,
    pub mean_ceiling_feature: f64,
    pub var_ceiling_feature: f64,
    pub gap_d: f64,
    pub immutable_gap: f64,
    /// Sum of responses (gamma under the barrier rule, action norm otherwise).
    pub total_effort: f64,
    pub max_effort: f64,
    pub equilibrium: EquilibriumStatus,
    pub degenerate_w: bool,
    /// `|xbar_I^t - xbar_I^{t-1}|`, absent on the first record of a run.
    pub selected_centroid_shift: Option<f64>,
    /// `|xbar_R^t - xbar_R^{t-1}|`, absent on the first record of a run.
    pub rejected_centroid_shift: Option<f64>,
}

/// Everything one application of the map computes about a state.
struct Analysis {
    outcome: SelectionOutcome,
    direction: ActionableDirection,
    /// Displacement per candidate position; `None` for candidates that stay.
    moves: Vec<Option<Vec<f64>>>,
    efforts: Vec<f64>,
    strat: Stratification,
    status: EquilibriumStatus,
}

struct Response {
    displacement: Option<Vec<f64>>,
    effort: f64,
    /// Largest absolute coordinate change.
    size: f64,
    at_ceiling: bool,
}

fn barrier_response(
    state: &PopulationState,
    i: usize,
    w: &[f64],
    d_tilde: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<Response> {
    let partition = state.partition();
    let cand = &state.candidates()[i];
    let c = partition.ceiling_index();
    let ceiling = partition.ceiling_value();
    let g = cand.features[c];
    let gap = ceiling - g;
    let at_ceiling = gap <= tol.eps_gap;
    let still = Response {
        displacement: None,
        effort: 0.0,
        size: 0.0,
        at_ceiling,
    };
    let Some(d_tilde) = d_tilde else {
        return Ok(still);
    };
    if at_ceiling {
        return Ok(still);
    }
    let s = benefit_coefficient(&cand.effort, w, d_tilde);
    let mut gamma = optimal_effort(s, &cand.effort, gap)?.gamma;
    if gamma <= 0.0 {
        return Ok(still);
    }
    if g + gamma >= ceiling {
        // gamma < gap exactly, but g + gamma can still round onto the ceiling.
        gamma = (ceiling.next_down() - g).max(0.0);
        while gamma > 0.0 && g + gamma >= ceiling {
            gamma = gamma.next_down();
        }
    }
    let displacement: Vec<f64> = d_tilde.iter().map(|v| gamma * v).collect();
    let size = displacement.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Response {
        displacement: Some(displacement),
        effort: gamma,
        size,
        at_ceiling,
    })
}

fn recourse_response(
    state: &PopulationState,
    i: usize,
    outcome: &SelectionOutcome,
    direction: &ActionableDirection,
    tol: &Tolerances,
) -> Result<Response> {
    let partition = state.partition();
    let x = state.features(i);
    let at_ceiling = partition.ceiling_value() - x[partition.ceiling_index()] <= tol.eps_gap;
    let still = Response {
        displacement: None,
        effort: 0.0,
        size: 0.0,
        at_ceiling,
    };
    if direction.norm() <= tol.eps_d {
        return Ok(still);
    }
    let plan = minimal_recourse(x, &outcome.w, outcome.eta, partition)?;
    if !plan.feasible || plan.margin <= 0.0 {
        return Ok(still);
    }
    let action = clamp_to_ceiling(x, &plan.action, partition);
    let size = action.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Response {
        effort: norm(&action),
        displacement: Some(action),
        size,
        at_ceiling,
    })
}

fn classify(
    direction: &ActionableDirection,
    rejected: usize,
    responses: &[Response],
    rule: UpdateRule,
    tol: &Tolerances,
) -> EquilibriumStatus {
    use EquilibriumKind::*;
    if direction.norm() <= tol.eps_d {
        return EquilibriumStatus::new(Structural, "actionable direction vanishes");
    }
    if rejected == 0 {
        return EquilibriumStatus::new(EffortSuppressed, "no rejected candidates");
    }
    if rule == UpdateRule::BarrierEffort && direction.d_tilde.is_none() {
        return EquilibriumStatus::new(MixedZero, "direction orthogonal to ceiling coordinate");
    }
    if responses.iter().any(|r| r.size > tol.eps_gamma) {
        return EquilibriumStatus::new(None, "rejected candidates still improving");
    }
    let at_ceiling = responses.iter().filter(|r| r.at_ceiling).count();
    if at_ceiling == responses.len() {
        EquilibriumStatus::new(MixedZero, "all rejected candidates at the ceiling")
    } else if at_ceiling > 0 {
        EquilibriumStatus::new(
            MixedZero,
            "rejected candidates at the ceiling or exerting zero effort",
        )
    } else {
        EquilibriumStatus::new(
            EffortSuppressed,
            "all rejected candidates exert zero effort",
        )
    }
}

fn analyze(
    state: &PopulationState,
    cfg: &SelectionConfig,
    rule: UpdateRule,
    tol: &Tolerances,
) -> Result<Analysis> {
    let outcome = solve_designer(state, cfg)?;
    let direction = actionable_direction(&outcome.w, state.partition(), tol.eps_d);
    let mut responses = Vec::with_capacity(outcome.rejected.len());
    for &i in &outcome.rejected {
        let r = match rule {
            UpdateRule::BarrierEffort => {
                barrier_response(state, i, &outcome.w, direction.d_tilde.as_deref(), tol)?
            }
            UpdateRule::MinimalRecourse => recourse_response(state, i, &outcome, &direction, tol)?,
        };
        responses.push(r);
    }
    let status = classify(&direction, outcome.rejected.len(), &responses, rule, tol);

    let n = state.len();
    let mut moves = vec![None; n];
    let mut efforts = vec![0.0; n];
    for (&i, r) in outcome.rejected.iter().zip(responses) {
        efforts[i] = r.effort;
        moves[i] = r.displacement;
    }
    let strat = stratification_metrics(state, &outcome);
    Ok(Analysis {
        outcome,
        direction,
        moves,
        efforts,
        strat,
        status,
    })
}

/// Classifies `state` as a recourse equilibrium (or not) under `rule`.
pub fn detect_equilibrium(
    state: &PopulationState,
    cfg: &SelectionConfig,
    rule: UpdateRule,
    tol: &Tolerances,
) -> Result<EquilibriumStatus> {
    Ok(analyze(state, cfg, rule, tol)?.status)
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn apply(state: &PopulationState, moves: &[Option<Vec<f64>>]) -> PopulationState {
    let partition = state.partition();
    let rows = state
        .candidates()
        .iter()
        .zip(moves)
        .map(|(c, m)| match m {
            None => c.features.clone(),
            Some(delta) => {
                let mut x = c.features.clone();
                // Only actionable coordinates are touched, so immutable values
                // are carried over bit-for-bit.
                for &j in partition.actionable() {
                    x[j] += delta[j];
                }
                x
            }
        })
        .collect();
    state.advance(rows)
}

fn record_for(state: &PopulationState, a: &Analysis) -> StepRecord {
    let (mean, var) = mean_and_variance(&state.ceiling_features());
    let rejected_efforts = a.outcome.rejected.iter().map(|&i| a.efforts[i]);
    StepRecord {
        t: state.time(),
        eta: a.outcome.eta,
        w: a.outcome.w.clone(),
        d_norm: a.direction.norm(),
        selected: a.outcome.selected.clone(),
        rejected: a.outcome.rejected.clone(),
        mean_ceiling_feature: mean,
        var_ceiling_feature: var,
        gap_d: a.strat.gap_d,
        immutable_gap: a.strat.immutable_gap,
        total_effort: rejected_efforts.clone().sum(),
        max_effort: rejected_efforts.fold(0.0, f64::max),
        equilibrium: a.status.clone(),
        degenerate_w: a.outcome.degenerate,
        selected_centroid_shift: None,
        rejected_centroid_shift: None,
    }
}

/// One application of the closed-loop map. The record describes the input state.
pub fn step(
    state: &PopulationState,
    cfg: &SelectionConfig,
    rule: UpdateRule,
    tol: &Tolerances,
) -> Result<(PopulationState, StepRecord)> {
    let analysis = analyze(state, cfg, rule, tol)?;
    let next = apply(state, &analysis.moves);
    Ok((next, record_for(state, &analysis)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_state: PopulationState,
    pub terminated_by: Termination,
}

/// Iterates the map for up to `horizon` steps, stopping at the first state
/// detected as an equilibrium (which is then the final state).
pub fn run(
    state: &PopulationState,
    cfg: &SelectionConfig,
    rule: UpdateRule,
    horizon: usize,
    tol: &Tolerances,
) -> Result<Trajectory> {
    run_with(state, cfg, rule, horizon, tol, |_, _| Ok(()))
}

/// Like [`run`], calling `observe` with each pre-update state and its record.
pub fn run_with<F>(
    state: &PopulationState,
    cfg: &SelectionConfig,
    rule: UpdateRule,
    horizon: usize,
    tol: &Tolerances,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(&PopulationState, &StepRecord) -> Result<()>,
{
    if horizon == 0 {
        return Err(crate::error::Error::Config(
            "horizon must be at least 1".into(),
        ));
    }
    let mut current = state.clone();
    let mut records = Vec::with_capacity(horizon);
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..horizon {
        let analysis = analyze(&current, cfg, rule, tol)?;
        let mut record = record_for(&current, &analysis);
        let centroids = (
            analysis.strat.centroid_selected.clone(),
            analysis.strat.centroid_rejected.clone(),
        );
        if let Some((prev_i, prev_r)) = &previous {
            record.selected_centroid_shift = Some(distance(&centroids.0, prev_i));
            record.rejected_centroid_shift = Some(distance(&centroids.1, prev_r));
        }
        previous = Some(centroids);
        observe(&current, &record)?;
        let done = record.equilibrium.is_equilibrium();
        records.push(record);
        if done {
            return Ok(Trajectory {
                records,
                final_state: current,
                terminated_by: Termination::Equilibrium,
            });
        }
        current = apply(&current, &analysis.moves);
    }
    Ok(Trajectory {
        records,
        final_state: current,
        terminated_by: Termination::Horizon,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
