//! Minimal actionable recourse against a fixed linear selection rule.
//!
//! A rejected candidate at margin `m = eta - w.x > 0` needs an action `a`
//! supported on the actionable coordinates with `w_A.a >= m`. The least-norm
//! such action is `a* = m / |w_A|^2 * w_A` with cost `m^2 / (2 |w_A|^2)`.
//! When `w_A = 0` no admissible action changes the score at all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{FeaturePartition, PopulationState};
use crate::selection::SelectionOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoursePlan {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<u64>,
    pub margin: f64,
    pub action: Vec<f64>,
    /// `+inf` when infeasible; serialized as JSON `null`.
    pub cost: f64,
    pub feasible: bool,
    /// `|w_A|^2`.
    pub actionability: f64,
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `eta - w.x`; positive for rejected candidates.
pub fn competitive_margin(x: &[f64], w: &[f64], eta: f64) -> Result<f64> {
    check_dims(w.len(), x.len())?;
    let score: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(eta - score)
}

/// `sum_{j in J_A} w_j^2`.
pub fn actionability_strength(w: &[f64], partition: &FeaturePartition) -> f64 {
    partition
        .actionable()
        .iter()
        .filter_map(|&j| w.get(j))
        .map(|v| v * v)
        .sum()
}

pub fn minimal_recourse(
    x: &[f64],
    w: &[f64],
    eta: f64,
    partition: &FeaturePartition,
) -> Result<RecoursePlan> {
    check_dims(partition.dim(), x.len())?;
    let margin = competitive_margin(x, w, eta)?;
    let actionability = actionability_strength(w, partition);
    let mut action = vec![0.0; x.len()];
    if margin <= 0.0 {
        return Ok(RecoursePlan {
            candidate_id: None,
            margin,
            action,
            cost: 0.0,
            feasible: true,
            actionability,
        });
    }
    if actionability == 0.0 {
        return Ok(RecoursePlan {
            candidate_id: None,
            margin,
            action,
            cost: f64::INFINITY,
            feasible: false,
            actionability,
        });
    }
    let scale = margin / actionability;
    for &j in partition.actionable() {
        action[j] = scale * w[j];
    }
    Ok(RecoursePlan {
        candidate_id: None,
        margin,
        action,
        cost: margin * margin / (2.0 * actionability),
        feasible: true,
        actionability,
    })
}

/// Recourse plan for the candidate at `position` under a solved selection.
pub fn candidate_recourse(
    state: &PopulationState,
    outcome: &SelectionOutcome,
    position: usize,
) -> Result<RecoursePlan> {
    let c = &state.candidates()[position];
    let mut plan = minimal_recourse(&c.features, &outcome.w, outcome.eta, state.partition())?;
    plan.candidate_id = Some(c.id);
    Ok(plan)
}

/// Scales `action` down so the ceiling coordinate of `x + action` does not
/// exceed the ceiling. Direction is preserved.
pub fn clamp_to_ceiling(x: &[f64], action: &[f64], partition: &FeaturePartition) -> Vec<f64> {
    let c = partition.ceiling_index();
    let room = partition.ceiling_value() - x[c];
    if action[c] <= room {
        return action.to_vec();
    }
    let factor = (room / action[c]).max(0.0);
    let mut clamped: Vec<f64> = action.iter().map(|a| a * factor).collect();
    // Rounding in the product can overshoot by an ulp.
    while x[c] + clamped[c] > partition.ceiling_value() {
        clamped[c] = clamped[c].next_down();
    }
    clamped
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(dim: usize, actionable: Vec<usize>) -> FeaturePartition {
        let c = actionable[0];
        FeaturePartition::from_actionable(dim, actionable, c, 100.0).unwrap()
    }

    #[test]
    fn margin_examples() {
        assert_eq!(
            competitive_margin(&[1.0, 1.0], &[1.0, 1.0], 3.0).unwrap(),
            1.0
        );
        assert_eq!(
            competitive_margin(&[1.0, 2.0], &[1.0, 1.0], 3.0).unwrap(),
            0.0
        );
        assert!(competitive_margin(&[1.0], &[1.0, 1.0], 3.0).is_err());
    }

    #[test]
    fn actionability_examples() {
        assert_eq!(
            actionability_strength(&[3.0, 4.0], &part(2, vec![0, 1])),
            25.0
        );
        assert_eq!(actionability_strength(&[1.0, 2.0], &part(2, vec![1])), 4.0);
        // A partition always has its ceiling coordinate actionable, so the
        // zero case is weight living only on immutable coordinates.
        let p = FeaturePartition::new(2, vec![0], vec![1], 0, 1.0).unwrap();
        assert_eq!(actionability_strength(&[0.0, 4.0], &p), 0.0);
    }

    #[test]
    fn worked_plan() {
        // x = 0, w = (1, 2), eta = 1 gives margin 1.
        let plan = minimal_recourse(&[0.0, 0.0], &[1.0, 2.0], 1.0, &part(2, vec![1])).unwrap();
        assert_eq!(plan.action, vec![0.0, 0.5]);
        assert_eq!(plan.cost, 0.125);
        assert!(plan.feasible);
        assert_eq!(plan.actionability, 4.0);
    }

    #[test]
    fn selected_candidate_needs_nothing() {
        let plan = minimal_recourse(&[3.0, 3.0], &[1.0, 2.0], 1.0, &part(2, vec![1])).unwrap();
        assert_eq!(plan.action, vec![0.0, 0.0]);
        assert_eq!(plan.cost, 0.0);
        assert!(plan.feasible);
    }

    #[test]
    fn immutable_weights_make_recourse_infeasible() {
        let p = FeaturePartition::new(2, vec![1], vec![0], 1, 100.0).unwrap();
        let plan = minimal_recourse(&[0.0, 0.0], &[0.3, 0.0], 0.3, &p).unwrap();
        assert!(!plan.feasible);
        assert!(plan.cost.is_infinite());
        assert_eq!(plan.action, vec![0.0, 0.0]);
        let json = serde_json::to_string(&plan).unwrap();
        assert!(json.contains("\"cost\":null"), "{json}");
    }

    #[test]
    fn clamp_scales_whole_action() {
        let p = FeaturePartition::from_actionable(3, vec![1, 2], 1, 10.0).unwrap();
        let clamped = clamp_to_ceiling(&[0.0, 8.0, 1.0], &[0.0, 4.0, 2.0], &p);
        assert_eq!(clamped, vec![0.0, 2.0, 1.0]);
        let untouched = clamp_to_ceiling(&[0.0, 8.0, 1.0], &[0.0, 1.0, 2.0], &p);
        assert_eq!(untouched, vec![0.0, 1.0, 2.0]);
        let downward = clamp_to_ceiling(&[0.0, 8.0, 1.0], &[0.0, -5.0, 2.0], &p);
        assert_eq!(downward, vec![0.0, -5.0, 2.0]);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, Vec<bool>)> {
        (2usize..6).prop_flat_map(|d| {
            (
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(-3.0f64..3.0, d),
                -10.0f64..10.0,
                prop::collection::vec(any::<bool>(), d),
            )
        })
    }

    proptest! {
        #[test]
        fn plan_invariants((x, w, eta, mask) in instance()) {
            let d = x.len();
            let mut actionable: Vec<usize> = (0..d).filter(|j| mask[*j]).collect();
            if actionable.is_empty() {
                actionable.push(0);
            }
            let c = actionable[0];
            let p = FeaturePartition::from_actionable(d, actionable, c, f64::INFINITY).unwrap();
            let plan = minimal_recourse(&x, &w, eta, &p).unwrap();
            for &j in p.immutable() {
                prop_assert_eq!(plan.action[j], 0.0);
            }
            prop_assert_eq!(!plan.feasible, plan.margin > 0.0 && plan.actionability == 0.0);
            if plan.feasible {
                let half_sq: f64 = 0.5 * plan.action.iter().map(|a| a * a).sum::<f64>();
                prop_assert!((plan.cost - half_sq).abs() <= 1e-9 * plan.cost.max(1.0));
                if plan.margin > 0.0 {
                    let gain: f64 = w.iter().zip(&plan.action).map(|(a, b)| a * b).sum();
                    prop_assert!((gain - plan.margin).abs() <= 1e-9 * plan.margin.max(1.0));
                    // nonnegative multiple of w_A
                    for &j in p.actionable() {
                        prop_assert!(plan.action[j] * w[j] >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn doubling_margin_quadruples_cost(m in 0.001f64..100.0, w in prop::collection::vec(-3.0f64..3.0, 3)) {
            let p = FeaturePartition::from_actionable(3, vec![0, 1, 2], 0, f64::INFINITY).unwrap();
            prop_assume!(actionability_strength(&w, &p) > 0.0);
            let x = [0.0; 3];
            let one = minimal_recourse(&x, &w, m, &p).unwrap();
            let two = minimal_recourse(&x, &w, 2.0 * m, &p).unwrap();
            prop_assert_eq!(two.cost, 4.0 * one.cost);
        }
    }
}
