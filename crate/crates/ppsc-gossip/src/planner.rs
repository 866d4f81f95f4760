//! Closed-form run-parameter selection.
//!
//! Every knob of the pipeline — gossip steps, noise scale, averaging rounds,
//! recursion count — has a sufficient analytic bound in terms of the privacy
//! budget, the target accuracy and a handful of spectral quantities of the
//! two graphs. This module evaluates those bounds and packages the result as
//! a [`Plan`]. The bounds are deliberately *not* optimized jointly: each is
//! the published sufficient condition, ceiled to an integer where needed, so
//! a plan is always safe but rarely minimal.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::audit::per_recursion_delta;
use crate::graph::{PrivateGraph, PublicGraph};
use crate::ppsc::{mixing_floor, MixingMode, PpscError};
use crate::rng::{noise_multiplier, RandomnessError, Seed};

/// Default error-split parameter of the equation-solver plan, chosen inside
/// its open interval (0, 1); any value works, this one balances recursion
/// count against averaging rounds.
pub const DEFAULT_ERROR_SPLIT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("budget field {field} = {value} is out of range")]
    InvalidBudget { field: &'static str, value: f64 },
    #[error("confidence must lie strictly between 0 and 1, got {0}")]
    BadConfidence(f64),
    #[error("error-split parameter must lie strictly between 0 and 1, got {0}")]
    BadErrorSplit(f64),
    #[error("mixing floor must be positive")]
    ZeroMixingFloor,
    #[error("coefficient rows do not span the full space (or a row is zero)")]
    RankDeficient,
    #[error("per-recursion delta underflowed to zero for {recursions} recursions")]
    PerRecursionDeltaVanished { recursions: u32 },
    #[error("optimizer plans need a success probability in the budget")]
    MissingSuccessProbability,
    #[error("recursion count must be at least one")]
    ZeroRecursions,
    #[error("the stepsize schedule must be diminishing for optimizer plans")]
    NonDiminishingSchedule,
    #[error("public graph has {public} nodes, private graph {private}")]
    NodeMismatch { public: usize, private: usize },
    #[error(transparent)]
    Mechanism(#[from] PpscError),
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
}

/// Privacy and accuracy targets for one planned run.
///
/// `adjacency_radius` is the radius of the adjacency relation the privacy
/// guarantee is stated against (how far apart two inputs may be while still
/// being protected); `privacy_confidence` is the probability with which the
/// covering event — and hence the differential-privacy guarantee — must
/// hold; `accuracy` is the target mean-square error of the computed result.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    adjacency_radius: f64,
    epsilon: f64,
    delta: f64,
    privacy_confidence: f64,
    accuracy: f64,
    success_probability: Option<f64>,
}

impl Budget {
    pub fn new(
        adjacency_radius: f64,
        epsilon: f64,
        delta: f64,
        privacy_confidence: f64,
        accuracy: f64,
    ) -> Result<Self, PlannerError> {
        let check = |ok: bool, field: &'static str, value: f64| {
            if ok {
                Ok(())
            } else {
                Err(PlannerError::InvalidBudget { field, value })
            }
        };
        check(
            adjacency_radius > 0.0 && adjacency_radius.is_finite(),
            "adjacency_radius",
            adjacency_radius,
        )?;
        check(epsilon > 0.0 && epsilon.is_finite(), "epsilon", epsilon)?;
        check(delta > 0.0 && delta < 0.5, "delta", delta)?;
        check(
            privacy_confidence > 0.0 && privacy_confidence < 1.0,
            "privacy_confidence",
            privacy_confidence,
        )?;
        check(accuracy > 0.0 && accuracy.is_finite(), "accuracy", accuracy)?;
        Ok(Budget {
            adjacency_radius,
            epsilon,
            delta,
            privacy_confidence,
            accuracy,
            success_probability: None,
        })
    }

    /// Attach the success probability an optimizer plan must meet.
    pub fn with_success_probability(mut self, p: f64) -> Result<Self, PlannerError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(PlannerError::InvalidBudget { field: "success_probability", value: p });
        }
        self.success_probability = Some(p);
        Ok(self)
    }

    pub fn adjacency_radius(&self) -> f64 {
        self.adjacency_radius
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn privacy_confidence(&self) -> f64 {
        self.privacy_confidence
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn success_probability(&self) -> Option<f64> {
        self.success_probability
    }
}

/// Where a plan gets its mixing floor from.
#[derive(Debug, Clone)]
pub enum MixingSource {
    /// Evaluate it on the private graph for the planned step count.
    Evaluate { mode: MixingMode, seed: Seed },
    /// Use a precomputed value (e.g. carried over from a previous plan);
    /// `exact` records whether it came from full enumeration.
    Fixed { value: f64, exact: bool },
}

impl MixingSource {
    /// Automatic evaluation: exact when feasible, sampled otherwise.
    pub fn auto(seed: Seed) -> Self {
        MixingSource::Evaluate { mode: MixingMode::Auto, seed }
    }

    fn resolve(&self, gp: &PrivateGraph, steps: u32) -> Result<(f64, bool), PlannerError> {
        match self {
            MixingSource::Evaluate { mode, seed } => {
                let mut rng = seed.stream(0, "mixing-floor");
                let floor = mixing_floor(gp, steps, *mode, &mut rng)?;
                if floor.value <= 0.0 {
                    return Err(PlannerError::ZeroMixingFloor);
                }
                Ok((floor.value, floor.exact))
            }
            MixingSource::Fixed { value, exact } => {
                if *value <= 0.0 || !value.is_finite() {
                    return Err(PlannerError::ZeroMixingFloor);
                }
                Ok((*value, *exact))
            }
        }
    }
}

/// Per-recursion stepsize rule of the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeSchedule {
    /// `1/(l+1)` — the default diminishing rule.
    Harmonic,
    /// `factor/(l+1)`.
    Scaled { factor: f64 },
    /// A fixed stepsize; not diminishing, so outside the convergence theory,
    /// but useful for degenerate checks (value 1 turns the relaxed
    /// projection into a full projection).
    Constant { value: f64 },
}

impl StepsizeSchedule {
    pub fn value(&self, recursion: u32) -> f64 {
        match self {
            StepsizeSchedule::Harmonic => 1.0 / (recursion as f64 + 1.0),
            StepsizeSchedule::Scaled { factor } => factor / (recursion as f64 + 1.0),
            StepsizeSchedule::Constant { value } => *value,
        }
    }

    /// Whether the rule vanishes, is square-summable and has divergent sum —
    /// the three conditions the convergence results need.
    pub fn is_diminishing(&self) -> bool {
        match self {
            StepsizeSchedule::Harmonic => true,
            StepsizeSchedule::Scaled { factor } => *factor > 0.0,
            StepsizeSchedule::Constant { .. } => false,
        }
    }
}

/// Intermediate quantities a plan was derived from, kept for reporting and
/// for auditing the run afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanDetail {
    /// Privacy budget charged to each recursion (`epsilon / recursions`).
    pub per_recursion_epsilon: f64,
    /// Per-recursion delta; equals the budget's delta when there is a single
    /// recursion, otherwise the composition split.
    pub per_recursion_delta: f64,
    /// Tail-bound multiplier at the per-recursion budget.
    pub noise_multiplier: f64,
    /// Mixing floor of the private graph at the planned step count.
    pub mixing_floor: f64,
    /// Whether the mixing floor came from full enumeration.
    pub mixing_exact: bool,
    /// Second-smallest eigenvalue of the weighted public Laplacian.
    pub algebraic_connectivity: f64,
    /// Per-recursion contraction factor of the projection solver, if any.
    pub projection_contraction: Option<f64>,
    /// Worst-case trajectory radius used in the noise and rounds bounds.
    pub trajectory_radius: Option<f64>,
    /// Per-agent gradient-norm bound, if the task has gradients.
    pub gradient_bound: Option<f64>,
    /// Error-split parameter of the equation-solver bounds.
    pub error_split: Option<f64>,
    /// The covering confidence the step count was sized for.
    pub covering_confidence: f64,
    /// The target accuracy the rounds were sized for.
    pub accuracy: f64,
}

/// Integer run parameters plus noise scale, with their derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub gossip_steps: u32,
    pub averaging_rounds: u32,
    pub recursions: u32,
    pub noise_std: f64,
    pub detail: PlanDetail,
}

impl Plan {
    /// Aligned human-readable rendering, one quantity per line.
    pub fn describe(&self) -> String {
        let mut lines = vec![
            format!("{:<28}{}", "gossip steps", self.gossip_steps),
            format!("{:<28}{}", "averaging rounds", self.averaging_rounds),
            format!("{:<28}{}", "recursions", self.recursions),
            format!("{:<28}{}", "noise std", self.noise_std),
            format!("{:<28}{}", "per-recursion epsilon", self.detail.per_recursion_epsilon),
            format!("{:<28}{}", "per-recursion delta", self.detail.per_recursion_delta),
            format!("{:<28}{}", "noise multiplier", self.detail.noise_multiplier),
            format!(
                "{:<28}{}{}",
                "mixing floor",
                self.detail.mixing_floor,
                if self.detail.mixing_exact { " (exact)" } else { " (sampled estimate)" }
            ),
            format!("{:<28}{}", "algebraic connectivity", self.detail.algebraic_connectivity),
            format!("{:<28}{}", "covering confidence", self.detail.covering_confidence),
            format!("{:<28}{}", "target accuracy", self.detail.accuracy),
        ];
        if let Some(v) = self.detail.projection_contraction {
            lines.push(format!("{:<28}{}", "projection contraction", v));
        }
        if let Some(v) = self.detail.trajectory_radius {
            lines.push(format!("{:<28}{}", "trajectory radius", v));
        }
        if let Some(v) = self.detail.gradient_bound {
            lines.push(format!("{:<28}{}", "gradient bound", v));
        }
        if let Some(v) = self.detail.error_split {
            lines.push(format!("{:<28}{}", "error split", v));
        }
        lines.join("\n")
    }
}

fn check_nodes(g: &PublicGraph, gp: &PrivateGraph) -> Result<(), PlannerError> {
    if g.len() != gp.len() {
        return Err(PlannerError::NodeMismatch { public: g.len(), private: gp.len() });
    }
    Ok(())
}

/// Gossip steps needed for the covering event to hold with the given
/// confidence, with the confidence exponent additionally divided by
/// `recursion_scale` (1 for a single-shot run).
fn covering_steps_scaled(
    gp: &PrivateGraph,
    confidence: f64,
    recursion_scale: f64,
) -> Result<u32, PlannerError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(PlannerError::BadConfidence(confidence));
    }
    let q = gp.component_count() as f64;
    let n_max = gp.max_component_size() as f64;
    let shrink = 1.0 - (1.0 + gp.degree_balance()) / n_max;
    if shrink <= 0.0 {
        // Every component covers itself in a single step (2-node components
        // with balanced degrees); the bound is vacuous.
        return Ok(1);
    }
    // 1 − confidence^(1/(scale·q)), evaluated in log space so confidences
    // very close to 1 don't cancel.
    let residual = -f64::exp_m1(confidence.ln() / (recursion_scale * q));
    let steps = (residual.ln() - n_max.ln()) / shrink.ln();
    Ok(steps.ceil().max(1.0) as u32)
}

/// Gossip steps needed to cover every node with the given confidence.
pub fn covering_steps(gp: &PrivateGraph, confidence: f64) -> Result<u32, PlannerError> {
    covering_steps_scaled(gp, confidence, 1.0)
}

/// Noise scale that buys the budget's `(epsilon, delta)` at a given mixing
/// floor: `adjacency_radius · multiplier / floor`.
pub fn averaging_noise_std(budget: &Budget, mixing_floor: f64) -> Result<f64, PlannerError> {
    if mixing_floor <= 0.0 || !mixing_floor.is_finite() {
        return Err(PlannerError::ZeroMixingFloor);
    }
    let kappa = noise_multiplier(budget.epsilon(), budget.delta())?;
    Ok(budget.adjacency_radius() * kappa / mixing_floor)
}

/// `ceil(ln(ratio) / (2 ln(1 − connectivity)))`, clamped to at least one
/// round. `ratio` is target-over-current squared error; values ≥ 1 mean the
/// bound is already met.
fn rounds_from_contraction(ratio: f64, connectivity: f64) -> u32 {
    if ratio >= 1.0 {
        return 1;
    }
    let base = (1.0 - connectivity).ln();
    if !base.is_finite() {
        // connectivity = 1: one round averages exactly.
        return 1;
    }
    let rounds = ratio.ln() / (2.0 * base);
    rounds.ceil().max(1.0) as u32
}

/// Averaging rounds that bring the post-gossip mean-square error below
/// `accuracy`, given the squared norm of the raw data.
pub fn averaging_rounds(
    accuracy: f64,
    data_norm_sq: f64,
    g: &PublicGraph,
    gp: &PrivateGraph,
    gossip_steps: u32,
    noise_std: f64,
) -> Result<u32, PlannerError> {
    if !(accuracy > 0.0) {
        return Err(PlannerError::InvalidBudget { field: "accuracy", value: accuracy });
    }
    check_nodes(g, gp)?;
    let n = g.len() as f64;
    let q = gp.component_count() as f64;
    let s = gossip_steps as f64;
    let power = n * data_norm_sq + 2.0 * q * q * s * s * noise_std * noise_std;
    Ok(rounds_from_contraction(accuracy / power, g.algebraic_connectivity()))
}

/// Contraction factor of the mean-projection recursion: the largest singular
/// value of `I − (1/n)Σ hᵢhᵢᵀ/‖hᵢ‖²` over the stacked coefficient rows.
/// Lies in `[0, 1)` exactly when the rows span the full space.
pub fn projection_contraction(rows: &DMatrix<f64>) -> Result<f64, PlannerError> {
    let (n, m) = rows.shape();
    if n == 0 || m == 0 {
        return Err(PlannerError::RankDeficient);
    }
    let sv = rows.clone().svd(false, false).singular_values;
    let max_sv = sv.iter().copied().fold(0.0f64, f64::max);
    let rank_tol = max_sv * (n.max(m) as f64) * 1e-12;
    if n < m || sv.iter().filter(|&&s| s > rank_tol).count() < m {
        return Err(PlannerError::RankDeficient);
    }
    let mut mean_projector = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        let row = rows.row(i).transpose();
        let norm_sq = row.norm_squared();
        if norm_sq == 0.0 {
            return Err(PlannerError::RankDeficient);
        }
        mean_projector += &row * row.transpose() / norm_sq;
    }
    mean_projector /= n as f64;
    // Symmetric with spectrum in [0, 1]; the contraction factor is one minus
    // its smallest eigenvalue.
    let eigen = mean_projector.symmetric_eigen();
    let min_ev = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((1.0 - min_ev).clamp(0.0, 1.0))
}

/// Spectral and norm data of an equation system that the plan bounds
/// consume. Produce one via `EquationSystem::geometry`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationGeometry {
    pub nodes: usize,
    /// Contraction factor of the projection recursion, in `[0, 1)`.
    pub projection_contraction: f64,
    /// Norm of the exact solution.
    pub solution_norm: f64,
    /// Norm of the common starting point.
    pub start_norm: f64,
    /// Distance from the starting point to the solution.
    pub start_distance: f64,
}

/// Norm data of an optimization problem that the plan bounds consume.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerGeometry {
    pub nodes: usize,
    /// Largest norm attained on the feasible set.
    pub feasible_radius: f64,
    /// Bound on every agent's gradient norm over the slightly enlarged ball
    /// the iterates can reach; see `optim::gradient_bound`.
    pub gradient_bound: f64,
}

/// Plan a private averaging run: steps from the covering bound, noise from
/// the privacy budget, rounds from the mean-square error bound.
pub fn plan_average(
    budget: &Budget,
    data_norm_sq: f64,
    g: &PublicGraph,
    gp: &PrivateGraph,
    mixing: &MixingSource,
) -> Result<Plan, PlannerError> {
    check_nodes(g, gp)?;
    let steps = covering_steps(gp, budget.privacy_confidence())?;
    let (floor, exact) = mixing.resolve(gp, steps)?;
    let kappa = noise_multiplier(budget.epsilon(), budget.delta())?;
    let noise_std = budget.adjacency_radius() * kappa / floor;
    let rounds = averaging_rounds(budget.accuracy(), data_norm_sq, g, gp, steps, noise_std)?;
    Ok(Plan {
        gossip_steps: steps,
        averaging_rounds: rounds,
        recursions: 1,
        noise_std,
        detail: PlanDetail {
            per_recursion_epsilon: budget.epsilon(),
            per_recursion_delta: budget.delta(),
            noise_multiplier: kappa,
            mixing_floor: floor,
            mixing_exact: exact,
            algebraic_connectivity: g.algebraic_connectivity(),
            projection_contraction: None,
            trajectory_radius: None,
            gradient_bound: None,
            error_split: None,
            covering_confidence: budget.privacy_confidence(),
            accuracy: budget.accuracy(),
        },
    })
}

/// Plan an equation-solver run. The recursion count comes from the
/// error-split contraction, the remaining parameters from the covering,
/// noise and rounds bounds at the per-recursion privacy budget.
pub fn plan_equation_solver(
    budget: &Budget,
    geometry: &EquationGeometry,
    error_split: f64,
    g: &PublicGraph,
    gp: &PrivateGraph,
    mixing: &MixingSource,
) -> Result<Plan, PlannerError> {
    check_nodes(g, gp)?;
    if geometry.nodes != g.len() {
        return Err(PlannerError::NodeMismatch { public: g.len(), private: geometry.nodes });
    }
    if !(error_split > 0.0 && error_split < 1.0) {
        return Err(PlannerError::BadErrorSplit(error_split));
    }
    let contraction = geometry.projection_contraction;
    if !(0.0..1.0).contains(&contraction) {
        return Err(PlannerError::RankDeficient);
    }
    let n = geometry.nodes as f64;
    let nu = budget.accuracy();

    // Recursions: drive the initial squared distance below the target
    // through the per-recursion contraction (error_split + c²)/(1 + error_split).
    let per_recursion = (error_split + contraction * contraction).ln()
        - (1.0 + error_split).ln();
    let recursions = if geometry.start_distance == 0.0 {
        1
    } else {
        let numerator = nu.ln() - (2.0 * n * geometry.start_distance.powi(2)).ln();
        if numerator >= 0.0 {
            1
        } else {
            (numerator / per_recursion).ceil().max(1.0) as u32
        }
    };

    let split_delta = per_recursion_delta(budget.epsilon(), budget.delta(), recursions);
    if split_delta <= 0.0 {
        return Err(PlannerError::PerRecursionDeltaVanished { recursions });
    }
    let split_epsilon = budget.epsilon() / recursions as f64;

    // Covering must hold in every recursion and for both exposure
    // directions, hence the 2L scale on the confidence exponent.
    let steps = covering_steps_scaled(
        gp,
        budget.privacy_confidence(),
        2.0 * recursions as f64,
    )?;
    let (floor, exact) = mixing.resolve(gp, steps)?;
    let kappa = noise_multiplier(split_epsilon, split_delta)?;

    let radius = 2.0 * n.sqrt() * geometry.solution_norm
        + n.sqrt() * geometry.start_norm
        + (2.0 - contraction) / (1.0 - contraction) * nu.sqrt();
    let noise_std =
        budget.adjacency_radius() * kappa * (nu.sqrt() + radius + n.sqrt()) / floor;

    // Averaging rounds: the binding one of three error-decay requirements.
    let q = gp.component_count() as f64;
    let s = steps as f64;
    let noise_power = 2.0 * q * q * s * s * noise_std * noise_std;
    let base = (1.0 - g.algebraic_connectivity()).ln();
    let residual = -f64::exp_m1(budget.privacy_confidence().ln() / (2.0 * recursions as f64));
    let targets = [
        0.5 * (residual * nu / (radius * radius + noise_power)).ln(),
        ((1.0 - contraction * contraction) / (5.0 * n * (1.0 + 1.0 / error_split))).ln(),
        (nu * (1.0 - contraction * contraction)
            / (16.0 * (n * geometry.solution_norm.powi(2) + s * s * q * q * noise_std * noise_std)))
            .ln(),
    ];
    let rounds = if base.is_finite() {
        targets
            .iter()
            .map(|t| (t / base).ceil().max(1.0) as u32)
            .max()
            .unwrap()
    } else {
        1
    };

    Ok(Plan {
        gossip_steps: steps,
        averaging_rounds: rounds,
        recursions,
        noise_std,
        detail: PlanDetail {
            per_recursion_epsilon: split_epsilon,
            per_recursion_delta: split_delta,
            noise_multiplier: kappa,
            mixing_floor: floor,
            mixing_exact: exact,
            algebraic_connectivity: g.algebraic_connectivity(),
            projection_contraction: Some(contraction),
            trajectory_radius: Some(radius),
            gradient_bound: None,
            error_split: Some(error_split),
            covering_confidence: budget.privacy_confidence(),
            accuracy: nu,
        },
    })
}

/// Plan an optimizer run for a caller-chosen recursion count. There is no
/// closed form for the recursion count itself (the convergence result is
/// existential); callers typically double it until the accuracy test passes.
pub fn plan_optimizer(
    budget: &Budget,
    geometry: &OptimizerGeometry,
    recursions: u32,
    schedule: &StepsizeSchedule,
    g: &PublicGraph,
    gp: &PrivateGraph,
    mixing: &MixingSource,
) -> Result<Plan, PlannerError> {
    check_nodes(g, gp)?;
    if geometry.nodes != g.len() {
        return Err(PlannerError::NodeMismatch { public: g.len(), private: geometry.nodes });
    }
    if recursions == 0 {
        return Err(PlannerError::ZeroRecursions);
    }
    if !schedule.is_diminishing() {
        return Err(PlannerError::NonDiminishingSchedule);
    }
    let p = budget
        .success_probability()
        .ok_or(PlannerError::MissingSuccessProbability)?;

    let split_delta = per_recursion_delta(budget.epsilon(), budget.delta(), recursions);
    if split_delta <= 0.0 {
        return Err(PlannerError::PerRecursionDeltaVanished { recursions });
    }
    let split_epsilon = budget.epsilon() / recursions as f64;

    let steps = covering_steps_scaled(gp, budget.privacy_confidence(), recursions as f64)?;
    let (floor, exact) = mixing.resolve(gp, steps)?;
    let kappa = noise_multiplier(split_epsilon, split_delta)?;

    let n = geometry.nodes as f64;
    let noise_std = n * budget.adjacency_radius() * geometry.gradient_bound * kappa / floor;

    let q = gp.component_count() as f64;
    let s = steps as f64;
    let final_stepsize = schedule.value(recursions);
    let admissible = -f64::exp_m1(p.ln() / recursions as f64);
    let ratio = admissible * budget.accuracy() * final_stepsize.powi(4)
        / (n * geometry.feasible_radius.powi(2)
            + 2.0 * q * q * s * s * noise_std * noise_std);
    let rounds = rounds_from_contraction(ratio, g.algebraic_connectivity());

    Ok(Plan {
        gossip_steps: steps,
        averaging_rounds: rounds,
        recursions,
        noise_std,
        detail: PlanDetail {
            per_recursion_epsilon: split_epsilon,
            per_recursion_delta: split_delta,
            noise_multiplier: kappa,
            mixing_floor: floor,
            mixing_exact: exact,
            algebraic_connectivity: g.algebraic_connectivity(),
            projection_contraction: None,
            trajectory_radius: Some(geometry.feasible_radius),
            gradient_bound: Some(geometry.gradient_bound),
            error_split: None,
            covering_confidence: budget.privacy_confidence(),
            accuracy: budget.accuracy(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::compose_delta;
    use approx::assert_abs_diff_eq;

    fn budget(epsilon: f64, delta: f64) -> Budget {
        Budget::new(1.0, epsilon, delta, 0.99, 1e-2).unwrap()
    }

    /// 5-cycle plus a 4-node path: q = 2, largest component 5, degree
    /// balance 1/2.
    fn two_component_graph() -> PrivateGraph {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (5, 6), (6, 7), (7, 8)];
        PrivateGraph::new(9, &edges).unwrap()
    }

    #[test]
    fn budget_validation() {
        assert!(Budget::new(1.0, 1.0, 0.1, 0.9, 1.0).is_ok());
        assert!(matches!(
            Budget::new(0.0, 1.0, 0.1, 0.9, 1.0),
            Err(PlannerError::InvalidBudget { field: "adjacency_radius", .. })
        ));
        assert!(Budget::new(1.0, 1.0, 0.5, 0.9, 1.0).is_err());
        assert!(Budget::new(1.0, 1.0, 0.1, 1.0, 1.0).is_err());
        assert!(Budget::new(1.0, 1.0, 0.1, 0.9, 0.0).is_err());
        assert!(budget(1.0, 0.1).with_success_probability(1.0).is_err());
    }

    #[test]
    fn covering_steps_worked_example() {
        let gp = two_component_graph();
        assert_eq!(gp.max_component_size(), 5);
        assert_abs_diff_eq!(gp.degree_balance(), 0.5);
        // (ln 0.0513167 − ln 5)/ln 0.7 = 12.84 → 13
        assert_eq!(covering_steps(&gp, 0.9).unwrap(), 13);
    }

    #[test]
    fn covering_steps_degenerate_pair() {
        let gp = PrivateGraph::new(2, &[(0, 1)]).unwrap();
        // Both nodes change every step; the bound degenerates and one step
        // suffices at any confidence.
        assert_eq!(covering_steps(&gp, 0.999999).unwrap(), 1);
        assert_eq!(covering_steps(&gp, 1e-9).unwrap(), 1);
    }

    #[test]
    fn covering_steps_monotone_in_confidence() {
        let gp = two_component_graph();
        let mut last = 0;
        for rho in [0.1, 0.5, 0.9, 0.99, 0.999, 0.9999] {
            let s = covering_steps(&gp, rho).unwrap();
            assert!(s >= last, "steps dropped from {last} to {s} at confidence {rho}");
            last = s;
        }
        assert!(covering_steps(&gp, 1.0).is_err());
        assert!(covering_steps(&gp, 0.0).is_err());
    }

    #[test]
    fn noise_std_worked_examples() {
        let b = budget(1.0, 0.1);
        let sigma = averaging_noise_std(&b, std::f64::consts::SQRT_2).unwrap();
        assert_abs_diff_eq!(sigma, 1.12786, epsilon = 1e-5);
        // Linear in the adjacency radius.
        let wide = Budget::new(2.0, 1.0, 0.1, 0.99, 1e-2).unwrap();
        let sigma2 = averaging_noise_std(&wide, std::f64::consts::SQRT_2).unwrap();
        assert_abs_diff_eq!(sigma2, 2.0 * sigma, epsilon = 1e-12);
        // Tight-budget value against the frozen tail oracle.
        let tight = budget(1e-3, 1e-6);
        let sigma3 = averaging_noise_std(&tight, std::f64::consts::SQRT_2).unwrap();
        assert_abs_diff_eq!(sigma3, 3361.253, epsilon = 1e-2);
        assert_eq!(averaging_noise_std(&b, 0.0), Err(PlannerError::ZeroMixingFloor));
    }

    #[test]
    fn averaging_rounds_saturates_at_one() {
        let g = PublicGraph::cycle(10, 0.1).unwrap();
        let gp = PrivateGraph::new(10, &[(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]).unwrap();
        // Target equal to the starting power: the bound is met before any
        // averaging happens.
        let power = 10.0 * 0.0 + 2.0 * 25.0 * 1.0;
        assert_eq!(averaging_rounds(power, 0.0, &g, &gp, 1, 1.0).unwrap(), 1);
        // A real target yields a finite positive count that grows as the
        // target shrinks.
        let t1 = averaging_rounds(1e-2, 100.0, &g, &gp, 5, 3.0).unwrap();
        let t2 = averaging_rounds(1e-4, 100.0, &g, &gp, 5, 3.0).unwrap();
        assert!(t2 > t1 && t1 > 1);
    }

    #[test]
    fn rounds_shrink_when_connectivity_grows() {
        let weak = PublicGraph::cycle(10, 0.1).unwrap();
        let strong = PublicGraph::complete(10, 0.1).unwrap();
        let gp = PrivateGraph::new(10, &[(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]).unwrap();
        let t_weak = averaging_rounds(1e-2, 50.0, &weak, &gp, 5, 2.0).unwrap();
        let t_strong = averaging_rounds(1e-2, 50.0, &strong, &gp, 5, 2.0).unwrap();
        assert!(t_strong < t_weak);
    }

    #[test]
    fn projection_contraction_closed_forms() {
        // Orthogonal axes, two rows: I − ½I = ½I.
        let rows = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(projection_contraction(&rows).unwrap(), 0.5, epsilon = 1e-12);
        // n orthonormal rows in dimension n: 1 − 1/n.
        for n in [3usize, 5, 8] {
            let rows = DMatrix::<f64>::identity(n, n);
            assert_abs_diff_eq!(
                projection_contraction(&rows).unwrap(),
                1.0 - 1.0 / n as f64,
                epsilon = 1e-12
            );
        }
        // Scale invariance per row.
        let rows = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -3.0, 1.0, 0.5, 0.5]);
        let mut scaled = rows.clone();
        scaled.row_mut(1).scale_mut(-7.0);
        assert_abs_diff_eq!(
            projection_contraction(&rows).unwrap(),
            projection_contraction(&scaled).unwrap(),
            epsilon = 1e-12
        );
        // Parallel rows cannot span the plane.
        let parallel = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -2.0, -2.0]);
        assert_eq!(projection_contraction(&parallel), Err(PlannerError::RankDeficient));
    }

    #[test]
    fn plan_average_pipeline() {
        let g = PublicGraph::complete(2, 0.5).unwrap();
        let gp = PrivateGraph::new(2, &[(0, 1)]).unwrap();
        let b = budget(1.0, 0.1);
        let mixing = MixingSource::Evaluate { mode: MixingMode::Exact, seed: Seed::new(3) };
        let plan = plan_average(&b, 34.0, &g, &gp, &mixing).unwrap();
        assert_eq!(plan.gossip_steps, 1);
        assert_eq!(plan.recursions, 1);
        assert!(plan.detail.mixing_exact);
        assert_abs_diff_eq!(plan.detail.mixing_floor, std::f64::consts::SQRT_2, epsilon = 1e-9);
        assert_abs_diff_eq!(plan.noise_std, 1.12786, epsilon = 1e-5);
        // Complete 2-node graph at weight ½ averages in one round, so only
        // the clamp keeps the count at one.
        assert_eq!(plan.averaging_rounds, 1);
        let text = plan.describe();
        assert!(text.contains("gossip steps"));
        assert!(text.contains("(exact)"));
    }

    #[test]
    fn equation_plan_recursions_track_accuracy() {
        let g = PublicGraph::cycle(4, 0.2).unwrap();
        let gp = PrivateGraph::new(4, &[(0, 1), (2, 3)]).unwrap();
        let geometry = EquationGeometry {
            nodes: 4,
            projection_contraction: 0.6,
            solution_norm: 2.0,
            start_norm: 0.0,
            start_distance: 2.0,
        };
        let mixing = MixingSource::Fixed { value: std::f64::consts::SQRT_2, exact: true };
        let b = |nu: f64| Budget::new(1.0, 0.1, 1e-6, 0.95, nu).unwrap();
        let coarse = plan_equation_solver(&b(1.0), &geometry, 0.5, &g, &gp, &mixing).unwrap();
        let fine = plan_equation_solver(&b(0.01), &geometry, 0.5, &g, &gp, &mixing).unwrap();
        assert!(fine.recursions > coarse.recursions);
        // When the target already exceeds the initial error, one recursion.
        let loose = Budget::new(1.0, 0.1, 1e-6, 0.95, 2.0 * 4.0 * 4.0 + 1.0).unwrap();
        let trivial = plan_equation_solver(&loose, &geometry, 0.5, &g, &gp, &mixing).unwrap();
        assert_eq!(trivial.recursions, 1);
        // The per-recursion delta recomposes to the full budget.
        for plan in [&coarse, &fine] {
            let recomposed = compose_delta(0.1, plan.detail.per_recursion_delta, plan.recursions);
            assert_abs_diff_eq!(recomposed, 1e-6, epsilon = 1e-6 * 1e-9);
        }
        assert!(matches!(
            plan_equation_solver(&b(1.0), &geometry, 1.2, &g, &gp, &mixing),
            Err(PlannerError::BadErrorSplit(_))
        ));
        let bad = EquationGeometry { projection_contraction: 1.0, ..geometry };
        assert!(matches!(
            plan_equation_solver(&b(1.0), &bad, 0.5, &g, &gp, &mixing),
            Err(PlannerError::RankDeficient)
        ));
    }

    #[test]
    fn optimizer_plan_scales_with_gradient_bound() {
        let g = PublicGraph::cycle(6, 0.15).unwrap();
        let gp = PrivateGraph::new(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let b = budget(0.5, 1e-4).with_success_probability(0.9).unwrap();
        let mixing = MixingSource::Fixed { value: 1.0, exact: false };
        let geo = |grad: f64| OptimizerGeometry {
            nodes: 6,
            feasible_radius: 1.0,
            gradient_bound: grad,
        };
        let schedule = StepsizeSchedule::Harmonic;
        let one = plan_optimizer(&b, &geo(1.0), 8, &schedule, &g, &gp, &mixing).unwrap();
        let two = plan_optimizer(&b, &geo(2.0), 8, &schedule, &g, &gp, &mixing).unwrap();
        assert_abs_diff_eq!(two.noise_std, 2.0 * one.noise_std, epsilon = 1e-9);
        assert!(one.averaging_rounds >= 1);
        assert_eq!(one.detail.gradient_bound, Some(1.0));

        // Demanding near-certain success inflates the rounds.
        let sure = budget(0.5, 1e-4).with_success_probability(0.999999).unwrap();
        let hard = plan_optimizer(&sure, &geo(1.0), 8, &schedule, &g, &gp, &mixing).unwrap();
        assert!(hard.averaging_rounds > one.averaging_rounds);

        // Missing probability and non-diminishing schedules are rejected.
        let no_p = budget(0.5, 1e-4);
        assert!(matches!(
            plan_optimizer(&no_p, &geo(1.0), 8, &schedule, &g, &gp, &mixing),
            Err(PlannerError::MissingSuccessProbability)
        ));
        assert!(matches!(
            plan_optimizer(&b, &geo(1.0), 8, &StepsizeSchedule::Constant { value: 0.1 }, &g, &gp, &mixing),
            Err(PlannerError::NonDiminishingSchedule)
        ));
    }

    #[test]
    fn schedule_values() {
        assert_abs_diff_eq!(StepsizeSchedule::Harmonic.value(0), 1.0);
        assert_abs_diff_eq!(StepsizeSchedule::Harmonic.value(99), 0.01);
        assert_abs_diff_eq!(StepsizeSchedule::Scaled { factor: 3.0 }.value(2), 1.0);
        assert_abs_diff_eq!(StepsizeSchedule::Constant { value: 0.2 }.value(7), 0.2);
        assert!(StepsizeSchedule::Harmonic.is_diminishing());
        assert!(!StepsizeSchedule::Constant { value: 0.2 }.is_diminishing());
    }

    #[test]
    fn node_mismatch_is_rejected() {
        let g = PublicGraph::cycle(4, 0.2).unwrap();
        let gp = PrivateGraph::new(6, &[(0, 1), (2, 3), (4, 5)]).unwrap();
        let b = budget(1.0, 0.1);
        let mixing = MixingSource::Fixed { value: 1.0, exact: false };
        assert!(matches!(
            plan_average(&b, 1.0, &g, &gp, &mixing),
            Err(PlannerError::NodeMismatch { .. })
        ));
    }
}
