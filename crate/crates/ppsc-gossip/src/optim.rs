//! Cooperative constrained optimization with private projected subgradient
//! recursions, plus the relaxed-projection least-squares variant.
//!
//! Every node owns one term of a separable objective and takes projected
//! gradient steps with a diminishing stepsize between gossip-and-average
//! rounds. The objective families here cover the shapes the experiments
//! need — quadratic tracking terms, plain linear costs, and regularized
//! logistic losses over per-node data shards — and each family knows its
//! own adjacency notion (how far a neighbor dataset may drift) and a
//! gradient-norm bound for the noise calibration.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::graph::{PrivateGraph, PublicGraph};
use crate::linear_eq::EquationSystem;
use crate::planner::{OptimizerGeometry, StepsizeSchedule};
use crate::solver::{run_recursions, RunParams, SolverError, SolverRun};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("a family needs at least one agent")]
    EmptyFamily,
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("constraint set is degenerate: {0}")]
    BadSet(String),
    #[error("labels must be 0 or 1 and match their feature rows")]
    BadLabels,
    #[error("regularization must be a finite nonnegative number")]
    BadRegularization,
    #[error("families have different shapes and cannot be compared")]
    StructureMismatch,
    #[error("classification scores need both a positive and a negative label")]
    DegenerateLabels,
    #[error("start point lies outside the constraint set")]
    InfeasibleStart,
    #[error("family has {agents} agents, graphs have {nodes} nodes")]
    NodeMismatch { agents: usize, nodes: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Feasible region for the constrained optimizer: a Euclidean ball or an
/// axis-aligned box, both with cheap exact projections.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Ball { center: DVector<f64>, radius: f64 },
    Box { lower: DVector<f64>, upper: DVector<f64> },
}

impl ConvexSet {
    pub fn unit_ball(dimension: usize) -> Self {
        ConvexSet::Ball { center: DVector::zeros(dimension), radius: 1.0 }
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self, OptimError> {
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::BadSet("ball center must be finite".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(OptimError::BadSet(format!("ball radius {radius} must be positive")));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn interval_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, OptimError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(OptimError::BadSet("box bounds must have matching dimensions".into()));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] > upper[i] {
                return Err(OptimError::BadSet(format!(
                    "box bounds [{}, {}] at coordinate {i} are invalid",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(ConvexSet::Box { lower, upper })
    }

    pub fn dimension(&self) -> usize {
        match self {
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Box { lower, .. } => lower.len(),
        }
    }

    /// Nearest point of the set.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            ConvexSet::Ball { center, radius } => {
                let offset = y - center;
                let dist = offset.norm();
                if dist <= *radius {
                    y.clone()
                } else {
                    center + offset * (*radius / dist)
                }
            }
            ConvexSet::Box { lower, upper } => {
                DVector::from_fn(lower.len(), |i, _| y[i].clamp(lower[i], upper[i]))
            }
        }
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        (self.project(y) - y).norm() <= tol
    }

    /// Largest norm any feasible point can have.
    pub fn norm_bound(&self) -> f64 {
        match self {
            ConvexSet::Ball { center, radius } => center.norm() + radius,
            ConvexSet::Box { lower, upper } => (0..lower.len())
                .map(|i| lower[i].powi(2).max(upper[i].powi(2)))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// `ln(1 + eᵗ)`, safe against overflow for large `t`.
fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t + f64::ln_1p((-t).exp())
    } else {
        f64::ln_1p(t.exp())
    }
}

/// `1/(1 + e⁻ᵗ)`; the IEEE limit behavior keeps extreme inputs exact.
fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// A separable objective: one term per agent, all over the same variable.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveFamily {
    /// `fᵢ(y) = ‖y − cᵢ‖²`; the joint minimizer is the projected mean of
    /// the centers.
    Quadratic { centers: Vec<DVector<f64>> },
    /// `fᵢ(y) = gᵢ · y`.
    Linear { gradients: Vec<DVector<f64>> },
    /// Per-agent negated log-likelihood of a binary classifier over the
    /// agent's feature rows, plus an even share of an ℓ² penalty:
    /// `fᵢ(y) = Σⱼ [ln(1+exp(aᵢⱼ·y)) − bᵢⱼ aᵢⱼ·y] + (λ/2n)‖y‖²`.
    Logistic { features: Vec<DMatrix<f64>>, labels: Vec<DVector<f64>>, regularization: f64 },
}

impl ObjectiveFamily {
    pub fn quadratic(centers: Vec<DVector<f64>>) -> Result<Self, OptimError> {
        check_vectors(&centers)?;
        Ok(ObjectiveFamily::Quadratic { centers })
    }

    pub fn linear(gradients: Vec<DVector<f64>>) -> Result<Self, OptimError> {
        check_vectors(&gradients)?;
        Ok(ObjectiveFamily::Linear { gradients })
    }

    pub fn logistic(
        features: Vec<DMatrix<f64>>,
        labels: Vec<DVector<f64>>,
        regularization: f64,
    ) -> Result<Self, OptimError> {
        let dim = features.first().ok_or(OptimError::EmptyFamily)?.ncols();
        if dim == 0 {
            return Err(OptimError::DimensionMismatch { expected: 1, found: 0 });
        }
        if features.len() != labels.len() {
            return Err(OptimError::BadLabels);
        }
        for (a, b) in features.iter().zip(&labels) {
            if a.ncols() != dim {
                return Err(OptimError::DimensionMismatch { expected: dim, found: a.ncols() });
            }
            if a.nrows() != b.len() || a.iter().any(|v| !v.is_finite()) {
                return Err(OptimError::BadLabels);
            }
            if b.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(OptimError::BadLabels);
            }
        }
        if !(regularization >= 0.0) || !regularization.is_finite() {
            return Err(OptimError::BadRegularization);
        }
        Ok(ObjectiveFamily::Logistic { features, labels, regularization })
    }

    pub fn agents(&self) -> usize {
        match self {
            ObjectiveFamily::Quadratic { centers } => centers.len(),
            ObjectiveFamily::Linear { gradients } => gradients.len(),
            ObjectiveFamily::Logistic { features, .. } => features.len(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ObjectiveFamily::Quadratic { centers } => centers[0].len(),
            ObjectiveFamily::Linear { gradients } => gradients[0].len(),
            ObjectiveFamily::Logistic { features, .. } => features[0].ncols(),
        }
    }

    pub fn value(&self, agent: usize, y: &DVector<f64>) -> f64 {
        match self {
            ObjectiveFamily::Quadratic { centers } => (y - &centers[agent]).norm_squared(),
            ObjectiveFamily::Linear { gradients } => gradients[agent].dot(y),
            ObjectiveFamily::Logistic { features, labels, regularization } => {
                let a = &features[agent];
                let b = &labels[agent];
                let mut total = 0.0;
                for j in 0..a.nrows() {
                    let margin = a.row(j).transpose().dot(y);
                    total += softplus(margin) - b[j] * margin;
                }
                total + regularization / (2.0 * self.agents() as f64) * y.norm_squared()
            }
        }
    }

    pub fn gradient(&self, agent: usize, y: &DVector<f64>) -> DVector<f64> {
        match self {
            ObjectiveFamily::Quadratic { centers } => (y - &centers[agent]) * 2.0,
            ObjectiveFamily::Linear { gradients } => gradients[agent].clone(),
            ObjectiveFamily::Logistic { features, labels, regularization } => {
                let a = &features[agent];
                let b = &labels[agent];
                let mut grad = y * (regularization / self.agents() as f64);
                for j in 0..a.nrows() {
                    let row = a.row(j).transpose();
                    grad += row * (sigmoid(a.row(j).transpose().dot(y)) - b[j]);
                }
                grad
            }
        }
    }

    /// The whole network's objective at `y`.
    pub fn total_value(&self, y: &DVector<f64>) -> f64 {
        (0..self.agents()).map(|i| self.value(i, y)).sum()
    }

    /// The agent's private data flattened into one vector — the quantity the
    /// adjacency radius measures.
    pub fn parameters(&self, agent: usize) -> DVector<f64> {
        match self {
            ObjectiveFamily::Quadratic { centers } => centers[agent].clone(),
            ObjectiveFamily::Linear { gradients } => gradients[agent].clone(),
            ObjectiveFamily::Logistic { features, labels, .. } => {
                let a = &features[agent];
                let b = &labels[agent];
                let mut flat = DVector::zeros(a.nrows() * a.ncols() + b.len());
                for j in 0..a.nrows() {
                    for c in 0..a.ncols() {
                        flat[j * a.ncols() + c] = a[(j, c)];
                    }
                }
                flat.rows_mut(a.nrows() * a.ncols(), b.len()).copy_from(b);
                flat
            }
        }
    }

    /// Whether every agent's private data moved by at most `radius`
    /// (inclusive). Families must have identical structure — same kind,
    /// agent count, per-agent data shapes, and shared hyperparameters.
    pub fn is_adjacent(&self, other: &ObjectiveFamily, radius: f64) -> Result<bool, OptimError> {
        if std::mem::discriminant(self) != std::mem::discriminant(other)
            || self.agents() != other.agents()
        {
            return Err(OptimError::StructureMismatch);
        }
        if let (
            ObjectiveFamily::Logistic { regularization: ra, .. },
            ObjectiveFamily::Logistic { regularization: rb, .. },
        ) = (self, other)
        {
            if ra != rb {
                return Err(OptimError::StructureMismatch);
            }
        }
        let mut adjacent = true;
        for i in 0..self.agents() {
            let a = self.parameters(i);
            let b = other.parameters(i);
            if a.len() != b.len() {
                return Err(OptimError::StructureMismatch);
            }
            adjacent &= (a - b).norm() <= radius;
        }
        Ok(adjacent)
    }

    /// Largest gradient norm any agent can produce inside the origin-centered
    /// ball of the given radius.
    pub fn gradient_norm_bound(&self, radius: f64) -> f64 {
        match self {
            ObjectiveFamily::Quadratic { centers } => {
                2.0 * (radius + centers.iter().map(|c| c.norm()).fold(0.0, f64::max))
            }
            ObjectiveFamily::Linear { gradients } => {
                gradients.iter().map(|g| g.norm()).fold(0.0, f64::max)
            }
            ObjectiveFamily::Logistic { features, regularization, .. } => {
                let data = features
                    .iter()
                    .map(|a| (0..a.nrows()).map(|j| a.row(j).norm()).sum::<f64>())
                    .fold(0.0, f64::max);
                data + regularization / self.agents() as f64 * radius
            }
        }
    }
}

fn check_vectors(vectors: &[DVector<f64>]) -> Result<(), OptimError> {
    let dim = vectors.first().ok_or(OptimError::EmptyFamily)?.len();
    if dim == 0 {
        return Err(OptimError::DimensionMismatch { expected: 1, found: 0 });
    }
    for v in vectors {
        if v.len() != dim {
            return Err(OptimError::DimensionMismatch { expected: dim, found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(OptimError::BadSet("family data must be finite".into()));
        }
    }
    Ok(())
}

/// Gradient-norm bound over the region the iterates can actually visit: the
/// feasible set enlarged by the accuracy slack, measured from the origin.
pub fn gradient_bound(
    family: &ObjectiveFamily,
    set: &ConvexSet,
    accuracy: f64,
) -> Result<f64, OptimError> {
    if family.dimension() != set.dimension() {
        return Err(OptimError::DimensionMismatch {
            expected: family.dimension(),
            found: set.dimension(),
        });
    }
    Ok(family.gradient_norm_bound((set.norm_bound().powi(2) + accuracy.max(0.0)).sqrt()))
}

/// Package the planner's inputs for a family/set pair.
pub fn geometry(
    family: &ObjectiveFamily,
    set: &ConvexSet,
    accuracy: f64,
) -> Result<OptimizerGeometry, OptimError> {
    Ok(OptimizerGeometry {
        nodes: family.agents(),
        feasible_radius: set.norm_bound(),
        gradient_bound: gradient_bound(family, set, accuracy)?,
    })
}

/// Run the private optimizer: every node starts from one projected gradient
/// step out of the common `start` point and keeps stepping along its own
/// gradient, with the stepsize diminishing per recursion. The per-recursion
/// probe reports the total objective at the mean state.
#[allow(clippy::too_many_arguments)]
pub fn run_optimizer(
    family: &ObjectiveFamily,
    set: &ConvexSet,
    g: &PublicGraph,
    gp: &PrivateGraph,
    params: &RunParams,
    schedule: StepsizeSchedule,
    start: &DVector<f64>,
    reference: Option<&DVector<f64>>,
    rng: &mut ChaCha12Rng,
) -> Result<SolverRun, OptimError> {
    let n = family.agents();
    let m = family.dimension();
    if n != g.len() {
        return Err(OptimError::NodeMismatch { agents: n, nodes: g.len() });
    }
    if set.dimension() != m {
        return Err(OptimError::DimensionMismatch { expected: m, found: set.dimension() });
    }
    if start.len() != m {
        return Err(OptimError::DimensionMismatch { expected: m, found: start.len() });
    }
    if !set.contains(start, 1e-9) {
        return Err(OptimError::InfeasibleStart);
    }
    let alpha0 = schedule.value(0);
    let mut initial = DMatrix::zeros(n, m);
    for i in 0..n {
        let first = set.project(&(start - family.gradient(i, start) * alpha0));
        initial.row_mut(i).copy_from(&first.transpose());
    }
    let probe = |y: &DVector<f64>| family.total_value(y);
    let run = run_recursions(
        &initial,
        g,
        gp,
        params,
        reference,
        Some(&probe),
        |i, recursion, state| {
            set.project(&(&state - family.gradient(i, &state) * schedule.value(recursion)))
        },
        rng,
    )?;
    Ok(run)
}

/// Relaxed-projection least squares: each node nudges its state a stepsize
/// fraction of the way onto its own hyperplane. At stepsize 1 this is the
/// exact-solver recursion; diminishing stepsizes also handle inconsistent
/// systems, converging to the minimizer of the summed squared distances to
/// the hyperplanes. Error telemetry is against the exact solution when one
/// exists.
pub fn run_least_squares(
    system: &EquationSystem,
    g: &PublicGraph,
    gp: &PrivateGraph,
    params: &RunParams,
    schedule: StepsizeSchedule,
    start: &DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<SolverRun, OptimError> {
    let n = system.len();
    if n != g.len() {
        return Err(OptimError::NodeMismatch { agents: n, nodes: g.len() });
    }
    if start.len() != system.dimension() {
        return Err(OptimError::DimensionMismatch {
            expected: system.dimension(),
            found: start.len(),
        });
    }
    let relax = |node: usize, stepsize: f64, y: &DVector<f64>| {
        let projected = system.equation(node).project(y);
        y + (projected - y) * stepsize
    };
    let alpha0 = schedule.value(0);
    let mut initial = DMatrix::zeros(n, system.dimension());
    for i in 0..n {
        initial.row_mut(i).copy_from(&relax(i, alpha0, start).transpose());
    }
    let probe = |y: &DVector<f64>| {
        (0..n).map(|i| (system.equation(i).project(y) - y).norm_squared()).sum::<f64>() / 2.0
    };
    let run = run_recursions(
        &initial,
        g,
        gp,
        params,
        system.solution(),
        Some(&probe),
        |i, recursion, state| relax(i, schedule.value(recursion), &state),
        rng,
    )?;
    Ok(run)
}

/// Area under the ROC curve by the rank statistic: the fraction of
/// positive/negative pairs the scores order correctly, ties counting half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, OptimError> {
    if scores.len() != labels.len() {
        return Err(OptimError::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&b| b).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(OptimError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum average ranks over the positives, sweeping tie groups together.
    let mut positive_rank_sum = 0.0;
    let mut at = 0;
    while at < order.len() {
        let mut end = at + 1;
        while end < order.len() && scores[order[end]] == scores[order[at]] {
            end += 1;
        }
        let mean_rank = (at + 1 + end) as f64 / 2.0;
        for &idx in &order[at..end] {
            if labels[idx] {
                positive_rank_sum += mean_rank;
            }
        }
        at = end;
    }
    let wins = positive_rank_sum - (positives * (positives + 1)) as f64 / 2.0;
    Ok(wins / (positives * negatives) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_eq::AffineEquation;
    use crate::rng::Seed;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn ball_projection_examples() {
        let ball = ConvexSet::unit_ball(2);
        assert_abs_diff_eq!(
            (ball.project(&vec2(3.0, 4.0)) - vec2(0.6, 0.8)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_eq!(ball.project(&vec2(0.2, -0.1)), vec2(0.2, -0.1));
        assert!(ball.contains(&vec2(0.6, 0.8), 1e-12));
        assert!(!ball.contains(&vec2(1.01, 0.0), 1e-3));
        let shifted = ConvexSet::ball(vec2(1.0, 0.0), 2.0).unwrap();
        assert_abs_diff_eq!(shifted.norm_bound(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn box_projection_examples() {
        let b = ConvexSet::interval_box(vec2(-1.0, 0.0), vec2(1.0, 2.0)).unwrap();
        assert_eq!(b.project(&vec2(5.0, -3.0)), vec2(1.0, 0.0));
        assert_eq!(b.project(&vec2(0.5, 1.5)), vec2(0.5, 1.5));
        let wide = ConvexSet::interval_box(vec2(-1.0, -3.0), vec2(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(wide.norm_bound(), 13.0_f64.sqrt(), epsilon = 1e-15);
        assert!(ConvexSet::interval_box(vec2(1.0, 0.0), vec2(0.0, 1.0)).is_err());
        assert!(ConvexSet::ball(vec2(0.0, 0.0), 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn projections_are_idempotent_feasible_and_nonexpansive(
            probe_a in proptest::collection::vec(-20.0f64..20.0, 3),
            probe_b in proptest::collection::vec(-20.0f64..20.0, 3),
            center in proptest::collection::vec(-3.0f64..3.0, 3),
            radius in 0.1f64..5.0,
        ) {
            let ball = ConvexSet::ball(DVector::from_row_slice(&center), radius).unwrap();
            let cube = ConvexSet::interval_box(
                DVector::from_element(3, -2.0),
                DVector::from_row_slice(&[1.0, 3.0, 0.5]),
            ).unwrap();
            for set in [&ball, &cube] {
                let a = DVector::from_row_slice(&probe_a);
                let b = DVector::from_row_slice(&probe_b);
                let pa = set.project(&a);
                let pb = set.project(&b);
                prop_assert!(set.contains(&pa, 1e-9));
                prop_assert!((set.project(&pa) - &pa).norm() <= 1e-12);
                prop_assert!((pa - pb).norm() <= (a - b).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_family_basics() {
        let family =
            ObjectiveFamily::quadratic(vec![vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(2.0, 2.0)])
                .unwrap();
        assert_eq!(family.agents(), 3);
        assert_eq!(family.dimension(), 2);
        assert_abs_diff_eq!(family.value(0, &vec2(3.0, 4.0)), 20.0, epsilon = 1e-12);
        assert_eq!(family.gradient(0, &vec2(3.0, 4.0)), vec2(4.0, 8.0));
        // ‖∇fᵢ‖ = 2‖y − cᵢ‖ ≤ 2(radius + max‖cᵢ‖).
        assert_abs_diff_eq!(
            family.gradient_norm_bound(5.0),
            2.0 * (5.0 + 8.0_f64.sqrt()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn every_family_gradient_matches_finite_differences() {
        let mut rng = Seed::new(154).stream(0, "fd-check");
        let quad = ObjectiveFamily::quadratic(vec![vec2(0.5, -1.0), vec2(2.0, 0.3)]).unwrap();
        let lin = ObjectiveFamily::linear(vec![vec2(1.0, 2.0), vec2(-3.0, 0.1)]).unwrap();
        let features = vec![
            DMatrix::from_row_slice(3, 2, &[0.4, -1.2, 0.9, 0.1, -0.5, 0.7]),
            DMatrix::from_row_slice(2, 2, &[1.1, 0.2, -0.3, -0.8]),
        ];
        let labels = vec![
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ];
        let logi = ObjectiveFamily::logistic(features, labels, 0.7).unwrap();
        let h = 1e-5;
        for family in [&quad, &lin, &logi] {
            for agent in 0..family.agents() {
                for _ in 0..5 {
                    let y = DVector::from_fn(2, |_, _| {
                        crate::rng::gaussian(&mut rng, 1.0).unwrap()
                    });
                    let grad = family.gradient(agent, &y);
                    for c in 0..2 {
                        let mut up = y.clone();
                        let mut down = y.clone();
                        up[c] += h;
                        down[c] -= h;
                        let fd = (family.value(agent, &up) - family.value(agent, &down))
                            / (2.0 * h);
                        assert_relative_eq!(grad[c], fd, max_relative = 1e-4, epsilon = 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn logistic_values_stay_finite_at_extreme_margins() {
        let features = vec![DMatrix::from_row_slice(2, 1, &[500.0, -500.0])];
        let labels = vec![DVector::from_vec(vec![1.0, 0.0])];
        let family = ObjectiveFamily::logistic(features, labels, 0.0).unwrap();
        let y = DVector::from_vec(vec![3.0]);
        assert!(family.value(0, &y).is_finite());
        assert!(family.gradient(0, &y)[0].is_finite());
        // Both samples are fit perfectly, so the loss is almost zero and
        // convexity still holds at a midpoint probe.
        assert!(family.value(0, &y) < 1e-12);
        let a = DVector::from_vec(vec![-0.02]);
        let b = DVector::from_vec(vec![0.05]);
        let mid = (&a + &b) / 2.0;
        assert!(
            family.value(0, &mid)
                <= 0.5 * (family.value(0, &a) + family.value(0, &b)) + 1e-12
        );
    }

    #[test]
    fn logistic_rejects_malformed_data() {
        let f = vec![DMatrix::from_row_slice(1, 2, &[1.0, 2.0])];
        let good = vec![DVector::from_vec(vec![1.0])];
        assert!(ObjectiveFamily::logistic(f.clone(), vec![DVector::from_vec(vec![0.5])], 1.0)
            .is_err());
        assert!(ObjectiveFamily::logistic(
            f.clone(),
            vec![DVector::from_vec(vec![1.0, 0.0])],
            1.0
        )
        .is_err());
        assert!(ObjectiveFamily::logistic(f, good, -1.0).is_err());
        assert!(ObjectiveFamily::logistic(vec![], vec![], 1.0).is_err());
    }

    #[test]
    fn adjacency_uses_per_agent_data_distance() {
        let base = ObjectiveFamily::quadratic(vec![vec2(1.0, 0.0), vec2(0.0, 1.0)]).unwrap();
        let moved = ObjectiveFamily::quadratic(vec![vec2(1.0, 0.5), vec2(0.0, 1.0)]).unwrap();
        assert!(base.is_adjacent(&moved, 0.5).unwrap());
        assert!(!base.is_adjacent(&moved, 0.49).unwrap());
        let both = ObjectiveFamily::quadratic(vec![vec2(1.3, 0.0), vec2(0.4, 1.0)]).unwrap();
        // Each agent moved within 0.4, even though the total movement is more.
        assert!(base.is_adjacent(&both, 0.4).unwrap());
        let lin = ObjectiveFamily::linear(vec![vec2(1.0, 0.0), vec2(0.0, 1.0)]).unwrap();
        assert!(base.is_adjacent(&lin, 1.0).is_err());
        let short = ObjectiveFamily::quadratic(vec![vec2(1.0, 0.0)]).unwrap();
        assert!(base.is_adjacent(&short, 1.0).is_err());
    }

    #[test]
    fn geometry_packages_planner_inputs() {
        let family = ObjectiveFamily::quadratic(vec![vec2(3.0, 0.0), vec2(0.0, 4.0)]).unwrap();
        let set = ConvexSet::unit_ball(2);
        let geo = geometry(&family, &set, 0.44).unwrap();
        assert_eq!(geo.nodes, 2);
        assert_abs_diff_eq!(geo.feasible_radius, 1.0, epsilon = 1e-15);
        // Radius √(1² + 0.44) = 1.2, so the bound is 2(1.2 + 4).
        assert_abs_diff_eq!(geo.gradient_bound, 10.4, epsilon = 1e-12);
        let mismatched = ConvexSet::unit_ball(3);
        assert!(geometry(&family, &mismatched, 0.1).is_err());
    }

    #[test]
    fn single_agent_descent_reaches_the_projected_center() {
        let family = ObjectiveFamily::quadratic(vec![vec2(0.4, -0.2)]).unwrap();
        let set = ConvexSet::unit_ball(2);
        // One agent needs a gossip partner, so no private run is possible;
        // check the recursion map directly: the fixed point of a projected
        // gradient step on ‖y − c‖² is 𝒫(c), here the interior point c.
        let mut y = vec2(0.9, 0.1);
        for l in 0..2000 {
            let alpha = StepsizeSchedule::Harmonic.value(l);
            y = set.project(&(&y - family.gradient(0, &y) * alpha));
        }
        assert!((y - vec2(0.4, -0.2)).norm() < 1e-6);
    }

    #[test]
    fn noiseless_network_minimizes_the_summed_quadratic() {
        // Mean of the centers sits strictly inside the ball, so the
        // constrained optimum is that mean; a complete public graph at
        // weight 1/n makes each averaging round exact.
        let centers =
            vec![vec2(0.6, 0.0), vec2(-0.2, 0.4), vec2(0.2, -0.6), vec2(0.2, 0.6)];
        let optimum = vec2(0.2, 0.1);
        let family = ObjectiveFamily::quadratic(centers).unwrap();
        let set = ConvexSet::unit_ball(2);
        let g = PublicGraph::complete(4, 0.25).unwrap();
        let gp = PrivateGraph::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let params = RunParams::new(1, 0.0, 1, 120).unwrap();
        let mut rng = Seed::new(161).stream(0, "quad-descent");
        let run = run_optimizer(
            &family,
            &set,
            &g,
            &gp,
            &params,
            StepsizeSchedule::Harmonic,
            &DVector::zeros(2),
            Some(&optimum),
            &mut rng,
        )
        .unwrap();
        let mean = run.records.last().unwrap().mean_state.clone();
        assert!((mean - &optimum).norm() < 1e-3, "mean missed the optimum");
        // The probe tracks the total objective, which must approach its
        // minimum value.
        let best = family.total_value(&optimum);
        let probes: Vec<f64> = run.records.iter().map(|r| r.probe.unwrap()).collect();
        assert!(probes.last().unwrap() - best < 1e-5);
        assert!(probes.last().unwrap() + 1e-12 >= best);
    }

    #[test]
    fn noisy_iterates_stay_feasible() {
        let family = ObjectiveFamily::quadratic(vec![
            vec2(0.5, 0.0),
            vec2(0.0, 0.5),
            vec2(-0.5, 0.0),
            vec2(0.0, -0.5),
        ])
        .unwrap();
        let set = ConvexSet::interval_box(vec2(-0.8, -0.8), vec2(0.8, 0.8)).unwrap();
        let g = PublicGraph::cycle(4, 0.2).unwrap();
        let gp = PrivateGraph::new(4, &[(0, 1), (2, 3)]).unwrap();
        let params = RunParams::new(2, 5.0, 10, 25).unwrap();
        let mut rng = Seed::new(168).stream(0, "feasible");
        let run = run_optimizer(
            &family,
            &set,
            &g,
            &gp,
            &params,
            StepsizeSchedule::Harmonic,
            &DVector::zeros(2),
            None,
            &mut rng,
        )
        .unwrap();
        for i in 0..4 {
            assert!(set.contains(&run.node_state(i), 1e-10));
        }
        for record in &run.records {
            assert!(set.contains(&record.mean_state, 1e-9));
        }
    }

    #[test]
    fn infeasible_or_mismatched_runs_are_rejected() {
        let family = ObjectiveFamily::quadratic(vec![vec2(0.0, 0.0), vec2(1.0, 0.0)]).unwrap();
        let set = ConvexSet::unit_ball(2);
        let g = PublicGraph::cycle(4, 0.2).unwrap();
        let gp = PrivateGraph::new(4, &[(0, 1), (2, 3)]).unwrap();
        let params = RunParams::new(1, 0.0, 1, 1).unwrap();
        let mut rng = Seed::new(175).stream(0, "reject");
        assert!(matches!(
            run_optimizer(
                &family, &set, &g, &gp, &params, StepsizeSchedule::Harmonic,
                &DVector::zeros(2), None, &mut rng,
            ),
            Err(OptimError::NodeMismatch { agents: 2, nodes: 4 })
        ));
        let four = ObjectiveFamily::quadratic(vec![
            vec2(0.0, 0.0),
            vec2(1.0, 0.0),
            vec2(0.0, 1.0),
            vec2(1.0, 1.0),
        ])
        .unwrap();
        assert!(matches!(
            run_optimizer(
                &four, &set, &g, &gp, &params, StepsizeSchedule::Harmonic,
                &vec2(5.0, 5.0), None, &mut rng,
            ),
            Err(OptimError::InfeasibleStart)
        ));
    }

    #[test]
    fn least_squares_with_full_stepsize_solves_consistent_systems() {
        let system = EquationSystem::new(vec![
            AffineEquation::new(vec2(1.0, 0.0), 2.0).unwrap(),
            AffineEquation::new(vec2(0.0, 1.0), -1.0).unwrap(),
            AffineEquation::new(vec2(1.0, 1.0), 1.0).unwrap(),
        ])
        .unwrap();
        let g = PublicGraph::complete(3, 1.0 / 3.0).unwrap();
        let gp = PrivateGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let params = RunParams::new(1, 0.0, 1, 60).unwrap();
        let mut rng = Seed::new(182).stream(0, "ls-consistent");
        let run = run_least_squares(
            &system,
            &g,
            &gp,
            &params,
            StepsizeSchedule::Constant { value: 1.0 },
            &DVector::zeros(2),
            &mut rng,
        )
        .unwrap();
        let y = system.solution().unwrap();
        assert!(run.max_node_distance(y) < 1e-9);
    }

    #[test]
    fn least_squares_handles_inconsistent_systems() {
        // Full-rank but contradictory: the relaxed recursion settles on the
        // minimizer of the summed squared hyperplane distances, which solves
        // (Σ uᵢuᵢᵀ) y = Σ zᵢhᵢ/‖hᵢ‖².
        let eqs = vec![
            AffineEquation::new(vec2(1.0, 0.0), 1.0).unwrap(),
            AffineEquation::new(vec2(0.0, 1.0), 0.0).unwrap(),
            AffineEquation::new(vec2(1.0, 1.0), 5.0).unwrap(),
        ];
        let system = EquationSystem::new(eqs.clone()).unwrap();
        assert!(system.solution().is_none());
        let mut normal = DMatrix::<f64>::zeros(2, 2);
        let mut rhs = DVector::<f64>::zeros(2);
        for e in &eqs {
            let u = e.coefficients() / e.coefficients().norm();
            normal += &u * u.transpose();
            rhs += e.translation();
        }
        let oracle = normal.try_inverse().unwrap() * rhs;
        let g = PublicGraph::complete(3, 1.0 / 3.0).unwrap();
        let gp = PrivateGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let params = RunParams::new(1, 0.0, 1, 200).unwrap();
        let mut rng = Seed::new(189).stream(0, "ls-inconsistent");
        let run = run_least_squares(
            &system,
            &g,
            &gp,
            &params,
            StepsizeSchedule::Constant { value: 0.8 },
            &DVector::zeros(2),
            &mut rng,
        )
        .unwrap();
        // Individual nodes keep their own relaxation offsets (their
        // hyperplanes don't contain the minimizer), but the network mean
        // settles on it.
        let mean = run.records.last().unwrap().mean_state.clone();
        assert!((mean - &oracle).norm() < 1e-6);
        assert!(run.max_node_distance(&oracle) > 0.1);
        // No exact solution means no error telemetry, but the probe (total
        // halved squared distance) still shrinks toward its minimum.
        assert!(run.records.last().unwrap().error_sq.is_none());
        let probes: Vec<f64> = run.records.iter().map(|r| r.probe.unwrap()).collect();
        assert!(probes.last().unwrap() < &probes[0]);
    }

    #[test]
    fn auc_hand_examples() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        assert_abs_diff_eq!(auc(&scores, &labels).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(
            auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // All scores tied: every pair counts half.
        assert_abs_diff_eq!(
            auc(&[0.5, 0.5, 0.5, 0.5], &[false, true, false, true]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(OptimError::DegenerateLabels));
        assert_eq!(auc(&[], &[]), Err(OptimError::DegenerateLabels));
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = Seed::new(196).stream(0, "auc-oracle");
        use rand::Rng;
        for _ in 0..30 {
            let len = 20;
            // Coarse score grid to force plenty of ties.
            let scores: Vec<f64> =
                (0..len).map(|_| (rng.random_range(0..8) as f64) / 8.0).collect();
            let labels: Vec<bool> = (0..len).map(|_| rng.random::<bool>()).collect();
            let positives = labels.iter().filter(|&&b| b).count();
            if positives == 0 || positives == len {
                continue;
            }
            let mut wins = 0.0;
            for i in 0..len {
                for j in 0..len {
                    if labels[i] && !labels[j] {
                        if scores[i] > scores[j] {
                            wins += 1.0;
                        } else if scores[i] == scores[j] {
                            wins += 0.5;
                        }
                    }
                }
            }
            let oracle = wins / (positives * (len - positives)) as f64;
            assert_abs_diff_eq!(auc(&scores, &labels).unwrap(), oracle, epsilon = 1e-12);
        }
    }
}
