//! Row-partitioned linear systems solved by alternating projection.
//!
//! Each node holds one affine equation — a hyperplane — of a system that has
//! a unique exact solution. A recursion of the private solver averages the
//! node states (after the gossip stage has disguised them) and then lets
//! every node project onto its own hyperplane, pulling the network mean
//! toward the joint solution. Adjacency for the privacy guarantee is
//! measured hyperplane-to-hyperplane: a rotational part (how far the two
//! orientations are apart) plus a translational part (how far the two
//! offsets are apart).

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::graph::{PrivateGraph, PublicGraph};
use crate::planner::{projection_contraction, EquationGeometry, PlannerError};
use crate::solver::{run_recursions, RunParams, SolverError, SolverRun};

/// Relative residual below which a least-squares solution counts as exact.
const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearEqError {
    #[error("equation coefficients must be a nonzero finite vector")]
    BadCoefficients,
    #[error("equation target must be finite")]
    BadTarget,
    #[error("a system needs at least one equation")]
    Empty,
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coefficient rows do not span the solution space")]
    RankDeficient,
    #[error("the system has no exact solution")]
    Inconsistent,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("system has {equations} equations, graphs have {nodes} nodes")]
    NodeMismatch { equations: usize, nodes: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One hyperplane `coefficients · y = target`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEquation {
    coefficients: DVector<f64>,
    target: f64,
}

impl AffineEquation {
    pub fn new(coefficients: DVector<f64>, target: f64) -> Result<Self, LinearEqError> {
        if coefficients.is_empty()
            || coefficients.iter().any(|v| !v.is_finite())
            || coefficients.iter().all(|&v| v == 0.0)
        {
            return Err(LinearEqError::BadCoefficients);
        }
        if !target.is_finite() {
            return Err(LinearEqError::BadTarget);
        }
        Ok(AffineEquation { coefficients, target })
    }

    pub fn dimension(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Signed violation `coefficients · y − target`.
    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        self.coefficients.dot(y) - self.target
    }

    /// Orthogonal projection of `y` onto the hyperplane.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.coefficients * (self.residual(y) / self.coefficients.norm_squared())
    }

    /// The point of the hyperplane closest to the origin — its translation
    /// vector `target · coefficients / ‖coefficients‖²`.
    pub fn translation(&self) -> DVector<f64> {
        &self.coefficients * (self.target / self.coefficients.norm_squared())
    }

    fn unit(&self) -> DVector<f64> {
        &self.coefficients / self.coefficients.norm()
    }
}

/// Spectral-norm gap between the two normalized orientation projectors.
/// For a pair of lines this is exactly `|sin θ|` of the angle between them,
/// so it is scale invariant and lies in `[0, 1]`.
pub fn rotational_distance(a: &AffineEquation, b: &AffineEquation) -> f64 {
    let cos = a.unit().dot(&b.unit());
    (1.0 - (cos * cos).min(1.0)).max(0.0).sqrt()
}

/// Euclidean distance between the two translation vectors.
pub fn translational_distance(a: &AffineEquation, b: &AffineEquation) -> f64 {
    (a.translation() - b.translation()).norm()
}

/// A full system: one equation per node, unique exact solution required for
/// the exact solver (the least-squares variant in the optimizer module
/// accepts inconsistent systems as long as the rows still span the space).
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSystem {
    equations: Vec<AffineEquation>,
    dimension: usize,
    least_squares: DVector<f64>,
    solution: Option<DVector<f64>>,
    contraction: f64,
}

impl EquationSystem {
    pub fn new(equations: Vec<AffineEquation>) -> Result<Self, LinearEqError> {
        let dimension = equations.first().ok_or(LinearEqError::Empty)?.dimension();
        for eq in &equations {
            if eq.dimension() != dimension {
                return Err(LinearEqError::DimensionMismatch {
                    expected: dimension,
                    found: eq.dimension(),
                });
            }
        }
        let stacked = stack(&equations, dimension);
        let contraction = projection_contraction(&stacked).map_err(|e| match e {
            PlannerError::RankDeficient => LinearEqError::RankDeficient,
            other => panic!("unexpected contraction failure: {other}"),
        })?;
        let targets = DVector::from_fn(equations.len(), |i, _| equations[i].target);
        let least_squares = stacked
            .clone()
            .svd(true, true)
            .solve(&targets, 1e-12)
            .expect("svd with vectors computed");
        let residual = (&stacked * &least_squares - &targets).norm();
        let solution = if residual <= CONSISTENCY_TOL * targets.norm().max(1e-300) {
            Some(least_squares.clone())
        } else {
            None
        };
        Ok(EquationSystem { equations, dimension, least_squares, solution, contraction })
    }

    /// Parse the solver's system format: one equation per line, the
    /// coefficients followed by the right-hand side, whitespace separated.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, LinearEqError> {
        let mut equations = Vec::new();
        let mut width = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| LinearEqError::Parse { line: idx + 1, message };
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| parse_err(format!("'{t}' is not a number")))
                })
                .collect::<Result<_, _>>()?;
            if values.len() < 2 {
                return Err(parse_err("need at least one coefficient and a target".into()));
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(parse_err(format!(
                        "expected {w} values per line, found {}",
                        values.len()
                    )))
                }
                _ => {}
            }
            let (coeffs, target) = values.split_at(values.len() - 1);
            equations.push(
                AffineEquation::new(DVector::from_row_slice(coeffs), target[0]).map_err(
                    |e| parse_err(e.to_string()),
                )?,
            );
        }
        EquationSystem::new(equations)
    }

    /// Render in the same format `parse` accepts, with full round-trip
    /// precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for eq in &self.equations {
            for v in eq.coefficients.iter() {
                out.push_str(&format!("{v} "));
            }
            out.push_str(&format!("{}\n", eq.target));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn equation(&self, node: usize) -> &AffineEquation {
        &self.equations[node]
    }

    pub fn equations(&self) -> &[AffineEquation] {
        &self.equations
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        stack(&self.equations, self.dimension)
    }

    pub fn targets(&self) -> DVector<f64> {
        DVector::from_fn(self.equations.len(), |i, _| self.equations[i].target)
    }

    /// The exact solution, present when the system is consistent.
    pub fn solution(&self) -> Option<&DVector<f64>> {
        self.solution.as_ref()
    }

    /// The least-squares solution (coincides with `solution` when present).
    pub fn least_squares(&self) -> &DVector<f64> {
        &self.least_squares
    }

    /// Per-recursion contraction factor of the averaged projection map,
    /// in `[0, 1)`.
    pub fn contraction(&self) -> f64 {
        self.contraction
    }

    /// Whether every node's equation moved by at most `radius`, measuring
    /// rotational plus translational distance (inclusive).
    pub fn is_adjacent(&self, other: &EquationSystem, radius: f64) -> Result<bool, LinearEqError> {
        if self.len() != other.len() {
            return Err(LinearEqError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        if self.dimension != other.dimension {
            return Err(LinearEqError::DimensionMismatch {
                expected: self.dimension,
                found: other.dimension,
            });
        }
        Ok(self.equations.iter().zip(&other.equations).all(|(a, b)| {
            rotational_distance(a, b) + translational_distance(a, b) <= radius
        }))
    }

    /// Spectral and norm data the planner consumes, for a run starting at
    /// `start`. Requires an exact solution.
    pub fn geometry(&self, start: &DVector<f64>) -> Result<EquationGeometry, LinearEqError> {
        if start.len() != self.dimension {
            return Err(LinearEqError::DimensionMismatch {
                expected: self.dimension,
                found: start.len(),
            });
        }
        let solution = self.solution().ok_or(LinearEqError::Inconsistent)?;
        Ok(EquationGeometry {
            nodes: self.len(),
            projection_contraction: self.contraction,
            solution_norm: solution.norm(),
            start_norm: start.norm(),
            start_distance: (start - solution).norm(),
        })
    }
}

fn stack(equations: &[AffineEquation], dimension: usize) -> DMatrix<f64> {
    DMatrix::from_fn(equations.len(), dimension, |i, j| equations[i].coefficients[j])
}

/// Run the private equation solver: every node starts at the projection of
/// the common `start` point onto its own hyperplane and projects again after
/// each gossip-and-average recursion. Per-recursion error telemetry is
/// measured against the exact solution.
pub fn run_equation_solver(
    system: &EquationSystem,
    g: &PublicGraph,
    gp: &PrivateGraph,
    params: &RunParams,
    start: &DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<SolverRun, LinearEqError> {
    if system.len() != g.len() {
        return Err(LinearEqError::NodeMismatch { equations: system.len(), nodes: g.len() });
    }
    if start.len() != system.dimension() {
        return Err(LinearEqError::DimensionMismatch {
            expected: system.dimension(),
            found: start.len(),
        });
    }
    let solution = system.solution().ok_or(LinearEqError::Inconsistent)?.clone();
    let m = system.dimension();
    let mut initial = DMatrix::zeros(system.len(), m);
    for i in 0..system.len() {
        initial.row_mut(i).copy_from(&system.equation(i).project(start).transpose());
    }
    let run = run_recursions(
        &initial,
        g,
        gp,
        params,
        Some(&solution),
        None,
        |node, _, state| system.equation(node).project(&state),
        rng,
    )?;
    Ok(run)
}
