//! The shared recursion loop behind the equation solver and the optimizer.
//!
//! Both solvers repeat the same skeleton: a gossip stage that hides the
//! current states, an averaging stage that approximately synchronizes them,
//! and one task-specific local step per node (a projection, a projected
//! gradient step, …). Only the local step differs, so it is a closure here.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::consensus::average_step_into;
use crate::graph::{PrivateGraph, PublicGraph};
use crate::planner::Plan;
use crate::ppsc::{ppsc_step, PpscError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("gossip steps, averaging rounds and recursions must all be at least one")]
    DegenerateParams,
    #[error("noise standard deviation must be non-negative and finite, got {0}")]
    BadNoiseStd(f64),
    #[error("state has {rows} rows but the graphs have {nodes} nodes")]
    NodeMismatch { rows: usize, nodes: usize },
    #[error("public graph has {public} nodes, private graph {private}")]
    GraphMismatch { public: usize, private: usize },
    #[error("local step returned dimension {found}, state has {expected}")]
    LocalStepDimension { expected: usize, found: usize },
    #[error(transparent)]
    Mechanism(#[from] PpscError),
}

/// Integer run parameters plus the noise scale — the subset of a plan a run
/// actually consumes. Construct directly for ad-hoc runs or convert from a
/// [`Plan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    pub gossip_steps: u32,
    pub noise_std: f64,
    pub averaging_rounds: u32,
    pub recursions: u32,
}

impl RunParams {
    pub fn new(
        gossip_steps: u32,
        noise_std: f64,
        averaging_rounds: u32,
        recursions: u32,
    ) -> Result<Self, SolverError> {
        if gossip_steps == 0 || averaging_rounds == 0 || recursions == 0 {
            return Err(SolverError::DegenerateParams);
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(SolverError::BadNoiseStd(noise_std));
        }
        Ok(RunParams { gossip_steps, noise_std, averaging_rounds, recursions })
    }
}

impl From<&Plan> for RunParams {
    fn from(plan: &Plan) -> Self {
        RunParams {
            gossip_steps: plan.gossip_steps,
            noise_std: plan.noise_std,
            averaging_rounds: plan.averaging_rounds,
            recursions: plan.recursions,
        }
    }
}

/// Telemetry of one recursion.
#[derive(Debug, Clone)]
pub struct RecursionRecord {
    /// 1-based recursion index.
    pub recursion: u32,
    /// Whether every node was altered during this recursion's gossip stage.
    pub covered: bool,
    /// Norm of the disagreement left after the averaging stage (distance of
    /// the state matrix from the rank-one matrix of its column means).
    pub residual_norm: f64,
    /// Network mean of the node states after the local step.
    pub mean_state: DVector<f64>,
    /// `‖state − 1⊗reference‖²` after the local step, when a reference point
    /// was supplied.
    pub error_sq: Option<f64>,
    /// Scalar diagnostic evaluated at `mean_state` (e.g. an objective
    /// value), when a probe was supplied.
    pub probe: Option<f64>,
}

/// A finished multi-recursion run.
#[derive(Debug, Clone)]
pub struct SolverRun {
    /// Final per-node states, one row per node.
    pub final_state: DMatrix<f64>,
    pub records: Vec<RecursionRecord>,
    /// Whether every single recursion's gossip stage covered all nodes.
    pub all_covered: bool,
}

impl SolverRun {
    pub fn node_state(&self, node: usize) -> DVector<f64> {
        self.final_state.row(node).transpose()
    }

    /// `‖final − 1⊗reference‖²`.
    pub fn final_error_sq(&self, reference: &DVector<f64>) -> f64 {
        stacked_error_sq(&self.final_state, reference)
    }

    /// Largest single-node distance to the reference.
    pub fn max_node_distance(&self, reference: &DVector<f64>) -> f64 {
        (0..self.final_state.nrows())
            .map(|i| (self.node_state(i) - reference).norm())
            .fold(0.0, f64::max)
    }
}

fn stacked_error_sq(state: &DMatrix<f64>, reference: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..state.nrows() {
        for c in 0..state.ncols() {
            total += (state[(i, c)] - reference[c]).powi(2);
        }
    }
    total
}

fn column_means(state: &DMatrix<f64>) -> DVector<f64> {
    let n = state.nrows() as f64;
    DVector::from_fn(state.ncols(), |c, _| state.column(c).sum() / n)
}

/// Run `params.recursions` rounds of gossip → averaging → local step.
///
/// `local_step(node, recursion, state)` returns the node's next state;
/// `reference` enables the per-recursion squared-error telemetry; `probe`
/// is evaluated at each recursion's mean state.
pub fn run_recursions(
    initial: &DMatrix<f64>,
    g: &PublicGraph,
    gp: &PrivateGraph,
    params: &RunParams,
    reference: Option<&DVector<f64>>,
    probe: Option<&dyn Fn(&DVector<f64>) -> f64>,
    mut local_step: impl FnMut(usize, u32, DVector<f64>) -> DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<SolverRun, SolverError> {
    if g.len() != gp.len() {
        return Err(SolverError::GraphMismatch { public: g.len(), private: gp.len() });
    }
    let (n, m) = initial.shape();
    if n != g.len() {
        return Err(SolverError::NodeMismatch { rows: n, nodes: g.len() });
    }
    if let Some(r) = reference {
        if r.len() != m {
            return Err(SolverError::LocalStepDimension { expected: m, found: r.len() });
        }
    }

    let mut state = initial.clone();
    let mut scratch = state.clone();
    let mut altered = vec![false; n];
    let mut records = Vec::with_capacity(params.recursions as usize);
    let mut all_covered = true;

    for recursion in 1..=params.recursions {
        altered.fill(false);
        for step in 1..=params.gossip_steps {
            for e in ppsc_step(&mut state, gp, params.noise_std, step, rng)? {
                altered[e.sender] = true;
                altered[e.receiver] = true;
            }
        }
        let covered = altered.iter().all(|&v| v);
        all_covered &= covered;

        for _ in 0..params.averaging_rounds {
            average_step_into(&state, &mut scratch, g);
            std::mem::swap(&mut state, &mut scratch);
        }

        let means = column_means(&state);
        let residual_norm = stacked_error_sq(&state, &means).sqrt();

        for i in 0..n {
            let next = local_step(i, recursion, state.row(i).transpose());
            if next.len() != m {
                return Err(SolverError::LocalStepDimension { expected: m, found: next.len() });
            }
            state.row_mut(i).copy_from(&next.transpose());
        }

        let mean_state = column_means(&state);
        records.push(RecursionRecord {
            recursion,
            covered,
            residual_norm,
            probe: probe.map(|f| f(&mean_state)),
            error_sq: reference.map(|r| stacked_error_sq(&state, r)),
            mean_state,
        });
    }

    Ok(SolverRun { final_state: state, records, all_covered })
}
