//! Private averaging: a gossip stage followed by plain weighted averaging.
//!
//! The gossip stage hides who contributed what; the averaging stage then
//! converges to the network mean of the *original* inputs, because gossip
//! conserved the sum. The run records the full state trajectory, including
//! the slice an eavesdropper on the public graph would see.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::graph::{PrivateGraph, PublicGraph};
use crate::ppsc::{ppsc_step, PpscError, StepEntry, Transcript};
use crate::solver::RunParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("data has {data} entries, graphs have {nodes} nodes")]
    NodeMismatch { data: usize, nodes: usize },
    #[error("public graph has {public} nodes, private graph {private}")]
    GraphMismatch { public: usize, private: usize },
    #[error(transparent)]
    Mechanism(#[from] PpscError),
}

/// One weighted-averaging sweep, written into `dst`:
/// `dst_i = src_i + a·Σ_{j~i}(src_j − src_i)` per coordinate.
pub fn average_step_into(src: &DMatrix<f64>, dst: &mut DMatrix<f64>, g: &PublicGraph) {
    let (n, m) = src.shape();
    let a = g.weight();
    for c in 0..m {
        for i in 0..n {
            let own = src[(i, c)];
            let mut acc = 0.0;
            for &j in g.neighbors(i) {
                acc += src[(j, c)] - own;
            }
            dst[(i, c)] = own + a * acc;
        }
    }
}

/// One weighted-averaging sweep of a per-node state matrix (rows are nodes).
pub fn average_step(x: &DMatrix<f64>, g: &PublicGraph) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    average_step_into(x, &mut out, g);
    out
}

/// Completed averaging run with its full telemetry.
#[derive(Debug, Clone)]
pub struct ConsensusRun {
    /// The private inputs, one per node.
    pub inputs: DVector<f64>,
    /// Mean of the inputs — the value the run is supposed to compute.
    pub target_mean: f64,
    pub gossip_steps: u32,
    pub averaging_rounds: u32,
    /// States after every step: index 0 is the input, indices `1..=S` the
    /// gossip stage, the rest the averaging stage.
    pub trajectory: Vec<DVector<f64>>,
    pub transcript: Transcript,
    /// Whether every node was altered during the gossip stage.
    pub all_nodes_altered: bool,
    /// `‖x_final − target_mean·1‖²`.
    pub final_error_sq: f64,
}

impl ConsensusRun {
    pub fn final_state(&self) -> &DVector<f64> {
        self.trajectory.last().unwrap()
    }

    /// The states actually broadcast over the public graph: the post-gossip
    /// state and every averaging state except the last (which stays local).
    pub fn eavesdropper_view(&self) -> &[DVector<f64>] {
        let s = self.gossip_steps as usize;
        let t = self.averaging_rounds as usize;
        &self.trajectory[s..s + t]
    }

    /// Squared distance to the target mean at every trajectory index.
    pub fn error_curve(&self) -> Vec<f64> {
        self.trajectory
            .iter()
            .map(|x| x.iter().map(|v| (v - self.target_mean).powi(2)).sum())
            .collect()
    }
}

/// Run the full averaging pipeline. `params.recursions` is ignored — this
/// pipeline has a single pass by definition.
pub fn run_consensus(
    data: &DVector<f64>,
    g: &PublicGraph,
    gp: &PrivateGraph,
    params: &RunParams,
    rng: &mut ChaCha12Rng,
) -> Result<ConsensusRun, ConsensusError> {
    if g.len() != gp.len() {
        return Err(ConsensusError::GraphMismatch { public: g.len(), private: gp.len() });
    }
    if data.len() != g.len() {
        return Err(ConsensusError::NodeMismatch { data: data.len(), nodes: g.len() });
    }
    let n = data.len();
    let target_mean = data.sum() / n as f64;

    let mut state = DMatrix::from_fn(n, 1, |i, _| data[i]);
    let mut trajectory = Vec::with_capacity(
        1 + params.gossip_steps as usize + params.averaging_rounds as usize,
    );
    trajectory.push(data.clone());

    let mut entries: Vec<StepEntry> =
        Vec::with_capacity(params.gossip_steps as usize * gp.component_count());
    let mut altered = vec![false; n];
    for step in 1..=params.gossip_steps {
        let step_entries = ppsc_step(&mut state, gp, params.noise_std, step, rng)?;
        for e in &step_entries {
            altered[e.sender] = true;
            altered[e.receiver] = true;
        }
        entries.extend(step_entries);
        trajectory.push(state.column(0).clone_owned());
    }
    let transcript = Transcript {
        nodes: n,
        dimension: 1,
        steps: params.gossip_steps,
        entries,
    };

    let mut scratch = state.clone();
    for _ in 0..params.averaging_rounds {
        average_step_into(&state, &mut scratch, g);
        std::mem::swap(&mut state, &mut scratch);
        trajectory.push(state.column(0).clone_owned());
    }

    let final_error_sq = state
        .column(0)
        .iter()
        .map(|v| (v - target_mean).powi(2))
        .sum();
    Ok(ConsensusRun {
        inputs: data.clone(),
        target_mean,
        gossip_steps: params.gossip_steps,
        averaging_rounds: params.averaging_rounds,
        trajectory,
        transcript,
        all_nodes_altered: altered.iter().all(|&v| v),
        final_error_sq,
    })
}
