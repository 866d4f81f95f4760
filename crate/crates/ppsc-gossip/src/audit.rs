//! After-the-fact privacy accounting.
//!
//! The privacy guarantee of a run rests on two legs that are checkable
//! outside the mechanism itself: the *covering event* — every node altered
//! its state at least once during the gossip stage — and the Gaussian tail
//! bound relating noise scale, mixing floor and budget. This module
//! estimates the covering probability by Monte Carlo against its analytic
//! lower bound, evaluates the tail bound (which is tight at the planner's
//! noise scale by construction), and provides the delta split/recompose pair
//! used when a budget is spread across recursions.

use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::graph::PrivateGraph;
use crate::ppsc::{select_pairs, TranscriptMatrices};
use crate::rng::gaussian_tail;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("need at least one trial")]
    ZeroTrials,
    #[error("need at least one step")]
    ZeroSteps,
}

/// Monte-Carlo estimate of the covering probability at a fixed step count,
/// next to its analytic lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringEstimate {
    pub steps: u32,
    pub trials: u32,
    /// Trials in which every node was altered within `steps` steps.
    pub covered: u32,
    pub empirical: f64,
    /// Binomial standard error of `empirical`.
    pub std_err: f64,
    pub lower_bound: f64,
}

/// Analytic lower bound on the covering probability, clamped to `[0, 1]`
/// (the raw expression goes negative at small step counts, where it is
/// vacuous).
pub fn covering_lower_bound(gp: &PrivateGraph, steps: u32) -> f64 {
    let n_max = gp.max_component_size() as f64;
    let q = gp.component_count() as i32;
    let shrink = 1.0 - (1.0 + gp.degree_balance()) / n_max;
    let per_component = 1.0 - n_max * shrink.max(0.0).powi(steps as i32);
    if per_component <= 0.0 {
        0.0
    } else {
        per_component.powi(q).min(1.0)
    }
}

fn binomial_std_err(p: f64, trials: u32) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Simulate `trials` runs of `steps` pair selections and report how often
/// every node changed state. Alteration is structural — a node counts as
/// altered when it appears in a selected pair — so no noise is drawn.
pub fn estimate_covering(
    gp: &PrivateGraph,
    steps: u32,
    trials: u32,
    rng: &mut ChaCha12Rng,
) -> Result<CoveringEstimate, AuditError> {
    if trials == 0 {
        return Err(AuditError::ZeroTrials);
    }
    if steps == 0 {
        return Err(AuditError::ZeroSteps);
    }
    let n = gp.len();
    let mut covered = 0u32;
    let mut altered = vec![false; n];
    for _ in 0..trials {
        altered.fill(false);
        let mut remaining = n;
        'steps: for _ in 0..steps {
            for (s, r) in select_pairs(gp, rng) {
                for node in [s, r] {
                    if !altered[node] {
                        altered[node] = true;
                        remaining -= 1;
                    }
                }
            }
            if remaining == 0 {
                covered += 1;
                break 'steps;
            }
        }
    }
    let empirical = covered as f64 / trials as f64;
    Ok(CoveringEstimate {
        steps,
        trials,
        covered,
        empirical,
        std_err: binomial_std_err(empirical, trials),
        lower_bound: covering_lower_bound(gp, steps),
    })
}

/// Covering estimates for every step count `1..=max_steps` from a single
/// batch of trials. Each trial records its first-cover time, so the
/// resulting empirical curve is monotone by construction.
pub fn covering_curve(
    gp: &PrivateGraph,
    max_steps: u32,
    trials: u32,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<CoveringEstimate>, AuditError> {
    if trials == 0 {
        return Err(AuditError::ZeroTrials);
    }
    if max_steps == 0 {
        return Err(AuditError::ZeroSteps);
    }
    let n = gp.len();
    // first_cover[s] = number of trials whose cover time is exactly s+1.
    let mut first_cover = vec![0u32; max_steps as usize];
    let mut altered = vec![false; n];
    for _ in 0..trials {
        altered.fill(false);
        let mut remaining = n;
        for step in 1..=max_steps {
            for (s, r) in select_pairs(gp, rng) {
                for node in [s, r] {
                    if !altered[node] {
                        altered[node] = true;
                        remaining -= 1;
                    }
                }
            }
            if remaining == 0 {
                first_cover[step as usize - 1] += 1;
                break;
            }
        }
    }
    let mut covered = 0u32;
    let mut curve = Vec::with_capacity(max_steps as usize);
    for steps in 1..=max_steps {
        covered += first_cover[steps as usize - 1];
        let empirical = covered as f64 / trials as f64;
        curve.push(CoveringEstimate {
            steps,
            trials,
            covered,
            empirical,
            std_err: binomial_std_err(empirical, trials),
            lower_bound: covering_lower_bound(gp, steps),
        });
    }
    Ok(curve)
}

/// The delta implied by the Gaussian tail bound for a given budget epsilon,
/// noise scale, mixing floor and adjacency radius:
/// `Q(ε·σ·λ/μ − μ/(2σλ))`. At the planner's noise scale this is exactly the
/// budgeted delta — the bound is tight, not slack.
pub fn dp_delta_bound(
    epsilon: f64,
    noise_std: f64,
    mixing_floor: f64,
    adjacency_radius: f64,
) -> f64 {
    let reach = noise_std * mixing_floor / adjacency_radius;
    gaussian_tail(epsilon * reach - 0.5 / reach)
}

/// One evaluated tail bound with its inputs, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct DpBoundReport {
    pub epsilon: f64,
    pub noise_std: f64,
    pub mixing_floor: f64,
    pub adjacency_radius: f64,
    pub delta_required: f64,
}

pub fn dp_report(
    epsilon: f64,
    noise_std: f64,
    mixing_floor: f64,
    adjacency_radius: f64,
) -> DpBoundReport {
    DpBoundReport {
        epsilon,
        noise_std,
        mixing_floor,
        adjacency_radius,
        delta_required: dp_delta_bound(epsilon, noise_std, mixing_floor, adjacency_radius),
    }
}

/// Tail bound against the realized transcript rather than the graph-level
/// floor: uses the smallest nonzero singular value of this transcript's
/// noise-mixing matrix, which is never below the worst-case floor.
pub fn transcript_dp_report(
    epsilon: f64,
    noise_std: f64,
    matrices: &TranscriptMatrices,
    adjacency_radius: f64,
) -> DpBoundReport {
    dp_report(
        epsilon,
        noise_std,
        matrices.min_nonzero_singular_value(),
        adjacency_radius,
    )
}

/// Split a run-level `(epsilon, delta)` across `recursions` equal pieces:
/// each recursion spends `epsilon / recursions` and the delta returned here.
/// Evaluated in log space; the naive power form loses most of its digits
/// when delta is small and the recursion count is large.
pub fn per_recursion_delta(epsilon: f64, delta: f64, recursions: u32) -> f64 {
    let l = recursions as f64;
    (epsilon / l).exp() * f64::exp_m1(f64::ln_1p(delta * (-epsilon).exp()) / l)
}

/// Inverse of [`per_recursion_delta`]: the run-level delta that `recursions`
/// compositions of the per-recursion budget amount to.
pub fn compose_delta(epsilon: f64, per_delta: f64, recursions: u32) -> f64 {
    let l = recursions as f64;
    epsilon.exp() * f64::exp_m1(l * f64::ln_1p(per_delta * (-(epsilon / l)).exp()))
}
