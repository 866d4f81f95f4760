//! The summation-consistent shuffle at the heart of the crate.
//!
//! Each gossip step picks, independently in every private component, a sender
//! uniformly among the component's nodes and a receiver uniformly among the
//! sender's neighbors. The sender hands over its entire state minus a fresh
//! Gaussian blind `γ`, then keeps `γ` as its new state:
//!
//! ```text
//! ω        = β_sender − γ          (the message on the wire)
//! sender   ← γ
//! receiver ← β_receiver + ω
//! ```
//!
//! Per-coordinate sums are conserved exactly, whatever the noise, so a later
//! averaging stage still converges to the true mean. The whole run is an
//! affine map of the inputs and noises: collecting the per-step column
//! operations yields a flow matrix `C` and a noise-mixing matrix `D` with
//! `out = C·in + D·γ`, `1ᵀC = 1ᵀ` and `1ᵀD = 0`. The smallest nonzero
//! singular value of `D`, minimized over edge sequences, is the mixing floor
//! that calibrates how much noise a privacy budget requires.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::graph::PrivateGraph;
use crate::rng::sample_scaled;

/// Exact enumeration of edge sequences is attempted when their count is at
/// most this.
pub const ENUMERATION_LIMIT: u128 = 100_000;

/// Sample count for the Monte Carlo mixing-floor fallback.
pub const DEFAULT_MC_SAMPLES: u32 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpscError {
    #[error("gossip needs at least one step")]
    ZeroSteps,
    #[error("state dimension must be at least one")]
    ZeroDimension,
    #[error("noise standard deviation must be non-negative and finite, got {0}")]
    BadNoiseStd(f64),
    #[error("state has {rows} rows but the private graph has {nodes} nodes")]
    StateSizeMismatch { rows: usize, nodes: usize },
    #[error("malformed transcript: {0}")]
    Malformed(String),
    #[error(
        "exact enumeration of {count} edge sequences exceeds the limit {limit}; \
         use the Monte Carlo mode"
    )]
    EnumerationTooLarge { count: u128, limit: u128 },
}

/// Static parameters of one gossip run.
#[derive(Debug, Clone, PartialEq)]
pub struct PpscConfig {
    steps: u32,
    noise_std: f64,
    dimension: usize,
}

impl PpscConfig {
    pub fn new(steps: u32, noise_std: f64, dimension: usize) -> Result<Self, PpscError> {
        if steps == 0 {
            return Err(PpscError::ZeroSteps);
        }
        if dimension == 0 {
            return Err(PpscError::ZeroDimension);
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(PpscError::BadNoiseStd(noise_std));
        }
        Ok(PpscConfig { steps, noise_std, dimension })
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// One recorded exchange: which component moved state where, and with which
/// blind. `message` is what actually crossed the wire; parsed transcripts
/// don't carry it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEntry {
    pub step: u32,
    pub component: usize,
    pub sender: usize,
    pub receiver: usize,
    pub noise: DVector<f64>,
    pub message: Option<DVector<f64>>,
}

/// Full record of a gossip run. This is exactly what a curious observer of
/// the wire could write down (edges and messages), plus the noises needed to
/// audit the mechanism offline.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub nodes: usize,
    pub dimension: usize,
    pub steps: u32,
    pub entries: Vec<StepEntry>,
}

impl Transcript {
    /// Line-oriented text form: a header, then one line per exchange with
    /// `step component sender receiver` followed by the noise coordinates.
    /// Floats print in shortest round-trip form, so parse ∘ render is exact.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "transcript nodes={} dim={} steps={}\n",
            self.nodes, self.dimension, self.steps
        );
        for e in &self.entries {
            out.push_str(&format!("{} {} {} {}", e.step, e.component, e.sender, e.receiver));
            for v in e.noise.iter() {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PpscError> {
        let bad = |msg: &str| PpscError::Malformed(msg.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let mut nodes = None;
        let mut dim = None;
        let mut steps = None;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("transcript") {
            return Err(bad("missing 'transcript' header"));
        }
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad("header fields must be key=value"))?;
            let parsed: u64 = value
                .parse()
                .map_err(|_| bad(&format!("bad header value in '{field}'")))?;
            match key {
                "nodes" => nodes = Some(parsed as usize),
                "dim" => dim = Some(parsed as usize),
                "steps" => steps = Some(parsed as u32),
                other => return Err(bad(&format!("unknown header key '{other}'"))),
            }
        }
        let nodes = nodes.ok_or_else(|| bad("header lacks nodes="))?;
        let dimension = dim.ok_or_else(|| bad("header lacks dim="))?;
        let steps = steps.ok_or_else(|| bad("header lacks steps="))?;

        let mut entries = Vec::new();
        for line in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 4 + dimension {
                return Err(bad(&format!(
                    "expected {} fields per entry, got {}",
                    4 + dimension,
                    tok.len()
                )));
            }
            let step: u32 = tok[0].parse().map_err(|_| bad("bad step index"))?;
            let component: usize = tok[1].parse().map_err(|_| bad("bad component index"))?;
            let sender: usize = tok[2].parse().map_err(|_| bad("bad sender index"))?;
            let receiver: usize = tok[3].parse().map_err(|_| bad("bad receiver index"))?;
            let mut noise = Vec::with_capacity(dimension);
            for t in &tok[4..] {
                noise.push(t.parse::<f64>().map_err(|_| bad("bad noise value"))?);
            }
            entries.push(StepEntry {
                step,
                component,
                sender,
                receiver,
                noise: DVector::from_vec(noise),
                message: None,
            });
        }
        Ok(Transcript { nodes, dimension, steps, entries })
    }
}

/// Pick one `(sender, receiver)` pair per component: sender uniform in the
/// component, receiver uniform among the sender's private neighbors.
pub fn select_pairs(gp: &PrivateGraph, rng: &mut ChaCha12Rng) -> Vec<(usize, usize)> {
    gp.components()
        .iter()
        .map(|comp| {
            let sender = comp[rng.random_range(0..comp.len())];
            let nbrs = gp.neighbors(sender);
            let receiver = nbrs[rng.random_range(0..nbrs.len())];
            (sender, receiver)
        })
        .collect()
}

/// Apply one exchange to a state matrix (rows are node states) and return the
/// message `ω = β_sender − γ`.
pub fn gossip_exchange(
    state: &mut DMatrix<f64>,
    sender: usize,
    receiver: usize,
    noise: &DVector<f64>,
) -> DVector<f64> {
    let m = state.ncols();
    let mut message = DVector::zeros(m);
    for c in 0..m {
        let omega = state[(sender, c)] - noise[c];
        message[c] = omega;
        state[(receiver, c)] += omega;
        state[(sender, c)] = noise[c];
    }
    message
}

/// One synchronous gossip step across all components. Returns the recorded
/// entries (components in ascending order).
pub fn ppsc_step(
    state: &mut DMatrix<f64>,
    gp: &PrivateGraph,
    noise_std: f64,
    step: u32,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<StepEntry>, PpscError> {
    if state.nrows() != gp.len() {
        return Err(PpscError::StateSizeMismatch { rows: state.nrows(), nodes: gp.len() });
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(PpscError::BadNoiseStd(noise_std));
    }
    let m = state.ncols();
    let pairs = select_pairs(gp, rng);
    let mut entries = Vec::with_capacity(pairs.len());
    for (component, (sender, receiver)) in pairs.into_iter().enumerate() {
        let noise = DVector::from_fn(m, |_, _| sample_scaled(rng, noise_std));
        let message = gossip_exchange(state, sender, receiver, &noise);
        entries.push(StepEntry {
            step,
            component,
            sender,
            receiver,
            noise,
            message: Some(message),
        });
    }
    Ok(entries)
}

/// Run the full mechanism for `config.steps()` steps and return the final
/// state together with its transcript.
pub fn run_ppsc(
    initial: &DMatrix<f64>,
    gp: &PrivateGraph,
    config: &PpscConfig,
    rng: &mut ChaCha12Rng,
) -> Result<(DMatrix<f64>, Transcript), PpscError> {
    if initial.nrows() != gp.len() {
        return Err(PpscError::StateSizeMismatch {
            rows: initial.nrows(),
            nodes: gp.len(),
        });
    }
    if initial.ncols() != config.dimension() {
        return Err(PpscError::ZeroDimension);
    }
    let mut state = initial.clone();
    let mut entries = Vec::with_capacity(config.steps() as usize * gp.component_count());
    for step in 1..=config.steps() {
        entries.extend(ppsc_step(&mut state, gp, config.noise_std(), step, rng)?);
    }
    let transcript = Transcript {
        nodes: gp.len(),
        dimension: config.dimension(),
        steps: config.steps(),
        entries,
    };
    Ok((state, transcript))
}

/// The affine-map view of one transcript: `out = flow·in + noise_mix·γ`.
///
/// `flow` is `n×n` with basis-vector columns; `noise_mix` is `n×(q·S)` with
/// entries in `{−1, 0, 1}`, its columns laid out component-major (component
/// `k`'s step `t` lands in column `k·S + t − 1`). Noise rows stack the same
/// way, one row per (component, step), each row a `γᵀ`.
#[derive(Debug, Clone)]
pub struct TranscriptMatrices {
    pub flow: DMatrix<f64>,
    pub noise_mix: DMatrix<f64>,
}

impl TranscriptMatrices {
    /// Replay the transcript on an arbitrary input.
    pub fn replay(&self, initial: &DMatrix<f64>, noises: &DMatrix<f64>) -> DMatrix<f64> {
        &self.flow * initial + &self.noise_mix * noises
    }

    /// Smallest nonzero singular value of the noise-mixing matrix — the
    /// per-transcript mixing floor.
    pub fn min_nonzero_singular_value(&self) -> f64 {
        min_nonzero_singular(&self.noise_mix)
    }
}

/// Stack the transcript's noises into the `(q·S)×m` matrix matching the
/// column layout of [`TranscriptMatrices::noise_mix`].
pub fn stacked_noises(t: &Transcript, gp: &PrivateGraph) -> DMatrix<f64> {
    let s = t.steps as usize;
    let mut out = DMatrix::zeros(gp.component_count() * s, t.dimension);
    for e in &t.entries {
        let row = e.component * s + (e.step as usize - 1);
        for c in 0..t.dimension {
            out[(row, c)] = e.noise[c];
        }
    }
    out
}

/// Build the flow and noise-mixing matrices of a transcript, validating it
/// against the private graph it claims to come from.
pub fn transcript_matrices(
    t: &Transcript,
    gp: &PrivateGraph,
) -> Result<TranscriptMatrices, PpscError> {
    let malformed = |msg: String| PpscError::Malformed(msg);
    if t.nodes != gp.len() {
        return Err(malformed(format!(
            "transcript is over {} nodes, graph has {}",
            t.nodes,
            gp.len()
        )));
    }
    let q = gp.component_count();
    let s = t.steps as usize;
    if t.entries.len() != q * s {
        return Err(malformed(format!(
            "expected {} entries ({} components × {} steps), got {}",
            q * s,
            q,
            s,
            t.entries.len()
        )));
    }
    let mut seen = vec![false; q * s];
    for e in &t.entries {
        if e.step == 0 || e.step > t.steps {
            return Err(malformed(format!("step {} out of range", e.step)));
        }
        if e.sender >= t.nodes || e.receiver >= t.nodes || e.sender == e.receiver {
            return Err(malformed(format!(
                "invalid pair ({}, {}) at step {}",
                e.sender, e.receiver, e.step
            )));
        }
        if !gp.neighbors(e.sender).contains(&e.receiver) {
            return Err(malformed(format!(
                "({}, {}) is not a private edge",
                e.sender, e.receiver
            )));
        }
        if gp.component_of(e.sender) != e.component {
            return Err(malformed(format!(
                "sender {} is not in component {}",
                e.sender, e.component
            )));
        }
        if e.noise.len() != t.dimension {
            return Err(malformed(format!(
                "noise has dimension {}, transcript says {}",
                e.noise.len(),
                t.dimension
            )));
        }
        let slot = e.component * s + (e.step as usize - 1);
        if seen[slot] {
            return Err(malformed(format!(
                "duplicate entry for component {} step {}",
                e.component, e.step
            )));
        }
        seen[slot] = true;
    }
    if seen.iter().any(|&v| !v) {
        return Err(malformed("missing entries for some (component, step)".into()));
    }

    // Entries in step order, components within a step in any order — the row
    // operations of distinct components commute (disjoint rows).
    let mut ordered: Vec<&StepEntry> = t.entries.iter().collect();
    ordered.sort_by_key(|e| (e.step, e.component));

    let n = t.nodes;
    let mut flow = DMatrix::<f64>::identity(n, n);
    let mut noise_mix = DMatrix::<f64>::zeros(n, q * s);
    for e in ordered {
        // Sender's accumulated content moves to the receiver...
        for j in 0..n {
            let moved = flow[(e.sender, j)];
            flow[(e.receiver, j)] += moved;
            flow[(e.sender, j)] = 0.0;
        }
        for c in 0..(q * s) {
            let moved = noise_mix[(e.sender, c)];
            noise_mix[(e.receiver, c)] += moved;
            noise_mix[(e.sender, c)] = 0.0;
        }
        // ...and the fresh blind lands +1 on the sender, −1 on the receiver.
        let col = e.component * s + (e.step as usize - 1);
        noise_mix[(e.sender, col)] = 1.0;
        noise_mix[(e.receiver, col)] = -1.0;
    }
    Ok(TranscriptMatrices { flow, noise_mix })
}

/// Smallest singular value above a relative rank cutoff; zero only for an
/// all-zero matrix.
fn min_nonzero_singular(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let cutoff = 1e-9 * max.max(1.0);
    sv.iter()
        .copied()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min)
}

/// How to evaluate the mixing floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingMode {
    /// Enumerate when the sequence count allows it, otherwise fall back to
    /// Monte Carlo with [`DEFAULT_MC_SAMPLES`].
    Auto,
    /// Enumerate all edge sequences; error out above [`ENUMERATION_LIMIT`].
    Exact,
    /// Sample this many random edge sequences. Not conservative: the true
    /// floor may be smaller than the sampled minimum.
    MonteCarlo(u32),
}

/// The evaluated mixing floor `λ`: the minimum over edge sequences of the
/// smallest nonzero singular value of the noise-mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingFloor {
    pub value: f64,
    /// Total number of edge sequences (product over components), saturating.
    pub sequence_count: u128,
    /// True when the value came from full enumeration and therefore is the
    /// exact minimum; a sampled value is only an upper estimate.
    pub exact: bool,
    pub samples: u32,
}

/// Joint edge-sequence count `∏_k pairs_k^S`, saturating at `u128::MAX`.
fn sequence_count(gp: &PrivateGraph, steps: u32) -> u128 {
    let mut total: u128 = 1;
    for pairs in gp.oriented_pair_counts() {
        let per = (pairs as u128).checked_pow(steps).unwrap_or(u128::MAX);
        total = total.checked_mul(per).unwrap_or(u128::MAX);
    }
    total
}

/// Evaluate the mixing floor for `steps` gossip steps on `gp`.
///
/// The minimum over joint sequences decomposes into a minimum over
/// components (nonzero singular values of a block-diagonal matrix are the
/// union over blocks), so exact mode enumerates each component separately
/// even though the feasibility gate counts the joint space.
pub fn mixing_floor(
    gp: &PrivateGraph,
    steps: u32,
    mode: MixingMode,
    rng: &mut ChaCha12Rng,
) -> Result<MixingFloor, PpscError> {
    if steps == 0 {
        return Err(PpscError::ZeroSteps);
    }
    let count = sequence_count(gp, steps);
    let exact_feasible = count <= ENUMERATION_LIMIT;
    match mode {
        MixingMode::Exact if !exact_feasible => Err(PpscError::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        }),
        MixingMode::Exact => Ok(MixingFloor {
            value: exact_floor(gp, steps),
            sequence_count: count,
            exact: true,
            samples: 0,
        }),
        MixingMode::Auto if exact_feasible => Ok(MixingFloor {
            value: exact_floor(gp, steps),
            sequence_count: count,
            exact: true,
            samples: 0,
        }),
        MixingMode::Auto => Ok(sampled_floor(gp, steps, DEFAULT_MC_SAMPLES, count, rng)),
        MixingMode::MonteCarlo(samples) => Ok(sampled_floor(gp, steps, samples, count, rng)),
    }
}

/// Noise-mixing block of a single component for one concrete edge sequence,
/// with rows indexed component-locally.
fn component_noise_block(
    comp_index: &[usize],
    seq: &[(usize, usize)],
) -> DMatrix<f64> {
    let nk = comp_index.len();
    let s = seq.len();
    let mut d = DMatrix::<f64>::zeros(nk, s);
    for (t, &(sender, receiver)) in seq.iter().enumerate() {
        let (si, ri) = (
            comp_index.binary_search(&sender).unwrap(),
            comp_index.binary_search(&receiver).unwrap(),
        );
        for c in 0..t {
            let moved = d[(si, c)];
            d[(ri, c)] += moved;
            d[(si, c)] = 0.0;
        }
        d[(si, t)] = 1.0;
        d[(ri, t)] = -1.0;
    }
    d
}

fn exact_floor(gp: &PrivateGraph, steps: u32) -> f64 {
    let s = steps as usize;
    let mut overall = f64::INFINITY;
    for comp in gp.components() {
        let mut pairs = Vec::new();
        for &i in comp {
            for &j in gp.neighbors(i) {
                pairs.push((i, j));
            }
        }
        // Odometer over all `pairs.len()^s` sequences of this component.
        let mut idx = vec![0usize; s];
        loop {
            let seq: Vec<(usize, usize)> = idx.iter().map(|&k| pairs[k]).collect();
            let d = component_noise_block(comp, &seq);
            overall = overall.min(min_nonzero_singular(&d));
            let mut pos = 0;
            loop {
                if pos == s {
                    break;
                }
                idx[pos] += 1;
                if idx[pos] < pairs.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == s {
                break;
            }
        }
    }
    overall
}

fn sampled_floor(
    gp: &PrivateGraph,
    steps: u32,
    samples: u32,
    count: u128,
    rng: &mut ChaCha12Rng,
) -> MixingFloor {
    let s = steps as usize;
    let mut overall = f64::INFINITY;
    for _ in 0..samples {
        for comp in gp.components() {
            let seq: Vec<(usize, usize)> = (0..s)
                .map(|_| {
                    let sender = comp[rng.random_range(0..comp.len())];
                    let nbrs = gp.neighbors(sender);
                    (sender, nbrs[rng.random_range(0..nbrs.len())])
                })
                .collect();
            let d = component_noise_block(comp, &seq);
            overall = overall.min(min_nonzero_singular(&d));
        }
    }
    MixingFloor {
        value: overall,
        sequence_count: count,
        exact: false,
        samples,
    }
}
