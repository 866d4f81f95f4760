//! Experiment configuration: one TOML schema shared by every subcommand.
//!
//! The file declares the two graphs, the privacy/accuracy budget, one task,
//! and optional knobs (seed, trials, output path, manual parameter
//! overrides, sweep grids). Unknown keys are rejected; semantic errors name
//! the offending key. Command-line flags override the corresponding file
//! entries.
//!
//! ```toml
//! seed = 7
//! trials = 200
//!
//! [public]
//! nodes = 10
//! weight = 0.1
//! shape = "cycle"            # or: edges = [[0, 1], [1, 2], ...]
//!
//! [private]
//! edges = [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]]
//!
//! [budget]
//! adjacency_radius = 1.0
//! epsilon = 0.001
//! delta = 1e-6
//! covering_confidence = 0.99
//! accuracy = 0.01
//! # success_probability = 0.9   # required by optimization planning
//!
//! [task]
//! kind = "average"           # average | equations |
//!                            # quadratic-optimization | logistic-classification
//! data = [10, 100, 20, -30, -20, 60, 70, 0, 80, -20]
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Deserialize;

use crate::graph::{PrivateGraph, PublicGraph};
use crate::linear_eq::EquationSystem;
use crate::optim::{ConvexSet, ObjectiveFamily};
use crate::planner::{Budget, Plan, PlannerError, DEFAULT_ERROR_SPLIT};
use crate::rng::Seed;
use crate::solver::RunParams;

use super::HarnessError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trials: Option<u32>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub public: PublicGraphConfig,
    pub private: PrivateGraphConfig,
    pub budget: BudgetConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub experiment: SweepConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicGraphConfig {
    pub nodes: usize,
    pub weight: f64,
    #[serde(default)]
    pub shape: Option<GraphShape>,
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphShape {
    Cycle,
    Complete,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivateGraphConfig {
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub adjacency_radius: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub covering_confidence: f64,
    pub accuracy: f64,
    #[serde(default)]
    pub success_probability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Average,
    Equations,
    QuadraticOptimization,
    LogisticClassification,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Average => "average",
            TaskKind::Equations => "equations",
            TaskKind::QuadraticOptimization => "quadratic-optimization",
            TaskKind::LogisticClassification => "logistic-classification",
        }
    }
}

/// The task table. `kind` selects which of the remaining fields apply;
/// fields that don't belong to the selected kind are rejected by name.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// `average`: the per-node scalar inputs.
    #[serde(default)]
    pub data: Option<Vec<f64>>,
    /// `equations`: path to a system file (one equation per line,
    /// coefficients then right-hand side), resolved relative to the config.
    #[serde(default)]
    pub system_file: Option<PathBuf>,
    /// `equations`: the same format inline.
    #[serde(default)]
    pub system: Option<String>,
    /// `equations` / optimization kinds: common start point (defaults to
    /// the origin).
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    /// `quadratic-optimization`: one center per node.
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    /// Optimization kinds: the feasible set (defaults to the unit ball).
    #[serde(default)]
    pub set: Option<SetConfig>,
    /// Optimization kinds: recursion count (the accuracy theorems leave it
    /// existential, so it is chosen here, typically by doubling until the
    /// accuracy test passes).
    #[serde(default)]
    pub recursions: Option<u32>,
    /// `logistic-classification`: ℓ² penalty weight (default 1).
    #[serde(default)]
    pub regularization: Option<f64>,
    /// `logistic-classification`: synthetic two-blob dataset parameters.
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// `logistic-classification`: use MNIST IDX files instead of the
    /// synthetic generator.
    #[serde(default)]
    pub mnist: Option<MnistConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetConfig {
    UnitBall,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "default_train_per_agent")]
    pub train_per_agent: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_per_agent: default_train_per_agent(),
            test_samples: default_test_samples(),
            dimension: default_dimension(),
            separation: default_separation(),
        }
    }
}

fn default_train_per_agent() -> usize {
    50
}
fn default_test_samples() -> usize {
    400
}
fn default_dimension() -> usize {
    5
}
fn default_separation() -> f64 {
    3.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(default = "default_positive_digits")]
    pub positive_digits: Vec<u8>,
    #[serde(default = "default_train_subsample")]
    pub train_subsample: usize,
    #[serde(default = "default_test_subsample")]
    pub test_subsample: usize,
}

fn default_positive_digits() -> Vec<u8> {
    vec![0]
}
fn default_train_subsample() -> usize {
    6000
}
fn default_test_subsample() -> usize {
    1000
}

/// Manual parameter overrides. Values that loosen a planner bound (fewer
/// gossip steps or rounds or recursions, less noise) are rejected unless
/// `--force` acknowledges them, and forced rows are flagged in the CSV.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    pub gossip_steps: Option<u32>,
    pub averaging_rounds: Option<u32>,
    pub recursions: Option<u32>,
    pub noise_std: Option<f64>,
    pub error_split: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.gossip_steps.is_none()
            && self.averaging_rounds.is_none()
            && self.recursions.is_none()
            && self.noise_std.is_none()
            && self.error_split.is_none()
    }
}

/// Grid axes for the `experiment` subcommands; defaults mirror the case
/// studies.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub epsilons: Option<Vec<f64>>,
    pub accuracies: Option<Vec<f64>>,
}

pub const DEFAULT_EPSILON_GRID: [f64; 3] = [1e-3, 1e-2, 1e-1];
pub const DEFAULT_ACCURACY_GRID: [f64; 3] = [1.0, 0.1, 0.01];

impl SweepConfig {
    pub fn epsilon_grid(&self) -> Vec<f64> {
        self.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILON_GRID.to_vec())
    }

    pub fn accuracy_grid(&self) -> Vec<f64> {
        self.accuracies.clone().unwrap_or_else(|| DEFAULT_ACCURACY_GRID.to_vec())
    }
}

impl ExperimentConfig {
    /// Read and parse a config file. The second return value is the
    /// directory the file lives in, for resolving relative paths inside it.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| HarnessError::Config {
                path: path.to_path_buf(),
                message: e.message().to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((config, base))
    }
}

/// Flag values the command line may override.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub trials: Option<u32>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

/// Quadratic-optimization task, fully constructed.
#[derive(Debug)]
pub struct QuadraticTask {
    pub family: ObjectiveFamily,
    pub set: ConvexSet,
    pub start: DVector<f64>,
    pub recursions: u32,
    /// The constrained minimizer — the feasible projection of the centers'
    /// mean.
    pub optimum: DVector<f64>,
}

/// Logistic-classification task settings; the dataset itself is built by
/// the experiment (it may need randomness or file access).
#[derive(Debug)]
pub struct LogisticSettings {
    pub regularization: f64,
    pub recursions: u32,
    pub synthetic: SyntheticConfig,
    pub mnist: Option<MnistConfig>,
}

/// A validated configuration: graphs and budget constructed, precedence
/// between file and command line applied.
#[derive(Debug)]
pub struct Resolved {
    pub public: PublicGraph,
    pub private: PrivateGraph,
    pub budget: Budget,
    pub task: TaskConfig,
    pub overrides: Overrides,
    pub sweep: SweepConfig,
    pub seed: Seed,
    pub trials: u32,
    pub out: Option<PathBuf>,
    pub force: bool,
    base_dir: PathBuf,
}

fn invalid(key: &str, message: impl std::fmt::Display) -> HarnessError {
    HarnessError::Invalid { key: key.to_string(), message: message.to_string() }
}

impl Resolved {
    pub fn new(
        config: ExperimentConfig,
        base_dir: PathBuf,
        cli: &CliOverrides,
    ) -> Result<Self, HarnessError> {
        let trials = cli.trials.or(config.trials).unwrap_or(100);
        if trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }

        let g = &config.public;
        let public = match (g.shape, &g.edges) {
            (Some(_), Some(_)) => {
                return Err(invalid("public.shape", "give either a shape or explicit edges"))
            }
            (Some(GraphShape::Cycle), None) => PublicGraph::cycle(g.nodes, g.weight),
            (Some(GraphShape::Complete), None) => PublicGraph::complete(g.nodes, g.weight),
            (None, Some(edges)) => PublicGraph::new(g.nodes, edges, g.weight),
            (None, None) => {
                return Err(invalid("public.edges", "required unless a shape is given"))
            }
        }
        .map_err(|e| invalid("public", e))?;

        let private = PrivateGraph::new(g.nodes, &config.private.edges)
            .map_err(|e| invalid("private.edges", e))?;

        let b = &config.budget;
        let mut budget =
            Budget::new(b.adjacency_radius, b.epsilon, b.delta, b.covering_confidence, b.accuracy)
                .map_err(|e| budget_error(e))?;
        if let Some(p) = b.success_probability {
            budget = budget
                .with_success_probability(p)
                .map_err(|_| invalid("budget.success_probability", "must lie in (0, 1)"))?;
        }

        check_task_fields(&config.task)?;
        if let Some(split) = config.overrides.error_split {
            if !(split > 0.0 && split < 1.0) {
                return Err(invalid("overrides.error_split", "must lie in (0, 1)"));
            }
        }

        Ok(Resolved {
            public,
            private,
            budget,
            task: config.task,
            overrides: config.overrides,
            sweep: config.experiment,
            seed: Seed::new(cli.seed.or(config.seed).unwrap_or(0)),
            trials,
            out: cli.out.clone().or(config.out),
            force: cli.force,
            base_dir,
        })
    }

    pub fn nodes(&self) -> usize {
        self.public.len()
    }

    /// A copy of the budget with a different privacy level — the sweep axis
    /// of every experiment.
    pub fn budget_at(&self, epsilon: f64, accuracy: f64) -> Result<Budget, HarnessError> {
        let mut b = Budget::new(
            self.budget.adjacency_radius(),
            epsilon,
            self.budget.delta(),
            self.budget.privacy_confidence(),
            accuracy,
        )
        .map_err(budget_error)?;
        if let Some(p) = self.budget.success_probability() {
            b = b.with_success_probability(p).expect("validated");
        }
        Ok(b)
    }

    pub fn error_split(&self) -> f64 {
        self.overrides.error_split.unwrap_or(DEFAULT_ERROR_SPLIT)
    }

    pub fn average_data(&self) -> Result<DVector<f64>, HarnessError> {
        let data = self
            .task
            .data
            .as_ref()
            .ok_or_else(|| invalid("task.data", "required for kind 'average'"))?;
        if data.len() != self.nodes() {
            return Err(invalid(
                "task.data",
                format!("{} values for {} nodes", data.len(), self.nodes()),
            ));
        }
        Ok(DVector::from_row_slice(data))
    }

    pub fn equation_task(&self) -> Result<(EquationSystem, DVector<f64>), HarnessError> {
        let text = match (&self.task.system, &self.task.system_file) {
            (Some(_), Some(_)) => {
                return Err(invalid("task.system", "give either inline text or a file, not both"))
            }
            (Some(text), None) => text.clone(),
            (None, Some(file)) => {
                let path = self.base_dir.join(file);
                std::fs::read_to_string(&path).map_err(|e| {
                    invalid("task.system_file", format!("{}: {e}", path.display()))
                })?
            }
            (None, None) => {
                return Err(invalid("task.system_file", "required for kind 'equations'"))
            }
        };
        let system =
            EquationSystem::parse(&text).map_err(|e| invalid("task.system_file", e))?;
        if system.len() != self.nodes() {
            return Err(invalid(
                "task.system_file",
                format!("{} equations for {} nodes", system.len(), self.nodes()),
            ));
        }
        let start = self.start_point(system.dimension())?;
        Ok((system, start))
    }

    pub fn quadratic_task(&self) -> Result<QuadraticTask, HarnessError> {
        let centers = self
            .task
            .centers
            .as_ref()
            .ok_or_else(|| invalid("task.centers", "required for kind 'quadratic-optimization'"))?;
        if centers.len() != self.nodes() {
            return Err(invalid(
                "task.centers",
                format!("{} centers for {} nodes", centers.len(), self.nodes()),
            ));
        }
        let family = ObjectiveFamily::quadratic(
            centers.iter().map(|c| DVector::from_row_slice(c)).collect(),
        )
        .map_err(|e| invalid("task.centers", e))?;
        let dimension = family.dimension();
        let set = self.convex_set(dimension)?;
        let start = self.start_point(dimension)?;
        let recursions = self.task_recursions()?;
        let mut mean = DVector::zeros(dimension);
        for c in centers {
            mean += DVector::from_row_slice(c);
        }
        mean /= centers.len() as f64;
        let optimum = set.project(&mean);
        Ok(QuadraticTask { family, set, start, recursions, optimum })
    }

    pub fn logistic_settings(&self) -> Result<LogisticSettings, HarnessError> {
        Ok(LogisticSettings {
            regularization: self.task.regularization.unwrap_or(1.0),
            recursions: self.task_recursions()?,
            synthetic: self.task.synthetic.clone().unwrap_or_default(),
            mnist: self.task.mnist.clone(),
        })
    }

    /// Resolve a path from the config file's directory.
    pub fn path(&self, relative: &Path) -> PathBuf {
        self.base_dir.join(relative)
    }

    fn task_recursions(&self) -> Result<u32, HarnessError> {
        let recursions = self
            .task
            .recursions
            .ok_or_else(|| invalid("task.recursions", "required for optimization tasks"))?;
        if recursions == 0 {
            return Err(invalid("task.recursions", "must be at least 1"));
        }
        Ok(recursions)
    }

    fn start_point(&self, dimension: usize) -> Result<DVector<f64>, HarnessError> {
        match &self.task.start {
            None => Ok(DVector::zeros(dimension)),
            Some(start) if start.len() == dimension => Ok(DVector::from_row_slice(start)),
            Some(start) => Err(invalid(
                "task.start",
                format!("{} values for dimension {dimension}", start.len()),
            )),
        }
    }

    fn convex_set(&self, dimension: usize) -> Result<ConvexSet, HarnessError> {
        let set = match &self.task.set {
            None | Some(SetConfig::UnitBall) => ConvexSet::unit_ball(dimension),
            Some(SetConfig::Ball { center, radius }) => {
                ConvexSet::ball(DVector::from_row_slice(center), *radius)
                    .map_err(|e| invalid("task.set", e))?
            }
            Some(SetConfig::Box { lower, upper }) => ConvexSet::interval_box(
                DVector::from_row_slice(lower),
                DVector::from_row_slice(upper),
            )
            .map_err(|e| invalid("task.set", e))?,
        };
        if set.dimension() != dimension {
            return Err(invalid(
                "task.set",
                format!("dimension {} does not match the task's {dimension}", set.dimension()),
            ));
        }
        Ok(set)
    }
}

fn budget_error(e: PlannerError) -> HarnessError {
    match e {
        PlannerError::InvalidBudget { field, value } => HarnessError::Invalid {
            key: format!("budget.{field}"),
            message: format!("value {value} is out of range"),
        },
        PlannerError::BadConfidence(v) => HarnessError::Invalid {
            key: "budget.covering_confidence".into(),
            message: format!("value {v} must lie in (0, 1)"),
        },
        other => HarnessError::Invalid { key: "budget".into(), message: other.to_string() },
    }
}

/// Reject fields that don't belong to the selected task kind, so typos and
/// copy-paste mistakes fail loudly instead of being silently ignored.
fn check_task_fields(task: &TaskConfig) -> Result<(), HarnessError> {
    let mut stray: Vec<&str> = Vec::new();
    let mut forbid = |present: bool, name: &'static str| {
        if present {
            stray.push(name);
        }
    };
    match task.kind {
        TaskKind::Average => {
            forbid(task.system.is_some(), "system");
            forbid(task.system_file.is_some(), "system_file");
            forbid(task.start.is_some(), "start");
            forbid(task.centers.is_some(), "centers");
            forbid(task.set.is_some(), "set");
            forbid(task.recursions.is_some(), "recursions");
            forbid(task.regularization.is_some(), "regularization");
            forbid(task.synthetic.is_some(), "synthetic");
            forbid(task.mnist.is_some(), "mnist");
        }
        TaskKind::Equations => {
            forbid(task.data.is_some(), "data");
            forbid(task.centers.is_some(), "centers");
            forbid(task.set.is_some(), "set");
            forbid(task.recursions.is_some(), "recursions");
            forbid(task.regularization.is_some(), "regularization");
            forbid(task.synthetic.is_some(), "synthetic");
            forbid(task.mnist.is_some(), "mnist");
        }
        TaskKind::QuadraticOptimization => {
            forbid(task.data.is_some(), "data");
            forbid(task.system.is_some(), "system");
            forbid(task.system_file.is_some(), "system_file");
            forbid(task.regularization.is_some(), "regularization");
            forbid(task.synthetic.is_some(), "synthetic");
            forbid(task.mnist.is_some(), "mnist");
        }
        TaskKind::LogisticClassification => {
            forbid(task.data.is_some(), "data");
            forbid(task.system.is_some(), "system");
            forbid(task.system_file.is_some(), "system_file");
            forbid(task.centers.is_some(), "centers");
            forbid(task.start.is_some(), "start");
        }
    }
    match stray.first() {
        None => Ok(()),
        Some(name) => Err(HarnessError::Invalid {
            key: format!("task.{name}"),
            message: format!("not used by kind '{}'", task.kind.name()),
        }),
    }
}

/// Run parameters after applying manual overrides to a plan. `forced` marks
/// that at least one override loosened a planner bound and `--force` was
/// given; without `--force` such overrides are errors.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveParams {
    pub params: RunParams,
    pub forced: bool,
}

pub fn apply_overrides(
    plan: &Plan,
    overrides: &Overrides,
    force: bool,
) -> Result<EffectiveParams, HarnessError> {
    let mut forced = false;
    let mut check_count = |key: &str, value: Option<u32>, bound: u32| {
        let Some(value) = value else { return Ok(bound) };
        if value < bound {
            if !force {
                return Err(HarnessError::OverrideBelowBound {
                    key: format!("overrides.{key}"),
                    value: value as f64,
                    bound: bound as f64,
                });
            }
            forced = true;
        }
        Ok(value)
    };
    let gossip_steps = check_count("gossip_steps", overrides.gossip_steps, plan.gossip_steps)?;
    let averaging_rounds =
        check_count("averaging_rounds", overrides.averaging_rounds, plan.averaging_rounds)?;
    let recursions = check_count("recursions", overrides.recursions, plan.recursions)?;
    let noise_std = match overrides.noise_std {
        None => plan.noise_std,
        Some(value) => {
            if value < plan.noise_std {
                if !force {
                    return Err(HarnessError::OverrideBelowBound {
                        key: "overrides.noise_std".into(),
                        value,
                        bound: plan.noise_std,
                    });
                }
                forced = true;
            }
            value
        }
    };
    let params = RunParams::new(gossip_steps, noise_std, averaging_rounds, recursions)
        .map_err(|e| invalid("overrides", e))?;
    Ok(EffectiveParams { params, forced })
}
