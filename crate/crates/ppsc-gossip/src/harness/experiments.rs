//! The three sweep experiments behind `experiment avg|nle|logistic`.
//!
//! Each builds a [`ResultTable`] over a privacy grid: plan, apply any
//! manual overrides, run the trials (in parallel — every trial draws its
//! randomness from a stream keyed by its own index, so the tables are
//! byte-identical across thread schedules), aggregate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::audit::covering_curve;
use crate::optim::{auc, geometry, ConvexSet, ObjectiveFamily};
use crate::planner::{
    plan_average, plan_equation_solver, plan_optimizer, MixingSource, PlannerError,
    StepsizeSchedule,
};
use crate::rng::gaussian;
use crate::solver::{RunParams, SolverRun};

use super::config::{apply_overrides, EffectiveParams, Resolved, SyntheticConfig};
use super::table::ResultTable;
use super::HarnessError;

/// Trajectory rows per cell; longer curves are subsampled to about this
/// many points (the final point is always kept).
const CURVE_POINTS: usize = 40;

/// Iterations of the centralized projected-gradient baseline.
const BASELINE_ITERATIONS: u32 = 2000;

pub(super) fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn binomial_std_err(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Indices 0..len thinned to at most [`CURVE_POINTS`], keeping the last.
fn curve_indices(len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let stride = len.div_ceil(CURVE_POINTS).max(1);
    let mut indices: Vec<usize> = (0..len).step_by(stride).collect();
    if *indices.last().unwrap() != len - 1 {
        indices.push(len - 1);
    }
    indices
}

/// Planner failures caused by the configured budget are validation errors;
/// anything else is a runtime failure.
pub(super) fn plan_error(e: PlannerError) -> HarnessError {
    match e {
        PlannerError::MissingSuccessProbability => HarnessError::Invalid {
            key: "budget.success_probability".into(),
            message: "required for optimizer planning".into(),
        },
        PlannerError::PerRecursionDeltaVanished { recursions } => HarnessError::Invalid {
            key: "budget.delta".into(),
            message: format!("splits to zero across {recursions} recursions"),
        },
        PlannerError::BadErrorSplit(v) => HarnessError::Invalid {
            key: "overrides.error_split".into(),
            message: format!("value {v} must lie in (0, 1)"),
        },
        other => HarnessError::runtime(other),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Emit the planned parameters for one cell, and the values actually used
/// when an override changed them.
fn push_plan_rows(
    table: &mut ResultTable,
    params: &[(&str, String)],
    plan: &crate::planner::Plan,
    eff: &EffectiveParams,
) {
    table.push(params, "planned_gossip_steps", plan.gossip_steps as f64, None, false);
    table.push(params, "planned_averaging_rounds", plan.averaging_rounds as f64, None, false);
    table.push(params, "planned_recursions", plan.recursions as f64, None, false);
    table.push(params, "planned_noise_std", plan.noise_std, None, false);
    let p = &eff.params;
    if p.gossip_steps != plan.gossip_steps {
        table.push(params, "used_gossip_steps", p.gossip_steps as f64, None, eff.forced);
    }
    if p.averaging_rounds != plan.averaging_rounds {
        table.push(params, "used_averaging_rounds", p.averaging_rounds as f64, None, eff.forced);
    }
    if p.recursions != plan.recursions {
        table.push(params, "used_recursions", p.recursions as f64, None, eff.forced);
    }
    if p.noise_std != plan.noise_std {
        table.push(params, "used_noise_std", p.noise_std, None, eff.forced);
    }
}

/// Private averaging across the privacy grid, plus a covering-probability
/// section for the step counts the plans actually chose.
pub fn experiment_avg(resolved: &Resolved) -> Result<ResultTable, HarnessError> {
    let data = resolved.average_data()?;
    let g = &resolved.public;
    let gp = &resolved.private;
    let mixing = MixingSource::auto(resolved.seed);
    let n = g.len() as f64;
    let q = gp.component_count() as f64;
    let contraction = 1.0 - g.algebraic_connectivity();

    let mut table = ResultTable::new();
    let mut max_steps = 1;
    for (cell, &epsilon) in resolved.sweep.epsilon_grid().iter().enumerate() {
        let budget = resolved.budget_at(epsilon, resolved.budget.accuracy())?;
        let plan =
            plan_average(&budget, data.norm_squared(), g, gp, &mixing).map_err(plan_error)?;
        let eff = apply_overrides(&plan, &resolved.overrides, resolved.force)?;
        let params = eff.params;
        max_steps = max_steps.max(params.gossip_steps);

        let stage = format!("avg-cell{cell}");
        let runs: Vec<_> = (0..resolved.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = resolved.seed.stream(trial as u64, &stage);
                crate::consensus::run_consensus(&data, g, gp, &params, &mut rng)
                    .map_err(HarnessError::runtime)
            })
            .collect::<Result<_, _>>()?;

        let key = [("epsilon", fmt(epsilon))];
        push_plan_rows(&mut table, &key, &plan, &eff);

        let finals: Vec<f64> = runs.iter().map(|r| r.final_error_sq).collect();
        let (mse, se) = mean_and_std_err(&finals);
        table.push(&key, "empirical_mse", mse, Some(se), eff.forced);

        let s = params.gossip_steps as f64;
        let input_level = n * data.norm_squared()
            + 2.0 * q * q * s * s * params.noise_std * params.noise_std;
        let bound = input_level * contraction.powi(2 * params.averaging_rounds as i32);
        table.push(&key, "analytic_mse_bound", bound, None, eff.forced);

        // Mean squared-error trajectory: index 0 is the input, 1..=S the
        // gossip stage, the rest the averaging stage.
        let len = 1 + params.gossip_steps as usize + params.averaging_rounds as usize;
        let mut mean_curve = vec![0.0; len];
        for run in &runs {
            for (acc, v) in mean_curve.iter_mut().zip(run.error_curve()) {
                *acc += v / resolved.trials as f64;
            }
        }
        let first_hit = (1..=params.averaging_rounds as usize)
            .find(|&t| mean_curve[params.gossip_steps as usize + t] <= budget.accuracy());
        table.push(
            &key,
            "minimal_rounds_empirical",
            first_hit.map_or(f64::NAN, |t| t as f64),
            None,
            eff.forced,
        );

        let nodes: Vec<f64> = runs.iter().map(|r| r.final_state()[0]).collect();
        let (value, value_se) = mean_and_std_err(&nodes);
        table.push(&key, "converged_value", value, Some(value_se), eff.forced);

        let deviation = runs
            .iter()
            .flat_map(|r| {
                let x = r.final_state();
                let mean = x.sum() / n;
                x.iter().map(move |v| (v - mean).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        table.push(&key, "max_final_deviation", deviation, None, eff.forced);

        for index in curve_indices(len) {
            table.push(
                &[("epsilon", fmt(epsilon)), ("index", index.to_string())],
                "trajectory_mse",
                mean_curve[index],
                None,
                eff.forced,
            );
        }
    }

    let covering_trials = (resolved.trials.max(50) as u32) * 40;
    let mut rng = resolved.seed.stream(0, "avg-covering");
    let curve = covering_curve(gp, max_steps, covering_trials, &mut rng)
        .map_err(HarnessError::runtime)?;
    for estimate in curve {
        let key = [("steps", estimate.steps.to_string())];
        table.push(&key, "covering_empirical", estimate.empirical, Some(estimate.std_err), false);
        table.push(&key, "covering_lower_bound", estimate.lower_bound, None, false);
    }
    Ok(table)
}

/// Private equation solving across the accuracy × privacy grid, plus one
/// noiseless run as a sanity anchor.
pub fn experiment_nle(resolved: &Resolved) -> Result<ResultTable, HarnessError> {
    let (system, start) = resolved.equation_task()?;
    let g = &resolved.public;
    let gp = &resolved.private;
    let mixing = MixingSource::auto(resolved.seed);
    let geometry = system.geometry(&start).map_err(HarnessError::runtime)?;
    let reference = system.solution().unwrap_or_else(|| system.least_squares()).clone();

    let mut table = ResultTable::new();
    let mut cell = 0;
    for &accuracy in &resolved.sweep.accuracy_grid() {
        for &epsilon in &resolved.sweep.epsilon_grid() {
            let budget = resolved.budget_at(epsilon, accuracy)?;
            let plan =
                plan_equation_solver(&budget, &geometry, resolved.error_split(), g, gp, &mixing)
                    .map_err(plan_error)?;
            let eff = apply_overrides(&plan, &resolved.overrides, resolved.force)?;

            let stage = format!("nle-cell{cell}");
            cell += 1;
            let runs: Vec<SolverRun> = (0..resolved.trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = resolved.seed.stream(trial as u64, &stage);
                    crate::linear_eq::run_equation_solver(
                        &system,
                        g,
                        gp,
                        &eff.params,
                        &start,
                        &mut rng,
                    )
                    .map_err(HarnessError::runtime)
                })
                .collect::<Result<_, _>>()?;

            let key = [("accuracy", fmt(accuracy)), ("epsilon", fmt(epsilon))];
            push_plan_rows(&mut table, &key, &plan, &eff);

            let finals: Vec<f64> = runs.iter().map(|r| r.final_error_sq(&reference)).collect();
            let (error, se) = mean_and_std_err(&finals);
            table.push(&key, "empirical_error", error, Some(se), eff.forced);

            let covered = runs.iter().filter(|r| r.all_covered).count();
            let p = covered as f64 / runs.len() as f64;
            table.push(
                &key,
                "covering_probability",
                p,
                Some(binomial_std_err(p, runs.len())),
                eff.forced,
            );

            let recursions = eff.params.recursions as usize;
            for index in curve_indices(recursions) {
                let mean = runs
                    .iter()
                    .map(|r| r.records[index].error_sq.unwrap_or(f64::NAN))
                    .sum::<f64>()
                    / runs.len() as f64;
                table.push(
                    &[
                        ("accuracy", fmt(accuracy)),
                        ("epsilon", fmt(epsilon)),
                        ("recursion", (index + 1).to_string()),
                    ],
                    "error_trajectory",
                    mean,
                    None,
                    eff.forced,
                );
            }
        }
    }

    // Noiseless anchor: no privacy noise, generous rounds and recursions —
    // the solver must hit the exact solution or something is wrong well
    // before privacy enters the picture. Size both counts to push the
    // start distance below 1e-8 through the per-recursion contraction.
    if system.solution().is_some() {
        let contraction = system.contraction().clamp(1e-6, 1.0 - 1e-12);
        let distance = geometry.start_distance.max(1.0);
        let recursions = ((-8.0 * std::f64::consts::LN_10 - distance.ln()) / contraction.ln())
            .ceil()
            .clamp(1.0, 5000.0) as u32;
        let rounds = ((-20.0 * std::f64::consts::LN_10)
            / (1.0 - g.algebraic_connectivity()).ln())
        .ceil()
        .clamp(1.0, 50_000.0) as u32;
        let params = RunParams::new(1, 0.0, rounds, recursions).expect("static");
        let mut rng = resolved.seed.stream(0, "nle-noiseless");
        let run = crate::linear_eq::run_equation_solver(&system, g, gp, &params, &start, &mut rng)
            .map_err(HarnessError::runtime)?;
        table.push(&[], "noiseless_error", run.max_node_distance(&reference), None, false);
    }
    Ok(table)
}

/// A linearly separable two-cluster dataset: class means `±(s/2)·u` along
/// the diagonal direction `u`, unit isotropic noise, balanced labels.
/// Returns per-agent training features and labels plus a shared test set.
pub fn synthetic_classification(
    agents: usize,
    config: &SyntheticConfig,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Result<(Vec<DMatrix<f64>>, Vec<DVector<f64>>, DMatrix<f64>, Vec<bool>), HarnessError> {
    let m = config.dimension;
    if m == 0 || config.train_per_agent == 0 || config.test_samples < 2 {
        return Err(HarnessError::Invalid {
            key: "task.synthetic".into(),
            message: "dimension and sample counts must be positive (at least 2 test samples)"
                .into(),
        });
    }
    let direction = DVector::from_element(m, 1.0 / (m as f64).sqrt());
    let sample = |positive: bool, rng: &mut rand_chacha::ChaCha12Rng| {
        let sign = if positive { 0.5 } else { -0.5 };
        let center = &direction * (sign * config.separation);
        DVector::from_fn(m, |r, _| center[r] + gaussian(rng, 1.0).expect("unit sigma"))
    };
    let mut features = Vec::with_capacity(agents);
    let mut labels = Vec::with_capacity(agents);
    for _ in 0..agents {
        let mut rows = DMatrix::zeros(config.train_per_agent, m);
        let mut y = DVector::zeros(config.train_per_agent);
        for j in 0..config.train_per_agent {
            let positive = j % 2 == 0;
            rows.set_row(j, &sample(positive, rng).transpose());
            y[j] = if positive { 1.0 } else { 0.0 };
        }
        features.push(rows);
        labels.push(y);
    }
    let mut test = DMatrix::zeros(config.test_samples, m);
    let mut test_labels = Vec::with_capacity(config.test_samples);
    for j in 0..config.test_samples {
        let positive = j % 2 == 0;
        test.set_row(j, &sample(positive, rng).transpose());
        test_labels.push(positive);
    }
    Ok((features, labels, test, test_labels))
}

fn mnist_dataset(
    resolved: &Resolved,
    cfg: &super::config::MnistConfig,
) -> Result<(Vec<DMatrix<f64>>, Vec<DVector<f64>>, DMatrix<f64>, Vec<bool>), HarnessError> {
    let agents = resolved.nodes();
    let train = super::mnist::load_mnist_idx(
        &resolved.path(&cfg.train_images),
        &resolved.path(&cfg.train_labels),
    )
    .map_err(HarnessError::runtime)?;
    let test = super::mnist::load_mnist_idx(
        &resolved.path(&cfg.test_images),
        &resolved.path(&cfg.test_labels),
    )
    .map_err(HarnessError::runtime)?;

    let positive = |digit: u8| cfg.positive_digits.contains(&digit);
    let dim = train.features.first().map_or(0, Vec::len);
    let take_train = cfg.train_subsample.min(train.features.len());
    let take_test = cfg.test_subsample.min(test.features.len());
    if take_train < agents || take_test == 0 {
        return Err(HarnessError::Invalid {
            key: "task.mnist".into(),
            message: format!("{take_train} training samples for {agents} agents"),
        });
    }

    // Round-robin assignment: agent i takes samples i, i+n, i+2n, …
    let per_agent = take_train / agents;
    let mut features = Vec::with_capacity(agents);
    let mut labels = Vec::with_capacity(agents);
    for agent in 0..agents {
        let mut rows = DMatrix::zeros(per_agent, dim);
        let mut y = DVector::zeros(per_agent);
        for j in 0..per_agent {
            let idx = agent + j * agents;
            rows.row_mut(j)
                .copy_from(&DMatrix::from_row_slice(1, dim, &train.features[idx]));
            y[j] = if positive(train.digits[idx]) { 1.0 } else { 0.0 };
        }
        features.push(rows);
        labels.push(y);
    }
    let mut test_rows = DMatrix::zeros(take_test, dim);
    let mut test_labels = Vec::with_capacity(take_test);
    for j in 0..take_test {
        test_rows
            .row_mut(j)
            .copy_from(&DMatrix::from_row_slice(1, dim, &test.features[j]));
        test_labels.push(positive(test.digits[j]));
    }
    Ok((features, labels, test_rows, test_labels))
}

/// A fully constructed logistic-regression problem, shared between the
/// sweep experiment and the single-run subcommands.
pub struct LogisticProblem {
    pub family: ObjectiveFamily,
    pub set: ConvexSet,
    pub start: DVector<f64>,
    pub test: DMatrix<f64>,
    pub test_labels: Vec<bool>,
    pub recursions: u32,
}

impl LogisticProblem {
    /// Test-set AUC of the linear score `test · w`.
    pub fn auc_of(&self, w: &DVector<f64>) -> Result<f64, HarnessError> {
        let scores: Vec<f64> = (&self.test * w).iter().copied().collect();
        auc(&scores, &self.test_labels).map_err(HarnessError::runtime)
    }
}

/// Build the configured classification problem: MNIST when IDX paths are
/// given, the synthetic two-cluster dataset otherwise.
pub fn logistic_problem(resolved: &Resolved) -> Result<LogisticProblem, HarnessError> {
    let settings = resolved.logistic_settings()?;
    let (features, labels, test, test_labels) = match &settings.mnist {
        Some(cfg) => mnist_dataset(resolved, cfg)?,
        None => {
            let mut rng = resolved.seed.stream(0, "logistic-data");
            synthetic_classification(resolved.nodes(), &settings.synthetic, &mut rng)?
        }
    };
    let family = ObjectiveFamily::logistic(features, labels, settings.regularization)
        .map_err(HarnessError::runtime)?;
    let set = ConvexSet::unit_ball(family.dimension());
    let start = DVector::zeros(family.dimension());
    Ok(LogisticProblem { family, set, start, test, test_labels, recursions: settings.recursions })
}

/// Regularized logistic regression across the privacy grid: per-recursion
/// test AUC, its plateau, and a centralized no-privacy baseline.
pub fn experiment_logistic(resolved: &Resolved) -> Result<ResultTable, HarnessError> {
    let g = &resolved.public;
    let gp = &resolved.private;
    let mixing = MixingSource::auto(resolved.seed);

    let problem = logistic_problem(resolved)?;
    let shape = geometry(&problem.family, &problem.set, resolved.budget.accuracy())
        .map_err(HarnessError::runtime)?;

    let mut table = ResultTable::new();
    for (cell, &epsilon) in resolved.sweep.epsilon_grid().iter().enumerate() {
        let budget = resolved.budget_at(epsilon, resolved.budget.accuracy())?;
        let plan = plan_optimizer(
            &budget,
            &shape,
            problem.recursions,
            &StepsizeSchedule::Harmonic,
            g,
            gp,
            &mixing,
        )
        .map_err(plan_error)?;
        let eff = apply_overrides(&plan, &resolved.overrides, resolved.force)?;

        let stage = format!("logistic-cell{cell}");
        let runs: Vec<SolverRun> = (0..resolved.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = resolved.seed.stream(trial as u64, &stage);
                crate::optim::run_optimizer(
                    &problem.family,
                    &problem.set,
                    g,
                    gp,
                    &eff.params,
                    StepsizeSchedule::Harmonic,
                    &problem.start,
                    None,
                    &mut rng,
                )
                .map_err(HarnessError::runtime)
            })
            .collect::<Result<_, _>>()?;

        let key = [("epsilon", fmt(epsilon))];
        push_plan_rows(&mut table, &key, &plan, &eff);

        let recursions = eff.params.recursions as usize;
        let mut per_recursion: Vec<Vec<f64>> = vec![Vec::new(); recursions];
        for run in &runs {
            for (l, record) in run.records.iter().enumerate() {
                per_recursion[l].push(problem.auc_of(&record.mean_state)?);
            }
        }
        let means: Vec<(f64, f64)> =
            per_recursion.iter().map(|v| mean_and_std_err(v)).collect();
        for index in curve_indices(recursions) {
            let (value, se) = means[index];
            table.push(
                &[("epsilon", fmt(epsilon)), ("recursion", (index + 1).to_string())],
                "auc",
                value,
                Some(se),
                eff.forced,
            );
        }
        let tail = recursions - recursions / 4;
        let plateau =
            means[tail - 1..].iter().map(|(v, _)| v).sum::<f64>() / (recursions - tail + 1) as f64;
        table.push(&key, "plateau_auc", plateau, Some(means[recursions - 1].1), eff.forced);
    }

    // No-privacy, no-network baseline: projected gradient on the summed
    // objective with the same diminishing stepsizes.
    let family = &problem.family;
    let mut w = problem.start.clone();
    let n = family.agents() as f64;
    for t in 0..BASELINE_ITERATIONS {
        let mut grad = DVector::zeros(family.dimension());
        for i in 0..family.agents() {
            grad += family.gradient(i, &w);
        }
        w = problem.set.project(&(&w - grad * (StepsizeSchedule::Harmonic.value(t) / n)));
    }
    table.push(&[], "centralized_auc", problem.auc_of(&w)?, None, false);
    Ok(table)
}
