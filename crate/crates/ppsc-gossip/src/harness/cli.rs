//! Argument parsing and subcommand dispatch.
//!
//! Every subcommand reads the same TOML config (`--config`), applies the
//! flag overrides, and writes its primary artifact — a parameter listing, a
//! transcript, or CSV — to `--out` or stdout. Diagnostics and errors go to
//! stderr. Exit codes: 0 on success (including `--help`), 1 for
//! configuration and validation problems, 2 for failures during a run.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::audit::{covering_curve, dp_report};
use crate::linear_eq::run_equation_solver;
use crate::optim::{geometry, run_optimizer, ObjectiveFamily};
use crate::planner::{
    plan_average, plan_equation_solver, plan_optimizer, MixingSource, Plan, StepsizeSchedule,
};
use crate::ppsc::{run_ppsc, PpscConfig};
use crate::solver::{RunParams, SolverRun};

use super::config::{
    apply_overrides, CliOverrides, EffectiveParams, ExperimentConfig, QuadraticTask, Resolved,
    TaskKind,
};
use super::experiments::{
    experiment_avg, experiment_logistic, experiment_nle, logistic_problem, LogisticProblem,
};
use super::HarnessError;

#[derive(Debug, Parser)]
#[command(
    name = "ppsc-gossip",
    version,
    about = "Differentially private gossip computations: plan, run, audit, sweep"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trial count, overriding the config.
    #[arg(long, global = true)]
    pub trials: Option<u32>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Acknowledge overrides that loosen a planner bound.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive run parameters from the configured budget and print them.
    Plan,
    /// One pass of the private gossip mechanism; emits the transcript.
    Ppsc,
    /// Trial-averaged error trajectory of the averaging pipeline.
    Consensus,
    /// Trial-averaged equation-solver telemetry per recursion.
    Nle,
    /// Trial-averaged optimizer telemetry per recursion.
    Dco,
    /// Empirical checks of the analytic guarantees.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Grid sweeps producing result tables.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Covering probability against its analytic lower bound, per step
    /// count.
    Covering,
    /// Privacy tail bound at the effective noise scale against the
    /// budgeted delta.
    Dp,
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Private averaging sweep.
    Avg,
    /// Private equation-solver sweep.
    Nle,
    /// Private logistic-regression sweep.
    Logistic,
}

/// Entry point for the binary.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Same as [`run`] but with explicit arguments, for tests.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap routes help to stdout and errors to stderr by itself.
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), HarnessError> {
    let path = cli.common.config.as_deref().ok_or_else(|| HarnessError::Invalid {
        key: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let (config, base) = ExperimentConfig::load(path)?;
    let overrides = CliOverrides {
        seed: cli.common.seed,
        trials: cli.common.trials,
        out: cli.common.out.clone(),
        force: cli.common.force,
    };
    let resolved = Resolved::new(config, base, &overrides)?;
    if resolved.public.weight_above_uniform() {
        eprintln!(
            "warning: public edge weight exceeds 1/n; the averaging matrix \
             is no longer positive semidefinite and the contraction-rate \
             guarantee does not apply as stated"
        );
    }
    match &cli.command {
        Command::Plan => cmd_plan(&resolved),
        Command::Ppsc => cmd_ppsc(&resolved),
        Command::Consensus => cmd_consensus(&resolved),
        Command::Nle => cmd_nle(&resolved),
        Command::Dco => cmd_dco(&resolved),
        Command::Audit(AuditCommand::Covering) => cmd_audit_covering(&resolved),
        Command::Audit(AuditCommand::Dp) => cmd_audit_dp(&resolved),
        Command::Experiment(which) => {
            let table = match which {
                ExperimentCommand::Avg => experiment_avg(&resolved)?,
                ExperimentCommand::Nle => experiment_nle(&resolved)?,
                ExperimentCommand::Logistic => experiment_logistic(&resolved)?,
            };
            emit(&resolved, &table.to_csv())
        }
    }
}

/// Write the primary artifact to `--out` or stdout.
fn emit(resolved: &Resolved, text: &str) -> Result<(), HarnessError> {
    match &resolved.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// The plan for the configured task, at the configured budget.
fn plan_for_task(resolved: &Resolved) -> Result<Plan, HarnessError> {
    let g = &resolved.public;
    let gp = &resolved.private;
    let mixing = MixingSource::auto(resolved.seed);
    let plan = match resolved.task.kind {
        TaskKind::Average => {
            let data = resolved.average_data()?;
            plan_average(&resolved.budget, data.norm_squared(), g, gp, &mixing)
        }
        TaskKind::Equations => {
            let (system, start) = resolved.equation_task()?;
            let shape = system.geometry(&start).map_err(HarnessError::runtime)?;
            plan_equation_solver(&resolved.budget, &shape, resolved.error_split(), g, gp, &mixing)
        }
        TaskKind::QuadraticOptimization => {
            let task = resolved.quadratic_task()?;
            let shape = geometry(&task.family, &task.set, resolved.budget.accuracy())
                .map_err(HarnessError::runtime)?;
            plan_optimizer(
                &resolved.budget,
                &shape,
                task.recursions,
                &StepsizeSchedule::Harmonic,
                g,
                gp,
                &mixing,
            )
        }
        TaskKind::LogisticClassification => {
            let problem = logistic_problem(resolved)?;
            let shape = geometry(&problem.family, &problem.set, resolved.budget.accuracy())
                .map_err(HarnessError::runtime)?;
            plan_optimizer(
                &resolved.budget,
                &shape,
                problem.recursions,
                &StepsizeSchedule::Harmonic,
                g,
                gp,
                &mixing,
            )
        }
    };
    plan.map_err(super::experiments::plan_error)
}

fn planned_and_effective(resolved: &Resolved) -> Result<(Plan, EffectiveParams), HarnessError> {
    let plan = plan_for_task(resolved)?;
    let eff = apply_overrides(&plan, &resolved.overrides, resolved.force)?;
    Ok((plan, eff))
}

fn cmd_plan(resolved: &Resolved) -> Result<(), HarnessError> {
    let (plan, eff) = planned_and_effective(resolved)?;
    let mut text = plan.describe();
    let planned = RunParams::from(&plan);
    if eff.params != planned {
        let p = eff.params;
        let suffix = if eff.forced { " (forced below the planned bound)" } else { "" };
        if p.gossip_steps != planned.gossip_steps {
            text.push_str(&format!("\n{:<28}{}{suffix}", "used gossip steps", p.gossip_steps));
        }
        if p.averaging_rounds != planned.averaging_rounds {
            text.push_str(&format!(
                "\n{:<28}{}{suffix}",
                "used averaging rounds", p.averaging_rounds
            ));
        }
        if p.recursions != planned.recursions {
            text.push_str(&format!("\n{:<28}{}{suffix}", "used recursions", p.recursions));
        }
        if p.noise_std != planned.noise_std {
            text.push_str(&format!("\n{:<28}{}{suffix}", "used noise std", p.noise_std));
        }
    }
    text.push('\n');
    emit(resolved, &text)
}

/// The per-node states each task feeds into its first gossip stage.
fn initial_state(resolved: &Resolved) -> Result<DMatrix<f64>, HarnessError> {
    let n = resolved.nodes();
    Ok(match resolved.task.kind {
        TaskKind::Average => {
            let data = resolved.average_data()?;
            DMatrix::from_fn(n, 1, |i, _| data[i])
        }
        TaskKind::Equations => {
            let (system, start) = resolved.equation_task()?;
            let mut state = DMatrix::zeros(n, system.dimension());
            for i in 0..n {
                state.row_mut(i).copy_from(&system.equation(i).project(&start).transpose());
            }
            state
        }
        TaskKind::QuadraticOptimization => {
            let task = resolved.quadratic_task()?;
            optimizer_initial(&task.family, &task.set, &task.start)
        }
        TaskKind::LogisticClassification => {
            let problem = logistic_problem(resolved)?;
            optimizer_initial(&problem.family, &problem.set, &problem.start)
        }
    })
}

fn optimizer_initial(
    family: &ObjectiveFamily,
    set: &crate::optim::ConvexSet,
    start: &DVector<f64>,
) -> DMatrix<f64> {
    let alpha = StepsizeSchedule::Harmonic.value(0);
    let n = family.agents();
    let mut state = DMatrix::zeros(n, family.dimension());
    for i in 0..n {
        let step = set.project(&(start - family.gradient(i, start) * alpha));
        state.row_mut(i).copy_from(&step.transpose());
    }
    state
}

fn cmd_ppsc(resolved: &Resolved) -> Result<(), HarnessError> {
    let (_, eff) = planned_and_effective(resolved)?;
    let initial = initial_state(resolved)?;
    let config = PpscConfig::new(eff.params.gossip_steps, eff.params.noise_std, initial.ncols())
        .map_err(HarnessError::runtime)?;
    let mut rng = resolved.seed.stream(0, "ppsc");
    let (final_state, transcript) =
        run_ppsc(&initial, &resolved.private, &config, &mut rng).map_err(HarnessError::runtime)?;

    // Exact sum conservation is the mechanism's defining invariant; report
    // the realized drift so a corrupted run is visible immediately.
    let drift = (0..initial.ncols())
        .map(|c| (final_state.column(c).sum() - initial.column(c).sum()).abs())
        .fold(0.0, f64::max);
    eprintln!(
        "{} exchanges over {} steps; max column-sum drift {drift:.3e}",
        transcript.entries.len(),
        eff.params.gossip_steps
    );
    emit(resolved, &transcript.to_text())
}

fn cmd_consensus(resolved: &Resolved) -> Result<(), HarnessError> {
    if resolved.task.kind != TaskKind::Average {
        return Err(HarnessError::Invalid {
            key: "task.kind".into(),
            message: "the consensus command needs kind 'average'".into(),
        });
    }
    let (_, eff) = planned_and_effective(resolved)?;
    let data = resolved.average_data()?;
    let runs: Vec<_> = (0..resolved.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = resolved.seed.stream(trial as u64, "consensus");
            crate::consensus::run_consensus(
                &data,
                &resolved.public,
                &resolved.private,
                &eff.params,
                &mut rng,
            )
            .map_err(HarnessError::runtime)
        })
        .collect::<Result<_, _>>()?;

    let s = eff.params.gossip_steps as usize;
    let len = 1 + s + eff.params.averaging_rounds as usize;
    let mut mean = vec![0.0; len];
    for run in &runs {
        for (acc, v) in mean.iter_mut().zip(run.error_curve()) {
            *acc += v / runs.len() as f64;
        }
    }
    let mut csv = String::from("s,stage,mse\n");
    for (index, value) in mean.iter().enumerate() {
        let stage = if index == 0 {
            "input"
        } else if index <= s {
            "gossip"
        } else {
            "averaging"
        };
        csv.push_str(&format!("{index},{stage},{value}\n"));
    }
    emit(resolved, &csv)
}

fn cmd_nle(resolved: &Resolved) -> Result<(), HarnessError> {
    if resolved.task.kind != TaskKind::Equations {
        return Err(HarnessError::Invalid {
            key: "task.kind".into(),
            message: "the nle command needs kind 'equations'".into(),
        });
    }
    let (_, eff) = planned_and_effective(resolved)?;
    let (system, start) = resolved.equation_task()?;
    let runs: Vec<SolverRun> = (0..resolved.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = resolved.seed.stream(trial as u64, "nle");
            run_equation_solver(
                &system,
                &resolved.public,
                &resolved.private,
                &eff.params,
                &start,
                &mut rng,
            )
            .map_err(HarnessError::runtime)
        })
        .collect::<Result<_, _>>()?;

    let mut csv = String::from("l,error,delta_l_norm\n");
    for l in 0..eff.params.recursions as usize {
        let error = runs
            .iter()
            .map(|r| r.records[l].error_sq.unwrap_or(f64::NAN))
            .sum::<f64>()
            / runs.len() as f64;
        let residual =
            runs.iter().map(|r| r.records[l].residual_norm).sum::<f64>() / runs.len() as f64;
        csv.push_str(&format!("{},{error},{residual}\n", l + 1));
    }
    emit(resolved, &csv)
}

fn cmd_dco(resolved: &Resolved) -> Result<(), HarnessError> {
    enum Problem {
        Quadratic(Box<QuadraticTask>),
        Logistic(Box<LogisticProblem>),
    }
    let problem = match resolved.task.kind {
        TaskKind::QuadraticOptimization => Problem::Quadratic(Box::new(resolved.quadratic_task()?)),
        TaskKind::LogisticClassification => Problem::Logistic(Box::new(logistic_problem(resolved)?)),
        _ => {
            return Err(HarnessError::Invalid {
                key: "task.kind".into(),
                message: "the dco command needs an optimization task".into(),
            })
        }
    };
    let (family, set, start, reference) = match &problem {
        Problem::Quadratic(t) => (&t.family, &t.set, &t.start, Some(&t.optimum)),
        Problem::Logistic(p) => (&p.family, &p.set, &p.start, None),
    };
    let (_, eff) = planned_and_effective(resolved)?;
    let runs: Vec<SolverRun> = (0..resolved.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = resolved.seed.stream(trial as u64, "dco");
            run_optimizer(
                family,
                set,
                &resolved.public,
                &resolved.private,
                &eff.params,
                StepsizeSchedule::Harmonic,
                start,
                reference,
                &mut rng,
            )
            .map_err(HarnessError::runtime)
        })
        .collect::<Result<_, _>>()?;

    let mut csv = String::from("l,error,objective\n");
    for l in 0..eff.params.recursions as usize {
        let error = match reference {
            Some(_) => {
                let mean = runs
                    .iter()
                    .map(|r| r.records[l].error_sq.unwrap_or(f64::NAN))
                    .sum::<f64>()
                    / runs.len() as f64;
                format!("{mean}")
            }
            None => String::new(),
        };
        let objective = runs
            .iter()
            .map(|r| r.records[l].probe.unwrap_or(f64::NAN))
            .sum::<f64>()
            / runs.len() as f64;
        csv.push_str(&format!("{},{error},{objective}\n", l + 1));
    }
    emit(resolved, &csv)
}

fn cmd_audit_covering(resolved: &Resolved) -> Result<(), HarnessError> {
    let (_, eff) = planned_and_effective(resolved)?;
    let mut rng = resolved.seed.stream(0, "audit-covering");
    let curve = covering_curve(
        &resolved.private,
        eff.params.gossip_steps,
        resolved.trials.max(1000),
        &mut rng,
    )
    .map_err(HarnessError::runtime)?;
    let mut csv = String::from("S,empirical_p,analytic_lb,std_err\n");
    for e in curve {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.steps, e.empirical, e.lower_bound, e.std_err
        ));
    }
    emit(resolved, &csv)
}

fn cmd_audit_dp(resolved: &Resolved) -> Result<(), HarnessError> {
    let (plan, eff) = planned_and_effective(resolved)?;
    let report = dp_report(
        plan.detail.per_recursion_epsilon,
        eff.params.noise_std,
        plan.detail.mixing_floor,
        resolved.budget.adjacency_radius(),
    );
    let budgeted = plan.detail.per_recursion_delta;
    eprintln!(
        "per-recursion tail bound delta = {:.6e}, budgeted {budgeted:.6e} ({})",
        report.delta_required,
        if report.delta_required <= budgeted * (1.0 + 1e-9) {
            "within budget"
        } else {
            "EXCEEDS BUDGET"
        }
    );
    let csv = format!(
        "epsilon,noise_std,mixing_floor,adjacency_radius,delta_required,delta_budget\n\
         {},{},{},{},{},{}\n",
        report.epsilon,
        report.noise_std,
        report.mixing_floor,
        report.adjacency_radius,
        report.delta_required,
        budgeted
    );
    emit(resolved, &csv)
}
