//! Derive run parameters for all three computation tasks from one privacy
//! budget, and show how the planned counts react when the budget tightens.
//!
//!     cargo run --example plan_parameters

use nalgebra::DVector;
use ppsc_gossip::linear_eq::{AffineEquation, EquationSystem};
use ppsc_gossip::optim::{geometry, ConvexSet, ObjectiveFamily};
use ppsc_gossip::planner::{
    plan_average, plan_equation_solver, plan_optimizer, Budget, MixingSource, StepsizeSchedule,
    DEFAULT_ERROR_SPLIT,
};
use ppsc_gossip::rng::Seed;
use ppsc_gossip::{PrivateGraph, PublicGraph};

fn main() {
    let g = PublicGraph::cycle(10, 0.1).expect("valid ring");
    let gp = PrivateGraph::new(
        10,
        &[(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (4, 6), (7, 8), (8, 9)],
    )
    .expect("valid secure links");
    let mixing = MixingSource::auto(Seed::new(7));

    // One budget: noise calibrated for epsilon = 0.01 at adjacency radius 1,
    // covering confidence 99%, target mean-square error 0.01.
    let budget = Budget::new(1.0, 1e-2, 1e-6, 0.99, 1e-2)
        .expect("valid budget")
        .with_success_probability(0.9)
        .expect("valid probability");

    let data = DVector::from_row_slice(&[10.0, 100.0, 20.0, -30.0, -20.0, 60.0, 70.0, 0.0, 80.0, -20.0]);
    let plan = plan_average(&budget, data.norm_squared(), &g, &gp, &mixing).expect("plan");
    println!("=== averaging ===\n{}\n", plan.describe());

    // A consistent demo system: coefficients follow a circulant pattern and
    // every target is generated from one shared solution.
    let answer = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let system = EquationSystem::new(
        (0..10)
            .map(|i| {
                let mut h = DVector::zeros(6);
                h[i % 6] = 1.0;
                h[(i + 2) % 6] = -2.0;
                AffineEquation::new(h.clone(), h.dot(&answer)).expect("valid equation")
            })
            .collect(),
    )
    .expect("full-rank system");
    let start = DVector::zeros(6);
    let shape = system.geometry(&start).expect("geometry");
    let plan =
        plan_equation_solver(&budget, &shape, DEFAULT_ERROR_SPLIT, &g, &gp, &mixing).expect("plan");
    println!("=== equation solving ===\n{}\n", plan.describe());

    let centers: Vec<DVector<f64>> =
        (0..10).map(|i| DVector::from_element(3, (i as f64 - 4.5) / 10.0)).collect();
    let family = ObjectiveFamily::quadratic(centers).expect("objective");
    let set = ConvexSet::unit_ball(3);
    let shape = geometry(&family, &set, budget.accuracy()).expect("geometry");
    let plan = plan_optimizer(&budget, &shape, 16, &StepsizeSchedule::Harmonic, &g, &gp, &mixing)
        .expect("plan");
    println!("=== constrained optimization ===\n{}\n", plan.describe());

    // Tightening epsilon drives the noise up and the averaging rounds after
    // it; the gossip step count only follows the covering confidence.
    println!("=== averaging plans across privacy levels ===");
    println!("{:>8} {:>6} {:>8} {:>16}", "epsilon", "steps", "rounds", "noise std");
    for epsilon in [1e-3, 1e-2, 1e-1] {
        let budget = Budget::new(1.0, epsilon, 1e-6, 0.99, 1e-2).expect("valid budget");
        let plan = plan_average(&budget, data.norm_squared(), &g, &gp, &mixing).expect("plan");
        println!(
            "{epsilon:>8} {:>6} {:>8} {:>16.2}",
            plan.gossip_steps, plan.averaging_rounds, plan.noise_std
        );
    }
}
