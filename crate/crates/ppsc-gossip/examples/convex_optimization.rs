//! Constrained optimization over a network: each node descends its own
//! objective between shuffling and averaging phases, and the network mean
//! lands on the constrained optimum of the sum.
//!
//!     cargo run --example convex_optimization

use nalgebra::DVector;
use ppsc_gossip::optim::{geometry, run_optimizer, ConvexSet, ObjectiveFamily};
use ppsc_gossip::planner::{plan_optimizer, Budget, MixingSource, StepsizeSchedule};
use ppsc_gossip::rng::Seed;
use ppsc_gossip::solver::RunParams;
use ppsc_gossip::{PrivateGraph, PublicGraph};

fn main() {
    let g = PublicGraph::cycle(10, 0.1).expect("valid ring");
    let gp = PrivateGraph::new(
        10,
        &[(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (4, 6), (7, 8), (8, 9)],
    )
    .expect("valid secure links");

    // Each node pulls towards its own target point; the sum of squared
    // distances is minimized at the feasible projection of the mean.
    let centers: Vec<DVector<f64>> = vec![
        DVector::from_row_slice(&[0.5, -0.1, 0.2]),
        DVector::from_row_slice(&[0.2, -0.4, 0.1]),
        DVector::from_row_slice(&[0.4, 0.0, -0.1]),
        DVector::from_row_slice(&[0.1, -0.2, 0.3]),
        DVector::from_row_slice(&[0.6, -0.3, 0.0]),
        DVector::from_row_slice(&[0.3, 0.1, 0.1]),
        DVector::from_row_slice(&[0.0, -0.5, 0.2]),
        DVector::from_row_slice(&[0.4, -0.2, -0.2]),
        DVector::from_row_slice(&[0.2, 0.0, 0.4]),
        DVector::from_row_slice(&[0.3, -0.4, 0.0]),
    ];
    let mut optimum = DVector::zeros(3);
    for c in &centers {
        optimum += c;
    }
    optimum /= centers.len() as f64;
    println!("constrained optimum: {:?}", optimum.iter().copied().collect::<Vec<_>>());

    let family = ObjectiveFamily::quadratic(centers).expect("objective");
    let set = ConvexSet::unit_ball(3);
    let budget = Budget::new(1.0, 1e-1, 1e-6, 0.99, 0.05)
        .expect("valid budget")
        .with_success_probability(0.9)
        .expect("valid probability");
    let seed = Seed::new(4);
    let shape = geometry(&family, &set, budget.accuracy()).expect("geometry");
    let plan = plan_optimizer(
        &budget,
        &shape,
        16,
        &StepsizeSchedule::Harmonic,
        &g,
        &gp,
        &MixingSource::auto(seed),
    )
    .expect("plan");
    println!(
        "planned: {} recursions x ({} gossip steps + {} averaging rounds), noise std {:.1}",
        plan.recursions, plan.gossip_steps, plan.averaging_rounds, plan.noise_std
    );

    let start = DVector::zeros(3);
    let mut rng = seed.stream(0, "optimize");
    let run = run_optimizer(
        &family,
        &set,
        &g,
        &gp,
        &RunParams::from(&plan),
        StepsizeSchedule::Harmonic,
        &start,
        Some(&optimum),
        &mut rng,
    )
    .expect("run");

    println!("\nrecursion   squared error   objective at mean");
    for record in &run.records {
        if record.recursion % 4 == 0 || record.recursion == 1 {
            println!(
                "{:>9}   {:>13.4e}   {:>17.6}",
                record.recursion,
                record.error_sq.unwrap(),
                record.probe.unwrap()
            );
        }
    }
    let min_value = family.total_value(&optimum);
    println!("\nminimum objective value: {min_value:.6}");
    println!(
        "final squared error {:.3e} (target {})",
        run.final_error_sq(&optimum),
        budget.accuracy()
    );
    assert!(run.final_error_sq(&optimum) <= budget.accuracy(), "planned run should land inside");
}
