//! Privately compute the network average of ten sensitive scalars: noisy
//! gossip shuffling first, deterministic averaging after, mean-square error
//! against the analytic bound at the end.
//!
//!     cargo run --example average_consensus

use nalgebra::DVector;
use ppsc_gossip::consensus::run_consensus;
use ppsc_gossip::planner::{plan_average, Budget, MixingSource};
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
    let data =
        DVector::from_row_slice(&[10.0, 100.0, 20.0, -30.0, -20.0, 60.0, 70.0, 0.0, 80.0, -20.0]);
    let mean = data.sum() / data.len() as f64;
    println!("inputs: {:?}", data.iter().copied().collect::<Vec<_>>());
    println!("true mean: {mean}");

    let budget = Budget::new(1.0, 1e-2, 1e-6, 0.99, 1e-2).expect("valid budget");
    let seed = Seed::new(3);
    let plan = plan_average(&budget, data.norm_squared(), &g, &gp, &MixingSource::auto(seed))
        .expect("plan");
    println!(
        "\nplanned: {} gossip steps, {} averaging rounds, noise std {:.1}",
        plan.gossip_steps, plan.averaging_rounds, plan.noise_std
    );

    let params = RunParams::from(&plan);
    let mut rng = seed.stream(0, "consensus");
    let run = run_consensus(&data, &g, &gp, &params, &mut rng).expect("run");

    let curve = run.error_curve();
    let s = plan.gossip_steps as usize;
    println!("\nsquared error to the mean along the run:");
    println!("  input:                  {:>12.4}", curve[0]);
    println!("  after gossip stage:     {:>12.4e}  (noise dominates here)", curve[s]);
    for t in [1usize, 10, 100, plan.averaging_rounds as usize] {
        if t <= plan.averaging_rounds as usize {
            println!("  after {t:>4} avg rounds:   {:>12.4e}", curve[s + t]);
        }
    }

    // The run-level guarantee: final MSE below the target accuracy, and
    // below the closed-form decay from the post-gossip level.
    let n = g.len() as f64;
    let q = gp.component_count() as f64;
    let steps = plan.gossip_steps as f64;
    let level = n * data.norm_squared() + 2.0 * q * q * steps * steps * plan.noise_std.powi(2);
    let bound =
        level * (1.0 - g.algebraic_connectivity()).powi(2 * plan.averaging_rounds as i32);
    println!("\nfinal squared error {:.3e}", run.final_error_sq);
    println!("analytic bound      {bound:.3e}");
    println!("target accuracy     {:.3e}", budget.accuracy());
    println!(
        "final states within {:.2e} of each other",
        run.final_state().max() - run.final_state().min()
    );
    assert!(run.final_error_sq <= bound, "bound must hold on a planned run");
}
