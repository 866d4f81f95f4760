//! Solve a network of affine equations — one per node, never shared —
//! first without noise to see the pure projection recursion, then privately
//! with planned parameters.
//!
//!     cargo run --example linear_equations

use nalgebra::DVector;
use ppsc_gossip::linear_eq::{run_equation_solver, EquationSystem};
use ppsc_gossip::planner::{plan_equation_solver, Budget, MixingSource, DEFAULT_ERROR_SPLIT};
use ppsc_gossip::rng::Seed;
use ppsc_gossip::solver::RunParams;
use ppsc_gossip::{PrivateGraph, PublicGraph};

// Ten equations in six unknowns, consistent with [5, -10, 10, -5, 1, 5].
const SYSTEM: &str = "
1  2  0  0  0  0   -15
1  1  1  0  0  0     5
0  1  1  0  0  3    15
0 -1  1  2  5 -2     5
5 -2  0  2  0  1    40
2  0  1  0  2  1    27
1  1  1  2  0  1     0
3  1  5  6  8 -2    23
0 -2  0  1  5  0    20
0  0  0  0  2 -1    -3
";

fn main() {
    let system = EquationSystem::parse(SYSTEM).expect("consistent system");
    let solution = system.solution().expect("consistent").clone();
    println!("solution: {:?}", solution.iter().copied().collect::<Vec<_>>());
    println!("per-recursion contraction factor: {:.6}", system.contraction());

    let g = PublicGraph::cycle(10, 0.1).expect("valid ring");
    let gp = PrivateGraph::new(
        10,
        &[(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (4, 6), (7, 8), (8, 9)],
    )
    .expect("valid secure links");
    let start = DVector::zeros(6);
    let seed = Seed::new(11);

    // Noiseless first: plenty of recursions, essentially exact averaging.
    let params = RunParams::new(1, 0.0, 500, 900).expect("params");
    let mut rng = seed.stream(0, "noiseless");
    let run = run_equation_solver(&system, &g, &gp, &params, &start, &mut rng).expect("run");
    println!(
        "\nnoiseless: {} recursions leave max node distance {:.2e}",
        params.recursions,
        run.max_node_distance(&solution)
    );
    for l in [1usize, 10, 100, 900] {
        if let Some(error) = run.records[l - 1].error_sq {
            println!("  recursion {l:>4}: stacked squared error {error:.3e}");
        }
    }

    // Now privately, with everything derived from the budget.
    let budget = Budget::new(1.0, 1e-2, 1e-6, 0.95, 1e-1).expect("valid budget");
    let shape = system.geometry(&start).expect("geometry");
    let mixing = MixingSource::auto(seed);
    let plan = plan_equation_solver(&budget, &shape, DEFAULT_ERROR_SPLIT, &g, &gp, &mixing)
        .expect("plan");
    println!(
        "\nprivate: {} recursions x ({} gossip steps + {} averaging rounds), noise std {:.3e}",
        plan.recursions, plan.gossip_steps, plan.averaging_rounds, plan.noise_std
    );
    let mut rng = seed.stream(1, "private");
    let run = run_equation_solver(&system, &g, &gp, &RunParams::from(&plan), &start, &mut rng)
        .expect("run");
    println!(
        "final stacked squared error {:.3e} (target {}), every recursion covered: {}",
        run.final_error_sq(&solution),
        budget.accuracy(),
        run.all_covered
    );
}
