//! How fast does every node get touched? Empirical covering probabilities
//! against the analytic lower bound, for secure graphs with one, two and
//! three components — more components cover faster at the same step count.
//!
//!     cargo run --example covering_probability

use ppsc_gossip::audit::{covering_curve, covering_lower_bound};
use ppsc_gossip::rng::Seed;
use ppsc_gossip::PrivateGraph;

fn main() {
    let graphs = [
        ("one component (10-cycle)", cycle_edges(10)),
        ("two components (two 5-cycles)", {
            let mut e = cycle_edges(5);
            e.extend(cycle_edges(5).iter().map(|&(a, b)| (a + 5, b + 5)));
            e
        }),
        ("three components (4-cycle + triangle + path)", vec![
            (0, 1), (1, 2), (2, 3), (0, 3),
            (4, 5), (5, 6), (4, 6),
            (7, 8), (8, 9),
        ]),
    ];

    let seed = Seed::new(12);
    for (label, edges) in &graphs {
        let gp = PrivateGraph::new(10, edges).expect("valid graph");
        let mut rng = seed.stream(0, label);
        let curve = covering_curve(&gp, 40, 20_000, &mut rng).expect("estimate");
        println!("{label}:");
        println!("{:>6} {:>12} {:>12} {:>10}", "steps", "empirical", "lower bound", "std err");
        for estimate in curve.iter().filter(|e| e.steps % 5 == 0) {
            println!(
                "{:>6} {:>12.4} {:>12.4} {:>10.4}",
                estimate.steps, estimate.empirical, estimate.lower_bound, estimate.std_err
            );
            assert!(
                estimate.empirical >= estimate.lower_bound - 3.0 * estimate.std_err,
                "lower bound violated"
            );
        }
        // First step count whose analytic bound clears 99%: what a planner
        // would pick at that confidence.
        let needed = (1..200)
            .find(|&s| covering_lower_bound(&gp, s) >= 0.99)
            .expect("bound reaches 0.99");
        println!("analytic bound reaches 0.99 at {needed} steps\n");
    }
}

fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}
