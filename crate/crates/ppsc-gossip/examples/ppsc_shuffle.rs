//! The core mechanism in isolation: gossip exchanges that bury each node's
//! value in noise while conserving every column sum exactly, plus the
//! transcript replay that proves the run is a linear map of its inputs.
//!
//!     cargo run --example ppsc_shuffle

use nalgebra::DMatrix;
use ppsc_gossip::ppsc::{run_ppsc, stacked_noises, transcript_matrices};
use ppsc_gossip::rng::Seed;
use ppsc_gossip::{PpscConfig, PrivateGraph};

fn main() {
    let gp = PrivateGraph::new(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5)])
        .expect("valid secure links");
    let initial = DMatrix::from_row_slice(6, 2, &[
        1.0, -3.0,
        2.0, 0.5,
        4.0, 1.0,
        -1.0, 2.0,
        0.0, -2.0,
        3.0, 7.0,
    ]);
    let config = PpscConfig::new(8, 25.0, 2).expect("valid config");
    let mut rng = Seed::new(42).stream(0, "shuffle");

    let (state, transcript) = run_ppsc(&initial, &gp, &config, &mut rng).expect("run");

    println!("before:");
    print_state(&initial);
    println!("after {} steps with noise std {}:", config.steps(), config.noise_std());
    print_state(&state);

    for c in 0..initial.ncols() {
        println!(
            "column {c}: sum before {:>6.2}, after {:>6.2}, drift {:.2e}",
            initial.column(c).sum(),
            state.column(c).sum(),
            (initial.column(c).sum() - state.column(c).sum()).abs()
        );
    }

    // The transcript pins the whole run down: final = flow·initial + mix·noise.
    let matrices = transcript_matrices(&transcript, &gp).expect("matrices");
    let replayed = matrices.replay(&initial, &stacked_noises(&transcript, &gp));
    let gap = (&replayed - &state).abs().max();
    println!("\ntranscript replay max deviation: {gap:.2e}");
    println!(
        "noise-mixing matrix: {}x{}, smallest nonzero singular value {:.4}",
        matrices.noise_mix.nrows(),
        matrices.noise_mix.ncols(),
        matrices.min_nonzero_singular_value()
    );

    // Round-trip through the text form.
    let text = transcript.to_text();
    let parsed = ppsc_gossip::Transcript::parse(&text).expect("parse");
    assert_eq!(parsed.entries.len(), transcript.entries.len());
    println!("transcript text form: {} lines", text.lines().count());
}

fn print_state(state: &DMatrix<f64>) {
    for i in 0..state.nrows() {
        let row: Vec<String> = state.row(i).iter().map(|v| format!("{v:>9.3}")).collect();
        println!("  node {i}: [{}]", row.join(", "));
    }
}
