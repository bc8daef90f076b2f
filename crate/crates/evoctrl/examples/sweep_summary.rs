//! Small end-to-end sweep (both engines, a coarse b grid, two seeds) written
//! to target/sweep_example, followed by the prediction evaluation step.
//!
//!     cargo run --release --example sweep_summary

use evoctrl::cli::{cmd_evaluate, cmd_sweep, Engine, SweepConfig};
use evoctrl::game::paper_game;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from("target/sweep_example");
    let cfg = SweepConfig {
        b_grid: vec![-0.8, -0.4, 0.4, 0.8],
        engines: vec![Engine::Ode, Engine::Abm],
        seeds: vec![1, 2],
        output_dir: out.clone(),
        rounds: 3000,
        ..SweepConfig::default()
    };
    cmd_sweep(&paper_game(), &cfg)?;

    let evaluation = cmd_evaluate(&out)?;
    println!(
        "\ndistribution prediction: {}",
        evaluation["predictions"]["distribution"]["pass"]
    );
    println!(
        "speed prediction:        {}",
        evaluation["predictions"]["speed"]["pass"]
    );
    println!(
        "cycles prediction:       {}",
        evaluation["predictions"]["cycles"]["pass"]
    );
    println!("\nartifacts under {}", out.display());
    Ok(())
}
