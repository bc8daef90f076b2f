//! Run the finite-population counterpart of the controlled dynamics: 1000
//! imitating agents with mutation, steered by the same gain vector the ODE
//! design produced.
//!
//!     cargo run --release --example simulate_abm

use evoctrl::abm::{run_abm, AbmConfig};
use evoctrl::cli::{channel_for, pick_anchor};
use evoctrl::control::{build_controller, TaxMode};
use evoctrl::game::{nash_1, nash_2, paper_game};
use evoctrl::metrics::report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let game = paper_game();
    let equilibria = game.find_equilibria(1e-9)?;
    let anchor = pick_anchor(&game, &equilibria)?;
    let channel = channel_for(&anchor, game.n())?;

    for b in [-0.8, 0.8] {
        let controller = build_controller(&game, &anchor, &channel, b, TaxMode::ChannelSum)?;
        println!("b = {b:+.1} (seeds 1..3, 6000 rounds each)");
        for seed in 1..=3u64 {
            let cfg = AbmConfig {
                seed,
                controller: Some(controller.clone()),
                ..AbmConfig::default()
            };
            let traj = run_abm(&game, &cfg)?;
            let rep = report(&traj, &nash_1(), &nash_2(), 0.5)?;
            let terminal: Vec<String> = traj.terminal().iter().map(|v| format!("{v:.3}")).collect();
            println!(
                "  seed {seed}: selected = {:9}  terminal x = [{}]",
                rep.selected.to_string(),
                terminal.join(", ")
            );
        }
    }
    Ok(())
}
