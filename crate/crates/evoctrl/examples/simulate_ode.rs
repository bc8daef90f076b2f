//! Integrate the controlled replicator dynamics from the uniform state and
//! watch which equilibrium the flow selects as the pole shift changes sign.
//!
//!     cargo run --example simulate_ode

use evoctrl::cli::{channel_for, pick_anchor};
use evoctrl::control::{build_controller, TaxMode};
use evoctrl::dynamics::{integrate, ode_field, TrajectoryMeta};
use evoctrl::game::{nash_1, nash_2, paper_game};
use evoctrl::metrics::report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let game = paper_game();
    let equilibria = game.find_equilibria(1e-9)?;
    let anchor = pick_anchor(&game, &equilibria)?;
    let channel = channel_for(&anchor, game.n())?;
    let x0 = vec![0.2; 5];

    for b in [-0.8, -0.4, 0.0, 0.4, 0.8] {
        let controller = build_controller(&game, &anchor, &channel, b, TaxMode::ChannelSum)?;
        let traj = integrate(
            ode_field(&game, Some(&controller)),
            &x0,
            0.01,
            200.0,
            TrajectoryMeta {
                kind: "ode".into(),
                b: Some(b),
                seed: None,
                step: Some(0.01),
            },
        )?;
        let rep = report(&traj, &nash_1(), &nash_2(), 0.5)?;
        let terminal: Vec<String> = traj.terminal().iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "b = {b:+.1}  selected = {:9}  tau_half = {:>8}  terminal x = [{}]",
            rep.selected.to_string(),
            rep.tau_half
                .map(|t| format!("{t:.2}"))
                .unwrap_or_else(|| "-".into()),
            terminal.join(", ")
        );
    }
    Ok(())
}
