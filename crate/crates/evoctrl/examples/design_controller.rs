//! Reproduce the feedback-gain table: for each pole shift b, place the
//! leading complex pair of the mixed equilibrium at Re = -1/3 + b and print
//! the resulting gain row K.
//!
//!     cargo run --example design_controller

use evoctrl::cli::{channel_for, pick_anchor};
use evoctrl::control::{build_controller, TaxMode};
use evoctrl::game::paper_game;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let game = paper_game();
    let equilibria = game.find_equilibria(1e-9)?;
    let anchor = pick_anchor(&game, &equilibria)?;
    let channel = channel_for(&anchor, game.n())?;
    println!(
        "anchor x* = {:?}\nreward channel B = {:?}\n",
        anchor
            .point
            .iter()
            .map(|v| (v * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        channel
    );

    println!("   b        k1        k2        k3        k4        k5");
    for i in -4..=4 {
        let b = 0.2 * i as f64;
        let c = build_controller(&game, &anchor, &channel, b, TaxMode::ChannelSum)?;
        let row: Vec<String> = c.k.iter().map(|k| format!("{k:9.4}")).collect();
        println!("{b:+.1}  {}", row.join(" "));
        for w in &c.warnings {
            println!("       warning: {w}");
        }
    }

    // Past b = 1/3 the shifted pair crosses into the right half plane: the
    // design still solves, but it destabilizes the anchor on purpose.
    let c = build_controller(&game, &anchor, &channel, 1.0, TaxMode::ChannelSum)?;
    println!(
        "\nb = +1.0 solves too, with {} warning(s):",
        c.warnings.len()
    );
    for w in &c.warnings {
        println!("  {w}");
    }
    Ok(())
}
