//! Walk the built-in game through the analysis stage: equilibria, local
//! Jacobians, spectra, and the payoff/eigenvalue identity.
//!
//!     cargo run --example analyze_game

use evoctrl::dynamics::jacobian_replicator;
use evoctrl::eigen::{eig, payoff_eigen_check};
use evoctrl::game::paper_game;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let game = paper_game();
    println!("payoff matrix ({} strategies):", game.n());
    let a = game.matrix();
    for row in a.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:5.1}")).collect();
        println!("  [{}]", cells.join(", "));
    }

    let equilibria = game.find_equilibria(1e-9)?;
    println!("\n{} Nash equilibria:", equilibria.len());
    for (i, eq) in equilibria.iter().enumerate() {
        let point: Vec<String> = eq.point.iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "\n#{} x* = [{}]  (support {:?}, expected payoff {:.4})",
            i + 1,
            point.join(", "),
            eq.support.iter().map(|s| s + 1).collect::<Vec<_>>(),
            eq.expected_payoff
        );

        let j = jacobian_replicator(&game, &eq.point)?;
        let sys = eig(&j)?;
        println!("  eigenvalues of the local Jacobian:");
        for l in &sys.eigenvalues {
            println!("    {:+.6} {:+.6}i", l.re, l.im);
        }
        // At an interior-of-support equilibrium the Jacobian column sums all
        // equal minus the expected payoff, which pins one eigenvalue.
        println!(
            "  payoff/eigenvalue identity holds: {}",
            payoff_eigen_check(&j, &eq.point, eq.expected_payoff)
        );
    }
    Ok(())
}
