//! Command-line workflow: analyze → design → simulate → sweep → evaluate.
//!
//! Subcommands: `analyze`, `design`, `simulate-ode`, `simulate-abm`, `sweep`,
//! `evaluate`. Exit codes: 0 success, 1 evaluation mismatch, 2 input error.
//! Every command is deterministic given its config and seeds; rerunning
//! produces byte-identical CSVs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::abm::{run_abm, AbmConfig, ADOPTION_SCALE};
use crate::control::{build_controller, Controller, TaxMode};
use crate::dynamics::{integrate, jacobian_replicator, ode_field, TrajectoryMeta};
use crate::eigen::{eig, eigencycles, payoff_eigen_check};
use crate::game::{paper_game, Equilibrium, Game};
use crate::metrics::{report, Selected};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "evoctrl",
    version,
    about = "Design and evaluate state-feedback controllers that steer equilibrium selection in evolutionary games"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Report equilibria, Jacobians, spectra, and eigencycle predictions.
    Analyze {
        /// Game source: `builtin:paper` or a CSV file path.
        #[arg(long, default_value = "builtin:paper")]
        game: String,
        /// Output directory for analysis.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve the gain table for one or more pole shifts.
    Design {
        #[arg(long, default_value = "builtin:paper")]
        game: String,
        /// Single pole shift b.
        #[arg(long)]
        b: Option<f64>,
        /// Grid `start:stop:step` or comma list; default -1:1:0.2.
        #[arg(long = "b-grid", allow_hyphen_values = true)]
        b_grid: Option<String>,
        #[arg(long = "tax-mode", default_value = "channel_sum")]
        tax_mode: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Integrate the controlled replicator ODE from the uniform state.
    SimulateOde {
        #[arg(long, default_value = "builtin:paper")]
        game: String,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long = "tax-mode", default_value = "channel_sum")]
        tax_mode: String,
        /// Append distance columns d1,d2 to the trajectory CSV.
        #[arg(long)]
        distances: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the agent-based model.
    SimulateAbm {
        #[arg(long, default_value = "builtin:paper")]
        game: String,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 6000)]
        rounds: usize,
        #[arg(long = "tax-mode", default_value = "channel_sum")]
        tax_mode: String,
        #[arg(long)]
        distances: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the full (b × engine × seed) sweep and evaluate the predictions.
    Sweep {
        /// TOML config file; flags below override its keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "builtin:paper")]
        game: String,
        #[arg(long = "b-grid", allow_hyphen_values = true)]
        b_grid: Option<String>,
        /// Comma list from {ode, abm}.
        #[arg(long)]
        engines: Option<String>,
        /// Comma list of seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long = "tax-mode")]
        tax_mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute evaluation.json from an existing summary.csv.
    Evaluate {
        /// Directory containing summary.csv (evaluation.json is written there).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Sweep parameters; the TOML config file uses exactly these keys, flat.
#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub b_grid: Vec<f64>,
    pub engines: Vec<Engine>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub tax_mode: TaxMode,
    pub horizon: f64,
    pub step: f64,
    pub rounds: usize,
    pub n_agents: usize,
    pub prob_revision: f64,
    pub prob_mutation: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            b_grid: (0..=10).map(|i| -1.0 + 0.2 * i as f64).collect(),
            engines: vec![Engine::Ode, Engine::Abm],
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            tax_mode: TaxMode::ChannelSum,
            horizon: 200.0,
            step: 0.01,
            rounds: 6000,
            n_agents: 1000,
            prob_revision: 0.2,
            prob_mutation: 0.05,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.b_grid.is_empty() {
            return Err(Error::Config("b_grid must be nonempty".into()));
        }
        if self
            .b_grid
            .iter()
            .any(|b| !(-1.0 - 1e-12..=1.0 + 1e-12).contains(b))
        {
            return Err(Error::Config("b_grid values must lie in [-1, 1]".into()));
        }
        if self.engines.is_empty() {
            return Err(Error::Config("engines must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        Ok(())
    }
}

/// Raw TOML keys: every field optional so the file may specify any subset.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfigFile {
    b_grid: Option<Vec<f64>>,
    engines: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    tax_mode: Option<String>,
    horizon: Option<f64>,
    step: Option<f64>,
    rounds: Option<usize>,
    n_agents: Option<usize>,
    prob_revision: Option<f64>,
    prob_mutation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Ode,
    Abm,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Engine::Ode => write!(f, "ode"),
            Engine::Abm => write!(f, "abm"),
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ode" => Ok(Engine::Ode),
            "abm" => Ok(Engine::Abm),
            other => Err(Error::Parse(format!(
                "unknown engine {other:?}; expected ode or abm"
            ))),
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(0);
        }
        // clap already formats rich messages; carry them through.
        Err(e) => return Err(Error::Parse(e.to_string())),
    };
    match cli.command {
        Command::Analyze { game, out } => {
            cmd_analyze(&load_game(&game)?, &out)?;
            Ok(0)
        }
        Command::Design {
            game,
            b,
            b_grid,
            tax_mode,
            out,
        } => {
            let grid = match (b, b_grid) {
                (Some(b), None) => vec![b],
                (None, Some(spec)) => parse_grid(&spec)?,
                (None, None) => parse_grid("-1:1:0.2")?,
                (Some(_), Some(_)) => {
                    return Err(Error::Config(
                        "--b and --b-grid are mutually exclusive".into(),
                    ))
                }
            };
            cmd_design(&load_game(&game)?, &grid, tax_mode.parse()?, &out)?;
            Ok(0)
        }
        Command::SimulateOde {
            game,
            b,
            horizon,
            step,
            tax_mode,
            distances,
            out,
        } => {
            cmd_simulate(
                &load_game(&game)?,
                Engine::Ode,
                b,
                0,
                &SimArgs {
                    horizon,
                    step,
                    rounds: 0,
                    n_agents: 0,
                    prob_revision: 0.0,
                    prob_mutation: 0.0,
                    tax_mode: tax_mode.parse()?,
                    distances,
                },
                &out,
            )?;
            Ok(0)
        }
        Command::SimulateAbm {
            game,
            b,
            seed,
            rounds,
            tax_mode,
            distances,
            out,
        } => {
            let defaults = AbmConfig::default();
            cmd_simulate(
                &load_game(&game)?,
                Engine::Abm,
                b,
                seed,
                &SimArgs {
                    horizon: 0.0,
                    step: 0.0,
                    rounds,
                    n_agents: defaults.n_agents,
                    prob_revision: defaults.prob_revision,
                    prob_mutation: defaults.prob_mutation,
                    tax_mode: tax_mode.parse()?,
                    distances,
                },
                &out,
            )?;
            Ok(0)
        }
        Command::Sweep {
            config,
            game,
            b_grid,
            engines,
            seeds,
            rounds,
            horizon,
            step,
            tax_mode,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => read_config(&path)?,
                None => SweepConfig::default(),
            };
            if let Some(spec) = b_grid {
                cfg.b_grid = parse_grid(&spec)?;
            }
            if let Some(raw) = engines {
                cfg.engines = raw
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?;
            }
            if let Some(raw) = seeds {
                cfg.seeds = raw
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse::<u64>()
                            .map_err(|_| Error::Parse(format!("bad seed {s:?}")))
                    })
                    .collect::<Result<_>>()?;
            }
            if let Some(r) = rounds {
                cfg.rounds = r;
            }
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(s) = step {
                cfg.step = s;
            }
            if let Some(m) = tax_mode {
                cfg.tax_mode = m.parse()?;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            cmd_sweep(&load_game(&game)?, &cfg)?;
            Ok(0)
        }
        Command::Evaluate { out } => {
            let evaluation = cmd_evaluate(&out)?;
            let pass = evaluation["overall_pass"].as_bool().unwrap_or(false);
            Ok(if pass { 0 } else { 1 })
        }
    }
}

/// Loads `builtin:paper` or a CSV path.
pub fn load_game(source: &str) -> Result<Game> {
    match source {
        "builtin:paper" => Ok(paper_game()),
        path => Game::from_csv(path),
    }
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parse_one = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number {s:?} in grid spec")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "grid spec must be start:stop:step, got {spec:?}"
            )));
        }
        let (start, stop, step) = (
            parse_one(parts[0])?,
            parse_one(parts[1])?,
            parse_one(parts[2])?,
        );
        if !(start.is_finite() && stop.is_finite() && step > 0.0) || stop < start {
            return Err(Error::Parse(format!("degenerate grid spec {spec:?}")));
        }
        let count = ((stop - start) / step).round() as usize;
        Ok((0..=count)
            .map(|i| {
                let v = start + step * i as f64;
                // Snap to a clean decimal so grid labels stay stable.
                (v * 1e9).round() / 1e9
            })
            .collect())
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(parse_one)
            .collect()
    }
}

/// Reads the flat TOML config and fills unspecified keys from defaults.
pub fn read_config(path: &Path) -> Result<SweepConfig> {
    let raw = std::fs::read_to_string(path)?;
    let file: SweepConfigFile =
        toml::from_str(&raw).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let d = SweepConfig::default();
    Ok(SweepConfig {
        b_grid: file.b_grid.unwrap_or(d.b_grid),
        engines: match file.engines {
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            None => d.engines,
        },
        seeds: file.seeds.unwrap_or(d.seeds),
        output_dir: file.output_dir.unwrap_or(d.output_dir),
        tax_mode: match file.tax_mode {
            Some(s) => s.parse()?,
            None => d.tax_mode,
        },
        horizon: file.horizon.unwrap_or(d.horizon),
        step: file.step.unwrap_or(d.step),
        rounds: file.rounds.unwrap_or(d.rounds),
        n_agents: file.n_agents.unwrap_or(d.n_agents),
        prob_revision: file.prob_revision.unwrap_or(d.prob_revision),
        prob_mutation: file.prob_mutation.unwrap_or(d.prob_mutation),
    })
}

/// Picks the equilibrium whose linearization carries a complex pair (the one
/// with something to rotate, hence something to control); errors when the
/// game has no equilibrium at all.
pub fn pick_anchor(game: &Game, equilibria: &[Equilibrium]) -> Result<Equilibrium> {
    if equilibria.is_empty() {
        return Err(Error::NoEquilibrium);
    }
    for eq in equilibria {
        let j = jacobian_replicator(game, &eq.point)?;
        let sys = eig(&j)?;
        if sys.eigenvalues.iter().any(|l| l.im.abs() > 1e-9) {
            return Ok(eq.clone());
        }
    }
    Err(Error::DegenerateTarget(
        "no equilibrium has a complex pair to control".into(),
    ))
}

/// Channel vector feeding the strategies outside the anchor's support.
pub fn channel_for(anchor: &Equilibrium, n: usize) -> Result<Vec<f64>> {
    let channel: Vec<f64> = (0..n)
        .map(|i| {
            if anchor.support.contains(&i) {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    if channel.iter().all(|v| *v == 0.0) {
        return Err(Error::UncontrollableChannel(
            "anchor support covers every strategy; no reward channel left".into(),
        ));
    }
    Ok(channel)
}

fn design_for(game: &Game, b: f64, tax_mode: TaxMode) -> Result<(Controller, Equilibrium)> {
    let equilibria = game.find_equilibria(1e-9)?;
    let anchor = pick_anchor(game, &equilibria)?;
    let channel = channel_for(&anchor, game.n())?;
    let controller = build_controller(game, &anchor, &channel, b, tax_mode)?;
    Ok((controller, anchor))
}

/// `analyze`: equilibria, Jacobians, spectra, payoff identity, and eigencycle
/// predictions, printed and written to `analysis.json`.
pub fn cmd_analyze(game: &Game, out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let equilibria = game.find_equilibria(1e-9)?;
    if equilibria.is_empty() {
        return Err(Error::NoEquilibrium);
    }
    println!(
        "game: {} strategies, {} equilibri{}",
        game.n(),
        equilibria.len(),
        if equilibria.len() == 1 { "um" } else { "a" }
    );
    let mut entries = Vec::new();
    for eq in &equilibria {
        let j = jacobian_replicator(game, &eq.point)?;
        let sys = eig(&j)?;
        let check = payoff_eigen_check(&j, &eq.point, eq.expected_payoff);
        let cycles = sys
            .eigenvalues
            .iter()
            .position(|l| l.im < -1e-9)
            .map(|idx| {
                let v: Vec<_> = sys.right_vectors.column(idx).iter().copied().collect();
                eigencycles(&v).to_map()
            });
        println!(
            "  x* = [{}], payoff {:.4}, eigenvalues {}",
            eq.point
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            eq.expected_payoff,
            sys.eigenvalues
                .iter()
                .map(|l| format!("{:.4}{:+.4}i", l.re, l.im))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let jacobian: Vec<Vec<f64>> = (0..game.n())
            .map(|r| (0..game.n()).map(|c| j[(r, c)]).collect())
            .collect();
        entries.push(json!({
            "point": eq.point,
            "support": eq.support,
            "support_labels": eq.support.iter().map(|&i| game.labels()[i].clone()).collect::<Vec<_>>(),
            "expected_payoff": eq.expected_payoff,
            "kind": eq.kind,
            "jacobian": jacobian,
            "eigen": sys.to_json(),
            "payoff_eigen_check": check,
            "eigencycles": cycles,
        }));
    }
    let path = out.join("analysis.json");
    let doc = json!({
        "game": { "n": game.n(), "labels": game.labels() },
        "equilibria": entries,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// `design`: gain rows for a b grid → `gains.csv` + `design_report.json`
/// (pole residuals, K·x* residuals, warnings).
pub fn cmd_design(game: &Game, grid: &[f64], tax_mode: TaxMode, out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let equilibria = game.find_equilibria(1e-9)?;
    let anchor = pick_anchor(game, &equilibria)?;
    let channel = channel_for(&anchor, game.n())?;
    let j0 = jacobian_replicator(game, &anchor.point)?;
    let sys = eig(&j0)?;

    let mut rows = Vec::new();
    let mut report_rows = Vec::new();
    for &b in grid {
        let controller = build_controller(game, &anchor, &channel, b, tax_mode)?;
        let target = crate::control::desired_poles(&sys.eigenvalues, b)?;
        let jc = crate::dynamics::jacobian_controlled(game, &anchor.point, &controller)?;
        let pole_residual = crate::control::spectrum_distance(&jc, &target.values)?;
        let kx_residual = controller.kx(&anchor.point).abs();
        report_rows.push(json!({
            "b": b,
            "k": controller.k,
            "pole_residual": pole_residual,
            "kx_residual": kx_residual,
            "warnings": controller.warnings,
        }));
        rows.push((b, controller.k));
    }
    let csv_path = out.join("gains.csv");
    crate::control::write_gains_csv(&rows, &csv_path)?;
    let report_path = out.join("design_report.json");
    let doc = json!({
        "tax_mode": tax_mode,
        "anchor": anchor,
        "channel": channel,
        "rows": report_rows,
    });
    std::fs::write(&report_path, serde_json::to_string_pretty(&doc)?)?;
    println!("wrote {} and {}", csv_path.display(), report_path.display());
    Ok(csv_path)
}

struct SimArgs {
    horizon: f64,
    step: f64,
    rounds: usize,
    n_agents: usize,
    prob_revision: f64,
    prob_mutation: f64,
    tax_mode: TaxMode,
    distances: bool,
}

/// `simulate-ode` / `simulate-abm`: one run → trajectory CSV + manifest.
fn cmd_simulate(
    game: &Game,
    engine: Engine,
    b: f64,
    seed: u64,
    args: &SimArgs,
    out: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let started = Instant::now();
    let (controller, _anchor) = design_for(game, b, args.tax_mode)?;
    let traj = match engine {
        Engine::Ode => {
            let x0 = vec![1.0 / game.n() as f64; game.n()];
            integrate(
                ode_field(game, Some(&controller)),
                &x0,
                args.step,
                args.horizon,
                TrajectoryMeta {
                    kind: "ode".into(),
                    b: Some(b),
                    seed: None,
                    step: Some(args.step),
                },
            )?
        }
        Engine::Abm => {
            let cfg = AbmConfig {
                n_agents: args.n_agents,
                initial_counts: uniform_counts(args.n_agents, game.n()),
                prob_revision: args.prob_revision,
                prob_mutation: args.prob_mutation,
                rounds: args.rounds,
                seed,
                controller: Some(controller.clone()),
                ..AbmConfig::default()
            };
            run_abm(game, &cfg)?
        }
    };
    let equilibria = game.find_equilibria(1e-9)?;
    let (n1, n2) = principal_pair(&equilibria);
    let traj_path = out.join("trajectory.csv");
    if args.distances {
        traj.write_csv_with_distances(&traj_path, &n1, &n2)?;
    } else {
        traj.write_csv(&traj_path)?;
    }
    let manifest = json!({
        "engine": engine,
        "b": b,
        "seed": if engine == Engine::Abm { Some(seed) } else { None },
        "rounds": if engine == Engine::Abm { Some(args.rounds) } else { None },
        "horizon": if engine == Engine::Ode { Some(args.horizon) } else { None },
        "step": if engine == Engine::Ode { Some(args.step) } else { None },
        "tax_mode": args.tax_mode,
        "controller": controller,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "trajectory": "trajectory.csv",
    });
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("wrote {} ({} rows)", traj_path.display(), traj.len());
    Ok(traj_path)
}

fn uniform_counts(n_agents: usize, n: usize) -> Vec<usize> {
    let base = n_agents / n;
    let mut counts = vec![base; n];
    for slot in counts.iter_mut().take(n_agents % n) {
        *slot += 1;
    }
    counts
}

/// The two reference points all metrics are computed against: the anchor-like
/// equilibrium (complex pair) first, the other one second. Falls back to
/// repeating the single equilibrium when only one exists.
fn principal_pair(equilibria: &[Equilibrium]) -> (Vec<f64>, Vec<f64>) {
    match equilibria {
        [only] => (only.point.clone(), only.point.clone()),
        [a, b, ..] => (a.point.clone(), b.point.clone()),
        [] => (vec![], vec![]),
    }
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub b: f64,
    pub engine: Engine,
    pub seed: u64,
    pub selected: Selected,
    pub tau_half: Option<f64>,
    pub l_strength: f64,
    pub rho: Vec<f64>,
}

/// `sweep`: every (b, engine, seed) run, per-run artifacts, `summary.csv`,
/// `evaluation.json`. Run failures are recorded per run; only design failures
/// abort the sweep.
pub fn cmd_sweep(game: &Game, cfg: &SweepConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out.join("runs"))?;

    // Design once per b up front: a design failure is fatal.
    let mut controllers: Vec<(f64, Controller)> = Vec::new();
    for &b in &cfg.b_grid {
        let (controller, _) = design_for(game, b, cfg.tax_mode)?;
        controllers.push((b, controller));
    }
    let equilibria = game.find_equilibria(1e-9)?;
    let (n1, n2) = principal_pair(&equilibria);

    let mut specs: Vec<(f64, Controller, Engine, u64)> = Vec::new();
    for (b, c) in &controllers {
        for &engine in &cfg.engines {
            for &seed in &cfg.seeds {
                specs.push((*b, c.clone(), engine, seed));
            }
        }
    }

    let results: Vec<Result<SummaryRow>> = specs
        .into_par_iter()
        .map(|(b, controller, engine, seed)| {
            run_one(game, cfg, b, controller, engine, seed, &n1, &n2, out)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(e.to_string()),
        }
    }
    rows.sort_by(|a, b| {
        a.b.total_cmp(&b.b)
            .then_with(|| a.engine.to_string().cmp(&b.engine.to_string()))
            .then_with(|| a.seed.cmp(&b.seed))
    });

    let summary_path = out.join("summary.csv");
    write_summary(&rows, &summary_path)?;
    if !failures.is_empty() {
        std::fs::write(
            out.join("failures.json"),
            serde_json::to_string_pretty(&failures)?,
        )?;
        eprintln!("{} run(s) failed; see failures.json", failures.len());
    }
    let evaluation = evaluate_rows(&rows, &n1, &n2, cfg.prob_revision);
    std::fs::write(
        out.join("evaluation.json"),
        serde_json::to_string_pretty(&evaluation)?,
    )?;
    println!(
        "wrote {} ({} rows) and {}",
        summary_path.display(),
        rows.len(),
        out.join("evaluation.json").display()
    );
    Ok(summary_path)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    game: &Game,
    cfg: &SweepConfig,
    b: f64,
    controller: Controller,
    engine: Engine,
    seed: u64,
    n1: &[f64],
    n2: &[f64],
    out: &Path,
) -> Result<SummaryRow> {
    let traj = match engine {
        Engine::Ode => {
            let x0 = vec![1.0 / game.n() as f64; game.n()];
            integrate(
                ode_field(game, Some(&controller)),
                &x0,
                cfg.step,
                cfg.horizon,
                TrajectoryMeta {
                    kind: "ode".into(),
                    b: Some(b),
                    seed: None,
                    step: Some(cfg.step),
                },
            )?
        }
        Engine::Abm => run_abm(
            game,
            &AbmConfig {
                n_agents: cfg.n_agents,
                initial_counts: uniform_counts(cfg.n_agents, game.n()),
                prob_revision: cfg.prob_revision,
                prob_mutation: cfg.prob_mutation,
                rounds: cfg.rounds,
                seed,
                controller: Some(controller.clone()),
                ..AbmConfig::default()
            },
        )?,
    };
    let dir = out.join("runs").join(format!("b{b:+.4}_{engine}_s{seed}"));
    std::fs::create_dir_all(&dir)?;
    traj.write_csv_with_distances(dir.join("trajectory.csv"), n1, n2)?;
    let rep = report(&traj, n1, n2, 0.5)?;
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&rep)?,
    )?;
    Ok(SummaryRow {
        b,
        engine,
        seed,
        selected: rep.selected,
        tau_half: rep.tau_half,
        l_strength: rep.l_strength,
        rho: rep.mean_distribution,
    })
}

fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    use std::io::Write;
    let n = rows.first().map_or(5, |r| r.rho.len());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("b,engine,seed,selected,tau_half,L_strength");
    for i in 1..=n {
        header.push_str(&format!(",rho{i}"));
    }
    writeln!(out, "{header}")?;
    for r in rows {
        let tau = r.tau_half.map(crate::dynamics::fmt12).unwrap_or_default();
        let mut line = format!(
            "{:.4},{},{},{},{},{}",
            r.b,
            r.engine,
            r.seed,
            r.selected,
            tau,
            crate::dynamics::fmt12(r.l_strength)
        );
        for v in &r.rho {
            line.push(',');
            line.push_str(&crate::dynamics::fmt12(*v));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a summary.csv back into rows.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty summary.csv".into()))?;
    if !header.starts_with("b,engine,seed,selected,tau_half,L_strength") {
        return Err(Error::Parse(format!("unexpected summary header: {header}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(Error::Parse(format!("summary row {} too short", i + 2)));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad {what} in summary row {}", i + 2)))
        };
        rows.push(SummaryRow {
            b: parse_f(fields[0], "b")?,
            engine: fields[1].parse()?,
            seed: fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("bad seed in summary row {}", i + 2)))?,
            selected: fields[3].parse()?,
            tau_half: if fields[4].is_empty() {
                None
            } else {
                Some(parse_f(fields[4], "tau_half")?)
            },
            l_strength: parse_f(fields[5], "L_strength")?,
            rho: fields[6..]
                .iter()
                .map(|s| parse_f(s, "rho"))
                .collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// `evaluate`: recompute evaluation.json from summary.csv alone.
pub fn cmd_evaluate(out: &Path) -> Result<serde_json::Value> {
    let summary_path = out.join("summary.csv");
    let rows = read_summary(&summary_path)?;
    // The reference points are properties of the builtin game's workflow;
    // evaluation needs only the two target distributions.
    let game = paper_game();
    let equilibria = game.find_equilibria(1e-9)?;
    let (n1, n2) = principal_pair(&equilibria);
    let evaluation = evaluate_rows(&rows, &n1, &n2, AbmConfig::default().prob_revision);
    std::fs::write(
        out.join("evaluation.json"),
        serde_json::to_string_pretty(&evaluation)?,
    )?;
    let pass = evaluation["overall_pass"].as_bool().unwrap_or(false);
    println!(
        "evaluation: {}",
        if pass {
            "all predictions hold"
        } else {
            "prediction mismatch"
        }
    );
    Ok(evaluation)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    Some(values[values.len() / 2])
}

/// The three qualitative predictions, computed from summary rows alone:
///
/// 1. **Distribution**: the seed-averaged long-run distribution is nearer the
///    first equilibrium for b < 0 and nearer the second for b > 0.
/// 2. **Speed**: per engine, the median τ₁/₂ chain is strictly increasing
///    over b ∈ [−0.8, 0] and strictly decreasing over b ∈ [0.2, 0.8].
/// 3. **Cycles**: per engine, the median cycle strength at b = +0.8 is less
///    than 10% of the value at b = −0.8.
pub fn evaluate_rows(
    rows: &[SummaryRow],
    n1: &[f64],
    n2: &[f64],
    prob_revision: f64,
) -> serde_json::Value {
    let engines: Vec<Engine> = {
        let mut e: Vec<Engine> = Vec::new();
        for r in rows {
            if !e.contains(&r.engine) {
                e.push(r.engine);
            }
        }
        e
    };
    let mut b_values: Vec<f64> = Vec::new();
    for r in rows {
        if !b_values.iter().any(|v| (v - r.b).abs() < 1e-9) {
            b_values.push(r.b);
        }
    }
    b_values.sort_by(|a, b| a.total_cmp(b));

    let mean_rho = |b: f64, engine: Engine| -> Option<Vec<f64>> {
        let matching: Vec<&SummaryRow> = rows
            .iter()
            .filter(|r| r.engine == engine && (r.b - b).abs() < 1e-9)
            .collect();
        let first = matching.first()?;
        let dim = first.rho.len();
        let mut mean = vec![0.0; dim];
        for r in &matching {
            for (m, v) in mean.iter_mut().zip(&r.rho) {
                *m += v / matching.len() as f64;
            }
        }
        Some(mean)
    };

    // Prediction 1: distribution direction.
    let mut dist_pass = true;
    let mut dist_detail = serde_json::Map::new();
    for &b in &b_values {
        if b.abs() < 1e-9 {
            continue;
        }
        for &engine in &engines {
            if let Some(rho) = mean_rho(b, engine) {
                let d1 = crate::dynamics::euclid(&rho, n1);
                let d2 = crate::dynamics::euclid(&rho, n2);
                let ok = if b < 0.0 { d1 < d2 } else { d2 < d1 };
                dist_pass &= ok;
                dist_detail.insert(
                    format!("b={b:+.4},{engine}"),
                    json!({ "d_nash1": d1, "d_nash2": d2, "ok": ok }),
                );
            }
        }
    }

    // Prediction 2: speed ordering of the τ chains.
    let tau_chain = |engine: Engine, side: &[f64]| -> Vec<Option<f64>> {
        side.iter()
            .map(|&b| {
                let mut taus: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.engine == engine && (r.b - b).abs() < 1e-9)
                    .filter_map(|r| r.tau_half)
                    .collect();
                median(&mut taus)
            })
            .collect()
    };
    let neg_side: Vec<f64> = b_values
        .iter()
        .copied()
        .filter(|&b| (-0.8 - 1e-9..=1e-9).contains(&b))
        .collect();
    let pos_side: Vec<f64> = b_values
        .iter()
        .copied()
        .filter(|&b| (0.2 - 1e-9..=0.8 + 1e-9).contains(&b))
        .collect();
    let mut speed_pass = true;
    let mut speed_detail = serde_json::Map::new();
    for &engine in &engines {
        let neg = tau_chain(engine, &neg_side);
        let pos = tau_chain(engine, &pos_side);
        let monotone = |chain: &[Option<f64>], increasing: bool| -> bool {
            let present: Vec<f64> = chain.iter().filter_map(|v| *v).collect();
            if present.len() != chain.len() {
                return false;
            }
            present
                .windows(2)
                .all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
        };
        let neg_ok = neg.len() < 2 || monotone(&neg, true);
        let pos_ok = pos.len() < 2 || monotone(&pos, false);
        speed_pass &= neg_ok && pos_ok;
        speed_detail.insert(
            engine.to_string(),
            json!({
                "b_negative": neg_side,
                "tau_negative": neg,
                "increasing_ok": neg_ok,
                "b_positive": pos_side,
                "tau_positive": pos,
                "decreasing_ok": pos_ok,
            }),
        );
    }

    // Prediction 3: cycles vanish on the positive side.
    let mut cycles_pass = true;
    let mut cycles_detail = serde_json::Map::new();
    let b_neg = b_values
        .iter()
        .copied()
        .find(|&b| (b + 0.8).abs() < 1e-9)
        .or_else(|| b_values.first().copied().filter(|&b| b < 0.0));
    let b_pos = b_values
        .iter()
        .copied()
        .find(|&b| (b - 0.8).abs() < 1e-9)
        .or_else(|| b_values.last().copied().filter(|&b| b > 0.0));
    match (b_neg, b_pos) {
        (Some(bn), Some(bp)) => {
            for &engine in &engines {
                let mut l_neg: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.engine == engine && (r.b - bn).abs() < 1e-9)
                    .map(|r| r.l_strength)
                    .collect();
                let mut l_pos: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.engine == engine && (r.b - bp).abs() < 1e-9)
                    .map(|r| r.l_strength)
                    .collect();
                match (median(&mut l_neg), median(&mut l_pos)) {
                    (Some(ln), Some(lp)) => {
                        let ok = lp < 0.1 * ln;
                        cycles_pass &= ok;
                        cycles_detail.insert(
                            engine.to_string(),
                            json!({
                                "b_negative": bn,
                                "L_negative": ln,
                                "b_positive": bp,
                                "L_positive": lp,
                                "ratio": if ln > 0.0 { lp / ln } else { f64::NAN },
                                "ok": ok,
                            }),
                        );
                    }
                    _ => {
                        cycles_pass = false;
                    }
                }
            }
        }
        _ => {
            cycles_detail.insert(
                "skipped".into(),
                json!("grid does not straddle b = 0; cycle prediction not evaluated"),
            );
        }
    }

    let overall = dist_pass && speed_pass && cycles_pass;
    json!({
        "time_scale": {
            "prob_revision": prob_revision,
            "adoption_scale": ADOPTION_SCALE,
            "ode_time_per_round": prob_revision * ADOPTION_SCALE,
            "note": "ODE τ values are in model time, ABM τ values in rounds; conversion factor reported, never applied silently",
        },
        "predictions": {
            "distribution": { "pass": dist_pass, "detail": dist_detail },
            "speed": { "pass": speed_pass, "detail": speed_detail },
            "cycles": { "pass": cycles_pass, "detail": cycles_detail },
        },
        "overall_pass": overall,
    })
}
