//! End-to-end acceptance suite. Each test is one pass/fail line for one
//! criterion; the numbers frozen here were derived independently of the
//! implementation (by hand or with an exact-arithmetic script) before the
//! modules were written.

use std::time::Instant;

use evoctrl::abm::{run_abm, AbmConfig};
use evoctrl::cli::{channel_for, pick_anchor};
use evoctrl::control::{build_controller, desired_poles, spectrum_distance, Controller, TaxMode};
use evoctrl::dynamics::{
    controlled_field, integrate, jacobian_controlled, jacobian_replicator, ode_field,
    per_agent_adjustment, Trajectory, TrajectoryMeta,
};
use evoctrl::eigen::eig;
use evoctrl::game::{nash_1, nash_2, paper_game, Game};
use evoctrl::metrics::{
    angular_momentum_all, cycle_strength, distance_series, half_time, tail_window, THRESHOLD_NASH1,
    THRESHOLD_NASH2,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

/// Gain rows (b, k1..k5) solved by hand from the eigenstructure equations
/// for the pair shift Re λ → −1/3 + b, rounded to four decimals.
const GAIN_TABLE: [(f64, [f64; 5]); 9] = [
    (-0.8, [0.5247, 0.9485, -1.4732, -1.8335, 0.2335]),
    (-0.6, [0.4843, 0.5524, -1.0368, -1.3232, 0.1232]),
    (-0.4, [0.3834, 0.2623, -0.6458, -0.8476, 0.0476]),
    (-0.2, [0.2220, 0.0782, -0.3002, -0.4065, 0.0065]),
    (0.0, [0.0, 0.0, 0.0, 0.0, 0.0]),
    (0.2, [-0.2825, 0.0277, 0.2548, 0.3719, 0.0281]),
    (0.4, [-0.6256, 0.1614, 0.4641, 0.7092, 0.0908]),
    (0.6, [-1.0292, 0.4011, 0.6281, 1.0119, 0.1881]),
    (0.8, [-1.4933, 0.7467, 0.7467, 1.2800, 0.3200]),
];

const OMEGA: f64 = 0.577_350_269_189_625_8; // √3/3

fn designed(game: &Game, b: f64) -> Controller {
    let eqs = game.find_equilibria(1e-9).unwrap();
    let anchor = pick_anchor(game, &eqs).unwrap();
    let channel = channel_for(&anchor, game.n()).unwrap();
    build_controller(game, &anchor, &channel, b, TaxMode::ChannelSum).unwrap()
}

fn ode_run(game: &Game, controller: &Controller) -> Trajectory {
    integrate(
        ode_field(game, Some(controller)),
        &[0.2; 5],
        0.01,
        200.0,
        TrajectoryMeta {
            kind: "ode".into(),
            b: Some(controller.b),
            seed: None,
            step: Some(0.01),
        },
    )
    .unwrap()
}

fn abm_run(game: &Game, controller: &Controller, seed: u64) -> Trajectory {
    run_abm(
        game,
        &AbmConfig {
            seed,
            controller: Some(controller.clone()),
            ..AbmConfig::default()
        },
    )
    .unwrap()
}

#[test]
fn criterion_1_jacobian_reproduction() {
    let game = paper_game();
    let x = nash_1();
    // Warm up, then time a single evaluation.
    let _ = jacobian_replicator(&game, &x).unwrap();
    let t0 = Instant::now();
    let j = jacobian_replicator(&game, &x).unwrap();
    let elapsed = t0.elapsed();

    let expected_ninths = [
        [-4.0, -4.0, 2.0, 1.0, 1.0],
        [2.0, -4.0, -4.0, -5.0, 7.0],
        [-4.0, 2.0, -4.0, 7.0, 4.0],
        [0.0, 0.0, 0.0, -9.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, -18.0],
    ];
    for r in 0..5 {
        for c in 0..5 {
            assert!(
                (j[(r, c)] - expected_ninths[r][c] / 9.0).abs() < 1e-12,
                "entry ({r},{c}): {} vs {}",
                j[(r, c)],
                expected_ninths[r][c] / 9.0
            );
        }
    }
    assert!(
        elapsed.as_micros() < 1000,
        "jacobian evaluation took {elapsed:?} (budget 1 ms)"
    );
}

#[test]
fn criterion_2_spectrum_reproduction() {
    let game = paper_game();
    let expected_nash1 = [
        (-1.0 / 3.0, OMEGA),
        (-1.0 / 3.0, -OMEGA),
        (-2.0 / 3.0, 0.0),
        (-1.0, 0.0),
        (-2.0, 0.0),
    ];
    let expected_nash2 = [
        (0.0, 0.0),
        (-0.5, 0.0),
        (-0.5, 0.0),
        (-1.5, 0.0),
        (-1.5, 0.0),
    ];
    for (point, expected) in [(nash_1(), expected_nash1), (nash_2(), expected_nash2)] {
        let j = jacobian_replicator(&game, &point).unwrap();
        let sys = eig(&j).unwrap();
        for (l, (re, im)) in sys.eigenvalues.iter().zip(expected) {
            assert!(
                (l.re - re).abs() < 1e-9 && (l.im - im).abs() < 1e-9,
                "eigenvalue {l} vs expected {re}{im:+}i"
            );
        }
    }
}

#[test]
fn criterion_3_gain_table_reproduction() {
    let game = paper_game();
    let eqs = game.find_equilibria(1e-9).unwrap();
    let anchor = pick_anchor(&game, &eqs).unwrap();
    let channel = channel_for(&anchor, game.n()).unwrap();
    let j0 = jacobian_replicator(&game, &anchor.point).unwrap();
    let open_loop = eig(&j0).unwrap();

    // The matching tax convention is channel_sum (recorded here; the plain
    // mode yields the same K but a different tax field).
    let tax_mode = TaxMode::ChannelSum;
    for (b, expected_k) in GAIN_TABLE {
        let c = build_controller(&game, &anchor, &channel, b, tax_mode).unwrap();
        for (i, (got, want)) in c.k.iter().zip(expected_k).enumerate() {
            assert!(
                (got - want).abs() < 1e-3,
                "b = {b}: k{} = {got:.6} vs {want:.4}",
                i + 1
            );
        }

        let target = desired_poles(&open_loop.eigenvalues, b).unwrap();
        let jc = jacobian_controlled(&game, &anchor.point, &c).unwrap();
        let residual = spectrum_distance(&jc, &target.values).unwrap();
        assert!(
            residual < 1e-6,
            "b = {b}: closed-loop spectrum off target by {residual:.2e}"
        );

        let kx = c.kx(&anchor.point).abs();
        assert!(kx <= 1e-3, "b = {b}: |K·x*| = {kx:.2e}");
    }
}

#[test]
fn criterion_4_conservation_properties() {
    let t0 = Instant::now();
    let game = paper_game();
    let eqs = game.find_equilibria(1e-9).unwrap();
    let anchor = pick_anchor(&game, &eqs).unwrap();
    let channel = channel_for(&anchor, game.n()).unwrap();

    let simplex5 = || {
        proptest::collection::vec(1e-6..1.0f64, 5).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        })
    };
    let gains = || proptest::collection::vec(-2.0..2.0f64, 5);
    let cfg = || Config {
        cases: 100,
        ..Config::default()
    };
    let controller_of = |k: Vec<f64>| Controller {
        channel: channel.clone(),
        k,
        b: f64::NAN,
        tax_mode: TaxMode::ChannelSum,
        anchor: anchor.clone(),
        warnings: vec![],
    };

    // Tangency: the controlled field never leaves the simplex's tangent space.
    TestRunner::new(cfg())
        .run(&(simplex5(), gains()), |(x, k)| {
            let c = controller_of(k);
            let v = controlled_field(&game, &x, &c).unwrap();
            let sum: f64 = v.iter().sum();
            prop_assert!(sum.abs() < 1e-9, "field sum {sum:.2e}");
            Ok(())
        })
        .unwrap();

    // Budget balance: population-weighted per-agent adjustments cancel.
    TestRunner::new(cfg())
        .run(&(simplex5(), gains()), |(x, k)| {
            let c = controller_of(k);
            let adj = per_agent_adjustment(&c, &x);
            let net: f64 = x.iter().zip(&adj).map(|(xi, ai)| xi * ai).sum();
            prop_assert!(net.abs() < 1e-9, "net transfer {net:.2e}");
            Ok(())
        })
        .unwrap();

    // Equilibrium conservation: any designed gain keeps the anchor at rest.
    TestRunner::new(cfg())
        .run(&(-1.0..1.0f64), |b| {
            let c = build_controller(&game, &anchor, &channel, b, TaxMode::ChannelSum).unwrap();
            let v = controlled_field(&game, &anchor.point, &c).unwrap();
            let worst = v.iter().fold(0.0f64, |m, vi| m.max(vi.abs()));
            prop_assert!(worst < 1e-9, "field at anchor {worst:.2e} for b = {b}");
            Ok(())
        })
        .unwrap();

    // Column-sum conservation: the tax term leaves the Jacobian's column
    // sums exactly where the uncontrolled dynamics put them.
    TestRunner::new(cfg())
        .run(&(simplex5(), gains()), |(x, k)| {
            let c = controller_of(k);
            let j0 = jacobian_replicator(&game, &x).unwrap();
            let jc = jacobian_controlled(&game, &x, &c).unwrap();
            for col in 0..5 {
                let s0: f64 = (0..5).map(|r| j0[(r, col)]).sum();
                let sc: f64 = (0..5).map(|r| jc[(r, col)]).sum();
                prop_assert!((s0 - sc).abs() < 1e-9, "column {col}: {s0} vs {sc}");
            }
            Ok(())
        })
        .unwrap();

    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "conservation suite took {elapsed:?} (budget 10 s)"
    );
}

#[test]
fn criterion_5_ode_equilibrium_selection() {
    let game = paper_game();
    let t0 = Instant::now();
    for (b, target) in [
        (-0.8, nash_1()),
        (-0.4, nash_1()),
        (0.4, nash_2()),
        (0.8, nash_2()),
    ] {
        let c = designed(&game, b);
        let traj = ode_run(&game, &c);
        let terminal = traj.terminal();
        let d: f64 = terminal
            .iter()
            .zip(&target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>()
            .sqrt();
        assert!(d < 0.01, "b = {b}: terminal distance {d:.4}");
    }
    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "selection runs took {elapsed:?} (budget 5 s)"
    );
}

#[test]
fn criterion_6_convergence_speed_ordering() {
    let game = paper_game();
    let negative = [-0.8, -0.6, -0.4, -0.2, 0.0];
    let positive = [0.2, 0.4, 0.6, 0.8];

    let tau_of = |traj: &Trajectory, b: f64| -> Option<f64> {
        if b <= 0.0 {
            let d = distance_series(traj, &nash_1());
            half_time(&traj.times, &d, THRESHOLD_NASH1)
        } else {
            let d = distance_series(traj, &nash_2());
            half_time(&traj.times, &d, THRESHOLD_NASH2)
        }
    };
    let strictly = |chain: &[Option<f64>], increasing: bool| -> bool {
        let vals: Vec<f64> = chain.iter().filter_map(|v| *v).collect();
        vals.len() == chain.len()
            && vals
                .windows(2)
                .all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
    };

    // ODE: a single deterministic chain per side.
    let ode_chain = |bs: &[f64]| -> Vec<Option<f64>> {
        bs.iter()
            .map(|&b| {
                let c = designed(&game, b);
                tau_of(&ode_run(&game, &c), b)
            })
            .collect()
    };
    let neg = ode_chain(&negative);
    assert!(
        strictly(&neg, true),
        "ODE τ not strictly increasing over the negative shifts: {neg:?}"
    );
    let pos = ode_chain(&positive);
    assert!(
        strictly(&pos, false),
        "ODE τ not strictly decreasing over the positive shifts: {pos:?}"
    );

    // ABM: the ordering must hold for a majority of the five seeds.
    let seeds = [1u64, 2, 3, 4, 5];
    let controllers_neg: Vec<Controller> = negative.iter().map(|&b| designed(&game, b)).collect();
    let controllers_pos: Vec<Controller> = positive.iter().map(|&b| designed(&game, b)).collect();
    let mut ok_neg = 0;
    let mut ok_pos = 0;
    for &seed in &seeds {
        let chain: Vec<Option<f64>> = negative
            .iter()
            .zip(&controllers_neg)
            .map(|(&b, c)| tau_of(&abm_run(&game, c, seed), b))
            .collect();
        if strictly(&chain, true) {
            ok_neg += 1;
        }
        let chain: Vec<Option<f64>> = positive
            .iter()
            .zip(&controllers_pos)
            .map(|(&b, c)| tau_of(&abm_run(&game, c, seed), b))
            .collect();
        if strictly(&chain, false) {
            ok_pos += 1;
        }
    }
    assert!(
        ok_neg >= 3,
        "ABM negative-side ordering held for only {ok_neg}/5 seeds"
    );
    assert!(
        ok_pos >= 3,
        "ABM positive-side ordering held for only {ok_pos}/5 seeds"
    );
}

#[test]
fn criterion_7_cycle_signature() {
    let game = paper_game();
    let momenta = |b: f64| -> Vec<((usize, usize), f64)> {
        let c = designed(&game, b);
        let traj = ode_run(&game, &c);
        angular_momentum_all(&tail_window(&traj, 0.1))
    };
    let l_neg = momenta(-0.8);
    let l_pos = momenta(0.8);
    let strength = |l: &[((usize, usize), f64)]| {
        cycle_strength(&l.iter().map(|(_, v)| *v).collect::<Vec<_>>())
    };
    let s_neg = strength(&l_neg);
    let s_pos = strength(&l_pos);
    assert!(
        s_pos < 0.1 * s_neg,
        "cycle strength did not collapse: {s_pos:.3e} vs {s_neg:.3e} at the two endpoints"
    );

    let total: f64 = l_neg.iter().map(|(_, v)| v * v).sum();
    let rps: f64 = l_neg
        .iter()
        .filter(|((m, n), _)| *m < 3 && *n < 3)
        .map(|(_, v)| v * v)
        .sum();
    let mass = rps / total;
    assert!(
        mass >= 0.9,
        "squared cycle mass on the rotating three-strategy block is {mass:.4} (< 0.90): \
         the feedback channel itself participates in the closed-loop rotation, so the \
         off-block pairs retain a finite share"
    );
}

#[test]
fn criterion_8_eigencycle_sign_consistency() {
    let game = paper_game();
    let eqs = game.find_equilibria(1e-9).unwrap();
    let anchor = pick_anchor(&game, &eqs).unwrap();
    let j0 = jacobian_replicator(&game, &anchor.point).unwrap();
    let sys = eig(&j0).unwrap();
    let idx = sys
        .eigenvalues
        .iter()
        .position(|l| l.im < -1e-9)
        .expect("rotating pair present");
    let v: Vec<_> = sys.right_vectors.column(idx).iter().copied().collect();
    let theory = evoctrl::eigen::eigencycles(&v);
    let rps_pairs = [(0usize, 1usize), (0, 2), (1, 2)];

    let mut mismatches = Vec::new();
    for b in [-0.4, -0.6, -0.8] {
        let c = designed(&game, b);
        let traj = ode_run(&game, &c);
        let measured = angular_momentum_all(&traj);
        for &(m, n) in &rps_pairs {
            let predicted = theory.value(m, n);
            let observed = measured
                .iter()
                .find(|((a, bb), _)| (*a, *bb) == (m, n))
                .map(|(_, v)| *v)
                .unwrap();
            if predicted.signum() != observed.signum() {
                mismatches.push(format!(
                    "b = {b}: pair ({},{}) predicted {predicted:+.4}, measured {observed:+.3e}",
                    m + 1,
                    n + 1
                ));
            }
        }
    }
    assert!(
        mismatches.is_empty(),
        "eigenvector sign pattern vs measured rotation:\n  {}\n(the approach transient \
         sweeps more area in the mismatched plane than the decaying steady rotation; \
         agent-based runs, where noise keeps the mode excited, do match the predicted \
         signs — see examples/measure_cycles.rs)",
        mismatches.join("\n  ")
    );
}

#[test]
fn criterion_9_abm_determinism_and_scale() {
    let game = paper_game();
    let c = designed(&game, -0.8);
    let t0 = Instant::now();
    let a = abm_run(&game, &c, 42);
    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs_f64() <= 60.0,
        "one 1000-agent, 6000-round run took {elapsed:?} (budget 60 s)"
    );
    assert_eq!(a.states.len(), 6001);

    let b = abm_run(&game, &c, 42);
    assert_eq!(
        a.states, b.states,
        "identical seeds must give identical runs"
    );
    let d = abm_run(&game, &c, 43);
    assert_ne!(
        a.states, d.states,
        "different seeds should explore different noise"
    );
}
