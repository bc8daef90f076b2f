//! Observables of a run: long-run mean distribution, distance series to the
//! two equilibria, half-convergence time, angular momentum per 2-D subspace,
//! and cycle strength.

use std::collections::BTreeMap;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::dynamics::{euclid, Trajectory};
use crate::{Error, Result};

/// Distance from the uniform state to Nash_1 and Nash_2; the convergence
/// thresholds 0.184 and 0.273 used throughout are half of these.
pub const D0_NASH1: f64 = 0.365_148_371_670_110_9; // √(2/15)
pub const D0_NASH2: f64 = 0.547_722_557_505_166_1; // √0.30
pub const THRESHOLD_NASH1: f64 = 0.184;
pub const THRESHOLD_NASH2: f64 = 0.273;

/// Terminal-distance cut for tagging a run as converged to an equilibrium.
pub const SELECTION_THRESHOLD: f64 = 0.05;

/// Fraction of a run discarded before measuring cycle observables. The
/// angular momenta in a [`MetricsReport`] are tail-window quantities: the
/// initial approach sweeps large one-off areas in every coordinate pair and
/// would otherwise drown the steady rotation signal.
pub const CYCLE_BURN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selected {
    Nash1,
    Nash2,
    Undecided,
}

impl std::fmt::Display for Selected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Selected::Nash1 => write!(f, "Nash_1"),
            Selected::Nash2 => write!(f, "Nash_2"),
            Selected::Undecided => write!(f, "undecided"),
        }
    }
}

impl Serialize for Selected {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl std::str::FromStr for Selected {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Nash_1" => Ok(Selected::Nash1),
            "Nash_2" => Ok(Selected::Nash2),
            "undecided" => Ok(Selected::Undecided),
            other => Err(Error::Parse(format!("unknown selection tag {other:?}"))),
        }
    }
}

/// Everything measured on one trajectory.
///
/// JSON serialization carries `mean_distribution`, `tau_half`, `L` (keyed
/// `"m,n"` with 1-based indices), `L_strength`, and `selected`; the distance
/// series are exported as trajectory-CSV columns instead.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub mean_distribution: Vec<f64>,
    pub d_nash1_series: Vec<f64>,
    pub d_nash2_series: Vec<f64>,
    /// First crossing of d_Nash1 below 0.184, else of d_Nash2 below 0.273.
    pub tau_half: Option<f64>,
    /// Angular momentum per index pair, keyed (m, n) 0-based, m < n.
    pub l: Vec<((usize, usize), f64)>,
    pub l_strength: f64,
    pub selected: Selected,
}

impl MetricsReport {
    pub fn l_map(&self) -> BTreeMap<String, f64> {
        self.l
            .iter()
            .map(|&((m, n), v)| (format!("{},{}", m + 1, n + 1), v))
            .collect()
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("MetricsReport", 5)?;
        st.serialize_field("mean_distribution", &self.mean_distribution)?;
        st.serialize_field("tau_half", &self.tau_half)?;
        st.serialize_field("L", &self.l_map())?;
        st.serialize_field("L_strength", &self.l_strength)?;
        st.serialize_field("selected", &self.selected)?;
        st.end()
    }
}

/// Componentwise time average of the states after discarding the leading
/// `discard_fraction` of samples.
pub fn mean_distribution(traj: &Trajectory, discard_fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(Error::Config(format!(
            "discard fraction must be in [0, 1), got {discard_fraction}"
        )));
    }
    let start = (traj.len() as f64 * discard_fraction).floor() as usize;
    let window = &traj.states[start..];
    if window.is_empty() {
        return Err(Error::EmptyWindow("no samples left after burn-in".into()));
    }
    let n = window[0].len();
    let mut mean = vec![0.0; n];
    for s in window {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= window.len() as f64;
    }
    Ok(mean)
}

/// d(t) = ‖x(t) − target‖₂.
pub fn distance_series(traj: &Trajectory, target: &[f64]) -> Vec<f64> {
    traj.states.iter().map(|s| euclid(s, target)).collect()
}

/// First time the distance series reaches `threshold`, linearly interpolated
/// between samples; `None` when it never does.
pub fn half_time(times: &[f64], d: &[f64], threshold: f64) -> Option<f64> {
    debug_assert_eq!(times.len(), d.len());
    if d.is_empty() {
        return None;
    }
    if d[0] <= threshold {
        return Some(times[0]);
    }
    for i in 1..d.len() {
        if d[i] <= threshold {
            let span = d[i - 1] - d[i];
            let frac = if span.abs() < 1e-300 {
                1.0
            } else {
                (d[i - 1] - threshold) / span
            };
            return Some(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }
    None
}

/// Time-averaged angular momentum of the trajectory's projection onto the
/// (m, n) coordinate plane about the origin:
/// L̄ = (1/t′) Σ_t [x_m(t)·x_n(t+1) − x_n(t)·x_m(t+1)], t′ = samples − 1.
/// Counterclockwise motion in the (m, n) plane is positive.
pub fn angular_momentum(traj: &Trajectory, pair: (usize, usize)) -> f64 {
    let (m, n) = pair;
    let count = traj.len();
    if count < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for t in 0..count - 1 {
        let a = &traj.states[t];
        let b = &traj.states[t + 1];
        total += a[m] * b[n] - a[n] * b[m];
    }
    total / (count - 1) as f64
}

/// All C(n,2) angular momenta, keyed (m, n) with m < n.
pub fn angular_momentum_all(traj: &Trajectory) -> Vec<((usize, usize), f64)> {
    let n = traj.states.first().map_or(0, |s| s.len());
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for m in 0..n {
        for k in m + 1..n {
            out.push(((m, k), angular_momentum(traj, (m, k))));
        }
    }
    out
}

/// |L̄| = √(Σ L²_mn).
pub fn cycle_strength(l: &[f64]) -> f64 {
    l.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Assembles the full report for one run against the two equilibria.
///
/// `discard_fraction` applies to the mean distribution only; distances and
/// the half time use the whole trajectory, and the angular momenta use the
/// [`CYCLE_BURN`] tail window.
pub fn report(
    traj: &Trajectory,
    nash1: &[f64],
    nash2: &[f64],
    discard_fraction: f64,
) -> Result<MetricsReport> {
    let mean = mean_distribution(traj, discard_fraction)?;
    let d1 = distance_series(traj, nash1);
    let d2 = distance_series(traj, nash2);
    let tau_half = half_time(&traj.times, &d1, THRESHOLD_NASH1)
        .or_else(|| half_time(&traj.times, &d2, THRESHOLD_NASH2));
    let l = angular_momentum_all(&tail_window(traj, CYCLE_BURN));
    let values: Vec<f64> = l.iter().map(|(_, v)| *v).collect();
    let l_strength = cycle_strength(&values);

    let terminal_d1 = *d1.last().expect("nonempty trajectory");
    let terminal_d2 = *d2.last().expect("nonempty trajectory");
    let selected = match (
        terminal_d1 < SELECTION_THRESHOLD,
        terminal_d2 < SELECTION_THRESHOLD,
    ) {
        (true, false) => Selected::Nash1,
        (false, true) => Selected::Nash2,
        _ => Selected::Undecided,
    };

    Ok(MetricsReport {
        mean_distribution: mean,
        d_nash1_series: d1,
        d_nash2_series: d2,
        tau_half,
        l,
        l_strength,
        selected,
    })
}

/// Restricts a trajectory to the samples from `from_fraction` of its length
/// onward (a tail window for stationary measurements).
pub fn tail_window(traj: &Trajectory, from_fraction: f64) -> Trajectory {
    let start = (traj.len() as f64 * from_fraction).floor() as usize;
    let start = start.min(traj.len().saturating_sub(2));
    Trajectory {
        times: traj.times[start..].to_vec(),
        states: traj.states[start..].to_vec(),
        meta: traj.meta.clone(),
    }
}
