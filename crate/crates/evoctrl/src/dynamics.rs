//! Replicator dynamics, the controlled velocity field with its
//! budget-balancing tax, analytic Jacobians, and a simplex-preserving
//! fixed-step RK4 integrator.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::control::{Controller, TaxMode};
use crate::game::Game;
use crate::{Error, Result};

/// Guard for the per-agent reward division: strategies with mass below this
/// have no agents to reward and receive only the tax.
pub const EPS_POP: f64 = 1e-12;

/// ẋ_j = x_j (U_j − Ū).
pub fn replicator_field(game: &Game, x: &[f64]) -> Result<Vec<f64>> {
    let u = game.payoffs(x)?;
    let mean = game.mean_payoff(x)?;
    Ok(x.iter().zip(&u).map(|(xi, ui)| xi * (ui - mean)).collect())
}

/// Scalar tax: `channel_sum` mode T = −(ΣB)(K·x); `plain` mode T = −(K·x).
pub fn tax(c: &Controller, x: &[f64]) -> f64 {
    let kx: f64 = c.k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
    match c.tax_mode {
        TaxMode::ChannelSum => -c.channel.iter().sum::<f64>() * kx,
        TaxMode::Plain => -kx,
    }
}

/// ẋ = replicator + B(K·x) + T·x. Tangent to the simplex by construction of T.
pub fn controlled_field(game: &Game, x: &[f64], c: &Controller) -> Result<Vec<f64>> {
    let n = game.n();
    if c.channel.len() != n || c.k.len() != n {
        return Err(Error::Dimension(
            "controller channel/gain length must match the game".into(),
        ));
    }
    let mut v = replicator_field(game, x)?;
    let kx: f64 = c.k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
    let t = tax(c, x);
    for j in 0..n {
        v[j] += c.channel[j] * kx + t * x[j];
    }
    Ok(v)
}

/// Per-strategy payoff adjustment seen by agents: B_j(K·x)/x_j + T where
/// strategy j is populated, T alone where it is not.
///
/// The population-weighted sum is zero in `channel_sum` mode: the rewards
/// Σ x_j·B_j(Kx)/x_j = (ΣB)(Kx) are exactly paid for by the uniform tax.
pub fn per_agent_adjustment(c: &Controller, x: &[f64]) -> Vec<f64> {
    let kx: f64 = c.k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
    let t = tax(c, x);
    x.iter()
        .zip(&c.channel)
        .map(|(&xj, &bj)| if xj > EPS_POP { bj * kx / xj + t } else { t })
        .collect()
}

/// Analytic Jacobian of the replicator field:
/// J°_ij = δ_ij (U_i − Ū) + x_i (A_ij − U_j − (Aᵀx)_j).
pub fn jacobian_replicator(game: &Game, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = game.n();
    if x.len() != n {
        return Err(Error::Dimension("state length must match the game".into()));
    }
    let a = game.matrix();
    let u = game.payoffs(x)?;
    let mean = game.mean_payoff(x)?;
    let at_x: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)] * x[i]).sum())
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { u[i] - mean } else { 0.0 };
        diag + x[i] * (a[(i, j)] - u[j] - at_x[j])
    }))
}

/// Jacobian of the controlled linearization: J° plus the rank-one control
/// term, J^c_ij = J°_ij + B_i k_j − k_j (ΣB) x_i (`channel_sum`) or
/// J°_ij + B_i k_j − k_j x_i (`plain`).
///
/// This is the design Jacobian: it omits the scalar term T(x)·I contributed
/// by the state dependence of the tax, which vanishes at the anchor
/// (K·x* = 0) but not elsewhere. A finite-difference Jacobian of
/// [`controlled_field`] therefore equals this matrix plus T(x)·I.
pub fn jacobian_controlled(game: &Game, x: &[f64], c: &Controller) -> Result<DMatrix<f64>> {
    let n = game.n();
    if c.channel.len() != n || c.k.len() != n {
        return Err(Error::Dimension(
            "controller channel/gain length must match the game".into(),
        ));
    }
    let mut j = jacobian_replicator(game, x)?;
    let bsum: f64 = match c.tax_mode {
        TaxMode::ChannelSum => c.channel.iter().sum(),
        TaxMode::Plain => 1.0,
    };
    for i in 0..n {
        for jj in 0..n {
            j[(i, jj)] += c.k[jj] * (c.channel[i] - bsum * x[i]);
        }
    }
    Ok(j)
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct TrajectoryMeta {
    /// "ode" or "abm".
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

/// A recorded run: strictly increasing times with one simplex state each.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectory is nonempty")
    }

    /// Writes `t,x1..xn` rows with 12 significant digits.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv_impl(path, None)
    }

    /// Same as [`Trajectory::write_csv`] plus distance columns `d1,d2`
    /// against the two given targets.
    pub fn write_csv_with_distances<P: AsRef<Path>>(
        &self,
        path: P,
        target1: &[f64],
        target2: &[f64],
    ) -> Result<()> {
        self.write_csv_impl(path, Some((target1, target2)))
    }

    fn write_csv_impl<P: AsRef<Path>>(
        &self,
        path: P,
        distances: Option<(&[f64], &[f64])>,
    ) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}"));
        }
        if distances.is_some() {
            header.push_str(",d1,d2");
        }
        writeln!(out, "{header}")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = fmt12(*t);
            for v in x {
                row.push(',');
                row.push_str(&fmt12(*v));
            }
            if let Some((t1, t2)) = distances {
                row.push(',');
                row.push_str(&fmt12(euclid(x, t1)));
                row.push(',');
                row.push_str(&fmt12(euclid(x, t2)));
            }
            writeln!(out, "{row}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// 12 significant digits, scientific; deterministic across runs and platforms.
pub(crate) fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Classical fixed-step RK4 on the given field, projecting back onto the
/// simplex after every step (clip components below zero, renormalize).
///
/// Small negative excursions are expected when a trajectory grazes a face of
/// the simplex and are absorbed by the projection; the run is declared
/// unstable only when a state turns non-finite or its sum drifts from 1 by
/// more than 1e-6 before the projection.
pub fn integrate<F>(
    field: F,
    x0: &[f64],
    h: f64,
    horizon: f64,
    meta: TrajectoryMeta,
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Config(format!(
            "step size must be positive, got {h}"
        )));
    }
    if horizon < h {
        return Err(Error::Config(format!(
            "horizon {horizon} is shorter than one step {h}"
        )));
    }
    crate::check_simplex(x0)?;
    let steps = (horizon / h).round() as usize;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x.clone());

    let mut meta = meta;
    meta.step = Some(h);

    for step in 1..=steps {
        let k1 = field(&x)?;
        let k2 = field(&combine(&x, &k1, h / 2.0))?;
        let k3 = field(&combine(&x, &k2, h / 2.0))?;
        let k4 = field(&combine(&x, &k3, h))?;
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t = step as f64 * h;
        let sum: f64 = x.iter().sum();
        if !sum.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Instability {
                t,
                detail: "state became non-finite".into(),
            });
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Instability {
                t,
                detail: format!("component sum drifted to {sum}"),
            });
        }
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let clipped: f64 = x.iter().sum();
        for v in x.iter_mut() {
            *v /= clipped;
        }
        times.push(t);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        meta,
    })
}

fn combine(x: &[f64], k: &[f64], factor: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + factor * ki).collect()
}

/// The uncontrolled or controlled ODE right-hand side as a closure for
/// [`integrate`].
pub fn ode_field<'a>(
    game: &'a Game,
    controller: Option<&'a Controller>,
) -> impl Fn(&[f64]) -> Result<Vec<f64>> + 'a {
    move |x: &[f64]| match controller {
        Some(c) => controlled_field(game, x, c),
        None => replicator_field(game, x),
    }
}
