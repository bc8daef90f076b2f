//! Pole-shift targets, constrained single-input pole placement, and
//! controller assembly.
//!
//! The closed loop here is J + B_eff·K (the control enters with a plus sign),
//! not the classical J − BK. Placement runs on the *effective* channel
//! B_eff = B − (ΣB)x* (channel_sum tax) or B − x* (plain tax), which folds
//! the tax's rank-one term into the channel so the design Jacobian at the
//! anchor is exactly J° + B_eff·K.
//!
//! With the budget-balanced channel_sum tax, 1ᵀB_eff = 0 while the all-ones
//! row is a left eigenvector of J° (the payoff identity), so one mode —
//! the −Ū eigenvalue — is structurally uncontrollable and the Kalman matrix
//! of (J°, B_eff) is rank-deficient. That is not an obstruction: the design
//! never moves that mode. Feasibility is therefore checked per *moved* mode
//! (PBH test), and the full-rank Ackermann route is available on the raw
//! channel B, where it produces the identical gain row.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{jacobian_controlled, jacobian_replicator, replicator_field};
use crate::eigen::{eig, left_eigenvector};
use crate::game::{Equilibrium, Game};
use crate::{Error, Result};

type C = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaxMode {
    /// T = −(ΣB)(K·x): the appendix convention; exactly budget-balanced.
    #[default]
    ChannelSum,
    /// T = −(K·x): the main-text convention.
    Plain,
}

impl std::str::FromStr for TaxMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channel_sum" | "channel-sum" => Ok(TaxMode::ChannelSum),
            "plain" => Ok(TaxMode::Plain),
            other => Err(Error::Parse(format!(
                "unknown tax mode {other:?}; expected channel_sum or plain"
            ))),
        }
    }
}

impl std::fmt::Display for TaxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaxMode::ChannelSum => write!(f, "channel_sum"),
            TaxMode::Plain => write!(f, "plain"),
        }
    }
}

/// A designed state-feedback controller.
#[derive(Debug, Clone, Serialize)]
pub struct Controller {
    /// Channel column B.
    pub channel: Vec<f64>,
    /// Gain row K; satisfies |K·anchor| ≤ 1e-6.
    pub k: Vec<f64>,
    /// Pole-shift parameter.
    pub b: f64,
    pub tax_mode: TaxMode,
    /// The equilibrium whose poles are controlled.
    pub anchor: Equilibrium,
    /// Design diagnostics (e.g. marginal or destabilizing target poles).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Controller {
    pub fn kx(&self, x: &[f64]) -> f64 {
        self.k.iter().zip(x).map(|(ki, xi)| ki * xi).sum()
    }
}

/// Desired closed-loop poles, closed under conjugation.
#[derive(Debug, Clone)]
pub struct PoleTarget {
    pub values: Vec<C>,
}

impl PoleTarget {
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        self.values
            .iter()
            .all(|v| self.values.iter().any(|w| (w - v.conj()).norm() <= tol))
    }
}

/// Shifts the real parts of the leading complex-conjugate pair of the sorted
/// spectrum by `b`, leaving every other eigenvalue untouched.
///
/// For the five-strategy game at Nash_1 this sends
/// {−1/3 ± (√3/3)i, −2/3, −1, −2} to {−1/3+b ± (√3/3)i, −2/3, −1, −2}: the
/// rotating pair that governs the rock–paper–scissors cycling is the
/// controlled one. At b = +1/3 the pair crosses the imaginary axis, so any
/// b ≥ 1/3 destabilizes the anchor — intentionally; that is the selection
/// mechanism (the resulting design carries a warning, not an error).
pub fn desired_poles(lambda: &[C], b: f64) -> Result<PoleTarget> {
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&b) {
        return Err(Error::Config(format!(
            "pole shift b must lie in [-1, 1], got {b}"
        )));
    }
    let scale = lambda.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let lead = lambda
        .iter()
        .position(|l| l.im > 1e-9 * scale)
        .ok_or_else(|| Error::DegenerateTarget("spectrum has no complex pair to shift".into()))?;
    let partner = lambda
        .iter()
        .position(|l| (l - lambda[lead].conj()).norm() < 1e-9 * scale)
        .ok_or_else(|| {
            Error::DegenerateTarget("complex eigenvalue without conjugate partner".into())
        })?;
    let mut values = lambda.to_vec();
    values[lead] += C::new(b, 0.0);
    values[partner] += C::new(b, 0.0);

    for (i, v) in values.iter().enumerate() {
        if i == lead || i == partner {
            let collides = lambda
                .iter()
                .enumerate()
                .any(|(k, l)| k != lead && k != partner && (l - v).norm() < 1e-9);
            if collides {
                return Err(Error::DegenerateTarget(format!(
                    "shifted pole {v:?} lands on an untouched eigenvalue"
                )));
            }
        }
    }
    Ok(PoleTarget { values })
}

/// Folds the tax's rank-one term into the channel:
/// `channel_sum`: B_eff = B − (ΣB)·x*; `plain`: B_eff = B − x*.
pub fn effective_channel(channel: &[f64], x_star: &[f64], tax_mode: TaxMode) -> Result<Vec<f64>> {
    if channel.len() != x_star.len() {
        return Err(Error::Dimension(
            "channel and equilibrium have different lengths".into(),
        ));
    }
    let factor = match tax_mode {
        TaxMode::ChannelSum => channel.iter().sum::<f64>(),
        TaxMode::Plain => 1.0,
    };
    let b_eff: Vec<f64> = channel
        .iter()
        .zip(x_star)
        .map(|(bi, xi)| bi - factor * xi)
        .collect();
    if b_eff.iter().all(|v| v.abs() < 1e-12) {
        return Err(Error::UncontrollableChannel(
            "effective channel is the zero vector".into(),
        ));
    }
    Ok(b_eff)
}

/// Single-input pole placement for the closed loop J + B_eff·K via the
/// eigenstructure linear solve.
///
/// Feasibility: every mode the target actually moves must be controllable
/// through B_eff (PBH test on the mode's left eigenvector); untouched modes
/// may be uncontrollable. The placed K is verified against the target
/// spectrum before being returned.
pub fn place_poles(j: &DMatrix<f64>, b_eff: &[f64], target: &PoleTarget) -> Result<Vec<f64>> {
    let n = j.nrows();
    if j.ncols() != n || b_eff.len() != n || target.values.len() != n {
        return Err(Error::Dimension("place_poles: inconsistent sizes".into()));
    }
    let scale = j.amax().max(1.0);
    if !target.is_conjugate_closed(1e-9 * scale) {
        return Err(Error::Config(
            "pole target is not closed under conjugation".into(),
        ));
    }
    let sys = eig(j)?;
    let b_c = DVector::from_iterator(n, b_eff.iter().map(|v| C::new(*v, 0.0)));

    // Split target poles into untouched (coincide with an original eigenvalue)
    // and moved; each untouched pole consumes its original.
    let mut taken = vec![false; n];
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    for (ti, tv) in target.values.iter().enumerate() {
        let hit = (0..n)
            .filter(|&k| !taken[k])
            .min_by(|&a, &b| {
                (sys.eigenvalues[a] - tv)
                    .norm()
                    .total_cmp(&(sys.eigenvalues[b] - tv).norm())
            })
            .filter(|&k| (sys.eigenvalues[k] - tv).norm() < 1e-9 * scale);
        if let Some(k) = hit {
            taken[k] = true;
            assignment[ti] = Some(k);
        }
    }

    // PBH controllability for every vacated original mode.
    for k in (0..n).filter(|&k| !taken[k]) {
        let w = left_eigenvector(j, sys.eigenvalues[k])?;
        let wb: C = w
            .iter()
            .zip(b_c.iter())
            .map(|(wi, bi)| wi.conj() * bi)
            .sum();
        let bn = b_c.norm();
        if wb.norm() <= 1e-8 * bn.max(1.0) {
            return Err(Error::Infeasible(format!(
                "mode {:?} must move but is uncontrollable through the channel (PBH residual {:.3e})",
                sys.eigenvalues[k],
                wb.norm()
            )));
        }
    }

    // Eigenstructure solve: moved slots get v = −(J − μI)⁻¹B_eff with
    // closed-loop K·v = 1; untouched slots keep their eigenvector and K·v = 0.
    let jc = j.map(|v| C::new(v, 0.0));
    let mut vt = DMatrix::<C>::zeros(n, n);
    let mut rhs = DVector::<C>::zeros(n);
    for (ti, tv) in target.values.iter().enumerate() {
        let v = match assignment[ti] {
            Some(orig) => {
                rhs[ti] = C::new(0.0, 0.0);
                sys.right_vectors.column(orig).clone_owned()
            }
            None => {
                let shifted = &jc - DMatrix::<C>::identity(n, n) * *tv;
                let lu = shifted.lu();
                let sol = lu.solve(&(-&b_c)).ok_or_else(|| {
                    Error::DegenerateTarget(format!(
                        "target pole {tv:?} coincides with an eigenvalue of J"
                    ))
                })?;
                rhs[ti] = C::new(1.0, 0.0);
                sol
            }
        };
        // Row ti of the transposed eigenvector matrix.
        for col in 0..n {
            vt[(ti, col)] = v[col];
        }
    }
    let lu = vt.lu();
    let k_c = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Infeasible("closed-loop eigenvector matrix is singular".into()))?;
    let k_re: Vec<f64> = k_c.iter().map(|c| c.re).collect();
    let imag = k_c.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let re_norm = k_re.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if imag > 1e-6 * (1.0 + re_norm) {
        return Err(Error::Numerical(format!(
            "placement produced a complex gain (max imaginary part {imag:.3e})"
        )));
    }

    verify_spectrum(j, b_eff, &k_re, target, 1e-6)?;
    Ok(k_re)
}

/// Ackermann's formula for the closed loop J + B·K; requires full
/// controllability of (J, B).
pub fn ackermann(j: &DMatrix<f64>, b: &[f64], target: &PoleTarget) -> Result<Vec<f64>> {
    let n = j.nrows();
    if j.ncols() != n || b.len() != n || target.values.len() != n {
        return Err(Error::Dimension("ackermann: inconsistent sizes".into()));
    }
    let scale = j.amax().max(1.0);
    if !target.is_conjugate_closed(1e-9 * scale) {
        return Err(Error::Config(
            "pole target is not closed under conjugation".into(),
        ));
    }
    let bv = DVector::from_column_slice(b);
    let mut ctrb = DMatrix::<f64>::zeros(n, n);
    let mut col = bv.clone();
    for i in 0..n {
        ctrb.set_column(i, &col);
        col = j * &col;
    }
    let svd = ctrb.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    // NaN anywhere must land in the error branch, hence the negated guard.
    if !(smin.is_finite() && smax.is_finite() && smin > 1e-8 * smax.max(1.0)) {
        return Err(Error::Infeasible(format!(
            "controllability matrix rank-deficient (σ_min/σ_max = {:.3e})",
            smin / smax.max(1e-300)
        )));
    }

    // Real coefficients of p(λ) = Π (λ − μ_i).
    let mut coeffs = vec![C::new(1.0, 0.0)];
    for mu in &target.values {
        let mut next = vec![C::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i + 1] += *c;
            next[i] -= *c * *mu;
        }
        coeffs = next;
    }
    let real_coeffs: Vec<f64> = coeffs.iter().map(|c| c.re).collect();

    let mut p_j = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    for c in &real_coeffs {
        p_j += &power * *c;
        power = &power * j;
    }

    // K = −e_nᵀ C⁻¹ p(J): solve Cᵀ y = e_n, then K = −yᵀ p(J).
    let mut e_n = DVector::<f64>::zeros(n);
    e_n[n - 1] = 1.0;
    let y = ctrb
        .transpose()
        .lu()
        .solve(&e_n)
        .ok_or_else(|| Error::Infeasible("controllability matrix is singular".into()))?;
    let k: Vec<f64> = (0..n)
        .map(|col| -(0..n).map(|r| y[r] * p_j[(r, col)]).sum::<f64>())
        .collect();

    verify_spectrum(j, b, &k, target, 1e-6)?;
    Ok(k)
}

/// Multiset match of spectrum(J + B·K) against the target within `tol`
/// (plus a mild scale allowance), greedy nearest pairing with conjugate pairs
/// kept together by the ordering.
fn verify_spectrum(
    j: &DMatrix<f64>,
    b: &[f64],
    k: &[f64],
    target: &PoleTarget,
    tol: f64,
) -> Result<()> {
    let residual = spectrum_distance(&closed_loop(j, b, k), &target.values)?;
    let allowance = tol * (1.0 + target.values.iter().map(|v| v.norm()).fold(0.0, f64::max));
    if residual > allowance {
        return Err(Error::Infeasible(format!(
            "achieved spectrum misses the target by {residual:.3e}"
        )));
    }
    Ok(())
}

pub fn closed_loop(j: &DMatrix<f64>, b: &[f64], k: &[f64]) -> DMatrix<f64> {
    let n = j.nrows();
    DMatrix::from_fn(n, n, |r, c| j[(r, c)] + b[r] * k[c])
}

/// Greedy nearest-pair multiset distance between a matrix's spectrum and a
/// target list; returns the largest pairing distance.
pub fn spectrum_distance(m: &DMatrix<f64>, target: &[C]) -> Result<f64> {
    let mut values: Vec<C> = m.clone().complex_eigenvalues().iter().copied().collect();
    let mut worst = 0.0f64;
    for tv in target {
        if values.is_empty() {
            return Err(Error::Dimension("spectrum size mismatch".into()));
        }
        let (idx, dist) = values
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (v - tv).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        worst = worst.max(dist);
        values.swap_remove(idx);
    }
    Ok(worst)
}

/// Designs the controller for one pole shift b: Jacobian → spectrum → target
/// → effective channel → placement, then verifies the conservation constraint
/// |K·x*| ≤ 1e-6 and the closed-loop spectrum of the controlled Jacobian.
pub fn build_controller(
    game: &Game,
    anchor: &Equilibrium,
    channel: &[f64],
    b: f64,
    tax_mode: TaxMode,
) -> Result<Controller> {
    let rest = replicator_field(game, &anchor.point)?;
    if rest.iter().any(|v| v.abs() > 1e-9) {
        return Err(Error::Config(
            "anchor is not a rest point of the replicator field".into(),
        ));
    }
    let j0 = jacobian_replicator(game, &anchor.point)?;
    let sys = eig(&j0)?;
    let target = desired_poles(&sys.eigenvalues, b)?;

    let mut warnings = Vec::new();
    for v in &target.values {
        if v.re >= -1e-9 {
            warnings.push(format!(
                "target pole {:.4}{:+.4}i has nonnegative real part: the anchor equilibrium is marginal or destabilized",
                v.re, v.im
            ));
        }
    }

    let b_eff = effective_channel(channel, &anchor.point, tax_mode)?;
    let k = place_poles(&j0, &b_eff, &target)?;

    let controller = Controller {
        channel: channel.to_vec(),
        k,
        b,
        tax_mode,
        anchor: anchor.clone(),
        warnings,
    };

    let kx = controller.kx(&anchor.point).abs();
    if kx > 1e-6 {
        return Err(Error::ConstraintViolation {
            residual: kx,
            tol: 1e-6,
        });
    }
    let jc = jacobian_controlled(game, &anchor.point, &controller)?;
    let residual = spectrum_distance(&jc, &target.values)?;
    let allowance = 1e-6 * (1.0 + target.values.iter().map(|v| v.norm()).fold(0.0, f64::max));
    if residual > allowance {
        return Err(Error::Infeasible(format!(
            "controlled Jacobian spectrum misses the target by {residual:.3e}"
        )));
    }
    Ok(controller)
}

/// Writes a gain table as CSV with header `b,k1,...,kn`.
pub fn write_gains_csv<P: AsRef<std::path::Path>>(rows: &[(f64, Vec<f64>)], path: P) -> Result<()> {
    use std::io::Write;
    let n = rows.first().map_or(0, |(_, k)| k.len());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    let mut header = String::from("b");
    for i in 1..=n {
        header.push_str(&format!(",k{i}"));
    }
    writeln!(out, "{header}")?;
    for (b, k) in rows {
        let mut row = format!("{b:.4}");
        for v in k {
            row.push_str(&format!(",{v:.10}"));
        }
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// The channel studied throughout: rewards flow through strategies 4 and 5.
pub fn default_channel() -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 1.0, 1.0]
}
