//! Dense eigendecomposition for small real matrices, the left-eigenvector
//! payoff identity, and eigencycle values from complex eigenvectors.
//!
//! Eigenvalues come from the real Schur form; right eigenvectors are computed
//! by shifted inverse iteration with orthogonalization inside clusters of
//! repeated eigenvalues, and conjugate-pair vectors are derived by
//! conjugation so pairs match exactly.

use nalgebra::{Complex, DMatrix, DVector};
use serde_json::{json, Value};

use crate::{Error, Result};

type C = Complex<f64>;

/// Spectrum with paired unit-norm right eigenvectors.
///
/// Eigenvalues are sorted by descending real part, ties by descending
/// imaginary part; `right_vectors` column i pairs with `eigenvalues[i]`.
/// Each column has unit 2-norm with its largest-magnitude component rotated
/// to the positive real axis, which makes downstream eigencycle values
/// deterministic.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<C>,
    pub right_vectors: DMatrix<C>,
    pub left_vectors: Option<DMatrix<C>>,
}

impl EigenSystem {
    /// JSON form: `{"eigenvalues": [[re, im], ...], "vectors": [[[re, im], ...], ...]}`
    /// with one inner list per eigenvector (column), ordered like `eigenvalues`.
    pub fn to_json(&self) -> Value {
        let eigenvalues: Vec<Value> = self
            .eigenvalues
            .iter()
            .map(|l| json!([l.re, l.im]))
            .collect();
        let vectors: Vec<Value> = (0..self.right_vectors.ncols())
            .map(|c| {
                let col: Vec<Value> = self
                    .right_vectors
                    .column(c)
                    .iter()
                    .map(|v| json!([v.re, v.im]))
                    .collect();
                Value::Array(col)
            })
            .collect();
        json!({ "eigenvalues": eigenvalues, "vectors": vectors })
    }
}

/// Full eigendecomposition of a real square matrix (n ≤ 20).
pub fn eig(j: &DMatrix<f64>) -> Result<EigenSystem> {
    let n = j.nrows();
    if n != j.ncols() {
        return Err(Error::Dimension("eig requires a square matrix".into()));
    }
    if n > 20 {
        return Err(Error::Config(format!("eig supports n <= 20, got {n}")));
    }
    let mut values: Vec<C> = j.clone().complex_eigenvalues().iter().copied().collect();
    sort_spectrum(&mut values);

    let jc = j.map(|v| C::new(v, 0.0));
    let scale = j.amax().max(1.0);
    let mut columns: Vec<Option<DVector<C>>> = vec![None; n];

    for i in 0..n {
        if columns[i].is_some() {
            continue;
        }
        // Vectors already assigned to coinciding eigenvalues; iterate against
        // them so repeated (semisimple) eigenvalues get independent vectors.
        let cluster: Vec<DVector<C>> = (0..n)
            .filter(|&k| k != i && (values[k] - values[i]).norm() < 1e-9 * scale)
            .filter_map(|k| columns[k].clone())
            .collect();
        let v = inverse_iteration(&jc, values[i], scale, &cluster)?;
        // The conjugate partner's vector is the conjugate of this one.
        if values[i].im.abs() > 1e-9 * scale {
            if let Some(p) = (0..n).find(|&k| {
                columns[k].is_none()
                    && k != i
                    && (values[k] - values[i].conj()).norm() < 1e-9 * scale
            }) {
                columns[p] = Some(normalize_phase(v.map(|c| c.conj())));
            }
        }
        columns[i] = Some(normalize_phase(v));
    }

    let mut right = DMatrix::<C>::zeros(n, n);
    for (i, col) in columns.into_iter().enumerate() {
        right.set_column(i, &col.expect("every eigenvalue gets a vector"));
    }

    // Residual acceptance: ‖Jv − λv‖∞ must be small for every pair.
    for (i, lambda) in values.iter().enumerate() {
        let v = right.column(i).clone_owned();
        let r = cmax(&(&jc * &v - &v * *lambda));
        if r > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "eigenvector residual {r:.3e} for eigenvalue {lambda:?}"
            )));
        }
    }

    Ok(EigenSystem {
        eigenvalues: values,
        right_vectors: right,
        left_vectors: None,
    })
}

/// Left eigenvector w of `j` for the eigenvalue `lambda`: wᵀJ = λwᵀ.
pub fn left_eigenvector(j: &DMatrix<f64>, lambda: C) -> Result<DVector<C>> {
    let jt = j.transpose().map(|v| C::new(v, 0.0));
    let scale = j.amax().max(1.0);
    Ok(normalize_phase(inverse_iteration(&jt, lambda, scale, &[])?))
}

fn sort_spectrum(values: &mut [C]) {
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then_with(|| b.im.total_cmp(&a.im)));
}

fn inverse_iteration(
    jc: &DMatrix<C>,
    lambda: C,
    scale: f64,
    orthogonal_to: &[DVector<C>],
) -> Result<DVector<C>> {
    let n = jc.nrows();
    let mut best: Option<(f64, DVector<C>)> = None;
    for attempt in 0..4u32 {
        let offset = scale * 1e-10 * 10f64.powi(attempt as i32);
        let shifted = jc - DMatrix::<C>::identity(n, n) * (lambda + C::new(offset, offset));
        let lu = shifted.lu();
        let mut v = seed_vector(n, attempt);
        orthogonalize(&mut v, orthogonal_to);
        let mut ok = true;
        for _ in 0..6 {
            match lu.solve(&v) {
                Some(next) => {
                    v = next;
                    orthogonalize(&mut v, orthogonal_to);
                    let norm = v.norm();
                    if !norm.is_finite() || norm == 0.0 {
                        ok = false;
                        break;
                    }
                    v /= C::new(norm, 0.0);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let residual = cmax(&(jc * &v - &v * lambda));
        if residual < 1e-10 * scale {
            return Ok(v);
        }
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, v));
        }
    }
    match best {
        Some((r, v)) if r <= 1e-8 * scale => Ok(v),
        Some((r, _)) => Err(Error::Numerical(format!(
            "inverse iteration stalled at residual {r:.3e} for eigenvalue {lambda:?}"
        ))),
        None => Err(Error::Numerical(format!(
            "inverse iteration failed for eigenvalue {lambda:?}"
        ))),
    }
}

fn seed_vector(n: usize, attempt: u32) -> DVector<C> {
    // Deterministic, full-support start vector; varies across retries.
    let mut state = 0x9e3779b97f4a7c15u64.wrapping_mul(attempt as u64 + 1);
    DVector::from_fn(n, |i, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407 + i as u64);
        let a = ((state >> 11) as f64) / (1u64 << 53) as f64;
        C::new(
            1.0 + 0.5 * (a - 0.5),
            0.25 * ((state >> 7) & 0xff) as f64 / 255.0,
        )
    })
}

fn cmax(v: &DVector<C>) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn orthogonalize(v: &mut DVector<C>, basis: &[DVector<C>]) {
    for b in basis {
        let proj = b.dotc(v);
        *v -= b * proj;
    }
}

fn normalize_phase(mut v: DVector<C>) -> DVector<C> {
    let norm = v.norm();
    if norm > 0.0 {
        v /= C::new(norm, 0.0);
    }
    let mut imax = 0;
    let mut best = -1.0;
    for (i, c) in v.iter().enumerate() {
        let m = c.norm();
        if m > best + 1e-15 {
            best = m;
            imax = i;
        }
    }
    let pivot = v[imax];
    if pivot.norm() > 0.0 {
        let phase = pivot / C::new(pivot.norm(), 0.0);
        v /= phase;
        // Kill the rounding dust in the pivot's imaginary part.
        v[imax] = C::new(v[imax].re, 0.0);
    }
    v
}

/// Verifies the payoff identity at a rest point x*: the all-ones row vector
/// is a left eigenvector of J with eigenvalue −payoff, and x* is the matching
/// right eigenvector (both within 1e-8).
pub fn payoff_eigen_check(j: &DMatrix<f64>, x_star: &[f64], payoff: f64) -> bool {
    let n = j.nrows();
    if n != j.ncols() || x_star.len() != n {
        return false;
    }
    for col in 0..n {
        let col_sum: f64 = (0..n).map(|r| j[(r, col)]).sum();
        if (col_sum + payoff).abs() > 1e-8 {
            return false;
        }
    }
    for row in 0..n {
        let jx: f64 = (0..n).map(|c| j[(row, c)] * x_star[c]).sum();
        if (jx + payoff * x_star[row]).abs() > 1e-8 {
            return false;
        }
    }
    true
}

/// Eigencycle values for all C(n,2) index pairs of one complex eigenvector.
#[derive(Debug, Clone)]
pub struct EigencycleSet {
    /// 0-based index pairs (m, n) with m < n.
    pub pairs: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl EigencycleSet {
    /// Antisymmetric lookup: value(n, m) = −value(m, n).
    pub fn value(&self, m: usize, n: usize) -> f64 {
        let (a, b, sign) = if m < n { (m, n, 1.0) } else { (n, m, -1.0) };
        self.pairs
            .iter()
            .position(|&p| p == (a, b))
            .map(|i| sign * self.values[i])
            .unwrap_or(0.0)
    }

    /// Map keyed "m,n" with 1-based indices, for JSON reports.
    pub fn to_map(&self) -> std::collections::BTreeMap<String, f64> {
        self.pairs
            .iter()
            .zip(&self.values)
            .map(|(&(m, n), &v)| (format!("{},{}", m + 1, n + 1), v))
            .collect()
    }
}

/// Eigencycle of a unit-norm complex eigenvector: value(m,n) = Im(conj(v_m)·v_n).
pub fn eigencycles(v: &[C]) -> EigencycleSet {
    let n = v.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for m in 0..n {
        for k in m + 1..n {
            pairs.push((m, k));
            values.push((v[m].conj() * v[k]).im);
        }
    }
    EigencycleSet { pairs, values }
}
