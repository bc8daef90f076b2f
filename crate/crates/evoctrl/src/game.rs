//! Symmetric one-population games: payoffs, mean payoff, and Nash equilibria
//! by exact support enumeration.
//!
//! Payoff entries are kept as exact rationals so that the indifference systems
//! solved during equilibrium search have exact solutions; values cross to
//! floating point only at the dynamics boundary.

use std::path::Path;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::{Error, Result};

/// A square payoff matrix with exact rational entries.
#[derive(Debug, Clone)]
pub struct Game {
    entries: Vec<Vec<BigRational>>,
    labels: Vec<String>,
}

/// A Nash equilibrium candidate returned by [`Game::find_equilibria`].
#[derive(Debug, Clone, Serialize)]
pub struct Equilibrium {
    /// Point on the simplex.
    pub point: Vec<f64>,
    /// Indices (0-based) of strategies played with positive probability.
    pub support: Vec<usize>,
    /// Expected payoff Ū at the point.
    pub expected_payoff: f64,
    /// `vertex` for singleton supports, `interior-of-support` otherwise.
    pub kind: EquilibriumKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquilibriumKind {
    #[serde(rename = "vertex")]
    Vertex,
    #[serde(rename = "interior-of-support")]
    InteriorOfSupport,
}

impl Game {
    pub fn new(entries: Vec<Vec<BigRational>>, labels: Vec<String>) -> Result<Self> {
        let n = entries.len();
        if n < 2 || entries.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension(format!(
                "payoff matrix must be square with n >= 2, got {} rows",
                n
            )));
        }
        if labels.len() != n {
            return Err(Error::Dimension("labels must match matrix size".into()));
        }
        Ok(Game { entries, labels })
    }

    pub fn from_integers(rows: &[&[i64]], labels: &[&str]) -> Result<Self> {
        let entries = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&v| BigRational::from_integer(v.into()))
                    .collect()
            })
            .collect();
        Game::new(entries, labels.iter().map(|s| s.to_string()).collect())
    }

    /// Loads a game from a CSV file of n rows × n numeric columns.
    ///
    /// Entries may be decimals (`-2`, `0.5`) or fractions (`1/2`); both parse
    /// to exact rationals. An optional non-numeric first row is treated as
    /// strategy labels.
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path.as_ref())?;
        let mut rows: Vec<Vec<String>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            rows.push(record.iter().map(|f| f.to_string()).collect());
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty game file".into()));
        }
        let labels: Vec<String> = if rows[0].iter().any(|f| parse_rational(f).is_err()) {
            rows.remove(0)
        } else {
            (1..=rows[0].len()).map(|i| format!("s{i}")).collect()
        };
        let n = rows.len();
        let mut entries = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "row {} has {} columns, expected {} (square matrix)",
                    i + 1,
                    row.len(),
                    n
                )));
            }
            let parsed: Result<Vec<BigRational>> = row.iter().map(|f| parse_rational(f)).collect();
            entries.push(parsed?);
        }
        if labels.len() != n {
            return Err(Error::Parse(format!(
                "{} labels for {} strategies",
                labels.len(),
                n
            )));
        }
        Game::new(entries, labels)
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigRational {
        &self.entries[i][j]
    }

    /// The payoff matrix as floating point, row-major.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| rational_to_f64(&self.entries[i][j]))
    }

    /// Range (max − min) of the payoff entries.
    pub fn payoff_range(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.entries {
            for v in row {
                let v = rational_to_f64(v);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        hi - lo
    }

    /// Strategy payoffs U = A·x.
    pub fn payoffs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::Dimension(format!(
                "state has {} components, game has {}",
                x.len(),
                n
            )));
        }
        let a = self.matrix();
        Ok((0..n)
            .map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum())
            .collect())
    }

    /// Mean payoff Ū = xᵀA x.
    pub fn mean_payoff(&self, x: &[f64]) -> Result<f64> {
        let u = self.payoffs(x)?;
        Ok(u.iter().zip(x).map(|(ui, xi)| ui * xi).sum())
    }

    /// True iff no strategy improves on the mean payoff by more than `tol`.
    pub fn is_nash(&self, x: &[f64], tol: f64) -> Result<bool> {
        let u = self.payoffs(x)?;
        let mean = self.mean_payoff(x)?;
        Ok(u.iter().all(|ui| *ui <= mean + tol))
    }

    /// Finds all Nash equilibria by support enumeration.
    ///
    /// For each nonempty support S the indifference system (equal payoff c on
    /// S, Σx = 1, x = 0 off S) is solved exactly over the rationals.
    /// Solutions are kept when x ≥ −tol on S and U_j ≤ c + tol off S, then
    /// deduplicated at ∞-norm distance 1e-7. Singular systems are skipped,
    /// except that a singular-but-consistent support still contributes its
    /// uniform point when that point verifies as an equilibrium (degenerate
    /// games such as the all-zero matrix have equilibrium continua; the
    /// uniform point is the canonical representative).
    pub fn find_equilibria(&self, tol: f64) -> Result<Vec<Equilibrium>> {
        let n = self.n();
        if n > 10 {
            return Err(Error::Config(format!(
                "support enumeration is exponential; n = {n} exceeds 10"
            )));
        }
        let mut found: Vec<Equilibrium> = Vec::new();
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let candidate = match self.solve_support(&support) {
                Some(xc) => xc,
                None => {
                    // Singular system: try the uniform point on this support.
                    let k = support.len();
                    let unif = BigRational::new(BigInt::one(), BigInt::from(k));
                    let mut x = vec![BigRational::zero(); n];
                    for &i in &support {
                        x[i] = unif.clone();
                    }
                    let u = self.exact_payoffs(&x);
                    let c = u[support[0]].clone();
                    if support.iter().all(|&i| u[i] == c) {
                        (x, c)
                    } else {
                        continue;
                    }
                }
            };
            let (x_exact, c_exact) = candidate;
            let x: Vec<f64> = x_exact.iter().map(rational_to_f64).collect();
            let c = rational_to_f64(&c_exact);
            if support.iter().any(|&i| x[i] < -tol) {
                continue;
            }
            let u = self.payoffs(&x)?;
            if (0..n)
                .filter(|i| !support.contains(i))
                .any(|i| u[i] > c + tol)
            {
                continue;
            }
            if !self.is_nash(&x, tol.max(1e-9))? {
                continue;
            }
            if found.iter().any(|e| linf_dist(&e.point, &x) < 1e-7) {
                continue;
            }
            let eff_support: Vec<usize> = support
                .iter()
                .copied()
                .filter(|&i| x[i] > tol.max(1e-12))
                .collect();
            let kind = if eff_support.len() <= 1 {
                EquilibriumKind::Vertex
            } else {
                EquilibriumKind::InteriorOfSupport
            };
            found.push(Equilibrium {
                point: x,
                support: eff_support,
                expected_payoff: c,
                kind,
            });
        }
        Ok(found)
    }

    fn exact_payoffs(&self, x: &[BigRational]) -> Vec<BigRational> {
        let n = self.n();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| &self.entries[i][j] * &x[j])
                    .fold(BigRational::zero(), |acc, v| acc + v)
            })
            .collect()
    }

    /// Solves the indifference system for one support exactly. Returns the
    /// full-length point and the common payoff c, or None when the system is
    /// singular or produces no unique solution.
    fn solve_support(&self, support: &[usize]) -> Option<(Vec<BigRational>, BigRational)> {
        let k = support.len();
        let n = self.n();
        // Unknowns: x_{support[0..k]}, c. Equations: (A·x)_s − c = 0 for s in
        // support; Σ x_s = 1.
        let dim = k + 1;
        let mut m = vec![vec![BigRational::zero(); dim + 1]; dim];
        for (row, &s) in support.iter().enumerate() {
            for (col, &j) in support.iter().enumerate() {
                m[row][col] = self.entries[s][j].clone();
            }
            m[row][k] = -BigRational::one();
        }
        for cell in m[k].iter_mut().take(k) {
            *cell = BigRational::one();
        }
        m[k][dim] = BigRational::one();

        let sol = solve_exact(&mut m)?;
        let mut x = vec![BigRational::zero(); n];
        for (idx, &s) in support.iter().enumerate() {
            x[s] = sol[idx].clone();
        }
        Some((x, sol[k].clone()))
    }
}

/// Gaussian elimination over the rationals on an augmented matrix; returns
/// None when the system is singular.
fn solve_exact(m: &mut [Vec<BigRational>]) -> Option<Vec<BigRational>> {
    let rows = m.len();
    let cols = m[0].len() - 1;
    debug_assert_eq!(rows, cols);
    for col in 0..cols {
        let pivot = (col..rows).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let p = m[col][col].clone();
        let pivot_row = m[col][col..].to_vec();
        for (r, row) in m.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let factor = &row[col] / &p;
            for (cell, pv) in row[col..].iter_mut().zip(&pivot_row) {
                *cell = &*cell - &factor * pv;
            }
        }
    }
    Some((0..rows).map(|r| &m[r][cols] / &m[r][r]).collect())
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty numeric field".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad fraction numerator: {s:?}")))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad fraction denominator: {s:?}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator: {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => {
            let exp: i32 = e
                .parse()
                .map_err(|_| Error::Parse(format!("bad exponent: {s:?}")))?;
            (m, exp)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    let digits = format!(
        "{}{}",
        if int_part.is_empty() || int_part == "-" || int_part == "+" {
            format!("{int_part}0")
        } else {
            int_part.to_string()
        },
        frac_part
    );
    let num: BigInt = digits
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))?;
    let shift = frac_part.len() as i32 - exp;
    let rational = if shift >= 0 {
        BigRational::new(num, BigInt::from(10u32).pow(shift as u32))
    } else {
        BigRational::from_integer(num * BigInt::from(10u32).pow((-shift) as u32))
    };
    Ok(rational)
}

fn rational_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    // Exact for the magnitudes used here; falls back to a string round-trip
    // for values outside i128.
    match (i128::try_from(num.clone()), i128::try_from(den.clone())) {
        (Ok(n), Ok(d)) => n as f64 / d as f64,
        _ => {
            let s = format!("{num}");
            let t = format!("{den}");
            s.parse::<f64>().unwrap_or(f64::NAN) / t.parse::<f64>().unwrap_or(f64::NAN)
        }
    }
}

fn linf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// The five-strategy game studied throughout this crate: strategies 1–3 form
/// a rock–paper–scissors block, strategies 4–5 an anti-coordination block.
/// It has exactly two Nash equilibria, (1,1,1,0,0)/3 and (0,0,0,1,1)/2.
pub fn paper_game() -> Game {
    Game::from_integers(
        &[
            &[0, 0, 2, 0, -2],
            &[2, 0, 0, -2, 0],
            &[0, 2, 0, 2, -1],
            &[-2, 0, 1, 0, 1],
            &[0, -2, -2, 1, 0],
        ],
        &["s1", "s2", "s3", "s4", "s5"],
    )
    .expect("builtin game is well-formed")
}

/// Nash_1 = (1/3, 1/3, 1/3, 0, 0).
pub fn nash_1() -> Vec<f64> {
    vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0]
}

/// Nash_2 = (0, 0, 0, 1/2, 1/2).
pub fn nash_2() -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 0.5, 0.5]
}

/// The uniform state (1/5, …, 1/5).
pub fn uniform5() -> Vec<f64> {
    vec![0.2; 5]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn payoffs_at_the_named_points() {
        let g = paper_game();
        let u1 = g.payoffs(&nash_1()).unwrap();
        let expected1 = [2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0, -4.0 / 3.0];
        for (a, b) in u1.iter().zip(expected1) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-12);
        }
        let u2 = g.payoffs(&nash_2()).unwrap();
        let expected2 = [-1.0, -1.0, 0.5, 0.5, 0.5];
        for (a, b) in u2.iter().zip(expected2) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-12);
        }
        let uu = g.payoffs(&uniform5()).unwrap();
        let expected_u = [0.0, 0.0, 0.6, 0.0, -0.6];
        for (a, b) in uu.iter().zip(expected_u) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_payoffs() {
        let g = paper_game();
        assert_abs_diff_eq!(
            g.mean_payoff(&nash_1()).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(g.mean_payoff(&nash_2()).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.mean_payoff(&uniform5()).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_payoff_two_ways_agree() {
        let g = paper_game();
        for x in [
            nash_1(),
            nash_2(),
            uniform5(),
            vec![0.1, 0.2, 0.3, 0.15, 0.25],
        ] {
            let u = g.payoffs(&x).unwrap();
            let direct: f64 = u.iter().zip(&x).map(|(ui, xi)| ui * xi).sum();
            assert_abs_diff_eq!(g.mean_payoff(&x).unwrap(), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn nash_verification() {
        let g = paper_game();
        assert!(g.is_nash(&nash_1(), 1e-9).unwrap());
        assert!(g.is_nash(&nash_2(), 1e-9).unwrap());
        assert!(!g.is_nash(&uniform5(), 1e-9).unwrap());
    }

    #[test]
    fn equilibria_of_the_builtin_game() {
        let g = paper_game();
        let eqs = g.find_equilibria(1e-9).unwrap();
        assert_eq!(eqs.len(), 2);
        let n1 = eqs
            .iter()
            .find(|e| e.support == vec![0, 1, 2])
            .expect("RPS-block equilibrium");
        let n2 = eqs
            .iter()
            .find(|e| e.support == vec![3, 4])
            .expect("anti-coordination equilibrium");
        for (a, b) in n1.point.iter().zip(nash_1()) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-12);
        }
        for (a, b) in n2.point.iter().zip(nash_2()) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(n1.expected_payoff, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n2.expected_payoff, 0.5, epsilon = 1e-12);
        assert_eq!(n1.kind, EquilibriumKind::InteriorOfSupport);
    }

    #[test]
    fn equilibria_of_a_coordination_game() {
        let g = Game::from_integers(&[&[1, 0], &[0, 1]], &["a", "b"]).unwrap();
        let eqs = g.find_equilibria(1e-9).unwrap();
        let mut points: Vec<Vec<f64>> = eqs.iter().map(|e| e.point.clone()).collect();
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(points.len(), 3);
        assert_abs_diff_eq!(points[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(points[1][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(points[2][0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn equilibria_of_the_zero_game() {
        let g = Game::from_integers(&[&[0, 0], &[0, 0]], &["a", "b"]).unwrap();
        let eqs = g.find_equilibria(1e-9).unwrap();
        assert_eq!(eqs.len(), 3);
        assert!(eqs
            .iter()
            .any(|e| (e.point[0] - 0.5).abs() < 1e-12 && (e.point[1] - 0.5).abs() < 1e-12));
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("evoctrl_game_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("game.csv");
        std::fs::write(
            &path,
            "0,0,2,0,-2\n2,0,0,-2,0\n0,2,0,2,-1\n-2,0,1,0,1\n0,-2,-2,1,0\n",
        )
        .unwrap();
        let g = Game::from_csv(&path).unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(g.matrix(), paper_game().matrix());
        std::fs::write(&path, "0,0.5\n1/2,not_a_number\n").unwrap();
        assert!(matches!(Game::from_csv(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn fraction_and_decimal_parsing() {
        assert_eq!(
            parse_rational("0.5").unwrap(),
            BigRational::new(1.into(), 2.into())
        );
        assert_eq!(
            parse_rational("1/2").unwrap(),
            BigRational::new(1.into(), 2.into())
        );
        assert_eq!(
            parse_rational("-2.5e1").unwrap(),
            BigRational::from_integer((-25).into())
        );
    }
}
