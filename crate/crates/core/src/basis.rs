//! LP score functions.
//!
//! For a law with atoms `x_1 < ... < x_k`, the score functions `T_j(x;X)` are
//! obtained by orthonormalizing `1, T_1, T_1^2, ...` under the law's own
//! masses, where `T_1(x) = (Fmid(x) - 1/2) / sd(Fmid(X))`. The span of
//! `{1, T_1, ..., T_1^j}` equals the span of `{T_0, ..., T_{j-1}, T_1 T_{j-1}}`,
//! so the next candidate is formed as `T_1 * T_{j-1}`; the Gram-Schmidt output
//! is the same function and the candidates stay well conditioned for large `k`.
//!
//! Sign convention: every `T_j` is positive at the largest atom (or, when that
//! value is numerically zero, at the largest atom where it is not).

use std::fmt::Write as _;

use serde::Serialize;

use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum_by;

/// Residual norm (relative to the candidate's norm) below which a candidate
/// is treated as lying in the span of its predecessors.
pub const DEPENDENCE_TOL: f64 = 1e-9;

/// Default number of score functions.
pub const DEFAULT_M: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Step {
    /// Total projection coefficient on `T_0..T_{j-1}` over both passes.
    proj: Vec<f64>,
    /// Signed normalizer: `T_j = residual / scale`.
    scale: f64,
}

/// How many score functions to build for a margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Order {
    /// At most this many (clipped to `k - 1` with a warning).
    Fixed(usize),
    /// The complete basis of `k - 1` functions.
    Full,
}

impl Default for Order {
    fn default() -> Self {
        Order::Fixed(DEFAULT_M)
    }
}

/// Orthonormal LP score functions of a [`DiscreteDist`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBasis {
    dist: DiscreteDist,
    sd_mid: f64,
    /// `table[j-1][i] = T_j(x_i)`.
    table: Vec<Vec<f64>>,
    steps: Vec<Step>,
    requested: usize,
    warnings: Vec<String>,
}

impl ScoreBasis {
    /// Builds up to `m` score functions; `m` is clipped to `k - 1`.
    pub fn build(dist: &DiscreteDist, m: usize) -> Result<Self> {
        Self::build_inner(dist, m, true)
    }

    /// Builds the complete basis `T_1..T_{k-1}`.
    pub fn full(dist: &DiscreteDist) -> Result<Self> {
        Self::build_inner(dist, dist.len().saturating_sub(1).max(1), false)
    }

    pub fn with_order(dist: &DiscreteDist, order: Order) -> Result<Self> {
        match order {
            Order::Fixed(m) => Self::build(dist, m),
            Order::Full => Self::full(dist),
        }
    }

    fn build_inner(dist: &DiscreteDist, m: usize, warn_clip: bool) -> Result<Self> {
        let k = dist.len();
        if k < 2 {
            return Err(Error::Degenerate(
                "a single atom has no score functions".into(),
            ));
        }
        if m == 0 {
            return Err(Error::OutOfRange("number of score functions must be at least 1".into()));
        }
        let p = dist.masses();
        let effective = m.min(k - 1);
        let mut warnings = Vec::new();
        if effective < m && warn_clip {
            warnings.push(format!(
                "requested {m} score functions but the law has {k} atoms; clipped to {effective}"
            ));
        }

        let sd_mid = dist.midvar().sqrt();
        let t1: Vec<f64> = dist.mid().iter().map(|f| (f - 0.5) / sd_mid).collect();
        let inner = |a: &[f64], b: &[f64]| pairwise_sum_by(k, |i| p[i] * a[i] * b[i]);

        let ones = vec![1.0; k];
        let mut table: Vec<Vec<f64>> = Vec::with_capacity(effective);
        let mut steps = Vec::with_capacity(effective);

        // T_1 goes through the same projection so tiny drift from the exact
        // mid-distribution mean is removed too.
        for j in 1..=effective {
            let candidate: Vec<f64> = if j == 1 {
                t1.clone()
            } else {
                t1.iter().zip(&table[j - 2]).map(|(a, b)| a * b).collect()
            };
            let cand_norm = inner(&candidate, &candidate).sqrt();
            let mut v = candidate;
            let mut proj = vec![0.0; j];
            for _pass in 0..2 {
                for i in 0..j {
                    let basis_i: &[f64] = if i == 0 { &ones } else { &table[i - 1] };
                    let c = inner(&v, basis_i);
                    proj[i] += c;
                    for (vi, bi) in v.iter_mut().zip(basis_i) {
                        *vi -= c * bi;
                    }
                }
            }
            let norm = inner(&v, &v).sqrt();
            if !(norm > DEPENDENCE_TOL * cand_norm.max(f64::MIN_POSITIVE)) {
                warnings.push(format!(
                    "score function {j} is numerically dependent on its predecessors; basis truncated to {}",
                    j - 1
                ));
                break;
            }
            let last = v[k - 1] / norm;
            let sign = if last.abs() > 1e-12 {
                last.signum()
            } else {
                v.iter().rev().find(|x| x.abs() > 1e-12 * norm).map_or(1.0, |x| x.signum())
            };
            let scale = sign * norm;
            table.push(v.into_iter().map(|x| x / scale).collect());
            steps.push(Step { proj, scale });
        }
        if table.is_empty() {
            return Err(Error::Degenerate("no score function could be formed".into()));
        }
        Ok(Self {
            dist: dist.clone(),
            sd_mid,
            table,
            steps,
            requested: m,
            warnings,
        })
    }

    pub fn dist(&self) -> &DiscreteDist {
        &self.dist
    }

    /// Number of score functions actually built.
    pub fn m(&self) -> usize {
        self.table.len()
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    /// True when fewer functions than requested were built.
    pub fn clipped(&self) -> bool {
        self.m() < self.requested
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Values of `T_j` at every atom (`j` is 1-based).
    pub fn scores(&self, j: usize) -> &[f64] {
        &self.table[j - 1]
    }

    /// `T_j` at atom index `i`.
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.table[j - 1][i]
    }

    /// `(T_1(x_i), ..., T_m(x_i))`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.table.iter().map(|t| t[i]).collect()
    }

    /// `T_j(x)` for arbitrary `x`. At atoms this is the tabulated value;
    /// elsewhere `T_j` is evaluated as the same polynomial in
    /// `T_1(x) = (F(x) - 1/2)/sd`, since `Fmid = F` off the atoms.
    pub fn eval(&self, j: usize, x: f64) -> Result<f64> {
        self.check_index(j)?;
        if let Some(i) = self.dist.atom_index(x) {
            return Ok(self.table[j - 1][i]);
        }
        let t1 = (self.dist.cdf(x) - 0.5) / self.sd_mid;
        Ok(self.eval_poly(t1)[j - 1])
    }

    /// All of `T_1..T_m` at `x`.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        match self.dist.atom_index(x) {
            Some(i) => self.row(i),
            None => self.eval_poly((self.dist.cdf(x) - 0.5) / self.sd_mid),
        }
    }

    fn eval_poly(&self, t1: f64) -> Vec<f64> {
        let mut vals = vec![1.0];
        for (j, step) in self.steps.iter().enumerate() {
            let j = j + 1;
            let mut v = if j == 1 { t1 } else { t1 * vals[j - 1] };
            for (c, b) in step.proj.iter().zip(&vals) {
                v -= c * b;
            }
            vals.push(v / step.scale);
        }
        vals.remove(0);
        vals
    }

    /// LP unit score `S_j(u) = T_j(Q(u))`: piecewise constant in `u`, taking
    /// the right-hand cell at a jump point.
    pub fn unit_score(&self, j: usize, u: f64) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.table[j - 1][self.dist.cell_index(u)])
    }

    /// All unit scores at `u`.
    pub fn unit_scores(&self, u: f64) -> Vec<f64> {
        self.row(self.dist.cell_index(u))
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.m() {
            return Err(Error::OutOfRange(format!(
                "score index {j} outside 1..={}",
                self.m()
            )));
        }
        Ok(())
    }

    /// CSV with one row per atom: `atom,T1,...,Tm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("atom");
        for j in 1..=self.m() {
            let _ = write!(out, ",T{j}");
        }
        out.push('\n');
        for (i, x) in self.dist.atoms().iter().enumerate() {
            let _ = write!(out, "{x}");
            for t in &self.table {
                let _ = write!(out, ",{}", t[i]);
            }
            out.push('\n');
        }
        out
    }

    /// Step-function CSV of the unit scores: `u_left,u_right,j,value`.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("u_left,u_right,j,value\n");
        let cum = self.dist.cumulative();
        for (jm1, t) in self.table.iter().enumerate() {
            for (i, v) in t.iter().enumerate() {
                let left = if i == 0 { 0.0 } else { cum[i - 1] };
                let _ = writeln!(out, "{left},{},{},{v}", cum[i], jm1 + 1);
            }
        }
        out
    }
}

/// Orthonormal shifted Legendre polynomial `Leg_j(u) = sqrt(2j+1) P_j(2u-1)`.
pub fn legendre(j: usize, u: f64) -> f64 {
    let x = 2.0 * u - 1.0;
    let p = if j == 0 {
        1.0
    } else {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=j {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    ((2 * j + 1) as f64).sqrt() * p
}

/// `Leg_1(u), ..., Leg_m(u)`.
pub fn legendre_all(m: usize, u: f64) -> Vec<f64> {
    (1..=m).map(|j| legendre(j, u)).collect()
}

/// Highest degree with exact integer coefficients in [`LegendreBasis`].
pub const MAX_LEGENDRE_DEGREE: usize = 20;

/// Shifted Legendre polynomials with their exact integer power coefficients:
/// `Leg_j(u) = sqrt(2j+1) * sum_i coeffs[j][i] u^i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendreBasis {
    coeffs: Vec<Vec<i64>>,
}

impl LegendreBasis {
    pub fn new(m: usize) -> Result<Self> {
        if m > MAX_LEGENDRE_DEGREE {
            return Err(Error::OutOfRange(format!(
                "Legendre degree {m} exceeds {MAX_LEGENDRE_DEGREE}"
            )));
        }
        let coeffs = (0..=m)
            .map(|j| {
                (0..=j)
                    .map(|i| {
                        let sign = if (j + i) % 2 == 0 { 1 } else { -1 };
                        sign * binomial(j, i) * binomial(j + i, i)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { coeffs })
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Integer coefficients of the unnormalized shifted polynomial.
    pub fn coefficients(&self, j: usize) -> &[i64] {
        &self.coeffs[j]
    }

    pub fn eval(&self, j: usize, u: f64) -> f64 {
        let c = &self.coeffs[j];
        let poly = c.iter().rev().fold(0.0, |acc, &a| acc * u + a as f64);
        ((2 * j + 1) as f64).sqrt() * poly
    }
}

fn binomial(n: usize, k: usize) -> i64 {
    let k = k.min(n - k);
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Sample;
    use proptest::prelude::*;

    #[test]
    fn two_point_law_matches_closed_form() {
        let (p1, p2) = (0.3, 0.7);
        let d = DiscreteDist::new(vec![0.0, 1.0], vec![p1, p2]).unwrap();
        let b = ScoreBasis::build(&d, 1).unwrap();
        assert!((b.at(1, 0) + (p2 / p1).sqrt()).abs() < 1e-12);
        assert!((b.at(1, 1) - (p1 / p2).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_basis_is_clipped() {
        let d = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let b = ScoreBasis::build(&d, 4).unwrap();
        assert_eq!(b.m(), 1);
        assert!(b.clipped());
        assert_eq!(b.warnings().len(), 1);
        assert!((b.unit_score(1, 0.2).unwrap() + 1.0).abs() < 1e-12);
        assert!((b.unit_score(1, 0.8).unwrap() - 1.0).abs() < 1e-12);
        // a jump point takes the right cell
        assert!((b.unit_score(1, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(b.unit_score(2, 0.5).is_err());
        assert!(b.unit_score(0, 0.5).is_err());
    }

    #[test]
    fn single_atom_is_degenerate() {
        let d = DiscreteDist::new(vec![3.0], vec![1.0]).unwrap();
        let err = ScoreBasis::build(&d, 2).unwrap_err();
        assert!(err.to_string().contains("degenerate distribution"));
    }

    #[test]
    fn legendre_matches_closed_forms() {
        assert_eq!(legendre(0, 0.3), 1.0);
        assert!(legendre(1, 0.5).abs() < 1e-15);
        assert!((legendre(1, 0.9) - 12f64.sqrt() * 0.4).abs() < 1e-14);
        assert!((legendre(2, 0.0) - 5f64.sqrt()).abs() < 1e-14);
        assert!((legendre(4, 1.0) - 3.0).abs() < 1e-13);
        for &u in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let leg2 = 5f64.sqrt() * (6.0 * u * u - 6.0 * u + 1.0);
            let leg3 = 7f64.sqrt() * (20.0 * u * u * u - 30.0 * u * u + 12.0 * u - 1.0);
            let leg4 = 3.0 * (70.0 * u.powi(4) - 140.0 * u.powi(3) + 90.0 * u * u - 20.0 * u + 1.0);
            assert!((legendre(2, u) - leg2).abs() < 1e-12);
            assert!((legendre(3, u) - leg3).abs() < 1e-12);
            assert!((legendre(4, u) - leg4).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_basis_agrees_with_recurrence() {
        let lb = LegendreBasis::new(10).unwrap();
        for j in 0..=10 {
            for &u in &[0.0, 0.21, 0.5, 0.93, 1.0] {
                assert!((lb.eval(j, u) - legendre(j, u)).abs() < 1e-9, "j={j} u={u}");
            }
        }
        assert_eq!(lb.coefficients(4), &[1, -20, 90, -140, 70]);
        assert!(LegendreBasis::new(21).is_err());
    }

    #[test]
    fn eval_off_atoms_uses_same_polynomial() {
        let d = DiscreteDist::from_weights(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 2.0, 1.0])
            .unwrap();
        let b = ScoreBasis::build(&d, 4).unwrap();
        // polynomial route at the atoms reproduces the table
        for i in 0..d.len() {
            let t1 = (d.mid()[i] - 0.5) / d.midvar().sqrt();
            let poly = b.eval_poly(t1);
            for j in 1..=4 {
                assert!((poly[j - 1] - b.at(j, i)).abs() < 1e-10);
            }
        }
        // between atoms, T_1 follows F
        let x = 1.5;
        let expected = (d.cdf(x) - 0.5) / d.midvar().sqrt();
        assert!((b.eval(1, x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn steps_csv_has_one_row_per_cell() {
        let d = DiscreteDist::empirical(&Sample::new(vec![1.0, 2.0, 2.0, 5.0]).unwrap());
        let b = ScoreBasis::build(&d, 2).unwrap();
        let csv = b.steps_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
        assert!(csv.starts_with("u_left,u_right,j,value\n0,0.25,1,"));
        assert_eq!(b.to_csv().lines().next().unwrap(), "atom,T1,T2");
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteDist> {
        prop::collection::vec(0.001f64..1.0, 2..50).prop_map(|w| {
            let atoms = (0..w.len()).map(|i| i as f64).collect();
            DiscreteDist::from_weights(atoms, w).unwrap()
        })
    }

    proptest! {
        #[test]
        fn scores_are_orthonormal(d in arb_dist()) {
            let b = ScoreBasis::build(&d, d.len() - 1).unwrap();
            let p = d.masses();
            for j in 1..=b.m() {
                let mean: f64 = (0..d.len()).map(|i| p[i] * b.at(j, i)).sum();
                prop_assert!(mean.abs() < 1e-10);
                for l in 1..=b.m() {
                    let ip: f64 = (0..d.len()).map(|i| p[i] * b.at(j, i) * b.at(l, i)).sum();
                    let target = if j == l { 1.0 } else { 0.0 };
                    prop_assert!((ip - target).abs() < 1e-10, "j={} l={} ip={}", j, l, ip);
                }
                prop_assert!(b.at(j, d.len() - 1) > -1e-10);
            }
        }

        #[test]
        fn first_score_is_standardized_mid_distribution(d in arb_dist()) {
            let b = ScoreBasis::build(&d, 1).unwrap();
            for i in 0..d.len() {
                let direct = (d.mid()[i] - 0.5) / d.midvar().sqrt();
                prop_assert!((b.at(1, i) - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn basis_is_invariant_under_monotone_relabeling(d in arb_dist()) {
            let relabeled = DiscreteDist::new(
                d.atoms().iter().map(|x| (x / 7.0).exp()).collect(),
                d.masses().to_vec(),
            ).unwrap();
            let a = ScoreBasis::build(&d, 4).unwrap();
            let b = ScoreBasis::build(&relabeled, 4).unwrap();
            prop_assert_eq!(a.m(), b.m());
            for j in 1..=a.m() {
                for (x, y) in a.scores(j).iter().zip(b.scores(j)) {
                    prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
                }
            }
        }
    }
}
