//! LP moments, LP comoments and the decomposition identities built on them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::basis::{legendre_all, Order, ScoreBasis};
use crate::dist::{ContingencyTable, DiscreteDist, Sample};
use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum_by, GaussLegendre};
use crate::select::Z_CRIT;

/// LP moments `LP(j;X) = E[X T_j(X;X)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpMoments {
    pub coeffs: Vec<f64>,
    pub mean: f64,
    pub var: f64,
    /// Sample size when computed from data.
    pub n: Option<usize>,
}

/// LP moments `LP(1..m)` of the basis' own law.
pub fn lp_moments(b: &ScoreBasis, m: usize) -> Result<LpMoments> {
    if m == 0 || m > b.m() {
        return Err(Error::OutOfRange(format!(
            "requested {m} LP moments from a basis of {} functions",
            b.m()
        )));
    }
    let d = b.dist();
    let x = d.atoms();
    let coeffs = (1..=m)
        .map(|j| {
            let t = b.scores(j);
            d.expect_by(|i| x[i] * t[i])
        })
        .collect();
    Ok(LpMoments {
        coeffs,
        mean: d.mean(),
        var: d.variance(),
        n: None,
    })
}

/// LP moments of a sample's empirical law; `m` is clipped to `k - 1`.
pub fn sample_lp_moments(s: &Sample, m: usize) -> Result<(LpMoments, ScoreBasis)> {
    let d = DiscreteDist::empirical(s);
    let b = ScoreBasis::build(&d, m)?;
    let mut lp = lp_moments(&b, b.m())?;
    lp.n = Some(s.n());
    Ok((lp, b))
}

/// Population LP moments `int_0^1 Q(u) Leg_j(u) du` of a continuous law
/// given its quantile function.
///
/// Uses 256-node Gauss-Legendre after `u = sin^2(pi t / 2)`, which pushes
/// nodes toward both ends so heavy-tailed quantiles stay integrable.
pub fn continuous_lp_moments<Q: Fn(f64) -> f64>(quantile: Q, m: usize) -> Vec<f64> {
    let rule = GaussLegendre::new(256);
    let pts = rule.on_interval(0.0, 1.0);
    let terms: Vec<(f64, Vec<f64>)> = pts
        .iter()
        .map(|&(t, w)| {
            let s = (0.5 * PI * t).sin();
            let u = s * s;
            let jac = 0.5 * PI * (PI * t).sin();
            (w * jac * quantile(u), legendre_all(m, u))
        })
        .collect();
    (0..m)
        .map(|j| pairwise_sum_by(terms.len(), |i| terms[i].0 * terms[i].1[j]))
        .collect()
}

/// Population LP moments of a law on `0, 1, 2, ...`, summed exactly over the
/// atoms up to cumulative mass `1 - 1e-12`.
pub fn discrete_lp_moments<F: Fn(u64) -> f64>(pmf: F, m: usize) -> Result<Vec<f64>> {
    let d = DiscreteDist::from_pmf(pmf, 1e-12)?;
    let b = ScoreBasis::build(&d, m)?;
    Ok(lp_moments(&b, b.m())?.coeffs)
}

/// `LP(1;X)` as a linear combination of order statistics; needs distinct
/// values.
pub fn lp1_order_stat(s: &Sample) -> Result<f64> {
    let mut v = s.values().to_vec();
    v.sort_unstable_by(f64::total_cmp);
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::TiesPresent);
    }
    let n = v.len() as f64;
    if v.len() < 2 {
        return Err(Error::Degenerate("a single observation has no LP moments".into()));
    }
    let centre = (n + 1.0) / 2.0;
    let sum = pairwise_sum_by(v.len(), |i| v[i] * ((i + 1) as f64 - centre));
    Ok(2.0 * 3f64.sqrt() / (n * (n * n - 1.0).sqrt()) * sum)
}

/// `(Var X, sum_j LP(j;X)^2)` over the complete basis.
pub fn variance_decomposition(d: &DiscreteDist) -> Result<(f64, f64)> {
    let b = ScoreBasis::full(d)?;
    let lp = lp_moments(&b, b.m())?;
    Ok((lp.var, lp.coeffs.iter().map(|c| c * c).sum()))
}

/// Cor(X, F(X)) read as `LP(1;X) / sd(X)`; about `sqrt(3/pi)` for normal data.
pub fn dagostino(s: &Sample) -> Result<f64> {
    if s.n() < 3 {
        return Err(Error::InvalidInput("needs at least 3 observations".into()));
    }
    let d = DiscreteDist::empirical(s);
    if d.len() < 2 {
        return Err(Error::Degenerate("constant sample".into()));
    }
    let b = ScoreBasis::build(&d, 1)?;
    let lp1 = lp_moments(&b, 1)?.coeffs[0];
    Ok(lp1 / d.variance().sqrt())
}

/// Short-tail flag: `|LP(1;Z)|^2 > 0.95` for the standardized variable.
pub fn is_short_tailed(dagostino_ratio: f64) -> bool {
    dagostino_ratio * dagostino_ratio > 0.95
}

/// A finite joint law with LP bases for both margins.
///
/// Built either from a contingency table (margins coded `0..I`, `0..J`) or
/// from paired observations; the joint masses are stored as the nonzero
/// cells `(row atom, column atom, probability)`.
#[derive(Debug, Clone)]
pub struct Joint {
    bx: ScoreBasis,
    by: ScoreBasis,
    cells: Vec<(usize, usize, f64)>,
    n: Option<f64>,
    /// Atom index per observation, when built from pairs.
    pairs: Option<(Vec<usize>, Vec<usize>)>,
}

impl Joint {
    pub fn from_table(t: &ContingencyTable, mx: Order, my: Order) -> Result<Self> {
        let (dx, dy) = t.margins()?;
        let bx = ScoreBasis::with_order(&dx, mx)?;
        let by = ScoreBasis::with_order(&dy, my)?;
        let cells = t
            .probs()
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(move |(j, p)| (i, j, *p))
            })
            .collect();
        Ok(Self {
            bx,
            by,
            cells,
            n: t.n(),
            pairs: None,
        })
    }

    pub fn from_pairs(x: &[f64], y: &[f64], mx: Order, my: Order) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "paired columns differ in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        let (dx, ix) = DiscreteDist::empirical_with_index(x);
        let (dy, iy) = DiscreteDist::empirical_with_index(y);
        let bx = ScoreBasis::with_order(&dx, mx)?;
        let by = ScoreBasis::with_order(&dy, my)?;
        let mut keys: Vec<(usize, usize)> = ix.iter().copied().zip(iy.iter().copied()).collect();
        keys.sort_unstable();
        let n = x.len() as f64;
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        let mut start = 0;
        while start < keys.len() {
            let mut end = start + 1;
            while end < keys.len() && keys[end] == keys[start] {
                end += 1;
            }
            cells.push((keys[start].0, keys[start].1, (end - start) as f64 / n));
            start = end;
        }
        Ok(Self {
            bx,
            by,
            cells,
            n: Some(n),
            pairs: Some((ix, iy)),
        })
    }

    /// Convenience: `m` score functions per margin.
    pub fn pairs_m(x: &[f64], y: &[f64], m: usize) -> Result<Self> {
        Self::from_pairs(x, y, Order::Fixed(m), Order::Fixed(m))
    }

    pub fn x_basis(&self) -> &ScoreBasis {
        &self.bx
    }

    pub fn y_basis(&self) -> &ScoreBasis {
        &self.by
    }

    pub fn cells(&self) -> &[(usize, usize, f64)] {
        &self.cells
    }

    pub fn n(&self) -> Option<f64> {
        self.n
    }

    /// Per-observation atom indices, for joints built from pairs.
    pub fn pair_indices(&self) -> Option<(&[usize], &[usize])> {
        self.pairs.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()))
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w: Vec<String> = self.bx.warnings().iter().map(|s| format!("X: {s}")).collect();
        w.extend(self.by.warnings().iter().map(|s| format!("Y: {s}")));
        w
    }

    /// `E[f(i, l)]` over the joint cells.
    pub fn expect<F: Fn(usize, usize) -> f64>(&self, f: F) -> f64 {
        pairwise_sum_by(self.cells.len(), |c| {
            let (i, l, p) = self.cells[c];
            p * f(i, l)
        })
    }

    /// Joint probability matrix over margin atoms.
    pub fn prob_matrix(&self) -> Vec<Vec<f64>> {
        let mut p = vec![vec![0.0; self.by.dist().len()]; self.bx.dist().len()];
        for &(i, l, q) in &self.cells {
            p[i][l] += q;
        }
        p
    }

    pub fn comoments(&self) -> LpComoments {
        let (mx, my) = (self.bx.m(), self.by.m());
        let x = self.bx.dist().atoms();
        let y = self.by.dist().atoms();
        let entries: Vec<Vec<f64>> = (1..=mx)
            .map(|j| {
                let tj = self.bx.scores(j);
                (1..=my)
                    .map(|k| {
                        let tk = self.by.scores(k);
                        self.expect(|i, l| tj[i] * tk[l])
                    })
                    .collect()
            })
            .collect();
        let zero_col = (1..=mx)
            .map(|j| {
                let tj = self.bx.scores(j);
                self.expect(|i, l| tj[i] * y[l])
            })
            .collect();
        let zero_row = (1..=my)
            .map(|k| {
                let tk = self.by.scores(k);
                self.expect(|i, l| x[i] * tk[l])
            })
            .collect();
        LpComoments::new(entries, self.n, zero_col, zero_row)
    }

    /// `Cov(X, Y)` computed directly from the joint masses.
    pub fn covariance(&self) -> f64 {
        let x = self.bx.dist().atoms();
        let y = self.by.dist().atoms();
        let ex = self.bx.dist().mean();
        let ey = self.by.dist().mean();
        self.expect(|i, l| (x[i] - ex) * (y[l] - ey))
    }
}

/// LP comoment matrix `LP[j,k] = E[T_j(X) T_k(Y)]` plus zero-order comoments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpComoments {
    pub entries: Vec<Vec<f64>>,
    /// `|sqrt(n) LP[j,k]| >= 1.96`; all false without a sample size.
    pub significance: Vec<Vec<bool>>,
    pub n: Option<f64>,
    /// `(m_x, m_y)`.
    pub m: (usize, usize),
    /// `LP[j,0] = E[Y T_j(X)]`.
    pub zero_col: Vec<f64>,
    /// `LP[0,k] = E[X T_k(Y)]`.
    pub zero_row: Vec<f64>,
}

impl LpComoments {
    pub fn new(entries: Vec<Vec<f64>>, n: Option<f64>, zero_col: Vec<f64>, zero_row: Vec<f64>) -> Self {
        let m = (entries.len(), entries.first().map_or(0, Vec::len));
        let significance = entries
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| n.is_some_and(|n| (n.sqrt() * v).abs() >= Z_CRIT))
                    .collect()
            })
            .collect();
        Self {
            entries,
            significance,
            n,
            m,
            zero_col,
            zero_row,
        }
    }

    /// Comoments given directly as a matrix, without zero-order terms.
    pub fn from_matrix(entries: Vec<Vec<f64>>, n: Option<f64>) -> Result<Self> {
        let cols = entries.first().map_or(0, Vec::len);
        if entries.is_empty() || cols == 0 {
            return Err(Error::EmptyInput);
        }
        if entries.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged comoment matrix".into()));
        }
        if entries.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite comoment".into()));
        }
        Ok(Self::new(entries, n, Vec::new(), Vec::new()))
    }

    pub fn rows(&self) -> usize {
        self.m.0
    }

    pub fn cols(&self) -> usize {
        self.m.1
    }

    /// `LP[j,k]` with 1-based indices.
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j - 1][k - 1]
    }

    /// Sum of all squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        let flat: Vec<f64> = self.entries.iter().flatten().map(|v| v * v).collect();
        crate::numeric::pairwise_sum(&flat)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j");
        for k in 1..=self.cols() {
            let _ = write!(out, ",k{k}");
        }
        out.push('\n');
        for (j, r) in self.entries.iter().enumerate() {
            let _ = write!(out, "{}", j + 1);
            for v in r {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Comoments of a table with `m` score functions per margin.
pub fn table_comoments(t: &ContingencyTable, m: usize) -> Result<LpComoments> {
    Ok(Joint::from_table(t, Order::Fixed(m), Order::Fixed(m))?.comoments())
}

/// Comoments of paired observations with `m` score functions per margin.
pub fn pair_comoments(x: &[f64], y: &[f64], m: usize) -> Result<LpComoments> {
    Ok(Joint::pairs_m(x, y, m)?.comoments())
}

/// `LP[1,1]`, the ties-corrected Spearman correlation.
pub fn spearman_lp11(j: &Joint) -> f64 {
    let t1 = j.x_basis().scores(1);
    let s1 = j.y_basis().scores(1);
    j.expect(|i, l| t1[i] * s1[l])
}

/// `(Cov(X,Y), sum_{j,k} LP(j;X) LP(k;Y) LP[j,k])`; the two agree when the
/// joint carries complete bases.
pub fn covariance_decomposition(j: &Joint) -> Result<(f64, f64)> {
    let lx = lp_moments(j.x_basis(), j.x_basis().m())?.coeffs;
    let ly = lp_moments(j.y_basis(), j.y_basis().m())?.coeffs;
    let cm = j.comoments();
    let mut terms = Vec::with_capacity(lx.len() * ly.len());
    for (a, row) in lx.iter().zip(&cm.entries) {
        for (b, c) in ly.iter().zip(row) {
            terms.push(a * b * c);
        }
    }
    Ok((j.covariance(), crate::numeric::pairwise_sum(&terms)))
}

/// Generalized Gini correlations
/// `(LP[j,0] / LP(j;Y), LP[0,j] / LP(j;X))`.
pub fn gini_correlations(joint: &Joint, j: usize) -> Result<(f64, f64)> {
    if j == 0 || j > joint.x_basis().m() || j > joint.y_basis().m() {
        return Err(Error::OutOfRange(format!("Gini order {j} exceeds the bases")));
    }
    let cm = joint.comoments();
    let lx = lp_moments(joint.x_basis(), j)?.coeffs[j - 1];
    let ly = lp_moments(joint.y_basis(), j)?.coeffs[j - 1];
    if ly.abs() < 1e-12 || lx.abs() < 1e-12 {
        return Err(Error::GiniUndefined(j));
    }
    Ok((cm.zero_col[j - 1] / ly, cm.zero_row[j - 1] / lx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn order_statistic_formula() {
        let s = Sample::new(vec![3.0, 1.0, 2.0]).unwrap();
        let v = lp1_order_stat(&s).unwrap();
        assert!((v - 6f64.sqrt() / 3.0).abs() < 1e-15);
        let (lp, _) = sample_lp_moments(&s, 1).unwrap();
        assert!((lp.coeffs[0] - v).abs() < 1e-10);
        let shifted = Sample::new(vec![13.0, 11.0, 12.0]).unwrap();
        assert!((lp1_order_stat(&shifted).unwrap() - v).abs() < 1e-12);
        let ties = Sample::new(vec![1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(lp1_order_stat(&ties), Err(Error::TiesPresent)));
    }

    #[test]
    fn bernoulli_variance_is_one_term() {
        let p = 0.3;
        let d = DiscreteDist::new(vec![0.0, 1.0], vec![1.0 - p, p]).unwrap();
        let (var, sum) = variance_decomposition(&d).unwrap();
        assert!((var - p * (1.0 - p)).abs() < 1e-15);
        assert!((sum - var).abs() < 1e-12);
    }

    #[test]
    fn normal_population_moments() {
        let n = Normal::standard();
        let lp = continuous_lp_moments(|u| n.inverse_cdf(u), 6);
        assert!((lp[0] - (3.0 / PI).sqrt()).abs() < 1e-6);
        assert!(lp[1].abs() < 1e-9);
        assert!((lp[2] - 0.183).abs() < 1e-3);
        let uniform = continuous_lp_moments(|u| u, 4);
        assert!((uniform[0] - 1.0 / 12f64.sqrt()).abs() < 1e-12);
        assert!(uniform[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn genest_tables_are_perfectly_rank_correlated() {
        for i in 1..10 {
            let p = i as f64 / 10.0;
            let t = ContingencyTable::from_entries(vec![vec![p, 0.0], vec![0.0, 1.0 - p]]).unwrap();
            let j = Joint::from_table(&t, Order::Fixed(1), Order::Fixed(1)).unwrap();
            assert!((spearman_lp11(&j) - 1.0).abs() < 1e-12);
            let t = ContingencyTable::from_entries(vec![vec![0.0, p], vec![1.0 - p, 0.0]]).unwrap();
            let j = Joint::from_table(&t, Order::Fixed(1), Order::Fixed(1)).unwrap();
            assert!((spearman_lp11(&j) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn independence_table_has_zero_comoments() {
        let r = [0.1, 0.4, 0.5];
        let c = [0.3, 0.2, 0.25, 0.25];
        let t = ContingencyTable::from_entries(
            r.iter().map(|a| c.iter().map(|b| a * b).collect()).collect(),
        )
        .unwrap();
        let cm = table_comoments(&t, 4).unwrap();
        assert_eq!(cm.m, (2, 3));
        assert!(cm.entries.iter().flatten().all(|v| v.abs() < 1e-12));
        assert!(cm.significance.iter().flatten().all(|s| !s));
    }

    #[test]
    fn concordant_pairs_have_unit_spearman() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() + i as f64).collect();
        let j = Joint::pairs_m(&x, &x, 1).unwrap();
        assert!((spearman_lp11(&j) - 1.0).abs() < 1e-9);
        let (a, b) = gini_correlations(&Joint::pairs_m(&x, &x, 4).unwrap(), 3).unwrap();
        assert!((a - 1.0).abs() < 1e-9 && (b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_by_two_covariance_matches_phi() {
        let p = [[0.3, 0.2], [0.1, 0.4]];
        let t = ContingencyTable::from_entries(p.iter().map(|r| r.to_vec()).collect()).unwrap();
        let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
        let (cov, lp) = covariance_decomposition(&j).unwrap();
        let (r1, r2, c1, c2): (f64, f64, f64, f64) = (0.5, 0.5, 0.4, 0.6);
        let phi = (p[0][0] * p[1][1] - p[0][1] * p[1][0]) / (r1 * r2 * c1 * c2).sqrt();
        let var_x = r1 * r2;
        let var_y = c1 * c2;
        assert!((cov - phi * (var_x * var_y).sqrt()).abs() < 1e-12);
        assert!((cov - lp).abs() < 1e-12);
    }

    #[test]
    fn dagostino_flags() {
        let u: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).collect();
        let r = dagostino(&Sample::new(u).unwrap()).unwrap();
        assert!(is_short_tailed(r));
        assert!(dagostino(&Sample::new(vec![1.0, 1.0, 1.0]).unwrap()).is_err());
    }

    fn arb_joint() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..8, 2usize..8).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), r)
        })
    }

    proptest! {
        #[test]
        fn parseval_on_random_laws(w in prop::collection::vec(0.01f64..1.0, 2..20)) {
            let atoms = (0..w.len()).map(|i| (i as f64).powf(1.3)).collect();
            let d = DiscreteDist::from_weights(atoms, w).unwrap();
            let (var, sum) = variance_decomposition(&d).unwrap();
            prop_assert!((var - sum).abs() < 1e-9 * var.max(1.0));
            let b = ScoreBasis::build(&d, 2).unwrap();
            let part: f64 = lp_moments(&b, b.m()).unwrap().coeffs.iter().map(|c| c * c).sum();
            prop_assert!(part <= var + 1e-12);
        }

        #[test]
        fn covariance_decomposition_on_random_tables(e in arb_joint()) {
            let t = ContingencyTable::from_entries(e).unwrap();
            let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
            let (cov, lp) = covariance_decomposition(&j).unwrap();
            prop_assert!((cov - lp).abs() < 1e-8);
            for v in j.comoments().entries.iter().flatten() {
                prop_assert!(v.abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn comoments_invariant_under_monotone_maps(
            x in prop::collection::vec(-3i32..3, 5..60),
            y in prop::collection::vec(-3i32..3, 5..60),
        ) {
            let n = x.len().min(y.len());
            let xs: Vec<f64> = x[..n].iter().map(|&v| f64::from(v)).collect();
            let ys: Vec<f64> = y[..n].iter().map(|&v| f64::from(v)).collect();
            if let Ok(a) = pair_comoments(&xs, &ys, 4) {
                let ex: Vec<f64> = xs.iter().map(|v| v.exp()).collect();
                let b = pair_comoments(&ex, &ys, 4).unwrap();
                prop_assert_eq!(a.entries, b.entries);
            }
        }
    }
}
