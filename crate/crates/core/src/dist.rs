//! Finite probability laws, empirical distributions, and contingency tables.
//!
//! Every sample distribution is discrete, so a single [`DiscreteDist`] type
//! carries both population laws on finitely many atoms and empirical laws of
//! observed data. The mid-distribution `Fmid(x) = F(x) - p(x)/2` is stored
//! alongside the cumulative masses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Absolute tolerance on probability sums.
pub const PROB_TOL: f64 = 1e-12;

/// A probability law on finitely many, strictly increasing atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDist {
    atoms: Vec<f64>,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
    mid: Vec<f64>,
}

impl DiscreteDist {
    /// Builds a law from atoms and probabilities.
    ///
    /// Atoms must be finite and strictly increasing; masses nonnegative and
    /// summing to one within [`PROB_TOL`]. Zero-mass atoms are dropped.
    pub fn new(atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        let total = check_weights(&atoms, &masses)?;
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidInput(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(Self::build(atoms, masses, total))
    }

    /// Builds a law from atoms and nonnegative weights, normalizing them.
    pub fn from_weights(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total = check_weights(&atoms, &weights)?;
        if total <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        Ok(Self::build(atoms, weights, total))
    }

    fn build(atoms: Vec<f64>, weights: Vec<f64>, total: f64) -> Self {
        let (atoms, weights): (Vec<f64>, Vec<f64>) = atoms
            .into_iter()
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .unzip();
        let masses: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // cumulative from running weight totals keeps the last entry at 1
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut running = 0.0;
        let mut compensation = 0.0;
        for &w in &weights {
            let y = w - compensation;
            let t = running + y;
            compensation = (t - running) - y;
            running = t;
            cumulative.push((running / total).min(1.0));
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let mid = cumulative
            .iter()
            .zip(&masses)
            .map(|(c, p)| c - p / 2.0)
            .collect();
        Self {
            atoms,
            masses,
            cumulative,
            mid,
        }
    }

    /// Empirical law of a sample: distinct sorted values with relative
    /// frequencies.
    pub fn empirical(sample: &Sample) -> Self {
        Self::empirical_with_index(sample.values()).0
    }

    /// Empirical law plus, for each observation, the index of its atom.
    pub fn empirical_with_index(values: &[f64]) -> (Self, Vec<usize>) {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut atoms = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut index = vec![0usize; n];
        for &i in &order {
            let x = values[i];
            if atoms.last() != Some(&x) {
                atoms.push(x);
                counts.push(0.0);
            }
            *counts.last_mut().expect("pushed above") += 1.0;
            index[i] = atoms.len() - 1;
        }
        (Self::build(atoms, counts, n as f64), index)
    }

    /// Discrete law read off a probability mass function on `0, 1, 2, ...`,
    /// truncated once the cumulative mass reaches `1 - tail` and renormalized.
    pub fn from_pmf<F: Fn(u64) -> f64>(pmf: F, tail: f64) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut masses = Vec::new();
        let mut total = 0.0;
        for k in 0..10_000_000u64 {
            let p = pmf(k);
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidInput(format!("pmf({k}) = {p}")));
            }
            atoms.push(k as f64);
            masses.push(p);
            total += p;
            if total >= 1.0 - tail {
                return Self::from_weights(atoms, masses);
            }
        }
        Err(Error::Numeric("pmf tail did not vanish".into()))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn mid(&self) -> &[f64] {
        &self.mid
    }

    /// Index of `x` among the atoms, if it is one.
    pub fn atom_index(&self, x: f64) -> Option<usize> {
        self.atoms.binary_search_by(|a| a.total_cmp(&x)).ok()
    }

    pub fn pmf(&self, x: f64) -> f64 {
        self.atom_index(x).map_or(0.0, |i| self.masses[i])
    }

    /// `F(x) = P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|&a| a <= x);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }

    /// Mid-distribution `F(x) - p(x)/2`.
    pub fn midcdf(&self, x: f64) -> f64 {
        match self.atom_index(x) {
            Some(i) => self.mid[i],
            None => self.cdf(x),
        }
    }

    /// Left-continuous quantile: the smallest atom `x` with `F(x) >= u`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::OutOfRange(format!("quantile level {u} not in (0,1)")));
        }
        Ok(self.atoms[self.quantile_index(u)])
    }

    /// Atom index returned by [`Self::quantile`], with `u` clamped into range.
    pub fn quantile_index(&self, u: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c < u);
        i.min(self.atoms.len() - 1)
    }

    /// Index of the cell `(F(x_{i-1}), F(x_i)]` holding `u`, except that a
    /// `u` sitting exactly on a jump belongs to the cell on its right.
    pub fn cell_index(&self, u: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.atoms.len() - 1)
    }

    /// `Var[Fmid(X)] = (1 - sum p^3) / 12`.
    pub fn midvar(&self) -> f64 {
        let cubes: Vec<f64> = self.masses.iter().map(|p| p * p * p).collect();
        (1.0 - pairwise_sum(&cubes)) / 12.0
    }

    pub fn mean(&self) -> f64 {
        let terms: Vec<f64> = self.atoms.iter().zip(&self.masses).map(|(x, p)| x * p).collect();
        pairwise_sum(&terms)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let terms: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.masses)
            .map(|(x, p)| p * (x - mu) * (x - mu))
            .collect();
        pairwise_sum(&terms)
    }

    /// Probability-weighted sum of `f(atom_index)`.
    pub fn expect_by<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        let terms: Vec<f64> = (0..self.len()).map(|i| self.masses[i] * f(i)).collect();
        pairwise_sum(&terms)
    }
}

fn check_weights(atoms: &[f64], weights: &[f64]) -> Result<f64> {
    if atoms.is_empty() {
        return Err(Error::EmptyInput);
    }
    if atoms.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} atoms but {} masses",
            atoms.len(),
            weights.len()
        )));
    }
    if atoms.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite atom".into()));
    }
    if atoms.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("atoms must be strictly increasing".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("masses must be finite and nonnegative".into()));
    }
    Ok(pairwise_sum(weights))
}

/// A sample of finite real observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite observation {bad}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Sum threshold below which a table is read as probabilities, not counts.
pub const PROBABILITY_TABLE_TOL: f64 = 1e-9;

/// An `I x J` two-way table of counts or probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyTable {
    probs: Vec<Vec<f64>>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    n: Option<f64>,
}

impl ContingencyTable {
    /// Builds a table from raw entries. Entries summing to at most
    /// `1 + 1e-9` are taken as probabilities (no sample size); otherwise
    /// they are counts, normalized, with `n` retained.
    pub fn new(
        entries: Vec<Vec<f64>>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        let rows = entries.len();
        if rows == 0 || entries[0].is_empty() {
            return Err(Error::EmptyInput);
        }
        let cols = entries[0].len();
        if entries.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged table".into()));
        }
        if row_labels.len() != rows || col_labels.len() != cols {
            return Err(Error::InvalidInput("label count does not match table shape".into()));
        }
        if entries.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("table entries must be finite and nonnegative".into()));
        }
        let flat: Vec<f64> = entries.iter().flatten().copied().collect();
        let total = pairwise_sum(&flat);
        if total <= 0.0 {
            return Err(Error::InvalidInput("table has no mass".into()));
        }
        for (i, r) in entries.iter().enumerate() {
            if r.iter().all(|&v| v == 0.0) {
                return Err(Error::EmptyCategory {
                    axis: "row",
                    index: i,
                    label: row_labels[i].clone(),
                });
            }
        }
        for j in 0..cols {
            if entries.iter().all(|r| r[j] == 0.0) {
                return Err(Error::EmptyCategory {
                    axis: "column",
                    index: j,
                    label: col_labels[j].clone(),
                });
            }
        }
        let n = if total <= 1.0 + PROBABILITY_TABLE_TOL {
            None
        } else {
            Some(total)
        };
        let probs = entries
            .into_iter()
            .map(|r| r.into_iter().map(|v| v / total).collect())
            .collect();
        Ok(Self {
            probs,
            row_labels,
            col_labels,
            n,
        })
    }

    /// Table with labels `0..I` and `0..J`.
    pub fn from_entries(entries: Vec<Vec<f64>>) -> Result<Self> {
        let rows = entries.len();
        let cols = entries.first().map_or(0, Vec::len);
        Self::new(
            entries,
            (0..rows).map(|i| i.to_string()).collect(),
            (0..cols).map(|j| j.to_string()).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.probs.len()
    }

    pub fn cols(&self) -> usize {
        self.probs[0].len()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i][j]
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    /// Total count, when the table was given as counts.
    pub fn n(&self) -> Option<f64> {
        self.n
    }

    pub fn row_masses(&self) -> Vec<f64> {
        self.probs.iter().map(|r| pairwise_sum(r)).collect()
    }

    pub fn col_masses(&self) -> Vec<f64> {
        (0..self.cols())
            .map(|j| {
                let col: Vec<f64> = self.probs.iter().map(|r| r[j]).collect();
                pairwise_sum(&col)
            })
            .collect()
    }

    /// Row and column marginal laws on category codes `0..I` and `0..J`.
    pub fn margins(&self) -> Result<(DiscreteDist, DiscreteDist)> {
        let rows = DiscreteDist::from_weights(
            (0..self.rows()).map(|i| i as f64).collect(),
            self.row_masses(),
        )?;
        let cols = DiscreteDist::from_weights(
            (0..self.cols()).map(|j| j as f64).collect(),
            self.col_masses(),
        )?;
        Ok((rows, cols))
    }

    /// Expands an integer count table into paired observations
    /// `(row code, column code)`.
    pub fn to_pairs(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n.ok_or_else(|| {
            Error::InvalidInput("table holds probabilities; observation pairs need counts".into())
        })?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, r) in self.probs.iter().enumerate() {
            for (j, p) in r.iter().enumerate() {
                let c = p * n;
                let rounded = c.round();
                if (c - rounded).abs() > 1e-6 * n.max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "cell ({i},{j}) count {c} is not an integer"
                    )));
                }
                for _ in 0..rounded as usize {
                    xs.push(i as f64);
                    ys.push(j as f64);
                }
            }
        }
        Ok((xs, ys))
    }

    /// Table built from paired category codes; each distinct value becomes a
    /// category in ascending order.
    pub fn from_pairs(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(Error::InvalidInput("paired columns differ in length".into()));
        }
        let (dx, ix) = DiscreteDist::empirical_with_index(x);
        let (dy, iy) = DiscreteDist::empirical_with_index(y);
        let mut counts = vec![vec![0.0; dy.len()]; dx.len()];
        for (a, b) in ix.iter().zip(&iy) {
            counts[*a][*b] += 1.0;
        }
        let mut table = Self::new(
            counts,
            dx.atoms().iter().map(|v| v.to_string()).collect(),
            dy.atoms().iter().map(|v| v.to_string()).collect(),
        )?;
        table.n = Some(x.len() as f64);
        Ok(table)
    }

    /// Outer product of the margins: the independence table.
    pub fn independence(&self) -> Self {
        let r = self.row_masses();
        let c = self.col_masses();
        let probs = r.iter().map(|a| c.iter().map(|b| a * b).collect()).collect();
        Self {
            probs,
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
            n: self.n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bernoulli() -> DiscreteDist {
        DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn empirical_collapses_ties() {
        let d = DiscreteDist::empirical(&Sample::new(vec![1.0, 2.0, 2.0, 3.0]).unwrap());
        assert_eq!(d.atoms(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.masses(), &[0.25, 0.5, 0.25]);
        let single = DiscreteDist::empirical(&Sample::new(vec![5.0]).unwrap());
        assert_eq!(single.atoms(), &[5.0]);
        assert_eq!(single.masses(), &[1.0]);
    }

    #[test]
    fn empty_sample_is_rejected() {
        let err = Sample::new(vec![]).unwrap_err();
        assert_eq!(err.to_string(), "empty input");
    }

    #[test]
    fn midcdf_of_bernoulli() {
        let d = bernoulli();
        assert_eq!(d.midcdf(0.0), 0.25);
        assert_eq!(d.midcdf(1.0), 0.75);
        assert_eq!(d.midcdf(0.5), 0.5);
        assert_eq!(d.midcdf(-1.0), 0.0);
        assert_eq!(d.midcdf(2.0), 1.0);
    }

    #[test]
    fn quantile_is_left_continuous() {
        let d = bernoulli();
        assert_eq!(d.quantile(0.3).unwrap(), 0.0);
        assert_eq!(d.quantile(0.5).unwrap(), 0.0);
        assert_eq!(d.quantile(0.7).unwrap(), 1.0);
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
        assert!(d.quantile(f64::NAN).is_err());
        // cells use the right-hand convention at a jump
        assert_eq!(d.cell_index(0.5), 1);
        assert_eq!(d.cell_index(0.49), 0);
    }

    #[test]
    fn midvar_examples() {
        assert!((bernoulli().midvar() - 0.0625).abs() < 1e-15);
        let n = 1000;
        let d = DiscreteDist::from_weights((0..n).map(f64::from).collect(), vec![1.0; n as usize])
            .unwrap();
        assert!((d.midvar() - 1.0 / 12.0).abs() < 1e-5);
        let hair = [0.27, 0.05, 0.40, 0.26, 0.02];
        let d = DiscreteDist::new((0..5).map(f64::from).collect(), hair.to_vec()).unwrap();
        let by_hand = (1.0
            - (0.27f64.powi(3) + 0.05f64.powi(3) + 0.40f64.powi(3) + 0.26f64.powi(3) + 0.02f64.powi(3)))
            / 12.0;
        assert!((d.midvar() - by_hand).abs() < 1e-15);
    }

    #[test]
    fn zero_masses_are_dropped() {
        let d = DiscreteDist::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(d.atoms(), &[0.0, 2.0]);
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(DiscreteDist::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDist::new(vec![0.0, 1.0], vec![-0.5, 1.5]).is_err());
        assert!(matches!(DiscreteDist::new(vec![], vec![]), Err(Error::EmptyInput)));
    }

    #[test]
    fn table_margins_and_empty_categories() {
        let t = ContingencyTable::from_entries(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        let (r, c) = t.margins().unwrap();
        assert_eq!(r.masses(), &[0.5, 0.5]);
        assert_eq!(c.masses(), &[0.5, 0.5]);
        assert_eq!(t.n(), None);

        let err = ContingencyTable::new(
            vec![vec![1.0, 0.0], vec![2.0, 0.0]],
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("column category 1 (y)"));
    }

    #[test]
    fn counts_table_keeps_n_and_expands() {
        let t = ContingencyTable::from_entries(vec![vec![2.0, 1.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(t.n(), Some(6.0));
        let (x, y) = t.to_pairs().unwrap();
        assert_eq!(x.len(), 6);
        let back = ContingencyTable::from_pairs(&x, &y).unwrap();
        assert_eq!(back.probs(), t.probs());
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteDist> {
        prop::collection::vec(0.01f64..1.0, 1..40).prop_map(|w| {
            let atoms = (0..w.len()).map(|i| i as f64 * 0.7 - 3.0).collect();
            DiscreteDist::from_weights(atoms, w).unwrap()
        })
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf_at_atoms(d in arb_dist()) {
            for (i, &x) in d.atoms().iter().enumerate() {
                let u = d.cumulative()[i];
                if u < 1.0 {
                    prop_assert_eq!(d.quantile(u).unwrap(), x);
                }
                prop_assert_eq!(d.atoms()[d.quantile_index(u)], x);
            }
        }

        #[test]
        fn mid_distribution_has_mean_half(d in arb_dist()) {
            let m = d.expect_by(|i| d.mid()[i]);
            prop_assert!((m - 0.5).abs() < 1e-12);
            let direct = d.expect_by(|i| (d.mid()[i] - 0.5).powi(2));
            prop_assert!((direct - d.midvar()).abs() < 1e-12);
            prop_assert!((d.cumulative().last().unwrap() - 1.0).abs() < 1e-12);
            for i in 0..d.len() {
                prop_assert_eq!(d.mid()[i], d.cumulative()[i] - d.masses()[i] / 2.0);
            }
        }

        #[test]
        fn empirical_is_permutation_invariant(mut v in prop::collection::vec(-5i32..5, 1..60), seed in any::<u64>()) {
            let values: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
            let a = DiscreteDist::empirical(&Sample::new(values).unwrap());
            // deterministic shuffle
            let mut s = seed;
            for i in (1..v.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let b = DiscreteDist::empirical(&Sample::new(v.iter().map(|&x| f64::from(x)).collect()).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
