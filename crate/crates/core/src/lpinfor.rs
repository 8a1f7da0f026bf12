//! LPINFOR: the squared-comoment dependence number and its relatives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::copula::CopulaModel;
use crate::dist::ContingencyTable;
use crate::error::{Error, Result};
use crate::moments::{Joint, LpComoments};
use crate::select::Selection;

/// Smallest permutation count accepted.
pub const MIN_PERMUTATIONS: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpInfor {
    pub raw: f64,
    pub smooth: f64,
    pub df_raw: usize,
    pub df_smooth: usize,
    /// Selected 1-based `(j, k)` entries.
    pub selected: Vec<(usize, usize)>,
    /// `LP[1,1]^2 / smooth`, when `LP[1,1]` is selected.
    pub linearity: Option<f64>,
}

pub fn lpinfor(cm: &LpComoments, selection: &Selection) -> Result<LpInfor> {
    let sel = selection.select_matrix(&cm.entries, cm.n)?;
    let smooth: f64 = sel.iter().map(|&(j, k)| cm.entries[j][k].powi(2)).sum();
    let linearity = (sel.contains(&(0, 0)) && smooth > 0.0).then(|| cm.entries[0][0].powi(2) / smooth);
    Ok(LpInfor {
        raw: cm.frobenius_sq(),
        smooth,
        df_raw: cm.rows() * cm.cols(),
        df_smooth: sel.len(),
        selected: sel.iter().map(|&(j, k)| (j + 1, k + 1)).collect(),
        linearity,
    })
}

/// `rho^2 / (1 - rho^2)`, the LPINFOR of a bivariate normal.
pub fn gaussian_lpinfor(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::OutOfRange(format!("correlation {rho} must lie in (-1, 1)")));
    }
    Ok(rho * rho / (1.0 - rho * rho))
}

/// Chi-square divergence `sum (p - p_x p_y)^2 / (p_x p_y)`, i.e. `chi^2 / n`.
pub fn chidiv(t: &ContingencyTable) -> f64 {
    let r = t.row_masses();
    let c = t.col_masses();
    let mut terms = Vec::with_capacity(t.rows() * t.cols());
    for (i, ri) in r.iter().enumerate() {
        for (j, cj) in c.iter().enumerate() {
            let e = ri * cj;
            terms.push((t.prob(i, j) - e).powi(2) / e);
        }
    }
    crate::numeric::pairwise_sum(&terms)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub pvalue: f64,
}

/// Pearson's test of independence; needs a count table.
pub fn chi_square_test(t: &ContingencyTable) -> Result<ChiSquareTest> {
    let n = t
        .n()
        .ok_or_else(|| Error::InvalidInput("chi-square test needs counts, not probabilities".into()))?;
    let df = (t.rows() - 1) * (t.cols() - 1);
    let statistic = n * chidiv(t);
    let law = ChiSquared::new(df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        df,
        pvalue: law.sf(statistic),
    })
}

/// Statistic recomputed under each permutation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PermStatistic {
    Raw,
    /// Smooth LPINFOR with the rule re-applied to every replicate.
    Smooth(Selection),
    /// `|LP[j,k]|`, 1-based.
    Entry(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationTest {
    pub observed: f64,
    pub pvalue: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Permutation p-value `(1 + #{stat* >= stat}) / (B + 1)` for independence.
///
/// Replicate `b` shuffles the `Y` labels with its own ChaCha stream
/// (`seed`, stream `b`), so the result depends only on `(seed, B)` and not
/// on the number of worker threads. Tables with integer counts are
/// expanded into pairs.
pub fn permutation_pvalue(
    joint: &Joint,
    statistic: &PermStatistic,
    replicates: usize,
    seed: u64,
) -> Result<PermutationTest> {
    if replicates < MIN_PERMUTATIONS {
        return Err(Error::OutOfRange(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {replicates}"
        )));
    }
    let (ix, iy) = match joint.pair_indices() {
        Some((a, b)) => (a.to_vec(), b.to_vec()),
        None => expand_counts(joint)?,
    };
    let n = ix.len() as f64;
    let eval = |iy: &[usize]| -> Result<f64> {
        let cm = comoments_from_indices(joint, &ix, iy, n);
        match statistic {
            PermStatistic::Raw => Ok(cm.frobenius_sq()),
            PermStatistic::Smooth(sel) => Ok(lpinfor(&cm, sel)?.smooth),
            PermStatistic::Entry(j, k) => {
                if *j == 0 || *k == 0 || *j > cm.rows() || *k > cm.cols() {
                    return Err(Error::OutOfRange(format!("entry ({j},{k}) outside the comoment matrix")));
                }
                Ok(cm.get(*j, *k).abs())
            }
        }
    };
    let observed = eval(&iy)?;
    let cutoff = observed - 1e-12 * observed.abs().max(1.0);
    let exceed = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let mut perm = iy.clone();
            perm.shuffle(&mut rng);
            eval(&perm).map(|v| usize::from(v >= cutoff))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(PermutationTest {
        observed,
        pvalue: (1 + exceed) as f64 / (replicates + 1) as f64,
        replicates,
        seed,
    })
}

fn comoments_from_indices(joint: &Joint, ix: &[usize], iy: &[usize], n: f64) -> LpComoments {
    let (bx, by) = (joint.x_basis(), joint.y_basis());
    let (mx, my) = (bx.m(), by.m());
    let mut acc = vec![vec![0.0; my]; mx];
    for (&a, &b) in ix.iter().zip(iy) {
        for (j, row) in acc.iter_mut().enumerate() {
            let tx = bx.at(j + 1, a);
            for (k, cell) in row.iter_mut().enumerate() {
                *cell += tx * by.at(k + 1, b);
            }
        }
    }
    for row in &mut acc {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    LpComoments::new(acc, Some(n), vec![0.0; mx], vec![0.0; my])
}

fn expand_counts(joint: &Joint) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = joint.n().ok_or_else(|| {
        Error::InvalidInput("permutation test needs paired observations or a count table".into())
    })?;
    let mut ix = Vec::new();
    let mut iy = Vec::new();
    for &(i, l, p) in joint.cells() {
        let c = p * n;
        let k = c.round();
        if (c - k).abs() > 1e-6 {
            return Err(Error::InvalidInput("permutation test needs integer counts".into()));
        }
        for _ in 0..k as usize {
            ix.push(i);
            iy.push(l);
        }
    }
    Ok((ix, iy))
}

/// Conditional LPINFOR curve `LPINFOR(Y | X = Q(u;X))` with its components
/// `LP[k;Y|X=Q(u;X)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalLpInfor {
    pub u: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

pub fn conditional_lpinfor(model: &CopulaModel, us: &[f64]) -> ConditionalLpInfor {
    let kernel = model.kernel();
    let bx = model.x_basis();
    let components: Vec<Vec<f64>> = us
        .iter()
        .map(|&u| components_at(&kernel, &bx.unit_scores(u)))
        .collect();
    let values = components.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    ConditionalLpInfor {
        u: us.to_vec(),
        components,
        values,
    }
}

fn components_at(kernel: &[Vec<f64>], s: &[f64]) -> Vec<f64> {
    let my = kernel.first().map_or(0, Vec::len);
    (0..my)
        .map(|k| kernel.iter().zip(s).map(|(row, t)| row[k] * t).sum())
        .collect()
}

/// Both sides of the mixture identity: the `X`-average of the conditional
/// curve over the atoms of `X`, and the model's total LPINFOR.
pub fn mixture_identity(model: &CopulaModel) -> (f64, f64) {
    let kernel = model.kernel();
    let bx = model.x_basis();
    let d = bx.dist();
    let average = crate::numeric::pairwise_sum_by(d.len(), |i| {
        let c = components_at(&kernel, &bx.row(i));
        d.masses()[i] * c.iter().map(|v| v * v).sum::<f64>()
    });
    let total = kernel.iter().flatten().map(|v| v * v).sum();
    (average, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Order;
    use proptest::prelude::*;

    #[test]
    fn gaussian_closed_form() {
        assert!((gaussian_lpinfor(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gaussian_lpinfor(0.0).unwrap(), 0.0);
        assert!(gaussian_lpinfor(1.0).is_err());
        assert!(gaussian_lpinfor(f64::NAN).is_err());
        let partial: f64 = (1..=4).map(|j| 0.25f64.powi(j)).sum();
        assert!((partial - 0.33203125).abs() < 1e-12);
        assert!(gaussian_lpinfor(0.5).unwrap() - partial < 0.002);
    }

    #[test]
    fn independence_is_zero() {
        let t = ContingencyTable::from_entries(vec![vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(chidiv(&t) < 1e-30);
        let cm = Joint::from_table(&t, Order::Full, Order::Full).unwrap().comoments();
        let r = lpinfor(&cm, &Selection::All).unwrap();
        assert!(r.raw < 1e-30);
        assert_eq!(r.linearity, None);
    }

    #[test]
    fn starred_entries_of_a_printed_matrix() {
        let e = vec![
            vec![-0.908, -0.010, 0.011, 0.035],
            vec![0.032, 0.716, -0.071, 0.028],
            vec![0.064, 0.015, -0.590, 0.117],
            vec![-0.046, -0.085, -0.060, 0.425],
        ];
        let cm = LpComoments::from_matrix(e, Some(314.0)).unwrap();
        let sel = Selection::Entries(vec![(1, 1), (2, 2), (3, 3), (4, 4)]);
        let r = lpinfor(&cm, &sel).unwrap();
        // 0.908^2 + 0.716^2 + 0.590^2 + 0.425^2
        assert!((r.smooth - 1.865845).abs() < 1e-12);
        assert!((r.linearity.unwrap() - 0.824464 / 1.865845).abs() < 1e-12);
        assert_eq!(r.df_smooth, 4);
    }

    #[test]
    fn chi_square_needs_counts() {
        let t = ContingencyTable::from_entries(vec![vec![0.2, 0.3], vec![0.4, 0.1]]).unwrap();
        assert!(chi_square_test(&t).is_err());
        let t = ContingencyTable::from_entries(vec![vec![20.0, 30.0], vec![40.0, 10.0]]).unwrap();
        let c = chi_square_test(&t).unwrap();
        assert_eq!(c.df, 1);
        // 2x2 statistic n (ad - bc)^2 / (row and column products)
        let direct = 100.0 * (200.0f64 - 1200.0).powi(2) / (50.0 * 50.0 * 60.0 * 40.0);
        assert!((c.statistic - direct).abs() < 1e-9);
    }

    #[test]
    fn perfect_dependence_has_minimal_pvalue() {
        let x: Vec<f64> = (0..60).map(f64::from).collect();
        let j = Joint::pairs_m(&x, &x, 4).unwrap();
        let p = permutation_pvalue(&j, &PermStatistic::Raw, 999, 7).unwrap();
        assert_eq!(p.pvalue, 1.0 / 1000.0);
        assert!(permutation_pvalue(&j, &PermStatistic::Raw, 50, 7).is_err());
    }

    #[test]
    fn permutation_is_deterministic_across_pools() {
        let x: Vec<f64> = (0..40).map(|i| f64::from(i % 7)).collect();
        let y: Vec<f64> = (0..40).map(|i| f64::from((i * 3) % 5)).collect();
        let j = Joint::pairs_m(&x, &y, 3).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| permutation_pvalue(&j, &PermStatistic::Entry(1, 1), 199, 11).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn counts_expand_into_pairs() {
        let t = ContingencyTable::from_entries(vec![vec![5.0, 1.0], vec![1.0, 5.0]]).unwrap();
        let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
        let p = permutation_pvalue(&j, &PermStatistic::Raw, 99, 1).unwrap();
        assert!((p.observed - chidiv(&t)).abs() < 1e-12);
        let probs = ContingencyTable::from_entries(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        let j = Joint::from_table(&probs, Order::Full, Order::Full).unwrap();
        assert!(permutation_pvalue(&j, &PermStatistic::Raw, 99, 1).is_err());
    }

    fn arb_table() -> impl Strategy<Value = ContingencyTable> {
        (2usize..=10, 2usize..=10).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), r)
                .prop_map(|e| ContingencyTable::from_entries(e).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn full_basis_lpinfor_is_chidiv(t in arb_table()) {
            let cm = Joint::from_table(&t, Order::Full, Order::Full).unwrap().comoments();
            let r = lpinfor(&cm, &Selection::All).unwrap();
            prop_assert!((r.raw - chidiv(&t)).abs() < 1e-9);
            prop_assert_eq!(r.df_raw, (t.rows() - 1) * (t.cols() - 1));
        }

        #[test]
        fn smooth_is_bounded_by_raw(t in arb_table(), z in 0.0f64..3.0) {
            let probs: Vec<Vec<f64>> = t.probs().iter().map(|r| r.iter().map(|p| p * 200.0).collect()).collect();
            let t = ContingencyTable::from_entries(probs).unwrap();
            let cm = Joint::from_table(&t, Order::Full, Order::Full).unwrap().comoments();
            let r = lpinfor(&cm, &Selection::Threshold { z }).unwrap();
            prop_assert!(r.smooth <= r.raw + 1e-15);
            prop_assert!(r.df_smooth <= r.df_raw);
        }

        #[test]
        fn mixture_identity_holds(t in arb_table()) {
            let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
            let m = CopulaModel::l2(&j, &Selection::All).unwrap();
            let (avg, total) = mixture_identity(&m);
            prop_assert!((avg - total).abs() < 1e-9);
            prop_assert!((total - chidiv(&t)).abs() < 1e-9);
        }

        #[test]
        fn lpinfor_is_invariant_under_monotone_maps(
            x in prop::collection::vec(-5.0f64..5.0, 20..60),
            shift in prop::collection::vec(-1.0f64..1.0, 60),
        ) {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, s)| a * a + s).collect();
            let a = Joint::pairs_m(&x, &y, 3).unwrap().comoments();
            let fx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let fy: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
            let b = Joint::pairs_m(&fx, &fy, 3).unwrap().comoments();
            prop_assert_eq!(a.frobenius_sq().to_bits(), b.frobenius_sq().to_bits());
        }
    }
}
