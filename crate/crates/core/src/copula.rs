//! Copula density models built from LP comoments.
//!
//! * L2: `cop(u,v) = 1 + sum LP[j,k] S_j(u;X) S_k(v;Y)` over selected terms.
//! * canonical: the same kernel diagonalized by SVD,
//!   `1 + sum_k lambda_k phi_k(u) psi_k(v)`.
//! * exponential: `exp(sum theta_jk S_j(u) S_k(v) + main effects - K)`, the
//!   maximum-entropy density with the target comoments and uniform margins.

use std::fmt::Write as _;

use serde::Serialize;

use crate::basis::{Order, ScoreBasis};
use crate::dist::ContingencyTable;
use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, Svd};
use crate::maxent::fit_maxent;
use crate::moments::{Joint, LpComoments};
use crate::numeric::{pairwise_sum_by, unit_interval_rule};
use crate::select::Selection;

/// Margins with more atoms than this are integrated on the 512-node grid
/// rather than cell by cell when fitting the exponential model.
pub const EXACT_CELL_LIMIT: usize = 512;

/// Points per axis of the display grid.
pub const GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum CopulaForm {
    L2 {
        /// 0-based `(j, k, LP[j+1,k+1])`.
        terms: Vec<(usize, usize, f64)>,
    },
    Canonical {
        lambdas: Vec<f64>,
        /// `m_x x r` coefficients of `phi_k` on `S_1..S_mx`.
        u: Vec<Vec<f64>>,
        /// `m_y x r` coefficients of `psi_k` on `S_1..S_my`.
        v: Vec<Vec<f64>>,
    },
    Exponential {
        /// 0-based `(j, k, theta_jk)` interaction terms.
        terms: Vec<(usize, usize, f64)>,
        /// Main-effect coefficients on `S_j(u;X)` and `S_k(v;Y)` that keep
        /// both margins uniform.
        main_x: Vec<f64>,
        main_y: Vec<f64>,
        log_norm: f64,
    },
}

/// Conditioning direction for slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// Density of `V` given `U = u`.
    YGivenX,
    /// Density of `U` given `V = v`.
    XGivenY,
}

#[derive(Debug, Clone)]
pub struct CopulaModel {
    pub form: CopulaForm,
    pub comoments: LpComoments,
    bx: ScoreBasis,
    by: ScoreBasis,
}

impl CopulaModel {
    /// L2 model from the selected comoments.
    pub fn l2(joint: &Joint, selection: &Selection) -> Result<Self> {
        let cm = joint.comoments();
        let sel = selection.select_matrix(&cm.entries, cm.n)?;
        let terms = sel.into_iter().map(|(j, k)| (j, k, cm.entries[j][k])).collect();
        Ok(Self {
            form: CopulaForm::L2 { terms },
            comoments: cm,
            bx: joint.x_basis().clone(),
            by: joint.y_basis().clone(),
        })
    }

    /// Canonical model: SVD of the full comoment matrix truncated at `rank`.
    pub fn canonical(joint: &Joint, rank: usize) -> Result<Self> {
        let cm = joint.comoments();
        let max_rank = cm.rows().min(cm.cols());
        if rank == 0 || rank > max_rank {
            return Err(Error::OutOfRange(format!("rank {rank} outside 1..={max_rank}")));
        }
        let svd = jacobi_svd(&cm.entries);
        let (lambdas, u, v) = truncate(&svd, rank);
        Ok(Self {
            form: CopulaForm::Canonical { lambdas, u, v },
            comoments: cm,
            bx: joint.x_basis().clone(),
            by: joint.y_basis().clone(),
        })
    }

    /// Maximum-entropy model matching the selected comoments, with margins
    /// held uniform.
    pub fn exponential(joint: &Joint, selection: &Selection) -> Result<Self> {
        let cm = joint.comoments();
        let sel = selection.select_matrix(&cm.entries, cm.n)?;
        let (bx, by) = (joint.x_basis(), joint.y_basis());
        let (mx, my) = (bx.m(), by.m());
        let xs = integration_axis(bx);
        let ys = integration_axis(by);

        let mut weights = Vec::with_capacity(xs.len() * ys.len());
        let mut features = Vec::with_capacity(xs.len() * ys.len());
        for (wx, sx) in &xs {
            for (wy, sy) in &ys {
                weights.push(wx * wy);
                let mut f = Vec::with_capacity(mx + my + sel.len());
                f.extend_from_slice(sx);
                f.extend_from_slice(sy);
                f.extend(sel.iter().map(|&(j, k)| sx[j] * sy[k]));
                features.push(f);
            }
        }
        let mut target = vec![0.0; mx + my];
        target.extend(sel.iter().map(|&(j, k)| cm.entries[j][k]));
        let fit = fit_maxent(&weights, &features, &target)?;
        let main_x = fit.theta[..mx].to_vec();
        let main_y = fit.theta[mx..mx + my].to_vec();
        let terms = sel
            .iter()
            .zip(&fit.theta[mx + my..])
            .map(|(&(j, k), &t)| (j, k, t))
            .collect();
        Ok(Self {
            form: CopulaForm::Exponential {
                terms,
                main_x,
                main_y,
                log_norm: fit.log_norm,
            },
            comoments: cm,
            bx: bx.clone(),
            by: by.clone(),
        })
    }

    pub fn x_basis(&self) -> &ScoreBasis {
        &self.bx
    }

    pub fn y_basis(&self) -> &ScoreBasis {
        &self.by
    }

    /// Singular values (canonical form only).
    pub fn lambdas(&self) -> Option<&[f64]> {
        match &self.form {
            CopulaForm::Canonical { lambdas, .. } => Some(lambdas),
            _ => None,
        }
    }

    /// `cop(u, v)`.
    pub fn density(&self, u: f64, v: f64) -> f64 {
        let su = self.bx.unit_scores(u);
        let sv = self.by.unit_scores(v);
        self.density_from_scores(&su, &sv)
    }

    /// `cop` at atom indices `(i, l)` of the two margins.
    pub fn density_at(&self, i: usize, l: usize) -> f64 {
        self.density_from_scores(&self.bx.row(i), &self.by.row(l))
    }

    fn density_from_scores(&self, su: &[f64], sv: &[f64]) -> f64 {
        match &self.form {
            CopulaForm::L2 { terms } => {
                1.0 + terms.iter().map(|&(j, k, c)| c * su[j] * sv[k]).sum::<f64>()
            }
            CopulaForm::Canonical { lambdas, u, v } => {
                let phi = combine(u, su);
                let psi = combine(v, sv);
                1.0 + lambdas
                    .iter()
                    .zip(phi.iter().zip(&psi))
                    .map(|(l, (a, b))| l * a * b)
                    .sum::<f64>()
            }
            CopulaForm::Exponential {
                terms,
                main_x,
                main_y,
                log_norm,
            } => {
                let eta: f64 = terms.iter().map(|&(j, k, t)| t * su[j] * sv[k]).sum::<f64>()
                    + main_x.iter().zip(su).map(|(a, b)| a * b).sum::<f64>()
                    + main_y.iter().zip(sv).map(|(a, b)| a * b).sum::<f64>();
                (eta - log_norm).exp()
            }
        }
    }

    /// `phi_k(u)` for `k = 1..r` (canonical form).
    pub fn phi(&self, u: f64) -> Option<Vec<f64>> {
        match &self.form {
            CopulaForm::Canonical { u: coef, .. } => Some(combine(coef, &self.bx.unit_scores(u))),
            _ => None,
        }
    }

    /// `psi_k(v)` for `k = 1..r` (canonical form).
    pub fn psi(&self, v: f64) -> Option<Vec<f64>> {
        match &self.form {
            CopulaForm::Canonical { v: coef, .. } => Some(combine(coef, &self.by.unit_scores(v))),
            _ => None,
        }
    }

    /// Coefficients `LP[k;Y|X=Q(u;X)] = sum_j LP[j,k] S_j(u;X)` of the slice
    /// in the other margin's scores (or the transposed form for
    /// [`Direction::XGivenY`]). Uses the model's own kernel: selected terms
    /// for L2, the rank-`r` reconstruction for canonical, and every comoment
    /// for the exponential form.
    pub fn slice_coefficients(&self, at: f64, direction: Direction) -> Vec<f64> {
        let kernel = self.kernel();
        match direction {
            Direction::YGivenX => {
                let s = self.bx.unit_scores(at);
                (0..self.by.m())
                    .map(|k| (0..self.bx.m()).map(|j| kernel[j][k] * s[j]).sum())
                    .collect()
            }
            Direction::XGivenY => {
                let s = self.by.unit_scores(at);
                (0..self.bx.m())
                    .map(|j| (0..self.by.m()).map(|k| kernel[j][k] * s[k]).sum())
                    .collect()
            }
        }
    }

    /// Comoment kernel the model represents.
    pub fn kernel(&self) -> Vec<Vec<f64>> {
        let (mx, my) = (self.bx.m(), self.by.m());
        match &self.form {
            CopulaForm::L2 { terms } => {
                let mut k = vec![vec![0.0; my]; mx];
                for &(j, l, c) in terms {
                    k[j][l] = c;
                }
                k
            }
            CopulaForm::Canonical { lambdas, u, v } => (0..mx)
                .map(|j| {
                    (0..my)
                        .map(|l| lambdas.iter().enumerate().map(|(r, s)| s * u[j][r] * v[l][r]).sum())
                        .collect()
                })
                .collect(),
            CopulaForm::Exponential { .. } => self.comoments.entries.clone(),
        }
    }

    /// Conditional comparison density at `other` given the slice position.
    pub fn slice_density(&self, at: f64, other: f64, direction: Direction) -> f64 {
        match direction {
            Direction::YGivenX => self.density(at, other),
            Direction::XGivenY => self.density(other, at),
        }
    }

    /// `(u, v, density)` on a 101 x 101 grid over `[0, 1]^2`.
    pub fn grid(&self) -> Vec<(f64, f64, f64)> {
        let step = 1.0 / (GRID_POINTS - 1) as f64;
        let mut out = Vec::with_capacity(GRID_POINTS * GRID_POINTS);
        for a in 0..GRID_POINTS {
            let u = a as f64 * step;
            for b in 0..GRID_POINTS {
                let v = b as f64 * step;
                out.push((u, v, self.density(u, v)));
            }
        }
        out
    }

    pub fn grid_csv(&self) -> String {
        let mut s = String::from("u,v,density\n");
        for (u, v, d) in self.grid() {
            let _ = writeln!(s, "{u},{v},{d}");
        }
        s
    }
}

fn truncate(svd: &Svd, rank: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let lambdas = svd.s[..rank].to_vec();
    let u = svd.u.iter().map(|r| r[..rank].to_vec()).collect();
    let v = svd.v.iter().map(|r| r[..rank].to_vec()).collect();
    (lambdas, u, v)
}

/// `out_k = sum_j coef[j][k] s[j]`.
fn combine(coef: &[Vec<f64>], s: &[f64]) -> Vec<f64> {
    let r = coef.first().map_or(0, Vec::len);
    (0..r)
        .map(|k| coef.iter().zip(s).map(|(row, x)| row[k] * x).sum())
        .collect()
}

/// `(weight, scores)` points for one margin: exact atoms when small, the
/// 512-node unit-interval rule otherwise.
fn integration_axis(b: &ScoreBasis) -> Vec<(f64, Vec<f64>)> {
    let d = b.dist();
    if d.len() <= EXACT_CELL_LIMIT {
        (0..d.len()).map(|i| (d.masses()[i], b.row(i))).collect()
    } else {
        unit_interval_rule()
            .into_iter()
            .map(|(u, w)| (w, b.unit_scores(u)))
            .collect()
    }
}

/// Goodman-style canonical decomposition of the exponential interaction
/// matrix: `(gamma_k, U, V)` from the SVD of `theta_jk`.
pub fn interaction_svd(model: &CopulaModel) -> Option<Svd> {
    match &model.form {
        CopulaForm::Exponential { terms, .. } => {
            let mut t = vec![vec![0.0; model.y_basis().m()]; model.x_basis().m()];
            for &(j, k, v) in terms {
                t[j][k] = v;
            }
            Some(jacobi_svd(&t))
        }
        _ => None,
    }
}

/// Both sides of the 2 x 2 identities: `lambda_1 = |phi|` and
/// `gamma_1 = |log delta| (P1+ P+1 P2+ P+2)^(1/2)`.
#[derive(Debug)]
pub struct TwoByTwo {
    pub lambda1: f64,
    pub phi_abs: f64,
    /// `(gamma_1, |log delta| sqrt(P1+ P+1 P2+ P+2))`, or the reason the odds
    /// ratio is undefined.
    pub gamma: Result<(f64, f64)>,
}

pub fn two_by_two_identities(t: &ContingencyTable) -> Result<TwoByTwo> {
    if t.rows() != 2 || t.cols() != 2 {
        return Err(Error::InvalidInput(format!(
            "expected a 2x2 table, got {}x{}",
            t.rows(),
            t.cols()
        )));
    }
    let p = t.probs();
    let r = t.row_masses();
    let c = t.col_masses();
    let root = (r[0] * r[1] * c[0] * c[1]).sqrt();
    let phi = (p[0][0] * p[1][1] - p[0][1] * p[1][0]) / root;
    let joint = Joint::from_table(t, Order::Full, Order::Full)?;
    let lambda1 = CopulaModel::canonical(&joint, 1)?.lambdas().expect("canonical")[0];
    let gamma = if p.iter().flatten().any(|&v| v == 0.0) {
        Err(Error::OddsRatioUndefined)
    } else {
        let delta = p[0][0] * p[1][1] / (p[0][1] * p[1][0]);
        CopulaModel::exponential(&joint, &Selection::All).map(|m| {
            let g = interaction_svd(&m).expect("exponential").s[0];
            (g, delta.ln().abs() * root)
        })
    };
    Ok(TwoByTwo {
        lambda1,
        phi_abs: phi.abs(),
        gamma,
    })
}

/// `sum_{cells} p(x) p(y) cop(x, y)`: total mass of a model over the
/// product of the margins.
pub fn total_mass(model: &CopulaModel) -> f64 {
    let dx = model.x_basis().dist();
    let dy = model.y_basis().dist();
    pairwise_sum_by(dx.len() * dy.len(), |c| {
        let (i, l) = (c / dy.len(), c % dy.len());
        dx.masses()[i] * dy.masses()[l] * model.density_at(i, l)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(e: &[&[f64]]) -> ContingencyTable {
        ContingencyTable::from_entries(e.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn two_by_two_examples() {
        let t = table(&[&[0.3, 0.2], &[0.2, 0.3]]);
        let r = two_by_two_identities(&t).unwrap();
        assert!((r.phi_abs - 0.2).abs() < 1e-12);
        assert!((r.lambda1 - 0.2).abs() < 1e-12);
        let (g, closed) = r.gamma.unwrap();
        assert!((g - closed).abs() < 1e-10);

        let t = table(&[&[0.24, 0.36], &[0.16, 0.24]]);
        let r = two_by_two_identities(&t).unwrap();
        assert!(r.lambda1 < 1e-12);
        assert!(r.gamma.unwrap().0 < 1e-10);

        let t = table(&[&[0.3, 0.0], &[0.0, 0.7]]);
        let r = two_by_two_identities(&t).unwrap();
        assert!((r.lambda1 - 1.0).abs() < 1e-12);
        assert!(matches!(r.gamma, Err(Error::OddsRatioUndefined)));
    }

    #[test]
    fn empty_selection_is_independence() {
        let t = table(&[&[10.0, 20.0], &[30.0, 5.0]]);
        let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
        let m = CopulaModel::l2(&j, &Selection::Entries(vec![])).unwrap();
        assert_eq!(m.density(0.3, 0.9), 1.0);
        let coeffs = m.slice_coefficients(0.2, Direction::YGivenX);
        assert!(coeffs.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn zero_targets_give_flat_exponential_copula() {
        let t = table(&[&[0.06, 0.14], &[0.24, 0.56]]);
        let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
        let m = CopulaModel::exponential(&j, &Selection::All).unwrap();
        for &(u, v) in &[(0.1, 0.1), (0.5, 0.9), (0.99, 0.01)] {
            assert!((m.density(u, v) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn canonical_rank_is_bounded_and_sorted() {
        let t = table(&[&[0.2, 0.05, 0.0], &[0.05, 0.3, 0.05], &[0.0, 0.05, 0.3]]);
        let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
        let m = CopulaModel::canonical(&j, 2).unwrap();
        let l = m.lambdas().unwrap();
        assert!(l[0] >= l[1]);
        assert!(CopulaModel::canonical(&j, 3).is_err());
    }

    #[test]
    fn grid_has_101_squared_points() {
        let t = table(&[&[0.3, 0.2], &[0.2, 0.3]]);
        let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
        let m = CopulaModel::canonical(&j, 1).unwrap();
        let csv = m.grid_csv();
        assert_eq!(csv.lines().count(), 1 + 101 * 101);
        assert!(csv.starts_with("u,v,density\n0,0,"));
    }

    fn arb_table() -> impl Strategy<Value = ContingencyTable> {
        (2usize..7, 2usize..7).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), r)
                .prop_map(|e| ContingencyTable::from_entries(e).unwrap())
        })
    }

    proptest! {
        #[test]
        fn full_l2_model_reproduces_cell_ratios(t in arb_table()) {
            let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
            let m = CopulaModel::l2(&j, &Selection::All).unwrap();
            let r = t.row_masses();
            let c = t.col_masses();
            for a in 0..t.rows() {
                for b in 0..t.cols() {
                    let ratio = t.prob(a, b) / (r[a] * c[b]);
                    prop_assert!((m.density_at(a, b) - ratio).abs() < 1e-9);
                }
            }
            prop_assert!((total_mass(&m) - 1.0).abs() < 1e-8);
        }

        #[test]
        fn canonical_and_l2_agree_at_full_rank(t in arb_table()) {
            let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
            let l2 = CopulaModel::l2(&j, &Selection::All).unwrap();
            let r = t.rows().min(t.cols()) - 1;
            let can = CopulaModel::canonical(&j, r).unwrap();
            for a in 0..=10 {
                for b in 0..=10 {
                    let (u, v) = (a as f64 / 10.0, b as f64 / 10.0);
                    prop_assert!((l2.density(u, v) - can.density(u, v)).abs() < 1e-10);
                }
            }
            let lam = can.lambdas().unwrap();
            prop_assert!(lam.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn canonical_functions_are_orthonormal(t in arb_table()) {
            let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
            let r = t.rows().min(t.cols()) - 1;
            let can = CopulaModel::canonical(&j, r).unwrap();
            let dx = j.x_basis().dist();
            for k in 0..r {
                for l in 0..r {
                    let ip: f64 = (0..dx.len())
                        .map(|i| {
                            let phi = can.phi(dx.mid()[i]).unwrap();
                            dx.masses()[i] * phi[k] * phi[l]
                        })
                        .sum();
                    let target = if k == l { 1.0 } else { 0.0 };
                    prop_assert!((ip - target).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn margins_of_full_models_are_uniform(t in arb_table()) {
            let j = Joint::from_table(&t, Order::Full, Order::Full).unwrap();
            let dx = j.x_basis().dist();
            let dy = j.y_basis().dist();
            for m in [
                CopulaModel::l2(&j, &Selection::All).unwrap(),
                CopulaModel::exponential(&j, &Selection::All).unwrap(),
            ] {
                for i in 0..dx.len() {
                    let s: f64 = (0..dy.len()).map(|l| dy.masses()[l] * m.density_at(i, l)).sum();
                    prop_assert!((s - 1.0).abs() < 1e-8);
                }
                // slices integrate to one
                let s: f64 = (0..dy.len()).map(|l| dy.masses()[l] * m.slice_density(0.4, dy.mid()[l], Direction::YGivenX)).sum();
                prop_assert!((s - 1.0).abs() < 1e-8);
            }
        }

        #[test]
        fn two_by_two_identities_hold(a in 0.01f64..1.0, b in 0.01f64..1.0, c in 0.01f64..1.0, d in 0.01f64..1.0) {
            let t = table(&[&[a, b], &[c, d]]);
            let r = two_by_two_identities(&t).unwrap();
            prop_assert!((r.lambda1 - r.phi_abs).abs() < 1e-10);
            let (g, closed) = r.gamma.unwrap();
            prop_assert!((g - closed).abs() < 1e-8 * closed.max(1.0));
        }
    }
}
