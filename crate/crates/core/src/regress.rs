//! Copula-based nonparametric regression of `Y` on `X`.
//!
//! * conditional mean: `E[Y|X=x] = E[Y] + sum_j LP[j,0] T_j(x;X)`;
//! * conditional density: `f(y|x) = f(y;Y) d(F(y;Y);Y|X=x)` where `d` is the
//!   L2 copula slice, clipped at zero and renormalized;
//! * conditional quantiles from the slice, by inversion or accept-reject.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::ScoreBasis;
use crate::copula::CopulaModel;
use crate::dist::Sample;
use crate::error::{Error, Result};
use crate::moments::{Joint, LpComoments};
use crate::numeric::{pairwise_sum_by, GaussLegendre};
use crate::select::Selection;
use crate::skew::{gof_components, Baseline, BaselineKind, ComparisonDensity};

/// Grid size for the accept-reject envelope.
pub const ENVELOPE_GRID: usize = 1024;

/// `Y` margins with at most this many atoms are treated as discrete under
/// [`Marginal::Auto`].
pub const DISCRETE_ATOM_LIMIT: usize = 30;

/// Score functions in the normal-baseline marginal density of `Y`.
const MARGINAL_M: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Marginal {
    /// Discrete for tables and for `Y` with few distinct values, otherwise
    /// the normal-baseline skew density.
    #[default]
    Auto,
    Discrete,
    SkewNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressConfig {
    /// Rule for the mean coefficients, applied to the standardized
    /// `sqrt(n) LP[j,0] / sd(Y T_j(X))`.
    pub mean_selection: Selection,
    /// Rule for the comoments entering the copula slice.
    pub copula_selection: Selection,
    pub marginal: Marginal,
}

impl Default for RegressConfig {
    fn default() -> Self {
        Self {
            mean_selection: Selection::default(),
            copula_selection: Selection::default(),
            marginal: Marginal::Auto,
        }
    }
}

/// Conditioning value: a raw `x` or a quantile position `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Given {
    X(f64),
    U(f64),
}

#[derive(Debug, Clone)]
enum YModel {
    Discrete,
    Smooth {
        density: ComparisonDensity,
        /// Quadrature nodes `(y, w * f(y), T(y;Y))` covering the data range.
        nodes: Vec<(f64, f64, Vec<f64>)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileEstimate {
    /// Position in the `v` domain solving `C(t|u) = v`.
    pub t: f64,
    /// `Q(t;Y)`.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionalModel {
    pub comoments: LpComoments,
    /// 1-based `(j, LP[j,0])` entering the conditional mean.
    pub mean_coeffs: Vec<(usize, f64)>,
    pub mean_y: f64,
    pub config: RegressConfig,
    copula: CopulaModel,
    kernel: Vec<Vec<f64>>,
    y_model: YModel,
    warnings: Vec<String>,
}

impl ConditionalModel {
    pub fn fit(joint: &Joint, config: &RegressConfig) -> Result<Self> {
        let comoments = joint.comoments();
        let mean_coeffs = select_mean(joint, &comoments, &config.mean_selection)?;
        let copula = CopulaModel::l2(joint, &config.copula_selection)?;
        let kernel = copula.kernel();
        let by = joint.y_basis();
        let mut warnings = joint.warnings();
        let discrete = match config.marginal {
            Marginal::Discrete => true,
            Marginal::SkewNormal => false,
            Marginal::Auto => joint.pair_indices().is_none() || by.dist().len() <= DISCRETE_ATOM_LIMIT,
        };
        let y_model = if discrete {
            YModel::Discrete
        } else {
            let (density, nodes) = smooth_marginal(joint, &mut warnings)?;
            YModel::Smooth { density, nodes }
        };
        Ok(Self {
            mean_y: by.dist().mean(),
            comoments,
            mean_coeffs,
            config: config.clone(),
            copula,
            kernel,
            y_model,
            warnings,
        })
    }

    pub fn copula(&self) -> &CopulaModel {
        &self.copula
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.y_model, YModel::Discrete)
    }

    fn x_basis(&self) -> &ScoreBasis {
        self.copula.x_basis()
    }

    fn y_basis(&self) -> &ScoreBasis {
        self.copula.y_basis()
    }

    fn x_scores(&self, given: Given) -> Vec<f64> {
        match given {
            Given::X(x) => self.x_basis().eval_all(x),
            Given::U(u) => self.x_basis().unit_scores(u),
        }
    }

    /// `E[Y | X]` at the conditioning value.
    pub fn conditional_mean(&self, given: Given) -> f64 {
        let t = self.x_scores(given);
        self.mean_y + self.mean_coeffs.iter().map(|&(j, c)| c * t[j - 1]).sum::<f64>()
    }

    /// Slice coefficients `LP[k;Y|X] = sum_j LP[j,k] T_j(x;X)`.
    pub fn slice_coefficients(&self, given: Given) -> Vec<f64> {
        let t = self.x_scores(given);
        let my = self.y_basis().m();
        (0..my)
            .map(|k| self.kernel.iter().zip(&t).map(|(row, tj)| row[k] * tj).sum())
            .collect()
    }

    fn slice_value(coeffs: &[f64], ty: &[f64]) -> f64 {
        (1.0 + coeffs.iter().zip(ty).map(|(c, t)| c * t).sum::<f64>()).max(0.0)
    }

    /// Clipped slice on each atom of `Y`.
    fn atom_slice(&self, coeffs: &[f64]) -> Vec<f64> {
        let by = self.y_basis();
        (0..by.dist().len())
            .map(|l| Self::slice_value(coeffs, &by.row(l)))
            .collect()
    }

    /// Conditional probabilities of the atoms of `Y`.
    pub fn conditional_masses(&self, given: Given) -> Result<Vec<f64>> {
        let d = self.atom_slice(&self.slice_coefficients(given));
        let p = self.y_basis().dist().masses();
        let z = pairwise_sum_by(p.len(), |l| p[l] * d[l]);
        if !(z > 0.0) {
            return Err(Error::Numeric("conditional slice is zero everywhere after clipping".into()));
        }
        Ok(p.iter().zip(&d).map(|(a, b)| a * b / z).collect())
    }

    /// `f(y|x)`: a probability for a discrete `Y` model, a density otherwise.
    pub fn conditional_density(&self, given: Given, y: f64) -> Result<f64> {
        let coeffs = self.slice_coefficients(given);
        match &self.y_model {
            YModel::Discrete => {
                let by = self.y_basis();
                match by.dist().atom_index(y) {
                    Some(l) => Ok(self.conditional_masses(given)?[l]),
                    None => Ok(0.0),
                }
            }
            YModel::Smooth { density, nodes } => {
                let z = pairwise_sum_by(nodes.len(), |i| nodes[i].1 * Self::slice_value(&coeffs, &nodes[i].2));
                if !(z > 0.0) {
                    return Err(Error::Numeric("conditional slice is zero everywhere after clipping".into()));
                }
                let f = density.skew_density(y)?;
                Ok(f * Self::slice_value(&coeffs, &self.y_basis().eval_all(y)) / z)
            }
        }
    }

    /// Masses of `Y`, clipped slice values per atom, and their normalizer.
    fn slice_cdf(&self, u: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let d = self.atom_slice(&self.slice_coefficients(Given::U(u)));
        let p = self.y_basis().dist().masses();
        let z = pairwise_sum_by(p.len(), |l| p[l] * d[l]);
        if !(z > 0.0) {
            return Err(Error::Numeric("conditional slice is zero everywhere after clipping".into()));
        }
        Ok((p.to_vec(), d, z))
    }

    /// Conditional quantile by exact inversion of the (piecewise linear)
    /// conditional distribution in the `v` domain.
    pub fn conditional_quantile(&self, u: f64, v: f64) -> Result<QuantileEstimate> {
        check_level(v)?;
        let (p, d, z) = self.slice_cdf(u)?;
        let dist = self.y_basis().dist();
        let mut cum = 0.0;
        let mut left = 0.0;
        for l in 0..p.len() {
            let mass = p[l] * d[l] / z;
            if mass > 0.0 && (cum + mass >= v || l + 1 == p.len()) {
                let t = left + (v - cum).max(0.0) / mass * p[l];
                return Ok(QuantileEstimate {
                    t: t.min(left + p[l]),
                    value: dist.atoms()[l],
                });
            }
            cum += mass;
            left += p[l];
        }
        let l = d.iter().rposition(|&x| x > 0.0).expect("positive slice");
        Ok(QuantileEstimate {
            t: dist.cumulative()[l],
            value: dist.atoms()[l],
        })
    }

    /// Conditional quantiles from `draws` accept-reject samples of the slice
    /// with envelope `M = max` of the slice on a 1024-point grid.
    pub fn sample_quantiles(&self, u: f64, levels: &[f64], draws: usize, seed: u64) -> Result<Vec<QuantileEstimate>> {
        for &v in levels {
            check_level(v)?;
        }
        let draws_w = self.sample_slice(u, draws, seed)?;
        let dist = self.y_basis().dist();
        Ok(levels
            .iter()
            .map(|&v| {
                let k = ((v * draws as f64).ceil() as usize).clamp(1, draws) - 1;
                let t = draws_w[k];
                QuantileEstimate {
                    t,
                    value: dist.atoms()[dist.quantile_index(t)],
                }
            })
            .collect())
    }

    /// Sorted accept-reject draws `w` from the slice density at `u`.
    pub fn sample_slice(&self, u: f64, draws: usize, seed: u64) -> Result<Vec<f64>> {
        if draws == 0 {
            return Err(Error::InvalidInput("need at least one draw".into()));
        }
        let coeffs = self.slice_coefficients(Given::U(u));
        let by = self.y_basis();
        let slice = |w: f64| Self::slice_value(&coeffs, &by.unit_scores(w));
        let envelope = (0..ENVELOPE_GRID)
            .map(|i| slice((i as f64 + 0.5) / ENVELOPE_GRID as f64))
            .fold(0.0, f64::max);
        if !(envelope > 0.0) {
            return Err(Error::Numeric("conditional slice is zero everywhere after clipping".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(draws);
        let budget = draws.saturating_mul(10_000);
        let mut tries = 0usize;
        while out.len() < draws {
            tries += 1;
            if tries > budget {
                return Err(Error::NonConvergence {
                    iterations: tries,
                    residual: (draws - out.len()) as f64,
                });
            }
            let w: f64 = rng.random();
            if rng.random::<f64>() * envelope <= slice(w) {
                out.push(w);
            }
        }
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

fn check_level(v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::OutOfRange(format!("quantile level {v} outside (0, 1)")));
    }
    Ok(())
}

/// Mean coefficients selected on their standardized values.
fn select_mean(joint: &Joint, cm: &LpComoments, selection: &Selection) -> Result<Vec<(usize, f64)>> {
    let bx = joint.x_basis();
    let y = joint.y_basis().dist().atoms();
    let standardized: Vec<f64> = (1..=bx.m())
        .map(|j| {
            let c = cm.zero_col[j - 1];
            let tj = bx.scores(j);
            let second = joint.expect(|i, l| (y[l] * tj[i]).powi(2));
            let sd = (second - c * c).max(0.0).sqrt();
            if sd > 0.0 { c / sd } else { 0.0 }
        })
        .collect();
    let sel = match selection {
        Selection::Entries(_) => {
            return Err(Error::InvalidInput("mean coefficients are selected by order".into()))
        }
        _ => selection.select_vector(&standardized, joint.n())?,
    };
    Ok(sel.into_iter().map(|j| (j + 1, cm.zero_col[j])).collect())
}

fn smooth_marginal(
    joint: &Joint,
    warnings: &mut Vec<String>,
) -> Result<(ComparisonDensity, Vec<(f64, f64, Vec<f64>)>)> {
    let (_, iy) = joint.pair_indices().ok_or_else(|| {
        Error::InvalidInput("a smooth marginal for Y needs paired observations".into())
    })?;
    let by = joint.y_basis();
    let atoms = by.dist().atoms();
    let sample = Sample::new(iy.iter().map(|&l| atoms[l]).collect())?;
    let g = Baseline::fit(BaselineKind::Normal, &sample)?;
    let m = MARGINAL_M.min(sample.n().saturating_sub(1)).max(1);
    let comps = gof_components(&sample, &g, m)?;
    let selected: Vec<usize> = Selection::default()
        .select_vector(&comps.coeffs, Some(sample.n() as f64))?
        .into_iter()
        .map(|j| j + 1)
        .collect();
    let density = ComparisonDensity::l2(&comps, &selected)?;
    if (density.clipped_mass() - 1.0).abs() > 1e-12 {
        warnings.push(format!(
            "marginal of Y clipped at zero; renormalized by {:.6}",
            density.clipped_mass()
        ));
    }
    // the slice is constant between atoms of Y, so panels break there
    let sd = by.dist().variance().sqrt();
    let mut breaks = vec![atoms[0] - 8.0 * sd];
    breaks.extend_from_slice(atoms);
    breaks.push(atoms[atoms.len() - 1] + 8.0 * sd);
    let rule = GaussLegendre::new(8);
    let nodes = breaks
        .windows(2)
        .flat_map(|w| {
            let panels = if w[0] < atoms[0] || w[1] > atoms[atoms.len() - 1] { 32 } else { 1 };
            let width = (w[1] - w[0]) / panels as f64;
            (0..panels).flat_map(|p| {
                let lo = w[0] + width * p as f64;
                rule.on_interval(lo, lo + width)
            }).collect::<Vec<_>>()
        })
        .map(|(y, w)| {
            let f = density.skew_density(y)?;
            Ok((y, w * f, by.eval_all(y)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((density, nodes))
}
