//! Comparison densities, LP skew densities and the LP goodness-of-fit
//! statistic.
//!
//! Data are compared with a baseline law `G` through the comparison density
//! `d(u) = f(Q(u;G)) / g(Q(u;G))` on the unit interval. Its LP coefficients
//! `LP[j;G,F] = E_F[T_j(X;G)]` are the goodness-of-fit components; the skew
//! density estimate is `g(x) d(G(x))`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use statrs::distribution::{
    ChiSquared, Continuous, ContinuousCDF, Discrete, Exp, Gamma, Normal, Poisson,
};

use crate::basis::{legendre, legendre_all, ScoreBasis};
use crate::dist::{DiscreteDist, Sample};
use crate::error::{Error, Result};
use crate::maxent::{fit_maxent, MaxEntFit};
use crate::numeric::{pairwise_sum, pairwise_sum_by, unit_interval_rule};
use crate::select::Selection;

/// Tail mass left out when a Poisson baseline is tabulated.
const POISSON_TAIL: f64 = 1e-12;

/// Reference law `G` for goodness of fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    Normal { mu: f64, sigma: f64 },
    Exponential { mean: f64 },
    Gamma { shape: f64, rate: f64 },
    Poisson { lambda: f64 },
    Discrete { law: DiscreteDist },
}

/// Baseline family, for fitting from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Normal,
    Exponential,
    Gamma,
    Poisson,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Self::Normal),
            "exponential" | "exp" => Ok(Self::Exponential),
            "gamma" => Ok(Self::Gamma),
            "poisson" => Ok(Self::Poisson),
            _ => Err(Error::InvalidInput(format!("unknown baseline '{s}'"))),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Normal => "normal",
            Self::Exponential => "exponential",
            Self::Gamma => "gamma",
            Self::Poisson => "poisson",
        };
        f.write_str(s)
    }
}

impl Baseline {
    /// Builds a baseline from a family and its parameters:
    /// normal `(mu, sigma)`, exponential `(mean)`, gamma `(shape, rate)`,
    /// Poisson `(lambda)`.
    pub fn from_params(kind: BaselineKind, params: &[f64]) -> Result<Self> {
        let want = match kind {
            BaselineKind::Normal | BaselineKind::Gamma => 2,
            _ => 1,
        };
        if params.len() != want {
            return Err(Error::InvalidInput(format!(
                "{kind} baseline takes {want} parameter(s), got {}",
                params.len()
            )));
        }
        let b = match kind {
            BaselineKind::Normal => Baseline::Normal {
                mu: params[0],
                sigma: params[1],
            },
            BaselineKind::Exponential => Baseline::Exponential { mean: params[0] },
            BaselineKind::Gamma => Baseline::Gamma {
                shape: params[0],
                rate: params[1],
            },
            BaselineKind::Poisson => Baseline::Poisson { lambda: params[0] },
        };
        b.validate()?;
        Ok(b)
    }

    /// Method-of-moments fit: normal mean/sd, exponential mean, gamma
    /// mean/variance matching, Poisson mean.
    pub fn fit(kind: BaselineKind, s: &Sample) -> Result<Self> {
        let v = s.values();
        let n = v.len() as f64;
        let mean = pairwise_sum(v) / n;
        let ss = pairwise_sum_by(v.len(), |i| (v[i] - mean) * (v[i] - mean));
        let var = if v.len() > 1 { ss / (n - 1.0) } else { 0.0 };
        let b = match kind {
            BaselineKind::Normal => Baseline::Normal {
                mu: mean,
                sigma: var.sqrt(),
            },
            BaselineKind::Exponential => Baseline::Exponential { mean },
            BaselineKind::Gamma => Baseline::Gamma {
                shape: mean * mean / var,
                rate: mean / var,
            },
            BaselineKind::Poisson => Baseline::Poisson { lambda: mean },
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Baseline::Normal { mu, sigma } => mu.is_finite() && sigma.is_finite() && *sigma > 0.0,
            Baseline::Exponential { mean } => mean.is_finite() && *mean > 0.0,
            Baseline::Gamma { shape, rate } => {
                shape.is_finite() && rate.is_finite() && *shape > 0.0 && *rate > 0.0
            }
            Baseline::Poisson { lambda } => lambda.is_finite() && *lambda > 0.0,
            Baseline::Discrete { law } => law.len() >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Degenerate(format!("baseline {self:?} has zero variance or invalid parameters")))
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(
            self,
            Baseline::Normal { .. } | Baseline::Exponential { .. } | Baseline::Gamma { .. }
        )
    }

    fn name(&self) -> &'static str {
        match self {
            Baseline::Normal { .. } => "normal",
            Baseline::Exponential { .. } => "exponential",
            Baseline::Gamma { .. } => "gamma",
            Baseline::Poisson { .. } => "poisson",
            Baseline::Discrete { .. } => "discrete",
        }
    }

    /// Errors when `x` cannot occur under the baseline.
    pub fn check_support(&self, x: f64) -> Result<()> {
        let inside = match self {
            Baseline::Normal { .. } => x.is_finite(),
            Baseline::Exponential { .. } | Baseline::Gamma { .. } => x >= 0.0,
            Baseline::Poisson { .. } => x >= 0.0 && x.fract() == 0.0,
            Baseline::Discrete { law } => law.atom_index(x).is_some(),
        };
        if inside {
            Ok(())
        } else {
            Err(Error::OutOfSupport {
                value: x,
                baseline: self.name().to_string(),
            })
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Baseline::Normal { mu, sigma } => normal(*mu, *sigma).cdf(x),
            Baseline::Exponential { mean } => exp(*mean).cdf(x),
            Baseline::Gamma { shape, rate } => gamma(*shape, *rate).cdf(x),
            Baseline::Poisson { lambda } => {
                if x < 0.0 {
                    0.0
                } else {
                    statrs::distribution::DiscreteCDF::cdf(&poisson(*lambda), x.floor() as u64)
                }
            }
            Baseline::Discrete { law } => law.cdf(x),
        }
    }

    /// Left-continuous quantile for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::OutOfRange(format!("quantile level {u} not in (0,1)")));
        }
        Ok(match self {
            Baseline::Normal { mu, sigma } => normal(*mu, *sigma).inverse_cdf(u),
            Baseline::Exponential { mean } => exp(*mean).inverse_cdf(u),
            Baseline::Gamma { shape, rate } => gamma(*shape, *rate).inverse_cdf(u),
            Baseline::Poisson { .. } => {
                let law = self.discrete_law(0.0)?;
                law.quantile(u)?
            }
            Baseline::Discrete { law } => law.quantile(u)?,
        })
    }

    /// Density (continuous) or mass (discrete) at `x`.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Baseline::Normal { mu, sigma } => normal(*mu, *sigma).pdf(x),
            Baseline::Exponential { mean } => exp(*mean).pdf(x),
            Baseline::Gamma { shape, rate } => gamma(*shape, *rate).pdf(x),
            Baseline::Poisson { lambda } => {
                if x >= 0.0 && x.fract() == 0.0 {
                    poisson(*lambda).pmf(x as u64)
                } else {
                    0.0
                }
            }
            Baseline::Discrete { law } => law.pmf(x),
        }
    }

    /// Tabulated law of a discrete baseline, covering at least `0..=upto`.
    pub fn discrete_law(&self, upto: f64) -> Result<DiscreteDist> {
        match self {
            Baseline::Discrete { law } => Ok(law.clone()),
            Baseline::Poisson { lambda } => {
                let p = poisson(*lambda);
                let mut atoms = Vec::new();
                let mut masses = Vec::new();
                let mut total = 0.0;
                let mut k = 0u64;
                while total < 1.0 - POISSON_TAIL || (k as f64) <= upto {
                    let m = p.pmf(k);
                    atoms.push(k as f64);
                    masses.push(m);
                    total += m;
                    k += 1;
                    if k > 10_000_000 {
                        return Err(Error::Numeric("Poisson table did not terminate".into()));
                    }
                }
                DiscreteDist::from_weights(atoms, masses)
            }
            _ => Err(Error::InvalidInput("continuous baseline has no atom table".into())),
        }
    }
}

fn normal(mu: f64, sigma: f64) -> Normal {
    Normal::new(mu, sigma).expect("validated baseline")
}

fn exp(mean: f64) -> Exp {
    Exp::new(1.0 / mean).expect("validated baseline")
}

fn gamma(shape: f64, rate: f64) -> Gamma {
    Gamma::new(shape, rate).expect("validated baseline")
}

fn poisson(lambda: f64) -> Poisson {
    Poisson::new(lambda).expect("validated baseline")
}

/// Score functions `T_j(x;G)` of a baseline: shifted Legendre polynomials of
/// `G(x)` for continuous `G`, the LP basis of its atom table otherwise.
#[derive(Debug, Clone)]
pub struct BaselineScores {
    baseline: Baseline,
    m: usize,
    basis: Option<ScoreBasis>,
}

impl BaselineScores {
    /// `upto` extends a Poisson table so it covers every data value.
    pub fn new(baseline: &Baseline, m: usize, upto: f64) -> Result<Self> {
        baseline.validate()?;
        if m == 0 {
            return Err(Error::OutOfRange("number of components must be at least 1".into()));
        }
        let basis = if baseline.is_continuous() {
            None
        } else {
            Some(ScoreBasis::build(&baseline.discrete_law(upto)?, m)?)
        };
        let m = basis.as_ref().map_or(m, ScoreBasis::m);
        Ok(Self {
            baseline: baseline.clone(),
            m,
            basis,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn basis(&self) -> Option<&ScoreBasis> {
        self.basis.as_ref()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.basis.as_ref().map_or_else(Vec::new, |b| b.warnings().to_vec())
    }

    /// `(T_1(x;G), ..., T_m(x;G))`.
    pub fn at(&self, x: f64) -> Result<Vec<f64>> {
        self.baseline.check_support(x)?;
        Ok(match &self.basis {
            None => legendre_all(self.m, self.baseline.cdf(x)),
            Some(b) => {
                let i = b.dist().atom_index(x).ok_or(Error::OutOfSupport {
                    value: x,
                    baseline: self.baseline.name().to_string(),
                })?;
                b.row(i)
            }
        })
    }

    /// `(S_1(u;G), ..., S_m(u;G))`.
    pub fn unit(&self, u: f64) -> Vec<f64> {
        match &self.basis {
            None => legendre_all(self.m, u),
            Some(b) => b.unit_scores(u),
        }
    }

    /// Points and weights for integrating over the unit interval: quadrature
    /// nodes for continuous `G`, atom cells for discrete `G`. Each point
    /// carries its score vector.
    fn integration_points(&self) -> Vec<(f64, Vec<f64>)> {
        match &self.basis {
            None => unit_interval_rule()
                .into_iter()
                .map(|(u, w)| (w, legendre_all(self.m, u)))
                .collect(),
            Some(b) => (0..b.dist().len())
                .map(|i| (b.dist().masses()[i], b.row(i)))
                .collect(),
        }
    }
}

/// Goodness-of-fit components `LP[j;G,F]` for `j = 1..m`.
#[derive(Debug, Clone)]
pub struct GofComponents {
    pub coeffs: Vec<f64>,
    pub n: Option<usize>,
    pub scores: BaselineScores,
}

/// Components from a sample: `coeff_j = mean_i T_j(x_i;G)`.
pub fn gof_components(data: &Sample, g: &Baseline, m: usize) -> Result<GofComponents> {
    let upto = data.values().iter().copied().fold(0.0, f64::max);
    let scores = BaselineScores::new(g, m, upto)?;
    let rows: Vec<Vec<f64>> = data
        .values()
        .iter()
        .map(|&x| scores.at(x))
        .collect::<Result<_>>()?;
    let n = rows.len();
    let coeffs = (0..scores.m())
        .map(|j| pairwise_sum_by(n, |i| rows[i][j]) / n as f64)
        .collect();
    Ok(GofComponents {
        coeffs,
        n: Some(n),
        scores,
    })
}

/// Components for an exact law `F`: `coeff_j = sum_x p(x) T_j(x;G)`.
pub fn gof_components_law(f: &DiscreteDist, g: &Baseline, m: usize) -> Result<GofComponents> {
    let upto = f.atoms().last().copied().unwrap_or(0.0).max(0.0);
    let scores = BaselineScores::new(g, m, upto)?;
    let rows: Vec<Vec<f64>> = f.atoms().iter().map(|&x| scores.at(x)).collect::<Result<_>>()?;
    let coeffs = (0..scores.m())
        .map(|j| f.expect_by(|i| rows[i][j]))
        .collect();
    Ok(GofComponents {
        coeffs,
        n: None,
        scores,
    })
}

/// Data-driven AIC selection: 1-based orders, ascending.
pub fn select_aic(coeffs: &[f64], n: usize) -> Vec<usize> {
    Selection::Aic
        .select_vector(coeffs, Some(n as f64))
        .expect("AIC with a sample size cannot fail")
        .into_iter()
        .map(|i| i + 1)
        .collect()
}

/// `sum_{j in selected} coeff_j^2` over 1-based orders.
pub fn gof_statistic(coeffs: &[f64], selected: &[usize]) -> f64 {
    let sq: Vec<f64> = selected.iter().map(|&j| coeffs[j - 1] * coeffs[j - 1]).collect();
    pairwise_sum(&sq)
}

/// Raw and smooth GOF statistics with the asymptotic chi-square p-value of
/// `n * raw` on `m` degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub coeffs: Vec<f64>,
    pub selected: Vec<usize>,
    pub selection: String,
    pub raw: f64,
    pub smooth: f64,
    pub df: usize,
    pub pvalue: Option<f64>,
    pub n: Option<usize>,
}

pub fn gof_test(c: &GofComponents, selection: &Selection) -> Result<GofResult> {
    let selected: Vec<usize> = selection
        .select_vector(&c.coeffs, c.n.map(|n| n as f64))?
        .into_iter()
        .map(|i| i + 1)
        .collect();
    let all: Vec<usize> = (1..=c.coeffs.len()).collect();
    let raw = gof_statistic(&c.coeffs, &all);
    let smooth = gof_statistic(&c.coeffs, &selected);
    let df = c.coeffs.len();
    let pvalue = c.n.map(|n| {
        let chi = ChiSquared::new(df as f64).expect("positive df");
        chi.sf(n as f64 * raw)
    });
    Ok(GofResult {
        coeffs: c.coeffs.clone(),
        selected,
        selection: selection.to_string(),
        raw,
        smooth,
        df,
        pvalue,
        n: c.n,
    })
}

/// Form of a comparison density estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum DensityForm {
    /// `1 + sum c_j S_j(u)`, clipped at zero and renormalized for output.
    L2,
    /// `exp(sum theta_j S_j(u) - K)`.
    Exponential { theta: Vec<f64>, log_norm: f64 },
}

/// Estimated comparison density `d(u;G,F)`.
#[derive(Debug, Clone)]
pub struct ComparisonDensity {
    pub coeffs: Vec<f64>,
    /// 1-based orders entering the model.
    pub selected: Vec<usize>,
    pub form: DensityForm,
    pub n: Option<usize>,
    scores: BaselineScores,
    /// `int max(0, d)`; 1 unless clipping removed mass.
    clipped_mass: f64,
}

impl ComparisonDensity {
    pub fn l2(c: &GofComponents, selected: &[usize]) -> Result<Self> {
        check_orders(selected, c.coeffs.len())?;
        let mut cd = Self {
            coeffs: c.coeffs.clone(),
            selected: selected.to_vec(),
            form: DensityForm::L2,
            n: c.n,
            scores: c.scores.clone(),
            clipped_mass: 1.0,
        };
        let pts = cd.scores.integration_points();
        cd.clipped_mass =
            pairwise_sum_by(pts.len(), |i| pts[i].0 * cd.raw_from_scores(&pts[i].1).max(0.0));
        if !(cd.clipped_mass > 0.0) {
            return Err(Error::Numeric("comparison density is zero everywhere after clipping".into()));
        }
        Ok(cd)
    }

    /// Maximum-entropy form matching the selected coefficients.
    pub fn exponential(c: &GofComponents, selected: &[usize]) -> Result<Self> {
        check_orders(selected, c.coeffs.len())?;
        let targets: Vec<(usize, f64)> = selected.iter().map(|&j| (j, c.coeffs[j - 1])).collect();
        let fit = fit_exponential(&targets, &c.scores)?;
        Ok(Self {
            coeffs: c.coeffs.clone(),
            selected: selected.to_vec(),
            form: DensityForm::Exponential {
                theta: fit.theta,
                log_norm: fit.log_norm,
            },
            n: c.n,
            scores: c.scores.clone(),
            clipped_mass: 1.0,
        })
    }

    pub fn baseline(&self) -> &Baseline {
        self.scores.baseline()
    }

    pub fn scores(&self) -> &BaselineScores {
        &self.scores
    }

    /// Integral of the L2 form after clipping at zero, used as its
    /// normalizer. The negative mass removed is this value minus one.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    fn raw_from_scores(&self, s: &[f64]) -> f64 {
        match &self.form {
            DensityForm::L2 => 1.0 + self.selected.iter().map(|&j| self.coeffs[j - 1] * s[j - 1]).sum::<f64>(),
            DensityForm::Exponential { theta, log_norm } => {
                let eta: f64 = self.selected.iter().zip(theta).map(|(&j, t)| t * s[j - 1]).sum();
                (eta - log_norm).exp()
            }
        }
    }

    /// Unclipped model value at `u` (the L2 form may be negative).
    pub fn raw(&self, u: f64) -> f64 {
        self.raw_from_scores(&self.scores.unit(u))
    }

    /// Density value at `u`: clipped and renormalized for the L2 form.
    pub fn eval(&self, u: f64) -> f64 {
        self.finish(self.raw(u))
    }

    fn finish(&self, raw: f64) -> f64 {
        match self.form {
            DensityForm::L2 => raw.max(0.0) / self.clipped_mass,
            DensityForm::Exponential { .. } => raw,
        }
    }

    /// LP skew density `g(x) d(G(x))`; a probability mass for discrete `G`.
    pub fn skew_density(&self, x: f64) -> Result<f64> {
        let g = self.baseline().density(x);
        if g == 0.0 {
            return Ok(0.0);
        }
        let s = self.scores.at(x)?;
        Ok(g * self.finish(self.raw_from_scores(&s)))
    }
}

fn check_orders(selected: &[usize], m: usize) -> Result<()> {
    if let Some(&bad) = selected.iter().find(|&&j| j == 0 || j > m) {
        return Err(Error::OutOfRange(format!("order {bad} outside 1..={m}")));
    }
    Ok(())
}

/// Fits `theta` so the exponential comparison density has the target LP
/// coefficients `(order, value)`; the normalizer comes from 512-node
/// quadrature (continuous `G`) or exact atom sums (discrete `G`).
pub fn fit_exponential(targets: &[(usize, f64)], scores: &BaselineScores) -> Result<MaxEntFit> {
    check_orders(&targets.iter().map(|t| t.0).collect::<Vec<_>>(), scores.m())?;
    let pts = scores.integration_points();
    let weights: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let features: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| targets.iter().map(|&(j, _)| p.1[j - 1]).collect())
        .collect();
    let values: Vec<f64> = targets.iter().map(|t| t.1).collect();
    fit_maxent(&weights, &features, &values)
}

/// LP coefficients of an arbitrary comparison density, by the same
/// integration rule the fits use.
pub fn density_coefficients<D: Fn(f64) -> f64>(scores: &BaselineScores, d: D) -> Vec<f64> {
    match scores.basis() {
        None => {
            let rule = unit_interval_rule();
            (1..=scores.m())
                .map(|j| pairwise_sum_by(rule.len(), |i| rule[i].1 * d(rule[i].0) * legendre(j, rule[i].0)))
                .collect()
        }
        Some(b) => {
            let dist = b.dist();
            (1..=b.m())
                .map(|j| {
                    dist.expect_by(|i| {
                        let u = dist.mid()[i];
                        d(u) * b.at(j, i)
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::GaussLegendre;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn std_normal() -> Baseline {
        Baseline::Normal { mu: 0.0, sigma: 1.0 }
    }

    #[test]
    fn baseline_quantile_inverts_cdf() {
        for b in [
            std_normal(),
            Baseline::Exponential { mean: 2.0 },
            Baseline::Gamma { shape: 2.5, rate: 0.19 },
        ] {
            for &x in &[0.3, 1.0, 4.0] {
                let u = b.cdf(x);
                assert!((b.quantile(u).unwrap() - x).abs() < 1e-8, "{b:?} at {x}");
            }
        }
    }

    #[test]
    fn exact_match_gives_zero_coefficients() {
        let law = DiscreteDist::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = Baseline::Discrete { law: law.clone() };
        let c = gof_components_law(&law, &g, 3).unwrap();
        assert!(c.coeffs.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn out_of_support_is_an_error() {
        let s = Sample::new(vec![1.0, -0.5]).unwrap();
        let err = gof_components(&s, &Baseline::Exponential { mean: 1.0 }, 4).unwrap_err();
        assert!(matches!(err, Error::OutOfSupport { .. }));
        let s = Sample::new(vec![1.5]).unwrap();
        assert!(gof_components(&s, &Baseline::Poisson { lambda: 2.0 }, 4).is_err());
    }

    #[test]
    fn zero_variance_baseline_is_rejected() {
        let s = Sample::new(vec![2.0, 2.0, 2.0]).unwrap();
        assert!(Baseline::fit(BaselineKind::Normal, &s).is_err());
        assert!(Baseline::from_params(BaselineKind::Normal, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn empty_selection_returns_baseline() {
        let s = Sample::new(vec![-1.0, 0.2, 0.5, 1.3]).unwrap();
        let c = gof_components(&s, &std_normal(), 4).unwrap();
        let cd = ComparisonDensity::l2(&c, &[]).unwrap();
        for &x in &[-2.0, 0.0, 0.7] {
            assert!((cd.skew_density(x).unwrap() - std_normal().density(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn l2_skew_density_integrates_to_one() {
        let s = Sample::new(vec![0.0]).unwrap();
        let mut c = gof_components(&s, &std_normal(), 4).unwrap();
        c.coeffs = vec![0.0, 0.5, 0.0, 0.0];
        let cd = ComparisonDensity::l2(&c, &[2]).unwrap();
        let rule = GaussLegendre::new(200);
        let total: f64 = (0..16)
            .map(|p| {
                let a = -8.0 + p as f64;
                rule.integrate(a, a + 1.0, |x| cd.skew_density(x).unwrap())
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn poisson_skew_mass_sums_to_one() {
        let s = Sample::new(vec![0.0, 1.0, 1.0, 2.0, 5.0, 5.0, 5.0, 6.0]).unwrap();
        let g = Baseline::fit(BaselineKind::Poisson, &s).unwrap();
        let c = gof_components(&s, &g, 4).unwrap();
        let cd = ComparisonDensity::l2(&c, &[1, 2, 3, 4]).unwrap();
        let law = g.discrete_law(6.0).unwrap();
        let total: f64 = law.atoms().iter().map(|&x| cd.skew_density(x).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn exponential_fit_small_target_is_linear() {
        let scores = BaselineScores::new(&std_normal(), 4, 0.0).unwrap();
        let fit = fit_exponential(&[(1, 0.01)], &scores).unwrap();
        assert!((fit.theta[0] - 0.01).abs() < 1e-3);
        let zero = fit_exponential(&[(1, 0.0), (3, 0.0)], &scores).unwrap();
        assert!(zero.theta.iter().all(|t| t.abs() < 1e-15));
        assert!(zero.log_norm.abs() < 1e-12);
    }

    #[test]
    fn exponential_fit_round_trips() {
        let scores = BaselineScores::new(&std_normal(), 4, 0.0).unwrap();
        let targets = [(2, 0.15), (3, -0.1), (4, 0.05)];
        let fit = fit_exponential(&targets, &scores).unwrap();
        let d = |u: f64| {
            let s = legendre_all(4, u);
            (fit.theta[0] * s[1] + fit.theta[1] * s[2] + fit.theta[2] * s[3] - fit.log_norm).exp()
        };
        let back = density_coefficients(&scores, d);
        for &(j, v) in &targets {
            assert!((back[j - 1] - v).abs() < 1e-6);
        }
    }

    #[test]
    fn null_calibration_of_raw_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 500;
        let n = 200;
        let mut total = 0.0;
        for _ in 0..reps {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let c = gof_components(&Sample::new(v).unwrap(), &std_normal(), 4).unwrap();
            total += n as f64 * gof_statistic(&c.coeffs, &[1, 2, 3, 4]);
        }
        let mean = total / reps as f64;
        assert!((mean - 4.0).abs() < 0.4, "{mean}");
    }

    fn both_forms(c: Vec<f64>) -> (ComparisonDensity, ComparisonDensity) {
        let s = Sample::new(vec![0.0]).unwrap();
        let mut comps = gof_components(&s, &std_normal(), 4).unwrap();
        comps.coeffs = c;
        (
            ComparisonDensity::l2(&comps, &[1, 2, 3, 4]).unwrap(),
            ComparisonDensity::exponential(&comps, &[1, 2, 3, 4]).unwrap(),
        )
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..15).prop_flat_map(|k| {
            (
                prop::collection::vec(0.01f64..1.0, k),
                prop::collection::vec(0.0f64..1.0, k),
            )
        })
    }

    proptest! {
        #[test]
        fn raw_statistic_equals_chi_square_divergence((p0, pt) in arb_pair()) {
            prop_assume!(pt.iter().sum::<f64>() > 0.05);
            let k = p0.len();
            let atoms: Vec<f64> = (0..k).map(|i| i as f64).collect();
            let g = DiscreteDist::from_weights(atoms.clone(), p0).unwrap();
            let f = DiscreteDist::from_weights(atoms, pt).unwrap();
            let c = gof_components_law(&f, &Baseline::Discrete { law: g.clone() }, k - 1).unwrap();
            let raw = gof_statistic(&c.coeffs, &(1..k).collect::<Vec<_>>());
            let chidiv: f64 = g.atoms().iter().enumerate().map(|(i, &x)| {
                let q = f.pmf(x);
                let p = g.masses()[i];
                p * (q / p - 1.0) * (q / p - 1.0)
            }).sum();
            prop_assert!((raw - chidiv).abs() < 1e-10 * chidiv.max(1.0), "{} vs {}", raw, chidiv);
        }

        #[test]
        fn l2_and_exponential_agree_for_small_coefficients(c in prop::collection::vec(-0.01f64..0.01, 4)) {
            let (l2, ex) = both_forms(c);
            for i in 0..=100 {
                let u = i as f64 / 100.0;
                prop_assert!((l2.eval(u) - ex.eval(u)).abs() < 0.01);
            }
        }

        #[test]
        fn l2_and_exponential_differ_at_second_order(c in prop::collection::vec(-0.05f64..0.05, 4)) {
            // sup |sum c_j Leg_j| bounds the first-order term; the gap is
            // quadratic in it
            let a: f64 = c.iter().enumerate().map(|(j, v)| v.abs() * ((2 * j + 3) as f64).sqrt()).sum();
            let (l2, ex) = both_forms(c);
            for i in 0..=100 {
                let u = i as f64 / 100.0;
                prop_assert!((l2.eval(u) - ex.eval(u)).abs() <= a * a);
            }
        }

        #[test]
        fn gof_invariant_under_joint_monotone_map(w in prop::collection::vec(0.05f64..1.0, 3..10), seed in 0u64..1000) {
            let k = w.len();
            let atoms: Vec<f64> = (0..k).map(|i| i as f64).collect();
            let g = DiscreteDist::from_weights(atoms.clone(), w.clone()).unwrap();
            let data: Vec<f64> = (0..30).map(|i| ((i as u64 * 7 + seed) % k as u64) as f64).collect();
            let a = gof_components(&Sample::new(data.clone()).unwrap(), &Baseline::Discrete { law: g.clone() }, 3).unwrap();
            let moved = DiscreteDist::new(atoms.iter().map(|x| x.exp()).collect(), g.masses().to_vec()).unwrap();
            let moved_data: Vec<f64> = data.iter().map(|x| x.exp()).collect();
            let b = gof_components(&Sample::new(moved_data).unwrap(), &Baseline::Discrete { law: moved }, 3).unwrap();
            for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
