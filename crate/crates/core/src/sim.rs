//! Simulation studies: power of LPINFOR against Pearson and Spearman over
//! six dependence patterns and four noise regimes, power of the LP
//! goodness-of-fit statistic under a tail alternative, and a timing bench.
//!
//! Every replicate draws from its own ChaCha stream derived from the study
//! seed and the replicate's coordinates, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::Sample;
use crate::error::{Error, Result};
use crate::moments::Joint;
use crate::skew::{gof_components, Baseline};

/// Score functions per margin for LPINFOR in the power study.
pub const POWER_M: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Linear,
    Quadratic,
    Lissajous,
    WShaped,
    Sine,
    Circle,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::Linear,
        Pattern::Quadratic,
        Pattern::Lissajous,
        Pattern::WShaped,
        Pattern::Sine,
        Pattern::Circle,
    ];

    /// Noise on both coordinates rather than on `y` alone.
    fn noisy_x(self) -> bool {
        matches!(self, Pattern::Lissajous | Pattern::Circle)
    }

    /// Noise-free point from one uniform draw.
    fn point(self, r: f64) -> (f64, f64) {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Pattern::Linear => {
                let x = 2.0 * r - 1.0;
                (x, x)
            }
            Pattern::Quadratic => {
                let x = 2.0 * r - 1.0;
                (x, x * x)
            }
            Pattern::Sine => (r, (4.0 * PI * r).sin()),
            // W profile on [-1, 1] with peaks at -1, 0, 1 and troughs at +-1/2
            Pattern::WShaped => {
                let x = 2.0 * r - 1.0;
                (x, 2.0 * (x.abs() - 0.5).abs())
            }
            Pattern::Circle => {
                let t = 2.0 * PI * r;
                (t.cos(), t.sin())
            }
            Pattern::Lissajous => {
                let t = 2.0 * PI * r;
                ((3.0 * t + FRAC_PI_2).sin(), (2.0 * t).sin())
            }
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Linear => "linear",
            Pattern::Quadratic => "quadratic",
            Pattern::Lissajous => "lissajous",
            Pattern::WShaped => "w_shaped",
            Pattern::Sine => "sine",
            Pattern::Circle => "circle",
        })
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.to_string() == s.trim().to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::InvalidInput(format!("unknown pattern '{s}'")))
    }
}

/// Noise regime and its level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Noise {
    /// `N(0, sigma)`, `sigma` in `[0, 3]`.
    E1(f64),
    /// `(1 - eta) N(0,1) + eta N(1, 3)` (3 is the standard deviation),
    /// `eta` in `[0, 0.4]`.
    E2(f64),
    /// `(1 - eta) N(0,1) + eta N(mu, 1)`, `mu` uniform on `{-40,-20,20,40}`,
    /// `eta` in `[0, 0.4]`.
    E3(f64),
    /// Cauchy with the given scale in `[0, 2]`.
    E4(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NoiseKind {
    E1,
    E2,
    E3,
    E4,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::E1, NoiseKind::E2, NoiseKind::E3, NoiseKind::E4];

    pub fn with_level(self, level: f64) -> Noise {
        match self {
            NoiseKind::E1 => Noise::E1(level),
            NoiseKind::E2 => Noise::E2(level),
            NoiseKind::E3 => Noise::E3(level),
            NoiseKind::E4 => Noise::E4(level),
        }
    }

    /// Upper end of the level range.
    pub fn max_level(self) -> f64 {
        match self {
            NoiseKind::E1 => 3.0,
            NoiseKind::E2 | NoiseKind::E3 => 0.4,
            NoiseKind::E4 => 2.0,
        }
    }

    /// Desk-scale sweep: five evenly spaced levels ending at the maximum.
    pub fn default_levels(self) -> Vec<f64> {
        let top = self.max_level();
        (1..=5).map(|i| top * i as f64 / 5.0).collect()
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "E1" => Ok(NoiseKind::E1),
            "E2" => Ok(NoiseKind::E2),
            "E3" => Ok(NoiseKind::E3),
            "E4" => Ok(NoiseKind::E4),
            _ => Err(Error::InvalidInput(format!("unknown noise regime '{s}'"))),
        }
    }
}

impl Noise {
    pub fn kind(&self) -> NoiseKind {
        match self {
            Noise::E1(_) => NoiseKind::E1,
            Noise::E2(_) => NoiseKind::E2,
            Noise::E3(_) => NoiseKind::E3,
            Noise::E4(_) => NoiseKind::E4,
        }
    }

    pub fn level(&self) -> f64 {
        match *self {
            Noise::E1(v) | Noise::E2(v) | Noise::E3(v) | Noise::E4(v) => v,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.level();
        let top = self.kind().max_level();
        if !(0.0..=top).contains(&v) {
            return Err(Error::OutOfRange(format!(
                "{} level {v} outside [0, {top}]",
                self.kind()
            )));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match *self {
            Noise::E1(s) => s * z,
            Noise::E2(eta) => {
                if rng.random::<f64>() < eta {
                    1.0 + 3.0 * z
                } else {
                    z
                }
            }
            Noise::E3(eta) => {
                if rng.random::<f64>() < eta {
                    const SHIFTS: [f64; 4] = [-40.0, -20.0, 20.0, 40.0];
                    SHIFTS[rng.random_range(0..4)] + z
                } else {
                    z
                }
            }
            Noise::E4(scale) => {
                if scale == 0.0 {
                    0.0
                } else {
                    Cauchy::new(0.0, scale).expect("positive scale").sample(rng)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scenario {
    pub pattern: Pattern,
    pub noise: Noise,
    pub n: usize,
    pub seed: u64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_pairs<R: Rng>(pattern: Pattern, noise: &Noise, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = pattern.point(rng.random());
        let ex = if pattern.noisy_x() { noise.draw(rng) } else { 0.0 };
        x.push(a + ex);
        y.push(b + noise.draw(rng));
    }
    (x, y)
}

/// Paired sample for a scenario.
pub fn generate_scenario(sc: &Scenario) -> Result<(Vec<f64>, Vec<f64>)> {
    sc.noise.validate()?;
    if sc.n < 5 {
        return Err(Error::OutOfRange(format!("sample size {} below 5", sc.n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    Ok(draw_pairs(sc.pattern, &sc.noise, sc.n, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Lpinfor,
    Pearson,
    Spearman,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lpinfor, Method::Pearson, Method::Spearman];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lpinfor => "lpinfor",
            Method::Pearson => "pearson",
            Method::Spearman => "spearman",
        })
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Raw LPINFOR with `m` score functions per margin.
pub fn lpinfor_statistic(x: &[f64], y: &[f64], m: usize) -> Result<f64> {
    Ok(Joint::pairs_m(x, y, m)?.comoments().frobenius_sq())
}

/// Test statistics `(lpinfor, |pearson|, |spearman|)`; Spearman is the
/// ties-corrected `|LP[1,1]|`.
fn statistics(x: &[f64], y: &[f64]) -> [f64; 3] {
    match Joint::pairs_m(x, y, POWER_M) {
        Ok(j) => {
            let cm = j.comoments();
            let rho = if cm.rows() > 0 && cm.cols() > 0 { cm.entries[0][0].abs() } else { 0.0 };
            [cm.frobenius_sq(), pearson(x, y).abs(), rho]
        }
        // a constant coordinate carries no evidence of dependence
        Err(_) => [0.0, 0.0, 0.0],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerConfig {
    pub patterns: Vec<Pattern>,
    pub noises: Vec<NoiseKind>,
    /// Levels per regime; `None` uses [`NoiseKind::default_levels`].
    pub levels: Option<Vec<f64>>,
    pub n: usize,
    pub b_null: usize,
    pub b_alt: usize,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            patterns: Pattern::ALL.to_vec(),
            noises: NoiseKind::ALL.to_vec(),
            levels: None,
            n: 300,
            b_null: 250,
            b_alt: 200,
            seed: 20_140_801,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerResult {
    pub pattern: Pattern,
    pub noise: NoiseKind,
    pub noise_level: f64,
    pub method: Method,
    /// 95th percentile of the null statistics.
    pub cutoff: f64,
    /// Rejection rate over `b_alt` alternative samples.
    pub power: f64,
    /// Rejection rate over `b_alt` fresh null samples (calibration check).
    pub null_rate: f64,
    pub b_null: usize,
    pub b_alt: usize,
}

/// Replicate kinds, mixed into the stream id.
const NULL_FIT: u64 = 0;
const ALT: u64 = 1;
const NULL_CHECK: u64 = 2;

fn stream_id(cell: usize, level: usize, kind: u64, rep: usize) -> u64 {
    ((cell as u64 * 256 + level as u64) * 4 + kind) << 24 | rep as u64
}

/// Null sample: the scenario's pairs with `y` shuffled, which keeps both
/// margins and breaks the dependence.
fn null_pairs(pattern: Pattern, noise: &Noise, n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let (x, mut y) = draw_pairs(pattern, noise, n, rng);
    y.shuffle(rng);
    (x, y)
}

/// Cutoff with `ceil(0.95 B)` null values at or below it.
fn upper_cutoff(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

pub fn power_study(cfg: &PowerConfig) -> Result<Vec<PowerResult>> {
    if cfg.b_null < 50 || cfg.b_alt < 50 {
        return Err(Error::OutOfRange("need at least 50 null and 50 alternative replicates".into()));
    }
    let mut cells = Vec::new();
    for (pi, &pattern) in cfg.patterns.iter().enumerate() {
        for (ni, &kind) in cfg.noises.iter().enumerate() {
            let levels = cfg.levels.clone().unwrap_or_else(|| kind.default_levels());
            for (li, &level) in levels.iter().enumerate() {
                let noise = kind.with_level(level);
                noise.validate()?;
                cells.push((pi * NoiseKind::ALL.len() + ni, li, pattern, noise));
            }
        }
    }
    let (seed, n) = (cfg.seed, cfg.n);
    let rows: Vec<Vec<PowerResult>> = cells
        .par_iter()
        .map(|&(cell, li, pattern, noise)| {
            let run = |kind: u64, reps: usize| -> Vec<[f64; 3]> {
                (0..reps)
                    .into_par_iter()
                    .map(|rep| {
                        let mut rng = stream_rng(seed, stream_id(cell, li, kind, rep));
                        let (x, y) = if kind == ALT {
                            draw_pairs(pattern, &noise, n, &mut rng)
                        } else {
                            null_pairs(pattern, &noise, n, &mut rng)
                        };
                        statistics(&x, &y)
                    })
                    .collect()
            };
            let nulls = run(NULL_FIT, cfg.b_null);
            let alts = run(ALT, cfg.b_alt);
            let checks = run(NULL_CHECK, cfg.b_alt);
            Method::ALL
                .iter()
                .enumerate()
                .map(|(mi, &method)| {
                    let cutoff = upper_cutoff(nulls.iter().map(|s| s[mi]).collect());
                    let rate = |v: &[[f64; 3]]| v.iter().filter(|s| s[mi] > cutoff).count() as f64 / v.len() as f64;
                    PowerResult {
                        pattern,
                        noise: noise.kind(),
                        noise_level: noise.level(),
                        method,
                        cutoff,
                        power: rate(&alts),
                        null_rate: rate(&checks),
                        b_null: cfg.b_null,
                        b_alt: cfg.b_alt,
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// `pattern,noise,noise_level,method,power,null_rate,cutoff`.
pub fn power_csv(rows: &[PowerResult]) -> String {
    let mut s = String::from("pattern,noise,noise_level,method,power,null_rate,cutoff\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.pattern, r.noise, r.noise_level, r.method, r.power, r.null_rate, r.cutoff
        );
    }
    s
}

/// One-sided two-proportion z statistic for "`a` has lower power than `b`"
/// given `k_a / n` and `k_b / n` rejections.
pub fn deficit_z(power_a: f64, power_b: f64, n: usize) -> f64 {
    let pooled = 0.5 * (power_a + power_b);
    let se = (2.0 * pooled * (1.0 - pooled) / n as f64).sqrt();
    if se == 0.0 {
        return if power_b > power_a { f64::INFINITY } else { 0.0 };
    }
    (power_b - power_a) / se
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailConfig {
    pub pis: Vec<f64>,
    pub mus: Vec<f64>,
    pub n: usize,
    pub b_null: usize,
    pub b_alt: usize,
    /// Legendre components in the GOF statistic.
    pub m: usize,
    pub seed: u64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            pis: vec![0.01, 0.02, 0.05, 0.09],
            mus: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5],
            n: 1000,
            b_null: 200,
            b_alt: 200,
            m: 4,
            seed: 20_140_802,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailPower {
    pub pi: f64,
    pub mu: f64,
    pub power: f64,
    pub cutoff: f64,
}

/// `n * sum c_j^2` of the LP GOF components against `N(0,1)`.
fn gof_stat(x: Vec<f64>, m: usize) -> Result<f64> {
    let s = Sample::new(x)?;
    let g = Baseline::Normal { mu: 0.0, sigma: 1.0 };
    let c = gof_components(&s, &g, m)?;
    Ok(s.n() as f64 * c.coeffs.iter().map(|v| v * v).sum::<f64>())
}

/// Power of the LP GOF test of `H0: F = Phi` against the contamination
/// alternative `(1 - pi) Phi + pi Phi(. - mu)`.
pub fn tail_alternative_study(cfg: &TailConfig) -> Result<Vec<TailPower>> {
    if cfg.pis.iter().any(|p| !(*p > 0.0 && *p < 1.0)) || cfg.mus.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::OutOfRange("need pi in (0,1) and mu >= 0".into()));
    }
    if cfg.b_null < 50 || cfg.b_alt < 50 {
        return Err(Error::OutOfRange("need at least 50 null and 50 alternative replicates".into()));
    }
    let (n, m, seed) = (cfg.n, cfg.m, cfg.seed);
    let nulls = (0..cfg.b_null)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, stream_id(0, 0, NULL_FIT, rep));
            gof_stat((0..n).map(|_| rng.sample(StandardNormal)).collect(), m)
        })
        .collect::<Result<Vec<f64>>>()?;
    let cutoff = upper_cutoff(nulls);
    let mut cells = Vec::new();
    for (pi_i, &pi) in cfg.pis.iter().enumerate() {
        for (mu_i, &mu) in cfg.mus.iter().enumerate() {
            cells.push((pi_i + 1, mu_i, pi, mu));
        }
    }
    cells
        .par_iter()
        .map(|&(pi_i, mu_i, pi, mu)| {
            let rejections = (0..cfg.b_alt)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = stream_rng(seed, stream_id(pi_i, mu_i, ALT, rep));
                    let x: Vec<f64> = (0..n)
                        .map(|_| {
                            let z: f64 = rng.sample(StandardNormal);
                            if rng.random::<f64>() < pi { z + mu } else { z }
                        })
                        .collect();
                    gof_stat(x, m).map(|s| usize::from(s > cutoff))
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok(TailPower {
                pi,
                mu,
                power: rejections as f64 / cfg.b_alt as f64,
                cutoff,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub mean_secs: f64,
    pub sd_secs: f64,
    pub median_secs: f64,
    /// Median time relative to the previous `n` in the grid.
    pub ratio: Option<f64>,
    /// LPINFOR of the first repeat (identical across repeats).
    pub statistic: f64,
}

/// Wall-clock time of raw LPINFOR (`m = 4`) on independent uniform samples.
pub fn timing_bench(ns: &[usize], repeats: usize, seed: u64) -> Result<Vec<TimingRow>> {
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("sample sizes must be strictly ascending".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("need at least one repeat".into()));
    }
    let mut out: Vec<TimingRow> = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        // warm-up
        lpinfor_statistic(&x, &y, POWER_M)?;
        let mut times = Vec::with_capacity(repeats);
        let mut statistic = f64::NAN;
        for r in 0..repeats {
            let start = Instant::now();
            let s = lpinfor_statistic(&x, &y, POWER_M)?;
            times.push(start.elapsed().as_secs_f64());
            if r == 0 {
                statistic = s;
            } else if s.to_bits() != statistic.to_bits() {
                return Err(Error::Numeric("LPINFOR changed between repeats".into()));
            }
        }
        let mean = times.iter().sum::<f64>() / repeats as f64;
        let sd = if repeats > 1 {
            (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if repeats % 2 == 1 {
            sorted[repeats / 2]
        } else {
            0.5 * (sorted[repeats / 2 - 1] + sorted[repeats / 2])
        };
        let ratio = out.last().map(|p| median / p.median_secs);
        out.push(TimingRow {
            n,
            mean_secs: mean,
            sd_secs: sd,
            median_secs: median,
            ratio,
            statistic,
        });
    }
    Ok(out)
}

/// Bivariate normal pairs with correlation `rho`.
pub fn bivariate_normal(n: usize, rho: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::OutOfRange(format!("correlation {rho} outside [-1, 1]")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = normal.sample(&mut rng);
        let b: f64 = normal.sample(&mut rng);
        x.push(a);
        y.push(rho * a + c * b);
    }
    Ok((x, y))
}
