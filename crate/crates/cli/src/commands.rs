use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;
use lpstat::copula::{CopulaModel, Direction, GRID_POINTS};
use lpstat::corresp::{correspondence_analysis, Variant};
use lpstat::lpinfor::{chi_square_test, chidiv, lpinfor, permutation_pvalue, PermStatistic};
use lpstat::moments::sample_lp_moments;
use lpstat::regress::{ConditionalModel, Given, Marginal, RegressConfig};
use lpstat::sim::{power_csv, power_study, timing_bench, NoiseKind, Pattern, PowerConfig, PowerResult};
use lpstat::skew::{gof_components, gof_test, Baseline, BaselineKind, ComparisonDensity};
use lpstat::{datasets, io, ContingencyTable, Joint, Order, Sample, Selection};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::CliError;

/// What a subcommand produced, before it is wrapped and written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub csv: Option<String>,
    pub plots: Vec<(PlotKind, String)>,
    pub seed: Option<u64>,
    pub selection: Option<String>,
    pub warnings: Vec<String>,
}

pub fn read_source(name: &str) -> Result<String, CliError> {
    if name == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Usage(format!("cannot read stdin: {e}")))?;
        return Ok(s);
    }
    let path = Path::new(name);
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {name}: {e}")));
    }
    path.file_name()
        .and_then(|f| f.to_str())
        .and_then(datasets::bundled)
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("no such file: {name}")))
}

fn selection(s: &str) -> Result<Selection, CliError> {
    Selection::from_str(s).map_err(|e| CliError::Usage(e.to_string()))
}

fn read_sample(input: &str, column: &str) -> Result<Sample, CliError> {
    let src = read_source(input)?;
    let (_, mut cols) = io::read_columns(src.as_bytes(), &[column.to_string()])?;
    Ok(Sample::new(cols.remove(0))?)
}

/// Two-variable input: a contingency table or a pair of columns.
enum PairData {
    Table(ContingencyTable),
    Pairs(Vec<f64>, Vec<f64>),
}

fn looks_like_table(src: &str) -> bool {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(src.as_bytes());
    rdr.records()
        .filter_map(|r| r.ok())
        .any(|r| r.get(0).is_some_and(|f| f.parse::<f64>().is_err()))
}

fn read_pair(p: &PairOpts) -> Result<PairData, CliError> {
    let src = read_source(&p.input.input)?;
    let table = match p.layout {
        Layout::Table => true,
        Layout::Pairs => false,
        Layout::Auto => looks_like_table(&src),
    };
    if table {
        Ok(PairData::Table(io::read_table(src.as_bytes())?))
    } else {
        let (_, mut cols) = io::read_columns(src.as_bytes(), &[p.x.clone(), p.y.clone()])?;
        let y = cols.pop().unwrap_or_default();
        let x = cols.pop().unwrap_or_default();
        Ok(PairData::Pairs(x, y))
    }
}

fn joint(data: &PairData, m: usize) -> Result<Joint, CliError> {
    let o = Order::Fixed(m);
    Ok(match data {
        PairData::Table(t) => Joint::from_table(t, o, o)?,
        PairData::Pairs(x, y) => Joint::from_pairs(x, y, o, o)?,
    })
}

fn no_plot(out: &OutputOpts, allowed: &[PlotKind]) -> Result<(), CliError> {
    match out.plot {
        Some(k) if !allowed.contains(&k) => Err(CliError::Usage(format!(
            "plot kind {} is not available for this command",
            k.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())
        ))),
        _ => Ok(()),
    }
}

pub fn run(cmd: &Command) -> Result<Outcome, CliError> {
    no_plot(&cmd.output(), allowed_plots(cmd))?;
    match cmd {
        Command::Moments(a) => moments(a),
        Command::Comoments(a) => comoments(a),
        Command::Gof(a) => gof(a),
        Command::Density(a) => density(a),
        Command::Copula(a) => copula(a),
        Command::Corresp(a) => corresp(a),
        Command::Lpinfor(a) => lpinfor_cmd(a),
        Command::Regress(a) => regress(a),
        Command::PowerSim(a) => power(a),
        Command::Bench(a) => bench(a),
        Command::Verify(_) => Err(CliError::Usage("verify cannot be nested".into())),
    }
}

fn allowed_plots(cmd: &Command) -> &'static [PlotKind] {
    match cmd {
        Command::Moments(_) => &[PlotKind::Scores],
        Command::Gof(_) | Command::Density(_) => &[PlotKind::Density],
        Command::Copula(_) => &[PlotKind::CopulaGrid, PlotKind::Slices, PlotKind::Scores],
        Command::Comoments(_) | Command::Lpinfor(_) => &[PlotKind::Scores],
        Command::Regress(_) => &[PlotKind::Quantiles, PlotKind::Slices],
        Command::PowerSim(_) => &[PlotKind::Power],
        _ => &[],
    }
}

fn joint_scores_csv(j: &Joint) -> String {
    let mut out = String::from("margin,u_left,u_right,j,value\n");
    for (name, b) in [("x", j.x_basis()), ("y", j.y_basis())] {
        for line in b.steps_csv().lines().skip(1) {
            let _ = writeln!(out, "{name},{line}");
        }
    }
    out
}

fn moments(a: &MomentsArgs) -> Result<Outcome, CliError> {
    let s = read_sample(&a.input.input, &a.column)?;
    let (lp, basis) = sample_lp_moments(&s, a.m)?;
    let mut csv = String::from("j,lp\n");
    for (j, c) in lp.coeffs.iter().enumerate() {
        let _ = writeln!(csv, "{},{c}", j + 1);
    }
    Ok(Outcome {
        results: json!({ "moments": lp, "m": basis.m() }),
        csv: Some(csv),
        plots: vec![(PlotKind::Scores, basis.steps_csv())],
        warnings: basis.warnings().to_vec(),
        ..Default::default()
    })
}

fn comoments(a: &PairArgs) -> Result<Outcome, CliError> {
    let data = read_pair(&a.pair)?;
    let j = joint(&data, a.pair.m)?;
    let cm = j.comoments();
    Ok(Outcome {
        results: serde_json::to_value(&cm)?,
        csv: Some(cm.to_csv()),
        plots: vec![(PlotKind::Scores, joint_scores_csv(&j))],
        selection: Some(format!("threshold:{}", lpstat::select::Z_CRIT)),
        warnings: j.warnings(),
        ..Default::default()
    })
}

fn baseline(a: &GofArgs, s: &Sample) -> Result<Baseline, CliError> {
    let kind = BaselineKind::from_str(&a.baseline).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(match &a.params {
        Some(p) => Baseline::from_params(kind, p)?,
        None => Baseline::fit(kind, s)?,
    })
}

fn density_grid(s: &Sample, g: &Baseline, d: &ComparisonDensity, points: usize) -> Result<String, CliError> {
    let lo = s.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xs: Vec<f64> = if g.is_continuous() {
        let k = points.max(2);
        (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
    } else {
        (lo.floor() as i64..=hi.ceil() as i64).map(|x| x as f64).collect()
    };
    let mut out = String::from("x,baseline,density\n");
    for x in xs {
        let _ = writeln!(out, "{x},{},{}", g.density(x), d.skew_density(x)?);
    }
    Ok(out)
}

fn gof(a: &GofArgs) -> Result<Outcome, CliError> {
    let rule = selection(&a.select)?;
    let s = read_sample(&a.input.input, &a.column)?;
    let g = baseline(a, &s)?;
    let c = gof_components(&s, &g, a.m)?;
    let r = gof_test(&c, &rule)?;
    let d = ComparisonDensity::l2(&c, &r.selected)?;
    let mut csv = String::from("j,coeff,selected\n");
    for (j, v) in r.coeffs.iter().enumerate() {
        let _ = writeln!(csv, "{},{v},{}", j + 1, r.selected.contains(&(j + 1)));
    }
    Ok(Outcome {
        results: json!({ "baseline": g, "gof": r, "statistic": r.smooth, "pvalue_df": r.df }),
        csv: Some(csv),
        plots: vec![(PlotKind::Density, density_grid(&s, &g, &d, 201)?)],
        selection: Some(rule.to_string()),
        warnings: c.scores.warnings(),
        ..Default::default()
    })
}

fn density(a: &DensityArgs) -> Result<Outcome, CliError> {
    let rule = selection(&a.gof.select)?;
    let s = read_sample(&a.gof.input.input, &a.gof.column)?;
    let g = baseline(&a.gof, &s)?;
    let c = gof_components(&s, &g, a.gof.m)?;
    let r = gof_test(&c, &rule)?;
    let d = match a.form {
        DensityFormArg::L2 => ComparisonDensity::l2(&c, &r.selected)?,
        DensityFormArg::Exp => ComparisonDensity::exponential(&c, &r.selected)?,
    };
    let grid = density_grid(&s, &g, &d, a.grid)?;
    let mut warnings = c.scores.warnings();
    let clipped = match a.form {
        DensityFormArg::L2 => d.clipped_mass() - 1.0,
        DensityFormArg::Exp => 0.0,
    };
    if clipped > 1e-12 {
        warnings.push(format!("negative part of the L2 density clipped (mass {clipped:.3e})"));
    }
    Ok(Outcome {
        results: json!({
            "baseline": g,
            "coeffs": d.coeffs,
            "selected": d.selected,
            "form": a.form,
            "clipped_mass": clipped,
        }),
        csv: Some(grid.clone()),
        plots: vec![(PlotKind::Density, grid)],
        selection: Some(rule.to_string()),
        warnings,
        ..Default::default()
    })
}

fn slices_csv(model: &CopulaModel, us: &[f64]) -> String {
    let mut out = String::from("u,v,density\n");
    for &u in us {
        for l in 0..GRID_POINTS {
            let v = l as f64 / (GRID_POINTS - 1) as f64;
            let _ = writeln!(out, "{u},{v},{}", model.slice_density(u, v, Direction::YGivenX));
        }
    }
    out
}

fn copula(a: &CopulaArgs) -> Result<Outcome, CliError> {
    let rule = selection(&a.select)?;
    for &u in &a.slices {
        if !(0.0..=1.0).contains(&u) {
            return Err(CliError::Usage(format!("slice u = {u} is outside [0, 1]")));
        }
    }
    let data = read_pair(&a.pair)?;
    let j = joint(&data, a.pair.m)?;
    let (model, rule_used) = match a.form {
        CopulaFormArg::L2 => (CopulaModel::l2(&j, &rule)?, Some(rule.to_string())),
        CopulaFormArg::Exp => (CopulaModel::exponential(&j, &rule)?, Some(rule.to_string())),
        CopulaFormArg::Canonical => (CopulaModel::canonical(&j, a.rank)?, None),
    };
    let grid = model.grid_csv();
    Ok(Outcome {
        results: json!({
            "model": model.form,
            "comoments": model.comoments,
            "lambdas": model.lambdas(),
        }),
        csv: Some(grid.clone()),
        plots: vec![
            (PlotKind::CopulaGrid, grid),
            (PlotKind::Slices, slices_csv(&model, &a.slices)),
            (PlotKind::Scores, joint_scores_csv(&j)),
        ],
        selection: rule_used,
        warnings: j.warnings(),
        ..Default::default()
    })
}

fn corresp(a: &CorrespArgs) -> Result<Outcome, CliError> {
    let variant = Variant::from_str(&a.variant).map_err(|e| CliError::Usage(e.to_string()))?;
    let src = read_source(&a.input.input)?;
    let t = io::read_table(src.as_bytes())?;
    let r = correspondence_analysis(&t, a.rank, variant)?;
    Ok(Outcome {
        csv: Some(r.to_csv()),
        results: serde_json::to_value(&r)?,
        ..Default::default()
    })
}

fn lpinfor_cmd(a: &LpinforArgs) -> Result<Outcome, CliError> {
    let rule = selection(&a.select)?;
    let data = read_pair(&a.pair)?;
    let j = joint(&data, a.pair.m)?;
    let cm = j.comoments();
    let info = lpinfor(&cm, &rule)?;
    let mut results = json!({
        "raw": info.raw,
        "smooth": info.smooth,
        "df": info.df_smooth,
        "df_raw": info.df_raw,
        "selected": info.selected,
        "linearity": info.linearity,
        "comoments": cm,
    });
    if let PairData::Table(t) = &data {
        results["chidiv"] = json!(chidiv(t));
        if t.n().is_some() {
            results["chi_square"] = serde_json::to_value(chi_square_test(t)?)?;
        }
    }
    let mut csv = String::from("j,k,lp,significant,pvalue\n");
    let mut seed = None;
    if a.perm > 0 {
        let smooth = permutation_pvalue(&j, &PermStatistic::Smooth(rule.clone()), a.perm, a.seed)?;
        results["pvalue"] = json!(smooth.pvalue);
        results["permutation"] = serde_json::to_value(&smooth)?;
        let entries = info
            .selected
            .iter()
            .map(|&(r, c)| {
                let t = permutation_pvalue(&j, &PermStatistic::Entry(r, c), a.perm, a.seed)?;
                Ok(json!({ "j": r, "k": c, "lp": cm.get(r, c), "pvalue": t.pvalue }))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        results["entry_pvalues"] = json!(entries);
        seed = Some(a.seed);
    }
    for r in 1..=cm.rows() {
        for c in 1..=cm.cols() {
            let p = results
                .get("entry_pvalues")
                .and_then(|e| e.as_array())
                .and_then(|e| e.iter().find(|v| v["j"] == r && v["k"] == c))
                .map_or(String::new(), |v| v["pvalue"].to_string());
            let _ = writeln!(csv, "{r},{c},{},{},{p}", cm.get(r, c), cm.significance[r - 1][c - 1]);
        }
    }
    results["seed"] = json!(seed);
    Ok(Outcome {
        results,
        csv: Some(csv),
        plots: vec![(PlotKind::Scores, joint_scores_csv(&j))],
        seed,
        selection: Some(rule.to_string()),
        warnings: j.warnings(),
    })
}

fn regress(a: &RegressArgs) -> Result<Outcome, CliError> {
    let cfg = RegressConfig {
        mean_selection: selection(&a.mean_select)?,
        copula_selection: selection(&a.select)?,
        marginal: match a.marginal {
            MarginalArg::Auto => Marginal::Auto,
            MarginalArg::Discrete => Marginal::Discrete,
            MarginalArg::SkewNormal => Marginal::SkewNormal,
        },
    };
    let us = a
        .u_grid
        .clone()
        .unwrap_or_else(|| (1..20).map(|i| i as f64 / 20.0).collect());
    for &u in us.iter().chain(&a.target_quantiles) {
        if !(u > 0.0 && u < 1.0) {
            return Err(CliError::Usage(format!("level {u} is outside (0, 1)")));
        }
    }
    let data = read_pair(&a.pair)?;
    let j = joint(&data, a.pair.m)?;
    let model = ConditionalModel::fit(&j, &cfg)?;
    let xdist = model.copula().x_basis().dist();
    let mut curves = String::from("u,x,mean");
    for t in &a.target_quantiles {
        let _ = write!(curves, ",q{t}");
    }
    curves.push('\n');
    let mut rows = Vec::new();
    for (i, &u) in us.iter().enumerate() {
        let x = xdist.quantile(u)?;
        let mean = model.conditional_mean(Given::U(u));
        let qs: Vec<f64> = match a.path {
            QuantilePath::Invert => a
                .target_quantiles
                .iter()
                .map(|&v| model.conditional_quantile(u, v).map(|q| q.value))
                .collect::<Result<_, _>>()?,
            QuantilePath::Sample => model
                .sample_quantiles(u, &a.target_quantiles, a.draws, a.seed.wrapping_add(i as u64))?
                .into_iter()
                .map(|q| q.value)
                .collect(),
        };
        let _ = write!(curves, "{u},{x},{mean}");
        for q in &qs {
            let _ = write!(curves, ",{q}");
        }
        curves.push('\n');
        rows.push(json!({ "u": u, "x": x, "mean": mean, "quantiles": qs }));
    }
    let ydist = model.copula().y_basis().dist();
    let mut slices = String::from("u,y,density\n");
    for &u in &us {
        if model.is_discrete() {
            for (y, p) in ydist.atoms().iter().zip(model.conditional_masses(Given::U(u))?) {
                let _ = writeln!(slices, "{u},{y},{p}");
            }
        } else {
            let (lo, hi) = (ydist.atoms()[0], ydist.atoms()[ydist.len() - 1]);
            for l in 0..GRID_POINTS {
                let y = lo + (hi - lo) * l as f64 / (GRID_POINTS - 1) as f64;
                let _ = writeln!(slices, "{u},{y},{}", model.conditional_density(Given::U(u), y)?);
            }
        }
    }
    let seed = (a.path == QuantilePath::Sample).then_some(a.seed);
    Ok(Outcome {
        results: json!({
            "mean_y": model.mean_y,
            "mean_coeffs": model.mean_coeffs,
            "discrete_y": model.is_discrete(),
            "target_quantiles": a.target_quantiles,
            "path": a.path,
            "curves": rows,
            "seed": seed,
        }),
        csv: Some(curves.clone()),
        plots: vec![(PlotKind::Quantiles, curves), (PlotKind::Slices, slices)],
        seed,
        selection: Some(format!("mean {}, copula {}", cfg.mean_selection, cfg.copula_selection)),
        warnings: model.warnings().to_vec(),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerFile {
    patterns: Option<Vec<String>>,
    noises: Option<Vec<String>>,
    levels: Option<Vec<f64>>,
    n: Option<usize>,
    b_null: Option<usize>,
    b_alt: Option<usize>,
    seed: Option<u64>,
}

fn power_config(a: &PowerArgs) -> Result<PowerConfig, CliError> {
    let file: PowerFile = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))?
        }
        None => PowerFile::default(),
    };
    let mut cfg = PowerConfig::default();
    let usage = |e: lpstat::Error| CliError::Usage(e.to_string());
    if let Some(p) = a.patterns.as_ref().or(file.patterns.as_ref()) {
        cfg.patterns = p.iter().map(|s| Pattern::from_str(s)).collect::<Result<_, _>>().map_err(usage)?;
    }
    if let Some(p) = a.noises.as_ref().or(file.noises.as_ref()) {
        cfg.noises = p.iter().map(|s| NoiseKind::from_str(s)).collect::<Result<_, _>>().map_err(usage)?;
    }
    if let Some(l) = a.levels.as_ref().or(file.levels.as_ref()) {
        cfg.levels = Some(l.clone());
    }
    cfg.n = a.n.or(file.n).unwrap_or(cfg.n);
    cfg.b_null = a.b_null.or(file.b_null).unwrap_or(cfg.b_null);
    cfg.b_alt = a.b_alt.or(file.b_alt).unwrap_or(cfg.b_alt);
    cfg.seed = a.seed.or(file.seed).unwrap_or(cfg.seed);
    Ok(cfg)
}

/// One row per (pattern, noise, level), one column per method.
fn power_wide(rows: &[PowerResult]) -> String {
    let mut out = String::from("pattern,noise,noise_level,lpinfor,pearson,spearman\n");
    for chunk in rows.chunks(3) {
        let r = &chunk[0];
        let _ = write!(out, "{},{},{}", r.pattern, r.noise, r.noise_level);
        for c in chunk {
            let _ = write!(out, ",{}", c.power);
        }
        out.push('\n');
    }
    out
}

fn power(a: &PowerArgs) -> Result<Outcome, CliError> {
    let cfg = power_config(a)?;
    let rows = power_study(&cfg)?;
    Ok(Outcome {
        results: json!({ "resolved": cfg, "rows": rows }),
        csv: Some(power_wide(&rows)),
        plots: vec![(PlotKind::Power, power_csv(&rows))],
        seed: Some(cfg.seed),
        selection: Some("all".into()),
        ..Default::default()
    })
}

fn bench(a: &BenchArgs) -> Result<Outcome, CliError> {
    let rows = timing_bench(&a.ns, a.repeats, a.seed)?;
    let mut csv = String::from("n,mean_secs,sd_secs,median_secs,ratio,statistic\n");
    for r in &rows {
        let ratio = r.ratio.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(csv, "{},{},{},{},{ratio},{}", r.n, r.mean_secs, r.sd_secs, r.median_secs, r.statistic);
    }
    Ok(Outcome {
        results: json!({ "rows": rows }),
        csv: Some(csv),
        seed: Some(a.seed),
        selection: Some("all".into()),
        ..Default::default()
    })
}
