use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gwts::copula::{build_network, DependencyNetwork};
use gwts::dataio::{holdout_train_len, load_panel, CsvSchema, Quarter};
use gwts::diagnostics::{arch_test, normality_tests, ols_cusum, portmanteau_test, DiagnosticReport, EfpPath, NormalityTests};
use gwts::shelflife::{
    estimate_shelf_life_with, rolling_origin_errors, seasonal_naive_forecaster, Forecaster, RegressionMode,
    ShelfLifeResult, VarForecaster,
};
use gwts::structural::{fevd, granger_test, irf, FevdResult, GrangerReport, IrfOptions, IrfResult};
use gwts::var::{
    companion_stability, difference, fit_var_with, select_lag_order, FitOptions, LagSelection, SigmaDivisor,
    VarModel,
};
use gwts::{plot, Error};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::{
    CddArgs, CliError, CliResult, DataArgs, DiagnoseArgs, Divisor, FitArgs, ForecasterKind, ShelflifeArgs,
    StructuralArgs,
};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_fraction(name: &str, x: f64) -> CliResult<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie strictly between 0 and 1, got {x}")))
    }
}

fn check_positive(name: &str, x: u64) -> CliResult<usize> {
    if x >= 1 {
        Ok(x as usize)
    } else {
        Err(usage(format!("--{name} must be at least 1")))
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    text.push('\n');
    write_file(dir, name, &text)
}

/// One station's complete block of observations.
pub struct Series {
    pub station: String,
    pub names: Vec<String>,
    pub start: Quarter,
    pub data: DMatrix<f64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    fn quarter(&self, t: usize) -> Quarter {
        (0..t).fold(self.start, |q, _| q.next())
    }
}

pub fn load_series(d: &DataArgs) -> CliResult<Series> {
    let input = d
        .input
        .as_ref()
        .ok_or_else(|| usage("no input: pass --input FILE or set `input` in the config file"))?;
    let schema = CsvSchema { aggregation: d.aggregation, ..CsvSchema::default() };
    let mut panel = load_panel(input, &schema).with_context(|| format!("cannot load {}", input.display()))?;
    if d.fill_gaps {
        panel = panel.fill_linear();
    }
    let station = match &d.station {
        Some(s) => s.clone(),
        None => panel.stations()[0].name.clone(),
    };
    let names = if d.variables.is_empty() { panel.variables().to_vec() } else { d.variables.clone() };
    let s = panel.station_index(&station)?;
    let vars = names.iter().map(|v| panel.variable_index(v)).collect::<gwts::Result<Vec<_>>>()?;
    // stations share one index; trim quarters where this station has no complete row at either end
    let complete = |t: usize| vars.iter().all(|&v| !panel.is_missing(s, t, v));
    let first = (0..panel.len()).find(|&t| complete(t));
    let last = (0..panel.len()).rev().find(|&t| complete(t));
    let (Some(first), Some(last)) = (first, last) else {
        return Err(anyhow!("station `{station}` has no quarter with all of {} observed", names.join(", ")).into());
    };
    let panel = panel.slice_time(first, last + 1);
    let data = panel.extract_matrix(&station, &names).map_err(|e| match e {
        Error::MissingData { .. } => anyhow!("{e} (use --fill-gaps to interpolate interior gaps)"),
        e => e.into(),
    })?;
    Ok(Series { station, names, start: panel.index()[0], data })
}

fn model_path(model: &Option<PathBuf>, out: &Path) -> PathBuf {
    model.clone().unwrap_or_else(|| out.join("var_model.json"))
}

fn load_model(path: &Path) -> CliResult<VarModel> {
    if !path.exists() {
        return Err(anyhow!("no fitted model at {}; run `gwts fit` first or pass --model", path.display()).into());
    }
    Ok(VarModel::load(path).with_context(|| format!("cannot read model {}", path.display()))?)
}

pub struct FitOutcome {
    pub model: VarModel,
    pub selection: Option<LagSelection>,
}

pub fn fit(a: &FitArgs) -> CliResult<FitOutcome> {
    let p_max = check_positive("p-max", a.p_max)?;
    if let Some(lag) = a.lag {
        check_positive("lag", lag)?;
    }
    if !a.no_holdout {
        check_fraction("holdout", a.holdout)?;
    }
    let series = load_series(&a.data)?;
    let data = if a.difference > 0 { difference(&series.data, a.difference as usize)? } else { series.data.clone() };
    let n_train = if a.no_holdout { data.nrows() } else { holdout_train_len(data.nrows(), a.holdout) };
    let train = data.rows(0, n_train).into_owned();

    let selection = match select_lag_order(&train, p_max) {
        Ok(s) => Some(s),
        Err(e @ Error::SampleSize(_)) if a.lag.is_some() => {
            eprintln!("warning: lag selection skipped: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let p = match (a.lag, &selection) {
        (Some(lag), _) => lag as usize,
        (None, Some(s)) => s.consensus_p,
        (None, None) => unreachable!("selection errors propagate without --lag"),
    };
    let divisor = match a.divisor {
        Divisor::Df => SigmaDivisor::DegreesOfFreedom,
        Divisor::Obs => SigmaDivisor::Observations,
    };
    let model = fit_var_with(&train, p, &FitOptions { divisor, names: Some(series.names.clone()) })?;
    let stability = companion_stability(&model);

    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    model.save(a.out.join("var_model.json"))?;
    if let Some(s) = &selection {
        write_file(&a.out, "lag_selection.csv", &s.to_csv())?;
    }
    write_json(
        &a.out,
        "fit_summary.json",
        &json!({
            "station": series.station,
            "variables": series.names,
            "first_quarter": series.quarter(a.difference as usize).to_string(),
            "last_training_quarter": series.quarter(a.difference as usize + n_train - 1).to_string(),
            "observations": data.nrows(),
            "training_observations": n_train,
            "differenced": a.difference,
            "p": p,
            "lag_selection": selection.as_ref().map(|s| json!({
                "p_max": s.p_max,
                "consensus_p": s.consensus_p,
                "unanimous": s.unanimous(),
                "chosen": s.criteria.iter().map(|c| (c.name.clone(), c.chosen_p)).collect::<Vec<_>>(),
            })),
            "stability": stability,
        }),
    )?;

    println!("station {} · {} of {} observations · VAR({p})", series.station, n_train, data.nrows());
    if let Some(s) = &selection {
        let votes: Vec<String> = s.criteria.iter().map(|c| format!("{}={}", c.name, c.chosen_p)).collect();
        println!("lag selection: {} → p={}", votes.join(" "), s.consensus_p);
    }
    println!(
        "largest companion modulus {:.4} ({})",
        stability.moduli.first().copied().unwrap_or(0.0),
        if stability.stable { "stable" } else { "NOT stable" }
    );
    Ok(FitOutcome { model, selection })
}

#[derive(Serialize)]
pub struct Diagnostics {
    pub alpha: f64,
    pub portmanteau: DiagnosticReport,
    pub arch: DiagnosticReport,
    pub normality: NormalityTests,
    pub cusum: CusumSummary,
}

#[derive(Serialize)]
pub struct CusumSummary {
    pub boundary: f64,
    pub variables: Vec<String>,
    pub max_abs: Vec<f64>,
    pub crossed: Vec<bool>,
    pub structural_change: bool,
}

pub fn diagnose(a: &DiagnoseArgs) -> CliResult<Diagnostics> {
    check_fraction("alpha", a.alpha)?;
    let h = check_positive("portmanteau-lags", a.portmanteau_lags)?;
    let q = check_positive("arch-lags", a.arch_lags)?;
    let model = load_model(&model_path(&a.model, &a.out))?;

    let efp = ols_cusum(&model, a.alpha)?;
    let report = Diagnostics {
        alpha: a.alpha,
        portmanteau: portmanteau_test(&model, h, a.alpha)?,
        arch: arch_test(&model, q, a.alpha)?,
        normality: normality_tests(&model, a.alpha)?,
        cusum: CusumSummary {
            boundary: efp.boundary,
            variables: efp.names.clone(),
            max_abs: efp.max_abs.clone(),
            crossed: efp.crossed.clone(),
            structural_change: efp.any_crossed(),
        },
    };
    write_json(&a.out, "diagnostics.json", &report)?;
    write_file(&a.out, "efp.csv", &efp.to_csv())?;
    write_file(&a.out, "efp.svg", &efp_chart(&efp))?;

    for r in [&report.portmanteau, &report.arch]
        .into_iter()
        .chain(report.normality.reports())
    {
        println!(
            "{:<12} stat {:>10.4}  df {:>3}  p {:.4}{}",
            r.test_name,
            r.statistic,
            r.df,
            r.p_value,
            if r.reject { "  reject" } else { "" }
        );
    }
    println!(
        "ols-cusum    boundary {:.4}  {}",
        efp.boundary,
        if efp.any_crossed() { "boundary crossed" } else { "no crossing" }
    );
    Ok(report)
}

fn efp_chart(efp: &EfpPath) -> String {
    let series: Vec<(&str, &[f64])> = efp.names.iter().map(String::as_str).zip(efp.paths.iter().map(Vec::as_slice)).collect();
    plot::line_chart("OLS-CUSUM fluctuation process", &efp.times, &series, &[-efp.boundary, efp.boundary])
}

pub struct StructuralOutcome {
    pub granger: Vec<GrangerReport>,
    pub fevd: FevdResult,
}

pub fn structural(a: &StructuralArgs) -> CliResult<StructuralOutcome> {
    let h = check_positive("h", a.h)?;
    let fevd_h = check_positive("fevd-h", a.fevd_h)?;
    check_fraction("alpha", a.alpha)?;
    if a.boot > 0 {
        check_fraction("ci", a.ci)?;
    }
    let seed = match (a.boot, a.seed) {
        (0, s) => s.unwrap_or(0),
        (_, Some(s)) => s,
        (_, None) => {
            return Err(usage(
                "bootstrap bands need a seed: pass --seed, set `seed` in the config or GWTS_SEED (or --boot 0)",
            ))
        }
    };
    let mut model = load_model(&model_path(&a.model, &a.out))?;
    if !a.order.is_empty() {
        let perm = a.order.iter().map(|v| model.variable_index(v)).collect::<gwts::Result<Vec<_>>>()?;
        model = model.reorder(&perm)?;
    }
    let n = model.n();

    let causes: Vec<Vec<usize>> = if a.cause.is_empty() {
        (0..n).map(|i| vec![i]).collect()
    } else {
        vec![a.cause.iter().map(|v| model.variable_index(v)).collect::<gwts::Result<Vec<_>>>()?]
    };
    let granger = causes
        .iter()
        .map(|c| {
            let effect: Vec<usize> = (0..n).filter(|i| !c.contains(i)).collect();
            granger_test(&model, c, &effect, a.alpha)
        })
        .collect::<gwts::Result<Vec<_>>>()?;

    let opts = IrfOptions { horizon: h, n_boot: a.boot as usize, ci: a.ci, seed, allow_unstable: a.allow_unstable };
    let responses = irf(&model, &opts)?;
    let decomposition = fevd(&model, fevd_h)?;

    write_json(&a.out, "granger.json", &granger)?;
    write_file(&a.out, "irf.csv", &responses.to_csv())?;
    write_file(&a.out, "irf.svg", &irf_chart(&responses))?;
    write_file(&a.out, "fevd.csv", &decomposition.to_csv())?;
    write_file(&a.out, "fevd.svg", &fevd_chart(&decomposition))?;

    for g in &granger {
        println!(
            "granger {} → {}: F {:.4} ({}, {}) p {:.3e}{}",
            g.cause.join("+"),
            g.effect.join("+"),
            g.statistic,
            g.df1,
            g.df2,
            g.p_value,
            if g.reject { "  reject" } else { "" }
        );
    }
    if responses.unstable {
        eprintln!("warning: model is not stable; responses do not die out");
    }
    println!("irf: horizon {h}, {} bootstrap replicates · fevd: horizon {fevd_h}", opts.n_boot);
    Ok(StructuralOutcome { granger, fevd: decomposition })
}

fn irf_chart(r: &IrfResult) -> String {
    let n = r.var_names.len();
    let x: Vec<f64> = (0..=r.horizon()).map(|h| h as f64).collect();
    let mut panels = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            let title = format!("{} → {}", r.var_names[k], r.var_names[j]);
            let mid = r.path(k, j);
            let band = |b: &Option<Vec<DMatrix<f64>>>| b.as_ref().map(|b| b.iter().map(|m| m[(j, k)]).collect::<Vec<_>>());
            panels.push(match (band(&r.lower), band(&r.upper)) {
                (Some(lo), Some(hi)) => plot::band_chart(&title, &x, &mid, &lo, &hi),
                _ => plot::line_chart(&title, &x, &[("response", &mid)], &[0.0]),
            });
        }
    }
    plot::grid(&panels, n)
}

fn fevd_chart(f: &FevdResult) -> String {
    let n = f.var_names.len();
    let x: Vec<f64> = (1..=f.proportions.len()).map(|h| h as f64).collect();
    let panels: Vec<String> = (0..n)
        .map(|j| {
            let shares: Vec<Vec<f64>> = (0..n).map(|k| f.proportions.iter().map(|m| m[(j, k)]).collect()).collect();
            let layers: Vec<(&str, &[f64])> =
                f.var_names.iter().map(String::as_str).zip(shares.iter().map(Vec::as_slice)).collect();
            plot::stacked_area(&format!("FEVD of {}", f.var_names[j]), &x, &layers)
        })
        .collect();
    plot::grid(&panels, 1)
}

pub fn cdd(a: &CddArgs) -> CliResult<DependencyNetwork> {
    if !(a.threshold.is_finite() && a.threshold >= 0.0) {
        return Err(usage(format!("--threshold must be a non-negative number, got {}", a.threshold)));
    }
    let input = a
        .input
        .as_ref()
        .ok_or_else(|| usage("no input: pass --input FILE or set `input` in the config file"))?;
    let schema = CsvSchema { aggregation: a.aggregation, ..CsvSchema::default() };
    let mut panel = load_panel(input, &schema).with_context(|| format!("cannot load {}", input.display()))?;
    if a.fill_gaps {
        panel = panel.fill_linear();
    }
    let variable = a.variable.clone().unwrap_or_else(|| panel.variables()[0].clone());
    let network = build_network(&panel, &variable, a.threshold)?;

    write_file(&a.out, "edges.csv", &network.to_edge_csv()?)?;
    write_json(&a.out, "network.geojson", &network.to_geojson())?;
    write_json(
        &a.out,
        "cdd_summary.json",
        &json!({
            "variable": network.variable,
            "threshold": network.threshold,
            "stations": network.nodes.len(),
            "edges": network.edges.len(),
            "incomplete_stations": network.incomplete_stations,
            "failed_pairs": network.failed_pairs,
        }),
    )?;

    println!(
        "{} stations, {} edges at threshold {}",
        network.nodes.len(),
        network.edges.len(),
        network.threshold
    );
    if !network.incomplete_stations.is_empty() {
        eprintln!(
            "warning: {} stations skipped for gaps in `{variable}`: {}",
            network.incomplete_stations.len(),
            network.incomplete_stations.join(", ")
        );
    }
    for (u, v, e) in &network.failed_pairs {
        eprintln!("warning: {u} / {v}: {e}");
    }
    Ok(network)
}

pub fn shelflife(a: &ShelflifeArgs) -> CliResult<ShelfLifeResult> {
    if !(a.threshold.is_finite() && a.threshold >= 0.0) {
        return Err(usage(format!("--threshold must be a non-negative number, got {}", a.threshold)));
    }
    let p_max = check_positive("p-max", a.p_max)?;
    let period = check_positive("period", a.period)?;
    if a.min_train.is_none() {
        check_fraction("holdout", a.holdout)?;
    }
    let series = load_series(&a.data)?;
    let t = series.len();
    let target = match &a.target {
        Some(name) => series
            .names
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| usage(format!("target `{name}` is not among the variables {}", series.names.join(", "))))?,
        None => series.names.len() - 1,
    };
    let min_train = match a.min_train {
        Some(m) => check_positive("min-train", m)?,
        None => holdout_train_len(t, a.holdout),
    };
    let h_max = match a.h_max {
        Some(h) => check_positive("h-max", h)?,
        None => t.saturating_sub(min_train),
    };
    let forecaster: Box<dyn Forecaster> = match (a.forecaster, a.lag) {
        (ForecasterKind::SeasonalNaive, _) => Box::new(seasonal_naive_forecaster(period)?),
        (ForecasterKind::Var, Some(p)) => Box::new(VarForecaster::Fixed(check_positive("lag", p)?)),
        (ForecasterKind::Var, None) => Box::new(VarForecaster::Auto { p_max }),
    };
    let mode = if a.pooled { RegressionMode::Pooled } else { RegressionMode::PerHorizonMean };

    let ape = rolling_origin_errors(&series.data, forecaster.as_ref(), min_train, h_max, target)?;
    let result = estimate_shelf_life_with(&ape, a.threshold, mode)?;

    write_file(&a.out, "ape.csv", &ape.to_csv())?;
    write_json(
        &a.out,
        "shelf_life.json",
        &json!({
            "station": series.station,
            "target": series.names[target],
            "min_train": min_train,
            "h_max": h_max,
            "origins": t - min_train,
            "ape_rows": ape.rows.len(),
            "result": result,
        }),
    )?;
    let title = format!("APE vs horizon · {} · shelf life {}", result.forecaster, result.shelf_life_quarters);
    write_file(&a.out, "plot.svg", &plot::scatter_with_line(&title, &result.points, (result.intercept, result.slope), result.threshold))?;

    println!(
        "{}: APE ≈ {:.5} {} {:.5}·h → shelf life {} quarters{}",
        result.forecaster,
        result.intercept,
        if result.slope < 0.0 { '−' } else { '+' },
        result.slope.abs(),
        result.shelf_life_quarters,
        if result.censored { " (censored at the longest horizon)" } else { "" }
    );
    if ape.excluded > 0 {
        eprintln!("warning: {} APE rows with a zero actual value were excluded", ape.excluded);
    }
    Ok(result)
}
