//! One-shot run of the whole pipeline on the two station fixtures, with a
//! table of published versus computed values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gwts::copula::cdd_from_series;
use gwts::dataio::{load_panel, CsvSchema, TimeSeriesPanel};
use serde::Serialize;

use crate::commands::{self, write_file, write_json};
use crate::{
    CddArgs, CliResult, DataArgs, DiagnoseArgs, FitArgs, ForecasterKind, ReproduceArgs, ShelflifeArgs,
    StructuralArgs,
};

pub const LEVELS_FIXTURE: &str = "patiyapura.csv";
pub const NETWORK_FIXTURE: &str = "vadodara_gwl.csv";
const PUBLISHED_ORDER: u64 = 4;
const DEFAULT_SEED: u64 = 42;

/// Station pairs with CDD above 0.95 as published: `(U, V, ρ_{U→V}, ρ_{V→U})`.
pub const PUBLISHED_PAIRS: [(&str, &str, f64, f64); 24] = [
    ("Alladpur", "Chisadia", 1.0, 0.94683),
    ("Alladpur", "Segwa Chowki I", 0.96587, 0.9674),
    ("Amreshwar", "Handod I", 0.96479, 0.96443),
    ("Amreshwar", "Makni", 0.97426, 0.974),
    ("Amreshwar", "Segwa Chouki II", 0.98572, 0.98474),
    ("Amreshwar", "Vadodara II", 0.96374, 0.96193),
    ("Asala", "Chitral PZ II", 0.97568, 0.9752),
    ("Baladgam", "Makni", 0.95694, 0.95908),
    ("Bhindol", "Kosindra Pz I", 0.99311, 0.9933),
    ("Bhindol", "Pitha", 0.96079, 0.96143),
    ("Bhindol", "Vadtalav PZ", 0.97362, 0.97328),
    ("Bodeli", "Kosindra PZ I", 0.96573, 0.96685),
    ("Chisadia", "Panwad", 0.9631, 0.96486),
    ("Chitral PZ II", "Makni", 0.99218, 0.99237),
    ("Chitral PZ II", "Vadodara I", 0.96172, 0.96216),
    ("Devat (Thadgam)", "Saidivasana", 0.95406, 0.96142),
    ("Ghayaj II", "Makni", 0.99612, 0.99629),
    ("Handod I", "Karamasiya", 0.95198, 0.95206),
    ("Handod I", "Segwa Chouki II", 0.98175, 0.98154),
    ("Handod I", "Vadodara I", 0.95313, 0.95351),
    ("Kaprali", "Pitha", 0.97459, 0.97362),
    ("Karamasiya", "Kosindra PZ I", 0.95942, 0.95911),
    ("Pavi", "Vadtalav PZ", 0.97843, 0.9787),
    ("Segwa chouki II", "Vadtalav PZ", 0.97647, 0.97773),
];

#[derive(Debug, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub quantity: String,
    pub published: String,
    pub computed: String,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub status: &'static str,
    pub note: &'static str,
    pub seed: u64,
    pub checks: Vec<Check>,
}

const DOWNGRADE_NOTE: &str = "DOWNGRADED: fixture cross-checks (criteria 11-16) are best-effort. \
The station data are not redistributed with this repository and their preprocessing \
(quarterly aggregation, variable ordering, test lag counts) is only partly documented upstream, \
so published values need not be reproducible exactly. The property and oracle suite \
(criteria 1-10, `cargo test --test acceptance`) is the hard gate.";

fn normalize(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn find_variable(names: &[String], needles: &[&str], what: &str) -> CliResult<String> {
    names
        .iter()
        .find(|v| {
            let v = v.to_lowercase();
            needles.iter().any(|n| v.contains(n))
        })
        .cloned()
        .ok_or_else(|| anyhow!("{LEVELS_FIXTURE}: no {what} variable (looked for a name containing {needles:?})").into())
}

fn check(criterion: u8, quantity: &str, published: String, computed: String, tolerance: &str, pass: bool) -> Check {
    Check { criterion, quantity: quantity.into(), published, computed, tolerance: tolerance.into(), pass }
}

pub fn require_fixtures(dir: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let levels = dir.join(LEVELS_FIXTURE);
    let network = dir.join(NETWORK_FIXTURE);
    for f in [&levels, &network] {
        if !f.is_file() {
            return Err(anyhow!(
                "missing fixture {}: build it with scripts/fetch_fixtures.sh (see README, section Fixtures) \
                 or point --fixtures at the directory holding {LEVELS_FIXTURE} and {NETWORK_FIXTURE}",
                f.display()
            )
            .into());
        }
    }
    Ok((levels, network))
}

pub fn run(a: &ReproduceArgs) -> CliResult<()> {
    let (levels, network_csv) = require_fixtures(&a.fixtures)?;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let var_dir = a.out.join("var");
    let data = DataArgs { input: Some(levels.clone()), ..DataArgs::default() };
    let mut checks = Vec::new();

    // 11: lag order on the training part
    let fit = commands::fit(&FitArgs {
        data: data.clone(),
        auto_lag: true,
        p_max: 8,
        holdout: 0.7,
        out: var_dir.clone(),
        ..FitArgs::default()
    })?;
    let names = fit.model.var_names.clone();
    let sel = fit.selection.as_ref().expect("automatic lag choice always selects");
    let votes: Vec<String> = sel.criteria.iter().map(|c| format!("{}={}", c.name, c.chosen_p)).collect();
    checks.push(check(
        11,
        "lag order (training set, p_max 8)",
        "p=4, unanimous".into(),
        format!("p={} ({})", sel.consensus_p, votes.join(" ")),
        "exact",
        sel.unanimous() && sel.consensus_p == 4,
    ));

    // 12: residual diagnostics
    let diag = commands::diagnose(&DiagnoseArgs {
        model: None,
        alpha: 0.05,
        portmanteau_lags: gwts::diagnostics::DEFAULT_PORTMANTEAU_LAGS as u64,
        arch_lags: gwts::diagnostics::DEFAULT_ARCH_LAGS as u64,
        out: var_dir.clone(),
    })?;
    for (name, published, got, tol) in [
        ("portmanteau p-value", 0.1163, diag.portmanteau.p_value, 0.02),
        ("ARCH-LM p-value", 0.7252, diag.arch.p_value, 0.05),
        ("skewness p-value", 0.239, diag.normality.skewness.p_value, 0.05),
    ] {
        checks.push(check(12, name, published.to_string(), format!("{got:.4}"), &format!("±{tol}"), (got - published).abs() <= tol));
    }

    // 13, 14: Granger and FEVD
    let temperature = find_variable(&names, &["temp"], "temperature")?;
    let precipitation = find_variable(&names, &["prec", "rain"], "precipitation")?;
    let gwl = find_variable(&names, &["gwl", "ground", "level"], "groundwater level")?;
    let st = commands::structural(&StructuralArgs {
        model: None,
        h: 20,
        fevd_h: 10,
        boot: a.boot,
        ci: 0.95,
        seed: Some(seed),
        cause: vec![temperature.clone()],
        order: Vec::new(),
        alpha: 0.05,
        allow_unstable: true,
        out: var_dir.clone(),
    })?;
    let granger_p = st.granger[0].p_value;
    checks.push(check(
        13,
        "Granger: temperature → others, p-value",
        "0.00003916".into(),
        format!("{granger_p:.3e}"),
        "≤ 0.001",
        granger_p <= 0.001,
    ));
    let idx = |v: &str| names.iter().position(|n| n == v).expect("variable comes from the model");
    let (g, p, t) = (idx(&gwl), idx(&precipitation), idx(&temperature));
    let share = st.fevd.share(10, g, p) + st.fevd.share(10, g, t);
    checks.push(check(
        14,
        "FEVD of GWL at h=10: precipitation + temperature",
        "≈ 0.20".into(),
        format!("{share:.4}"),
        "[0.10, 0.30]",
        (0.10..=0.30).contains(&share),
    ));

    // 15: dependency network
    let cdd_dir = a.out.join("cdd");
    let net = commands::cdd(&CddArgs {
        input: Some(network_csv.clone()),
        variable: None,
        threshold: 0.95,
        out: cdd_dir.clone(),
        ..CddArgs::default()
    })?;
    let panel = load_panel(&network_csv, &CsvSchema::default())
        .with_context(|| format!("cannot load {}", network_csv.display()))?;
    let (recovered, table) = compare_pairs(&panel, &net.variable)?;
    write_file(&cdd_dir, "published_pairs.csv", &table)?;
    checks.push(check(
        15,
        "published CDD pairs recovered (threshold 0.95)",
        format!("{} pairs", PUBLISHED_PAIRS.len()),
        format!("{recovered} of {} within tolerance; {} edges in total", PUBLISHED_PAIRS.len(), net.edges.len()),
        "each ρ ±0.01",
        recovered == PUBLISHED_PAIRS.len(),
    ));

    // 16: shelf life of the published VAR(4), whatever order was selected above
    let sl = commands::shelflife(&ShelflifeArgs {
        data,
        forecaster: ForecasterKind::Var,
        lag: Some(PUBLISHED_ORDER),
        p_max: 8,
        period: 4,
        threshold: 0.05,
        holdout: 0.7,
        out: a.out.join("shelflife"),
        ..ShelflifeArgs::default()
    })?;
    checks.push(check(
        16,
        &format!("shelf life of VAR({PUBLISHED_ORDER}) in quarters"),
        "11".into(),
        format!("{}{}", sl.shelf_life_quarters, if sl.censored { " (censored)" } else { "" }),
        "±1",
        sl.shelf_life_quarters.abs_diff(11) <= 1,
    ));

    let summary = Summary { status: "DOWNGRADED", note: DOWNGRADE_NOTE, seed, checks };
    write_json(&a.out, "summary.json", &summary)?;
    write_file(&a.out, "summary.md", &render(&summary))?;
    println!();
    for c in &summary.checks {
        println!(
            "[{}] {:>2} {}: published {}, computed {}",
            if c.pass { "MATCH" } else { "MISS " },
            c.criterion,
            c.quantity,
            c.published,
            c.computed
        );
    }
    println!("{DOWNGRADE_NOTE}");
    println!("report written to {}", a.out.display());
    Ok(())
}

/// Computes CDD for each published pair directly, so pairs that fall below the
/// threshold still get a computed value.
fn compare_pairs(panel: &TimeSeriesPanel, variable: &str) -> CliResult<(usize, String)> {
    let v = panel.variable_index(variable)?;
    let lookup = |name: &str| {
        panel
            .stations()
            .iter()
            .position(|s| normalize(&s.name) == normalize(name))
    };
    let complete = |s: usize| panel.series(s, v).into_iter().collect::<Option<Vec<f64>>>();
    let mut recovered = 0;
    let mut table = String::from("station_u,station_v,published_uv,published_vu,computed_uv,computed_vu,within_tolerance,note\n");
    for (u, w, pub_uv, pub_vu) in PUBLISHED_PAIRS {
        let computed = match (lookup(u), lookup(w)) {
            (Some(su), Some(sw)) => match (complete(su), complete(sw)) {
                (Some(x), Some(y)) => cdd_from_series(&x, &y).map(|r| (r.rho_u_to_v, r.rho_v_to_u)).map_err(|e| e.to_string()),
                _ => Err("series has gaps".to_string()),
            },
            (None, _) => Err(format!("station `{u}` not in fixture")),
            (_, None) => Err(format!("station `{w}` not in fixture")),
        };
        let (cu, cv, ok, note) = match computed {
            Ok((cu, cv)) => {
                // a published 1 is a rounded value; accept anything from 0.995
                let close = |c: f64, p: f64| if p >= 1.0 { c >= 0.995 } else { (c - p).abs() <= 0.01 };
                let ok = close(cu, pub_uv) && close(cv, pub_vu);
                (cu.to_string(), cv.to_string(), ok, String::new())
            }
            Err(e) => (String::new(), String::new(), false, e),
        };
        recovered += usize::from(ok);
        let _ = writeln!(table, "\"{u}\",\"{w}\",{pub_uv},{pub_vu},{cu},{cv},{ok},\"{note}\"");
    }
    Ok((recovered, table))
}

fn render(s: &Summary) -> String {
    let mut out = String::from("# Reproduction report\n\n");
    let _ = writeln!(out, "**Status: {}**\n\n{}\n\nBootstrap seed: {}\n", s.status, s.note, s.seed);
    out.push_str("| # | quantity | published | computed | tolerance | match |\n|---|---|---|---|---|---|\n");
    for c in &s.checks {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            c.criterion,
            c.quantity,
            c.published,
            c.computed,
            c.tolerance,
            if c.pass { "yes" } else { "no" }
        );
    }
    out.push_str(
        "\nArtifacts: `var/` (model, lag selection, diagnostics, EFP, Granger, IRF, FEVD), \
         `cdd/` (edges, GeoJSON, published-pair comparison), `shelflife/` (APE table, fit, plot).\n",
    );
    out
}
