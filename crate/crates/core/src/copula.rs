//! Copula directional dependence between pairs of stations.
//!
//! Each raw series is mapped to pseudo-observations on (0, 1). The copula
//! regression function `r(u) = E[V | U = u]` is estimated by a beta
//! regression of `v` on `u` (logit mean link, constant precision) fitted by
//! maximum likelihood, which is the Gaussian-copula beta regression with an
//! independence working correlation. The directional dependence `ρ²(U→V)` is
//! the share of `Var(V)` explained by `r̂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::dataio::{StationId, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::stats::{mean, variance};

const BOUNDARY_EPS: f64 = 1e-10;

/// Rank-transformed series with values strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSeries {
    pub u: Vec<f64>,
    pub source: String,
}

impl PseudoSeries {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Wraps values already in (0, 1), nudging any within `1e-10` of the boundary inward.
    pub fn from_unit(u: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if let Some(x) = u.iter().find(|x| !(**x >= 0.0 && **x <= 1.0)) {
            return Err(Error::Domain(format!("pseudo-observation {x} outside [0, 1]")));
        }
        Ok(Self {
            u: u.into_iter().map(nudge).collect(),
            source: source.into(),
        })
    }
}

fn nudge(x: f64) -> f64 {
    x.clamp(BOUNDARY_EPS, 1.0 - BOUNDARY_EPS)
}

/// `rank(x_i) / (T + 1)` with tied values sharing their average rank.
pub fn pseudo_observations(x: &[f64]) -> Result<PseudoSeries> {
    pseudo_observations_named(x, "")
}

pub fn pseudo_observations_named(x: &[f64], source: &str) -> Result<PseudoSeries> {
    let t = x.len();
    if t < 3 {
        return Err(Error::SampleSize(format!("pseudo-observations need at least 3 values, got {t}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("series contains non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; t];
    let mut i = 0;
    while i < t {
        let mut j = i;
        while j + 1 < t && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean(i+1..=j+1)
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let denom = (t + 1) as f64;
    Ok(PseudoSeries {
        u: ranks.into_iter().map(|r| nudge(r / denom)).collect(),
        source: source.to_string(),
    })
}

/// Beta-regression fit of `v` on `u`: `logit μ_t = β₀ + β₁ u_t`, `v_t ~ Beta(μ_t φ, (1−μ_t) φ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcbrFit {
    pub beta0: f64,
    pub beta1: f64,
    pub phi: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Euclidean norm of the mean log-likelihood gradient in `(β₀, β₁, ln φ)`.
    pub grad_norm: f64,
    /// `r̂(u_t) = μ_t`.
    pub fitted: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct GcbrOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for GcbrOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
        }
    }
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Precomputed response transforms.
struct Response<'a> {
    u: &'a [f64],
    ln_v: Vec<f64>,
    ln_1mv: Vec<f64>,
}

impl<'a> Response<'a> {
    fn new(u: &'a [f64], v: &[f64]) -> Self {
        Self {
            u,
            ln_v: v.iter().map(|x| x.ln()).collect(),
            ln_1mv: v.iter().map(|x| (-x).ln_1p()).collect(),
        }
    }

    fn mu(&self, t: usize, params: &[f64; 3]) -> f64 {
        logistic(params[0] + params[1] * self.u[t]).clamp(1e-15, 1.0 - 1e-15)
    }

    fn loglik(&self, params: &[f64; 3]) -> f64 {
        let phi = params[2].exp();
        let lg_phi = ln_gamma(phi);
        (0..self.u.len())
            .map(|t| {
                let mu = self.mu(t, params);
                let a = mu * phi;
                let b = (1.0 - mu) * phi;
                lg_phi - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * self.ln_v[t] + (b - 1.0) * self.ln_1mv[t]
            })
            .sum()
    }

    fn gradient(&self, params: &[f64; 3]) -> [f64; 3] {
        let phi = params[2].exp();
        let dg_phi = digamma(phi);
        let mut g = [0.0; 3];
        for t in 0..self.u.len() {
            let mu = self.mu(t, params);
            let a = mu * phi;
            let b = (1.0 - mu) * phi;
            let (dg_a, dg_b) = (digamma(a), digamma(b));
            let y_star = self.ln_v[t] - self.ln_1mv[t];
            let d_mu = phi * (y_star - (dg_a - dg_b));
            let d_eta = d_mu * mu * (1.0 - mu);
            g[0] += d_eta;
            g[1] += d_eta * self.u[t];
            let d_phi = dg_phi - mu * dg_a - (1.0 - mu) * dg_b + mu * self.ln_v[t] + (1.0 - mu) * self.ln_1mv[t];
            g[2] += d_phi * phi;
        }
        g
    }
}

/// Log-likelihood of the beta regression at `(β₀, β₁, ln φ)`.
pub fn gcbr_loglik(u: &[f64], v: &[f64], params: [f64; 3]) -> f64 {
    Response::new(u, v).loglik(&params)
}

/// Analytic gradient of [`gcbr_loglik`] with respect to `(β₀, β₁, ln φ)`.
pub fn gcbr_gradient(u: &[f64], v: &[f64], params: [f64; 3]) -> [f64; 3] {
    Response::new(u, v).gradient(&params)
}

fn norm3(x: &[f64; 3]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Moment-matched start: least squares of `logit v` on `u`, then
/// `φ = mean(μ(1−μ)/σ²_t) − 1` with delta-method variances.
fn start_values(u: &[f64], v: &[f64]) -> [f64; 3] {
    let t = u.len() as f64;
    let y: Vec<f64> = v.iter().map(|x| (x / (1.0 - x)).ln()).collect();
    let (mu_u, mu_y) = (mean(u), mean(&y));
    let sxx: f64 = u.iter().map(|x| (x - mu_u).powi(2)).sum();
    let sxy: f64 = u.iter().zip(&y).map(|(x, z)| (x - mu_u) * (z - mu_y)).sum();
    let b1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b0 = mu_y - b1 * mu_u;
    let s2 = u
        .iter()
        .zip(&y)
        .map(|(x, z)| (z - b0 - b1 * x).powi(2))
        .sum::<f64>()
        / (t - 2.0).max(1.0);
    let phi = u
        .iter()
        .map(|x| {
            let mu = logistic(b0 + b1 * x);
            let var = s2 * (mu * (1.0 - mu)).powi(2);
            mu * (1.0 - mu) / var.max(1e-300) - 1.0
        })
        .sum::<f64>()
        / t;
    [b0, b1, phi.clamp(0.5, 1e8).ln()]
}

/// Maximum-likelihood beta regression of `v` on `u` by BFGS on the mean
/// negative log-likelihood in `(β₀, β₁, ln φ)`.
pub fn fit_gcbr(u: &PseudoSeries, v: &PseudoSeries) -> Result<GcbrFit> {
    fit_gcbr_with(u, v, &GcbrOptions::default())
}

pub fn fit_gcbr_with(u: &PseudoSeries, v: &PseudoSeries, opts: &GcbrOptions) -> Result<GcbrFit> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!("series lengths differ: {} vs {}", u.len(), v.len())));
    }
    if u.len() < 3 {
        return Err(Error::SampleSize("beta regression needs at least 3 observations".into()));
    }
    for s in [u, v] {
        if s.u.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
            return Err(Error::Domain("pseudo-observations must lie strictly inside (0, 1)".into()));
        }
    }
    if variance(&v.u) < 1e-12 {
        return Err(Error::Degenerate("response series is (nearly) constant".into()));
    }
    if variance(&u.u) < 1e-12 {
        return Err(Error::Degenerate("predictor series is (nearly) constant".into()));
    }

    let resp = Response::new(&u.u, &v.u);
    let scale = 1.0 / u.len() as f64;
    let objective = |x: &[f64; 3]| -resp.loglik(x) * scale;
    let grad = |x: &[f64; 3]| resp.gradient(x).map(|g| -g * scale);

    let mut x = start_values(&u.u, &v.u);
    let mut f = objective(&x);
    let mut g = grad(&x);
    let mut h_inv = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut iterations = 0;
    let mut converged = norm3(&g) < opts.grad_tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut d = [0.0; 3];
        for i in 0..3 {
            d[i] = -dot3(&h_inv[i], &g);
        }
        if dot3(&d, &g) >= 0.0 {
            // lost descent direction: restart from steepest descent
            h_inv = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            d = g.map(|v| -v);
        }
        let slope = dot3(&d, &g);
        let g_norm = norm3(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = [x[0] + step * d[0], x[1] + step * d[1], x[2] + step * d[2]];
            let f_trial = objective(&trial);
            if f_trial.is_finite() {
                let g_trial = grad(&trial);
                // near the optimum f is flat to rounding, so a gradient decrease also counts
                if f_trial <= f + 1e-4 * step * slope || (step == 1.0 && norm3(&g_trial) < g_norm && f_trial <= f + 1e-12 * f.abs().max(1.0)) {
                    accepted = Some((trial, f_trial, g_trial));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s = [x_new[0] - x[0], x_new[1] - x[1], x_new[2] - x[2]];
        let y = [g_new[0] - g[0], g_new[1] - g[1], g_new[2] - g[2]];
        let sy = dot3(&s, &y);
        if sy > 1e-300 {
            if iterations == 1 {
                let scale0 = sy / dot3(&y, &y);
                for (i, row) in h_inv.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = if i == j { scale0 } else { 0.0 };
                    }
                }
            }
            let rho = 1.0 / sy;
            let hy = [dot3(&h_inv[0], &y), dot3(&h_inv[1], &y), dot3(&h_inv[2], &y)];
            let yhy = dot3(&y, &hy);
            for i in 0..3 {
                for j in 0..3 {
                    h_inv[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
        converged = norm3(&g) < opts.grad_tol;
    }

    let grad_norm = norm3(&g);
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            grad_norm,
            last: x.to_vec(),
        });
    }
    let fitted = (0..u.len()).map(|t| resp.mu(t, &x)).collect();
    Ok(GcbrFit {
        beta0: x[0],
        beta1: x[1],
        phi: x[2].exp(),
        loglik: -f / scale,
        converged,
        iterations,
        grad_norm,
        fitted,
    })
}

/// Which CDD estimator a reported value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CddEstimator {
    /// `12 mean(r̂²) − 3`.
    MomentForm,
    /// `Var(r̂) / Var(v)`.
    VarianceRatioForm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CddResult {
    pub station_u: String,
    pub station_v: String,
    /// Reported values, clamped to [0, 1].
    pub rho_u_to_v: f64,
    pub rho_v_to_u: f64,
    /// Unclamped variance-ratio values.
    pub raw_u_to_v: f64,
    pub raw_v_to_u: f64,
    pub moment_u_to_v: f64,
    pub moment_v_to_u: f64,
    pub estimator: CddEstimator,
    /// Regression of `v` on `u`.
    pub fit_v_on_u: GcbrFit,
    /// Regression of `u` on `v`.
    pub fit_u_on_v: GcbrFit,
}

fn variance_ratio(fitted: &[f64], response: &[f64]) -> f64 {
    variance(fitted) / variance(response)
}

fn moment_form(fitted: &[f64]) -> f64 {
    12.0 * fitted.iter().map(|r| r * r).sum::<f64>() / fitted.len() as f64 - 3.0
}

/// Directional dependence in both directions between two pseudo-series.
pub fn cdd(u: &PseudoSeries, v: &PseudoSeries) -> Result<CddResult> {
    let fit_v_on_u = fit_gcbr(u, v)?;
    let fit_u_on_v = fit_gcbr(v, u)?;
    let raw_u_to_v = variance_ratio(&fit_v_on_u.fitted, &v.u);
    let raw_v_to_u = variance_ratio(&fit_u_on_v.fitted, &u.u);
    Ok(CddResult {
        station_u: u.source.clone(),
        station_v: v.source.clone(),
        rho_u_to_v: raw_u_to_v.clamp(0.0, 1.0),
        rho_v_to_u: raw_v_to_u.clamp(0.0, 1.0),
        raw_u_to_v,
        raw_v_to_u,
        moment_u_to_v: moment_form(&fit_v_on_u.fitted),
        moment_v_to_u: moment_form(&fit_u_on_v.fitted),
        estimator: CddEstimator::VarianceRatioForm,
        fit_v_on_u,
        fit_u_on_v,
    })
}

/// [`cdd`] on raw series, via their pseudo-observations.
pub fn cdd_from_series(x: &[f64], y: &[f64]) -> Result<CddResult> {
    cdd(&pseudo_observations_named(x, "x")?, &pseudo_observations_named(y, "y")?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub station_u: String,
    pub station_v: String,
    pub rho_u_to_v: f64,
    pub rho_v_to_u: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependencyNetwork {
    pub variable: String,
    pub threshold: f64,
    /// Stations with a complete series for the variable.
    pub nodes: Vec<StationId>,
    /// Lexicographic by `(station_u, station_v)`, with `station_u < station_v`.
    pub edges: Vec<NetworkEdge>,
    /// Stations left out because their series has gaps.
    pub incomplete_stations: Vec<String>,
    /// Pairs whose regression failed, with the error message.
    pub failed_pairs: Vec<(String, String, String)>,
}

impl DependencyNetwork {
    /// `station_u,station_v,rho_uv,rho_vu`.
    pub fn to_edge_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["station_u", "station_v", "rho_uv", "rho_vu"])?;
        for e in &self.edges {
            w.write_record([
                e.station_u.clone(),
                e.station_v.clone(),
                e.rho_u_to_v.to_string(),
                e.rho_v_to_u.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// GeoJSON FeatureCollection: a Point per geolocated station and a
    /// LineString per edge whose endpoints are both geolocated.
    pub fn to_geojson(&self) -> Value {
        let coords = |name: &str| {
            self.nodes
                .iter()
                .find(|s| s.name == name)
                .and_then(StationId::coordinates)
        };
        let mut features: Vec<Value> = self
            .nodes
            .iter()
            .filter_map(|s| {
                let (lat, lon) = s.coordinates()?;
                Some(json!({
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [lon, lat]},
                    "properties": {"station": s.name},
                }))
            })
            .collect();
        for e in &self.edges {
            if let (Some((la, lo)), Some((lb, lob))) = (coords(&e.station_u), coords(&e.station_v)) {
                features.push(json!({
                    "type": "Feature",
                    "geometry": {"type": "LineString", "coordinates": [[lo, la], [lob, lb]]},
                    "properties": {
                        "station_u": e.station_u,
                        "station_v": e.station_v,
                        "rho_uv": e.rho_u_to_v,
                        "rho_vu": e.rho_v_to_u,
                    },
                }));
            }
        }
        json!({"type": "FeatureCollection", "features": features})
    }
}

/// CDD for every unordered pair of stations with a complete `variable`
/// series; an edge is kept when either direction reaches `threshold`.
pub fn build_network(panel: &TimeSeriesPanel, variable: &str, threshold: f64) -> Result<DependencyNetwork> {
    let v = panel.variable_index(variable)?;
    let mut complete = Vec::new();
    let mut incomplete_stations = Vec::new();
    for (s, st) in panel.stations().iter().enumerate() {
        let series: Option<Vec<f64>> = panel.series(s, v).into_iter().collect();
        match series {
            Some(x) if x.len() >= 3 => complete.push((st.clone(), x)),
            _ => incomplete_stations.push(st.name.clone()),
        }
    }
    complete.sort_by(|a, b| a.0.name.cmp(&b.0.name));
    let pseudo: Vec<Result<PseudoSeries>> = complete
        .iter()
        .map(|(st, x)| pseudo_observations_named(x, &st.name))
        .collect();

    let pairs: Vec<(usize, usize)> = (0..complete.len())
        .flat_map(|i| (i + 1..complete.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<CddResult>> = pairs
        .par_iter()
        .map(|&(i, j)| match (&pseudo[i], &pseudo[j]) {
            (Ok(a), Ok(b)) => cdd(a, b),
            (Err(e), _) | (_, Err(e)) => Err(Error::Degenerate(e.to_string())),
        })
        .collect();

    let mut edges = Vec::new();
    let mut failed_pairs = Vec::new();
    for (&(i, j), r) in pairs.iter().zip(results) {
        let (a, b) = (&complete[i].0.name, &complete[j].0.name);
        match r {
            Ok(c) if c.rho_u_to_v.max(c.rho_v_to_u) >= threshold => edges.push(NetworkEdge {
                station_u: a.clone(),
                station_v: b.clone(),
                rho_u_to_v: c.rho_u_to_v,
                rho_v_to_u: c.rho_v_to_u,
            }),
            Ok(_) => {}
            Err(e) => failed_pairs.push((a.clone(), b.clone(), e.to_string())),
        }
    }
    Ok(DependencyNetwork {
        variable: variable.to_string(),
        threshold,
        nodes: complete.into_iter().map(|(s, _)| s).collect(),
        edges,
        incomplete_stations,
        failed_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pseudo_examples() {
        assert_eq!(pseudo_observations(&[3.0, 1.0, 2.0]).unwrap().u, vec![0.75, 0.25, 0.5]);
        assert_eq!(pseudo_observations(&[5.0, 5.0, 1.0]).unwrap().u, vec![0.625, 0.625, 0.25]);
        assert!(matches!(pseudo_observations(&[1.0, 2.0]), Err(Error::SampleSize(_))));
    }

    #[test]
    fn pseudo_rank_invariant() {
        let x: [f64; 6] = [0.3, -1.2, 2.5, 0.0, 1.1, -0.7];
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert_eq!(pseudo_observations(&x).unwrap().u, pseudo_observations(&ex).unwrap().u);
    }

    #[test]
    fn constant_response_is_degenerate() {
        let u = pseudo_observations(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = pseudo_observations(&[7.0; 4]).unwrap();
        assert!(matches!(fit_gcbr(&u, &v), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fit_recovers_simulated_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b0, b1, phi) = (-1.0, 2.0, 20.0);
        let u: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.01..0.99)).collect();
        let v: Vec<f64> = u
            .iter()
            .map(|x| {
                let mu = logistic(b0 + b1 * x);
                let beta = rand_distr::Beta::new(mu * phi, (1.0 - mu) * phi).unwrap();
                rng.sample(beta)
            })
            .collect();
        let fit = fit_gcbr(&PseudoSeries::from_unit(u, "u").unwrap(), &PseudoSeries::from_unit(v, "v").unwrap()).unwrap();
        assert!(fit.converged && fit.grad_norm < 1e-8);
        assert_abs_diff_eq!(fit.beta0, b0, epsilon = 0.1);
        assert_abs_diff_eq!(fit.beta1, b1, epsilon = 0.2);
        assert!((fit.phi - phi).abs() < 3.0, "phi {}", fit.phi);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..200).map(|_| rng.gen_range(0.01..0.99)).collect();
        let v: Vec<f64> = (0..200).map(|_| rng.gen_range(0.01..0.99)).collect();
        let p = [0.3, -0.8, 1.5];
        let g = gcbr_gradient(&u, &v, p);
        for i in 0..3 {
            let (mut hi, mut lo) = (p, p);
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            let fd = (gcbr_loglik(&u, &v, hi) - gcbr_loglik(&u, &v, lo)) / 2e-6;
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn swapping_inputs_swaps_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..300).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + 0.3 * rng.gen::<f64>()).collect();
        let u = pseudo_observations_named(&x, "a").unwrap();
        let v = pseudo_observations_named(&y, "b").unwrap();
        let ab = cdd(&u, &v).unwrap();
        let ba = cdd(&v, &u).unwrap();
        assert_eq!(ab.rho_u_to_v, ba.rho_v_to_u);
        assert_eq!(ab.rho_v_to_u, ba.rho_u_to_v);
        assert!((0.0..=1.0).contains(&ab.rho_u_to_v));
    }

    fn small_panel() -> TimeSeriesPanel {
        let mut csv = String::from("station,date,variable,value,latitude,longitude\n");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        for (name, noise, coords) in [("A", 0.01, "22.1,73.2"), ("B", 0.02, "22.3,73.4"), ("C", 5.0, ","), ("D", 0.0, ",")] {
            for (t, b) in base.iter().enumerate() {
                let y = 2000 + t / 4;
                let q = t % 4 + 1;
                let value = if name == "D" && t == 5 { String::new() } else { (b + noise * rng.gen::<f64>()).to_string() };
                csv.push_str(&format!("{name},{y}-Q{q},gwl,{value},{coords}\n"));
            }
        }
        crate::dataio::read_panel(csv.as_bytes(), &Default::default()).unwrap()
    }

    #[test]
    fn network_thresholds() {
        let panel = small_panel();
        let all = build_network(&panel, "gwl", 0.0).unwrap();
        assert_eq!(all.nodes.len(), 3);
        assert_eq!(all.incomplete_stations, vec!["D".to_string()]);
        assert_eq!(all.edges.len(), 3);
        let names: Vec<_> = all.edges.iter().map(|e| (e.station_u.as_str(), e.station_v.as_str())).collect();
        assert_eq!(names, vec![("A", "B"), ("A", "C"), ("B", "C")]);

        assert!(build_network(&panel, "gwl", 1.01).unwrap().edges.is_empty());

        let strong = build_network(&panel, "gwl", 0.9).unwrap();
        assert_eq!(strong.edges.len(), 1);
        let csv = strong.to_edge_csv().unwrap();
        assert!(csv.starts_with("station_u,station_v,rho_uv,rho_vu\nA,B,"));
        let gj = strong.to_geojson();
        let feats = gj["features"].as_array().unwrap();
        assert_eq!(feats.iter().filter(|f| f["geometry"]["type"] == "Point").count(), 2);
        assert_eq!(feats.iter().filter(|f| f["geometry"]["type"] == "LineString").count(), 1);
    }
}
