//! Vector autoregression estimated equation by equation with least squares.
//!
//! The model is `x_t = c + Γ_1 x_{t-1} + … + Γ_p x_{t-p} + ε_t`. Every
//! equation shares the same regressors `[1, x_{t-1}', …, x_{t-p}']`, so one QR
//! factorisation of the regressor matrix solves all of them at once.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, qr_least_squares, xtx_inverse};

/// Divisor used for the residual covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaDivisor {
    /// `T - p - (np + 1)`.
    #[default]
    DegreesOfFreedom,
    /// `T - p`.
    Observations,
}

/// A fitted (or hand-specified) VAR(p).
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub var_names: Vec<String>,
    pub p: usize,
    pub intercept: DVector<f64>,
    /// `lags[i]` is Γ_{i+1}; entry `(j, k)` is the effect of variable `k` at lag `i+1` on equation `j`.
    pub lags: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
    /// `(T - p) × n` least-squares residuals; empty for hand-specified models.
    pub residuals: DMatrix<f64>,
    pub t_effective: usize,
    pub divisor: SigmaDivisor,
    /// The `T × n` data the model was fitted on; empty for hand-specified models.
    pub data: DMatrix<f64>,
}

/// Options for [`fit_var_with`].
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub divisor: SigmaDivisor,
    pub names: Option<Vec<String>>,
}

fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}

/// Regressor and response matrices for observations `start..T` (0-based).
pub(crate) fn lag_design(data: &DMatrix<f64>, p: usize, start: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = data.ncols();
    let rows = data.nrows() - start;
    let mut x = DMatrix::zeros(rows, 1 + n * p);
    let mut y = DMatrix::zeros(rows, n);
    for (r, t) in (start..data.nrows()).enumerate() {
        x[(r, 0)] = 1.0;
        for lag in 1..=p {
            for k in 0..n {
                x[(r, 1 + (lag - 1) * n + k)] = data[(t - lag, k)];
            }
        }
        for k in 0..n {
            y[(r, k)] = data[(t, k)];
        }
    }
    (x, y)
}

pub(crate) fn regressor_name(names: &[String], col: usize) -> String {
    if col == 0 {
        return "const".into();
    }
    let n = names.len();
    let lag = (col - 1) / n + 1;
    format!("{}.l{lag}", names[(col - 1) % n])
}

struct RawFit {
    coef: DMatrix<f64>,
    r: DMatrix<f64>,
    residuals: DMatrix<f64>,
}

fn raw_fit(data: &DMatrix<f64>, p: usize, start: usize, names: &[String]) -> Result<RawFit> {
    let (x, y) = lag_design(data, p, start);
    let sol = qr_least_squares(&x, &y, |c| regressor_name(names, c))?;
    let residuals = &y - &x * &sol.coef;
    Ok(RawFit {
        coef: sol.coef,
        r: sol.r,
        residuals,
    })
}

/// Fits a VAR(p) with an intercept and the default degrees-of-freedom divisor.
pub fn fit_var(data: &DMatrix<f64>, p: usize) -> Result<VarModel> {
    fit_var_with(data, p, &FitOptions::default())
}

pub fn fit_var_with(data: &DMatrix<f64>, p: usize, opts: &FitOptions) -> Result<VarModel> {
    let n = data.ncols();
    if p == 0 {
        return Err(Error::Domain("lag order p must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Domain("data has no columns".into()));
    }
    let names = match &opts.names {
        Some(v) if v.len() != n => {
            return Err(Error::Domain(format!("{} names for {n} variables", v.len())))
        }
        Some(v) => v.clone(),
        None => default_names(n),
    };
    let t = data.nrows();
    let k = n * p + 1;
    if t <= p + k {
        return Err(Error::SampleSize(format!(
            "VAR({p}) with {n} variables needs more than {} observations, got {t}",
            p + k
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("data contains non-finite values".into()));
    }
    let fit = raw_fit(data, p, p, &names)?;
    let t_eff = t - p;
    let divisor = match opts.divisor {
        SigmaDivisor::DegreesOfFreedom => (t_eff - k) as f64,
        SigmaDivisor::Observations => t_eff as f64,
    };
    let mut sigma = fit.residuals.transpose() * &fit.residuals / divisor;
    sigma = (&sigma + sigma.transpose()) * 0.5;

    let intercept = fit.coef.row(0).transpose();
    let lags = (0..p)
        .map(|i| fit.coef.rows(1 + i * n, n).transpose())
        .collect();
    Ok(VarModel {
        var_names: names,
        p,
        intercept,
        lags,
        sigma,
        residuals: fit.residuals,
        t_effective: t_eff,
        divisor: opts.divisor,
        data: data.clone(),
    })
}

impl VarModel {
    /// A model from known parameters, with no attached data or residuals.
    pub fn from_parts(intercept: DVector<f64>, lags: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = intercept.len();
        if lags.is_empty() {
            return Err(Error::Domain("at least one lag matrix required".into()));
        }
        if lags.iter().any(|g| g.shape() != (n, n)) || sigma.shape() != (n, n) {
            return Err(Error::Domain("parameter shapes disagree".into()));
        }
        Ok(Self {
            var_names: default_names(n),
            p: lags.len(),
            intercept,
            lags,
            sigma,
            residuals: DMatrix::zeros(0, n),
            t_effective: 0,
            divisor: SigmaDivisor::default(),
            data: DMatrix::zeros(0, n),
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n() {
            return Err(Error::Domain(format!("{} names for {} variables", names.len(), self.n())));
        }
        self.var_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.intercept.len()
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.var_names
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::NotFound(format!("variable `{name}`")))
    }

    /// Stacked `(1 + np) × n` coefficient matrix, one column per equation.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut b = DMatrix::zeros(1 + n * self.p, n);
        b.row_mut(0).copy_from(&self.intercept.transpose());
        for (i, g) in self.lags.iter().enumerate() {
            b.rows_mut(1 + i * n, n).copy_from(&g.transpose());
        }
        b
    }

    /// One-step-ahead fitted values for `t = p..T`.
    pub fn fitted(&self) -> DMatrix<f64> {
        let (x, _) = lag_design(&self.data, self.p, self.p);
        x * self.coefficient_matrix()
    }

    /// `(I - ΣΓ_i)^{-1} c`, the mean of a stable process.
    pub fn unconditional_mean(&self) -> Result<DVector<f64>> {
        let n = self.n();
        let mut a = DMatrix::identity(n, n);
        for g in &self.lags {
            a -= g;
        }
        a.lu()
            .solve(&self.intercept)
            .ok_or_else(|| Error::Singular("I - ΣΓ is singular (unit root)".into()))
    }

    /// The `np × np` companion matrix.
    pub fn companion(&self) -> DMatrix<f64> {
        let n = self.n();
        let np = n * self.p;
        let mut a = DMatrix::zeros(np, np);
        for (i, g) in self.lags.iter().enumerate() {
            a.view_mut((0, i * n), (n, n)).copy_from(g);
        }
        for i in n..np {
            a[(i, i - n)] = 1.0;
        }
        a
    }

    /// Model with variables permuted: new variable `i` is old variable `perm[i]`.
    pub fn reorder(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Domain(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        let sq = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(perm[i], perm[j])]);
        let cols = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), n, |t, j| m[(t, perm[j])]);
        Ok(Self {
            var_names: perm.iter().map(|&i| self.var_names[i].clone()).collect(),
            p: self.p,
            intercept: DVector::from_fn(n, |i, _| self.intercept[perm[i]]),
            lags: self.lags.iter().map(sq).collect(),
            sigma: sq(&self.sigma),
            residuals: cols(&self.residuals),
            t_effective: self.t_effective,
            divisor: self.divisor,
            data: cols(&self.data),
        })
    }

    /// `(Z'Z)^{-1}` for the model's regressor matrix.
    pub(crate) fn regressor_gram_inverse(&self) -> Result<DMatrix<f64>> {
        if self.data.nrows() == 0 {
            return Err(Error::Domain("model has no attached data".into()));
        }
        let fit = raw_fit(&self.data, self.p, self.p, &self.var_names)?;
        xtx_inverse(&fit.r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Domain(format!("ragged rows in `{what}`")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// On-disk JSON layout of a [`VarModel`]; matrices are row-major nested arrays.
#[derive(Serialize, Deserialize)]
struct ModelDoc {
    var_names: Vec<String>,
    p: usize,
    t_effective: usize,
    sigma_divisor: SigmaDivisor,
    intercept: Vec<f64>,
    lags: Vec<Vec<Vec<f64>>>,
    sigma: Vec<Vec<f64>>,
    residuals: Vec<Vec<f64>>,
    data: Vec<Vec<f64>>,
}

impl From<&VarModel> for ModelDoc {
    fn from(m: &VarModel) -> Self {
        Self {
            var_names: m.var_names.clone(),
            p: m.p,
            t_effective: m.t_effective,
            sigma_divisor: m.divisor,
            intercept: m.intercept.iter().copied().collect(),
            lags: m.lags.iter().map(rows_of).collect(),
            sigma: rows_of(&m.sigma),
            residuals: rows_of(&m.residuals),
            data: rows_of(&m.data),
        }
    }
}

impl TryFrom<ModelDoc> for VarModel {
    type Error = Error;

    fn try_from(d: ModelDoc) -> Result<Self> {
        let n = d.intercept.len();
        if d.var_names.len() != n || d.lags.len() != d.p || d.p == 0 {
            return Err(Error::Domain("inconsistent model document".into()));
        }
        let lags = d
            .lags
            .iter()
            .map(|g| {
                let m = from_rows(g, n, "lags")?;
                if m.nrows() != n {
                    return Err(Error::Domain("lag matrix must be n × n".into()));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        let sigma = from_rows(&d.sigma, n, "sigma")?;
        if sigma.nrows() != n {
            return Err(Error::Domain("sigma must be n × n".into()));
        }
        Ok(Self {
            var_names: d.var_names,
            p: d.p,
            intercept: DVector::from_vec(d.intercept),
            lags,
            sigma,
            residuals: from_rows(&d.residuals, n, "residuals")?,
            t_effective: d.t_effective,
            divisor: d.sigma_divisor,
            data: from_rows(&d.data, n, "data")?,
        })
    }
}

/// Information-criterion table from [`select_lag_order`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagSelection {
    pub p_max: usize,
    pub criteria: Vec<CriterionScores>,
    pub consensus_p: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionScores {
    pub name: String,
    /// `scores[p - 1]` is the criterion value at lag `p`.
    pub scores: Vec<f64>,
    pub chosen_p: usize,
}

impl LagSelection {
    pub fn chosen(&self, name: &str) -> Option<usize> {
        self.criteria.iter().find(|c| c.name == name).map(|c| c.chosen_p)
    }

    pub fn unanimous(&self) -> bool {
        self.criteria.iter().all(|c| c.chosen_p == self.consensus_p)
    }

    /// CSV with one row per candidate lag and one column per criterion.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p");
        for c in &self.criteria {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for p in 1..=self.p_max {
            out.push_str(&p.to_string());
            for c in &self.criteria {
                out.push(',');
                out.push_str(&c.scores[p - 1].to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Minimum series length accepted by [`select_lag_order`].
pub fn min_length_for_selection(n: usize, p_max: usize) -> usize {
    n * p_max + p_max + 2
}

/// Scores AIC, BIC, HQ and FPE for `p = 1..=p_max` on the common sample
/// `t = p_max+1..T`, so every candidate is compared on the same observations.
pub fn select_lag_order(data: &DMatrix<f64>, p_max: usize) -> Result<LagSelection> {
    let n = data.ncols();
    let t = data.nrows();
    if p_max == 0 {
        return Err(Error::Domain("p_max must be at least 1".into()));
    }
    let min_t = min_length_for_selection(n, p_max);
    if t < min_t {
        return Err(Error::SampleSize(format!(
            "lag selection with {n} variables and p_max = {p_max} needs at least {min_t} observations, got {t}"
        )));
    }
    let names = default_names(n);
    let t_star = (t - p_max) as f64;
    let mut aic = Vec::with_capacity(p_max);
    let mut bic = Vec::with_capacity(p_max);
    let mut hq = Vec::with_capacity(p_max);
    let mut fpe = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let fit = raw_fit(data, p, p_max, &names)?;
        let sigma = fit.residuals.transpose() * &fit.residuals / t_star;
        let det = sigma.determinant();
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::Singular(format!("residual covariance at p = {p} has determinant {det}")));
        }
        let ln_det = det.ln();
        let k = (p * n * n + n) as f64;
        let k_eq = (n * p + 1) as f64;
        aic.push(ln_det + 2.0 * k / t_star);
        bic.push(ln_det + k * t_star.ln() / t_star);
        hq.push(ln_det + 2.0 * k * t_star.ln().ln() / t_star);
        fpe.push(((t_star + k_eq) / (t_star - k_eq)).powi(n as i32) * det);
    }
    let criteria: Vec<CriterionScores> = [("AIC", aic), ("BIC", bic), ("HQ", hq), ("FPE", fpe)]
        .into_iter()
        .map(|(name, scores)| {
            let chosen_p = argmin(&scores) + 1;
            CriterionScores {
                name: name.into(),
                scores,
                chosen_p,
            }
        })
        .collect();

    let mut votes = vec![0usize; p_max + 1];
    for c in &criteria {
        votes[c.chosen_p] += 1;
    }
    // first maximum wins, i.e. ties go to the smaller lag
    let consensus_p = (1..=p_max).fold(1, |best, p| if votes[p] > votes[best] { p } else { best });
    Ok(LagSelection {
        p_max,
        criteria,
        consensus_p,
    })
}

fn argmin(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < x[best] { i } else { best })
}

/// Companion-matrix eigenvalue moduli.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stability {
    /// Sorted descending.
    pub moduli: Vec<f64>,
    pub stable: bool,
}

pub fn companion_stability(model: &VarModel) -> Stability {
    let mut moduli: Vec<f64> = eigenvalues(&model.companion()).iter().map(|c| c.re.hypot(c.im)).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let stable = moduli.first().map_or(true, |&m| m < 1.0);
    Stability { moduli, stable }
}

// nalgebra's Schur iteration can stall on exactly nilpotent matrices (e.g. a
// zero lag polynomial); retrying on a shifted copy sidesteps that.
fn eigenvalues(c: &DMatrix<f64>) -> Vec<nalgebra::Complex<f64>> {
    let n = c.nrows();
    for s in [0.0, 0.618_033_988_7, -0.414_213_562_3, 1.732_050_807_5] {
        let shifted = c + DMatrix::identity(n, n) * s;
        if let Some(schur) = nalgebra::linalg::Schur::try_new(shifted, f64::EPSILON, 10_000) {
            return schur.complex_eigenvalues().iter().map(|z| z - s).collect();
        }
    }
    // Not reached in practice; fall back to the unbounded solver.
    c.complex_eigenvalues().iter().copied().collect()
}

/// Iterated point forecasts for `h` steps. `history` holds the last `p`
/// observations in chronological order.
pub fn forecast(model: &VarModel, history: &DMatrix<f64>, h: usize) -> Result<DMatrix<f64>> {
    let n = model.n();
    if h < 1 {
        return Err(Error::Domain("forecast horizon must be at least 1".into()));
    }
    if history.nrows() != model.p || history.ncols() != n {
        return Err(Error::Domain(format!(
            "history must be {} × {n}, got {} × {}",
            model.p,
            history.nrows(),
            history.ncols()
        )));
    }
    // buf[k] is the observation k steps before the next one to forecast
    let mut buf: Vec<DVector<f64>> = (0..model.p)
        .map(|k| history.row(model.p - 1 - k).transpose())
        .collect();
    let mut out = DMatrix::zeros(h, n);
    for step in 0..h {
        let mut next = model.intercept.clone();
        for (g, x) in model.lags.iter().zip(&buf) {
            next += g * x;
        }
        out.row_mut(step).copy_from(&next.transpose());
        buf.pop();
        buf.insert(0, next);
    }
    Ok(out)
}

/// Forecasts from the end of the model's own data.
pub fn forecast_from_end(model: &VarModel, h: usize) -> Result<DMatrix<f64>> {
    let t = model.data.nrows();
    if t < model.p {
        return Err(Error::Domain("model has no attached data".into()));
    }
    forecast(model, &model.data.rows(t - model.p, model.p).into_owned(), h)
}

/// Simulates `t` observations from a VAR with Gaussian innovations `N(0, sigma)`,
/// discarding `burn_in` initial draws. The process starts at zero.
pub fn simulate<R: Rng + ?Sized>(
    intercept: &DVector<f64>,
    lags: &[DMatrix<f64>],
    sigma: &DMatrix<f64>,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = intercept.len();
    let chol = cholesky_lower(sigma, "innovation covariance")?;
    let total = t + burn_in;
    let p = lags.len();
    let mut out = DMatrix::zeros(total, n);
    for s in 0..total {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = intercept + &chol * z;
        for (i, g) in lags.iter().enumerate().take(p) {
            if s > i {
                x += g * out.row(s - 1 - i).transpose();
            }
        }
        out.row_mut(s).copy_from(&x.transpose());
    }
    Ok(out.rows(burn_in, t).into_owned())
}

/// `d`-th order first differences along time.
pub fn difference(data: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let mut out = data.clone();
    for _ in 0..d {
        if out.nrows() < 2 {
            return Err(Error::SampleSize("series too short to difference".into()));
        }
        out = out.rows(1, out.nrows() - 1) - out.rows(0, out.nrows() - 1);
    }
    Ok(out)
}
