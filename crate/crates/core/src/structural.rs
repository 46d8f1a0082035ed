//! Granger causality, orthogonalised impulse responses and forecast-error
//! variance decomposition.
//!
//! Shocks are identified recursively through the lower Cholesky factor of the
//! residual covariance, so results depend on variable order. Use
//! [`VarModel::reorder`] to choose a different ordering.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, spd_inverse};
use crate::stats::{f_sf, quantile};
use crate::var::{companion_stability, fit_var_with, FitOptions, VarModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrangerReport {
    pub cause: Vec<String>,
    pub effect: Vec<String>,
    pub statistic: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

fn check_sets(n: usize, cause: &[usize], effect: &[usize]) -> Result<()> {
    if cause.is_empty() || effect.is_empty() {
        return Err(Error::Domain("cause and effect sets must be non-empty".into()));
    }
    if let Some(&i) = cause.iter().chain(effect).find(|&&i| i >= n) {
        return Err(Error::Domain(format!("variable index {i} out of range for {n} variables")));
    }
    if cause.iter().any(|c| effect.contains(c)) {
        return Err(Error::Domain("cause and effect sets overlap".into()));
    }
    Ok(())
}

/// Wald test (F form) that every lag of the `cause` variables has a zero
/// coefficient in every `effect` equation.
///
/// With `J = p·|cause|·|effect|` restrictions θ, `F = θ' V⁻¹ θ / J` where
/// `V = Σ_u ⊗ (Z'Z)⁻¹` restricted to the tested coefficients; the reference
/// distribution is `F(J, nT* − n(np+1))`.
pub fn granger_test(model: &VarModel, cause: &[usize], effect: &[usize], alpha: f64) -> Result<GrangerReport> {
    let n = model.n();
    check_sets(n, cause, effect)?;
    let gram_inv = model.regressor_gram_inverse()?;
    let b = model.coefficient_matrix();
    // (row in B, equation)
    let mut idx = Vec::new();
    for &e in effect {
        for lag in 1..=model.p {
            for &c in cause {
                idx.push((1 + (lag - 1) * n + c, e));
            }
        }
    }
    let j = idx.len();
    let theta = DVector::from_fn(j, |a, _| b[idx[a]]);
    let v = DMatrix::from_fn(j, j, |a, c| {
        let (ra, ea) = idx[a];
        let (rc, ec) = idx[c];
        model.sigma[(ea, ec)] * gram_inv[(ra, rc)]
    });
    let v_inv = spd_inverse(&v, "restricted-coefficient covariance")?;
    let wald = (theta.transpose() * v_inv * &theta)[(0, 0)];
    let df1 = j as f64;
    let df2 = (n * model.t_effective) as f64 - (n * (n * model.p + 1)) as f64;
    let statistic = wald / df1;
    let p_value = f_sf(statistic, df1, df2);
    Ok(GrangerReport {
        cause: cause.iter().map(|&i| model.var_names[i].clone()).collect(),
        effect: effect.iter().map(|&i| model.var_names[i].clone()).collect(),
        statistic,
        df1,
        df2,
        p_value,
        alpha,
        reject: p_value < alpha,
    })
}

/// Fits a VAR(p) to `data` and runs [`granger_test`].
pub fn granger_test_data(
    data: &DMatrix<f64>,
    p: usize,
    cause: &[usize],
    effect: &[usize],
    alpha: f64,
) -> Result<GrangerReport> {
    check_sets(data.ncols(), cause, effect)?;
    let model = fit_var_with(data, p, &FitOptions::default())?;
    granger_test(&model, cause, effect, alpha)
}

/// [`granger_test`] with variables given by name.
pub fn granger_test_named<S: AsRef<str>>(
    model: &VarModel,
    cause: &[S],
    effect: &[S],
    alpha: f64,
) -> Result<GrangerReport> {
    let lookup = |v: &[S]| v.iter().map(|s| model.variable_index(s.as_ref())).collect::<Result<Vec<_>>>();
    granger_test(model, &lookup(cause)?, &lookup(effect)?, alpha)
}

/// MA coefficients `Ψ_0 = I`, `Ψ_h = Σ_{i=1..min(h,p)} Γ_i Ψ_{h−i}`.
pub fn ma_matrices(model: &VarModel, horizon: usize) -> Vec<DMatrix<f64>> {
    let n = model.n();
    let mut psi: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    psi.push(DMatrix::identity(n, n));
    for h in 1..=horizon {
        let mut acc = DMatrix::zeros(n, n);
        for i in 1..=h.min(model.p) {
            acc += &model.lags[i - 1] * &psi[h - i];
        }
        psi.push(acc);
    }
    psi
}

/// Orthogonalised responses `Θ_h = Ψ_h P`, `P = chol(Σ)`, for `h = 0..=horizon`.
pub fn orthogonal_responses(model: &VarModel, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    let p = cholesky_lower(&model.sigma, "residual covariance")?;
    Ok(ma_matrices(model, horizon).into_iter().map(|psi| psi * &p).collect())
}

#[derive(Debug, Clone)]
pub struct IrfOptions {
    pub horizon: usize,
    /// Bootstrap replicates; 0 disables confidence bands.
    pub n_boot: usize,
    pub ci: f64,
    pub seed: u64,
    pub allow_unstable: bool,
}

impl Default for IrfOptions {
    fn default() -> Self {
        Self {
            horizon: 20,
            n_boot: 100,
            ci: 0.95,
            seed: 0,
            allow_unstable: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrfResult {
    pub var_names: Vec<String>,
    /// `responses[h][(j, k)]`: response of variable `j` at horizon `h` to a
    /// one-standard-deviation orthogonal shock in variable `k`.
    pub responses: Vec<DMatrix<f64>>,
    pub lower: Option<Vec<DMatrix<f64>>>,
    pub upper: Option<Vec<DMatrix<f64>>>,
    pub ci_level: f64,
    pub n_boot: usize,
    /// Set when the model's companion matrix has an eigenvalue on or outside the unit circle.
    pub unstable: bool,
}

impl IrfResult {
    pub fn horizon(&self) -> usize {
        self.responses.len() - 1
    }

    /// Response path of `response` to a shock in `impulse`.
    pub fn path(&self, impulse: usize, response: usize) -> Vec<f64> {
        self.responses.iter().map(|m| m[(response, impulse)]).collect()
    }

    /// Tidy CSV: `horizon,impulse,response,value,lower,upper`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon,impulse,response,value,lower,upper\n");
        let n = self.var_names.len();
        for (h, m) in self.responses.iter().enumerate() {
            for k in 0..n {
                for j in 0..n {
                    let band = |b: &Option<Vec<DMatrix<f64>>>| {
                        b.as_ref().map(|b| b[h][(j, k)].to_string()).unwrap_or_default()
                    };
                    out.push_str(&format!(
                        "{h},{},{},{},{},{}\n",
                        self.var_names[k],
                        self.var_names[j],
                        m[(j, k)],
                        band(&self.lower),
                        band(&self.upper)
                    ));
                }
            }
        }
        out
    }
}

/// Orthogonalised impulse responses with residual-bootstrap percentile bands.
///
/// Each replicate resamples the centred residuals with replacement, rebuilds a
/// series recursively from the first `p` observations, refits the VAR and
/// recomputes the responses. Replicate `r` draws from ChaCha8 stream `r` of
/// `seed`, so results are identical whether replicates run in parallel or not.
/// Bands are widened where needed so they always contain the point estimate.
pub fn irf(model: &VarModel, opts: &IrfOptions) -> Result<IrfResult> {
    if opts.horizon < 1 {
        return Err(Error::Domain("IRF horizon must be at least 1".into()));
    }
    if opts.n_boot > 0 && !(opts.ci > 0.0 && opts.ci < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {}", opts.ci)));
    }
    let unstable = !companion_stability(model).stable;
    if unstable && !opts.allow_unstable {
        return Err(Error::Domain(
            "model is not stable; set allow_unstable to compute responses anyway".into(),
        ));
    }
    let responses = orthogonal_responses(model, opts.horizon)?;
    let (lower, upper) = if opts.n_boot > 0 {
        let (lo, hi) = bootstrap_bands(model, &responses, opts)?;
        (Some(lo), Some(hi))
    } else {
        (None, None)
    };
    Ok(IrfResult {
        var_names: model.var_names.clone(),
        responses,
        lower,
        upper,
        ci_level: opts.ci,
        n_boot: opts.n_boot,
        unstable,
    })
}

fn bootstrap_bands(
    model: &VarModel,
    point: &[DMatrix<f64>],
    opts: &IrfOptions,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let data = &model.data;
    if data.nrows() == 0 || model.residuals.nrows() == 0 {
        return Err(Error::Domain("bootstrap bands need a model fitted to data".into()));
    }
    let n = model.n();
    let p = model.p;
    let resid = &model.residuals;
    let t_res = resid.nrows();
    let means = DVector::from_fn(n, |j, _| resid.column(j).mean());
    let fit_opts = FitOptions {
        divisor: model.divisor,
        names: Some(model.var_names.clone()),
    };

    let replicate = |r: usize| -> Result<Vec<DMatrix<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let mut sim = DMatrix::zeros(data.nrows(), n);
        sim.rows_mut(0, p).copy_from(&data.rows(0, p));
        for t in p..data.nrows() {
            let draw = rng.gen_range(0..t_res);
            let mut x = &model.intercept + resid.row(draw).transpose() - &means;
            for (i, g) in model.lags.iter().enumerate() {
                x += g * sim.row(t - 1 - i).transpose();
            }
            sim.row_mut(t).copy_from(&x.transpose());
        }
        let refit = fit_var_with(&sim, p, &fit_opts)?;
        orthogonal_responses(&refit, opts.horizon)
    };
    let draws = (0..opts.n_boot)
        .into_par_iter()
        .map(replicate)
        .collect::<Result<Vec<_>>>()?;

    let lo_q = (1.0 - opts.ci) / 2.0;
    let hi_q = 1.0 - lo_q;
    let mut lower = Vec::with_capacity(point.len());
    let mut upper = Vec::with_capacity(point.len());
    for (h, est) in point.iter().enumerate() {
        let mut lo = DMatrix::zeros(n, n);
        let mut hi = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let mut v: Vec<f64> = draws.iter().map(|d| d[h][(j, k)]).collect();
                v.sort_by(f64::total_cmp);
                lo[(j, k)] = quantile(&v, lo_q).min(est[(j, k)]);
                hi[(j, k)] = quantile(&v, hi_q).max(est[(j, k)]);
            }
        }
        lower.push(lo);
        upper.push(hi);
    }
    Ok((lower, upper))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FevdResult {
    pub var_names: Vec<String>,
    /// `proportions[h - 1][(j, k)]`: share of variable `j`'s `h`-step forecast
    /// error variance due to shock `k`.
    pub proportions: Vec<DMatrix<f64>>,
}

impl FevdResult {
    pub fn share(&self, horizon: usize, variable: usize, shock: usize) -> f64 {
        self.proportions[horizon - 1][(variable, shock)]
    }

    /// `horizon,variable,shock,share`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon,variable,shock,share\n");
        for (h, m) in self.proportions.iter().enumerate() {
            for j in 0..self.var_names.len() {
                for k in 0..self.var_names.len() {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        h + 1,
                        self.var_names[j],
                        self.var_names[k],
                        m[(j, k)]
                    ));
                }
            }
        }
        out
    }
}

/// Forecast-error variance decomposition for horizons `1..=horizon`.
pub fn fevd(model: &VarModel, horizon: usize) -> Result<FevdResult> {
    if horizon < 1 {
        return Err(Error::Domain("FEVD horizon must be at least 1".into()));
    }
    let theta = orthogonal_responses(model, horizon - 1)?;
    let n = model.n();
    let mut cum = DMatrix::<f64>::zeros(n, n);
    let mut proportions = Vec::with_capacity(horizon);
    for th in &theta {
        cum += th.component_mul(th);
        let mut m = cum.clone();
        for j in 0..n {
            let total: f64 = cum.row(j).sum();
            m.row_mut(j).scale_mut(1.0 / total);
        }
        proportions.push(m);
    }
    Ok(FevdResult {
        var_names: model.var_names.clone(),
        proportions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::simulate;
    use approx::assert_abs_diff_eq;

    fn white_noise_model(n: usize) -> VarModel {
        VarModel::from_parts(DVector::zeros(n), vec![DMatrix::zeros(n, n)], DMatrix::identity(n, n)).unwrap()
    }

    fn fitted_model(seed: u64) -> VarModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.2, 0.3, 0.1, 0.0, -0.2, 0.4]);
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.0]);
        let data = simulate(&DVector::from_vec(vec![1.0, 0.0, -1.0]), &[g], &sigma, 150, 50, &mut rng).unwrap();
        crate::var::fit_var(&data, 2).unwrap()
    }

    #[test]
    fn white_noise_irf() {
        let r = irf(&white_noise_model(3), &IrfOptions { horizon: 5, n_boot: 0, ..Default::default() }).unwrap();
        assert_eq!(r.responses[0], DMatrix::identity(3, 3));
        for h in 1..=5 {
            assert!(r.responses[h].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn impact_response_is_cholesky_factor() {
        let m = fitted_model(1);
        let r = irf(&m, &IrfOptions { horizon: 4, n_boot: 0, ..Default::default() }).unwrap();
        let p = m.sigma.clone().cholesky().unwrap().l();
        assert!((&r.responses[0] - p).amax() < 1e-12);
    }

    #[test]
    fn bootstrap_reproducible_and_brackets() {
        let m = fitted_model(2);
        let opts = IrfOptions { horizon: 6, n_boot: 30, seed: 99, ..Default::default() };
        let a = irf(&m, &opts).unwrap();
        let b = irf(&m, &opts).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let (lo, hi) = (a.lower.as_ref().unwrap(), a.upper.as_ref().unwrap());
        for h in 0..=6 {
            for i in 0..9 {
                assert!(lo[h][i] <= a.responses[h][i] && a.responses[h][i] <= hi[h][i]);
            }
        }
        let c = irf(&m, &IrfOptions { seed: 100, ..opts }).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn unstable_needs_opt_in() {
        let unit = VarModel::from_parts(DVector::zeros(2), vec![DMatrix::identity(2, 2)], DMatrix::identity(2, 2)).unwrap();
        let opts = IrfOptions { horizon: 3, n_boot: 0, ..Default::default() };
        assert!(irf(&unit, &opts).is_err());
        let r = irf(&unit, &IrfOptions { allow_unstable: true, ..opts }).unwrap();
        assert!(r.unstable);
        assert_eq!(r.responses[3], DMatrix::identity(2, 2));
    }

    #[test]
    fn non_pd_sigma_is_singular() {
        let m = VarModel::from_parts(DVector::zeros(2), vec![DMatrix::zeros(2, 2)], DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(fevd(&m, 3), Err(Error::Singular(_))));
        assert!(matches!(
            irf(&m, &IrfOptions { horizon: 2, n_boot: 0, ..Default::default() }),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn fevd_first_horizon_from_cholesky() {
        let m = fitted_model(3);
        let f = fevd(&m, 8).unwrap();
        let p = m.sigma.clone().cholesky().unwrap().l();
        for j in 0..3 {
            let denom: f64 = (0..3).map(|k| p[(j, k)].powi(2)).sum();
            for k in 0..3 {
                assert_abs_diff_eq!(f.share(1, j, k), p[(j, k)].powi(2) / denom, epsilon = 1e-15);
            }
        }
        // first variable is only moved by its own shock on impact
        assert_abs_diff_eq!(f.share(1, 0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fevd_decoupled_system() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.3, 0.8]));
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5]));
        let m = VarModel::from_parts(DVector::zeros(3), vec![g], s).unwrap();
        let f = fevd(&m, 10).unwrap();
        for h in 1..=10 {
            for j in 0..3 {
                assert_abs_diff_eq!(f.share(h, j, j), 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn permutation_round_trip() {
        let m = fitted_model(4);
        let perm = [2, 0, 1];
        let mut inv = [0; 3];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let back = m.reorder(&perm).unwrap().reorder(&inv).unwrap();
        let a = orthogonal_responses(&m, 10).unwrap();
        let b = orthogonal_responses(&back, 10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).amax() < 1e-14);
        }
        let permuted = orthogonal_responses(&m.reorder(&perm).unwrap(), 10).unwrap();
        assert!((&permuted[3] - &a[3]).amax() > 1e-6);
    }

    #[test]
    fn granger_rejects_overlap_and_names() {
        let m = fitted_model(5);
        assert!(matches!(granger_test(&m, &[0], &[0, 1], 0.05), Err(Error::Domain(_))));
        assert!(matches!(granger_test(&m, &[], &[1], 0.05), Err(Error::Domain(_))));
        let r = granger_test_named(&m, &["y1"], &["y2", "y3"], 0.05).unwrap();
        assert_eq!(r.df1, 4.0);
        assert_eq!(r.df2, (3 * 148 - 3 * 7) as f64);
        assert!((0.0..=1.0).contains(&r.p_value));
    }
}
