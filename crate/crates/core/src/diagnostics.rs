//! Residual diagnostics for a fitted VAR.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, qr_least_squares, spd_inverse};
use crate::stats::chi2_sf;
use crate::var::{regressor_name, VarModel};

/// Default Portmanteau lag count.
pub const DEFAULT_PORTMANTEAU_LAGS: usize = 16;
/// Default ARCH-LM lag count.
pub const DEFAULT_ARCH_LAGS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub test_name: String,
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl DiagnosticReport {
    fn chi2(test_name: &str, statistic: f64, df: f64, alpha: f64) -> Self {
        let p_value = chi2_sf(statistic, df);
        Self {
            test_name: test_name.into(),
            statistic,
            df,
            p_value,
            alpha,
            reject: p_value < alpha,
        }
    }

    /// Same test judged at a different significance level.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.reject = self.p_value < alpha;
        self
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn model_residuals(model: &VarModel) -> Result<&DMatrix<f64>> {
    if model.residuals.nrows() == 0 {
        return Err(Error::Domain("model has no residuals (was it fitted?)".into()));
    }
    Ok(&model.residuals)
}

/// Lag-`j` residual autocovariance `(1/T) Σ_{t>j} u_t u_{t-j}'`.
fn autocov(u: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let t = u.nrows();
    let a = u.rows(j, t - j);
    let b = u.rows(0, t - j);
    a.transpose() * b / t as f64
}

/// Small-sample adjusted multivariate Portmanteau test on a VAR's residuals.
pub fn portmanteau_test(model: &VarModel, h_lags: usize, alpha: f64) -> Result<DiagnosticReport> {
    portmanteau(model_residuals(model)?, h_lags, model.p, alpha)
}

/// Portmanteau statistic `T² Σ_j tr(C_j' C_0⁻¹ C_j C_0⁻¹)/(T−j)` with
/// `n²(h − p)` degrees of freedom. `p = 0` treats `residuals` as raw white noise.
pub fn portmanteau(residuals: &DMatrix<f64>, h_lags: usize, p: usize, alpha: f64) -> Result<DiagnosticReport> {
    check_alpha(alpha)?;
    if h_lags <= p {
        return Err(Error::Domain(format!("Portmanteau lags ({h_lags}) must exceed the VAR order ({p})")));
    }
    let (t, n) = residuals.shape();
    if t <= h_lags {
        return Err(Error::SampleSize(format!("{t} residuals for {h_lags} Portmanteau lags")));
    }
    let c0 = autocov(residuals, 0);
    let c0_inv = spd_inverse(&c0, "lag-0 residual covariance")?;
    let tf = t as f64;
    let mut q = 0.0;
    for j in 1..=h_lags {
        let cj = autocov(residuals, j);
        let tr = (cj.transpose() * &c0_inv * &cj * &c0_inv).trace();
        q += tr / (tf - j as f64);
    }
    q *= tf * tf;
    let df = (n * n * (h_lags - p)) as f64;
    Ok(DiagnosticReport::chi2("portmanteau", q, df, alpha))
}

/// Multivariate ARCH-LM test on a VAR's residuals.
pub fn arch_test(model: &VarModel, q_lags: usize, alpha: f64) -> Result<DiagnosticReport> {
    arch_lm(model_residuals(model)?, q_lags, alpha)
}

/// Regresses `vech(u_t u_t')` on a constant and `q` of its own lags;
/// statistic `½ N n(n+1) R²_m` with `R²_m = 1 − 2/(n(n+1)) tr(Ω̂ Ω̂₀⁻¹)`,
/// χ² with `q n²(n+1)²/4` degrees of freedom.
pub fn arch_lm(residuals: &DMatrix<f64>, q_lags: usize, alpha: f64) -> Result<DiagnosticReport> {
    check_alpha(alpha)?;
    if q_lags == 0 {
        return Err(Error::Domain("ARCH lags must be at least 1".into()));
    }
    let (t, n) = residuals.shape();
    let m = n * (n + 1) / 2;
    let vech = DMatrix::from_fn(t, m, |s, c| {
        let (i, j) = vech_index(n, c);
        residuals[(s, i)] * residuals[(s, j)]
    });
    let k = 1 + q_lags * m;
    if t <= q_lags + k {
        return Err(Error::SampleSize(format!(
            "ARCH-LM with {q_lags} lags on {n} series needs more than {} residuals, got {t}",
            q_lags + k
        )));
    }
    let rows = t - q_lags;
    let y = vech.rows(q_lags, rows).into_owned();
    let x = DMatrix::from_fn(rows, k, |r, c| {
        if c == 0 {
            1.0
        } else {
            let lag = (c - 1) / m + 1;
            vech[(r + q_lags - lag, (c - 1) % m)]
        }
    });
    let sol = qr_least_squares(&x, &y, |c| format!("vech regressor {c}"))?;
    let e = &y - &x * &sol.coef;
    let nf = rows as f64;
    let omega1 = e.transpose() * &e / nf;
    let means = DVector::from_fn(m, |c, _| y.column(c).mean());
    let centered = DMatrix::from_fn(rows, m, |r, c| y[(r, c)] - means[c]);
    let omega0 = centered.transpose() * &centered / nf;
    let omega0_inv = spd_inverse(&omega0, "covariance of squared residuals")?;
    let r2 = 1.0 - 2.0 / (n * (n + 1)) as f64 * (omega1 * omega0_inv).trace();
    let stat = 0.5 * nf * (n * (n + 1)) as f64 * r2;
    let df = (q_lags * n * n * (n + 1) * (n + 1)) as f64 / 4.0;
    Ok(DiagnosticReport::chi2("arch_lm", stat, df, alpha))
}

/// `(row, col)` of the `c`-th element of the column-wise lower-triangular vech.
fn vech_index(n: usize, mut c: usize) -> (usize, usize) {
    for j in 0..n {
        let len = n - j;
        if c < len {
            return (j + c, j);
        }
        c -= len;
    }
    unreachable!("vech index out of range")
}

/// The multivariate Jarque–Bera test and its skewness and kurtosis parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalityTests {
    pub jarque_bera: DiagnosticReport,
    pub skewness: DiagnosticReport,
    pub kurtosis: DiagnosticReport,
}

impl NormalityTests {
    pub fn reports(&self) -> [&DiagnosticReport; 3] {
        [&self.jarque_bera, &self.skewness, &self.kurtosis]
    }
}

pub fn normality_tests(model: &VarModel, alpha: f64) -> Result<NormalityTests> {
    normality(model_residuals(model)?, alpha)
}

/// Residuals are centred and standardised with the Cholesky factor of their
/// covariance; `T b₁'b₁/6 ~ χ²(n)`, `T (b₂−3)'(b₂−3)/24 ~ χ²(n)`.
pub fn normality(residuals: &DMatrix<f64>, alpha: f64) -> Result<NormalityTests> {
    check_alpha(alpha)?;
    let (t, n) = residuals.shape();
    if t <= n + 1 {
        return Err(Error::SampleSize(format!("{t} residuals for {n} series")));
    }
    let means = DVector::from_fn(n, |j, _| residuals.column(j).mean());
    let centered = DMatrix::from_fn(t, n, |s, j| residuals[(s, j)] - means[j]);
    let tf = t as f64;
    let cov = centered.transpose() * &centered / tf;
    let l = cholesky_lower(&cov, "residual covariance")?;
    // rows z_t = L⁻¹ u_t
    let z = l
        .solve_lower_triangular(&centered.transpose())
        .ok_or_else(|| Error::Singular("residual covariance".into()))?;
    let b1 = DVector::from_fn(n, |j, _| z.row(j).iter().map(|v| v.powi(3)).sum::<f64>() / tf);
    let b2 = DVector::from_fn(n, |j, _| z.row(j).iter().map(|v| v.powi(4)).sum::<f64>() / tf - 3.0);
    let skew = tf * b1.dot(&b1) / 6.0;
    let kurt = tf * b2.dot(&b2) / 24.0;
    let nf = n as f64;
    Ok(NormalityTests {
        jarque_bera: DiagnosticReport::chi2("jarque_bera", skew + kurt, 2.0 * nf, alpha),
        skewness: DiagnosticReport::chi2("skewness", skew, nf, alpha),
        kurtosis: DiagnosticReport::chi2("kurtosis", kurt, nf, alpha),
    })
}

/// OLS-CUSUM empirical fluctuation process, one path per equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfpPath {
    pub names: Vec<String>,
    /// `0, 1/T, …, 1`.
    pub times: Vec<f64>,
    /// `paths[j][k]` is `W_j(k/T)`; every path starts at 0.
    pub paths: Vec<Vec<f64>>,
    pub alpha: f64,
    pub boundary: f64,
    pub max_abs: Vec<f64>,
    pub crossed: Vec<bool>,
}

impl EfpPath {
    pub fn any_crossed(&self) -> bool {
        self.crossed.iter().any(|&c| c)
    }

    /// `t, W_1..W_n, lower, upper`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",lower,upper\n");
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&t.to_string());
            for p in &self.paths {
                out.push(',');
                out.push_str(&p[k].to_string());
            }
            out.push_str(&format!(",{},{}\n", -self.boundary, self.boundary));
        }
        out
    }
}

/// `P(sup |B(t)| > λ)` for a Brownian bridge: `2 Σ_k (−1)^{k+1} exp(−2k²λ²)`.
pub fn brownian_bridge_crossing_probability(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..100_000u64 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Critical value `λ(α)` of the sup-norm of a Brownian bridge.
pub fn cusum_boundary(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let (mut lo, mut hi) = (0.05, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if brownian_bridge_crossing_probability(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// OLS-CUSUM process for every equation of a fitted VAR.
pub fn ols_cusum(model: &VarModel, alpha: f64) -> Result<EfpPath> {
    let k = model.n() * model.p + 1;
    efp_from_residuals(model_residuals(model)?, k, &model.var_names, alpha)
}

/// `W(k/T) = Σ_{i≤k} û_i / (σ̂ √T)` with `σ̂² = Σû²/(T − n_params)`.
pub fn efp_from_residuals(residuals: &DMatrix<f64>, n_params: usize, names: &[String], alpha: f64) -> Result<EfpPath> {
    let boundary = cusum_boundary(alpha)?;
    let (t, n) = residuals.shape();
    if t <= n_params {
        return Err(Error::SampleSize(format!("{t} residuals for {n_params} parameters")));
    }
    let names: Vec<String> = if names.len() == n {
        names.to_vec()
    } else {
        (0..n).map(|j| regressor_name(&[format!("y{}", j + 1)], j + 1)).collect()
    };
    let tf = t as f64;
    let mut paths = Vec::with_capacity(n);
    let mut max_abs = Vec::with_capacity(n);
    for j in 0..n {
        let col = residuals.column(j);
        let ss: f64 = col.iter().map(|v| v * v).sum();
        let sigma = (ss / (t - n_params) as f64).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::Degenerate(format!("residuals of `{}` have zero variance", names[j])));
        }
        let scale = 1.0 / (sigma * tf.sqrt());
        let mut path = Vec::with_capacity(t + 1);
        path.push(0.0);
        let mut acc = 0.0;
        for &u in col.iter() {
            acc += u;
            path.push(acc * scale);
        }
        max_abs.push(path.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        paths.push(path);
    }
    let crossed = max_abs.iter().map(|&m| m > boundary).collect();
    Ok(EfpPath {
        names,
        times: (0..=t).map(|k| k as f64 / tf).collect(),
        paths,
        alpha,
        boundary,
        max_abs,
        crossed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::{fit_var, simulate};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn gaussian(t: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn boundary_at_five_percent() {
        let l = cusum_boundary(0.05).unwrap();
        assert_abs_diff_eq!(l, 1.3580986, epsilon = 1e-6);
        assert_abs_diff_eq!(brownian_bridge_crossing_probability(l), 0.05, epsilon = 1e-10);
        assert!(cusum_boundary(0.01).unwrap() > cusum_boundary(0.10).unwrap());
    }

    #[test]
    fn vech_layout() {
        let idx: Vec<_> = (0..6).map(|c| vech_index(3, c)).collect();
        assert_eq!(idx, vec![(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (2, 2)]);
    }

    #[test]
    fn portmanteau_rejects_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut u = DMatrix::zeros(500, 2);
        for t in 0..500 {
            for j in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                u[(t, j)] = if t > 0 { 0.8 * u[(t - 1, j)] + e } else { e };
            }
        }
        let r = portmanteau(&u, 10, 0, 0.05).unwrap();
        assert!(r.p_value < 0.01 && r.reject);
    }

    #[test]
    fn portmanteau_scale_invariant() {
        let u = gaussian(300, 3, 12);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.0, 0.3, 0.1, 1.0, 0.0, 5.0]);
        let v = &u * a.transpose();
        let r1 = portmanteau(&u, 8, 0, 0.05).unwrap();
        let r2 = portmanteau(&v, 8, 0, 0.05).unwrap();
        assert_abs_diff_eq!(r1.statistic, r2.statistic, epsilon = 1e-8 * r1.statistic);
    }

    #[test]
    fn portmanteau_needs_h_above_p() {
        let u = gaussian(100, 2, 13);
        assert!(matches!(portmanteau(&u, 2, 2, 0.05), Err(Error::Domain(_))));
        let mut z = u.clone();
        z.column_mut(1).fill(0.0);
        assert!(matches!(portmanteau(&z, 4, 1, 0.05), Err(Error::Singular(_))));
    }

    #[test]
    fn arch_detects_arch_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut u = DMatrix::zeros(1000, 2);
        for j in 0..2 {
            let mut prev: f64 = 0.0;
            for t in 0..1000 {
                let z: f64 = StandardNormal.sample(&mut rng);
                let e = (0.4 + 0.6 * prev * prev).sqrt() * z;
                u[(t, j)] = e;
                prev = e;
            }
        }
        assert!(arch_lm(&u, 5, 0.05).unwrap().p_value < 0.01);
        assert!(matches!(arch_lm(&u.rows(0, 21).into_owned(), 5, 0.05), Err(Error::SampleSize(_))));
    }

    #[test]
    fn skewness_detects_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let exp = Exp::new(1.0).unwrap();
        let u = DMatrix::from_fn(500, 2, |_, _| exp.sample(&mut rng));
        let r = normality(&u, 0.05).unwrap();
        assert!(r.skewness.p_value < 0.01);
        assert_abs_diff_eq!(r.jarque_bera.statistic, r.skewness.statistic + r.kurtosis.statistic, epsilon = 1e-9);
        assert_eq!(r.jarque_bera.df, 4.0);
    }

    #[test]
    fn efp_starts_and_ends_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let data = simulate(
            &DVector::from_vec(vec![1.0, 0.5]),
            &[DMatrix::identity(2, 2) * 0.4],
            &DMatrix::identity(2, 2),
            200,
            50,
            &mut rng,
        )
        .unwrap();
        let m = fit_var(&data, 2).unwrap();
        let efp = ols_cusum(&m, 0.05).unwrap();
        for p in &efp.paths {
            assert_eq!(p[0], 0.0);
            assert!(p.last().unwrap().abs() < 1e-8);
        }
        assert_eq!(efp.times.len(), m.t_effective + 1);
        assert!(efp.to_csv().starts_with("t,y1,y2,lower,upper\n"));
    }

    #[test]
    fn efp_detects_mean_shift_and_degenerate_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = 200;
        let y: Vec<f64> = (0..t)
            .map(|i| rng.sample::<f64, _>(StandardNormal) + if i >= t / 2 { 5.0 } else { 0.0 })
            .collect();
        let mean = y.iter().sum::<f64>() / t as f64;
        let u = DMatrix::from_fn(t, 1, |i, _| y[i] - mean);
        let efp = efp_from_residuals(&u, 1, &["y".into()], 0.05).unwrap();
        assert!(efp.crossed[0]);

        let zero = DMatrix::zeros(50, 1);
        assert!(matches!(efp_from_residuals(&zero, 1, &[], 0.05), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reject_follows_alpha() {
        let u = gaussian(200, 2, 18);
        let r = portmanteau(&u, 5, 0, 0.05).unwrap();
        let r10 = r.clone().with_alpha(0.10);
        assert_eq!(r10.reject, r.p_value < 0.10);
        assert!((0.0..=1.0).contains(&r.p_value));
    }
}
