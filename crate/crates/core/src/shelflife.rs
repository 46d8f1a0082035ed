//! Model shelf-life: how many quarters ahead a forecaster stays under an
//! absolute-percentage-error threshold.
//!
//! Forecasts are scored out of sample from every rolling origin. Mean APE per
//! horizon is regressed on the horizon and the shelf life is the largest
//! integer horizon at which the fitted line is still at or below the threshold.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::var::{fit_var, forecast_from_end, select_lag_order, VarModel};

/// Something that can be trained on a history and asked for forecasts.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> String;

    /// Trains on `history` (`T × n`, chronological).
    fn train(&self, history: &DMatrix<f64>) -> Result<Box<dyn TrainedForecaster>>;
}

pub trait TrainedForecaster {
    /// `h × n` point forecasts for the `h` steps after the training history.
    fn predict(&self, h: usize) -> Result<DMatrix<f64>>;
}

/// Repeats the value observed one season earlier.
#[derive(Debug, Clone, Copy)]
pub struct SeasonalNaive {
    period: usize,
}

pub fn seasonal_naive_forecaster(period: usize) -> Result<SeasonalNaive> {
    if period < 1 {
        return Err(Error::Domain("seasonal period must be at least 1".into()));
    }
    Ok(SeasonalNaive { period })
}

struct SeasonalNaiveFit {
    last_season: DMatrix<f64>,
}

impl Forecaster for SeasonalNaive {
    fn name(&self) -> String {
        format!("seasonal-naive(period={})", self.period)
    }

    fn train(&self, history: &DMatrix<f64>) -> Result<Box<dyn TrainedForecaster>> {
        let t = history.nrows();
        if t < self.period {
            return Err(Error::SampleSize(format!(
                "seasonal naive with period {} needs at least {} observations, got {t}",
                self.period, self.period
            )));
        }
        Ok(Box::new(SeasonalNaiveFit {
            last_season: history.rows(t - self.period, self.period).into_owned(),
        }))
    }
}

impl TrainedForecaster for SeasonalNaiveFit {
    fn predict(&self, h: usize) -> Result<DMatrix<f64>> {
        if h < 1 {
            return Err(Error::Domain("forecast horizon must be at least 1".into()));
        }
        let period = self.last_season.nrows();
        // x(T + h − period·⌈h/period⌉) = last_season[(h − 1) mod period]
        Ok(DMatrix::from_fn(h, self.last_season.ncols(), |i, j| {
            self.last_season[(i % period, j)]
        }))
    }
}

/// VAR forecaster, either at a fixed lag or re-selecting the lag by
/// consensus of the information criteria at every origin.
#[derive(Debug, Clone, Copy)]
pub enum VarForecaster {
    Fixed(usize),
    Auto { p_max: usize },
}

struct VarFit {
    model: VarModel,
}

impl Forecaster for VarForecaster {
    fn name(&self) -> String {
        match self {
            Self::Fixed(p) => format!("VAR({p})"),
            Self::Auto { p_max } => format!("VAR(auto, p_max={p_max})"),
        }
    }

    fn train(&self, history: &DMatrix<f64>) -> Result<Box<dyn TrainedForecaster>> {
        let p = match *self {
            Self::Fixed(p) => p,
            Self::Auto { p_max } => select_lag_order(history, p_max)?.consensus_p,
        };
        Ok(Box::new(VarFit {
            model: fit_var(history, p)?,
        }))
    }
}

impl TrainedForecaster for VarFit {
    fn predict(&self, h: usize) -> Result<DMatrix<f64>> {
        forecast_from_end(&self.model, h)
    }
}

/// Forecaster backed by a closure `(history, h) -> forecasts`; handy for
/// oracles and external models.
pub struct FnForecaster<F> {
    name: String,
    f: F,
}

impl<F> FnForecaster<F>
where
    F: Fn(&DMatrix<f64>, usize) -> Result<DMatrix<f64>> + Send + Sync + Clone + 'static,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

struct FnFit<F> {
    history: DMatrix<f64>,
    f: F,
}

impl<F> Forecaster for FnForecaster<F>
where
    F: Fn(&DMatrix<f64>, usize) -> Result<DMatrix<f64>> + Send + Sync + Clone + 'static,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn train(&self, history: &DMatrix<f64>) -> Result<Box<dyn TrainedForecaster>> {
        Ok(Box::new(FnFit {
            history: history.clone(),
            f: self.f.clone(),
        }))
    }
}

impl<F> TrainedForecaster for FnFit<F>
where
    F: Fn(&DMatrix<f64>, usize) -> Result<DMatrix<f64>>,
{
    fn predict(&self, h: usize) -> Result<DMatrix<f64>> {
        (self.f)(&self.history, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApeRow {
    /// Number of observations the forecaster was trained on.
    pub origin: usize,
    pub horizon: usize,
    pub actual: f64,
    pub forecast: f64,
    pub ape: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApeTable {
    pub forecaster: String,
    pub target: usize,
    pub rows: Vec<ApeRow>,
    /// Evaluation points dropped because the actual value was zero.
    pub excluded: usize,
    pub h_max: usize,
}

impl ApeTable {
    /// `origin,horizon,ape`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("origin,horizon,ape\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.origin, r.horizon, r.ape));
        }
        out
    }

    /// `(horizon, mean APE)` over origins, ascending in horizon.
    pub fn mean_by_horizon(&self) -> Vec<(usize, f64)> {
        let mut sums = vec![(0.0, 0usize); self.h_max + 1];
        for r in &self.rows {
            sums[r.horizon].0 += r.ape;
            sums[r.horizon].1 += 1;
        }
        sums.into_iter()
            .enumerate()
            .filter(|(_, (_, c))| *c > 0)
            .map(|(h, (s, c))| (h, s / c as f64))
            .collect()
    }
}

/// Out-of-sample APE from every origin `o = min_train..T−1`: train on the
/// first `o` observations and forecast `h = 1..=min(h_max, T − o)`.
pub fn rolling_origin_errors(
    series: &DMatrix<f64>,
    forecaster: &dyn Forecaster,
    min_train: usize,
    h_max: usize,
    target: usize,
) -> Result<ApeTable> {
    let t = series.nrows();
    if min_train < 1 || h_max < 1 {
        return Err(Error::Domain("min_train and h_max must be at least 1".into()));
    }
    if min_train + h_max > t {
        return Err(Error::SampleSize(format!(
            "min_train ({min_train}) + h_max ({h_max}) exceeds series length {t}"
        )));
    }
    if target >= series.ncols() {
        return Err(Error::Domain(format!("target column {target} out of range")));
    }
    let per_origin = (min_train..t)
        .into_par_iter()
        .map(|o| -> Result<(Vec<ApeRow>, usize)> {
            let trained = forecaster.train(&series.rows(0, o).into_owned())?;
            let h = h_max.min(t - o);
            let fc = trained.predict(h)?;
            let mut rows = Vec::with_capacity(h);
            let mut excluded = 0;
            for step in 1..=h {
                let actual = series[(o + step - 1, target)];
                let predicted = fc[(step - 1, target)];
                if actual == 0.0 {
                    excluded += 1;
                    continue;
                }
                rows.push(ApeRow {
                    origin: o,
                    horizon: step,
                    actual,
                    forecast: predicted,
                    ape: (actual - predicted).abs() / actual.abs(),
                });
            }
            Ok((rows, excluded))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut excluded = 0;
    for (r, e) in per_origin {
        rows.extend(r);
        excluded += e;
    }
    Ok(ApeTable {
        forecaster: forecaster.name(),
        target,
        rows,
        excluded,
        h_max,
    })
}

/// Points used for the APE-vs-horizon regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionMode {
    /// One point per horizon: the mean APE across origins.
    #[default]
    PerHorizonMean,
    /// Every `(horizon, APE)` row.
    Pooled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShelfLifeResult {
    pub forecaster: String,
    pub intercept: f64,
    pub slope: f64,
    pub threshold: f64,
    pub shelf_life_quarters: usize,
    pub censored: bool,
    /// Largest horizon in the table.
    pub max_horizon: usize,
    pub mode: RegressionMode,
    pub excluded: usize,
    /// The `(horizon, APE)` points the line was fitted to.
    pub points: Vec<(f64, f64)>,
}

impl ShelfLifeResult {
    pub fn fitted_ape(&self, h: f64) -> f64 {
        self.intercept + self.slope * h
    }
}

/// Simple least-squares line `y = a + b x`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

pub fn estimate_shelf_life(ape: &ApeTable, threshold: f64) -> Result<ShelfLifeResult> {
    estimate_shelf_life_with(ape, threshold, RegressionMode::default())
}

/// Fits `APE = a + b·h` and returns the largest integer `h ≥ 0` with
/// `a + b·h ≤ threshold`, censored at the largest evaluated horizon.
pub fn estimate_shelf_life_with(ape: &ApeTable, threshold: f64, mode: RegressionMode) -> Result<ShelfLifeResult> {
    if !(threshold >= 0.0) {
        return Err(Error::Domain(format!("threshold must be non-negative, got {threshold}")));
    }
    if ape.rows.is_empty() {
        return Err(Error::InsufficientData("APE table is empty after exclusions".into()));
    }
    let points: Vec<(f64, f64)> = match mode {
        RegressionMode::PerHorizonMean => ape
            .mean_by_horizon()
            .into_iter()
            .map(|(h, m)| (h as f64, m))
            .collect(),
        RegressionMode::Pooled => ape.rows.iter().map(|r| (r.horizon as f64, r.ape)).collect(),
    };
    let mut horizons: Vec<usize> = ape.rows.iter().map(|r| r.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.len() < 2 {
        return Err(Error::InsufficientData("need at least two distinct horizons".into()));
    }
    let max_horizon = *horizons.last().unwrap();
    let (a, b) = fit_line(&points);
    let (shelf, censored) = crossing(a, b, threshold, max_horizon);
    Ok(ShelfLifeResult {
        forecaster: ape.forecaster.clone(),
        intercept: a,
        slope: b,
        threshold,
        shelf_life_quarters: shelf,
        censored,
        max_horizon,
        mode,
        excluded: ape.excluded,
        points,
    })
}

fn crossing(a: f64, b: f64, threshold: f64, max_h: usize) -> (usize, bool) {
    // tolerance absorbs rounding in the fitted line when the crossing is an exact integer
    let tol = 1e-9 * threshold.abs().max(1e-12);
    let ok = |h: f64| a + b * h <= threshold + tol;
    if b <= 0.0 {
        return if ok(max_h as f64) { (max_h, true) } else { (0, false) };
    }
    if !ok(0.0) {
        return (0, false);
    }
    let raw = ((threshold - a) / b + 1e-9).floor();
    let mut h = raw.max(0.0) as usize;
    while h > 0 && !ok(h as f64) {
        h -= 1;
    }
    if h >= max_h {
        (max_h, true)
    } else {
        (h, false)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub forecaster: String,
    pub shelf_life_quarters: usize,
    pub fitted_ape_at_shelf_life: f64,
}

/// Ranks results by shelf life (longest first); ties go to the lower fitted
/// APE at the shelf-life horizon.
pub fn compare_shelf_lives(results: &[ShelfLifeResult]) -> Result<Vec<RankedModel>> {
    if results.len() < 2 {
        return Err(Error::Comparison("need at least two results to compare".into()));
    }
    let tau = results[0].threshold;
    if results.iter().any(|r| r.threshold != tau) {
        return Err(Error::Comparison("results use different thresholds".into()));
    }
    let mut ranked: Vec<RankedModel> = results
        .iter()
        .map(|r| RankedModel {
            rank: 0,
            forecaster: r.forecaster.clone(),
            shelf_life_quarters: r.shelf_life_quarters,
            fitted_ape_at_shelf_life: r.fitted_ape(r.shelf_life_quarters as f64),
        })
        .collect();
    ranked.sort_by(|x, y| {
        y.shelf_life_quarters
            .cmp(&x.shelf_life_quarters)
            .then(
                x.fitted_ape_at_shelf_life
                    .partial_cmp(&y.fitted_ape_at_shelf_life)
                    .unwrap_or(Ordering::Equal),
            )
    });
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table_from(points: &[(usize, f64)], h_max: usize) -> ApeTable {
        ApeTable {
            forecaster: "synthetic".into(),
            target: 0,
            rows: points
                .iter()
                .map(|&(h, ape)| ApeRow { origin: 0, horizon: h, actual: 1.0, forecast: 1.0 - ape, ape })
                .collect(),
            excluded: 0,
            h_max,
        }
    }

    fn perfect() -> FnForecaster<impl Fn(&DMatrix<f64>, usize) -> Result<DMatrix<f64>> + Clone + Send + Sync> {
        // knows the full series through the closure
        let full = DMatrix::from_fn(40, 2, |t, j| 10.0 + (t as f64 * 0.7 + j as f64).sin());
        FnForecaster::new("perfect", move |hist: &DMatrix<f64>, h| {
            Ok(full.rows(hist.nrows(), h).into_owned())
        })
    }

    #[test]
    fn seasonal_naive_examples() {
        let hist = DMatrix::from_column_slice(6, 1, &[9.0, 9.0, 1.0, 2.0, 3.0, 4.0]);
        let f = seasonal_naive_forecaster(4).unwrap().train(&hist).unwrap().predict(6).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0]);
        let f = seasonal_naive_forecaster(1).unwrap().train(&hist).unwrap().predict(3).unwrap();
        assert_eq!(f.as_slice(), &[4.0, 4.0, 4.0]);
        assert!(seasonal_naive_forecaster(0).is_err());
        assert!(matches!(seasonal_naive_forecaster(8).unwrap().train(&hist), Err(Error::SampleSize(_))));
    }

    #[test]
    fn periodic_series_has_zero_error() {
        let series = DMatrix::from_fn(30, 1, |t, _| [5.0, 7.0, 6.0, 8.0][t % 4]);
        let table = rolling_origin_errors(&series, &seasonal_naive_forecaster(4).unwrap(), 8, 6, 0).unwrap();
        assert!(table.rows.iter().all(|r| r.ape == 0.0));
    }

    #[test]
    fn row_count_and_origins() {
        let series = DMatrix::from_fn(85, 3, |t, j| 1.0 + t as f64 + j as f64);
        let table = rolling_origin_errors(&series, &seasonal_naive_forecaster(4).unwrap(), 59, 26, 2).unwrap();
        let expected: usize = (59..85).map(|o| 26.min(85 - o)).sum();
        assert_eq!(table.rows.len(), expected);
        assert_eq!(table.rows.first().unwrap().origin, 59);
        assert_eq!(table.rows.iter().filter(|r| r.origin == 59).count(), 26);
        assert_eq!(table.rows.last().unwrap().origin, 84);
        assert!(rolling_origin_errors(&series, &seasonal_naive_forecaster(4).unwrap(), 60, 26, 0).is_err());
    }

    #[test]
    fn perfect_forecaster() {
        let series = DMatrix::from_fn(40, 2, |t, j| 10.0 + (t as f64 * 0.7 + j as f64).sin());
        let table = rolling_origin_errors(&series, &perfect(), 20, 8, 0).unwrap();
        assert!(table.rows.iter().all(|r| r.ape == 0.0));
        let res = estimate_shelf_life(&table, 0.05).unwrap();
        assert!(res.censored);
        assert_eq!(res.shelf_life_quarters, 8);
    }

    #[test]
    fn zero_actuals_are_excluded() {
        let series = DMatrix::zeros(20, 1);
        let table = rolling_origin_errors(&series, &seasonal_naive_forecaster(1).unwrap(), 10, 3, 0).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.excluded, (10..20).map(|o| 3.min(20 - o)).sum::<usize>());
        assert!(matches!(estimate_shelf_life(&table, 0.05), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn linear_ape_crosses_at_eight() {
        let pts: Vec<(usize, f64)> = (1..=20).map(|h| (h, 0.01 + 0.005 * h as f64)).collect();
        let res = estimate_shelf_life(&table_from(&pts, 20), 0.05).unwrap();
        assert_abs_diff_eq!(res.intercept, 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(res.slope, 0.005, epsilon = 1e-12);
        assert_eq!(res.shelf_life_quarters, 8);
        assert!(!res.censored);
    }

    #[test]
    fn constant_ape_is_censored() {
        let pts: Vec<(usize, f64)> = (1..=12).map(|h| (h, 0.01)).collect();
        let res = estimate_shelf_life(&table_from(&pts, 12), 0.05).unwrap();
        assert!(res.censored);
        assert_eq!(res.shelf_life_quarters, 12);
    }

    #[test]
    fn threshold_zero_and_single_horizon() {
        let pts: Vec<(usize, f64)> = (1..=10).map(|h| (h, 0.02 + 0.001 * h as f64)).collect();
        let res = estimate_shelf_life(&table_from(&pts, 10), 0.0).unwrap();
        assert_eq!(res.shelf_life_quarters, 0);
        assert!(matches!(
            estimate_shelf_life(&table_from(&[(1, 0.1), (1, 0.2)], 1), 0.05),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn pooled_and_mean_modes_agree_on_balanced_tables() {
        let pts: Vec<(usize, f64)> = (1..=6).flat_map(|h| [(h, 0.01 * h as f64), (h, 0.02 * h as f64)]).collect();
        let t = table_from(&pts, 6);
        let a = estimate_shelf_life_with(&t, 0.05, RegressionMode::PerHorizonMean).unwrap();
        let b = estimate_shelf_life_with(&t, 0.05, RegressionMode::Pooled).unwrap();
        assert_abs_diff_eq!(a.slope, b.slope, epsilon = 1e-12);
        assert_eq!(b.points.len(), 12);
    }

    #[test]
    fn ranking() {
        let mk = |name: &str, sl: usize, a: f64| ShelfLifeResult {
            forecaster: name.into(),
            intercept: a,
            slope: 0.001,
            threshold: 0.05,
            shelf_life_quarters: sl,
            censored: false,
            max_horizon: 26,
            mode: RegressionMode::PerHorizonMean,
            excluded: 0,
            points: vec![],
        };
        let r = compare_shelf_lives(&[mk("VAR", 11, 0.0), mk("baseline", 12, 0.0)]).unwrap();
        assert_eq!(r[0].forecaster, "baseline");
        let r = compare_shelf_lives(&[mk("x", 5, 0.03), mk("y", 5, 0.01)]).unwrap();
        assert_eq!(r[0].forecaster, "y");
        assert!(compare_shelf_lives(&[mk("x", 5, 0.0)]).is_err());
        let mut other = mk("z", 3, 0.0);
        other.threshold = 0.1;
        assert!(matches!(compare_shelf_lives(&[mk("x", 5, 0.0), other]), Err(Error::Comparison(_))));
    }
}
