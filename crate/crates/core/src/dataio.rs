//! Station CSV ingestion and the quarterly panel.
//!
//! Input is long format: one row per `(station, date, variable, value)`, with
//! optional `latitude`/`longitude` columns. Dates are either calendar dates
//! (`YYYY-MM-DD`) or quarters (`YYYY-Qn`). Calendar dates are coarsened to
//! their quarter and aggregated; quarter-form rows are taken as already
//! aggregated.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Domain(format!("quarter must be 1..=4, got {quarter}")));
        }
        Ok(Self { year, quarter })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(4) as i32,
            quarter: (ord.rem_euclid(4) + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }

    /// Number of quarters from `self` to `other` (negative if `other` is earlier).
    pub fn quarters_until(self, other: Quarter) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.quarter)
    }
}

impl FromStr for Quarter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match parse_date(s)? {
            RawDate::Quarter(q) => Ok(q),
            RawDate::Day(_) => Err(format!("expected YYYY-Qn, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum RawDate {
    Day(NaiveDate),
    Quarter(Quarter),
}

impl RawDate {
    fn quarter(self) -> Quarter {
        match self {
            RawDate::Quarter(q) => q,
            RawDate::Day(d) => Quarter {
                year: d.year(),
                quarter: ((d.month() - 1) / 3 + 1) as u8,
            },
        }
    }
}

impl fmt::Display for RawDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawDate::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            RawDate::Quarter(q) => write!(f, "{q}"),
        }
    }
}

fn parse_date(s: &str) -> std::result::Result<RawDate, String> {
    let s = s.trim();
    if let Some((year, q)) = s.split_once("-Q").or_else(|| s.split_once("-q")) {
        let year: i32 = year.parse().map_err(|_| format!("bad year in date `{s}`"))?;
        let q: u8 = q.parse().map_err(|_| format!("bad quarter in date `{s}`"))?;
        if !(1..=4).contains(&q) {
            return Err(format!("quarter out of range in date `{s}`"));
        }
        return Ok(RawDate::Quarter(Quarter { year, quarter: q }));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(RawDate::Day)
        .map_err(|_| format!("unrecognised date `{s}` (expected YYYY-MM-DD or YYYY-Qn)"))
}

/// A monitoring station, optionally geolocated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationId {
    pub name: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

impl StationId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::Domain("station name must be non-empty".into()));
        }
        Ok(Self {
            name,
            latitude: None,
            longitude: None,
        })
    }

    pub fn with_coordinates(mut self, latitude: f64, longitude: f64) -> Result<Self> {
        check_coordinates(latitude, longitude)?;
        self.latitude = Some(latitude);
        self.longitude = Some(longitude);
        Ok(self)
    }

    pub fn coordinates(&self) -> Option<(f64, f64)> {
        self.latitude.zip(self.longitude)
    }
}

fn check_coordinates(lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(Error::Domain(format!("latitude {lat} outside [-90, 90]")));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Domain(format!("longitude {lon} outside [-180, 180]")));
    }
    Ok(())
}

/// How sub-quarterly rows are combined into one quarterly value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(format!("unknown aggregation `{other}` (expected mean or sum)")),
        }
    }
}

/// Column mapping for [`load_panel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub station: String,
    pub date: String,
    pub variable: String,
    pub value: String,
    /// Used only when the column is present in the header.
    pub latitude: String,
    pub longitude: String,
    pub aggregation: Aggregation,
    /// Per-variable overrides of `aggregation`.
    pub variable_aggregation: BTreeMap<String, Aggregation>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            station: "station".into(),
            date: "date".into(),
            variable: "variable".into(),
            value: "value".into(),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            aggregation: Aggregation::Mean,
            variable_aggregation: BTreeMap::new(),
        }
    }
}

impl CsvSchema {
    fn aggregation_for(&self, variable: &str) -> Aggregation {
        self.variable_aggregation
            .get(variable)
            .copied()
            .unwrap_or(self.aggregation)
    }
}

/// Stations × quarters × variables, with a missing-value mask.
///
/// Every station shares the same contiguous quarterly index. Cells with no
/// observation are masked (`mask == true`) and hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesPanel {
    stations: Vec<StationId>,
    variables: Vec<String>,
    index: Vec<Quarter>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl TimeSeriesPanel {
    /// Builds a panel from station-major, then time, then variable ordered cells.
    pub fn new(
        stations: Vec<StationId>,
        variables: Vec<String>,
        index: Vec<Quarter>,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let len = stations.len() * index.len() * variables.len();
        if values.len() != len || mask.len() != len {
            return Err(Error::Domain(format!(
                "panel shape mismatch: expected {len} cells, got {} values / {} mask",
                values.len(),
                mask.len()
            )));
        }
        if index.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("timestamps must be strictly increasing".into()));
        }
        for s in &stations {
            if s.name.trim().is_empty() {
                return Err(Error::Domain("station name must be non-empty".into()));
            }
            if let Some((lat, lon)) = s.coordinates() {
                check_coordinates(lat, lon)?;
            }
        }
        if values.iter().zip(&mask).any(|(v, m)| !m && !v.is_finite()) {
            return Err(Error::Domain("non-finite value in an unmasked cell".into()));
        }
        let values = values
            .into_iter()
            .zip(&mask)
            .map(|(v, &m)| if m { f64::NAN } else { v })
            .collect();
        Ok(Self {
            stations,
            variables,
            index,
            values,
            mask,
        })
    }

    /// Single-station panel from a T×n matrix with consecutive quarters starting at `start`.
    pub fn from_matrix(
        station: StationId,
        variables: Vec<String>,
        start: Quarter,
        data: &DMatrix<f64>,
    ) -> Result<Self> {
        if variables.len() != data.ncols() {
            return Err(Error::Domain(format!(
                "{} variable names for {} columns",
                variables.len(),
                data.ncols()
            )));
        }
        let mut index = Vec::with_capacity(data.nrows());
        let mut q = start;
        for _ in 0..data.nrows() {
            index.push(q);
            q = q.next();
        }
        let mut values = Vec::with_capacity(data.len());
        for t in 0..data.nrows() {
            for j in 0..data.ncols() {
                values.push(data[(t, j)]);
            }
        }
        let mask = values.iter().map(|v: &f64| !v.is_finite()).collect();
        Self::new(vec![station], variables, index, values, mask)
    }

    pub fn stations(&self) -> &[StationId] {
        &self.stations
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn index(&self) -> &[Quarter] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn offset(&self, s: usize, t: usize, v: usize) -> usize {
        (s * self.index.len() + t) * self.variables.len() + v
    }

    /// Value at (station, time, variable), `None` when masked.
    pub fn get(&self, station: usize, time: usize, variable: usize) -> Option<f64> {
        let i = self.offset(station, time, variable);
        (!self.mask[i]).then(|| self.values[i])
    }

    pub fn is_missing(&self, station: usize, time: usize, variable: usize) -> bool {
        self.mask[self.offset(station, time, variable)]
    }

    pub fn station_index(&self, name: &str) -> Result<usize> {
        self.stations
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::NotFound(format!("station `{name}`")))
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::NotFound(format!("variable `{name}`")))
    }

    /// One station's series for one variable, `None` where masked.
    pub fn series(&self, station: usize, variable: usize) -> Vec<Option<f64>> {
        (0..self.len())
            .map(|t| self.get(station, t, variable))
            .collect()
    }

    /// T×n matrix for `station`, columns in the requested variable order.
    pub fn extract_matrix<S: AsRef<str>>(&self, station: &str, variables: &[S]) -> Result<DMatrix<f64>> {
        if variables.is_empty() {
            return Err(Error::Domain("at least one variable must be requested".into()));
        }
        let s = self.station_index(station)?;
        let cols = variables
            .iter()
            .map(|v| self.variable_index(v.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros(self.len(), cols.len());
        for t in 0..self.len() {
            for (j, &v) in cols.iter().enumerate() {
                out[(t, j)] = self.get(s, t, v).ok_or_else(|| Error::MissingData {
                    station: station.to_string(),
                    variable: self.variables[v].clone(),
                    quarter: self.index[t].to_string(),
                })?;
            }
        }
        Ok(out)
    }

    /// Sub-panel over the time range `[start, end)`.
    pub fn slice_time(&self, start: usize, end: usize) -> Self {
        let (ns, nv) = (self.stations.len(), self.variables.len());
        let mut values = Vec::with_capacity(ns * (end - start) * nv);
        let mut mask = Vec::with_capacity(values.capacity());
        for s in 0..ns {
            let lo = self.offset(s, start, 0);
            let hi = self.offset(s, end, 0);
            values.extend_from_slice(&self.values[lo..hi]);
            mask.extend_from_slice(&self.mask[lo..hi]);
        }
        Self {
            stations: self.stations.clone(),
            variables: self.variables.clone(),
            index: self.index[start..end].to_vec(),
            values,
            mask,
        }
    }

    /// Appends `later` in time. Stations and variables must match.
    pub fn concat_time(&self, later: &Self) -> Result<Self> {
        if self.stations != later.stations || self.variables != later.variables {
            return Err(Error::Domain("panels have different stations or variables".into()));
        }
        if let (Some(a), Some(b)) = (self.index.last(), later.index.first()) {
            if a >= b {
                return Err(Error::Domain("second panel must start after the first ends".into()));
            }
        }
        let (ns, nv) = (self.stations.len(), self.variables.len());
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for s in 0..ns {
            for p in [self, later] {
                let lo = p.offset(s, 0, 0);
                let hi = lo + p.len() * nv;
                values.extend_from_slice(&p.values[lo..hi]);
                mask.extend_from_slice(&p.mask[lo..hi]);
            }
        }
        let mut index = self.index.clone();
        index.extend_from_slice(&later.index);
        Self::new(self.stations.clone(), self.variables.clone(), index, values, mask)
    }

    /// Fills interior gaps by linear interpolation in time. Leading and
    /// trailing gaps stay masked.
    pub fn fill_linear(&self) -> Self {
        let mut out = self.clone();
        for s in 0..self.stations.len() {
            for v in 0..self.variables.len() {
                let mut prev: Option<(usize, f64)> = None;
                for t in 0..self.len() {
                    let Some(x) = self.get(s, t, v) else { continue };
                    if let Some((t0, x0)) = prev {
                        for k in t0 + 1..t {
                            let w = (k - t0) as f64 / (t - t0) as f64;
                            let i = out.offset(s, k, v);
                            out.values[i] = x0 + w * (x - x0);
                            out.mask[i] = false;
                        }
                    }
                    prev = Some((t, x));
                }
            }
        }
        out
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn summary(&self) -> PanelSummary {
        let per_station = (0..self.stations.len())
            .map(|s| StationSummary {
                station: self.stations[s].name.clone(),
                missing: (0..self.variables.len())
                    .map(|v| {
                        let n = (0..self.len()).filter(|&t| self.is_missing(s, t, v)).count();
                        (self.variables[v].clone(), n)
                    })
                    .collect(),
            })
            .collect();
        PanelSummary {
            stations: self.stations.len(),
            variables: self.variables.clone(),
            timestamps: self.len(),
            start: self.index.first().map(ToString::to_string),
            end: self.index.last().map(ToString::to_string),
            missing_cells: self.missing_count(),
            per_station,
        }
    }
}

/// JSON-friendly overview of a panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelSummary {
    pub stations: usize,
    pub variables: Vec<String>,
    pub timestamps: usize,
    pub start: Option<String>,
    pub end: Option<String>,
    pub missing_cells: usize,
    pub per_station: Vec<StationSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationSummary {
    pub station: String,
    pub missing: BTreeMap<String, usize>,
}

fn is_missing_token(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null")
}

/// Loads a long-format CSV file into a panel.
pub fn load_panel(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesPanel> {
    let file = std::fs::File::open(path.as_ref())?;
    read_panel(file, schema)
}

/// Reads a long-format CSV stream into a panel.
pub fn read_panel<R: Read>(reader: R, schema: &CsvSchema) -> Result<TimeSeriesPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing required column `{name}`"),
        })
    };
    let c_station = need(&schema.station)?;
    let c_date = need(&schema.date)?;
    let c_var = need(&schema.variable)?;
    let c_value = need(&schema.value)?;
    let c_lat = col(&schema.latitude);
    let c_lon = col(&schema.longitude);

    let mut stations: Vec<StationId> = Vec::new();
    let mut station_pos: HashMap<String, usize> = HashMap::new();
    let mut variables: Vec<String> = Vec::new();
    let mut variable_pos: HashMap<String, usize> = HashMap::new();
    // (station, variable, quarter) -> (raw dates seen, observed values)
    let mut cells: HashMap<(usize, usize, Quarter), (Vec<RawDate>, Vec<f64>)> = HashMap::new();
    let mut rows = 0usize;

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| record.get(c).unwrap_or("");
        let perr = |message: String| Error::Parse { line, message };
        rows += 1;

        let name = field(c_station);
        if name.is_empty() {
            return Err(perr("empty station name".into()));
        }
        let variable = field(c_var);
        if variable.is_empty() {
            return Err(perr("empty variable name".into()));
        }
        let date = parse_date(field(c_date)).map_err(perr)?;

        let s = match station_pos.get(name) {
            Some(&s) => s,
            None => {
                stations.push(StationId::new(name)?);
                station_pos.insert(name.to_string(), stations.len() - 1);
                stations.len() - 1
            }
        };
        let coord = |c: Option<usize>| -> Result<Option<f64>> {
            match c.map(field) {
                Some(x) if !is_missing_token(x) => x
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| perr(format!("bad coordinate `{x}`"))),
                _ => Ok(None),
            }
        };
        if let (Some(lat), Some(lon)) = (coord(c_lat)?, coord(c_lon)?) {
            check_coordinates(lat, lon).map_err(|e| perr(e.to_string()))?;
            let st = &mut stations[s];
            match st.coordinates() {
                None => {
                    st.latitude = Some(lat);
                    st.longitude = Some(lon);
                }
                Some(prev) if prev != (lat, lon) => {
                    return Err(perr(format!("inconsistent coordinates for station `{name}`")));
                }
                Some(_) => {}
            }
        }
        let v = match variable_pos.get(variable) {
            Some(&v) => v,
            None => {
                variables.push(variable.to_string());
                variable_pos.insert(variable.to_string(), variables.len() - 1);
                variables.len() - 1
            }
        };

        let raw = field(c_value);
        let value = if is_missing_token(raw) {
            None
        } else {
            let x: f64 = raw.parse().map_err(|_| perr(format!("bad value `{raw}`")))?;
            if !x.is_finite() {
                return Err(perr(format!("non-finite value `{raw}`")));
            }
            Some(x)
        };

        let entry = cells.entry((s, v, date.quarter())).or_default();
        let clash = entry.0.iter().any(|d| {
            *d == date || matches!(d, RawDate::Quarter(_)) || matches!(date, RawDate::Quarter(_))
        });
        if clash {
            return Err(Error::Conflict {
                station: name.to_string(),
                variable: variable.to_string(),
                date: date.to_string(),
            });
        }
        entry.0.push(date);
        entry.1.extend(value);
    }

    if rows == 0 {
        return Err(Error::EmptyInput("CSV contains no data rows".into()));
    }

    let first = cells.keys().map(|k| k.2).min().expect("non-empty");
    let last = cells.keys().map(|k| k.2).max().expect("non-empty");
    let mut index = vec![first];
    while *index.last().unwrap() < last {
        index.push(index.last().unwrap().next());
    }

    let (ns, nt, nv) = (stations.len(), index.len(), variables.len());
    let mut values = vec![f64::NAN; ns * nt * nv];
    let mut mask = vec![true; ns * nt * nv];
    for ((s, v, q), (_, obs)) in cells {
        if obs.is_empty() {
            continue;
        }
        let t = first.quarters_until(q) as usize;
        let sum: f64 = obs.iter().sum();
        let x = match schema.aggregation_for(&variables[v]) {
            Aggregation::Mean => sum / obs.len() as f64,
            Aggregation::Sum => sum,
        };
        let i = (s * nt + t) * nv + v;
        values[i] = x;
        mask[i] = false;
    }

    TimeSeriesPanel::new(stations, variables, index, values, mask)
}

/// Writes a panel in the same long CSV format, quarter-form dates, one row per
/// cell (masked cells carry an empty value).
pub fn write_panel<W: Write>(panel: &TimeSeriesPanel, writer: W) -> Result<()> {
    let with_coords = panel.stations.iter().any(|s| s.coordinates().is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["station", "date", "variable", "value"];
    if with_coords {
        header.extend(["latitude", "longitude"]);
    }
    w.write_record(&header)?;
    for (s, st) in panel.stations.iter().enumerate() {
        let (lat, lon) = match st.coordinates() {
            Some((a, b)) => (a.to_string(), b.to_string()),
            None => (String::new(), String::new()),
        };
        for (t, q) in panel.index.iter().enumerate() {
            for (v, name) in panel.variables.iter().enumerate() {
                let value = panel.get(s, t, v).map(|x| x.to_string()).unwrap_or_default();
                let date = q.to_string();
                let mut row = vec![st.name.as_str(), date.as_str(), name.as_str(), value.as_str()];
                if with_coords {
                    row.extend([lat.as_str(), lon.as_str()]);
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Chronological train/test partition.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: TimeSeriesPanel,
    pub test: TimeSeriesPanel,
    pub ratio: f64,
}

/// Splits chronologically with `floor(ratio * T)` points in the training part.
pub fn holdout_split(panel: &TimeSeriesPanel, ratio: f64) -> Result<HoldoutSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain(format!("holdout ratio must lie in (0, 1), got {ratio}")));
    }
    let t = panel.len();
    if t < 2 {
        return Err(Error::SampleSize(format!("need at least 2 timestamps to split, got {t}")));
    }
    let n_train = holdout_train_len(t, ratio);
    Ok(HoldoutSplit {
        train: panel.slice_time(0, n_train),
        test: panel.slice_time(n_train, t),
        ratio,
    })
}

/// Training length used by [`holdout_split`], clamped so neither part is empty.
pub fn holdout_train_len(t: usize, ratio: f64) -> usize {
    ((ratio * t as f64).floor() as usize).clamp(1, t.saturating_sub(1).max(1))
}
