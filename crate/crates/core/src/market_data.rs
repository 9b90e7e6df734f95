//! Price ingestion, locally normalised returns and the mean market correlation.
//!
//! The pipeline is `load_prices` -> `compute_returns` -> `local_normalize`
//! -> `mean_correlation`. Every stage is a pure function of its input, so
//! identical files always yield bit-identical correlation series.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default trailing window for the local normalisation of returns.
pub const DEFAULT_NORMALIZATION_WINDOW: usize = 13;

/// Default missing-entry tolerance per asset.
pub const DEFAULT_MAX_MISSING_FRACTION: f64 = 0.005;

/// Aligned daily prices, one row per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceMatrix {
    pub assets: Vec<String>,
    pub dates: Vec<String>,
    /// `prices[asset][date]`, gaps already repaired.
    pub prices: Vec<Vec<f64>>,
    /// `missing_mask[asset][date]` is true where the raw file had no value.
    pub missing_mask: Vec<Vec<bool>>,
    /// Assets rejected for exceeding the missing-entry tolerance.
    pub dropped: Vec<String>,
}

impl PriceMatrix {
    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }
}

/// Relative price changes and (optionally) their locally normalised version.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub assets: Vec<String>,
    /// `returns[asset][t] = (P[t+1] - P[t]) / P[t]`.
    pub returns: Vec<Vec<f64>>,
    /// `normalized[asset][j]` belongs to return index `j + normalized_offset`.
    /// The first `window_n - 1` return indices have no normalised value.
    pub normalized: Option<Vec<Vec<f64>>>,
    pub window_n: Option<usize>,
    pub normalized_offset: usize,
}

impl ReturnMatrix {
    pub fn n_returns(&self) -> usize {
        self.returns.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Time stamp at the middle of the window.
    Centered,
    /// Time stamp at the last sample of the window.
    Trailing,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(WindowMode::Centered),
            "trailing" => Ok(WindowMode::Trailing),
            other => Err(Error::InvalidArgument(format!("unknown window mode `{other}`"))),
        }
    }
}

/// The one-dimensional mean correlation series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub values: Vec<f64>,
    /// Return-time index assigned to each value.
    pub centers: Vec<usize>,
    pub tau: usize,
    pub shift: usize,
    pub window_mode: WindowMode,
    /// Window centres skipped because some asset had zero in-window variance.
    #[serde(default)]
    pub skipped: Vec<usize>,
    #[serde(default)]
    pub normalization_window: Option<usize>,
    #[serde(default)]
    pub dropped_assets: Vec<String>,
}

impl CorrelationSeries {
    /// Wraps a bare value sequence (e.g. a published series or a simulation).
    pub fn from_values(values: Vec<f64>) -> Self {
        let centers = (0..values.len()).collect();
        CorrelationSeries {
            values,
            centers,
            tau: 1,
            shift: 1,
            window_mode: WindowMode::Trailing,
            skipped: Vec::new(),
            normalization_window: None,
            dropped_assets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesSidecar {
    tau: usize,
    shift: usize,
    n: Option<usize>,
    window_mode: WindowMode,
    dropped_assets: Vec<String>,
    skipped_windows: Vec<usize>,
    length: usize,
}

fn parse_cell(raw: &str, path: &Path, row: usize, asset: &str) -> Result<Option<f64>> {
    let cell = raw.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let value: f64 = cell.parse().map_err(|_| Error::Csv {
        path: path.to_path_buf(),
        message: format!("row {row}, asset {asset}: `{cell}` is not a number"),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: format!("row {row}, asset {asset}: price {value} is negative or not finite"),
        });
    }
    Ok(Some(value))
}

#[derive(PartialEq, PartialOrd)]
enum DateKey<'a> {
    Date(NaiveDate),
    Index(i64),
    Text(&'a str),
}

fn check_monotonic(dates: &[String]) -> Result<()> {
    let all_dates: Option<Vec<NaiveDate>> = dates
        .iter()
        .map(|d| NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").ok())
        .collect();
    let all_ints: Option<Vec<i64>> = dates.iter().map(|d| d.trim().parse().ok()).collect();
    let keys: Vec<DateKey> = match (all_dates, all_ints) {
        (Some(d), _) => d.into_iter().map(DateKey::Date).collect(),
        (None, Some(i)) => i.into_iter().map(DateKey::Index).collect(),
        (None, None) => dates.iter().map(|d| DateKey::Text(d.trim())).collect(),
    };
    for (row, pair) in keys.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            return Err(Error::NonMonotonicDates {
                row: row + 1,
                date: dates[row + 1].clone(),
            });
        }
    }
    Ok(())
}

/// Fills gaps by linear interpolation between the nearest valid neighbours;
/// leading and trailing gaps take the nearest valid value. Returns `None`
/// when the column has no valid entry at all.
pub fn repair_gaps(column: &[Option<f64>]) -> Option<Vec<f64>> {
    let valid: Vec<usize> = (0..column.len()).filter(|&i| column[i].is_some()).collect();
    let (&first, &last) = (valid.first()?, valid.last()?);
    let mut out = vec![0.0; column.len()];
    for slot in out.iter_mut().take(first + 1) {
        *slot = column[first].unwrap();
    }
    for pair in valid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (pa, pb) = (column[a].unwrap(), column[b].unwrap());
        out[a] = pa;
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (i - a) as f64 / (b - a) as f64;
            *slot = pa + w * (pb - pa);
        }
    }
    for slot in out.iter_mut().skip(last) {
        *slot = column[last].unwrap();
    }
    Some(out)
}

/// Writes a `date,ASSET1,...` table readable by [`load_prices`].
pub fn write_prices(pm: &PriceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("date");
    for a in &pm.assets {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for (t, date) in pm.dates.iter().enumerate() {
        out.push_str(date);
        for (a, series) in pm.prices.iter().enumerate() {
            out.push(',');
            if !pm.missing_mask[a][t] {
                out.push_str(&series[t].to_string());
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a `date,ASSET1,ASSET2,...` table.
pub fn read_prices<R: Read>(reader: R, source: &Path, max_missing_fraction: f64) -> Result<PriceMatrix> {
    if !(0.0..=1.0).contains(&max_missing_fraction) {
        return Err(Error::InvalidArgument(format!(
            "max_missing_fraction {max_missing_fraction} outside [0, 1]"
        )));
    }
    let csv_err = |message: String| Error::Csv {
        path: source.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(csv_err("expected a date column and at least one asset".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut raw: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        if record.len() != header.len() {
            return Err(csv_err(format!(
                "row {} has {} fields, header has {}",
                row + 1,
                record.len(),
                header.len()
            )));
        }
        dates.push(record[0].trim().to_string());
        for (a, name) in names.iter().enumerate() {
            raw[a].push(parse_cell(&record[a + 1], source, row + 1, name)?);
        }
    }
    if dates.is_empty() {
        return Err(csv_err("no data rows".into()));
    }
    check_monotonic(&dates)?;

    let n_dates = dates.len() as f64;
    let mut pm = PriceMatrix {
        assets: Vec::new(),
        dates,
        prices: Vec::new(),
        missing_mask: Vec::new(),
        dropped: Vec::new(),
    };
    for (name, column) in names.into_iter().zip(raw) {
        let missing = column.iter().filter(|v| v.is_none()).count();
        let repaired = if missing as f64 / n_dates <= max_missing_fraction {
            repair_gaps(&column)
        } else {
            None
        };
        match repaired {
            Some(prices) => {
                pm.missing_mask.push(column.iter().map(Option::is_none).collect());
                pm.prices.push(prices);
                pm.assets.push(name);
            }
            None => pm.dropped.push(name),
        }
    }
    if pm.assets.is_empty() {
        return Err(Error::NoAssets { dropped: pm.dropped });
    }
    Ok(pm)
}

/// Loads a price CSV, dropping assets with too many gaps and repairing the rest.
pub fn load_prices(path: impl AsRef<Path>, max_missing_fraction: f64) -> Result<PriceMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(BufReader::new(file), path, max_missing_fraction)
}

pub fn compute_returns(pm: &PriceMatrix) -> Result<ReturnMatrix> {
    let mut returns = Vec::with_capacity(pm.n_assets());
    for (name, prices) in pm.assets.iter().zip(&pm.prices) {
        let mut row = Vec::with_capacity(prices.len().saturating_sub(1));
        for (t, pair) in prices.windows(2).enumerate() {
            if pair[0] == 0.0 {
                return Err(Error::ZeroPrice {
                    asset: name.clone(),
                    index: t,
                });
            }
            row.push((pair[1] - pair[0]) / pair[0]);
        }
        returns.push(row);
    }
    Ok(ReturnMatrix {
        assets: pm.assets.clone(),
        returns,
        normalized: None,
        window_n: None,
        normalized_offset: 0,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance with a relative zero guard. Returns `None` when the
/// spread is indistinguishable from rounding noise.
fn population_std(xs: &[f64], m: f64) -> Option<f64> {
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    let scale = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    if var <= 1e-24 * scale || var <= f64::MIN_POSITIVE {
        None
    } else {
        Some(var.sqrt())
    }
}

/// Standardises each return by the mean and standard deviation of the `n`
/// most recent returns, the current one included.
pub fn local_normalize(rm: &ReturnMatrix, n: usize) -> Result<ReturnMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("normalisation window {n} < 2")));
    }
    let len = rm.n_returns();
    if len <= n {
        return Err(Error::TooShort {
            needed: n + 1,
            got: len,
        });
    }
    let normalized = rm
        .assets
        .par_iter()
        .zip(rm.returns.par_iter())
        .map(|(name, row)| {
            (n - 1..len)
                .map(|t| {
                    let window = &row[t + 1 - n..=t];
                    let m = mean(window);
                    let sd = population_std(window, m).ok_or_else(|| Error::ZeroVariance {
                        asset: name.clone(),
                        index: t,
                    })?;
                    Ok((row[t] - m) / sd)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReturnMatrix {
        assets: rm.assets.clone(),
        returns: rm.returns.clone(),
        normalized: Some(normalized),
        window_n: Some(n),
        normalized_offset: n - 1,
    })
}

/// Mean of the full pairwise Pearson matrix (diagonal and both triangles)
/// over one window, or `None` if some asset is constant in it.
fn window_mean_correlation(rows: &[Vec<f64>], start: usize, tau: usize) -> Option<f64> {
    let n_assets = rows.len();
    let mut column_sums = vec![0.0; tau];
    for row in rows {
        let window = &row[start..start + tau];
        let m = mean(window);
        let sd = population_std(window, m)?;
        for (acc, x) in column_sums.iter_mut().zip(window) {
            *acc += (x - m) / sd;
        }
    }
    // sum_ij C_ij = (1/tau) * sum_t (sum_i u_it)^2
    let total: f64 = column_sums.iter().map(|s| s * s).sum::<f64>() / tau as f64;
    Some((total / (n_assets * n_assets) as f64).clamp(-1.0, 1.0))
}

/// Builds the mean correlation series from normalised returns.
pub fn mean_correlation(
    rm: &ReturnMatrix,
    tau: usize,
    shift: usize,
    window_mode: WindowMode,
) -> Result<CorrelationSeries> {
    if tau < 2 {
        return Err(Error::InvalidArgument(format!("tau {tau} < 2")));
    }
    if shift < 1 {
        return Err(Error::InvalidArgument("shift must be >= 1".into()));
    }
    let rows = rm
        .normalized
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("returns are not normalised".into()))?;
    let len = rows.first().map_or(0, Vec::len);
    if tau > len {
        return Err(Error::TooShort { needed: tau, got: len });
    }
    let starts: Vec<usize> = (0..=len - tau).step_by(shift).collect();
    let center_of = |start: usize| {
        let offset = match window_mode {
            WindowMode::Trailing => tau - 1,
            WindowMode::Centered => (tau - 1) / 2,
        };
        start + offset + rm.normalized_offset
    };
    let computed: Vec<(usize, Option<f64>)> = starts
        .par_iter()
        .map(|&start| (center_of(start), window_mean_correlation(rows, start, tau)))
        .collect();

    let mut series = CorrelationSeries {
        values: Vec::with_capacity(computed.len()),
        centers: Vec::with_capacity(computed.len()),
        tau,
        shift,
        window_mode,
        skipped: Vec::new(),
        normalization_window: rm.window_n,
        dropped_assets: Vec::new(),
    };
    for (center, value) in computed {
        match value {
            Some(v) => {
                series.values.push(v);
                series.centers.push(center);
            }
            None => series.skipped.push(center),
        }
    }
    Ok(series)
}

/// Writes `center_index,c_bar` rows plus a `<path>.json` metadata sidecar.
pub fn write_series(series: &CorrelationSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("center_index,c_bar\n");
    for (c, v) in series.centers.iter().zip(&series.values) {
        out.push_str(&format!("{c},{v:?}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let sidecar = SeriesSidecar {
        tau: series.tau,
        shift: series.shift,
        n: series.normalization_window,
        window_mode: series.window_mode,
        dropped_assets: series.dropped_assets.clone(),
        skipped_windows: series.skipped.clone(),
        length: series.len(),
    };
    let meta_path = sidecar_path(path);
    let mut f = File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

/// Reads a series CSV. Accepts either `center_index,c_bar` or a single value
/// column; picks up the JSON sidecar when one sits next to the file.
pub fn read_series(path: impl AsRef<Path>) -> Result<CorrelationSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut centers = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [v] => v.parse::<f64>().ok().map(|v| (values.len(), v)),
            [c, v, ..] => match (c.parse::<f64>(), v.parse::<f64>()) {
                (Ok(c), Ok(v)) => Some((c as usize, v)),
                _ => None,
            },
            [] => None,
        };
        match parsed {
            Some((c, v)) => {
                centers.push(c);
                values.push(v);
            }
            None if i == 0 => continue,
            None => {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    message: format!("line {}: cannot parse `{line}`", i + 1),
                })
            }
        }
    }
    let mut series = CorrelationSeries::from_values(values);
    series.centers = centers;
    let meta_path = sidecar_path(path);
    if let Ok(text) = std::fs::read_to_string(&meta_path) {
        let meta: SeriesSidecar = serde_json::from_str(&text)?;
        series.tau = meta.tau;
        series.shift = meta.shift;
        series.window_mode = meta.window_mode;
        series.normalization_window = meta.n;
        series.dropped_assets = meta.dropped_assets;
        series.skipped = meta.skipped_windows;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm_from_csv(text: &str, max_missing: f64) -> Result<PriceMatrix> {
        read_prices(text.as_bytes(), Path::new("inline.csv"), max_missing)
    }

    fn returns_matrix(rows: Vec<Vec<f64>>) -> ReturnMatrix {
        ReturnMatrix {
            assets: (0..rows.len()).map(|i| format!("A{i}")).collect(),
            returns: rows,
            normalized: None,
            window_n: None,
            normalized_offset: 0,
        }
    }

    #[test]
    fn interpolates_interior_gap() {
        assert_eq!(
            repair_gaps(&[Some(100.0), None, Some(102.0)]).unwrap(),
            vec![100.0, 101.0, 102.0]
        );
    }

    #[test]
    fn fills_edges_with_nearest_value() {
        assert_eq!(
            repair_gaps(&[None, Some(50.0), Some(60.0)]).unwrap(),
            vec![50.0, 50.0, 60.0]
        );
        assert_eq!(repair_gaps(&[Some(7.0), None, None]).unwrap(), vec![7.0, 7.0, 7.0]);
        assert!(repair_gaps(&[None, None]).is_none());
    }

    #[test]
    fn drops_assets_over_missing_tolerance() {
        // 1000 rows: A complete, B 4 gaps (0.4%), C 20 gaps (2%).
        let mut text = String::from("date,A,B,C\n");
        for i in 0..1000 {
            let b = if i % 250 == 100 {
                String::new()
            } else {
                format!("{}", 10.0 + i as f64)
            };
            let c = if i % 50 == 25 {
                String::new()
            } else {
                format!("{}", 20.0 + i as f64)
            };
            text.push_str(&format!("{i},{},{b},{c}\n", 5.0 + i as f64));
        }
        let pm = pm_from_csv(&text, 0.005).unwrap();
        assert_eq!(pm.assets, vec!["A", "B"]);
        assert_eq!(pm.dropped, vec!["C"]);
        assert_eq!(pm.missing_mask[1].iter().filter(|m| **m).count(), 4);
        assert_eq!(pm.prices[1][100], 110.0);
    }

    #[test]
    fn rejects_bad_dates_and_empty_result() {
        let err = pm_from_csv("date,A\n2020-01-02,1\n2020-01-01,2\n", 0.005).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicDates { row: 1, .. }));
        let err = pm_from_csv("date,A\n1,1\n1,2\n", 0.005).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicDates { .. }));
        let err = pm_from_csv("date,A\n1,\n2,\n", 0.005).unwrap_err();
        assert!(matches!(err, Error::NoAssets { .. }));
        let err = pm_from_csv("date,A\n1,-3\n", 0.005).unwrap_err();
        assert!(matches!(err, Error::Csv { .. }));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_prices("/definitely/not/here.csv", 0.005).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn simple_returns() {
        let pm = pm_from_csv("date,A,B,C\n1,100,5,1\n2,110,5,2\n3,99,5,2\n", 0.005).unwrap();
        let rm = compute_returns(&pm).unwrap();
        assert!((rm.returns[0][0] - 0.10).abs() < 1e-15);
        assert!((rm.returns[0][1] + 0.10).abs() < 1e-15);
        assert_eq!(rm.returns[1], vec![0.0, 0.0]);
        assert_eq!(rm.returns[2][0], 1.0);
        assert_eq!(rm.n_returns(), pm.n_dates() - 1);
    }

    #[test]
    fn zero_price_is_rejected() {
        let pm = pm_from_csv("date,A\n1,0\n2,1\n", 0.005).unwrap();
        assert!(matches!(compute_returns(&pm), Err(Error::ZeroPrice { index: 0, .. })));
    }

    #[test]
    fn alternating_returns_normalise_to_unit_magnitude() {
        let row: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rm = local_normalize(&returns_matrix(vec![row.clone()]), 2).unwrap();
        let norm = &rm.normalized.unwrap()[0];
        assert_eq!(norm.len(), row.len() - 1);
        for (j, v) in norm.iter().enumerate() {
            // brute force: window [R_{t-1}, R_t], t = j + 1
            let w = [row[j], row[j + 1]];
            let m = (w[0] + w[1]) / 2.0;
            let var = ((w[0] - m).powi(2) + (w[1] - m).powi(2)) / 2.0;
            let expected = (w[1] - m) / var.sqrt();
            assert!((v - expected).abs() < 1e-12);
            assert!((v.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_returns_have_zero_variance() {
        let err = local_normalize(&returns_matrix(vec![vec![0.01; 30]]), 13).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { index: 12, .. }));
    }

    #[test]
    fn normalisation_preconditions() {
        let rm = returns_matrix(vec![vec![0.1, 0.2, 0.3]]);
        assert!(local_normalize(&rm, 1).is_err());
        assert!(matches!(local_normalize(&rm, 3), Err(Error::TooShort { .. })));
    }

    fn normalized(rows: Vec<Vec<f64>>) -> ReturnMatrix {
        let mut rm = returns_matrix(rows.clone());
        rm.normalized = Some(rows);
        rm.window_n = Some(2);
        rm
    }

    #[test]
    fn identical_assets_correlate_perfectly() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let s = mean_correlation(&normalized(vec![x.clone(), x]), 5, 1, WindowMode::Centered).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn opposite_assets_average_to_zero() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let s = mean_correlation(&normalized(vec![x, neg]), 5, 5, WindowMode::Trailing).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constant_window_is_skipped() {
        let mut x: Vec<f64> = (0..20).map(|i| (i % 3) as f64).collect();
        for v in &mut x[5..10] {
            *v = 1.0;
        }
        let y: Vec<f64> = (0..20).map(|i| (i % 4) as f64).collect();
        let s = mean_correlation(&normalized(vec![x, y]), 5, 5, WindowMode::Trailing).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.skipped, vec![9]);
    }

    #[test]
    fn window_centres() {
        let x: Vec<f64> = (0..12).map(|i| ((i * 5) % 7) as f64).collect();
        let rm = normalized(vec![x]);
        let t = mean_correlation(&rm, 5, 5, WindowMode::Trailing).unwrap();
        assert_eq!(t.centers, vec![4, 9]);
        let c = mean_correlation(&rm, 5, 5, WindowMode::Centered).unwrap();
        assert_eq!(c.centers, vec![2, 7]);
        assert!(matches!(
            mean_correlation(&rm, 13, 1, WindowMode::Centered),
            Err(Error::TooShort { .. })
        ));
    }
}
