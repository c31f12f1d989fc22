//! Market parameter estimation from daily closing prices and short-rate
//! observations stored as CSV.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;
pub const MIN_LOG_RETURNS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
    /// Rows arrived out of date order and were sorted.
    pub reordered: bool,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn log_returns(&self) -> Vec<f64> {
        self.closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub dates: Vec<NaiveDate>,
    /// Annualized decimal rates.
    pub rates: Vec<f64>,
    pub reordered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    pub r_hat: f64,
    pub v_hat: f64,
    pub sigma_hat: f64,
    /// Annualized arithmetic drift of the price.
    pub mu_hat: f64,
    /// Standard error of `mu_hat`.
    pub mu_std_error: f64,
    pub sample_span_years: f64,
    pub observations_used: usize,
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// `(date, value, line)` triples.
type DatedRows = Vec<(NaiveDate, f64, u64)>;

/// Rows of a two-column (date, value) CSV, keyed by header name.
fn read_dated_column<R: Read>(reader: R, value_column: &str) -> Result<(DatedRows, bool)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name));
    let date_idx = find("date").ok_or_else(|| parse_error(1, "missing `date` column"))?;
    let value_idx = find(value_column).ok_or_else(|| parse_error(1, format!("missing `{value_column}` column")))?;

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let date_field = record.get(date_idx).ok_or_else(|| parse_error(line, "missing date field"))?;
        let value_field = record.get(value_idx).ok_or_else(|| parse_error(line, format!("missing {value_column} field")))?;
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d")
            .map_err(|e| parse_error(line, format!("bad date {date_field:?}: {e}")))?;
        let value: f64 = value_field
            .parse()
            .map_err(|_| parse_error(line, format!("bad {value_column} {value_field:?}")))?;
        if !value.is_finite() {
            return Err(parse_error(line, format!("non-finite {value_column} {value_field:?}")));
        }
        rows.push((date, value, line));
    }
    let reordered = rows.windows(2).any(|w| w[1].0 < w[0].0);
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0));
    }
    Ok((rows, reordered))
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => parse_error(line, format!("{kind:?}")),
    }
}

/// Read `date,close` rows. Out-of-order rows are sorted and flagged;
/// duplicate dates and non-positive closes are rejected.
pub fn read_prices<R: Read>(reader: R) -> Result<PriceSeries> {
    let (rows, reordered) = read_dated_column(reader, "close")?;
    if let Some(&(_, v, line)) = rows.iter().find(|r| r.1 <= 0.0) {
        return Err(parse_error(line, format!("non-positive close {v}")));
    }
    Ok(PriceSeries {
        dates: rows.iter().map(|r| r.0).collect(),
        closes: rows.iter().map(|r| r.1).collect(),
        reordered,
    })
}

pub fn load_prices_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    read_prices(File::open(path)?)
}

/// Read `date,rate` rows of annualized decimal rates.
pub fn read_rates<R: Read>(reader: R) -> Result<RateSeries> {
    let (rows, reordered) = read_dated_column(reader, "rate")?;
    Ok(RateSeries {
        dates: rows.iter().map(|r| r.0).collect(),
        rates: rows.iter().map(|r| r.1).collect(),
        reordered,
    })
}

pub fn load_rates_csv(path: impl AsRef<Path>) -> Result<RateSeries> {
    read_rates(File::open(path)?)
}

/// Annualized estimates from daily log-returns. Consecutive rows are one
/// trading day apart regardless of calendar gaps. The drift adds back half
/// the variance so that it targets the arithmetic drift of the price.
pub fn estimate_market_params(prices: &PriceSeries, rates: &[f64]) -> Result<EstimatedParams> {
    let returns = prices.log_returns();
    if returns.len() < MIN_LOG_RETURNS {
        return Err(Error::InsufficientData(format!(
            "{} log-returns, at least {MIN_LOG_RETURNS} required",
            returns.len()
        )));
    }
    if rates.is_empty() {
        return Err(Error::InsufficientData("no rate observations".into()));
    }
    if let Some(r) = rates.iter().find(|r| !r.is_finite()) {
        return Err(crate::error::domain(format!("non-finite rate {r}")));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sigma_hat = (var * TRADING_DAYS_PER_YEAR).sqrt();
    if !(sigma_hat > 0.0) {
        return Err(crate::error::domain("estimated volatility is zero"));
    }
    let mu_hat = mean * TRADING_DAYS_PER_YEAR + 0.5 * sigma_hat * sigma_hat;
    let r_hat = rates.iter().sum::<f64>() / rates.len() as f64;
    let span = n / TRADING_DAYS_PER_YEAR;
    Ok(EstimatedParams {
        r_hat,
        v_hat: mu_hat - r_hat,
        sigma_hat,
        mu_hat,
        mu_std_error: sigma_hat / span.sqrt(),
        sample_span_years: span,
        observations_used: returns.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        PriceSeries {
            dates: (0..closes.len()).map(|i| start + chrono::Days::new(i as u64)).collect(),
            closes: closes.to_vec(),
            reordered: false,
        }
    }

    #[test]
    fn reads_well_formed_prices() {
        let csv = "date,close\n2020-01-02,100.5\n2020-01-03,101\n2020-01-06,99.25\n";
        let s = read_prices(csv.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(!s.reordered);
        assert_eq!(s.closes, vec![100.5, 101.0, 99.25]);
    }

    #[test]
    fn extra_columns_and_header_case() {
        let csv = "Date,Open,High,Low,Close,Volume\n2020-01-02,1,2,0.5,1.5,100\n";
        let s = read_prices(csv.as_bytes()).unwrap();
        assert_eq!(s.closes, vec![1.5]);
    }

    #[test]
    fn duplicate_date_is_named() {
        let csv = "date,close\n2020-01-02,1\n2020-01-03,2\n2020-01-02,3\n";
        let err = read_prices(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DuplicateDate(d) if d == NaiveDate::from_ymd_opt(2020, 1, 2).unwrap()));
        assert!(err.to_string().contains("2020-01-02"));
    }

    #[test]
    fn out_of_order_rows_are_sorted_and_flagged() {
        let csv = "date,close\n2020-01-06,3\n2020-01-02,1\n2020-01-03,2\n";
        let s = read_prices(csv.as_bytes()).unwrap();
        assert!(s.reordered);
        assert_eq!(s.closes, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let bad_price = "date,close\n2020-01-02,1\n2020-01-03,abc\n";
        assert!(matches!(read_prices(bad_price.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let bad_date = "date,close\n2020-01-02,1\n2020-01-03,2\n2020-13-01,2\n";
        assert!(matches!(read_prices(bad_date.as_bytes()), Err(Error::Parse { line: 4, .. })));
        let negative = "date,close\n2020-01-02,1\n2020-01-03,-2\n";
        assert!(matches!(read_prices(negative.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let ragged = "date,close\n2020-01-02,1\n2020-01-03\n";
        assert!(matches!(read_prices(ragged.as_bytes()), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(read_prices("day,close\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_file_gives_empty_series_then_insufficient_data() {
        let s = read_prices("date,close\n".as_bytes()).unwrap();
        assert!(s.is_empty());
        assert!(matches!(estimate_market_params(&s, &[0.04]), Err(Error::InsufficientData(_))));
        assert!(read_prices("".as_bytes()).is_err());
    }

    #[test]
    fn reads_rates() {
        let csv = "date,rate\n2022-01-03,0.004\n2022-01-04,0.0041\n";
        let r = read_rates(csv.as_bytes()).unwrap();
        assert_eq!(r.rates, vec![0.004, 0.0041]);
    }

    #[test]
    fn constant_prices_rejected() {
        let s = series(&[50.0; 40]);
        assert!(matches!(estimate_market_params(&s, &[0.04]), Err(Error::Domain(_))));
    }

    #[test]
    fn needs_thirty_returns_and_some_rates() {
        let closes: Vec<f64> = (0..30).map(|i| 100.0 + (i % 3) as f64).collect();
        assert!(estimate_market_params(&series(&closes), &[0.04]).is_err());
        let closes: Vec<f64> = (0..31).map(|i| 100.0 + (i % 3) as f64).collect();
        assert!(estimate_market_params(&series(&closes), &[0.04]).is_ok());
        assert!(estimate_market_params(&series(&closes), &[]).is_err());
    }

    #[test]
    fn known_alternating_series() {
        // Log-returns alternate between +a and -a: mean 0, sample variance a^2 n/(n-1).
        let a: f64 = 0.01;
        let closes: Vec<f64> = (0..41).map(|i| if i % 2 == 0 { 1.0 } else { a.exp() }).collect();
        let est = estimate_market_params(&series(&closes), &[0.03, 0.05]).unwrap();
        let sigma = (a * a * 40.0 / 39.0 * 252.0).sqrt();
        assert!((est.sigma_hat - sigma).abs() < 1e-14);
        assert!((est.mu_hat - 0.5 * sigma * sigma).abs() < 1e-14);
        assert!((est.r_hat - 0.04).abs() < 1e-15);
        assert!((est.v_hat - (est.mu_hat - 0.04)).abs() < 1e-15);
        assert_eq!(est.observations_used, 40);
    }

    proptest! {
        #[test]
        fn rescaling_prices_leaves_estimates_unchanged(
            steps in proptest::collection::vec(-0.05f64..0.05, 31..80),
            scale in 1e-3f64..1e3,
        ) {
            let mut closes = vec![100.0];
            for s in &steps {
                closes.push(closes.last().unwrap() * s.exp());
            }
            let scaled: Vec<f64> = closes.iter().map(|c| c * scale).collect();
            let a = estimate_market_params(&series(&closes), &[0.04]);
            let b = estimate_market_params(&series(&scaled), &[0.04]);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.sigma_hat - b.sigma_hat).abs() <= 1e-9 * a.sigma_hat);
                    prop_assert!((a.mu_hat - b.mu_hat).abs() <= 1e-9);
                }
                (a, b) => prop_assert!(a.is_err() && b.is_err()),
            }
        }

        #[test]
        fn reader_never_panics(input in ".{0,200}") {
            let _ = read_prices(input.as_bytes());
            let _ = read_rates(input.as_bytes());
        }
    }
}
