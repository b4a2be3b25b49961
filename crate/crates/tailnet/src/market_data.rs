//! Price-panel ingestion, log returns, period segmentation and the
//! stock-eligibility filter.
//!
//! The trading calendar is the union of dates observed in the input file.
//! Prices are never forward-filled: a gap in the price series yields missing
//! returns rather than fabricated ones.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parses `YYYYMMDD` or ISO-8601 `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if s.contains('-') {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
    } else {
        NaiveDate::parse_from_str(s, "%Y%m%d").ok()
    }
}

/// Formats a date in the compact `YYYYMMDD` notation used throughout the
/// output files.
pub fn format_date(d: NaiveDate) -> String {
    d.format("%Y%m%d").to_string()
}

/// Ticker x day matrix of positive closing prices. Missing observations are
/// stored as NaN and only exposed through [`PricePanel::price`].
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub tickers: Vec<String>,
    /// Strictly increasing trading days.
    pub dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl PricePanel {
    /// Builds a panel from parts; `values` is ticker-major with NaN marking
    /// missing entries.
    pub fn from_parts(tickers: Vec<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), tickers.len() * dates.len());
        debug_assert!(dates.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(values.iter().all(|v| v.is_nan() || *v > 0.0));
        Self {
            tickers,
            dates,
            values,
        }
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    /// Closing price of ticker `i` on day `j`, if present.
    pub fn price(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.dates.len() + j];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn n_missing(&self, i: usize) -> usize {
        let d = self.dates.len();
        self.values[i * d..(i + 1) * d]
            .iter()
            .filter(|v| v.is_nan())
            .count()
    }
}

/// Ticker x day matrix of log returns with NaN marking missing entries.
/// A return is present only when both the day's and the previous day's
/// prices are present.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ReturnsPanel {
    pub fn from_parts(tickers: Vec<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), tickers.len() * dates.len());
        debug_assert!(dates.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(values.iter().all(|v| v.is_nan() || v.is_finite()));
        Self {
            tickers,
            dates,
            values,
        }
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn ret(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.dates.len() + j];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Raw row for ticker `i`, NaN where missing.
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dates.len();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn n_missing(&self, i: usize) -> usize {
        self.row(i).iter().filter(|v| v.is_nan()).count()
    }
}

/// One analysis period, both endpoints inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub label: String,
    #[serde(with = "compact_date")]
    pub start: NaiveDate,
    #[serde(with = "compact_date")]
    pub end: NaiveDate,
}

impl PeriodSpec {
    pub fn new(label: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Self {
        let spec = Self {
            label: label.into(),
            start,
            end,
        };
        assert!(spec.start <= spec.end, "period start after end");
        spec
    }
}

/// Serde adapter for `YYYYMMDD`-or-ISO date fields.
pub(crate) mod compact_date {
    use super::*;
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_date(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<NaiveDate, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = NaiveDate;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "a date as YYYYMMDD or YYYY-MM-DD")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<NaiveDate, E> {
                parse_date(v).ok_or_else(|| E::custom(format!("invalid date '{v}'")))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<NaiveDate, E> {
                parse_date(&v.to_string()).ok_or_else(|| E::custom(format!("invalid date {v}")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<NaiveDate, E> {
                self.visit_i64(v as i64)
            }
        }
        d.deserialize_any(V)
    }
}

/// Loads a `date,ticker,close` CSV into a price panel. The panel covers the
/// union of all dates observed; tickers with no row on a date get a missing
/// marker there.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PricePanel> {
    let file = std::fs::File::open(path)?;
    load_prices_from(file)
}

/// Same as [`load_prices`] for any reader.
pub fn load_prices_from(reader: impl Read) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    // line 1 is the header
    let mut rows: Vec<(NaiveDate, String, f64, usize)> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 3 fields (date,ticker,close), got {}", record.len()),
            });
        }
        let date = parse_date(&record[0]).ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("invalid date '{}'", &record[0]),
        })?;
        let ticker = record[1].trim().to_string();
        if ticker.is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty ticker".into(),
            });
        }
        let close: f64 = record[2].trim().parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("invalid close '{}'", &record[2]),
        })?;
        if !close.is_finite() || close <= 0.0 {
            return Err(Error::NonPositivePrice {
                line,
                ticker,
                date: format_date(date),
                close,
            });
        }
        rows.push((date, ticker, close, line));
    }

    let mut dates: Vec<NaiveDate> = rows.iter().map(|r| r.0).collect();
    dates.sort_unstable();
    dates.dedup();
    let date_idx: HashMap<NaiveDate, usize> =
        dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    // ticker order: first appearance in the file
    let mut tickers: Vec<String> = Vec::new();
    let mut ticker_idx: HashMap<String, usize> = HashMap::new();
    for (_, t, _, _) in &rows {
        if !ticker_idx.contains_key(t) {
            ticker_idx.insert(t.clone(), tickers.len());
            tickers.push(t.clone());
        }
    }

    let mut values = vec![f64::NAN; tickers.len() * dates.len()];
    for (date, ticker, close, line) in rows {
        let i = ticker_idx[&ticker];
        let j = date_idx[&date];
        let slot = &mut values[i * dates.len() + j];
        if !slot.is_nan() {
            return Err(Error::DuplicateRow {
                line,
                ticker,
                date: format_date(date),
            });
        }
        *slot = close;
    }

    Ok(PricePanel::from_parts(tickers, dates, values))
}

/// Writes a panel back out in the same `date,ticker,close` schema, skipping
/// missing entries. Rows are ordered by date, then ticker.
pub fn write_prices(panel: &PricePanel, mut w: impl std::io::Write) -> Result<()> {
    writeln!(w, "date,ticker,close")?;
    for (j, date) in panel.dates.iter().enumerate() {
        for (i, ticker) in panel.tickers.iter().enumerate() {
            if let Some(p) = panel.price(i, j) {
                writeln!(w, "{},{},{}", format_date(*date), ticker, crate::numerics::fmt9(p))?;
            }
        }
    }
    Ok(())
}

/// Log returns r_t = ln(P_t / P_{t-1}) over the union calendar. The returns
/// panel has one fewer date than the price panel.
pub fn log_returns(panel: &PricePanel) -> ReturnsPanel {
    let n_dates = panel.n_dates();
    let ret_dates: Vec<NaiveDate> = panel.dates[1.min(n_dates)..].to_vec();
    let mut values = vec![f64::NAN; panel.n_tickers() * ret_dates.len()];
    for i in 0..panel.n_tickers() {
        for j in 1..n_dates {
            if let (Some(prev), Some(cur)) = (panel.price(i, j - 1), panel.price(i, j)) {
                values[i * ret_dates.len() + (j - 1)] = (cur / prev).ln();
            }
        }
    }
    ReturnsPanel::from_parts(panel.tickers.clone(), ret_dates, values)
}

/// Restricts a returns panel to the dates of each period spec, preserving
/// ticker order. Errors on a period containing no trading days.
pub fn segment_periods(panel: &ReturnsPanel, specs: &[PeriodSpec]) -> Result<Vec<ReturnsPanel>> {
    specs.iter().map(|spec| segment_period(panel, spec)).collect()
}

/// Single-period restriction; see [`segment_periods`].
pub fn segment_period(panel: &ReturnsPanel, spec: &PeriodSpec) -> Result<ReturnsPanel> {
    let idx: Vec<usize> = panel
        .dates
        .iter()
        .enumerate()
        .filter(|(_, d)| **d >= spec.start && **d <= spec.end)
        .map(|(j, _)| j)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyPeriod {
            label: spec.label.clone(),
            start: format_date(spec.start),
            end: format_date(spec.end),
        });
    }
    let dates: Vec<NaiveDate> = idx.iter().map(|&j| panel.dates[j]).collect();
    let mut values = Vec::with_capacity(panel.n_tickers() * idx.len());
    for i in 0..panel.n_tickers() {
        let row = panel.row(i);
        values.extend(idx.iter().map(|&j| row[j]));
    }
    Ok(ReturnsPanel::from_parts(
        panel.tickers.clone(),
        dates,
        values,
    ))
}

/// Retains exactly the tickers whose missing-return count is at most
/// `max_missing` (the cutoff itself is kept), preserving order.
pub fn eligibility_filter(panel: &ReturnsPanel, max_missing: usize) -> Result<ReturnsPanel> {
    let keep: Vec<usize> = (0..panel.n_tickers())
        .filter(|&i| panel.n_missing(i) <= max_missing)
        .collect();
    if keep.is_empty() {
        return Err(Error::NoEligibleStocks);
    }
    let tickers = keep.iter().map(|&i| panel.tickers[i].clone()).collect();
    let d = panel.n_dates();
    let mut values = Vec::with_capacity(keep.len() * d);
    for &i in &keep {
        values.extend_from_slice(panel.row(i));
    }
    Ok(ReturnsPanel::from_parts(
        tickers,
        panel.dates.clone(),
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn date(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn panel_from_csv(csv: &str) -> PricePanel {
        load_prices_from(csv.as_bytes()).unwrap()
    }

    #[test]
    fn ingests_full_panel() {
        let p = panel_from_csv(
            "date,ticker,close\n\
             20200101,A,1.0\n20200102,A,2.0\n20200103,A,3.0\n\
             20200101,B,4.0\n20200102,B,5.0\n20200103,B,6.0\n",
        );
        assert_eq!(p.n_tickers(), 2);
        assert_eq!(p.n_dates(), 3);
        assert_eq!((0..2).map(|i| p.n_missing(i)).sum::<usize>(), 0);
        assert_eq!(p.price(1, 2), Some(6.0));
    }

    #[test]
    fn missing_day_gets_marker() {
        let p = panel_from_csv(
            "date,ticker,close\n\
             20200101,A,1.0\n20200103,A,3.0\n\
             20200101,B,4.0\n20200102,B,5.0\n20200103,B,6.0\n",
        );
        // A has no row on day 2
        assert_eq!(p.price(0, 1), None);
        assert_eq!(p.n_missing(0), 1);
    }

    #[test]
    fn rejects_non_positive_price() {
        let err = load_prices_from("date,ticker,close\n20200101,A,-1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::NonPositivePrice { .. }), "{err}");
    }

    #[test]
    fn rejects_duplicate_rows() {
        let err = load_prices_from(
            "date,ticker,close\n20200101,A,1.0\n20200101,A,2.0\n".as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateRow { line: 3, .. }), "{err}");
    }

    #[test]
    fn reports_malformed_row_line() {
        let err =
            load_prices_from("date,ticker,close\n20200101,A,1.0\nnot-a-date,B,2\n".as_bytes())
                .unwrap_err();
        match err {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn accepts_iso_dates() {
        let p = panel_from_csv("date,ticker,close\n2020-01-01,A,1.0\n20200102,A,2.0\n");
        assert_eq!(p.n_dates(), 2);
        assert_eq!(p.dates[0], date("20200101"));
    }

    #[test]
    fn log_returns_closed_forms() {
        let e = std::f64::consts::E;
        let p = panel_from_csv(&format!(
            "date,ticker,close\n20200101,A,1.0\n20200102,A,{e}\n20200103,A,{e}\n"
        ));
        let r = log_returns(&p);
        assert_eq!(r.n_dates(), 2);
        assert_relative_eq!(r.ret(0, 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.ret(0, 1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_return_of_110_over_100() {
        let p = panel_from_csv("date,ticker,close\n20200101,A,100\n20200102,A,110\n");
        let r = log_returns(&p);
        assert_relative_eq!(r.ret(0, 0).unwrap(), 0.09531017980432486, epsilon = 1e-12);
    }

    #[test]
    fn gap_breaks_both_neighboring_returns() {
        let p = panel_from_csv(
            "date,ticker,close\n\
             20200101,A,100\n20200103,A,120\n\
             20200101,B,1\n20200102,B,1\n20200103,B,1\n",
        );
        let r = log_returns(&p);
        assert_eq!(r.ret(0, 0), None);
        assert_eq!(r.ret(0, 1), None);
        assert_eq!(r.ret(1, 0), Some(0.0));
    }

    #[test]
    fn segment_restricts_dates() {
        let p = panel_from_csv(
            "date,ticker,close\n\
             20200101,A,1\n20200102,A,1\n20200103,A,1\n20200106,A,1\n",
        );
        let r = log_returns(&p);
        let spec = PeriodSpec::new("p1", date("20200102"), date("20200103"));
        let sub = segment_period(&r, &spec).unwrap();
        assert!(sub.dates.iter().all(|d| *d >= spec.start && *d <= spec.end));
        assert_eq!(sub.n_dates(), 2);
    }

    #[test]
    fn segment_covering_everything_is_identity() {
        let p = panel_from_csv(
            "date,ticker,close\n20200101,A,1\n20200102,A,2\n20200103,A,3\n",
        );
        let r = log_returns(&p);
        let spec = PeriodSpec::new("all", date("20190101"), date("20210101"));
        let sub = segment_period(&r, &spec).unwrap();
        assert_eq!(sub, r);
    }

    #[test]
    fn empty_period_errors() {
        let p = panel_from_csv("date,ticker,close\n20200101,A,1\n20200102,A,2\n");
        let r = log_returns(&p);
        let spec = PeriodSpec::new("gap", date("20250101"), date("20250301"));
        assert!(matches!(
            segment_period(&r, &spec),
            Err(Error::EmptyPeriod { .. })
        ));
    }

    #[test]
    fn eligibility_boundary_is_kept() {
        // ticker A: 31 missing returns -> removed; B: exactly 30 -> kept; C: 0 -> kept
        let n_days = 200;
        let dates: Vec<NaiveDate> = (0..n_days)
            .map(|k| date("20200101") + chrono::Days::new(k))
            .collect();
        let mut values = vec![0.01; 3 * n_days as usize];
        for j in 0..31 {
            values[j] = f64::NAN; // A
        }
        for j in 0..30 {
            values[n_days as usize + j] = f64::NAN; // B
        }
        let r = ReturnsPanel::from_parts(
            vec!["A".into(), "B".into(), "C".into()],
            dates,
            values,
        );
        let kept = eligibility_filter(&r, 30).unwrap();
        assert_eq!(kept.tickers, vec!["B".to_string(), "C".to_string()]);
    }

    #[test]
    fn eligibility_all_removed_errors() {
        let r = ReturnsPanel::from_parts(
            vec!["A".into()],
            vec![date("20200101"), date("20200102")],
            vec![f64::NAN, f64::NAN],
        );
        assert!(matches!(
            eligibility_filter(&r, 1),
            Err(Error::NoEligibleStocks)
        ));
    }

    #[test]
    fn eligibility_filter_is_idempotent() {
        let n_days = 100usize;
        let dates: Vec<NaiveDate> = (0..n_days as u64)
            .map(|k| date("20200101") + chrono::Days::new(k))
            .collect();
        let mut values = vec![0.01; 2 * n_days];
        for j in 0..40 {
            values[j] = f64::NAN;
        }
        let r = ReturnsPanel::from_parts(vec!["A".into(), "B".into()], dates, values);
        let once = eligibility_filter(&r, 30).unwrap();
        let twice = eligibility_filter(&once, 30).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn returns_reconstruct_price_ratio() {
        // exp of the cumulative sum of returns recovers P_T / P_0
        let prices = [100.0, 101.5, 99.2, 104.0, 103.1, 108.8];
        let csv: String = std::iter::once("date,ticker,close\n".to_string())
            .chain(prices.iter().enumerate().map(|(k, p)| {
                format!("2020010{},A,{}\n", k + 1, p)
            }))
            .collect();
        let panel = panel_from_csv(&csv);
        let r = log_returns(&panel);
        let total: f64 = (0..r.n_dates()).map(|j| r.ret(0, j).unwrap()).sum();
        assert_relative_eq!(total.exp(), prices[5] / prices[0], max_relative = 1e-12);
    }
}
