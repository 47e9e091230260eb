//! Hourly realized volatility from 10-minute close-bid quotes.
//!
//! Pipeline: [`TickTable::read_csv`] → [`weekend_filter`] → [`fill_gaps`] →
//! [`year_window`] → [`realized_volatility`] → [`deseasonalize`].
//!
//! Returns are log-price differences between consecutive retained bars, so
//! the first return of each trading week spans the weekend. An hourly value
//! is the sum of the six squared returns whose bars close inside that
//! clock hour; hours with a missing bar are dropped.
//!
//! File formats (version [`RV_FORMAT_VERSION`]):
//! - input: `timestamp,close_bid`, RFC 3339 or `YYYY-MM-DD HH:MM:SS` UTC;
//! - output: `t,hour,rv_raw,rv_deseasonalized`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc, Weekday};
use log::warn;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, insufficient, invalid_arg, Error, Result};
use crate::rng;

pub const RV_FORMAT_VERSION: u32 = 1;
pub const BARS_PER_HOUR: usize = 6;
pub const MAX_FILL: usize = 3;
pub const BAR_MINUTES: i64 = 10;

fn bar() -> Duration {
    Duration::minutes(BAR_MINUTES)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub time: DateTime<Utc>,
    pub close_bid: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TickTable {
    rows: Vec<Tick>,
}

impl TickTable {
    /// Errors unless timestamps are strictly increasing.
    pub fn new(rows: Vec<Tick>) -> Result<Self> {
        if let Some(i) = rows.windows(2).position(|w| w[1].time <= w[0].time) {
            return Err(Error::InvalidData(format!(
                "timestamps not strictly increasing at row {} ({} after {})",
                i + 1,
                rows[i + 1].time,
                rows[i].time
            )));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Tick] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
        let header = reader.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
        if header.len() != 2 || &header[0] != "timestamp" || &header[1] != "close_bid" {
            return Err(parse_error(1, format!("expected header `timestamp,close_bid`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_error(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let time = parse_timestamp(&record[0]).ok_or_else(|| parse_error(line, format!("bad timestamp `{}`", &record[0])))?;
            let close_bid: f64 = record[1]
                .parse()
                .map_err(|_| parse_error(line, format!("bad close_bid `{}`", &record[1])))?;
            if !close_bid.is_finite() {
                return Err(parse_error(line, format!("non-finite close_bid `{}`", &record[1])));
            }
            if let Some(prev) = rows.last().map(|t: &Tick| t.time) {
                if time <= prev {
                    return Err(parse_error(line, format!("timestamp {time} does not follow {prev}")));
                }
            }
            rows.push(Tick { time, close_bid });
        }
        Ok(Self { rows })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "close_bid"]).map_err(csv_io)?;
        for t in &self.rows {
            w.write_record([t.time.format("%Y-%m-%dT%H:%M:%SZ").to_string(), t.close_bid.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_error(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

/// Friday 21:00 through Sunday 20:50, both ends included.
pub fn is_weekend(t: DateTime<Utc>) -> bool {
    let minutes = t.hour() * 60 + t.minute();
    let secs = minutes * 60 + t.second();
    match t.weekday() {
        Weekday::Fri => secs >= 21 * 3600,
        Weekday::Sat => true,
        Weekday::Sun => secs <= 20 * 3600 + 50 * 60,
        _ => false,
    }
}

pub fn weekend_filter(ticks: &TickTable) -> TickTable {
    TickTable { rows: ticks.rows.iter().copied().filter(|t| !is_weekend(t.time)).collect() }
}

/// The next 10-minute slot after `t` outside the weekend.
pub fn next_trading_slot(t: DateTime<Utc>) -> DateTime<Utc> {
    let mut s = t + bar();
    while is_weekend(s) {
        s += bar();
    }
    s
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    pub filled_bars: usize,
    /// Gaps longer than the fill limit, as (last bar before, first bar after).
    pub long_gaps: Vec<(DateTime<Utc>, DateTime<Utc>)>,
}

/// Forward-fills runs of at most `max_fill` missing trading bars with the
/// previous close. Longer runs are left open and reported.
pub fn fill_gaps(ticks: &TickTable, max_fill: usize) -> (TickTable, FillReport) {
    let mut rows = Vec::with_capacity(ticks.len());
    let mut report = FillReport::default();
    for (i, &t) in ticks.rows.iter().enumerate() {
        if i > 0 {
            let prev = ticks.rows[i - 1];
            let mut missing = Vec::new();
            let mut slot = next_trading_slot(prev.time);
            while slot < t.time && missing.len() <= max_fill {
                missing.push(slot);
                slot = next_trading_slot(slot);
            }
            if missing.len() > max_fill {
                report.long_gaps.push((prev.time, t.time));
            } else if slot == t.time {
                report.filled_bars += missing.len();
                rows.extend(missing.into_iter().map(|time| Tick { time, close_bid: prev.close_bid }));
            }
        }
        rows.push(t);
    }
    (TickTable { rows }, report)
}

/// The `n`-th given weekday of a month.
fn nth_weekday(year: i32, month: u32, weekday: Weekday, n: u8) -> Option<NaiveDate> {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, n)
}

/// Trading year starting on the third Sunday of June of `year` at 21:00 and
/// ending on the third Friday of June of `year + 1` at 20:50.
pub fn year_bounds(year: i32) -> Result<(DateTime<Utc>, DateTime<Utc>)> {
    let start = nth_weekday(year, 6, Weekday::Sun, 3).and_then(|d| d.and_hms_opt(21, 0, 0));
    let end = nth_weekday(year + 1, 6, Weekday::Fri, 3).and_then(|d| d.and_hms_opt(20, 50, 0));
    match (start, end) {
        (Some(s), Some(e)) => Ok((Utc.from_utc_datetime(&s), Utc.from_utc_datetime(&e))),
        _ => Err(invalid_arg(format!("no trading year starting in {year}"))),
    }
}

/// Rows of `ticks` inside the trading year `year`, preceded by the last
/// row before it so that the first bar has a return.
pub fn year_window(ticks: &TickTable, year: i32) -> Result<TickTable> {
    let (start, end) = year_bounds(year)?;
    let first = ticks.rows.partition_point(|t| t.time < start);
    let last = ticks.rows.partition_point(|t| t.time <= end);
    if first == 0 {
        return Err(insufficient(format!("no quote before the trading year start {start}")));
    }
    if last <= first {
        return Err(insufficient(format!("no quotes between {start} and {end}")));
    }
    Ok(TickTable { rows: ticks.rows[first - 1..last].to_vec() })
}

/// `ln p_i - ln p_{i-1}` over consecutive rows.
pub fn log_returns(ticks: &TickTable) -> Result<Vec<f64>> {
    if ticks.len() < 2 {
        return Err(insufficient("need at least two quotes for a return"));
    }
    if let Some(t) = ticks.rows.iter().find(|t| !(t.close_bid > 0.0)) {
        return Err(Error::InvalidData(format!("nonpositive close bid {} at {}", t.close_bid, t.time)));
    }
    Ok(ticks.rows.windows(2).map(|w| w[1].close_bid.ln() - w[0].close_bid.ln()).collect())
}

/// Sums of consecutive blocks of six squared returns. A trailing partial
/// block is dropped; its length is returned alongside.
pub fn hourly_rv(returns: &[f64]) -> Result<(Vec<f64>, usize)> {
    if returns.is_empty() {
        return Err(insufficient("no returns"));
    }
    let chunks = returns.chunks_exact(BARS_PER_HOUR);
    let dropped = chunks.remainder().len();
    if dropped > 0 {
        warn!("dropping {dropped} trailing returns that do not fill an hour");
    }
    Ok((chunks.map(|c| c.iter().map(|r| r * r).sum()).collect(), dropped))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvSeries {
    pub values: Vec<f64>,
    pub hour_of_day: Vec<u8>,
    /// Start of each hour.
    pub hour_start: Vec<DateTime<Utc>>,
    pub deseasonalized: bool,
    pub seasonal_factors: BTreeMap<u8, f64>,
    pub dropped_hours: usize,
}

impl RvSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Undoes [`deseasonalize`].
    pub fn reseasonalized(&self) -> Vec<f64> {
        if !self.deseasonalized {
            return self.values.clone();
        }
        self.values.iter().zip(&self.hour_of_day).map(|(v, h)| v * self.seasonal_factors[h]).collect()
    }
}

/// Hourly realized volatility from a window produced by [`year_window`].
/// A return is attributed to the clock hour in which its bar closes; it
/// only counts when the previous row is the preceding trading slot.
pub fn realized_volatility(ticks: &TickTable) -> Result<RvSeries> {
    let returns = log_returns(ticks)?;
    let mut hours: BTreeMap<DateTime<Utc>, (usize, f64)> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for (w, r) in ticks.rows.windows(2).zip(returns) {
        let hour = w[1].time.with_minute(0).and_then(|t| t.with_second(0)).expect("valid hour");
        seen.insert(hour);
        if next_trading_slot(w[0].time) == w[1].time && w[1].time.minute() % BAR_MINUTES as u32 == 0 {
            let e = hours.entry(hour).or_default();
            e.0 += 1;
            e.1 += r * r;
        }
    }
    let complete: Vec<(DateTime<Utc>, f64)> =
        hours.into_iter().filter(|(_, (n, _))| *n == BARS_PER_HOUR).map(|(h, (_, rv))| (h, rv)).collect();
    let dropped_hours = seen.len() - complete.len();
    if complete.is_empty() {
        return Err(insufficient("no complete hour of returns"));
    }
    if dropped_hours > 0 {
        warn!("dropped {dropped_hours} incomplete hours");
    }
    Ok(RvSeries {
        hour_of_day: complete.iter().map(|(h, _)| h.hour() as u8).collect(),
        hour_start: complete.iter().map(|(h, _)| *h).collect(),
        values: complete.into_iter().map(|(_, v)| v).collect(),
        deseasonalized: false,
        seasonal_factors: BTreeMap::new(),
        dropped_hours,
    })
}

/// Divides each value by the geometric mean of the positive values of its
/// hour of day over the first `train_len` observations.
pub fn deseasonalize(rv: &RvSeries, train_len: usize) -> Result<RvSeries> {
    if rv.deseasonalized {
        return Err(invalid_arg("series is already deseasonalized"));
    }
    if train_len == 0 || train_len > rv.len() {
        return Err(invalid_arg(format!("training span {train_len} outside 1..={}", rv.len())));
    }
    let mut logs: BTreeMap<u8, (usize, f64)> = BTreeMap::new();
    for (v, h) in rv.values[..train_len].iter().zip(&rv.hour_of_day) {
        let e = logs.entry(*h).or_default();
        if *v > 0.0 {
            e.0 += 1;
            e.1 += v.ln();
        }
    }
    let mut factors = BTreeMap::new();
    for h in rv.hour_of_day.iter().copied() {
        if factors.contains_key(&h) {
            continue;
        }
        match logs.get(&h) {
            Some(&(n, s)) if n > 0 => {
                factors.insert(h, (s / n as f64).exp());
            }
            Some(_) => return Err(degenerate(format!("hour {h} has no positive value in the training span"))),
            None => return Err(insufficient(format!("hour {h} has no observation in the training span"))),
        }
    }
    Ok(RvSeries {
        values: rv.values.iter().zip(&rv.hour_of_day).map(|(v, h)| v / factors[h]).collect(),
        seasonal_factors: factors,
        deseasonalized: true,
        ..rv.clone()
    })
}

/// Writes `t,hour,rv_raw,rv_deseasonalized` (`t` counts from 1).
pub fn write_rv_csv<W: Write>(raw: &RvSeries, deseasonalized: &RvSeries, out: W) -> Result<()> {
    if raw.len() != deseasonalized.len() {
        return Err(invalid_arg("raw and deseasonalized series differ in length"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "hour", "rv_raw", "rv_deseasonalized"]).map_err(csv_io)?;
    for i in 0..raw.len() {
        w.write_record([
            (i + 1).to_string(),
            raw.hour_of_day[i].to_string(),
            raw.values[i].to_string(),
            deseasonalized.values[i].to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Synthetic 10-minute quotes for the trading year `year`, including the
/// week before it and weekend rows (flat prices).
///
/// Log volatility follows an hourly AR(1) with persistence 0.95 around a
/// 24-hour cosine profile of relative amplitude `cycle`.
pub fn synthetic_ticks(year: i32, base_vol: f64, cycle: f64, seed: u64) -> Result<TickTable> {
    if !(base_vol > 0.0) || !(0.0..1.0).contains(&cycle) {
        return Err(invalid_arg("base volatility must be positive and cycle in [0, 1)"));
    }
    let (start, end) = year_bounds(year)?;
    let mut r = rng::stream(seed, 0);
    let mut t = start - Duration::weeks(1);
    let mut log_price = 0.1_f64;
    let mut log_vol = 0.0_f64;
    let mut rows = Vec::new();
    while t <= end {
        if t.minute() == 0 {
            let z: f64 = StandardNormal.sample(&mut r);
            log_vol = 0.95 * log_vol + 0.2 * z;
        }
        if !is_weekend(t) {
            let phase = 2.0 * std::f64::consts::PI * (t.hour() as f64 - 14.0) / 24.0;
            let sigma = base_vol * (1.0 + cycle * phase.cos()) * log_vol.exp();
            let z: f64 = StandardNormal.sample(&mut r);
            log_price += sigma * z;
        }
        rows.push(Tick { time: t, close_bid: log_price.exp() });
        t += bar();
    }
    TickTable::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::autocorrelation;

    fn at(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn ticks(prices: &[(&str, f64)]) -> TickTable {
        TickTable::new(prices.iter().map(|&(s, p)| Tick { time: at(s), close_bid: p }).collect()).unwrap()
    }

    #[test]
    fn returns_are_log_differences() {
        let t = ticks(&[("2014-01-06 10:00:00", 100.0), ("2014-01-06 10:10:00", 100.0), ("2014-01-06 10:20:00", 100.0 * std::f64::consts::E)]);
        let r = log_returns(&t).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 1.0).abs() < 1e-14);
        let bad = ticks(&[("2014-01-06 10:00:00", 1.0), ("2014-01-06 10:10:00", 0.0)]);
        assert!(matches!(log_returns(&bad), Err(Error::InvalidData(_))));
    }

    #[test]
    fn weekend_boundaries() {
        // 2014-01-10 is a Friday
        assert!(is_weekend(at("2014-01-10 21:00:00")));
        assert!(!is_weekend(at("2014-01-10 20:50:00")));
        assert!(is_weekend(at("2014-01-11 12:00:00")));
        assert!(is_weekend(at("2014-01-12 20:50:00")));
        assert!(!is_weekend(at("2014-01-12 21:00:00")));
        let week = ticks(&[("2014-01-07 10:00:00", 1.0), ("2014-01-08 10:00:00", 1.0)]);
        assert_eq!(weekend_filter(&week), week);
        let mixed = ticks(&[("2014-01-10 20:50:00", 1.0), ("2014-01-10 21:00:00", 1.0), ("2014-01-12 21:00:00", 1.0)]);
        let once = weekend_filter(&mixed);
        assert_eq!(once.len(), 2);
        assert_eq!(weekend_filter(&once), once);
    }

    #[test]
    fn hourly_sums() {
        let (rv, dropped) = hourly_rv(&[0.01; 6]).unwrap();
        assert_eq!(dropped, 0);
        assert!((rv[0] - 6e-4).abs() < 1e-18);
        let (rv, dropped) = hourly_rv(&[0.0; 14]).unwrap();
        assert_eq!((rv, dropped), (vec![0.0, 0.0], 2));
        assert!(matches!(hourly_rv(&[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn short_gaps_filled_long_gaps_reported() {
        let t = ticks(&[
            ("2014-01-06 10:00:00", 1.0),
            ("2014-01-06 10:40:00", 2.0), // 3 missing
            ("2014-01-06 11:30:00", 3.0), // 4 missing
        ]);
        let (filled, rep) = fill_gaps(&t, MAX_FILL);
        assert_eq!(rep.filled_bars, 3);
        assert_eq!(rep.long_gaps.len(), 1);
        assert_eq!(filled.len(), 6);
        assert_eq!(filled.rows()[3].close_bid, 1.0);
        // weekend slots are not missing bars
        let w = ticks(&[("2014-01-10 20:50:00", 1.0), ("2014-01-12 21:00:00", 1.0)]);
        assert_eq!(fill_gaps(&w, MAX_FILL).1, FillReport::default());
    }

    #[test]
    fn year_bounds_follow_calendar() {
        let (s, e) = year_bounds(2013).unwrap();
        assert_eq!(s, at("2013-06-16 21:00:00"));
        assert_eq!(e, at("2014-06-20 20:50:00"));
        assert_eq!(year_bounds(2018).unwrap().1, at("2019-06-21 20:50:00"));
    }

    #[test]
    fn one_year_gives_6360_hours() {
        let raw = synthetic_ticks(2013, 2e-4, 0.5, 1).unwrap();
        let window = year_window(&fill_gaps(&weekend_filter(&raw), MAX_FILL).0, 2013).unwrap();
        assert_eq!(window.len(), 38161);
        let rv = realized_volatility(&window).unwrap();
        assert_eq!(rv.len(), 6360);
        assert_eq!(rv.dropped_hours, 0);
        assert_eq!(rv.hour_of_day[0], 21);
        assert!(rv.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn deseasonalization_removes_daily_cycle() {
        let raw = synthetic_ticks(2014, 2e-4, 0.6, 2).unwrap();
        let rv = realized_volatility(&year_window(&weekend_filter(&raw), 2014).unwrap()).unwrap();
        let logs = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
        let band = 2.0 / (rv.len() as f64).sqrt();
        let d = deseasonalize(&rv, 5160).unwrap();
        assert!(autocorrelation(&logs(&rv.values), 24) > band);
        // hourly log-volatility is persistent, so compare against lag 23 and 25
        let ac = |k| autocorrelation(&logs(&d.values), k);
        assert!(ac(24) - 0.5 * (ac(23) + ac(25)) < band, "{} {} {}", ac(23), ac(24), ac(25));
        for (a, b) in d.reseasonalized().iter().zip(&rv.values) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn injected_cycle_falls_inside_band() {
        let n = 6360;
        let mut r = rng::stream(5, 0);
        let hour_of_day: Vec<u8> = (0..n).map(|i| ((i + 21) % 24) as u8).collect();
        let values: Vec<f64> = hour_of_day
            .iter()
            .map(|&h| {
                let z: f64 = StandardNormal.sample(&mut r);
                (1.0 + 0.8 * (2.0 * std::f64::consts::PI * h as f64 / 24.0).sin()) * (0.5 * z).exp()
            })
            .collect();
        let rv = RvSeries {
            values,
            hour_of_day,
            hour_start: vec![Utc::now(); n],
            deseasonalized: false,
            seasonal_factors: BTreeMap::new(),
            dropped_hours: 0,
        };
        let band = 2.0 / (n as f64).sqrt();
        assert!(autocorrelation(&rv.values, 24) > band);
        let d = deseasonalize(&rv, 5160).unwrap();
        assert!(autocorrelation(&d.values, 24).abs() < band, "{}", autocorrelation(&d.values, 24));
    }

    #[test]
    fn constant_rv_has_flat_factors() {
        let rv = RvSeries {
            values: vec![2.5; 48],
            hour_of_day: (0..48).map(|i| (i % 24) as u8).collect(),
            hour_start: vec![Utc::now(); 48],
            deseasonalized: false,
            seasonal_factors: BTreeMap::new(),
            dropped_hours: 0,
        };
        let d = deseasonalize(&rv, 24).unwrap();
        assert!(d.seasonal_factors.values().all(|f| (f - 2.5).abs() < 1e-12));
        assert!(d.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        // factors come from the training span only
        let mut later = rv.clone();
        later.values[30] = 100.0;
        assert_eq!(deseasonalize(&later, 24).unwrap().seasonal_factors, d.seasonal_factors);
        assert!(matches!(deseasonalize(&rv, 12), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn csv_round_trip_and_parse_errors() {
        let t = ticks(&[("2014-01-06T10:00:00Z", 1.25), ("2014-01-06T10:10:00Z", 1.5)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(TickTable::read_csv(buf.as_slice()).unwrap(), t);
        let bad = "timestamp,close_bid\n2014-01-06T10:00:00Z,1.0\n2014-01-06T10:10:00Z,abc\n";
        match TickTable::read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let unordered = "timestamp,close_bid\n2014-01-06T10:10:00Z,1.0\n2014-01-06T10:00:00Z,1.0\n";
        assert!(matches!(TickTable::read_csv(unordered.as_bytes()), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(TickTable::read_csv("time,price\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
