//! 5-minute tick series: CSV ingest, serialization, a seeded synthetic
//! generator and daily OHLCV aggregation.

use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Header every tick file must carry, in this order.
pub const TICK_HEADER: [&str; 8] = ["date", "time", "open", "high", "low", "close", "volume", "nifty"];

pub const BAR_MINUTES: u16 = 5;

/// One 5-minute bar plus the market index level observed at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub date: NaiveDate,
    /// Minutes since midnight.
    pub time: u16,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    pub index_level: f64,
}

impl TickRecord {
    fn check(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and positive".into());
        }
        if !(self.index_level.is_finite() && self.index_level > 0.0) {
            return Err("index level must be finite and positive".into());
        }
        if self.low > self.high {
            return Err(format!("low {} > high {}", self.low, self.high));
        }
        if self.open < self.low || self.open > self.high {
            return Err(format!("open {} outside [{}, {}]", self.open, self.low, self.high));
        }
        if self.close < self.low || self.close > self.high {
            return Err(format!("close {} outside [{}, {}]", self.close, self.low, self.high));
        }
        if self.time >= 1440 {
            return Err(format!("time {} past midnight", self.time));
        }
        if self.time % BAR_MINUTES != 0 {
            return Err(format!("time {} is not on the 5-minute grid", format_time(self.time)));
        }
        Ok(())
    }
}

/// A validated tick series, sorted by (date, time) with no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    pub symbol: String,
    records: Vec<TickRecord>,
}

impl TickSeries {
    /// Validates every record, sorts, and rejects duplicate timestamps.
    pub fn new(symbol: impl Into<String>, mut records: Vec<TickRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            r.check()
                .map_err(|reason| Error::InvariantViolation { line: i + 1, reason })?;
        }
        records.sort_by_key(|r| (r.date, r.time));
        if let Some(w) = records.windows(2).find(|w| (w[0].date, w[0].time) == (w[1].date, w[1].time)) {
            return Err(Error::DuplicateTimestamp {
                date: w[0].date,
                time: format_time(w[0].time),
            });
        }
        Ok(Self {
            symbol: symbol.into(),
            records,
        })
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct trading dates in ascending order.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out: Vec<NaiveDate> = self.records.iter().map(|r| r.date).collect();
        out.dedup();
        out
    }

    /// Records whose date falls in `year`.
    pub fn filter_year(&self, year: i32) -> TickSeries {
        TickSeries {
            symbol: self.symbol.clone(),
            records: self.records.iter().filter(|r| r.date.year() == year).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IngestFormat {
    #[default]
    Csv,
    Tsv,
}

impl IngestFormat {
    fn delimiter(self) -> u8 {
        match self {
            IngestFormat::Csv => b',',
            IngestFormat::Tsv => b'\t',
        }
    }
}

pub fn parse_time(s: &str) -> Option<u16> {
    let (h, m) = s.split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    let h: u16 = h.parse().ok()?;
    let m: u16 = m.parse().ok()?;
    (h < 24 && m < 60).then_some(h * 60 + m)
}

pub fn format_time(minutes: u16) -> String {
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

/// Reads a tick file. The header row is mandatory and must match
/// [`TICK_HEADER`]; output order does not depend on input row order.
pub fn parse_ticks<R: Read>(source: R, format: IngestFormat) -> Result<TickSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let header = reader.headers()?.clone();
    if header.iter().ne(TICK_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header {:?}, got {:?}", TICK_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |reason: String| Error::MalformedRow { line, reason };
        if row.len() != TICK_HEADER.len() {
            return Err(bad(format!("expected {} fields, got {}", TICK_HEADER.len(), row.len())));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|e| bad(format!("date {:?}: {e}", &row[0])))?;
        let time = parse_time(&row[1]).ok_or_else(|| bad(format!("time {:?}", &row[1])))?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("{} {:?}: {e}", TICK_HEADER[i], &row[i])))
        };
        let volume = row[6]
            .parse::<u64>()
            .map_err(|e| bad(format!("volume {:?}: {e}", &row[6])))?;
        let record = TickRecord {
            date,
            time,
            open: num(2)?,
            high: num(3)?,
            low: num(4)?,
            close: num(5)?,
            volume,
            index_level: num(7)?,
        };
        record
            .check()
            .map_err(|reason| Error::InvariantViolation { line, reason })?;
        records.push(record);
    }
    let symbol = String::new();
    TickSeries::new(symbol, records)
}

/// Writes a series in the ingest format. `parse_ticks` of the output
/// reproduces the series exactly (floats use shortest round-trip form).
pub fn write_ticks<W: Write>(series: &TickSeries, sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    w.write_record(TICK_HEADER)?;
    for r in series.records() {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            format_time(r.time),
            r.open.to_string(),
            r.high.to_string(),
            r.low.to_string(),
            r.close.to_string(),
            r.volume.to_string(),
            r.index_level.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of the synthetic tick generator.
///
/// Day-to-day the price follows a geometric Brownian motion (overnight gap
/// with `drift`/`volatility`); inside the day each 5-minute bar moves by a
/// lognormal `jitter` plus a per-slot drift that follows an AR(1) process
/// across slots (`slot_momentum`, `slot_drift_sd`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub start_date: NaiveDate,
    pub start_price: f64,
    pub start_index: f64,
    /// Daily log drift.
    pub drift: f64,
    /// Daily log volatility of the overnight backbone.
    pub volatility: f64,
    /// Per-bar log-return standard deviation.
    pub jitter: f64,
    pub slot_momentum: f64,
    /// Innovation sd of the per-slot drift, in log units per slot.
    pub slot_drift_sd: f64,
    /// Sensitivity of the index log level to the stock's log level.
    pub index_beta: f64,
    pub index_jitter: f64,
    pub volume_mean: f64,
    /// Probability that a business day is skipped as a holiday.
    pub holiday_prob: f64,
    pub market_open: u16,
    pub market_close: u16,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            start_date: NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date"),
            start_price: 500.0,
            start_index: 6000.0,
            drift: 0.0002,
            volatility: 0.004,
            jitter: 0.0005,
            slot_momentum: 0.6,
            slot_drift_sd: 0.004,
            index_beta: 0.5,
            index_jitter: 0.0003,
            volume_mean: 2000.0,
            holiday_prob: 0.0,
            market_open: 540,
            market_close: 930,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::BadParams(s.to_string()));
        if !(self.start_price.is_finite() && self.start_price > 0.0) {
            return bad("start price must be positive");
        }
        if !(self.start_index.is_finite() && self.start_index > 0.0) {
            return bad("start index must be positive");
        }
        if !self.drift.is_finite() {
            return bad("drift must be finite");
        }
        for (name, v) in [
            ("volatility", self.volatility),
            ("jitter", self.jitter),
            ("slot_drift_sd", self.slot_drift_sd),
            ("index_jitter", self.index_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::BadParams(format!("{name} must be non-negative")));
            }
        }
        if !(self.volume_mean.is_finite() && self.volume_mean >= 1.0) {
            return bad("volume mean must be at least 1");
        }
        if !(0.0..1.0).contains(&self.holiday_prob) {
            return bad("holiday probability must be in [0, 1)");
        }
        if !self.slot_momentum.is_finite() || self.slot_momentum.abs() >= 1.0 {
            return bad("slot momentum must lie in (-1, 1)");
        }
        if self.market_open % BAR_MINUTES != 0 || self.market_close % BAR_MINUTES != 0 || self.market_open >= self.market_close || self.market_close >= 1440 {
            return bad("market hours must be on the 5-minute grid with open < close");
        }
        Ok(())
    }
}

/// Intraday slot index (0, 1, 2) used by the generator's drift process.
fn synth_slot(time: u16) -> usize {
    match time {
        t if t <= 690 => 0,
        t if t <= 810 => 1,
        _ => 2,
    }
}

/// Generates `days` business days of 5-minute ticks. Pure in
/// `(seed, days, params)`.
pub fn synth_ticks(seed: u64, days: usize, params: &SynthParams) -> Result<TickSeries> {
    params.validate()?;
    if days == 0 {
        return Err(Error::BadParams("days must be at least 1".into()));
    }
    let mut rng = rng_from(seed);

    let times: Vec<u16> = (params.market_open..=params.market_close).step_by(BAR_MINUTES as usize).collect();
    let mut slot_sizes = [0usize; 3];
    for &t in &times {
        slot_sizes[synth_slot(t)] += 1;
    }

    let mut records = Vec::with_capacity(days * times.len());
    let mut date = params.start_date;
    let mut price = params.start_price;
    let mut index_walk = 0.0f64;
    let mut slot_drift = 0.0f64;
    let mut produced = 0usize;
    let mut first_day = true;

    while produced < days {
        if matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            date += Duration::days(1);
            continue;
        }
        // One holiday draw per business day keeps the stream aligned.
        let holiday_draw: f64 = rng.random();
        if holiday_draw < params.holiday_prob {
            date += Duration::days(1);
            continue;
        }

        if !first_day {
            let z = gauss(&mut rng);
            price *= (params.drift - 0.5 * params.volatility * params.volatility + params.volatility * z).exp();
        } else {
            first_day = false;
        }

        let mut current_slot = usize::MAX;
        let mut open = price;
        for &t in &times {
            let slot = synth_slot(t);
            if slot != current_slot {
                current_slot = slot;
                slot_drift = params.slot_momentum * slot_drift + params.slot_drift_sd * gauss(&mut rng);
            }
            let step = slot_drift / slot_sizes[slot] as f64 + params.jitter * gauss(&mut rng);
            let close = open * step.exp();
            let wick_hi = (0.5 * params.jitter * gauss(&mut rng)).abs();
            let wick_lo = (0.5 * params.jitter * gauss(&mut rng)).abs();
            let high = open.max(close) * wick_hi.exp();
            let low = open.min(close) * (-wick_lo).exp();
            index_walk += params.index_jitter * gauss(&mut rng);
            let index_level = params.start_index * (params.index_beta * (close / params.start_price).ln() + index_walk).exp();
            let volume = (params.volume_mean * (0.3 * gauss(&mut rng) - 0.045).exp()).round().max(1.0) as u64;
            records.push(TickRecord {
                date,
                time: t,
                open,
                high: high.max(open).max(close),
                low: low.min(open).min(close),
                close,
                volume,
                index_level,
            });
            open = close;
        }
        price = open;
        produced += 1;
        date += Duration::days(1);
    }

    TickSeries::new("SYNTH", records)
}

fn gauss(rng: &mut crate::rng::Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One trading day aggregated from its 5-minute bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    /// Index level at the day's last bar.
    pub index_close: f64,
}

/// open = first open, high = max, low = min, close = last close, volume = sum.
pub fn to_daily_bars(series: &TickSeries) -> Result<Vec<DailyBar>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut out: Vec<DailyBar> = Vec::new();
    for r in series.records() {
        match out.last_mut() {
            Some(bar) if bar.date == r.date => {
                bar.high = bar.high.max(r.high);
                bar.low = bar.low.min(r.low);
                bar.close = r.close;
                bar.volume += r.volume;
                bar.index_close = r.index_level;
            }
            _ => out.push(DailyBar {
                date: r.date,
                open: r.open,
                high: r.high,
                low: r.low,
                close: r.close,
                volume: r.volume,
                index_close: r.index_level,
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "date,time,open,high,low,close,volume,nifty\n";

    fn parse(body: &str) -> Result<TickSeries> {
        parse_ticks(format!("{HEADER}{body}").as_bytes(), IngestFormat::Csv)
    }

    #[test]
    fn parses_single_row() {
        let s = parse("2013-05-22,09:05,100,101,99,100.5,1200,5900\n").unwrap();
        assert_eq!(s.len(), 1);
        let r = s.records()[0];
        assert_eq!(r.time, 545);
        assert_eq!(r.date, NaiveDate::from_ymd_opt(2013, 5, 22).unwrap());
        assert_eq!((r.open, r.high, r.low, r.close), (100.0, 101.0, 99.0, 100.5));
        assert_eq!(r.volume, 1200);
        assert_eq!(r.index_level, 5900.0);
    }

    #[test]
    fn rejects_low_above_high() {
        let err = parse("2013-05-22,09:05,101,101,102,101,1200,5900\n").unwrap_err();
        assert!(matches!(err, Error::InvariantViolation { .. }), "{err}");
    }

    #[test]
    fn rejects_duplicate_timestamp() {
        let err = parse("2013-05-22,09:05,100,101,99,100.5,1200,5900\n2013-05-22,09:05,100,101,99,100.5,1300,5900\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateTimestamp { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_field_count_and_types() {
        assert!(matches!(parse("2013-05-22,09:05,100,101,99,100.5,1200\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(parse("2013-05-22,9h05,100,101,99,100.5,1200,5900\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(parse("2013-05-22,09:05,abc,101,99,100.5,1200,5900\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(parse("2013-05-22,09:05,100,101,99,100.5,-3,5900\n"), Err(Error::MalformedRow { .. })));
        let wrong_header = parse_ticks("date,time,open\n".as_bytes(), IngestFormat::Csv);
        assert!(matches!(wrong_header, Err(Error::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn rejects_off_grid_time() {
        let err = parse("2013-05-22,09:07,100,101,99,100.5,1200,5900\n").unwrap_err();
        assert!(matches!(err, Error::InvariantViolation { .. }));
    }

    #[test]
    fn output_order_independent_of_input_order() {
        let a = parse("2013-05-22,09:05,100,101,99,100.5,1200,5900\n2013-05-21,09:00,100,101,99,100.5,1200,5900\n").unwrap();
        let b = parse("2013-05-21,09:00,100,101,99,100.5,1200,5900\n2013-05-22,09:05,100,101,99,100.5,1200,5900\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records()[0].date.day(), 21);
    }

    #[test]
    fn synth_is_deterministic() {
        let p = SynthParams::default();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_ticks(&synth_ticks(7, 1, &p).unwrap(), &mut a).unwrap();
        write_ticks(&synth_ticks(7, 1, &p).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_ticks(&synth_ticks(8, 1, &p).unwrap(), &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_zero_noise_opens_follow_drift() {
        let p = SynthParams {
            volatility: 0.0,
            jitter: 0.0,
            slot_drift_sd: 0.0,
            drift: 0.001,
            ..SynthParams::default()
        };
        let s = synth_ticks(3, 5, &p).unwrap();
        for (d, date) in s.dates().into_iter().enumerate() {
            let expected = p.start_price * (p.drift * d as f64).exp();
            for r in s.records().iter().filter(|r| r.date == date) {
                assert!((r.open - expected).abs() < 1e-9 * expected, "day {d}: {} vs {expected}", r.open);
            }
        }
        let flat = SynthParams { drift: 0.0, ..p };
        let s = synth_ticks(3, 3, &flat).unwrap();
        assert!(s.records().iter().all(|r| r.open == flat.start_price));
    }

    #[test]
    fn synth_rejects_bad_params() {
        let p = SynthParams { volatility: -0.1, ..SynthParams::default() };
        assert!(matches!(synth_ticks(1, 1, &p), Err(Error::BadParams(_))));
        let p = SynthParams { start_price: 0.0, ..SynthParams::default() };
        assert!(matches!(synth_ticks(1, 1, &p), Err(Error::BadParams(_))));
        assert!(matches!(synth_ticks(1, 0, &SynthParams::default()), Err(Error::BadParams(_))));
    }

    #[test]
    fn synth_250_days_satisfies_invariants() {
        let s = synth_ticks(7, 250, &SynthParams::default()).unwrap();
        for r in s.records() {
            assert!(r.check().is_ok(), "{r:?}");
            assert!(matches!(r.date.weekday(), Weekday::Mon | Weekday::Tue | Weekday::Wed | Weekday::Thu | Weekday::Fri));
        }
        for w in s.records().windows(2) {
            assert!((w[0].date, w[0].time) < (w[1].date, w[1].time));
            if w[0].date == w[1].date {
                assert_eq!((w[1].time - w[0].time) % BAR_MINUTES, 0);
            }
        }
        assert_eq!(s.dates().len(), 250);
    }

    #[test]
    fn daily_bar_rule() {
        let s = parse(
            "2013-05-22,09:00,10,12,9,11,5,6000\n\
             2013-05-22,09:05,11,13,8,12,5,6001\n",
        )
        .unwrap();
        let bars = to_daily_bars(&s).unwrap();
        assert_eq!(bars.len(), 1);
        let b = bars[0];
        assert_eq!((b.open, b.high, b.low, b.close, b.volume), (10.0, 13.0, 8.0, 12.0, 10));
    }

    #[test]
    fn daily_bar_single_record_is_identity() {
        let s = parse("2013-05-22,09:00,10,12,9,11,7,6000\n").unwrap();
        let b = to_daily_bars(&s).unwrap()[0];
        assert_eq!((b.open, b.high, b.low, b.close, b.volume), (10.0, 12.0, 9.0, 11.0, 7));
    }

    #[test]
    fn daily_bar_count_matches_distinct_dates() {
        let s = synth_ticks(11, 250, &SynthParams { holiday_prob: 0.05, ..SynthParams::default() }).unwrap();
        let distinct: std::collections::BTreeSet<_> = s.records().iter().map(|r| r.date).collect();
        assert_eq!(to_daily_bars(&s).unwrap().len(), distinct.len());
        assert!(matches!(to_daily_bars(&TickSeries::new("x", vec![]).unwrap()), Err(Error::EmptySeries)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn csv_round_trip(seed in 0u64..1000, days in 1usize..4) {
            let s = synth_ticks(seed, days, &SynthParams::default()).unwrap();
            let mut buf = Vec::new();
            write_ticks(&s, &mut buf).unwrap();
            let back = parse_ticks(buf.as_slice(), IngestFormat::Csv).unwrap();
            prop_assert_eq!(back.records(), s.records());
        }
    }
}
