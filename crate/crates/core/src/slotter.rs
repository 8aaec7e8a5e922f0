//! Aggregates each trading day's 5-minute bars into three intraday slots.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::TickSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SlotId {
    Morning = 1,
    Afternoon = 2,
    Evening = 3,
}

impl SlotId {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Slot boundaries in minutes since midnight; both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlotConfig {
    pub morning: (u16, u16),
    pub afternoon: (u16, u16),
    pub evening_start: u16,
    pub market_close: u16,
}

impl Default for SlotConfig {
    fn default() -> Self {
        Self {
            morning: (540, 690),
            afternoon: (695, 810),
            evening_start: 815,
            market_close: 930,
        }
    }
}

impl SlotConfig {
    pub fn with_close(market_close: u16) -> Self {
        Self {
            market_close,
            ..Self::default()
        }
    }
}

/// Maps a time of day to its slot; `None` means outside trading hours.
pub fn slot_window(time: u16, config: &SlotConfig) -> Option<SlotId> {
    if (config.morning.0..=config.morning.1).contains(&time) {
        Some(SlotId::Morning)
    } else if (config.afternoon.0..=config.afternoon.1).contains(&time) {
        Some(SlotId::Afternoon)
    } else if (config.evening_start..=config.market_close).contains(&time) {
        Some(SlotId::Evening)
    } else {
        None
    }
}

/// Per-slot statistics consumed by the feature derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotBar {
    pub date: NaiveDate,
    pub slot: SlotId,
    pub first_open: f64,
    pub first_high: f64,
    pub first_close: f64,
    pub last_close: f64,
    pub low_mean: f64,
    pub vol_mean: f64,
    pub index_mean: f64,
    pub high_max: f64,
    pub low_min: f64,
    pub n_ticks: usize,
}

impl SlotBar {
    pub fn range(&self) -> f64 {
        self.high_max - self.low_min
    }
}

/// One `SlotBar` per (date, slot) with at least one in-hours tick, sorted
/// by (date, slot). Out-of-hours ticks are dropped.
pub fn aggregate_slots(series: &TickSeries, config: &SlotConfig) -> Result<Vec<SlotBar>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    struct Acc {
        bar: SlotBar,
        low_sum: f64,
        vol_sum: f64,
        index_sum: f64,
    }
    let mut out: Vec<SlotBar> = Vec::new();
    let mut acc: Option<Acc> = None;

    let finish = |a: Acc| {
        let n = a.bar.n_ticks as f64;
        SlotBar {
            low_mean: a.low_sum / n,
            vol_mean: a.vol_sum / n,
            index_mean: a.index_sum / n,
            ..a.bar
        }
    };

    // records are sorted by (date, time), so slot groups are contiguous
    for r in series.records() {
        let Some(slot) = slot_window(r.time, config) else {
            continue;
        };
        match acc.as_mut() {
            Some(a) if a.bar.date == r.date && a.bar.slot == slot => {
                a.bar.high_max = a.bar.high_max.max(r.high);
                a.bar.low_min = a.bar.low_min.min(r.low);
                a.bar.last_close = r.close;
                a.bar.n_ticks += 1;
                a.low_sum += r.low;
                a.vol_sum += r.volume as f64;
                a.index_sum += r.index_level;
            }
            _ => {
                if let Some(done) = acc.take() {
                    out.push(finish(done));
                }
                acc = Some(Acc {
                    bar: SlotBar {
                        date: r.date,
                        slot,
                        first_open: r.open,
                        first_high: r.high,
                        first_close: r.close,
                        last_close: r.close,
                        low_mean: 0.0,
                        vol_mean: 0.0,
                        index_mean: 0.0,
                        high_max: r.high,
                        low_min: r.low,
                        n_ticks: 1,
                    },
                    low_sum: r.low,
                    vol_sum: r.volume as f64,
                    index_sum: r.index_level,
                });
            }
        }
    }
    if let Some(done) = acc.take() {
        out.push(finish(done));
    }
    Ok(out)
}
