use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::DailyBar;

pub const WEEKLY_VARIABLES: [&str; 5] = ["open", "high", "low", "close", "volume"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeeklyVariables {
    OpenOnly,
    All,
}

impl WeeklyVariables {
    pub fn width(self) -> usize {
        match self {
            WeeklyVariables::OpenOnly => 1,
            WeeklyVariables::All => WEEKLY_VARIABLES.len(),
        }
    }
}

/// One Monday-Friday slot. Padded days copy an earlier bar's values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeekDay {
    pub date: NaiveDate,
    /// open, high, low, close, volume
    pub values: [f64; 5],
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Week {
    pub monday: NaiveDate,
    pub days: [WeekDay; 5],
}

fn bar_values(b: &DailyBar) -> [f64; 5] {
    [b.open, b.high, b.low, b.close, b.volume as f64]
}

/// Groups daily bars into Monday-Friday weeks. A missing weekday repeats
/// the previous trading day; a gap at the very start is filled from the
/// first bar. Calendar weeks without any bar are skipped.
pub fn group_weeks(bars: &[DailyBar]) -> Result<Vec<Week>> {
    if bars.is_empty() {
        return Err(Error::EmptySeries);
    }
    if bars.windows(2).any(|w| w[0].date >= w[1].date) {
        return Err(Error::BadParams("daily bars must have strictly increasing dates".into()));
    }
    if let Some(b) = bars.iter().find(|b| matches!(b.date.weekday(), Weekday::Sat | Weekday::Sun)) {
        return Err(Error::BadParams(format!("weekend bar on {}", b.date)));
    }
    let mut weeks: Vec<Week> = Vec::new();
    let mut prev: Option<[f64; 5]> = None;
    let mut i = 0;
    while i < bars.len() {
        let monday = bars[i].date - chrono::Days::new(bars[i].date.weekday().num_days_from_monday() as u64);
        let mut days = [WeekDay {
            date: monday,
            values: [0.0; 5],
            padded: true,
        }; 5];
        for (d, day) in days.iter_mut().enumerate() {
            day.date = monday + chrono::Days::new(d as u64);
            if i < bars.len() && bars[i].date == day.date {
                day.values = bar_values(&bars[i]);
                day.padded = false;
                i += 1;
            } else {
                day.values = prev.unwrap_or_else(|| bar_values(&bars[i.min(bars.len() - 1)]));
            }
            prev = Some(day.values);
        }
        weeks.push(Week { monday, days });
    }
    Ok(weeks)
}

/// An input window of consecutive days and the five opening prices that
/// follow it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySample {
    /// time steps × variables
    pub input: Vec<Vec<f64>>,
    pub target: [f64; 5],
    pub input_dates: (NaiveDate, NaiveDate),
    pub target_dates: (NaiveDate, NaiveDate),
    /// Any input or target day was padded.
    pub padded: bool,
}

impl WeeklySample {
    /// Every input date precedes every target date.
    pub fn is_causal(&self) -> bool {
        self.input_dates.1 < self.target_dates.0
    }
}

fn select(values: &[f64; 5], vars: WeeklyVariables) -> Vec<f64> {
    match vars {
        WeeklyVariables::OpenOnly => vec![values[0]],
        WeeklyVariables::All => values.to_vec(),
    }
}

fn sample_at(days: &[WeekDay], start: usize, hist: usize, vars: WeeklyVariables) -> WeeklySample {
    let input = &days[start..start + hist];
    let target = &days[start + hist..start + hist + 5];
    WeeklySample {
        input: input.iter().map(|d| select(&d.values, vars)).collect(),
        target: std::array::from_fn(|k| target[k].values[0]),
        input_dates: (input[0].date, input[hist - 1].date),
        target_dates: (target[0].date, target[4].date),
        padded: input.iter().chain(target).any(|d| d.padded),
    }
}

fn check_history(history_weeks: usize) -> Result<()> {
    if history_weeks == 0 {
        return Err(Error::BadParams("history must span at least one week".into()));
    }
    Ok(())
}

/// Stride-1 training samples over the weekly day sequence: every window of
/// `5·history_weeks` days followed by five target days.
pub fn frame_weeks(weeks: &[Week], history_weeks: usize, vars: WeeklyVariables) -> Result<Vec<WeeklySample>> {
    check_history(history_weeks)?;
    if weeks.len() < history_weeks + 1 {
        return Err(Error::TooFewWeeks {
            needed: history_weeks + 1,
            got: weeks.len(),
        });
    }
    let days: Vec<WeekDay> = weeks.iter().flat_map(|w| w.days).collect();
    let hist = 5 * history_weeks;
    Ok((0..=days.len() - hist - 5).map(|s| sample_at(&days, s, hist, vars)).collect())
}

pub fn frame_weekly(bars: &[DailyBar], history_weeks: usize, vars: WeeklyVariables) -> Result<Vec<WeeklySample>> {
    frame_weeks(&group_weeks(bars)?, history_weeks, vars)
}

/// Week-aligned evaluation samples: one per week from `first_test_week` on,
/// each reading the actual values of the preceding `history_weeks` weeks.
pub fn walk_forward_samples(weeks: &[Week], first_test_week: usize, history_weeks: usize, vars: WeeklyVariables) -> Result<Vec<WeeklySample>> {
    check_history(history_weeks)?;
    if first_test_week < history_weeks || first_test_week >= weeks.len() {
        return Err(Error::TooFewWeeks {
            needed: first_test_week.max(history_weeks) + 1,
            got: weeks.len(),
        });
    }
    let days: Vec<WeekDay> = weeks.iter().flat_map(|w| w.days).collect();
    let hist = 5 * history_weeks;
    Ok((first_test_week..weeks.len()).map(|w| sample_at(&days, 5 * w - hist, hist, vars)).collect())
}

/// Training samples drawn from the leading weeks, walk-forward samples over
/// the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySplit {
    pub history_weeks: usize,
    pub variables: WeeklyVariables,
    pub train: Vec<WeeklySample>,
    pub test: Vec<WeeklySample>,
}

/// `train_weeks` defaults to the first half of the weeks.
pub fn weekly_split(bars: &[DailyBar], history_weeks: usize, vars: WeeklyVariables, train_weeks: Option<usize>) -> Result<WeeklySplit> {
    let weeks = group_weeks(bars)?;
    let n_train = train_weeks.unwrap_or(weeks.len() / 2);
    if n_train < history_weeks + 1 || n_train >= weeks.len() {
        return Err(Error::TooFewWeeks {
            needed: (history_weeks + 2).max(n_train + 1),
            got: weeks.len(),
        });
    }
    Ok(WeeklySplit {
        history_weeks,
        variables: vars,
        train: frame_weeks(&weeks[..n_train], history_weeks, vars)?,
        test: walk_forward_samples(&weeks, n_train, history_weeks, vars)?,
    })
}
