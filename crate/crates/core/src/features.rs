//! The eleven slot-difference predictors, next-slot targets, min-max
//! scaling and the three train/test protocols.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slotter::SlotBar;

pub const FEATURE_NAMES: [&str; 11] = [
    "month",
    "day_month",
    "day_week",
    "time",
    "open_perc",
    "high_perc",
    "low_perc",
    "close_perc",
    "vol_perc",
    "nifty_perc",
    "range_diff",
];

/// Dense row-major predictor matrix with column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Design {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != names.len()) {
            return Err(Error::ShapeMismatch(format!("row has {} values for {} columns", bad.len(), names.len())));
        }
        Ok(Self { names, rows })
    }

    /// Unnamed columns `x0, x1, ...`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        Self::new((0..p).map(|j| format!("x{j}")).collect(), rows)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keeps the given columns in the given order.
    pub fn select(&self, cols: &[usize]) -> Design {
        Design {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            rows: self.rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect(),
        }
    }

    pub fn select_names(&self, names: &[String]) -> Result<Design> {
        let cols = names
            .iter()
            .map(|n| self.col_index(n).ok_or_else(|| Error::ShapeMismatch(format!("no column {n}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select(&cols))
    }

    pub fn take_rows(&self, idx: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// One row of derived predictors for slot S2 of a consecutive pair (S1, S2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// Date of S2; unknown for rows imported from CSV.
    pub date: Option<NaiveDate>,
    pub month: u8,
    pub day_month: u8,
    pub day_week: u8,
    pub time: u8,
    pub open_perc: f64,
    pub high_perc: f64,
    pub low_perc: f64,
    pub close_perc: f64,
    pub vol_perc: f64,
    pub nifty_perc: f64,
    pub range_diff: f64,
}

impl FeatureRow {
    pub fn values(&self) -> [f64; 11] {
        [
            self.month as f64,
            self.day_month as f64,
            self.day_week as f64,
            self.time as f64,
            self.open_perc,
            self.high_perc,
            self.low_perc,
            self.close_perc,
            self.vol_perc,
            self.nifty_perc,
            self.range_diff,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighSource {
    /// High of the slot's first record.
    #[default]
    FirstRecord,
    /// Maximum high across the slot.
    SlotMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub high_source: HighSource,
}

/// Feature rows before target alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
    /// open_perc of the slot following each row's S2, if there is one.
    pub next_open_perc: Vec<Option<f64>>,
    pub dropped: usize,
}

/// Predictors with aligned regression and classification targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
    pub target_reg: Vec<f64>,
    pub target_cls: Vec<u8>,
}

fn pct_change(prev: f64, next: f64) -> Option<f64> {
    (prev != 0.0).then(|| 100.0 * (next - prev) / prev)
}

/// Computes the eleven variables for every consecutive slot pair. Pairs
/// with a zero denominator are dropped and counted.
pub fn derive_features(slots: &[SlotBar], config: &FeatureConfig) -> Result<FeatureTable> {
    if slots.len() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: slots.len() });
    }
    let high = |s: &SlotBar| match config.high_source {
        HighSource::FirstRecord => s.first_high,
        HighSource::SlotMax => s.high_max,
    };
    let mut rows = Vec::with_capacity(slots.len() - 1);
    let mut next_open_perc = Vec::with_capacity(slots.len() - 1);
    let mut dropped = 0;
    for (k, pair) in slots.windows(2).enumerate() {
        let (s1, s2) = (&pair[0], &pair[1]);
        let pcts = [
            pct_change(s1.first_open, s2.first_open),
            pct_change(high(s1), high(s2)),
            pct_change(s1.low_mean, s2.low_mean),
            pct_change(s1.first_close, s2.first_close),
            pct_change(s1.vol_mean, s2.vol_mean),
            pct_change(s1.index_mean, s2.index_mean),
        ];
        let [Some(open_perc), Some(high_perc), Some(low_perc), Some(close_perc), Some(vol_perc), Some(nifty_perc)] = pcts else {
            dropped += 1;
            continue;
        };
        rows.push(FeatureRow {
            date: Some(s2.date),
            month: s2.date.month() as u8,
            day_month: s2.date.day() as u8,
            day_week: s2.date.weekday().number_from_monday() as u8,
            time: s2.slot.code(),
            open_perc,
            high_perc,
            low_perc,
            close_perc,
            vol_perc,
            nifty_perc,
            range_diff: s2.range() - s1.range(),
        });
        next_open_perc.push(slots.get(k + 2).and_then(|s3| pct_change(s2.first_open, s3.first_open)));
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} slot pairs with a zero denominator");
    }
    Ok(FeatureTable {
        rows,
        next_open_perc,
        dropped,
    })
}

impl FeatureTable {
    /// Pairs each row with the next slot's open_perc; rows without one
    /// (the final slot) are dropped.
    pub fn into_dataset(self) -> Dataset {
        let mut rows = Vec::with_capacity(self.rows.len());
        let mut target_reg = Vec::with_capacity(self.rows.len());
        for (row, target) in self.rows.into_iter().zip(self.next_open_perc) {
            if let Some(t) = target {
                rows.push(row);
                target_reg.push(t);
            }
        }
        let target_cls = target_reg.iter().map(|&t| binarize_target(t)).collect();
        Dataset {
            rows,
            target_reg,
            target_cls,
        }
    }
}

/// 1 for a strictly positive change, 0 otherwise (zero counts as "no rise").
pub fn binarize_target(open_perc_next: f64) -> u8 {
    u8::from(open_perc_next > 0.0)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn design(&self) -> Design {
        Design {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows: self.rows.iter().map(|r| r.values().to_vec()).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
        header.extend(["target_reg", "target_cls"]);
        w.write_record(&header)?;
        for ((row, reg), cls) in self.rows.iter().zip(&self.target_reg).zip(&self.target_cls) {
            let mut rec: Vec<String> = row.values().iter().map(f64::to_string).collect();
            rec.push(reg.to_string());
            rec.push(cls.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(source);
        let header = r.headers()?.clone();
        let expected: Vec<&str> = FEATURE_NAMES.iter().copied().chain(["target_reg", "target_cls"]).collect();
        if header.iter().ne(expected.iter().copied()) {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "dataset header mismatch".into(),
            });
        }
        let mut out = Dataset {
            rows: vec![],
            target_reg: vec![],
            target_cls: vec![],
        };
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |reason: String| Error::MalformedRow { line, reason };
            if rec.len() != expected.len() {
                return Err(bad(format!("expected {} fields", expected.len())));
            }
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", expected[i])));
            let code = |i: usize| rec[i].parse::<u8>().map_err(|e| bad(format!("{}: {e}", expected[i])));
            let row = FeatureRow {
                date: None,
                month: code(0)?,
                day_month: code(1)?,
                day_week: code(2)?,
                time: code(3)?,
                open_perc: num(4)?,
                high_perc: num(5)?,
                low_perc: num(6)?,
                close_perc: num(7)?,
                vol_perc: num(8)?,
                nifty_perc: num(9)?,
                range_diff: num(10)?,
            };
            let ok = (1..=12).contains(&row.month) && (1..=31).contains(&row.day_month) && (1..=5).contains(&row.day_week) && (1..=3).contains(&row.time);
            if !ok || row.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvariantViolation {
                    line,
                    reason: "calendar code out of range or non-finite value".into(),
                });
            }
            let reg = num(11)?;
            let cls = code(12)?;
            if cls != binarize_target(reg) {
                return Err(Error::InvariantViolation {
                    line,
                    reason: "target_cls disagrees with target_reg".into(),
                });
            }
            out.rows.push(row);
            out.target_reg.push(reg);
            out.target_cls.push(cls);
        }
        Ok(out)
    }
}

/// Per-column min and max learned on a training design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScaleParams {
    pub fn fit(train: &Design) -> Result<Self> {
        if train.n_rows() == 0 {
            return Err(Error::EmptyTrain);
        }
        let p = train.n_cols();
        let mut min = vec![f64::INFINITY; p];
        let mut max = vec![f64::NEG_INFINITY; p];
        for row in &train.rows {
            for j in 0..p {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Ok(Self { min, max })
    }

    /// Maps `x` to `(x - min) / (max - min)`; constant columns map to 0.
    /// Values outside the training range are not clamped.
    pub fn apply(&self, design: &Design) -> Design {
        let rows = design
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        let span = self.max[j] - self.min[j];
                        if span > 0.0 {
                            (x - self.min[j]) / span
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Design {
            names: design.names.clone(),
            rows,
        }
    }
}

/// Scales `apply_to` with parameters learned on `train`.
pub fn min_max_scale(train: &Design, apply_to: &Design) -> Result<(Design, ScaleParams)> {
    let params = ScaleParams::fit(train)?;
    if apply_to.n_cols() != train.n_cols() {
        return Err(Error::ShapeMismatch("train and target designs differ in width".into()));
    }
    Ok((params.apply(apply_to), params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Case {
    I,
    II,
    III,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "I",
            Case::II => "II",
            Case::III => "III",
        })
    }
}

impl FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "1" => Ok(Case::I),
            "II" | "2" => Ok(Case::II),
            "III" | "3" => Ok(Case::III),
            other => Err(Error::Config(format!("unknown case {other:?}"))),
        }
    }
}

/// Case I trains and tests on the first year, Case II on the second,
/// Case III trains on the first and tests on the second.
pub fn case_split<'a>(first_year: &'a Dataset, second_year: &'a Dataset, case: Case) -> (&'a Dataset, &'a Dataset) {
    match case {
        Case::I => (first_year, first_year),
        Case::II => (second_year, second_year),
        Case::III => (first_year, second_year),
    }
}
