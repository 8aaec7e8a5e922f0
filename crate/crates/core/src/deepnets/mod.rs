//! LSTM and 1D-CNN forecasters with hand-written backward passes and Adam.

mod adam;
mod cnn;
mod lstm;
mod report;
mod weekly;

pub use adam::{adam_step, AdamState};
pub use cnn::{cnn_build, cnn_fit, CnnModel, CnnNet, CnnSpec, CnnVariant, HeadSpec, SeqLayer, WeeklyScaler, WEEK_LEN};
pub use lstm::{lstm_fit, lstm_fit_frame, lstm_frame, LstmFit, LstmNet, LstmSpec, LstmState, LstmStep, LstmTrace, SeqFrame, SeqLoss, LSTM_INPUTS};
pub use report::{cnn_fit_eval, MultiRoundReport, RoundResult, SummaryRow, ROUND_CSV_HEADER, WEEKDAYS};
pub use weekly::{frame_weekly, frame_weeks, group_weeks, walk_forward_samples, weekly_split, Week, WeekDay, WeeklySample, WeeklySplit, WeeklyVariables, WEEKLY_VARIABLES};
