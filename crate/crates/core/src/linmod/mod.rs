//! Linear models: OLS with collinearity screening and stepwise AIC
//! selection, binary logistic regression, and residual diagnostics.

mod diagnostics;
mod logistic;
mod ols;
mod stepwise;
mod vif;

pub use diagnostics::{breusch_pagan, diagnose, durbin_watson, DiagnosticsReport, DwInterpretation};
pub use logistic::{fit_logistic, LogitFit};
pub use ols::{fit_ols, fit_subset, OlsFit};
pub use stepwise::{stepwise_select, Direction, StepwiseConfig};
pub use vif::{drop_collinear, vif, CollinearityReport};
