//! Correlation decay, large deviations and escape from compact sets, plus
//! the lap decomposition of flow time averages into base-map sums.

mod corr;
mod deviation;
mod escape;
mod lap;
mod projection;

pub use corr::{CorrTally, CorrelationCurve, CorrelationFit, MIN_FIT_LAGS};
pub use deviation::{
    bernoulli_cramer_rate, coin_averages, fit_deviation_curve, fit_log_fractions, ode_time_averages,
    reference_ode_mean, reference_suspension_mean, sample_box, sample_under_roof, suspension_time_averages,
    DeviationCurve, DeviationFit, DeviationTally, PrefactorCorrection, ReferenceMean, MIN_DEVIATION_SAMPLES,
    TRAPPING_BOX,
};
pub use escape::{escape_precheck, first_exit_time, heaviest_cell, mass_outside, CompactSet, EscapeCurve, EscapeTally};
pub use lap::{lap_decomposition_check, mean_roof, LapCheck, LAP_TOLERANCE};
pub use projection::{FiberPsi, ProjectionReport, ProjectionRow, ProjectionSetup, ProjectionTally};
