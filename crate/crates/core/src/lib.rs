//! Input-to-state stability certificates for impulsive switched systems whose
//! modes may be individually unstable, under mode-dependent average dwell and
//! leave time constraints.

mod quad;

pub mod linalg;

pub mod bounds;
pub mod certify;
pub mod construct;
pub mod lmi;
pub mod rates;
pub mod signal;
pub mod simulate;

pub use rates::{ComparisonFunction, PhiTransform, RateFunction};
pub use signal::{Mode, ModeChangeSet, SwitchingSignal};
pub use simulate::{InputSignal, LinearMode, LinearSystemModel, SystemModel, Trajectory};
