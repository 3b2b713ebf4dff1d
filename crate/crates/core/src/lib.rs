//! Numerical laboratory for Wiener-Wintner averages, uniform van der Corput
//! bounds and multiple recurrence on nilsystems and Bernoulli shifts.

pub mod error;
pub mod experiments;
pub mod observable;
pub mod recurrence;
pub mod sampling;
pub mod seminorm;
pub mod systems;
pub mod trig;
pub mod ww;

pub use error::{Error, Result};
pub use observable::{cube_product, ObservableExpr};
pub use sampling::{SamplePlan, SampleScheme, Window};
pub use systems::{Point, SystemSpec, TorusPoint, Turn};
pub use trig::{sup_modulus, vdc_bound, SupEstimate, VdcMode, WeightedSeq};
pub use ww::{ww_average, NormIndex, WWQuery, WWResult};
