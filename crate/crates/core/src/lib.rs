//! Correlated multi-station synthetic solar irradiance.
//!
//! Observed minute-resolution global horizontal irradiance is cut into
//! station-days, each day is reduced to five features and clustered per
//! station and season into suitability-ordered states. The joint state of
//! all stations forms a daily Markov chain over the observed state tuples;
//! simulation walks that chain and stitches together observed days whose
//! labels match the simulated joint state, which carries the cross-station
//! correlation into the synthetic series.
//!
//! The pipeline is `ingest` → `features` → `clustering` → `statespace` →
//! `markov` (via [`fit::fit_model`]) → `simulator` → `validate`.

pub mod clustering;
pub mod error;
pub mod features;
pub mod fit;
pub mod ingest;
pub mod markov;
pub mod simulator;
pub mod statespace;
pub mod synthetic;
pub mod validate;

pub use error::{Error, Result};
pub use fit::{fit_model, FitConfig};
pub use ingest::{CleaningPolicy, Corpus, DailyProfile, Season};
pub use markov::ModelEnvelope;
pub use simulator::{simulate_year, SimulatedSeries, SimulationConfig};
