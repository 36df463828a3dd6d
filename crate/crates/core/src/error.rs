use thiserror::Error;

use crate::clustering::ClusteringError;
use crate::features::FeatureError;
use crate::ingest::IngestError;
use crate::markov::MarkovError;
use crate::simulator::SimulationError;
use crate::statespace::StateSpaceError;
use crate::validate::ValidationError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error; the prefix names the module that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("clustering: {0}")]
    Clustering(#[from] ClusteringError),
    #[error("statespace: {0}")]
    StateSpace(#[from] StateSpaceError),
    #[error("markov: {0}")]
    Markov(#[from] MarkovError),
    #[error("simulator: {0}")]
    Simulation(#[from] SimulationError),
    #[error("validate: {0}")]
    Validation(#[from] ValidationError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
