use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{MarkovError, TransitionModel};
use crate::clustering::{ClusterModel, Label};
use crate::ingest::Season;
use crate::statespace::{JointState, ReducedStateSpace};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything fitted for one season.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonModel {
    /// One model per station, in envelope station order.
    pub clusters: Vec<ClusterModel>,
    pub space: ReducedStateSpace,
    pub transitions: TransitionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub date_start: NaiveDate,
    pub date_end: NaiveDate,
    pub seed: u64,
    pub aligned_days: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnvelope {
    pub stations: Vec<String>,
    pub k: usize,
    pub seasons: BTreeMap<Season, SeasonModel>,
    pub metadata: FitMetadata,
}

#[derive(Serialize, Deserialize)]
struct SeasonDocument {
    cluster_models: Vec<ClusterModel>,
    state_space: Vec<Vec<Label>>,
    counts: Vec<Vec<u64>>,
    matrix: Vec<Vec<f64>>,
    fallback: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EnvelopeDocument {
    schema_version: u32,
    stations: Vec<String>,
    k: usize,
    seasons: BTreeMap<Season, SeasonDocument>,
    metadata: FitMetadata,
}

impl ModelEnvelope {
    pub fn season(&self, season: Season) -> Option<&SeasonModel> {
        self.seasons.get(&season)
    }

    /// Serializes to pretty JSON. Floats are written in shortest round-trip
    /// form, so `from_json(to_json(e)) == e` exactly.
    pub fn to_json(&self) -> String {
        let doc = EnvelopeDocument {
            schema_version: SCHEMA_VERSION,
            stations: self.stations.clone(),
            k: self.k,
            seasons: self
                .seasons
                .iter()
                .map(|(season, m)| {
                    (
                        *season,
                        SeasonDocument {
                            cluster_models: m.clusters.clone(),
                            state_space: m
                                .space
                                .permutations()
                                .iter()
                                .map(|s| s.0.clone())
                                .collect(),
                            counts: m.transitions.counts().to_vec(),
                            matrix: m.transitions.matrix().to_vec(),
                            fallback: m.transitions.fallback().to_vec(),
                        },
                    )
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("envelope serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, MarkovError> {
        let doc: EnvelopeDocument =
            serde_json::from_str(text).map_err(|e| MarkovError::Document(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(MarkovError::SchemaVersion {
                found: doc.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let j = doc.stations.len();
        let mut seasons = BTreeMap::new();
        for (season, s) in doc.seasons {
            let transitions = TransitionModel::from_parts(s.counts, s.matrix, s.fallback)
                .map_err(|e| MarkovError::Document(format!("{season}: {e}")))?;
            if s.state_space.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MarkovError::Document(format!(
                    "{season}: state space must list distinct permutations in lexicographic order"
                )));
            }
            let space = ReducedStateSpace::from_permutations(
                doc.k,
                j,
                s.state_space.into_iter().map(JointState).collect(),
            )
            .map_err(|e| MarkovError::Document(format!("{season}: {e}")))?;
            seasons.insert(
                season,
                SeasonModel {
                    clusters: s.cluster_models,
                    space,
                    transitions,
                },
            );
        }
        let envelope = Self {
            stations: doc.stations,
            k: doc.k,
            seasons,
            metadata: doc.metadata,
        };
        envelope.validate()?;
        Ok(envelope)
    }

    /// Cross-section consistency: same k and station order everywhere.
    pub fn validate(&self) -> Result<(), MarkovError> {
        let bad = |m: String| Err(MarkovError::Document(m));
        if self.stations.is_empty() {
            return bad("no stations".into());
        }
        if self.k == 0 || self.k > u8::MAX as usize {
            return bad(format!("k = {} is out of range", self.k));
        }
        for (season, m) in &self.seasons {
            if m.clusters.len() != self.stations.len() {
                return bad(format!(
                    "{season}: {} cluster models for {} stations",
                    m.clusters.len(),
                    self.stations.len()
                ));
            }
            for (cluster, station) in m.clusters.iter().zip(&self.stations) {
                if &cluster.station_id != station || cluster.season != *season {
                    return bad(format!(
                        "{season}: cluster model for {}/{} where {station}/{season} expected",
                        cluster.station_id, cluster.season
                    ));
                }
                if cluster.k != self.k
                    || cluster.centroids.len() != self.k
                    || cluster.suitability_order.len() != self.k
                {
                    return bad(format!(
                        "{season}/{station}: cluster model does not have k = {}",
                        self.k
                    ));
                }
                let mut labels: Vec<usize> = cluster
                    .suitability_order
                    .iter()
                    .map(|l| l.index())
                    .collect();
                labels.sort_unstable();
                if labels != (0..self.k).collect::<Vec<_>>() {
                    return bad(format!(
                        "{season}/{station}: suitability order is not a permutation"
                    ));
                }
                if cluster.centroids.iter().flatten().any(|v| !v.is_finite()) {
                    return bad(format!("{season}/{station}: non-finite centroid"));
                }
            }
            if m.space.k() != self.k || m.space.j() != self.stations.len() {
                return bad(format!(
                    "{season}: state space shape disagrees with k and stations"
                ));
            }
            if m.transitions.r() != m.space.r() {
                return bad(format!(
                    "{season}: transition matrix is {}x{} but the state space has {} codes",
                    m.transitions.r(),
                    m.transitions.r(),
                    m.space.r()
                ));
            }
        }
        Ok(())
    }
}
