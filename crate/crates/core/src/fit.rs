//! Fitting a full model envelope from an aligned corpus: cluster each
//! station per season, build joint states, reduce them and estimate one
//! transition matrix per season.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::clustering::{ClusterModel, StateSequence, DEFAULT_K, DEFAULT_RESTARTS};
use crate::error::Result;
use crate::features;
use crate::ingest::{Corpus, Season};
use crate::markov::{self, FitMetadata, MarkovError, ModelEnvelope, SeasonModel};
use crate::statespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

/// Per-(station, season) seed; splitmix64 finalizer over the run seed.
pub(crate) fn derive_seed(seed: u64, station: usize, season: Season) -> u64 {
    let mut z = seed.wrapping_add(
        0x9E37_79B9_7F4A_7C15u64.wrapping_mul((station as u64) * 4 + season.index() as u64 + 1),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Intermediate per-season products, kept for inspection and tests.
#[derive(Debug, Clone)]
pub struct SeasonFit {
    pub dates: Vec<NaiveDate>,
    pub sequences: Vec<StateSequence>,
    pub joint: Vec<statespace::JointState>,
    pub codes: Vec<statespace::Code>,
    pub model: SeasonModel,
}

pub fn fit_season(corpus: &Corpus, season: Season, config: &FitConfig) -> Result<SeasonFit> {
    let dates = corpus.aligned_in(season);
    let mut clusters = Vec::with_capacity(corpus.stations().len());
    let mut sequences = Vec::with_capacity(corpus.stations().len());
    for (idx, station) in corpus.stations().iter().enumerate() {
        let feats: Vec<_> = dates
            .iter()
            .map(|d| features::extract(corpus.day(idx, *d).expect("aligned day present")))
            .collect();
        let (model, labels) = ClusterModel::fit(
            station,
            season,
            &feats,
            config.k,
            derive_seed(config.seed, idx, season),
            config.restarts,
        )?;
        sequences.push(StateSequence {
            station_id: station.clone(),
            season,
            entries: dates.iter().copied().zip(labels).collect(),
        });
        clusters.push(model);
    }
    let joint = statespace::joint_sequence(&sequences, &dates)?;
    let space = statespace::reduce(&joint, config.k, corpus.stations().len())?;
    let codes = space.encode_all(&joint)?;
    let transitions = markov::fit_mtpm(&markov::split_runs(&dates, &codes), space.r())?;
    Ok(SeasonFit {
        dates,
        sequences,
        joint,
        codes,
        model: SeasonModel {
            clusters,
            space,
            transitions,
        },
    })
}

/// Fits every season with enough aligned days (at least `k` and at least
/// two); thinner seasons are skipped with a warning.
pub fn fit_model(corpus: &Corpus, config: &FitConfig) -> Result<ModelEnvelope> {
    let mut seasons = BTreeMap::new();
    for season in Season::ALL {
        let n = corpus.aligned_in(season).len();
        if n < config.k.max(2) {
            if n > 0 {
                log::warn!(
                    "skipping {season}: {n} aligned days is fewer than k = {}",
                    config.k
                );
            }
            continue;
        }
        log::info!("fitting {season} over {n} aligned days");
        let fit = fit_season(corpus, season, config)?;
        log::debug!(
            "{season}: r = {} of {}",
            fit.model.space.r(),
            fit.model.space.full_size()
        );
        seasons.insert(season, fit.model);
    }
    if seasons.is_empty() {
        return Err(MarkovError::NothingFitted.into());
    }
    let alignment = corpus.alignment();
    Ok(ModelEnvelope {
        stations: corpus.stations().to_vec(),
        k: config.k,
        seasons,
        metadata: FitMetadata {
            date_start: alignment[0],
            date_end: alignment[alignment.len() - 1],
            seed: config.seed,
            aligned_days: alignment.len(),
            restarts: config.restarts,
        },
    })
}
