//! Synthetic multi-station series from a fitted envelope.
//!
//! A run walks the calendar from its start date, splitting it into
//! contiguous single-season blocks. Each block is a Markov chain over that
//! season's joint-state codes; every code is decoded to one label per
//! station and each station independently copies a whole observed day
//! carrying that label in that season.
//!
//! All randomness comes from one ChaCha8 generator seeded from the run
//! seed and consumed in this order:
//!
//! 1. for every block in calendar order: the initial code (one draw, unless
//!    configured) followed by one draw per subsequent day;
//! 2. for every simulated date in order, for every station in envelope
//!    order: one uniform pick from that station's candidate days.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use chrono::{Days, NaiveDate};
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::clustering::{self, Label};
use crate::error::Result;
use crate::ingest::{self, assign_season, Corpus, DailyProfile, IngestError, Season};
use crate::markov::{stationary_distribution, ModelEnvelope, TransitionModel};
use crate::statespace::{Code, JointState};

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("no observed day for station {station}, label {label}, season {season}")]
    EmptyPool {
        station: String,
        label: Label,
        season: Season,
    },
    #[error("the model has no fitted {0} season")]
    MissingSeason(Season),
    #[error("corpus station list {corpus:?} does not match model stations {model:?}")]
    StationMismatch {
        corpus: Vec<String>,
        model: Vec<String>,
    },
    #[error("a simulation needs at least one day")]
    NoDays,
    #[error("date range ends before it starts")]
    BadRange,
    #[error("initial code {code} outside 1..={r} for {season}")]
    InitialOutOfRange { code: u32, r: usize, season: Season },
}

/// Index of the first entry whose running sum reaches `u`.
///
/// If rounding leaves the total just short of `u`, the last positive
/// entry is returned.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 {
            last_positive = i;
        }
        if acc >= u && w > 0.0 {
            return i;
        }
    }
    last_positive
}

/// Inverse-CDF step: the smallest code whose cumulative row probability
/// is at least `u`, for `u` in (0, 1).
pub fn next_state(model: &TransitionModel, current: Code, u: f64) -> Code {
    Code::from_index(sample_index(model.row(current), u))
}

pub fn simulate_codes_with<R: Rng>(
    model: &TransitionModel,
    n: usize,
    initial: Code,
    rng: &mut R,
) -> Vec<Code> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut current = initial;
    out.push(current);
    while out.len() < n {
        current = next_state(model, current, rng.sample(Open01));
        out.push(current);
    }
    out
}

pub fn simulate_codes(model: &TransitionModel, n: usize, seed: u64, initial: Code) -> Vec<Code> {
    simulate_codes_with(model, n, initial, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Observed aligned days grouped by (season, station, label).
#[derive(Debug, Clone)]
pub struct DayPools {
    pools: HashMap<(Season, usize, Label), Vec<NaiveDate>>,
}

impl DayPools {
    /// Labels every aligned corpus day with the season's cluster models.
    pub fn build(envelope: &ModelEnvelope, corpus: &Corpus) -> Result<Self> {
        if corpus.stations() != envelope.stations.as_slice() {
            return Err(SimulationError::StationMismatch {
                corpus: corpus.stations().to_vec(),
                model: envelope.stations.clone(),
            }
            .into());
        }
        let mut pools: HashMap<_, Vec<NaiveDate>> = HashMap::new();
        for (&season, model) in &envelope.seasons {
            let dates = corpus.aligned_in(season);
            for (station, cluster) in model.clusters.iter().enumerate() {
                let seq = clustering::label_days(
                    cluster,
                    dates.iter().filter_map(|d| corpus.day(station, *d)),
                );
                for (date, label) in seq.entries {
                    pools
                        .entry((season, station, label))
                        .or_default()
                        .push(date);
                }
            }
        }
        Ok(Self { pools })
    }

    pub fn candidates(&self, season: Season, station: usize, label: Label) -> &[NaiveDate] {
        self.pools
            .get(&(season, station, label))
            .map_or(&[], Vec::as_slice)
    }
}

/// A contiguous single-season stretch of simulated codes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeBlock {
    pub season: Season,
    pub start: NaiveDate,
    pub codes: Vec<Code>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDay {
    pub date: NaiveDate,
    pub season: Season,
    pub code: Code,
    pub state: JointState,
    /// Source observed date per station, in station order.
    pub sources: Vec<NaiveDate>,
    /// Copied samples per station, in station order.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSeries {
    pub stations: Vec<String>,
    pub blocks: Vec<CodeBlock>,
    pub days: Vec<SimulatedDay>,
}

#[derive(Serialize)]
struct SidecarDay<'a> {
    date: NaiveDate,
    season: Season,
    code: Code,
    state: &'a JointState,
    sources: &'a [NaiveDate],
}

#[derive(Serialize)]
struct Sidecar<'a> {
    stations: &'a [String],
    days: Vec<SidecarDay<'a>>,
}

impl SimulatedSeries {
    /// `(synthetic date, source date, samples)` for one station.
    pub fn station_days(
        &self,
        station: usize,
    ) -> impl Iterator<Item = (NaiveDate, NaiveDate, &[f64])> {
        self.days
            .iter()
            .map(move |d| (d.date, d.sources[station], d.samples[station].as_slice()))
    }

    /// Simulated days as a corpus keyed by synthetic dates.
    pub fn to_corpus(&self) -> std::result::Result<Corpus, IngestError> {
        let mut profiles = Vec::with_capacity(self.days.len() * self.stations.len());
        for day in &self.days {
            for (station, samples) in self.stations.iter().zip(&day.samples) {
                profiles.push(DailyProfile::new(
                    station.clone(),
                    day.date,
                    samples.clone(),
                )?);
            }
        }
        Corpus::from_profiles(self.stations.clone(), profiles)
    }

    /// Canonical `timestamp,station_id,ghi_wm2` rows, date by date.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), IngestError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(ingest::CSV_HEADER)?;
        for day in &self.days {
            for (station, samples) in self.stations.iter().zip(&day.samples) {
                ingest::write_profile_rows(&mut out, day.date, station, samples)?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Per-day provenance: date, season, joint code and state, source dates.
    pub fn sidecar_json(&self) -> String {
        let doc = Sidecar {
            stations: &self.stations,
            days: self
                .days
                .iter()
                .map(|d| SidecarDay {
                    date: d.date,
                    season: d.season,
                    code: d.code,
                    state: &d.state,
                    sources: &d.sources,
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("sidecar serializes");
        out.push('\n');
        out
    }
}

pub fn realize_with<R: Rng>(
    blocks: &[CodeBlock],
    envelope: &ModelEnvelope,
    corpus: &Corpus,
    pools: &DayPools,
    rng: &mut R,
) -> Result<SimulatedSeries> {
    let mut days = Vec::with_capacity(blocks.iter().map(|b| b.codes.len()).sum());
    for block in blocks {
        let model = envelope
            .season(block.season)
            .ok_or(SimulationError::MissingSeason(block.season))?;
        for (offset, &code) in block.codes.iter().enumerate() {
            let date = block.start + Days::new(offset as u64);
            let state = model.space.decode(code)?.clone();
            let mut sources = Vec::with_capacity(state.0.len());
            let mut samples = Vec::with_capacity(state.0.len());
            for (station, &label) in state.0.iter().enumerate() {
                let pool = pools.candidates(block.season, station, label);
                if pool.is_empty() {
                    return Err(SimulationError::EmptyPool {
                        station: envelope.stations[station].clone(),
                        label,
                        season: block.season,
                    }
                    .into());
                }
                let source = pool[rng.gen_range(0..pool.len())];
                let profile = corpus.day(station, source).expect("pooled day exists");
                sources.push(source);
                samples.push(profile.samples().to_vec());
            }
            days.push(SimulatedDay {
                date,
                season: block.season,
                code,
                state,
                sources,
                samples,
            });
        }
    }
    Ok(SimulatedSeries {
        stations: envelope.stations.clone(),
        blocks: blocks.to_vec(),
        days,
    })
}

/// Decodes code blocks and copies one matching observed day per station.
pub fn realize(
    blocks: &[CodeBlock],
    envelope: &ModelEnvelope,
    corpus: &Corpus,
    seed: u64,
) -> Result<SimulatedSeries> {
    let pools = DayPools::build(envelope, corpus)?;
    realize_with(
        blocks,
        envelope,
        corpus,
        &pools,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub calendar_start: NaiveDate,
    pub n_days: usize,
    pub seed: u64,
    /// Starting code for the first block of a season; other blocks start
    /// from a stationary draw.
    pub initial_state: BTreeMap<Season, Code>,
}

impl SimulationConfig {
    pub fn days(calendar_start: NaiveDate, n_days: usize, seed: u64) -> Self {
        Self {
            calendar_start,
            n_days,
            seed,
            initial_state: BTreeMap::new(),
        }
    }

    /// Inclusive date range.
    pub fn range(from: NaiveDate, to: NaiveDate, seed: u64) -> Result<Self> {
        if to < from {
            return Err(SimulationError::BadRange.into());
        }
        Ok(Self::days(from, (to - from).num_days() as usize + 1, seed))
    }
}

/// Splits the calendar into contiguous same-season stretches.
pub fn season_blocks(start: NaiveDate, n_days: usize) -> Vec<(Season, NaiveDate, usize)> {
    let mut blocks: Vec<(Season, NaiveDate, usize)> = Vec::new();
    for offset in 0..n_days {
        let date = start + Days::new(offset as u64);
        let season = assign_season(date);
        match blocks.last_mut() {
            Some((s, _, len)) if *s == season => *len += 1,
            _ => blocks.push((season, date, 1)),
        }
    }
    blocks
}

pub fn simulate_codes_for_calendar<R: Rng>(
    envelope: &ModelEnvelope,
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<Vec<CodeBlock>> {
    if config.n_days == 0 {
        return Err(SimulationError::NoDays.into());
    }
    let layout = season_blocks(config.calendar_start, config.n_days);
    let mut stationary: BTreeMap<Season, Vec<f64>> = BTreeMap::new();
    let mut seeded: Vec<Season> = Vec::new();
    let mut blocks = Vec::with_capacity(layout.len());
    for (season, start, len) in layout {
        let model = envelope
            .season(season)
            .ok_or(SimulationError::MissingSeason(season))?;
        let transitions = &model.transitions;
        let configured = (!seeded.contains(&season))
            .then(|| config.initial_state.get(&season).copied())
            .flatten();
        seeded.push(season);
        let initial = match configured {
            Some(code) if code.index() < transitions.r() => code,
            Some(code) => {
                return Err(SimulationError::InitialOutOfRange {
                    code: code.get(),
                    r: transitions.r(),
                    season,
                }
                .into())
            }
            None => {
                let pi = stationary
                    .entry(season)
                    .or_insert_with(|| stationary_distribution(transitions));
                Code::from_index(sample_index(pi, rng.sample(Open01)))
            }
        };
        blocks.push(CodeBlock {
            season,
            start,
            codes: simulate_codes_with(transitions, len, initial, rng),
        });
    }
    Ok(blocks)
}

/// Full calendar run: season-by-season code chains, then day resampling.
pub fn simulate_year(
    envelope: &ModelEnvelope,
    corpus: &Corpus,
    config: &SimulationConfig,
) -> Result<SimulatedSeries> {
    let pools = DayPools::build(envelope, corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let blocks = simulate_codes_for_calendar(envelope, config, &mut rng)?;
    realize_with(&blocks, envelope, corpus, &pools, &mut rng)
}
