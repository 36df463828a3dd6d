#![allow(dead_code)]

use chrono::NaiveDate;
use helios_core::ingest::{build_days, CleaningPolicy, Corpus};
use helios_core::synthetic::{self, SyntheticConfig, SyntheticData};

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Three coupled synthetic stations, cleaned and aligned.
pub fn three_station_corpus(start: NaiveDate, n_days: usize, seed: u64) -> (Corpus, SyntheticData) {
    let data = synthetic::generate(&SyntheticConfig::three_stations(start, n_days, seed));
    let corpus = build_days(&data.records, CleaningPolicy::default()).unwrap();
    (corpus, data)
}
