//! Reading raw minute-resolution irradiance, cleaning it and slicing it into
//! aligned station-days.
//!
//! The canonical interchange format is a CSV with the header
//! `timestamp,station_id,ghi_wm2`, timestamps written as `YYYY-MM-DDTHH:MM`
//! in station-local time. Only the minute-of-day window `[180, 1260)`
//! (03:00 up to, not including, 21:00) is kept for each day.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WINDOW_START_MINUTE: usize = 180;
pub const WINDOW_END_MINUTE: usize = 1260;
pub const SAMPLES_PER_DAY: usize = WINDOW_END_MINUTE - WINDOW_START_MINUTE;

pub const CSV_HEADER: [&str; 3] = ["timestamp", "station_id", "ghi_wm2"];
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("expected header `timestamp,station_id,ghi_wm2`, found `{0}`")]
    BadHeader(String),
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("line {line}: unparseable timestamp `{value}`")]
    Timestamp { line: u64, value: String },
    #[error("line {line}: non-numeric irradiance `{value}`")]
    Irradiance { line: u64, value: String },
    #[error(
        "conflicting duplicate readings for station {station} at {timestamp}: {first} vs {second}"
    )]
    ConflictingDuplicate {
        station: String,
        timestamp: NaiveDateTime,
        first: f64,
        second: f64,
    },
    #[error("no day survives cleaning for all stations; aligned corpus is empty")]
    NoAlignedDays,
    #[error("invalid daily profile for {station} on {date}: {reason}")]
    InvalidProfile {
        station: String,
        date: NaiveDate,
        reason: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub timestamp: NaiveDateTime,
    pub station_id: String,
    pub ghi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [
        Season::Spring,
        Season::Summer,
        Season::Autumn,
        Season::Winter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Season::ALL
            .into_iter()
            .find(|season| season.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown season `{s}`"))
    }
}

/// Meteorological seasons: MAM spring, JJA summer, SON autumn, DJF winter.
pub fn assign_season(date: NaiveDate) -> Season {
    match date.month() {
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        9..=11 => Season::Autumn,
        _ => Season::Winter,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleaningPolicy {
    /// Longest run of missing minutes that is filled by interpolation.
    /// Days with a longer run are dropped.
    pub max_gap_minutes: usize,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self {
            max_gap_minutes: 30,
        }
    }
}

/// One station-day of in-window irradiance.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfile {
    station_id: String,
    date: NaiveDate,
    season: Season,
    samples: Vec<f64>,
}

impl DailyProfile {
    pub fn new(
        station_id: impl Into<String>,
        date: NaiveDate,
        samples: Vec<f64>,
    ) -> Result<Self, IngestError> {
        let station_id = station_id.into();
        let invalid = |reason: String| IngestError::InvalidProfile {
            station: station_id.clone(),
            date,
            reason,
        };
        if samples.len() != SAMPLES_PER_DAY {
            return Err(invalid(format!(
                "expected {SAMPLES_PER_DAY} samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("sample {bad} is negative or non-finite")));
        }
        Ok(Self {
            season: assign_season(date),
            station_id,
            date,
            samples,
        })
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn season(&self) -> Season {
        self.season
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// Cleaned station-days for a fixed, ordered set of stations.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    stations: Vec<String>,
    days: Vec<BTreeMap<NaiveDate, DailyProfile>>,
    alignment: Vec<NaiveDate>,
}

impl Corpus {
    /// Assembles a corpus from per-station profiles. Station order is the
    /// order of `stations`; profiles for unlisted stations are rejected.
    pub fn from_profiles(
        stations: Vec<String>,
        profiles: impl IntoIterator<Item = DailyProfile>,
    ) -> Result<Self, IngestError> {
        let mut days = vec![BTreeMap::new(); stations.len()];
        for profile in profiles {
            let idx = stations
                .iter()
                .position(|s| *s == profile.station_id)
                .ok_or_else(|| IngestError::InvalidProfile {
                    station: profile.station_id.clone(),
                    date: profile.date,
                    reason: "station not in corpus station list".into(),
                })?;
            days[idx].insert(profile.date, profile);
        }
        let alignment = intersect_dates(&days);
        if alignment.is_empty() {
            return Err(IngestError::NoAlignedDays);
        }
        Ok(Self {
            stations,
            days,
            alignment,
        })
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn station_index(&self, station_id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s == station_id)
    }

    /// All surviving days of one station, aligned or not.
    pub fn days(&self, station: usize) -> &BTreeMap<NaiveDate, DailyProfile> {
        &self.days[station]
    }

    pub fn day(&self, station: usize, date: NaiveDate) -> Option<&DailyProfile> {
        self.days[station].get(&date)
    }

    /// Dates present for every station, strictly increasing.
    pub fn alignment(&self) -> &[NaiveDate] {
        &self.alignment
    }

    pub fn aligned_in(&self, season: Season) -> Vec<NaiveDate> {
        self.alignment
            .iter()
            .copied()
            .filter(|d| assign_season(*d) == season)
            .collect()
    }

    /// The in-window samples as canonical records, station by station.
    pub fn to_records(&self) -> Vec<RawRecord> {
        let mut out = Vec::new();
        for (station, days) in self.stations.iter().zip(&self.days) {
            for profile in days.values() {
                for (offset, &ghi) in profile.samples.iter().enumerate() {
                    out.push(RawRecord {
                        timestamp: window_timestamp(profile.date, offset),
                        station_id: station.clone(),
                        ghi,
                    });
                }
            }
        }
        out
    }

    /// Writes every station-day in the canonical CSV format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(CSV_HEADER)?;
        for days in &self.days {
            for profile in days.values() {
                write_profile_rows(
                    &mut out,
                    profile.date,
                    &profile.station_id,
                    &profile.samples,
                )?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub(crate) fn write_profile_rows<W: Write>(
    out: &mut csv::Writer<W>,
    date: NaiveDate,
    station: &str,
    samples: &[f64],
) -> Result<(), csv::Error> {
    let mut ts = String::with_capacity(16);
    let mut value = String::with_capacity(24);
    for (offset, ghi) in samples.iter().enumerate() {
        use std::fmt::Write as _;
        ts.clear();
        value.clear();
        let _ = write!(
            ts,
            "{}",
            window_timestamp(date, offset).format(TIMESTAMP_FORMAT)
        );
        let _ = write!(value, "{ghi}");
        out.write_record([ts.as_str(), station, value.as_str()])?;
    }
    Ok(())
}

pub fn window_timestamp(date: NaiveDate, offset: usize) -> NaiveDateTime {
    let minute = (WINDOW_START_MINUTE + offset) as u32;
    date.and_time(NaiveTime::from_hms_opt(minute / 60, minute % 60, 0).expect("minute within day"))
}

fn intersect_dates(days: &[BTreeMap<NaiveDate, DailyProfile>]) -> Vec<NaiveDate> {
    let Some((first, rest)) = days.split_first() else {
        return Vec::new();
    };
    first
        .keys()
        .copied()
        .filter(|d| rest.iter().all(|m| m.contains_key(d)))
        .collect()
}

/// Streaming reader over the canonical CSV format.
pub struct RecordReader<R: Read> {
    inner: csv::StringRecordsIntoIter<R>,
}

impl<R: Read> RecordReader<R> {
    pub fn new(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(IngestError::BadHeader(
                header.iter().collect::<Vec<_>>().join(","),
            ));
        }
        Ok(Self {
            inner: rdr.into_records(),
        })
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<RawRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = match self.inner.next()? {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Some(Err(IngestError::MalformedRow {
                    line,
                    message: e.to_string(),
                }));
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        Some(parse_row(&row, line))
    }
}

fn parse_row(row: &csv::StringRecord, line: u64) -> Result<RawRecord, IngestError> {
    if row.len() != 3 {
        return Err(IngestError::MalformedRow {
            line,
            message: format!("expected 3 fields, found {}", row.len()),
        });
    }
    let timestamp = NaiveDateTime::parse_from_str(&row[0], TIMESTAMP_FORMAT).map_err(|_| {
        IngestError::Timestamp {
            line,
            value: row[0].to_string(),
        }
    })?;
    let station_id = &row[1];
    if station_id.is_empty() {
        return Err(IngestError::MalformedRow {
            line,
            message: "empty station_id".into(),
        });
    }
    let ghi = row[2]
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::Irradiance {
            line,
            value: row[2].to_string(),
        })?;
    Ok(RawRecord {
        timestamp,
        station_id: station_id.to_string(),
        ghi,
    })
}

/// Parses a whole CSV stream into records, in file order.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<RawRecord>, IngestError> {
    RecordReader::new(reader)?.collect()
}

/// Accumulates raw records into per-station-day minute buffers.
///
/// Records outside the daily window are ignored. A repeated
/// (station, timestamp) is accepted only if it carries the same value.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    stations: Vec<String>,
    station_lookup: HashMap<String, usize>,
    buffers: HashMap<(usize, NaiveDate), Vec<f64>>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: &RawRecord) -> Result<(), IngestError> {
        let station = match self.station_lookup.get(&record.station_id) {
            Some(&idx) => idx,
            None => {
                let idx = self.stations.len();
                self.stations.push(record.station_id.clone());
                self.station_lookup.insert(record.station_id.clone(), idx);
                idx
            }
        };
        let minute = (record.timestamp.hour() * 60 + record.timestamp.minute()) as usize;
        if !(WINDOW_START_MINUTE..WINDOW_END_MINUTE).contains(&minute) {
            return Ok(());
        }
        let date = record.timestamp.date();
        let buffer = self
            .buffers
            .entry((station, date))
            .or_insert_with(|| vec![f64::NAN; SAMPLES_PER_DAY]);
        let slot = &mut buffer[minute - WINDOW_START_MINUTE];
        if slot.is_nan() {
            *slot = record.ghi;
        } else if *slot != record.ghi {
            return Err(IngestError::ConflictingDuplicate {
                station: record.station_id.clone(),
                timestamp: record.timestamp,
                first: *slot,
                second: record.ghi,
            });
        }
        Ok(())
    }

    pub fn finish(self, policy: CleaningPolicy) -> Result<Corpus, IngestError> {
        let mut profiles = Vec::with_capacity(self.buffers.len());
        let mut dropped = 0usize;
        for ((station, date), mut samples) in self.buffers {
            if clean_day(&mut samples, policy) {
                profiles.push(DailyProfile::new(
                    self.stations[station].clone(),
                    date,
                    samples,
                )?);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::info!(
                "dropped {dropped} station-days exceeding the {}-minute gap budget",
                policy.max_gap_minutes
            );
        }
        Corpus::from_profiles(self.stations, profiles)
    }
}

/// Clamps negatives and fills short gaps in place. Returns false when the
/// day must be dropped.
fn clean_day(samples: &mut [f64], policy: CleaningPolicy) -> bool {
    for v in samples.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let n = samples.len();
    let mut i = 0;
    while i < n {
        if !samples[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && samples[i].is_nan() {
            i += 1;
        }
        let len = i - start;
        if len > policy.max_gap_minutes || len == n {
            return false;
        }
        let left = start.checked_sub(1).map(|j| samples[j]);
        let right = (i < n).then(|| samples[i]);
        match (left, right) {
            (Some(a), Some(b)) => {
                let span = (len + 1) as f64;
                for (step, v) in samples[start..i].iter_mut().enumerate() {
                    *v = a + (b - a) * (step + 1) as f64 / span;
                }
            }
            // Edge gaps hold the nearest observed value.
            (Some(edge), None) | (None, Some(edge)) => samples[start..i].fill(edge),
            (None, None) => unreachable!("len < n guarantees a neighbour"),
        }
    }
    true
}

/// Slices records into cleaned station-days and aligns them across stations.
pub fn build_days(records: &[RawRecord], policy: CleaningPolicy) -> Result<Corpus, IngestError> {
    let mut builder = CorpusBuilder::new();
    for record in records {
        builder.push(record)?;
    }
    builder.finish(policy)
}

/// Streams one or more canonical CSV sources straight into a corpus.
pub fn read_corpus<R: Read>(
    sources: impl IntoIterator<Item = R>,
    policy: CleaningPolicy,
) -> Result<Corpus, IngestError> {
    let mut builder = CorpusBuilder::new();
    for source in sources {
        for record in RecordReader::new(source)? {
            builder.push(&record?)?;
        }
    }
    builder.finish(policy)
}
