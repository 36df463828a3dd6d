//! Comparison statistics between observed and simulated series: station
//! cross-correlations, per-year and pooled mean/std, empirical CDFs with a
//! Kolmogorov-Smirnov distance, and monthly mean curves.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Corpus;

/// Rows kept in each emitted CDF table; the KS distance always uses the
/// full sample grids.
pub const DEFAULT_CDF_POINTS: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired samples, got {0}")]
    TooShort(usize),
    #[error("correlation is undefined for a constant series")]
    Constant,
    #[error("empirical CDF needs at least one finite sample")]
    EmptySamples,
    #[error("stations {a} and {b} share no dates")]
    NoSharedDates { a: String, b: String },
    #[error("simulated stations {simulated:?} differ from observed {observed:?}")]
    StationMismatch {
        observed: Vec<String>,
        simulated: Vec<String>,
    },
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, ValidationError> {
    if x.len() != y.len() {
        return Err(ValidationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(ValidationError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ValidationError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Minute-level correlation between two stations over their shared dates.
pub fn station_pearson(corpus: &Corpus, a: usize, b: usize) -> Result<f64, ValidationError> {
    let (days_a, days_b) = (corpus.days(a), corpus.days(b));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (date, day_a) in days_a {
        if let Some(day_b) = days_b.get(date) {
            xs.extend_from_slice(day_a.samples());
            ys.extend_from_slice(day_b.samples());
        }
    }
    if xs.is_empty() {
        return Err(ValidationError::NoSharedDates {
            a: corpus.stations()[a].clone(),
            b: corpus.stations()[b].clone(),
        });
    }
    pearson(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub days: usize,
    /// Mean irradiance over all in-window samples (equal to the mean of the
    /// daily means, since every day has the same sample count).
    pub mean: f64,
    /// Sample standard deviation over all in-window samples.
    pub std: f64,
    /// Sample standard deviation of the daily-mean series; 0 for one day.
    pub daily_mean_std: f64,
}

fn sample_std(sum_sq_dev: f64, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        (sum_sq_dev / (n - 1) as f64).sqrt()
    }
}

/// Summary over a set of days; `None` for an empty set.
pub fn summarize<'a>(days: impl IntoIterator<Item = &'a [f64]>) -> Option<SummaryStats> {
    let days: Vec<&[f64]> = days.into_iter().collect();
    if days.is_empty() {
        return None;
    }
    let count: usize = days.iter().map(|d| d.len()).sum();
    let total: f64 = days.iter().flat_map(|d| d.iter()).sum();
    let mean = total / count as f64;
    let ss: f64 = days
        .iter()
        .flat_map(|d| d.iter())
        .map(|v| (v - mean) * (v - mean))
        .sum();
    let daily_means: Vec<f64> = days
        .iter()
        .map(|d| d.iter().sum::<f64>() / d.len() as f64)
        .collect();
    let dm_mean = daily_means.iter().sum::<f64>() / daily_means.len() as f64;
    let dm_ss: f64 = daily_means
        .iter()
        .map(|v| (v - dm_mean) * (v - dm_mean))
        .sum();
    Some(SummaryStats {
        days: days.len(),
        mean,
        std: sample_std(ss, count),
        daily_mean_std: sample_std(dm_ss, daily_means.len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyStats {
    pub by_year: BTreeMap<i32, SummaryStats>,
    pub pooled: SummaryStats,
}

/// Per-year and pooled statistics of one station's days.
pub fn daily_stat_table(corpus: &Corpus, station: usize) -> DailyStats {
    let days = corpus.days(station);
    let mut by_year: BTreeMap<i32, Vec<&[f64]>> = BTreeMap::new();
    for (date, day) in days {
        by_year.entry(date.year()).or_default().push(day.samples());
    }
    DailyStats {
        by_year: by_year
            .into_iter()
            .filter_map(|(y, d)| summarize(d).map(|s| (y, s)))
            .collect(),
        pooled: summarize(days.values().map(|d| d.samples())).expect("corpus stations have days"),
    }
}

/// Right-continuous step CDF of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// Distinct sample values with the CDF at each.
    pub fn table(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
                _ => out.push((v, (i + 1) as f64 / n)),
            }
        }
        out
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf, ValidationError> {
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(ValidationError::EmptySamples);
    }
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { sorted })
}

/// Largest vertical gap between two step CDFs over the merged grid.
pub fn ks_distance(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    let (xs, ys) = (&a.sorted, &b.sorted);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let x = match (xs.get(i), ys.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub ghi: f64,
    pub observed: f64,
    pub simulated: f64,
}

/// Both CDFs on the merged grid, evenly thinned to at most `max_points`
/// rows (the last grid point is always kept).
pub fn cdf_comparison(
    observed: &EmpiricalCdf,
    simulated: &EmpiricalCdf,
    max_points: usize,
) -> Vec<CdfRow> {
    let mut grid: Vec<f64> = observed
        .sorted
        .iter()
        .chain(&simulated.sorted)
        .copied()
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let stride = grid.len().div_ceil(max_points.max(1)).max(1);
    let last = grid.len() - 1;
    grid.iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i == last)
        .map(|(_, &x)| CdfRow {
            ghi: x,
            observed: observed.eval(x),
            simulated: simulated.eval(x),
        })
        .collect()
}

pub type MonthlyCurve = [Option<f64>; 12];

/// Mean in-window irradiance per calendar month; months without data are
/// `None`.
pub fn monthly_curve<'a>(days: impl IntoIterator<Item = (NaiveDate, &'a [f64])>) -> MonthlyCurve {
    let mut sums = [0.0; 12];
    let mut counts = [0usize; 12];
    for (date, samples) in days {
        let m = date.month0() as usize;
        sums[m] += samples.iter().sum::<f64>();
        counts[m] += samples.len();
    }
    let mut out = [None; 12];
    for m in 0..12 {
        if counts[m] > 0 {
            out[m] = Some(sums[m] / counts[m] as f64);
        }
    }
    out
}

/// Monthly curves separately for each calendar year present.
pub fn monthly_curves_by_year(corpus: &Corpus, station: usize) -> BTreeMap<i32, MonthlyCurve> {
    let mut by_year: BTreeMap<i32, Vec<(NaiveDate, &[f64])>> = BTreeMap::new();
    for (date, day) in corpus.days(station) {
        by_year
            .entry(date.year())
            .or_default()
            .push((*date, day.samples()));
    }
    by_year
        .into_iter()
        .map(|(y, d)| (y, monthly_curve(d)))
        .collect()
}

pub fn monthly_curve_pooled(corpus: &Corpus, station: usize) -> MonthlyCurve {
    monthly_curve(corpus.days(station).iter().map(|(d, p)| (*d, p.samples())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub station_a: String,
    pub station_b: String,
    pub observed: f64,
    pub simulated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationDailyStats {
    pub observed_by_year: BTreeMap<i32, SummaryStats>,
    pub observed_pooled: SummaryStats,
    pub simulated: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMonthly {
    pub observed_by_year: BTreeMap<i32, MonthlyCurve>,
    pub simulated: MonthlyCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub stations: Vec<String>,
    pub pearson: Vec<PairCorrelation>,
    pub daily_stats: BTreeMap<String, StationDailyStats>,
    pub ks: BTreeMap<String, f64>,
    pub cdf_tables: BTreeMap<String, Vec<CdfRow>>,
    pub monthly: BTreeMap<String, StationMonthly>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

fn all_samples(corpus: &Corpus, station: usize) -> Vec<f64> {
    corpus
        .days(station)
        .values()
        .flat_map(|d| d.samples().iter().copied())
        .collect()
}

/// Compares every station of `simulated` with the same station of
/// `observed`. Both corpora must list the same stations in the same order.
pub fn build_report(
    observed: &Corpus,
    simulated: &Corpus,
    cdf_points: usize,
) -> Result<ValidationReport, ValidationError> {
    if observed.stations() != simulated.stations() {
        return Err(ValidationError::StationMismatch {
            observed: observed.stations().to_vec(),
            simulated: simulated.stations().to_vec(),
        });
    }
    let stations = observed.stations().to_vec();
    let mut pearson_rows = Vec::new();
    for a in 0..stations.len() {
        for b in a + 1..stations.len() {
            pearson_rows.push(PairCorrelation {
                station_a: stations[a].clone(),
                station_b: stations[b].clone(),
                observed: station_pearson(observed, a, b)?,
                simulated: station_pearson(simulated, a, b)?,
            });
        }
    }
    let mut daily_stats = BTreeMap::new();
    let mut ks = BTreeMap::new();
    let mut cdf_tables = BTreeMap::new();
    let mut monthly = BTreeMap::new();
    for (idx, name) in stations.iter().enumerate() {
        let obs = daily_stat_table(observed, idx);
        let sim = daily_stat_table(simulated, idx);
        daily_stats.insert(
            name.clone(),
            StationDailyStats {
                observed_by_year: obs.by_year,
                observed_pooled: obs.pooled,
                simulated: sim.pooled,
            },
        );
        let obs_cdf = empirical_cdf(&all_samples(observed, idx))?;
        let sim_cdf = empirical_cdf(&all_samples(simulated, idx))?;
        ks.insert(name.clone(), ks_distance(&obs_cdf, &sim_cdf));
        cdf_tables.insert(name.clone(), cdf_comparison(&obs_cdf, &sim_cdf, cdf_points));
        monthly.insert(
            name.clone(),
            StationMonthly {
                observed_by_year: monthly_curves_by_year(observed, idx),
                simulated: monthly_curve_pooled(simulated, idx),
            },
        );
    }
    Ok(ValidationReport {
        stations,
        pearson: pearson_rows,
        daily_stats,
        ks,
        cdf_tables,
        monthly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 4.0, 7.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&x, &[3.0; 4]), Err(ValidationError::Constant));
        assert_eq!(
            pearson(&x, &[1.0]),
            Err(ValidationError::LengthMismatch(4, 1))
        );
        assert_eq!(pearson(&[1.0], &[1.0]), Err(ValidationError::TooShort(1)));
    }

    #[test]
    fn ks_examples() {
        let a = empirical_cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(ks_distance(&a, &a.clone()), 0.0);
        let zero = empirical_cdf(&[0.0]).unwrap();
        let one = empirical_cdf(&[1.0]).unwrap();
        assert_eq!(ks_distance(&zero, &one), 1.0);
        let p = empirical_cdf(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let q = empirical_cdf(&[3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(ks_distance(&p, &q), 0.5);
        assert_eq!(empirical_cdf(&[]), Err(ValidationError::EmptySamples));
    }

    #[test]
    fn cdf_table_steps() {
        let c = empirical_cdf(&[2.0, 1.0, 2.0, 5.0]).unwrap();
        assert_eq!(c.table(), vec![(1.0, 0.25), (2.0, 0.75), (5.0, 1.0)]);
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(c.eval(2.0), 0.75);
        assert_eq!(c.eval(4.9), 0.75);
        let rows = cdf_comparison(&c, &c, 2);
        assert_eq!(rows.last().unwrap().ghi, 5.0);
        assert!(rows.len() <= 3);
    }

    #[test]
    fn summaries() {
        let day = [100.0; 1080];
        let s = summarize([&day[..]]).unwrap();
        assert_eq!(
            (s.mean, s.std, s.daily_mean_std, s.days),
            (100.0, 0.0, 0.0, 1)
        );
        assert!(summarize(std::iter::empty()).is_none());
    }

    #[test]
    fn monthly_partition() {
        let june = NaiveDate::from_ymd_opt(2015, 6, 3).unwrap();
        let samples = [100.0; 1080];
        let curve = monthly_curve([(june, &samples[..])]);
        assert_eq!(curve.iter().filter(|m| m.is_none()).count(), 11);
        assert_eq!(curve[5], Some(100.0));
    }

    /// Independent grouping oracle: bucket by (month) with a HashMap and
    /// one running mean per bucket.
    #[test]
    fn monthly_matches_grouping_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let start = NaiveDate::from_ymd_opt(2014, 11, 20).unwrap();
        let days: Vec<(NaiveDate, Vec<f64>)> = (0..200)
            .map(|i| {
                (
                    start + chrono::Days::new(i * 2),
                    (0..50).map(|_| rng.gen_range(0.0..900.0)).collect(),
                )
            })
            .collect();
        let curve = monthly_curve(days.iter().map(|(d, s)| (*d, s.as_slice())));
        let mut oracle: std::collections::HashMap<u32, (f64, f64)> = Default::default();
        for (d, s) in &days {
            for v in s {
                let e = oracle.entry(d.month()).or_insert((0.0, 0.0));
                e.1 += 1.0;
                e.0 += (v - e.0) / e.1;
            }
        }
        for m in 1..=12u32 {
            match (curve[m as usize - 1], oracle.get(&m)) {
                (Some(a), Some((b, _))) => assert!((a - b).abs() < 1e-9 * b.abs().max(1.0)),
                (None, None) => {}
                other => panic!("month {m}: {other:?}"),
            }
        }
    }

    /// Two-pass oracle over explicit per-day means.
    #[test]
    fn summary_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let days: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..1080).map(|_| rng.gen_range(0.0..1000.0)).collect())
            .collect();
        let s = summarize(days.iter().map(Vec::as_slice)).unwrap();
        let flat: Vec<f64> = days.concat();
        let n = flat.len() as f64;
        let mean = flat.iter().sum::<f64>() / n;
        let var = flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let means: Vec<f64> = days
            .iter()
            .map(|d| d.iter().sum::<f64>() / 1080.0)
            .collect();
        let mm = means.iter().sum::<f64>() / 40.0;
        let dvar = means.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / 39.0;
        assert!((s.mean - mean).abs() < 1e-9);
        assert!((s.std - var.sqrt()).abs() < 1e-9);
        assert!((s.daily_mean_std - dvar.sqrt()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60),
            scale in 0.1f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
                let x2: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
                prop_assert!((pearson(&x2, &y).unwrap() - r).abs() < 1e-9);
            }
        }

        #[test]
        fn ks_is_symmetric_and_bounded(
            a in prop::collection::vec(0u8..20, 1..50),
            b in prop::collection::vec(0u8..20, 1..50),
        ) {
            let fa = empirical_cdf(&a.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
            let fb = empirical_cdf(&b.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
            let d = ks_distance(&fa, &fb);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_distance(&fb, &fa));
            // brute force over the merged grid
            let mut brute: f64 = 0.0;
            for x in a.iter().chain(&b) {
                brute = brute.max((fa.eval(*x as f64) - fb.eval(*x as f64)).abs());
            }
            prop_assert!((d - brute).abs() < 1e-12);
            let same = fa.table() == fb.table();
            prop_assert_eq!(d == 0.0, same);
        }
    }
}
