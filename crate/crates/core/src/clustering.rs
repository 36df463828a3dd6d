//! Per-station, per-season k-means over z-scored daily features, with
//! clusters relabelled by generation suitability: `c1` is the brightest,
//! smoothest regime and `ck` the darkest.

use std::collections::HashSet;
use std::fmt;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureVector, FEATURE_COUNT};
use crate::ingest::{DailyProfile, Season};

pub const DEFAULT_K: usize = 4;
pub const MAX_ITERATIONS: usize = 300;
/// Independent k-means++ restarts per fit; the lowest-inertia run wins.
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("need at least {k} feature vectors, got {got}")]
    TooFewVectors { k: usize, got: usize },
    #[error("need at least {k} distinct points, got {distinct}")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("{station}/{season}: {source}")]
    Fit {
        station: String,
        season: Season,
        #[source]
        source: Box<ClusteringError>,
    },
}

/// Suitability label `c1..ck`, stored 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Label(u8);

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Label::new(value).ok_or_else(|| "labels are 1-based".to_string())
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.0
    }
}

impl Label {
    pub fn new(one_based: u8) -> Option<Self> {
        (one_based >= 1).then_some(Self(one_based))
    }

    pub fn from_index(index: usize) -> Self {
        Self(u8::try_from(index + 1).expect("label fits in u8"))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

type Point = [f64; FEATURE_COUNT];

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Point,
    pub std: Point,
}

impl Normalization {
    pub fn fit(features: &[FeatureVector]) -> Self {
        let n = features.len() as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f.to_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; FEATURE_COUNT];
        if features.len() > 1 {
            for f in features {
                for ((s, v), m) in std.iter_mut().zip(f.to_array()).zip(mean) {
                    *s += (v - m) * (v - m);
                }
            }
            std.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt());
        }
        Self { mean, std }
    }

    /// Zero-variance features map to 0.
    pub fn apply(&self, f: &FeatureVector) -> Point {
        let mut out = f.to_array();
        for ((v, m), s) in out.iter_mut().zip(self.mean).zip(self.std) {
            *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
        }
        out
    }

    pub fn invert(&self, z: &Point) -> Point {
        let mut out = *z;
        for ((v, m), s) in out.iter_mut().zip(self.mean).zip(self.std) {
            *v = *v * s + m;
        }
        out
    }
}

/// Z-scores each feature column using the N-1 sample standard deviation.
pub fn normalize(
    features: &[FeatureVector],
    k: usize,
) -> Result<(Vec<Point>, Normalization), ClusteringError> {
    if features.len() < k {
        return Err(ClusteringError::TooFewVectors {
            k,
            got: features.len(),
        });
    }
    let norm = Normalization::fit(features);
    Ok((features.iter().map(|f| norm.apply(f)).collect(), norm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares of the final partition.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each centroid update.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest<C: AsRef<[f64]>>(point: &[f64], centroids: &[C]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c.as_ref());
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn count_distinct<P: AsRef<[f64]>>(points: &[P]) -> usize {
    points
        .iter()
        .map(|p| {
            p.as_ref()
                .iter()
                .map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() })
                .collect::<Vec<_>>()
        })
        .collect::<HashSet<_>>()
        .len()
}

fn check_input<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<(), ClusteringError> {
    if k == 0 {
        return Err(ClusteringError::ZeroK);
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(ClusteringError::TooFewDistinct { k, distinct });
    }
    Ok(())
}

/// One Lloyd run with k-means++ seeding, deterministic for a given seed.
pub fn kmeans<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    seed: u64,
) -> Result<KMeansFit, ClusteringError> {
    check_input(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(lloyd(points, k, &mut rng))
}

/// Best of `restarts` runs drawn from one seeded generator.
pub fn kmeans_restarts<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansFit, ClusteringError> {
    check_input(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = lloyd(points, k, &mut rng);
    for _ in 1..restarts {
        let fit = lloyd(points, k, &mut rng);
        if fit.inertia < best.inertia {
            best = fit;
        }
    }
    Ok(best)
}

fn plus_plus_seeds<P: AsRef<[f64]>, R: Rng>(points: &[P], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].as_ref().to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                acc += d;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let next = points[chosen.expect("a point off the current centroids exists")]
            .as_ref()
            .to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p.as_ref(), &next));
        }
        centroids.push(next);
    }
    centroids
}

fn lloyd<P: AsRef<[f64]>, R: Rng>(points: &[P], k: usize, rng: &mut R) -> KMeansFit {
    let dim = points[0].as_ref().len();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assignments: Vec<usize> = points
        .iter()
        .map(|p| nearest(p.as_ref(), &centroids))
        .collect();
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        repair_empty(points, &centroids, &mut assignments, k);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            sizes[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.as_ref()) {
                *s += v;
            }
        }
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(&sizes) {
            *c = s.into_iter().map(|v| v / *n as f64).collect();
        }
        history.push(inertia(points, &centroids, &assignments));

        let next: Vec<usize> = points
            .iter()
            .map(|p| nearest(p.as_ref(), &centroids))
            .collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }

    KMeansFit {
        inertia: inertia(points, &centroids, &assignments),
        centroids,
        assignments,
        iterations,
        inertia_history: history,
    }
}

/// Moves the farthest point of a multi-member cluster into each empty one.
fn repair_empty<P: AsRef<[f64]>>(
    points: &[P],
    centroids: &[Vec<f64>],
    assignments: &mut [usize],
    k: usize,
) {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let far = points
            .iter()
            .zip(assignments.iter())
            .enumerate()
            .filter(|(_, (_, a))| sizes[**a] > 1)
            .map(|(i, (p, a))| (i, sq_dist(p.as_ref(), &centroids[*a])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("enough distinct points to refill an empty cluster");
        sizes[assignments[far]] -= 1;
        assignments[far] = empty;
        sizes[empty] = 1;
    }
}

fn inertia<P: AsRef<[f64]>>(points: &[P], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p.as_ref(), &centroids[a]))
        .sum()
}

/// Maps each raw centroid index to its suitability label: higher
/// denormalized mean first, then lower MFI, then lower raw index.
pub fn order_by_suitability(centroids: &[Point], normalization: &Normalization) -> Vec<Label> {
    let raw: Vec<Point> = centroids.iter().map(|c| normalization.invert(c)).collect();
    let mut order: Vec<usize> = (0..centroids.len()).collect();
    order.sort_by(|&a, &b| {
        raw[b][0]
            .total_cmp(&raw[a][0])
            .then(raw[a][4].total_cmp(&raw[b][4]))
            .then(a.cmp(&b))
    });
    let mut labels = vec![Label(1); centroids.len()];
    for (rank, raw_index) in order.into_iter().enumerate() {
        labels[raw_index] = Label::from_index(rank);
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub station_id: String,
    pub season: Season,
    pub k: usize,
    pub normalization: Normalization,
    pub centroids: Vec<Point>,
    /// `suitability_order[raw]` is the label of raw centroid `raw`.
    pub suitability_order: Vec<Label>,
}

impl ClusterModel {
    /// Fits the model and returns it with the label of every input vector.
    pub fn fit(
        station_id: &str,
        season: Season,
        features: &[FeatureVector],
        k: usize,
        seed: u64,
        restarts: usize,
    ) -> Result<(Self, Vec<Label>), ClusteringError> {
        let wrap = |e: ClusteringError| ClusteringError::Fit {
            station: station_id.to_string(),
            season,
            source: Box::new(e),
        };
        let (points, normalization) = normalize(features, k).map_err(wrap)?;
        let fit = kmeans_restarts(&points, k, seed, restarts.max(1)).map_err(wrap)?;
        let centroids: Vec<Point> = fit
            .centroids
            .iter()
            .map(|c| c.as_slice().try_into().expect("5-dimensional centroid"))
            .collect();
        let suitability_order = order_by_suitability(&centroids, &normalization);
        let labels = fit
            .assignments
            .iter()
            .map(|&a| suitability_order[a])
            .collect();
        Ok((
            Self {
                station_id: station_id.to_string(),
                season,
                k,
                normalization,
                centroids,
                suitability_order,
            },
            labels,
        ))
    }

    pub fn nearest_raw(&self, features: &FeatureVector) -> usize {
        nearest(&self.normalization.apply(features), &self.centroids)
    }

    pub fn label(&self, features: &FeatureVector) -> Label {
        self.suitability_order[self.nearest_raw(features)]
    }

    /// Denormalized centroids indexed by label (`c1` first).
    pub fn centroids_by_label(&self) -> Vec<FeatureVector> {
        let mut out = vec![FeatureVector::from_array([0.0; FEATURE_COUNT]); self.k];
        for (c, label) in self.centroids.iter().zip(&self.suitability_order) {
            out[label.index()] = FeatureVector::from_array(self.normalization.invert(c));
        }
        out
    }
}

/// Date-ordered suitability labels of one station within one season.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    pub station_id: String,
    pub season: Season,
    pub entries: Vec<(NaiveDate, Label)>,
}

impl StateSequence {
    pub fn label_on(&self, date: NaiveDate) -> Option<Label> {
        self.entries
            .binary_search_by_key(&date, |(d, _)| *d)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

/// Labels days with a fitted model. Days are sorted by date in the output.
pub fn label_days<'a>(
    model: &ClusterModel,
    days: impl IntoIterator<Item = &'a DailyProfile>,
) -> StateSequence {
    let mut entries: Vec<(NaiveDate, Label)> = days
        .into_iter()
        .map(|d| (d.date(), model.label(&features::extract(d))))
        .collect();
    entries.sort_by_key(|(d, _)| *d);
    entries.dedup_by_key(|(d, _)| *d);
    StateSequence {
        station_id: model.station_id.clone(),
        season: model.season,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn z_scores_two_values() {
        let fv = |m| FeatureVector::from_array([m, 1.0, 0.0, 0.0, 0.0]);
        let (points, norm) = normalize(&[fv(1.0), fv(3.0)], 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((points[0][0] + h).abs() < 1e-12);
        assert!((points[1][0] - h).abs() < 1e-12);
        assert!((norm.std[0] - 2f64.sqrt()).abs() < 1e-12);
        // constant column
        assert_eq!(points[0][1], 0.0);
        assert_eq!(points[1][1], 0.0);
    }

    #[test]
    fn z_scoring_is_idempotent() {
        let raw = [0.3, 1.7, -2.0, 4.4, 0.1];
        let fvs: Vec<_> = raw
            .iter()
            .map(|&v| FeatureVector::from_array([v; 5]))
            .collect();
        let (once, _) = normalize(&fvs, 1).unwrap();
        let again_in: Vec<_> = once.iter().map(|p| FeatureVector::from_array(*p)).collect();
        let (twice, _) = normalize(&again_in, 1).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_few_inputs() {
        let fv = FeatureVector::from_array([1.0; 5]);
        assert_eq!(
            normalize(&[fv], 2).unwrap_err(),
            ClusteringError::TooFewVectors { k: 2, got: 1 }
        );
        let pts = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(
            kmeans(&pts, 3, 0).unwrap_err(),
            ClusteringError::TooFewDistinct { k: 3, distinct: 2 }
        );
    }

    fn brute_force_two_partition(points: &[Vec<f64>]) -> Vec<bool> {
        let n = points.len();
        let cost = |members: &[&Vec<f64>]| -> f64 {
            if members.is_empty() {
                return 0.0;
            }
            let dim = members[0].len();
            let mut c = vec![0.0; dim];
            for m in members {
                for (a, b) in c.iter_mut().zip(m.iter()) {
                    *a += b / members.len() as f64;
                }
            }
            members.iter().map(|m| sq_dist(m, &c)).sum()
        };
        let mut best = (f64::INFINITY, 0u32);
        // Fix point 0 in side A to skip mirrored masks.
        for mask in 0u32..(1 << (n - 1)) {
            let side = |i: usize| i > 0 && mask & (1 << (i - 1)) != 0;
            let a: Vec<_> = (0..n).filter(|&i| !side(i)).map(|i| &points[i]).collect();
            let b: Vec<_> = (0..n).filter(|&i| side(i)).map(|i| &points[i]).collect();
            if b.is_empty() {
                continue;
            }
            let c = cost(&a) + cost(&b);
            if c < best.0 {
                best = (c, mask);
            }
        }
        (0..n)
            .map(|i| i > 0 && best.1 & (1 << (i - 1)) != 0)
            .collect()
    }

    #[test]
    fn separated_clouds_match_brute_force_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut points = Vec::new();
        for i in 0..12 {
            let (cx, cy) = if i % 2 == 0 { (0.0, 0.0) } else { (10.0, 5.0) };
            points.push(vec![
                cx + rng.gen_range(-0.5..0.5),
                cy + rng.gen_range(-0.5..0.5),
            ]);
        }
        let oracle = brute_force_two_partition(&points);
        for seed in 0..5 {
            let fit = kmeans(&points, 2, seed).unwrap();
            let same_as_zero: Vec<bool> = fit
                .assignments
                .iter()
                .map(|&a| a != fit.assignments[0])
                .collect();
            assert_eq!(same_as_zero, oracle);
            for c in &fit.centroids {
                let near_a = sq_dist(c, &[0.0, 0.0]).sqrt() < 1.0;
                let near_b = sq_dist(c, &[10.0, 5.0]).sqrt() < 1.0;
                assert!(near_a || near_b);
            }
        }
    }

    #[test]
    fn k_equal_to_distinct_points_is_exact() {
        let points = vec![vec![0.0], vec![1.0], vec![5.0], vec![1.0], vec![9.0]];
        let fit = kmeans(&points, 4, 3).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut cs: Vec<f64> = fit.centroids.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![0.0, 1.0, 5.0, 9.0]);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen(), rng.gen(), rng.gen()])
            .collect();
        assert_eq!(
            kmeans(&points, 4, 9).unwrap(),
            kmeans(&points, 4, 9).unwrap()
        );
        assert_eq!(
            kmeans_restarts(&points, 4, 9, 5).unwrap(),
            kmeans_restarts(&points, 4, 9, 5).unwrap()
        );
    }

    #[test]
    fn suitability_ordering() {
        let norm = Normalization {
            mean: [0.0; 5],
            std: [1.0; 5],
        };
        let c = |mean, mfi| [mean, 0.0, 0.0, 0.0, mfi];
        let labels = order_by_suitability(
            &[c(600.0, 0.0), c(100.0, 0.0), c(400.0, 0.0), c(250.0, 0.0)],
            &norm,
        );
        assert_eq!(
            labels.iter().map(|l| l.get()).collect::<Vec<_>>(),
            vec![1, 4, 2, 3]
        );

        let labels = order_by_suitability(&[c(300.0, 50.0), c(300.0, 5.0)], &norm);
        assert_eq!(
            labels.iter().map(|l| l.get()).collect::<Vec<_>>(),
            vec![2, 1]
        );

        assert_eq!(order_by_suitability(&[c(1.0, 1.0)], &norm), vec![Label(1)]);
    }

    fn random_features(seed: u64, n: usize) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let regime = (i % 4) as f64;
                FeatureVector::from_array([
                    100.0 * regime + rng.gen_range(0.0..40.0),
                    80.0 + rng.gen_range(0.0..30.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-2.0..2.0),
                    1000.0 * (3.0 - regime) + rng.gen_range(0.0..300.0),
                ])
            })
            .collect()
    }

    #[test]
    fn centroid_days_get_their_own_label_and_relabel_matches_fit() {
        let features = random_features(3, 80);
        let (model, labels) = ClusterModel::fit("S", Season::Summer, &features, 4, 1, 3).unwrap();
        for (f, l) in features.iter().zip(&labels) {
            assert_eq!(model.label(f), *l);
        }
        for (c, want) in model.centroids_by_label().iter().zip(1u8..) {
            assert_eq!(model.label(c).get(), want);
        }
        let means: Vec<f64> = model.centroids_by_label().iter().map(|c| c.mean).collect();
        assert!(means.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let features = random_features(4, 60);
        let (model, _) = ClusterModel::fit("S", Season::Winter, &features, 4, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            let probe = FeatureVector::from_array([
                rng.gen_range(-50.0..450.0),
                rng.gen_range(50.0..130.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..4000.0),
            ]);
            let z = model.normalization.apply(&probe);
            let mut best = (f64::INFINITY, 0);
            for (i, c) in model.centroids.iter().enumerate() {
                let d: f64 = z.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, i);
                }
            }
            assert_eq!(model.nearest_raw(&probe), best.1);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn inertia_never_increases(seed in 0u64..1000, n in 8usize..120, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen(), rng.gen::<f64>() * 3.0]).collect();
            let fit = kmeans(&points, k, seed).unwrap();
            for w in fit.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            prop_assert!(fit.inertia <= fit.inertia_history[0] + 1e-9);
            prop_assert_eq!(fit.centroids.len(), k);
        }

        #[test]
        fn labels_survive_unit_rescaling(seed in 0u64..200, scale in prop::array::uniform5(0.01f64..100.0)) {
            let features = random_features(seed, 60);
            let scaled: Vec<_> = features
                .iter()
                .map(|f| {
                    let mut a = f.to_array();
                    for (v, s) in a.iter_mut().zip(scale) {
                        *v *= s;
                    }
                    FeatureVector::from_array(a)
                })
                .collect();
            let (_, a) = ClusterModel::fit("S", Season::Spring, &features, 4, seed, 2).unwrap();
            let (_, b) = ClusterModel::fit("S", Season::Spring, &scaled, 4, seed, 2).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
