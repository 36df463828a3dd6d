//! Daily features: mean, sample standard deviation, skewness, excess
//! kurtosis and the moving fluctuation intensity (MFI).
//!
//! MFI is the product of the reverse fluctuation count (how many times the
//! day's trend flips direction) and the average fluctuation magnitude (mean
//! absolute minute-to-minute change).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DailyProfile;

pub const FEATURE_COUNT: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["mean", "std", "skewness", "kurtosis", "mfi"];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("{what} needs at least {needed} samples, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub mfi: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; FEATURE_COUNT] {
        [self.mean, self.std, self.skewness, self.kurtosis, self.mfi]
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        Self {
            mean: a[0],
            std: a[1],
            skewness: a[2],
            kurtosis: a[3],
            mfi: a[4],
        }
    }
}

fn require(what: &'static str, needed: usize, got: usize) -> Result<(), FeatureError> {
    if got < needed {
        Err(FeatureError::TooShort { what, needed, got })
    } else {
        Ok(())
    }
}

/// Reverse fluctuation count. Flat steps never count as a reversal.
pub fn rfc(samples: &[f64]) -> Result<usize, FeatureError> {
    require("rfc", 3, samples.len())?;
    Ok(samples
        .windows(3)
        .filter(|w| (w[2] - w[1]) * (w[1] - w[0]) < 0.0)
        .count())
}

/// Average fluctuation magnitude over the N-1 consecutive differences.
pub fn afm(samples: &[f64]) -> Result<f64, FeatureError> {
    require("afm", 2, samples.len())?;
    let total: f64 = samples.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (samples.len() - 1) as f64)
}

pub fn mfi(samples: &[f64]) -> Result<f64, FeatureError> {
    require("mfi", 3, samples.len())?;
    Ok(rfc(samples)? as f64 * afm(samples)?)
}

/// Features of an arbitrary sample sequence (at least three samples).
///
/// Skewness and kurtosis use a 1/N outer factor with the N-1 sample
/// standard deviation. When the standard deviation is zero both are 0.
pub fn extract_samples(samples: &[f64]) -> Result<FeatureVector, FeatureError> {
    require("extract", 3, samples.len())?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (n - 1.0)).sqrt();
    let (skewness, kurtosis) = if std > 0.0 {
        let s2 = std * std;
        (m3 / (n * s2 * std), m4 / (n * s2 * s2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(FeatureVector {
        mean,
        std,
        skewness,
        kurtosis,
        mfi: mfi(samples)?,
    })
}

pub fn extract(profile: &DailyProfile) -> FeatureVector {
    extract_samples(profile.samples()).expect("daily profiles hold 1,080 samples")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn rfc_cases() {
        assert_eq!(rfc(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 0);
        assert_eq!(rfc(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0);
        assert_eq!(rfc(&[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap(), 3);
        // a plateau between a rise and a fall is not a strict reversal
        assert_eq!(rfc(&[0.0, 1.0, 1.0, 0.0]).unwrap(), 0);
        assert!(rfc(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn afm_cases() {
        assert_eq!(afm(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(afm(&[0.0, 2.0, 0.0, 2.0]).unwrap(), 2.0);
        assert_eq!(afm(&[0.0, 6.0]).unwrap(), 6.0);
        assert_eq!(
            afm(&[1.0]),
            Err(FeatureError::TooShort {
                what: "afm",
                needed: 2,
                got: 1
            })
        );
    }

    #[test]
    fn mfi_cases() {
        assert_eq!(mfi(&[2.0; 6]).unwrap(), 0.0);
        assert_eq!(mfi(&[1.0, 3.0, 5.0, 7.0]).unwrap(), 0.0);
        assert_eq!(mfi(&[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap(), 3.0);
    }

    #[test]
    fn degenerate_and_symmetric_profiles() {
        let zeros = extract_samples(&[0.0; 1080]).unwrap();
        assert_eq!(zeros.to_array(), [0.0; 5]);

        let alternating: Vec<f64> = (0..1080)
            .map(|i| if i % 2 == 0 { 0.0 } else { 100.0 })
            .collect();
        let f = extract_samples(&alternating).unwrap();
        assert_eq!(f.mean, 50.0);
        assert!(f.skewness.abs() < 1e-12);
    }

    fn vec_1080() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1200.0, 1080)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn shift_invariance(xs in vec_1080(), c in -500.0f64..500.0) {
            let a = extract_samples(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let b = extract_samples(&shifted).unwrap();
            prop_assert!(close(b.mean, a.mean + c, 1e-9));
            prop_assert!(close(b.std, a.std, 1e-9));
            prop_assert!(close(b.skewness, a.skewness, 1e-7));
            prop_assert!(close(b.kurtosis, a.kurtosis, 1e-7));
            prop_assert!(close(afm(&shifted).unwrap(), afm(&xs).unwrap(), 1e-9));
        }

        #[test]
        fn scale_invariance(xs in vec_1080(), lambda in 0.01f64..50.0) {
            let a = extract_samples(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * lambda).collect();
            let b = extract_samples(&scaled).unwrap();
            prop_assert_eq!(rfc(&scaled).unwrap(), rfc(&xs).unwrap());
            prop_assert!(close(b.mean, a.mean * lambda, 1e-9));
            prop_assert!(close(b.std, a.std * lambda, 1e-9));
            prop_assert!(close(b.mfi, a.mfi * lambda, 1e-9));
            prop_assert!(close(b.skewness, a.skewness, 1e-9));
            prop_assert!(close(b.kurtosis, a.kurtosis, 1e-9));
        }

        #[test]
        fn reversal_invariance(xs in vec_1080()) {
            let a = extract_samples(&xs).unwrap();
            let rev: Vec<f64> = xs.iter().rev().copied().collect();
            let b = extract_samples(&rev).unwrap();
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                prop_assert!(close(*x, y, 1e-9));
            }
        }

        #[test]
        fn rfc_bounded(xs in prop::collection::vec(-10.0f64..10.0, 3..200)) {
            prop_assert!(rfc(&xs).unwrap() <= xs.len() - 2);
            let f = extract_samples(&xs).unwrap();
            prop_assert!(f.std >= 0.0 && f.mfi >= 0.0);
        }
    }
}
