//! First-order transition matrices over joint-state codes.

mod envelope;

pub use envelope::{FitMetadata, ModelEnvelope, SeasonModel, SCHEMA_VERSION};

use chrono::NaiveDate;
use thiserror::Error;

use crate::statespace::Code;

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
pub const STATIONARY_TOLERANCE: f64 = 1e-12;
pub const STATIONARY_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum MarkovError {
    #[error("need at least 2 codes to estimate transitions, got {0}")]
    TooShort(usize),
    #[error("state space is empty")]
    NoStates,
    #[error("code {code} outside 1..={r}")]
    CodeOutOfRange { code: u32, r: usize },
    #[error("invalid transition model: {0}")]
    Invalid(String),
    #[error("model document: {0}")]
    Document(String),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("no season had enough aligned days to fit")]
    NothingFitted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    r: usize,
    counts: Vec<Vec<u64>>,
    matrix: Vec<Vec<f64>>,
    fallback: Vec<f64>,
}

impl TransitionModel {
    /// Rebuilds a model from stored parts, checking every invariant.
    pub fn from_parts(
        counts: Vec<Vec<u64>>,
        matrix: Vec<Vec<f64>>,
        fallback: Vec<f64>,
    ) -> Result<Self, MarkovError> {
        let r = matrix.len();
        let invalid = |m: String| Err(MarkovError::Invalid(m));
        if r == 0 {
            return Err(MarkovError::NoStates);
        }
        if counts.len() != r || fallback.len() != r {
            return invalid(format!(
                "dimension mismatch: matrix {r} rows, counts {}, fallback {}",
                counts.len(),
                fallback.len()
            ));
        }
        check_distribution("fallback", &fallback)?;
        for (i, (row, count_row)) in matrix.iter().zip(&counts).enumerate() {
            if row.len() != r || count_row.len() != r {
                return invalid(format!("row {} is not of length {r}", i + 1));
            }
            check_distribution(&format!("row {}", i + 1), row)?;
            let total: u64 = count_row.iter().sum();
            let expected: Vec<f64> = if total == 0 {
                fallback.clone()
            } else {
                count_row.iter().map(|&c| c as f64 / total as f64).collect()
            };
            if row
                .iter()
                .zip(&expected)
                .any(|(a, b)| (a - b).abs() > 1e-12)
            {
                return invalid(format!(
                    "row {} disagrees with its transition counts",
                    i + 1
                ));
            }
        }
        Ok(Self {
            r,
            counts,
            matrix,
            fallback,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    /// Marginal code distribution used for rows without observed successors.
    pub fn fallback(&self) -> &[f64] {
        &self.fallback
    }

    pub fn row(&self, from: Code) -> &[f64] {
        &self.matrix[from.index()]
    }

    pub fn probability(&self, from: Code, to: Code) -> f64 {
        self.matrix[from.index()][to.index()]
    }
}

fn check_distribution(what: &str, row: &[f64]) -> Result<(), MarkovError> {
    if row
        .iter()
        .any(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
    {
        return Err(MarkovError::Invalid(format!(
            "{what} has an entry outside [0, 1]"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(MarkovError::Invalid(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Splits a date-ordered code sequence wherever consecutive dates are not
/// consecutive calendar days.
pub fn split_runs(dates: &[NaiveDate], codes: &[Code]) -> Vec<Vec<Code>> {
    debug_assert_eq!(dates.len(), codes.len());
    let mut runs: Vec<Vec<Code>> = Vec::new();
    for (i, (&date, &code)) in dates.iter().zip(codes).enumerate() {
        let continues = i > 0 && dates[i - 1].succ_opt() == Some(date);
        match runs.last_mut() {
            Some(run) if continues => run.push(code),
            _ => runs.push(vec![code]),
        }
    }
    runs
}

/// Counts transitions inside each run (never across runs) and normalizes
/// the rows. Rows with no outgoing transition take the empirical marginal
/// distribution of all codes.
pub fn fit_mtpm<S: AsRef<[Code]>>(runs: &[S], r: usize) -> Result<TransitionModel, MarkovError> {
    if r == 0 {
        return Err(MarkovError::NoStates);
    }
    let total: usize = runs.iter().map(|run| run.as_ref().len()).sum();
    if total < 2 {
        return Err(MarkovError::TooShort(total));
    }
    let mut counts = vec![vec![0u64; r]; r];
    let mut occurrences = vec![0u64; r];
    for run in runs {
        let run = run.as_ref();
        for &code in run {
            if code.index() >= r {
                return Err(MarkovError::CodeOutOfRange {
                    code: code.get(),
                    r,
                });
            }
            occurrences[code.index()] += 1;
        }
        for pair in run.windows(2) {
            counts[pair[0].index()][pair[1].index()] += 1;
        }
    }
    let fallback: Vec<f64> = occurrences
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    let matrix = counts
        .iter()
        .map(|row| {
            let n: u64 = row.iter().sum();
            if n == 0 {
                fallback.clone()
            } else {
                row.iter().map(|&c| c as f64 / n as f64).collect()
            }
        })
        .collect();
    Ok(TransitionModel {
        r,
        counts,
        matrix,
        fallback,
    })
}

/// Power iteration from the uniform distribution until the L1 change drops
/// below 1e-12 (or the iteration cap). For reducible chains the result
/// depends on the starting point.
pub fn stationary_distribution(model: &TransitionModel) -> Vec<f64> {
    let r = model.r;
    let mut pi = vec![1.0 / r as f64; r];
    let mut next = vec![0.0; r];
    for _ in 0..STATIONARY_MAX_ITERATIONS {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (p, row) in pi.iter().zip(&model.matrix) {
            if *p == 0.0 {
                continue;
            }
            for (n, q) in next.iter_mut().zip(row) {
                *n += p * q;
            }
        }
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        let change: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < STATIONARY_TOLERANCE {
            break;
        }
    }
    pi
}
