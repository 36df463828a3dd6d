//! Joint multi-station states and the reduced code table.
//!
//! A joint state is the tuple of suitability labels of every station on one
//! day. Only tuples that actually occur are kept; they are sorted
//! lexicographically (leftmost station most significant) and numbered
//! `1..=r`.

use std::collections::HashMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{Label, StateSequence};

#[derive(Debug, Error, PartialEq)]
pub enum StateSpaceError {
    #[error("station {station} has no label on {date}")]
    MissingLabel { station: String, date: NaiveDate },
    #[error("joint state {0} was never observed")]
    Unobserved(JointState),
    #[error("code {code} outside 1..={r}")]
    CodeOutOfRange { code: u32, r: usize },
    #[error("cannot reduce an empty joint sequence")]
    Empty,
    #[error("joint state {state} does not match k={k}, j={j}")]
    Shape {
        state: JointState,
        k: usize,
        j: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointState(pub Vec<Label>);

impl JointState {
    pub fn labels(&self) -> &[Label] {
        &self.0
    }
}

impl fmt::Display for JointState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

/// Digital code of a reduced joint state, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Code(u32);

impl Code {
    pub fn new(one_based: u32) -> Option<Self> {
        (one_based >= 1).then_some(Self(one_based))
    }

    pub fn from_index(index: usize) -> Self {
        Self(u32::try_from(index + 1).expect("code fits in u32"))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Assembles the per-date label tuples, stations in the given order.
pub fn joint_sequence(
    sequences: &[StateSequence],
    dates: &[NaiveDate],
) -> Result<Vec<JointState>, StateSpaceError> {
    dates
        .iter()
        .map(|&date| {
            sequences
                .iter()
                .map(|seq| {
                    seq.label_on(date)
                        .ok_or_else(|| StateSpaceError::MissingLabel {
                            station: seq.station_id.clone(),
                            date,
                        })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(JointState)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedStateSpace {
    k: usize,
    j: usize,
    permutations: Vec<JointState>,
    code_of: HashMap<JointState, Code>,
}

impl ReducedStateSpace {
    /// Builds a space from an already-sorted, distinct permutation list.
    pub fn from_permutations(
        k: usize,
        j: usize,
        mut permutations: Vec<JointState>,
    ) -> Result<Self, StateSpaceError> {
        if permutations.is_empty() {
            return Err(StateSpaceError::Empty);
        }
        for state in &permutations {
            if state.0.len() != j || state.0.iter().any(|l| l.index() >= k) {
                return Err(StateSpaceError::Shape {
                    state: state.clone(),
                    k,
                    j,
                });
            }
        }
        permutations.sort();
        permutations.dedup();
        let code_of = permutations
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), Code::from_index(i)))
            .collect();
        Ok(Self {
            k,
            j,
            permutations,
            code_of,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn j(&self) -> usize {
        self.j
    }

    /// Number of observed permutations.
    pub fn r(&self) -> usize {
        self.permutations.len()
    }

    /// k^j, saturating.
    pub fn full_size(&self) -> u128 {
        (self.k as u128).saturating_pow(self.j as u32)
    }

    /// Number of permutations cut from the full k^j grid.
    pub fn r0(&self) -> u128 {
        self.full_size() - self.r() as u128
    }

    /// Permutations in code order; code `d` is at position `d - 1`.
    pub fn permutations(&self) -> &[JointState] {
        &self.permutations
    }

    pub fn encode(&self, state: &JointState) -> Result<Code, StateSpaceError> {
        self.code_of
            .get(state)
            .copied()
            .ok_or_else(|| StateSpaceError::Unobserved(state.clone()))
    }

    pub fn decode(&self, code: Code) -> Result<&JointState, StateSpaceError> {
        self.permutations
            .get(code.index())
            .ok_or(StateSpaceError::CodeOutOfRange {
                code: code.get(),
                r: self.r(),
            })
    }

    pub fn encode_all(&self, states: &[JointState]) -> Result<Vec<Code>, StateSpaceError> {
        states.iter().map(|s| self.encode(s)).collect()
    }

    pub fn codes(&self) -> impl Iterator<Item = Code> {
        (0..self.r()).map(Code::from_index)
    }
}

/// Keeps the distinct observed joint states and numbers them by
/// lexicographic rank.
pub fn reduce(
    sequence: &[JointState],
    k: usize,
    j: usize,
) -> Result<ReducedStateSpace, StateSpaceError> {
    ReducedStateSpace::from_permutations(k, j, sequence.to_vec())
}
