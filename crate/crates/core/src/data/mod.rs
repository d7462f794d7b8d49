//! Canonical domain types: posture labels, pressure frames, labeled records
//! and datasets, plus the grid projection and CSV persistence.

mod grid;
mod io;
mod raw;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{grid_to_frame, map_to_grid, Grid, GridMapping, GRID_SIZE, PLACEMENTS};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, CSV_HEADER};
pub use raw::{prune_raw_columns, RawFieldMap, RawRow};

pub const SENSORS_PER_MAT: usize = 32;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("grid cell ({row},{col}) is unoccupied but holds {value}")]
    NonZeroUnoccupiedCell { row: u8, col: u8, value: f64 },
    #[error("non-finite sensor value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },
    #[error("invariant violated at record {record}: {message}")]
    InvariantViolation { record: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Posture class. The declaration order is the canonical class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostureLabel {
    Back,
    Empty,
    Left,
    Right,
    Front,
    Still,
}

impl PostureLabel {
    pub const ALL: [PostureLabel; 6] = [
        PostureLabel::Back,
        PostureLabel::Empty,
        PostureLabel::Left,
        PostureLabel::Right,
        PostureLabel::Front,
        PostureLabel::Still,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PostureLabel::Back => "back",
            PostureLabel::Empty => "empty",
            PostureLabel::Left => "left",
            PostureLabel::Right => "right",
            PostureLabel::Front => "front",
            PostureLabel::Still => "still",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PostureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PostureLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PostureLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown posture label `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mat {
    Seat,
    Back,
}

impl Mat {
    pub fn as_str(self) -> &'static str {
        match self {
            Mat::Seat => "seat",
            Mat::Back => "back",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Young,
    Senior,
    Unspecified,
}

impl AgeGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Young => "young",
            AgeGroup::Senior => "senior",
            AgeGroup::Unspecified => "unspecified",
        }
    }
}

impl FromStr for AgeGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "young" => Ok(AgeGroup::Young),
            "senior" => Ok(AgeGroup::Senior),
            "unspecified" => Ok(AgeGroup::Unspecified),
            _ => Err(format!("unknown age group `{s}`")),
        }
    }
}

/// Collection protocol. Controlled captures are seat-only held postures;
/// realistic captures carry both mats at five timestamps per event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Controlled,
    Realistic,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Controlled => "controlled",
            Variant::Realistic => "realistic",
        }
    }

    pub fn labels(self) -> Vec<PostureLabel> {
        match self {
            Variant::Controlled => PostureLabel::ALL.to_vec(),
            Variant::Realistic => PostureLabel::ALL
                .into_iter()
                .filter(|&l| l != PostureLabel::Empty)
                .collect(),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "controlled" => Ok(Variant::Controlled),
            "realistic" => Ok(Variant::Realistic),
            _ => Err(format!("unknown variant `{s}`")),
        }
    }
}

/// 32 finite readings from one mat, indexed by sensor number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureFrame {
    mat: Mat,
    values: [f64; SENSORS_PER_MAT],
}

impl PressureFrame {
    pub fn new(mat: Mat, values: [f64; SENSORS_PER_MAT]) -> Result<Self, DataError> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFinite { index, value });
        }
        Ok(Self { mat, values })
    }

    pub fn zeros(mat: Mat) -> Self {
        Self {
            mat,
            values: [0.0; SENSORS_PER_MAT],
        }
    }

    pub fn mat(&self) -> Mat {
        self.mat
    }

    pub fn values(&self) -> &[f64; SENSORS_PER_MAT] {
        &self.values
    }

    /// Applies `f` to every reading. Non-finite results are a caller bug.
    pub fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut values = self.values;
        for (i, v) in values.iter_mut().enumerate() {
            *v = f(i, *v);
        }
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            mat: self.mat,
            values,
        }
    }

    /// Value at a 1-based grid cell; unoccupied cells read 0.
    pub fn at(&self, row: u8, col: u8) -> f64 {
        GridMapping::sensor_at(row, col).map_or(0.0, |s| self.values[s])
    }

    pub fn is_raw_valid(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// One labeled observation.
///
/// `timestamp_index` is 1..=5 for realistic captures and 0 for controlled
/// snapshots. `snapshot_index` is the snapshot number within a held posture
/// (controlled, 0..30) or the event number within a posture (realistic).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub participant_id: String,
    pub age_group: AgeGroup,
    pub posture: PostureLabel,
    pub timestamp_index: u8,
    pub snapshot_index: u32,
    pub seat: PressureFrame,
    pub back: Option<PressureFrame>,
}

impl FrameRecord {
    /// Seat readings followed by back readings when present.
    pub fn sensor_values(&self) -> Vec<f64> {
        let mut out = self.seat.values().to_vec();
        if let Some(back) = &self.back {
            out.extend_from_slice(back.values());
        }
        out
    }

    /// Sensor value by combined index (0..32 seat, 32..64 back).
    pub fn sensor(&self, index: usize) -> f64 {
        if index < SENSORS_PER_MAT {
            self.seat.values()[index]
        } else {
            self.back
                .as_ref()
                .map_or(0.0, |b| b.values()[index - SENSORS_PER_MAT])
        }
    }

    pub fn n_sensors(&self) -> usize {
        if self.back.is_some() {
            2 * SENSORS_PER_MAT
        } else {
            SENSORS_PER_MAT
        }
    }

    /// Returns a copy whose combined sensor vector is `f(index, value)`.
    pub fn map_sensors(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let seat = self.seat.map(&mut f);
        let back = self
            .back
            .as_ref()
            .map(|b| b.map(|i, v| f(i + SENSORS_PER_MAT, v)));
        Self {
            seat,
            back,
            ..self.clone()
        }
    }
}

/// Ordered records of one collection variant.
///
/// `provenance` is an informational note and is not persisted to CSV, so it
/// is excluded from equality.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub variant: Variant,
    pub records: Vec<FrameRecord>,
    pub provenance: String,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.variant == other.variant && self.records == other.records
    }
}

impl Dataset {
    pub fn new(variant: Variant, records: Vec<FrameRecord>, provenance: impl Into<String>) -> Self {
        Self {
            variant,
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks the variant's structural rules on every record.
    pub fn validate(&self) -> Result<(), DataError> {
        for (i, r) in self.records.iter().enumerate() {
            let fail = |message: String| Err(DataError::InvariantViolation { record: i, message });
            if r.seat.mat() != Mat::Seat {
                return fail("seat frame tagged as back mat".into());
            }
            if let Some(b) = &r.back {
                if b.mat() != Mat::Back {
                    return fail("back frame tagged as seat mat".into());
                }
            }
            match self.variant {
                Variant::Controlled => {
                    if r.back.is_some() {
                        return fail("controlled record carries a back frame".into());
                    }
                    if r.timestamp_index != 0 {
                        return fail(format!(
                            "controlled record has timestamp_index {}",
                            r.timestamp_index
                        ));
                    }
                }
                Variant::Realistic => {
                    if r.back.is_none() {
                        return fail("realistic record lacks a back frame".into());
                    }
                    if !(1..=5).contains(&r.timestamp_index) {
                        return fail(format!(
                            "realistic record has timestamp_index {}",
                            r.timestamp_index
                        ));
                    }
                    if r.posture == PostureLabel::Empty {
                        return fail("realistic record labeled `empty`".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Participant ids in first-appearance order.
    pub fn participants(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.participant_id.as_str()))
            .map(|r| r.participant_id.clone())
            .collect()
    }

    pub fn filter(&self, mut keep: impl FnMut(&FrameRecord) -> bool) -> Dataset {
        Dataset {
            variant: self.variant,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn count_label(&self, label: PostureLabel) -> usize {
        self.records.iter().filter(|r| r.posture == label).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(posture: PostureLabel, ts: u8, back: bool) -> FrameRecord {
        FrameRecord {
            participant_id: "p01".into(),
            age_group: AgeGroup::Young,
            posture,
            timestamp_index: ts,
            snapshot_index: 0,
            seat: PressureFrame::zeros(Mat::Seat),
            back: back.then(|| PressureFrame::zeros(Mat::Back)),
        }
    }

    #[test]
    fn label_strings_round_trip() {
        for l in PostureLabel::ALL {
            assert_eq!(l.as_str().parse::<PostureLabel>().unwrap(), l);
        }
        assert!("sideways".parse::<PostureLabel>().is_err());
    }

    #[test]
    fn frame_rejects_nan() {
        let mut v = [0.0; 32];
        v[5] = f64::NAN;
        assert!(matches!(
            PressureFrame::new(Mat::Seat, v),
            Err(DataError::NonFinite { index: 5, .. })
        ));
    }

    #[test]
    fn variant_rules() {
        let ok = Dataset::new(
            Variant::Controlled,
            vec![record(PostureLabel::Empty, 0, false)],
            "",
        );
        assert!(ok.validate().is_ok());
        let bad = Dataset::new(
            Variant::Controlled,
            vec![record(PostureLabel::Left, 0, true)],
            "",
        );
        assert!(bad.validate().is_err());
        let empty_real = Dataset::new(
            Variant::Realistic,
            vec![record(PostureLabel::Empty, 3, true)],
            "",
        );
        assert!(empty_real.validate().is_err());
        let bad_ts = Dataset::new(
            Variant::Realistic,
            vec![record(PostureLabel::Left, 0, true)],
            "",
        );
        assert!(bad_ts.validate().is_err());
        let good = Dataset::new(
            Variant::Realistic,
            vec![record(PostureLabel::Left, 5, true)],
            "",
        );
        assert!(good.validate().is_ok());
    }

    #[test]
    fn realistic_labels_exclude_empty() {
        assert_eq!(Variant::Realistic.labels().len(), 5);
        assert!(!Variant::Realistic.labels().contains(&PostureLabel::Empty));
    }
}
