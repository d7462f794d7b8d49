//! Per-participant cleaning: a still baseline per sensor, replacement of
//! readings above a per-column threshold by that baseline, and optional
//! baseline subtraction to cancel differences in body weight.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, FrameRecord, PostureLabel, Variant};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("participant `{participant}` has no rows for a {basis:?} baseline")]
    NoRowsForBaseline {
        participant: String,
        basis: BaselineSource,
    },
    #[error("invalid outlier policy: {0}")]
    Policy(String),
    #[error("baseline has {baseline} sensors but record {record} has {found}")]
    Shape {
        baseline: usize,
        record: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSource {
    /// Rows labeled `still`.
    StillRows,
    /// Every row of the participant.
    AllRows,
}

impl BaselineSource {
    /// Controlled captures have dedicated still rows; realistic captures use
    /// the whole participant file.
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::Controlled => BaselineSource::StillRows,
            Variant::Realistic => BaselineSource::AllRows,
        }
    }
}

impl std::str::FromStr for BaselineSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "still" => Ok(Self::StillRows),
            "all" => Ok(Self::AllRows),
            _ => Err(format!("unknown baseline source `{s}` (still|all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StillBaseline {
    pub participant_id: String,
    /// Per-sensor mean: 32 seat values, then 32 back values when present.
    pub means: Vec<f64>,
    pub source: BaselineSource,
    pub n_rows_used: usize,
}

/// Mean with a second correction pass, so subtracting it from the same
/// values leaves a residual mean at rounding level.
fn accurate_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (sum, n) = values
        .clone()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let m = sum / n as f64;
    m + values.map(|v| v - m).sum::<f64>() / n as f64
}

pub fn compute_still_baseline(
    records: &[FrameRecord],
    source: BaselineSource,
) -> Result<StillBaseline, PreprocessError> {
    let participant = records
        .first()
        .map(|r| r.participant_id.clone())
        .unwrap_or_default();
    let rows: Vec<&FrameRecord> = records
        .iter()
        .filter(|r| source == BaselineSource::AllRows || r.posture == PostureLabel::Still)
        .collect();
    if rows.is_empty() {
        return Err(PreprocessError::NoRowsForBaseline {
            participant,
            basis: source,
        });
    }
    let width = rows.iter().map(|r| r.n_sensors()).min().unwrap_or(0);
    let means = (0..width)
        .map(|s| accurate_mean(rows.iter().map(move |r| r.sensor(s))))
        .collect();
    Ok(StillBaseline {
        participant_id: participant,
        means,
        source,
        n_rows_used: rows.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OutlierPolicy {
    /// Threshold per column at mean + k · (population) standard deviation.
    SigmaMultiple { k: f64 },
    /// Fixed threshold for every column.
    AbsoluteCap { cap: f64 },
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy::SigmaMultiple { k: 4.0 }
    }
}

impl OutlierPolicy {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        match *self {
            OutlierPolicy::SigmaMultiple { k } if k > 0.0 && k.is_finite() => Ok(()),
            OutlierPolicy::AbsoluteCap { cap } if cap > 0.0 && cap.is_finite() => Ok(()),
            other => Err(PreprocessError::Policy(format!(
                "{other:?} needs a positive finite parameter"
            ))),
        }
    }

    /// Per-column thresholds over `records` for `width` sensor columns.
    pub fn thresholds(&self, records: &[FrameRecord], width: usize) -> Vec<f64> {
        match *self {
            OutlierPolicy::AbsoluteCap { cap } => vec![cap; width],
            OutlierPolicy::SigmaMultiple { k } => (0..width)
                .map(|s| {
                    let n = records.len() as f64;
                    let mean = records.iter().map(|r| r.sensor(s)).sum::<f64>() / n;
                    let var = records
                        .iter()
                        .map(|r| (r.sensor(s) - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    mean + k * var.sqrt()
                })
                .collect(),
        }
    }
}

/// Replaces values above `thresholds[s]` by `min(baseline[s], thresholds[s])`.
/// The cap on the replacement keeps every output at or below its threshold.
pub fn apply_thresholds(
    records: &[FrameRecord],
    baseline: &StillBaseline,
    thresholds: &[f64],
) -> Result<Vec<FrameRecord>, PreprocessError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            check_width(baseline, i, r)?;
            Ok(r.map_sensors(|s, v| {
                if v > thresholds[s] {
                    baseline.means[s].min(thresholds[s])
                } else {
                    v
                }
            }))
        })
        .collect()
}

fn check_width(baseline: &StillBaseline, i: usize, r: &FrameRecord) -> Result<(), PreprocessError> {
    if r.n_sensors() > baseline.means.len() {
        return Err(PreprocessError::Shape {
            baseline: baseline.means.len(),
            record: i,
            found: r.n_sensors(),
        });
    }
    Ok(())
}

/// Outlier replacement for one participant's records; thresholds are
/// computed from those same records.
pub fn replace_outliers(
    records: &[FrameRecord],
    baseline: &StillBaseline,
    policy: &OutlierPolicy,
) -> Result<Vec<FrameRecord>, PreprocessError> {
    policy.validate()?;
    let width = records.iter().map(|r| r.n_sensors()).max().unwrap_or(0);
    let thresholds = policy.thresholds(records, width);
    apply_thresholds(records, baseline, &thresholds)
}

/// Subtracts the baseline from every sensor value.
pub fn normalize(
    records: &[FrameRecord],
    baseline: &StillBaseline,
) -> Result<Vec<FrameRecord>, PreprocessError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            check_width(baseline, i, r)?;
            Ok(r.map_sensors(|s, v| v - baseline.means[s]))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub policy: OutlierPolicy,
    pub normalize: bool,
    /// Defaults per variant when absent.
    pub baseline_source: Option<BaselineSource>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            policy: OutlierPolicy::default(),
            normalize: true,
            baseline_source: None,
        }
    }
}

/// Per participant: baseline, outlier replacement, then optional
/// normalization against the same (pre-replacement) baseline. Record order
/// is preserved.
pub fn preprocess_pipeline(
    ds: &Dataset,
    cfg: &PreprocessConfig,
) -> Result<Dataset, PreprocessError> {
    cfg.policy.validate()?;
    let source = cfg
        .baseline_source
        .unwrap_or(BaselineSource::default_for(ds.variant));

    let mut by_participant: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        by_participant
            .entry(r.participant_id.as_str())
            .or_default()
            .push(i);
    }
    let mut out: Vec<Option<FrameRecord>> = vec![None; ds.len()];
    for pid in ds.participants() {
        let idx = &by_participant[pid.as_str()];
        let rows: Vec<FrameRecord> = idx.iter().map(|&i| ds.records[i].clone()).collect();
        let baseline = compute_still_baseline(&rows, source)?;
        let mut cleaned = replace_outliers(&rows, &baseline, &cfg.policy)?;
        if cfg.normalize {
            cleaned = normalize(&cleaned, &baseline)?;
        }
        for (&i, r) in idx.iter().zip(cleaned) {
            out[i] = Some(r);
        }
    }
    Ok(Dataset::new(
        ds.variant,
        out.into_iter()
            .map(|r| r.expect("every row belongs to a participant"))
            .collect(),
        format!("{} | preprocessed", ds.provenance),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AgeGroup, Mat, PressureFrame};
    use proptest::prelude::*;

    fn rec(posture: PostureLabel, seat: [f64; 32]) -> FrameRecord {
        FrameRecord {
            participant_id: "p01".into(),
            age_group: AgeGroup::Unspecified,
            posture,
            timestamp_index: 0,
            snapshot_index: 0,
            seat: PressureFrame::new(Mat::Seat, seat).unwrap(),
            back: None,
        }
    }

    fn with_sensor(s: usize, v: f64) -> [f64; 32] {
        let mut a = [1.0; 32];
        a[s] = v;
        a
    }

    #[test]
    fn single_still_row_baseline() {
        let rows = vec![
            rec(PostureLabel::Still, with_sensor(3, 10.0)),
            rec(PostureLabel::Left, with_sensor(3, 99.0)),
        ];
        let b = compute_still_baseline(&rows, BaselineSource::StillRows).unwrap();
        assert_eq!(b.means[3], 10.0);
        assert_eq!(b.n_rows_used, 1);
        assert_eq!(b.means.len(), 32);
    }

    #[test]
    fn mean_of_three() {
        let rows: Vec<FrameRecord> = [10.0, 20.0, 30.0]
            .into_iter()
            .map(|v| rec(PostureLabel::Still, with_sensor(0, v)))
            .collect();
        let b = compute_still_baseline(&rows, BaselineSource::AllRows).unwrap();
        assert_eq!(b.means[0], 20.0);
    }

    #[test]
    fn missing_still_rows() {
        let rows = vec![rec(PostureLabel::Left, [0.0; 32])];
        assert!(matches!(
            compute_still_baseline(&rows, BaselineSource::StillRows),
            Err(PreprocessError::NoRowsForBaseline { .. })
        ));
        assert!(compute_still_baseline(&[], BaselineSource::AllRows).is_err());
    }

    #[test]
    fn spike_is_replaced_by_baseline() {
        let baseline = StillBaseline {
            participant_id: "p01".into(),
            means: vec![100.0; 32],
            source: BaselineSource::StillRows,
            n_rows_used: 1,
        };
        let rows = vec![rec(PostureLabel::Left, with_sensor(7, 900.0))];
        let out = apply_thresholds(&rows, &baseline, &[400.0; 32]).unwrap();
        assert_eq!(out[0].seat.values()[7], 100.0);
        assert_eq!(out[0].seat.values()[0], 1.0);
    }

    #[test]
    fn sigma_policy_flags_spike() {
        let mut rows: Vec<FrameRecord> = (0..40)
            .map(|i| rec(PostureLabel::Still, with_sensor(2, 100.0 + (i % 5) as f64)))
            .collect();
        rows[17] = rec(PostureLabel::Still, with_sensor(2, 1023.0));
        let b = compute_still_baseline(&rows, BaselineSource::StillRows).unwrap();
        let out = replace_outliers(&rows, &b, &OutlierPolicy::default()).unwrap();
        assert_eq!(out[17].seat.values()[2], b.means[2]);
        assert_eq!(out[3], rows[3]);
    }

    #[test]
    fn below_threshold_is_untouched() {
        let rows: Vec<FrameRecord> = (0..5)
            .map(|i| rec(PostureLabel::Still, with_sensor(1, i as f64)))
            .collect();
        let b = compute_still_baseline(&rows, BaselineSource::StillRows).unwrap();
        let out = replace_outliers(&rows, &b, &OutlierPolicy::AbsoluteCap { cap: 1000.0 }).unwrap();
        assert_eq!(out, rows);
    }

    #[test]
    fn replacement_capped_when_baseline_exceeds_cap() {
        let rows = vec![rec(PostureLabel::Still, [500.0; 32])];
        let b = compute_still_baseline(&rows, BaselineSource::StillRows).unwrap();
        let out = replace_outliers(&rows, &b, &OutlierPolicy::AbsoluteCap { cap: 300.0 }).unwrap();
        assert!(out[0].seat.values().iter().all(|&v| v <= 300.0));
    }

    #[test]
    fn normalize_arithmetic() {
        let baseline = StillBaseline {
            participant_id: "p01".into(),
            means: vec![100.0; 32],
            source: BaselineSource::StillRows,
            n_rows_used: 1,
        };
        let out = normalize(&[rec(PostureLabel::Left, with_sensor(0, 120.0))], &baseline).unwrap();
        assert_eq!(out[0].seat.values()[0], 20.0);
        let still = normalize(&[rec(PostureLabel::Still, [100.0; 32])], &baseline).unwrap();
        assert!(still[0].seat.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_policy() {
        assert!(OutlierPolicy::SigmaMultiple { k: 0.0 }.validate().is_err());
        assert!(OutlierPolicy::AbsoluteCap { cap: -1.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn fixed_threshold_replacement_is_idempotent(
            vals in prop::collection::vec(0.0f64..1023.0, 32 * 6),
            cap in 50.0f64..900.0,
        ) {
            let rows: Vec<FrameRecord> = vals
                .chunks(32)
                .map(|c| rec(PostureLabel::Still, c.try_into().unwrap()))
                .collect();
            let b = compute_still_baseline(&rows, BaselineSource::AllRows).unwrap();
            let thr = OutlierPolicy::SigmaMultiple { k: 1.0 }.thresholds(&rows, 32);
            let once = apply_thresholds(&rows, &b, &thr).unwrap();
            let twice = apply_thresholds(&once, &b, &thr).unwrap();
            prop_assert_eq!(&once, &twice);
            for r in &once {
                for (s, &t) in thr.iter().enumerate() {
                    prop_assert!(r.sensor(s) <= t);
                }
            }
            let capped = replace_outliers(&rows, &b, &OutlierPolicy::AbsoluteCap { cap }).unwrap();
            prop_assert_eq!(&replace_outliers(&capped, &b, &OutlierPolicy::AbsoluteCap { cap }).unwrap(), &capped);
        }

        #[test]
        fn normalize_inverts_exactly_on_dyadic_values(
            ints in prop::collection::vec(0u32..1024, 32),
            base in prop::collection::vec(0u32..65536, 32),
        ) {
            let seat: [f64; 32] = std::array::from_fn(|i| f64::from(ints[i]));
            let baseline = StillBaseline {
                participant_id: "p01".into(),
                means: base.iter().map(|&b| f64::from(b) / 64.0).collect(),
                source: BaselineSource::AllRows,
                n_rows_used: 1,
            };
            let r = rec(PostureLabel::Left, seat);
            let n = normalize(std::slice::from_ref(&r), &baseline).unwrap();
            let restored = n[0].map_sensors(|s, v| v + baseline.means[s]);
            prop_assert_eq!(restored, r);
        }
    }
}
