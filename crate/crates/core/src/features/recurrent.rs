use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::data::{Dataset, FrameRecord, PostureLabel, PressureFrame, Variant};

/// Which timestamps of each realistic event are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrentSelector {
    /// Every timestamp.
    #[default]
    Full,
    /// Mid-event snapshot only.
    T3,
    /// One row per event: element-wise mean of timestamps 2, 3 and 4.
    T234,
}

impl std::str::FromStr for RecurrentSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "t3" => Ok(Self::T3),
            "t234" => Ok(Self::T234),
            _ => Err(format!("unknown recurrent selector `{s}` (full|t3|t234)")),
        }
    }
}

fn mean3(a: &PressureFrame, b: &PressureFrame, c: &PressureFrame) -> PressureFrame {
    // anchored on `a` so identical inputs reproduce it bit-for-bit
    a.map(|i, x| x + ((b.values()[i] - x) + (c.values()[i] - x)) / 3.0)
}

pub fn select_recurrent(
    ds: &Dataset,
    selector: RecurrentSelector,
) -> Result<Dataset, FeatureError> {
    if selector == RecurrentSelector::Full {
        return Ok(ds.clone());
    }
    if ds.variant != Variant::Realistic {
        return Err(FeatureError::Variant(format!(
            "recurrent selector {selector:?} needs a realistic dataset, got {}",
            ds.variant.as_str()
        )));
    }
    match selector {
        RecurrentSelector::Full => unreachable!(),
        RecurrentSelector::T3 => Ok(ds.filter(|r| r.timestamp_index == 3)),
        RecurrentSelector::T234 => {
            type Key<'a> = (&'a str, PostureLabel, u32);
            let mut order: Vec<Key> = Vec::new();
            let mut events: HashMap<Key, [Option<&FrameRecord>; 3]> = HashMap::new();
            for r in &ds.records {
                let key = (r.participant_id.as_str(), r.posture, r.snapshot_index);
                let slot = events.entry(key).or_insert_with(|| {
                    order.push(key);
                    [None; 3]
                });
                if let 2..=4 = r.timestamp_index {
                    let s = &mut slot[usize::from(r.timestamp_index - 2)];
                    if s.is_some() {
                        return Err(FeatureError::DuplicateTimestamp {
                            participant: key.0.to_owned(),
                            posture: key.1,
                            event: key.2,
                            timestamp: r.timestamp_index,
                        });
                    }
                    *s = Some(r);
                }
            }
            let mut records = Vec::with_capacity(order.len());
            for key in order {
                let slots = events[&key];
                let get = |k: usize| {
                    slots[k].ok_or_else(|| FeatureError::MissingTimestamp {
                        participant: key.0.to_owned(),
                        posture: key.1,
                        event: key.2,
                        timestamp: k as u8 + 2,
                    })
                };
                let (t2, t3, t4) = (get(0)?, get(1)?, get(2)?);
                let back = match (&t3.back, &t2.back, &t4.back) {
                    (Some(b3), Some(b2), Some(b4)) => Some(mean3(b3, b2, b4)),
                    _ => None,
                };
                records.push(FrameRecord {
                    seat: mean3(&t3.seat, &t2.seat, &t4.seat),
                    back,
                    ..t3.clone()
                });
            }
            Ok(Dataset::new(ds.variant, records, ds.provenance.clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AgeGroup, Mat};

    fn rec(posture: PostureLabel, event: u32, ts: u8, base: f64) -> FrameRecord {
        FrameRecord {
            participant_id: "p01".into(),
            age_group: AgeGroup::Young,
            posture,
            timestamp_index: ts,
            snapshot_index: event,
            seat: PressureFrame::new(Mat::Seat, std::array::from_fn(|i| base + i as f64 * 0.3))
                .unwrap(),
            back: Some(
                PressureFrame::new(Mat::Back, std::array::from_fn(|i| base * 2.0 + i as f64))
                    .unwrap(),
            ),
        }
    }

    fn event(posture: PostureLabel, event: u32, bases: [f64; 5]) -> Vec<FrameRecord> {
        (1..=5)
            .map(|t| rec(posture, event, t, bases[t as usize - 1]))
            .collect()
    }

    #[test]
    fn t234_of_identical_frames_is_t3() {
        let ds = Dataset::new(
            Variant::Realistic,
            event(PostureLabel::Left, 0, [1.0, 7.1, 7.1, 7.1, 2.0]),
            "",
        );
        let out = select_recurrent(&ds, RecurrentSelector::T234).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.records[0], ds.records[2]);
    }

    #[test]
    fn t234_matches_brute_force_mean() {
        let mut recs = event(PostureLabel::Left, 0, [1.0, 10.0, 20.25, 33.5, 2.0]);
        recs.extend(event(PostureLabel::Right, 0, [0.0, 3.3, 1.1, 9.9, 4.4]));
        let ds = Dataset::new(Variant::Realistic, recs.clone(), "");
        let out = select_recurrent(&ds, RecurrentSelector::T234).unwrap();
        assert_eq!(out.len(), 2);
        for (k, o) in out.records.iter().enumerate() {
            let src = &recs[k * 5..k * 5 + 5];
            for s in 0..64 {
                let expect = (src[1].sensor(s) + src[2].sensor(s) + src[3].sensor(s)) / 3.0;
                assert!((o.sensor(s) - expect).abs() < 1e-12);
            }
            assert_eq!(o.timestamp_index, 3);
        }
    }

    #[test]
    fn t3_and_missing_timestamp() {
        let mut recs = event(PostureLabel::Front, 1, [1.0, 2.0, 3.0, 4.0, 5.0]);
        let ds = Dataset::new(Variant::Realistic, recs.clone(), "");
        let t3 = select_recurrent(&ds, RecurrentSelector::T3).unwrap();
        assert_eq!(t3.len(), 1);
        assert_eq!(t3.records[0].timestamp_index, 3);

        recs.remove(3);
        let ds = Dataset::new(Variant::Realistic, recs, "");
        assert!(matches!(
            select_recurrent(&ds, RecurrentSelector::T234),
            Err(FeatureError::MissingTimestamp { timestamp: 4, .. })
        ));
    }

    #[test]
    fn controlled_input_is_rejected() {
        let ds = Dataset::new(Variant::Controlled, vec![], "");
        assert!(matches!(
            select_recurrent(&ds, RecurrentSelector::T3),
            Err(FeatureError::Variant(_))
        ));
        assert!(select_recurrent(&ds, RecurrentSelector::Full).is_ok());
    }
}
