//! Seeded synthetic chair data.
//!
//! Each posture is a pair of anisotropic Gaussian pressure bumps over the
//! grid coordinates of the seat and back mats. Participants differ by a
//! multiplicative weight and a small jitter of the bump centers; sensor noise
//! and single-sensor spikes are layered on top. Every record draws from its
//! own ChaCha stream keyed by (seed, participant, posture, event, timestamp),
//! so parallel generation reproduces the serial output.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    AgeGroup, Dataset, FrameRecord, Mat, PostureLabel, PressureFrame, Variant, PLACEMENTS,
    SENSORS_PER_MAT,
};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
}

/// Full-scale reading of the simulated 10-bit ADC.
pub const ADC_MAX: f64 = 1023.0;
const SEAT_AMPLITUDE: f64 = 600.0;
const BACK_AMPLITUDE: f64 = 450.0;
const EMPTY_AMPLITUDE: f64 = 12.0;

/// Fraction of the posture displacement reached at timestamps t1..t5.
pub const TIMESTAMP_BLEND: [f64; 5] = [0.25, 0.85, 1.0, 0.85, 0.35];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_participants: usize,
    pub postures: Vec<PostureLabel>,
    /// Snapshots per held posture (controlled) or events per posture (realistic).
    pub snapshots_or_events: usize,
    pub weight_scale_range: [f64; 2],
    pub noise_sd: f64,
    /// Per-frame probability that one sensor spikes to `outlier_magnitude`.
    pub outlier_probability: f64,
    pub outlier_magnitude: f64,
    /// Scales how far posture templates move pressure away from `still`.
    pub separation: f64,
    /// Standard deviation, in grid cells, of the per-participant center offset.
    pub center_jitter: f64,
    /// Realistic only: each event reaches a random fraction in
    /// `[1 - event_variability, 1]` of its posture displacement.
    pub event_variability: f64,
}

impl GeneratorConfig {
    /// 11 participants × 6 postures × 30 snapshots = 1980 records.
    pub fn controlled_default() -> Self {
        Self {
            seed: 42,
            n_participants: 11,
            postures: PostureLabel::ALL.to_vec(),
            snapshots_or_events: 30,
            weight_scale_range: [0.7, 1.3],
            noise_sd: 10.0,
            outlier_probability: 0.005,
            outlier_magnitude: ADC_MAX,
            separation: 1.0,
            center_jitter: 0.2,
            event_variability: 0.0,
        }
    }

    /// 39 participants × 5 postures × 5 events × 5 timestamps = 4875 records.
    pub fn realistic_default() -> Self {
        Self {
            seed: 42,
            n_participants: 39,
            postures: Variant::Realistic.labels(),
            snapshots_or_events: 5,
            weight_scale_range: [0.7, 1.3],
            noise_sd: 40.0,
            outlier_probability: 0.005,
            outlier_magnitude: ADC_MAX,
            separation: 0.25,
            center_jitter: 0.9,
            event_variability: 0.6,
        }
    }

    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::Controlled => Self::controlled_default(),
            Variant::Realistic => Self::realistic_default(),
        }
    }

    /// Parses a JSON object whose absent fields fall back to the variant's
    /// defaults.
    pub fn from_json_with_defaults(text: &str, variant: Variant) -> Result<Self, SynthError> {
        let overrides: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        let serde_json::Value::Object(overrides) = overrides else {
            return Err(SynthError::Config(
                "generator config must be a JSON object".into(),
            ));
        };
        let mut base = serde_json::to_value(Self::default_for(variant)).expect("serializable");
        let obj = base.as_object_mut().expect("object");
        for (k, v) in overrides {
            if !obj.contains_key(&k) {
                return Err(SynthError::Config(format!("unknown generator field `{k}`")));
            }
            obj.insert(k, v);
        }
        serde_json::from_value(base).map_err(|e| SynthError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let [lo, hi] = self.weight_scale_range;
        let checks = [
            (
                lo > 0.0 && lo <= hi && hi.is_finite(),
                "weight_scale_range needs 0 < low ≤ high",
            ),
            (
                self.noise_sd >= 0.0 && self.noise_sd.is_finite(),
                "noise_sd must be ≥ 0",
            ),
            (
                (0.0..=1.0).contains(&self.outlier_probability),
                "outlier_probability must be in [0,1]",
            ),
            (
                self.outlier_magnitude >= 0.0 && self.outlier_magnitude.is_finite(),
                "outlier_magnitude must be finite and ≥ 0",
            ),
            (
                self.separation >= 0.0 && self.separation.is_finite(),
                "separation must be ≥ 0",
            ),
            (
                self.center_jitter >= 0.0 && self.center_jitter.is_finite(),
                "center_jitter must be ≥ 0",
            ),
            (
                (0.0..=1.0).contains(&self.event_variability),
                "event_variability must be in [0,1]",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(SynthError::Config(msg.into()));
            }
        }
        let mut seen = self.postures.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.postures.len() {
            return Err(SynthError::Config("duplicate posture in postures".into()));
        }
        Ok(())
    }
}

/// One Gaussian pressure bump in 1-based grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: (f64, f64),
    pub spread: (f64, f64),
    pub amplitude: f64,
}

impl Bump {
    pub fn at(&self, row: f64, col: f64) -> f64 {
        let dr = (row - self.center.0) / self.spread.0;
        let dc = (col - self.center.1) / self.spread.1;
        self.amplitude * (-0.5 * (dr * dr + dc * dc)).exp()
    }

    fn lerp(&self, other: &Bump, t: f64) -> Bump {
        let l = |a: f64, b: f64| a + (b - a) * t;
        Bump {
            center: (
                l(self.center.0, other.center.0),
                l(self.center.1, other.center.1),
            ),
            spread: (
                l(self.spread.0, other.spread.0),
                l(self.spread.1, other.spread.1),
            ),
            amplitude: l(self.amplitude, other.amplitude),
        }
    }

    fn shifted(&self, dr: f64, dc: f64) -> Bump {
        Bump {
            center: (self.center.0 + dr, self.center.1 + dc),
            ..*self
        }
    }
}

/// Expected pressure layout of one posture on both mats.
///
/// Row 1 is the front edge of the seat and the top of the backrest. Seat
/// columns 1–4 lie under the left leg; on the back mat the same columns meet
/// the right shoulder, so lateral leans shift the two mats in opposite
/// directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostureTemplate {
    pub seat: Bump,
    /// Back bump at full engagement.
    pub back: Bump,
    /// Multiplier on the back bump amplitude.
    pub back_engagement: f64,
}

impl PostureTemplate {
    pub fn for_posture(posture: PostureLabel, separation: f64) -> Self {
        let s = separation;
        let seat = Bump {
            center: (4.5, 4.5),
            spread: (1.8, 1.8),
            amplitude: SEAT_AMPLITUDE,
        };
        let back = Bump {
            center: (4.5, 4.5),
            spread: (2.0, 2.0),
            amplitude: BACK_AMPLITUDE,
        };
        let engage = |delta: f64| (0.5 + delta * s).clamp(0.02, 1.5);
        match posture {
            PostureLabel::Still => Self {
                seat,
                back,
                back_engagement: 0.5,
            },
            PostureLabel::Left => Self {
                seat: seat.shifted(0.0, -1.5 * s),
                back: back.shifted(0.0, 1.0 * s),
                back_engagement: engage(-0.1),
            },
            PostureLabel::Right => Self {
                seat: seat.shifted(0.0, 1.5 * s),
                back: back.shifted(0.0, -s),
                back_engagement: engage(-0.1),
            },
            PostureLabel::Front => Self {
                seat: seat.shifted(-1.2 * s, 0.0),
                back: back.shifted(1.0 * s, 0.0),
                back_engagement: engage(-0.4),
            },
            PostureLabel::Back => Self {
                seat: seat.shifted(1.0 * s, 0.0),
                back: back.shifted(-0.5 * s, 0.0),
                back_engagement: engage(0.45),
            },
            PostureLabel::Empty => Self {
                seat: Bump {
                    center: (4.5, 4.5),
                    spread: (4.0, 4.0),
                    amplitude: EMPTY_AMPLITUDE,
                },
                back: Bump {
                    center: (4.5, 4.5),
                    spread: (4.0, 4.0),
                    amplitude: EMPTY_AMPLITUDE,
                },
                back_engagement: 0.6,
            },
        }
    }

    /// Moves `t` of the way from `self` toward `target`.
    pub fn blend(&self, target: &PostureTemplate, t: f64) -> PostureTemplate {
        PostureTemplate {
            seat: self.seat.lerp(&target.seat, t),
            back: self.back.lerp(&target.back, t),
            back_engagement: self.back_engagement
                + (target.back_engagement - self.back_engagement) * t,
        }
    }

    fn jittered(&self, seat: (f64, f64), back: (f64, f64)) -> PostureTemplate {
        PostureTemplate {
            seat: self.seat.shifted(seat.0, seat.1),
            back: self.back.shifted(back.0, back.1),
            ..*self
        }
    }

    /// Noise-free readings for a unit-weight sitter.
    pub fn expected(&self) -> ([f64; SENSORS_PER_MAT], [f64; SENSORS_PER_MAT]) {
        let eval = |bump: &Bump, gain: f64| {
            std::array::from_fn(|i| {
                let (r, c) = PLACEMENTS[i];
                gain * bump.at(f64::from(r), f64::from(c))
            })
        };
        (
            eval(&self.seat, 1.0),
            eval(&self.back, self.back_engagement),
        )
    }
}

/// Sensor noise and spike settings used by [`sample_frame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub noise_sd: f64,
    pub outlier_probability: f64,
    pub outlier_magnitude: f64,
}

impl From<&GeneratorConfig> for NoiseModel {
    fn from(c: &GeneratorConfig) -> Self {
        Self {
            noise_sd: c.noise_sd,
            outlier_probability: c.outlier_probability,
            outlier_magnitude: c.outlier_magnitude,
        }
    }
}

fn perturb<R: Rng>(
    base: &[f64; SENSORS_PER_MAT],
    weight: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> [f64; SENSORS_PER_MAT] {
    let normal = (noise.noise_sd > 0.0).then(|| Normal::new(0.0, noise.noise_sd).expect("sd ≥ 0"));
    let mut out = [0.0; SENSORS_PER_MAT];
    for (o, &b) in out.iter_mut().zip(base) {
        let eps = normal.as_ref().map_or(0.0, |n| n.sample(rng));
        *o = (weight * b + eps).max(0.0);
    }
    if noise.outlier_probability > 0.0 && rng.random_bool(noise.outlier_probability) {
        out[rng.random_range(0..SENSORS_PER_MAT)] = noise.outlier_magnitude;
    }
    out
}

/// Draws one (seat, back) frame pair: `weight × template + noise`, clamped
/// at 0, with an occasional single-sensor spike per mat.
pub fn sample_frame<R: Rng>(
    template: &PostureTemplate,
    weight: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> (PressureFrame, PressureFrame) {
    assert!(weight > 0.0, "weight must be positive");
    let (seat, back) = template.expected();
    let seat = perturb(&seat, weight, noise, rng);
    let back = perturb(&back, weight, noise, rng);
    (
        PressureFrame::new(Mat::Seat, seat).expect("finite"),
        PressureFrame::new(Mat::Back, back).expect("finite"),
    )
}

struct Participant {
    id: String,
    age_group: AgeGroup,
    weight: f64,
    seat_offset: (f64, f64),
    back_offset: (f64, f64),
}

fn participant(cfg: &GeneratorConfig, p: usize, variant: Variant) -> Participant {
    let mut rng = seed::rng_for(cfg.seed, &[p as u64, u64::MAX]);
    let [lo, hi] = cfg.weight_scale_range;
    let weight = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    let jitter = Normal::new(0.0, cfg.center_jitter).expect("sd ≥ 0");
    let mut j = || {
        if cfg.center_jitter > 0.0 {
            jitter.sample(&mut rng)
        } else {
            0.0
        }
    };
    let seat_offset = (j(), j());
    let back_offset = (j(), j());
    let age_group = match variant {
        Variant::Controlled => AgeGroup::Unspecified,
        Variant::Realistic if p.is_multiple_of(2) => AgeGroup::Young,
        Variant::Realistic => AgeGroup::Senior,
    };
    Participant {
        id: format!("p{:02}", p + 1),
        age_group,
        weight,
        seat_offset,
        back_offset,
    }
}

fn posture_key(l: PostureLabel) -> u64 {
    l.index() as u64
}

pub fn generate_controlled(cfg: &GeneratorConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let noise = NoiseModel::from(cfg);
    let per_participant: Vec<Vec<FrameRecord>> = (0..cfg.n_participants)
        .into_par_iter()
        .map(|p| {
            let who = participant(cfg, p, Variant::Controlled);
            let mut out = Vec::with_capacity(cfg.postures.len() * cfg.snapshots_or_events);
            for &posture in &cfg.postures {
                let template = PostureTemplate::for_posture(posture, cfg.separation)
                    .jittered(who.seat_offset, who.back_offset);
                for snap in 0..cfg.snapshots_or_events {
                    let mut rng =
                        seed::rng_for(cfg.seed, &[p as u64, posture_key(posture), snap as u64, 0]);
                    let (seat, _) = sample_frame(&template, who.weight, &noise, &mut rng);
                    out.push(FrameRecord {
                        participant_id: who.id.clone(),
                        age_group: who.age_group,
                        posture,
                        timestamp_index: 0,
                        snapshot_index: snap as u32,
                        seat,
                        back: None,
                    });
                }
            }
            out
        })
        .collect();
    Ok(Dataset::new(
        Variant::Controlled,
        per_participant.into_iter().flatten().collect(),
        format!("synthetic controlled, seed {}", cfg.seed),
    ))
}

pub fn generate_realistic(cfg: &GeneratorConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    if cfg.postures.contains(&PostureLabel::Empty) {
        return Err(SynthError::Config(
            "realistic data has no `empty` posture".into(),
        ));
    }
    let noise = NoiseModel::from(cfg);
    let still = PostureTemplate::for_posture(PostureLabel::Still, cfg.separation);
    let per_participant: Vec<Vec<FrameRecord>> = (0..cfg.n_participants)
        .into_par_iter()
        .map(|p| {
            let who = participant(cfg, p, Variant::Realistic);
            let mut out = Vec::with_capacity(cfg.postures.len() * cfg.snapshots_or_events * 5);
            for &posture in &cfg.postures {
                let target = PostureTemplate::for_posture(posture, cfg.separation);
                for event in 0..cfg.snapshots_or_events {
                    let mut ev_rng = seed::rng_for(
                        cfg.seed,
                        &[p as u64, posture_key(posture), event as u64, u64::MAX],
                    );
                    let reach = 1.0 - cfg.event_variability * ev_rng.random::<f64>();
                    for ts in 1..=5u8 {
                        let blend = TIMESTAMP_BLEND[usize::from(ts - 1)] * reach;
                        let template = still
                            .blend(&target, blend)
                            .jittered(who.seat_offset, who.back_offset);
                        let mut rng = seed::rng_for(
                            cfg.seed,
                            &[p as u64, posture_key(posture), event as u64, u64::from(ts)],
                        );
                        let (seat, back) = sample_frame(&template, who.weight, &noise, &mut rng);
                        out.push(FrameRecord {
                            participant_id: who.id.clone(),
                            age_group: who.age_group,
                            posture,
                            timestamp_index: ts,
                            snapshot_index: event as u32,
                            seat,
                            back: Some(back),
                        });
                    }
                }
            }
            out
        })
        .collect();
    Ok(Dataset::new(
        Variant::Realistic,
        per_participant.into_iter().flatten().collect(),
        format!("synthetic realistic, seed {}", cfg.seed),
    ))
}

pub fn generate(variant: Variant, cfg: &GeneratorConfig) -> Result<Dataset, SynthError> {
    match variant {
        Variant::Controlled => generate_controlled(cfg),
        Variant::Realistic => generate_realistic(cfg),
    }
}
