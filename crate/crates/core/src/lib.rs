//! Sitting-posture classification from smart-chair pressure mats.
//!
//! The crate covers the whole offline pipeline: the sensor data model and the
//! 8×8 grid projection of each 32-sensor mat ([`data`]), a seeded synthetic
//! chair-data generator ([`synth`]), per-participant outlier replacement and
//! still-baseline normalization ([`preprocess`]), engineered features
//! ([`features`]), five classifier families ([`classifiers`]), K-fold
//! evaluation ([`evaluation`]) and the experiment runner behind the `sitgrid`
//! binary ([`experiment`]).

pub mod classifiers;
pub mod data;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod preprocess;
pub mod seed;
pub mod synth;

pub use classifiers::{ClassifierModel, ClassifierSpec, Family};
pub use data::{
    AgeGroup, Dataset, FrameRecord, Mat, PostureLabel, PressureFrame, Variant, SENSORS_PER_MAT,
};
pub use evaluation::{ClassificationReport, FoldPlan};
pub use features::{FeatureMatrix, FeatureSpec};
