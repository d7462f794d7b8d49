//! Engineered features and the feature matrix consumed by the classifiers.

mod geometry;
mod recurrent;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::forest::{ForestParams, RandomForest};
use crate::classifiers::ClassifierError;
use crate::data::{
    DataError, Dataset, FrameRecord, PostureLabel, PressureFrame, Variant, SENSORS_PER_MAT,
};

pub use geometry::{
    center_of_mass, edge_sums, quadrant_sums, CenterOfMass, GRID_CENTROID, ZERO_MASS_EPS,
};
pub use recurrent::{select_recurrent, RecurrentSelector};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature spec: {0}")]
    Spec(String),
    #[error("variant error: {0}")]
    Variant(String),
    #[error("event {participant}/{posture}/{event} lacks timestamp {timestamp}")]
    MissingTimestamp {
        participant: String,
        posture: PostureLabel,
        event: u32,
        timestamp: u8,
    },
    #[error("event {participant}/{posture}/{event} repeats timestamp {timestamp}")]
    DuplicateTimestamp {
        participant: String,
        posture: PostureLabel,
        event: u32,
        timestamp: u8,
    },
    #[error("feature matrix shape error: {0}")]
    Shape(String),
    #[error("feature `{0}` not present")]
    MissingFeature(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatSelection {
    #[default]
    Seat,
    Back,
    Both,
}

impl MatSelection {
    pub fn seat(self) -> bool {
        matches!(self, Self::Seat | Self::Both)
    }

    pub fn back(self) -> bool {
        matches!(self, Self::Back | Self::Both)
    }
}

impl std::str::FromStr for MatSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seat" => Ok(Self::Seat),
            "back" => Ok(Self::Back),
            "both" => Ok(Self::Both),
            _ => Err(format!("unknown mat selection `{s}` (seat|back|both)")),
        }
    }
}

/// Feature groups to emit, per selected mat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub include_raw: bool,
    pub include_com: bool,
    pub include_quadrants: bool,
    pub include_edges: bool,
    pub mats: MatSelection,
    /// Restricts and reorders the emitted columns.
    pub whitelist: Option<Vec<String>>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            include_raw: true,
            include_com: true,
            include_quadrants: true,
            include_edges: true,
            mats: MatSelection::Seat,
            whitelist: None,
        }
    }
}

impl FeatureSpec {
    /// Parses a comma list of `raw`, `com`, `quadrants`, `edges`.
    pub fn from_groups(groups: &str, mats: MatSelection) -> Result<Self, FeatureError> {
        let mut spec = FeatureSpec {
            include_raw: false,
            include_com: false,
            include_quadrants: false,
            include_edges: false,
            mats,
            whitelist: None,
        };
        for g in groups.split(',').map(str::trim).filter(|g| !g.is_empty()) {
            match g {
                "raw" => spec.include_raw = true,
                "com" => spec.include_com = true,
                "quadrants" => spec.include_quadrants = true,
                "edges" => spec.include_edges = true,
                other => {
                    return Err(FeatureError::Spec(format!(
                        "unknown feature group `{other}`"
                    )))
                }
            }
        }
        Ok(spec)
    }

    fn mats(&self) -> Vec<&'static str> {
        let mut m = vec![];
        if self.mats.seat() {
            m.push("seat");
        }
        if self.mats.back() {
            m.push("back");
        }
        m
    }

    /// Column names before whitelist filtering, in canonical order.
    pub fn group_columns(&self) -> Vec<String> {
        let mats = self.mats();
        let mut names = Vec::new();
        if self.include_raw {
            for m in &mats {
                let p = if *m == "seat" { 's' } else { 'b' };
                names.extend((0..SENSORS_PER_MAT).map(|i| format!("{p}{i:02}")));
            }
        }
        let mut per_mat = |suffixes: &[&str]| {
            for m in &mats {
                names.extend(suffixes.iter().map(|s| format!("{m}_{s}")));
            }
        };
        if self.include_com {
            per_mat(&["com_row", "com_col"]);
        }
        if self.include_quadrants {
            per_mat(&["q_tl", "q_tr", "q_bl", "q_br"]);
        }
        if self.include_edges {
            per_mat(&["edge_top", "edge_bottom", "edge_left", "edge_right"]);
        }
        names
    }

    /// Final column names.
    pub fn columns(&self) -> Result<Vec<String>, FeatureError> {
        if !(self.include_raw || self.include_com || self.include_quadrants || self.include_edges) {
            return Err(FeatureError::Spec("no feature group enabled".into()));
        }
        let all = self.group_columns();
        match &self.whitelist {
            None => Ok(all),
            Some(list) => {
                if list.is_empty() {
                    return Err(FeatureError::Spec("empty whitelist".into()));
                }
                for name in list {
                    if !all.contains(name) {
                        return Err(FeatureError::Spec(format!(
                            "whitelisted feature `{name}` is not produced by the enabled groups"
                        )));
                    }
                }
                Ok(list.clone())
            }
        }
    }
}

/// Folding unit: rows sharing a key are one capture session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub participant: String,
    pub event: String,
}

impl GroupKey {
    /// Realistic events are one posture change; controlled sessions are one
    /// held posture.
    pub fn of(record: &FrameRecord, variant: Variant) -> Self {
        let event = match variant {
            Variant::Realistic => format!("{}-{}", record.posture, record.snapshot_index),
            Variant::Controlled => record.posture.to_string(),
        };
        Self {
            participant: record.participant_id.clone(),
            event,
        }
    }
}

/// Row-major numeric matrix with aligned labels and group keys.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: Vec<f64>,
    labels: Vec<PostureLabel>,
    groups: Vec<GroupKey>,
}

impl FeatureMatrix {
    pub fn new(
        names: Vec<String>,
        data: Vec<f64>,
        labels: Vec<PostureLabel>,
        groups: Vec<GroupKey>,
    ) -> Result<Self, FeatureError> {
        let d = names.len();
        let n = labels.len();
        if d == 0 && n > 0 {
            return Err(FeatureError::Shape("rows without columns".into()));
        }
        if data.len() != n * d {
            return Err(FeatureError::Shape(format!(
                "{} values for {n} rows × {d} columns",
                data.len()
            )));
        }
        if groups.len() != n {
            return Err(FeatureError::Shape(format!(
                "{} group keys for {n} rows",
                groups.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::Shape(format!(
                "non-finite value at row {}, column `{}`",
                i / d,
                names[i % d]
            )));
        }
        Ok(Self {
            names,
            data,
            labels,
            groups,
        })
    }

    /// Builds a matrix from rows; group keys default to one group per row.
    pub fn from_rows(
        names: Vec<String>,
        rows: &[Vec<f64>],
        labels: Vec<PostureLabel>,
    ) -> Result<Self, FeatureError> {
        if let Some(bad) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(FeatureError::Shape(format!(
                "row {bad} has {} values",
                rows[bad].len()
            )));
        }
        let groups = (0..rows.len())
            .map(|i| GroupKey {
                participant: String::new(),
                event: i.to_string(),
            })
            .collect();
        Self::new(names, rows.concat(), labels, groups)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[PostureLabel] {
        &self.labels
    }

    pub fn groups(&self) -> &[GroupKey] {
        &self.groups
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            data: idx
                .iter()
                .flat_map(|&i| self.row(i).iter().copied())
                .collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }

    /// Keeps only rows whose label is in `keep`.
    pub fn filter_labels(&self, keep: &[PostureLabel]) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.n_rows())
            .filter(|&i| keep.contains(&self.labels[i]))
            .collect();
        self.select_rows(&idx)
    }

    /// CSV with header `participant_id,event,posture,<feature names>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let header = ["participant_id", "event", "posture"]
            .into_iter()
            .map(str::to_owned)
            .chain(self.names.iter().cloned());
        w.write_record(header).map_err(DataError::from)?;
        for i in 0..self.n_rows() {
            let g = &self.groups[i];
            let rec = [
                g.participant.clone(),
                g.event.clone(),
                self.labels[i].to_string(),
            ]
            .into_iter()
            .chain(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(rec).map_err(DataError::from)?;
        }
        w.flush().map_err(DataError::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, FeatureError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(DataError::from)?
            .iter()
            .map(str::to_owned)
            .collect();
        if header.len() < 4 || header[..3] != ["participant_id", "event", "posture"] {
            return Err(DataError::SchemaMismatch(
                "feature CSV must start with participant_id,event,posture and one feature".into(),
            )
            .into());
        }
        let names = header[3..].to_vec();
        let (mut data, mut labels, mut groups) = (vec![], vec![], vec![]);
        for row in rdr.records() {
            let row = row.map_err(DataError::from)?;
            let line = row.position().map_or(0, |p| p.line());
            let parse_err = |col: usize, message: String| DataError::Parse {
                line,
                column: header[col].clone(),
                message,
            };
            groups.push(GroupKey {
                participant: row[0].to_owned(),
                event: row[1].to_owned(),
            });
            labels.push(row[2].parse().map_err(|e| parse_err(2, e))?);
            for (j, cell) in row.iter().enumerate().skip(3) {
                data.push(
                    cell.parse::<f64>()
                        .map_err(|e| parse_err(j, format!("{e}: `{cell}`")))?,
                );
            }
        }
        Self::new(names, data, labels, groups)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let f = std::fs::File::create(path).map_err(DataError::from)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let f = std::fs::File::open(path).map_err(DataError::from)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn mat_features(frame: &PressureFrame) -> [f64; 10] {
    let com = center_of_mass(frame);
    let q = quadrant_sums(frame);
    let e = edge_sums(frame);
    [
        com.row, com.col, q[0], q[1], q[2], q[3], e[0], e[1], e[2], e[3],
    ]
}

/// Evaluates every canonical column for one record.
fn record_columns(rec: &FrameRecord, spec: &FeatureSpec) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let seat = spec.mats.seat().then_some(&rec.seat);
    let back = if spec.mats.back() {
        rec.back.as_ref()
    } else {
        None
    };
    let mats: Vec<(&str, &PressureFrame)> = [("seat", seat), ("back", back)]
        .into_iter()
        .filter_map(|(n, f)| f.map(|f| (n, f)))
        .collect();
    if spec.include_raw {
        for (m, f) in &mats {
            let p = if *m == "seat" { 's' } else { 'b' };
            out.extend(
                f.values()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (format!("{p}{i:02}"), v)),
            );
        }
    }
    let derived: Vec<[f64; 10]> = mats.iter().map(|(_, f)| mat_features(f)).collect();
    let groups: [(bool, &[&str], usize); 3] = [
        (spec.include_com, &["com_row", "com_col"], 0),
        (spec.include_quadrants, &["q_tl", "q_tr", "q_bl", "q_br"], 2),
        (
            spec.include_edges,
            &["edge_top", "edge_bottom", "edge_left", "edge_right"],
            6,
        ),
    ];
    for (on, suffixes, offset) in groups {
        if !on {
            continue;
        }
        for ((m, _), vals) in mats.iter().zip(&derived) {
            for (k, s) in suffixes.iter().enumerate() {
                out.push((format!("{m}_{s}"), vals[offset + k]));
            }
        }
    }
    out
}

/// Featurizes every record of `ds` under `spec`; column order is fixed by
/// [`FeatureSpec::columns`].
pub fn build_feature_matrix(
    ds: &Dataset,
    spec: &FeatureSpec,
) -> Result<FeatureMatrix, FeatureError> {
    let names = spec.columns()?;
    if spec.mats.back() && ds.variant == Variant::Controlled {
        return Err(FeatureError::Spec(
            "controlled datasets carry no back mat".into(),
        ));
    }
    let all = spec.group_columns();
    let pick: Vec<usize> = names
        .iter()
        .map(|n| {
            all.iter()
                .position(|a| a == n)
                .expect("validated by columns()")
        })
        .collect();

    let mut data = Vec::with_capacity(ds.len() * names.len());
    for (i, rec) in ds.records.iter().enumerate() {
        if spec.mats.back() && rec.back.is_none() {
            return Err(FeatureError::Spec(format!("record {i} has no back frame")));
        }
        let cols = record_columns(rec, spec);
        debug_assert_eq!(cols.len(), all.len());
        data.extend(pick.iter().map(|&j| cols[j].1));
    }
    let labels = ds.records.iter().map(|r| r.posture).collect();
    let groups = ds
        .records
        .iter()
        .map(|r| GroupKey::of(r, ds.variant))
        .collect();
    FeatureMatrix::new(names, data, labels, groups)
}

/// Mean impurity decrease per feature over a random forest, normalized to
/// sum to 1 and sorted descending (ties keep column order).
pub fn feature_importance(
    fm: &FeatureMatrix,
    params: &ForestParams,
    seed: u64,
) -> Result<Vec<(String, f64)>, FeatureError> {
    let forest = RandomForest::fit(fm, params, seed)?;
    let scores = forest.feature_importances(fm.n_cols());
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked
        .into_iter()
        .map(|(j, s)| (fm.names()[j].clone(), s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AgeGroup, Mat};

    fn ds(variant: Variant, n: usize) -> Dataset {
        let records = (0..n)
            .map(|k| FrameRecord {
                participant_id: format!("p{k}"),
                age_group: AgeGroup::Unspecified,
                posture: if k % 2 == 0 {
                    PostureLabel::Left
                } else {
                    PostureLabel::Right
                },
                timestamp_index: if variant == Variant::Realistic { 3 } else { 0 },
                snapshot_index: 0,
                seat: PressureFrame::new(Mat::Seat, std::array::from_fn(|i| (i * (k + 1)) as f64))
                    .unwrap(),
                back: (variant == Variant::Realistic).then(|| {
                    PressureFrame::new(Mat::Back, std::array::from_fn(|i| 100.0 - i as f64))
                        .unwrap()
                }),
            })
            .collect();
        Dataset::new(variant, records, "")
    }

    #[test]
    fn column_counts() {
        let seat =
            build_feature_matrix(&ds(Variant::Controlled, 3), &FeatureSpec::default()).unwrap();
        assert_eq!(seat.n_cols(), 42);
        let both = FeatureSpec {
            mats: MatSelection::Both,
            ..FeatureSpec::default()
        };
        let fm = build_feature_matrix(&ds(Variant::Realistic, 3), &both).unwrap();
        assert_eq!(fm.n_cols(), 84);
        assert_eq!(&fm.names()[..2], ["s00", "s01"]);
        assert_eq!(
            fm.names()[64..68],
            [
                "seat_com_row",
                "seat_com_col",
                "back_com_row",
                "back_com_col"
            ]
        );
        assert_eq!(fm.names()[83], "back_edge_right");
    }

    #[test]
    fn raw_only_copies_sensors() {
        let data = ds(Variant::Controlled, 4);
        let spec = FeatureSpec::from_groups("raw", MatSelection::Seat).unwrap();
        let fm = build_feature_matrix(&data, &spec).unwrap();
        for (i, r) in data.records.iter().enumerate() {
            assert_eq!(fm.row(i), r.seat.values());
        }
    }

    #[test]
    fn whitelist_orders_columns() {
        let spec = FeatureSpec {
            whitelist: Some(vec!["seat_com_col".into(), "s05".into()]),
            ..FeatureSpec::default()
        };
        let data = ds(Variant::Controlled, 2);
        let fm = build_feature_matrix(&data, &spec).unwrap();
        assert_eq!(fm.names(), ["seat_com_col", "s05"]);
        assert_eq!(fm.row(1)[1], data.records[1].seat.values()[5]);
        let bad = FeatureSpec {
            whitelist: Some(vec!["back_com_row".into()]),
            ..FeatureSpec::default()
        };
        assert!(matches!(
            build_feature_matrix(&data, &bad),
            Err(FeatureError::Spec(_))
        ));
    }

    #[test]
    fn spec_errors() {
        assert!(FeatureSpec::from_groups("", MatSelection::Seat)
            .unwrap()
            .columns()
            .is_err());
        assert!(FeatureSpec::from_groups("raw,banana", MatSelection::Seat).is_err());
        let back = FeatureSpec {
            mats: MatSelection::Back,
            ..FeatureSpec::default()
        };
        assert!(build_feature_matrix(&ds(Variant::Controlled, 1), &back).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let fm = build_feature_matrix(&ds(Variant::Realistic, 5), &FeatureSpec::default()).unwrap();
        let mut buf = vec![];
        fm.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, fm);
    }

    #[test]
    fn perfect_feature_gets_all_importance() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![1.0, if i < 20 { -1.0 } else { 1.0 }, 3.0])
            .collect();
        let labels = (0..40)
            .map(|i| {
                if i < 20 {
                    PostureLabel::Left
                } else {
                    PostureLabel::Right
                }
            })
            .collect();
        let fm = FeatureMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows, labels)
            .unwrap();
        let ranked = feature_importance(&fm, &ForestParams::default(), 3).unwrap();
        assert_eq!(ranked[0].0, "b");
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
        let total: f64 = ranked.iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn importance_needs_two_classes() {
        let rows = vec![vec![1.0], vec![2.0]];
        let fm =
            FeatureMatrix::from_rows(vec!["a".into()], &rows, vec![PostureLabel::Left; 2]).unwrap();
        assert!(matches!(
            feature_importance(&fm, &ForestParams::default(), 0),
            Err(FeatureError::Classifier(ClassifierError::DegenerateLabels(
                _
            )))
        ));
    }
}
