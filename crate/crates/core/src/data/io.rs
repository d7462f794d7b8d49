//! Canonical CSV persistence, one row per [`FrameRecord`]:
//! `participant_id,age_group,variant,posture,timestamp_index,snapshot_index,s00..s31,b00..b31`.
//! Back columns are empty for controlled records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::LazyLock;

use super::{
    AgeGroup, DataError, Dataset, FrameRecord, Mat, PressureFrame, Variant, SENSORS_PER_MAT,
};

const META_COLUMNS: [&str; 6] = [
    "participant_id",
    "age_group",
    "variant",
    "posture",
    "timestamp_index",
    "snapshot_index",
];

pub static CSV_HEADER: LazyLock<Vec<String>> = LazyLock::new(|| {
    META_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..SENSORS_PER_MAT).map(|i| format!("s{i:02}")))
        .chain((0..SENSORS_PER_MAT).map(|i| format!("b{i:02}")))
        .collect()
});

/// Writes `ds` in canonical form. Output bytes depend only on the records.
pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER.iter())?;
    let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
    for r in &ds.records {
        row.clear();
        row.push(r.participant_id.clone());
        row.push(r.age_group.as_str().into());
        row.push(ds.variant.as_str().into());
        row.push(r.posture.as_str().into());
        row.push(r.timestamp_index.to_string());
        row.push(r.snapshot_index.to_string());
        row.extend(r.seat.values().iter().map(|v| v.to_string()));
        match &r.back {
            Some(b) => row.extend(b.values().iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), SENSORS_PER_MAT)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, dest: impl AsRef<Path>) -> Result<(), DataError> {
    let file = File::create(dest)?;
    write_dataset(ds, BufWriter::new(file))
}

/// Reads a canonical CSV. The variant is taken from the rows; a header-only
/// file yields an empty controlled dataset.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != *CSV_HEADER {
        let missing: Vec<&String> = CSV_HEADER.iter().filter(|c| !header.contains(c)).collect();
        return Err(DataError::SchemaMismatch(if missing.is_empty() {
            "columns out of canonical order".into()
        } else {
            format!("missing columns {missing:?}")
        }));
    }

    let mut variant: Option<Variant> = None;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |col: usize, message: String| DataError::Parse {
            line,
            column: CSV_HEADER[col].clone(),
            message,
        };
        let field = |col: usize| row.get(col).unwrap_or("");

        let row_variant: Variant = field(2).parse().map_err(|e| err(2, e))?;
        match variant {
            None => variant = Some(row_variant),
            Some(v) if v != row_variant => {
                return Err(DataError::InvariantViolation {
                    record: records.len(),
                    message: format!(
                        "mixed variants `{}` and `{}`",
                        v.as_str(),
                        row_variant.as_str()
                    ),
                })
            }
            Some(_) => {}
        }

        let parse_mat = |offset: usize, mat: Mat| -> Result<Option<PressureFrame>, DataError> {
            let cells: Vec<&str> = (0..SENSORS_PER_MAT).map(|i| field(offset + i)).collect();
            if cells.iter().all(|c| c.is_empty()) {
                return Ok(None);
            }
            let mut values = [0.0; SENSORS_PER_MAT];
            for (i, c) in cells.iter().enumerate() {
                let v: f64 = c
                    .trim()
                    .parse()
                    .map_err(|e| err(offset + i, format!("{e}: `{c}`")))?;
                if !v.is_finite() {
                    return Err(err(offset + i, format!("non-finite value `{c}`")));
                }
                values[i] = v;
            }
            PressureFrame::new(mat, values).map(Some)
        };

        let seat =
            parse_mat(6, Mat::Seat)?.ok_or_else(|| err(6, "seat readings missing".into()))?;
        let back = parse_mat(6 + SENSORS_PER_MAT, Mat::Back)?;
        records.push(FrameRecord {
            participant_id: field(0).to_owned(),
            age_group: field(1).parse::<AgeGroup>().map_err(|e| err(1, e))?,
            posture: field(3).parse().map_err(|e| err(3, e))?,
            timestamp_index: field(4).parse().map_err(|e| err(4, format!("{e}")))?,
            snapshot_index: field(5).parse().map_err(|e| err(5, format!("{e}")))?,
            seat,
            back,
        });
    }

    let ds = Dataset::new(variant.unwrap_or(Variant::Controlled), records, "");
    ds.validate()?;
    Ok(ds)
}

pub fn load_dataset(source: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = source.as_ref();
    let mut ds = read_dataset(BufReader::new(File::open(path)?))?;
    ds.provenance = format!("loaded from {}", path.display());
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PostureLabel;

    fn sample(variant: Variant) -> Dataset {
        let seat =
            PressureFrame::new(Mat::Seat, std::array::from_fn(|i| i as f64 * 1.5 + 0.1)).unwrap();
        let back = PressureFrame::new(
            Mat::Back,
            std::array::from_fn(|i| 1000.0 / (i as f64 + 3.0)),
        )
        .unwrap();
        let (ts, back) = match variant {
            Variant::Controlled => (0, None),
            Variant::Realistic => (3, Some(back)),
        };
        let records = (0..4)
            .map(|k| FrameRecord {
                participant_id: format!("p,{k}"),
                age_group: AgeGroup::Senior,
                posture: PostureLabel::Left,
                timestamp_index: ts,
                snapshot_index: k,
                seat,
                back,
            })
            .collect();
        Dataset::new(variant, records, "test")
    }

    fn to_bytes(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        buf
    }

    #[test]
    fn header_only_is_empty() {
        let ds = Dataset::new(Variant::Controlled, vec![], "");
        let bytes = to_bytes(&ds);
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
        assert!(!bytes.contains(&b'\r'));
        let back = read_dataset(bytes.as_slice()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn round_trip_both_variants() {
        for v in [Variant::Controlled, Variant::Realistic] {
            let ds = sample(v);
            let bytes = to_bytes(&ds);
            let loaded = read_dataset(bytes.as_slice()).unwrap();
            assert_eq!(loaded, ds);
            assert_eq!(to_bytes(&loaded), bytes);
        }
    }

    #[test]
    fn bad_value_reports_column() {
        let mut text = String::from_utf8(to_bytes(&sample(Variant::Controlled))).unwrap();
        text = text.replacen(",0.1,", ",abc,", 1);
        match read_dataset(text.as_bytes()) {
            Err(DataError::Parse { column, line, .. }) => {
                assert_eq!(column, "s00");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_schema_mismatch() {
        assert!(matches!(
            read_dataset("a,b,c\n1,2,3\n".as_bytes()),
            Err(DataError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn empty_label_in_realistic_is_rejected() {
        let mut ds = sample(Variant::Realistic);
        ds.records[1].posture = PostureLabel::Empty;
        let bytes = to_bytes(&ds);
        assert!(matches!(
            read_dataset(bytes.as_slice()),
            Err(DataError::InvariantViolation { record: 1, .. })
        ));
    }
}
