//! Reduction of raw 80-field acquisition rows to the 64 sensor fields plus
//! the posture label. The raw auxiliary field names vary per acquisition
//! setup, so the retained names come from a user-supplied [`RawFieldMap`].

use serde::{Deserialize, Serialize};

use super::{DataError, SENSORS_PER_MAT};

/// Named fields of one raw row, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawRow {
    pub fields: Vec<(String, String)>,
}

impl RawRow {
    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            fields: pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Which raw fields survive pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFieldMap {
    /// Raw names of seat sensors 0..32, in sensor order.
    pub seat_fields: Vec<String>,
    /// Raw names of back sensors 0..32, in sensor order.
    pub back_fields: Vec<String>,
    pub posture_field: String,
    /// Metadata kept alongside the 65 data fields (participant, timestamp...).
    #[serde(default)]
    pub passthrough: Vec<String>,
}

impl Default for RawFieldMap {
    fn default() -> Self {
        Self {
            seat_fields: (0..SENSORS_PER_MAT).map(|i| format!("s{i:02}")).collect(),
            back_fields: (0..SENSORS_PER_MAT).map(|i| format!("b{i:02}")).collect(),
            posture_field: "posture".into(),
            passthrough: vec![],
        }
    }
}

impl RawFieldMap {
    fn data_fields(&self) -> impl Iterator<Item = &String> {
        self.seat_fields
            .iter()
            .chain(&self.back_fields)
            .chain(std::iter::once(&self.posture_field))
    }

    fn check(&self) -> Result<(), DataError> {
        if self.seat_fields.len() != SENSORS_PER_MAT || self.back_fields.len() != SENSORS_PER_MAT {
            return Err(DataError::SchemaMismatch(format!(
                "field map needs {SENSORS_PER_MAT} seat and {SENSORS_PER_MAT} back names, got {} and {}",
                self.seat_fields.len(),
                self.back_fields.len()
            )));
        }
        Ok(())
    }
}

/// Keeps the 64 sensor fields and the posture field (65 data fields),
/// followed by the passthrough metadata; every other field is dropped.
pub fn prune_raw_columns(row: &RawRow, map: &RawFieldMap) -> Result<RawRow, DataError> {
    map.check()?;
    let fields = map
        .data_fields()
        .chain(&map.passthrough)
        .map(|name| {
            row.get(name)
                .map(|v| (name.clone(), v.to_owned()))
                .ok_or_else(|| DataError::SchemaMismatch(format!("raw row lacks field `{name}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RawRow { fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_row(n_aux: usize) -> (RawRow, RawFieldMap) {
        let map = RawFieldMap {
            passthrough: vec!["aux00".into()],
            ..RawFieldMap::default()
        };
        let mut pairs: Vec<(String, String)> = (0..n_aux)
            .map(|i| (format!("aux{i:02}"), format!("{}", i * 3)))
            .collect();
        pairs.extend(
            map.seat_fields
                .iter()
                .map(|n| (n.clone(), "12".to_string())),
        );
        pairs.push(("posture".into(), "left".into()));
        pairs.extend(
            map.back_fields
                .iter()
                .map(|n| (n.clone(), "7.5".to_string())),
        );
        (RawRow::from_pairs(pairs), map)
    }

    #[test]
    fn eighty_fields_prune_to_sixty_five() {
        let (row, mut map) = raw_row(15);
        assert_eq!(row.len(), 80);
        map.passthrough.clear();
        let pruned = prune_raw_columns(&row, &map).unwrap();
        assert_eq!(pruned.len(), 65);
        assert_eq!(pruned.get("posture"), Some("left"));
        assert_eq!(pruned.get("aux03"), None);
    }

    #[test]
    fn passthrough_is_kept_after_data_fields() {
        let (row, map) = raw_row(15);
        let pruned = prune_raw_columns(&row, &map).unwrap();
        assert_eq!(pruned.len(), 66);
        assert_eq!(pruned.fields.last().unwrap().0, "aux00");
    }

    #[test]
    fn missing_sensor_is_schema_mismatch() {
        let (mut row, map) = raw_row(15);
        row.fields.retain(|(k, _)| k != "b17");
        assert!(matches!(
            prune_raw_columns(&row, &map),
            Err(DataError::SchemaMismatch(m)) if m.contains("b17")
        ));
    }

    proptest! {
        #[test]
        fn pruning_is_idempotent(n_aux in 1usize..30, seed in any::<u64>()) {
            let (mut row, map) = raw_row(n_aux);
            // shuffle the raw field order
            let k = row.fields.len();
            for i in 0..k {
                let j = (seed.wrapping_mul(i as u64 + 1) >> 7) as usize % k;
                row.fields.swap(i, j);
            }
            let once = prune_raw_columns(&row, &map).unwrap();
            let twice = prune_raw_columns(&once, &map).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
