//! K-fold planning, cross-validation and per-class classification reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{fit, ClassifierError, ClassifierSpec, Family, FitWarning};
use crate::data::PostureLabel;
use crate::features::{FeatureMatrix, GroupKey};
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot split {n} rows into {k} folds")]
    TooFewRows { n: usize, k: usize },
    #[error("group `{group}` has {size} rows, more than a fold of {limit} rows allows")]
    GroupLargerThanFold {
        group: String,
        size: usize,
        limit: usize,
    },
    #[error("cannot split {groups} groups into {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("{what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("label `{0}` is not in the class order")]
    UnknownLabel(PostureLabel),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ClassifierError,
    },
}

/// Assignment of every row to one of `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub stratified: bool,
    pub group_aware: bool,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Deterministic fold plan.
///
/// Without groups, rows are shuffled (within each class when stratified,
/// classes in label order) and dealt round-robin, so fold sizes differ by at
/// most one overall and per class. With `group_aware`, whole groups are
/// placed greedily, largest first, on the fold holding the fewest rows (of
/// the group's majority class when stratified).
pub fn kfold_split(
    labels: &[PostureLabel],
    groups: Option<&[GroupKey]>,
    k: usize,
    stratified: bool,
    group_aware: bool,
    seed: u64,
) -> Result<FoldPlan, EvalError> {
    let n = labels.len();
    if k < 2 || n < k {
        return Err(EvalError::TooFewRows { n, k });
    }
    let mut rng = seed::rng_for(seed, &[0x006b_666f_6c64]);
    let mut assignments = vec![0; n];

    if group_aware {
        let groups = groups.ok_or(EvalError::LengthMismatch {
            what: "group keys",
            expected: n,
            found: 0,
        })?;
        if groups.len() != n {
            return Err(EvalError::LengthMismatch {
                what: "group keys",
                expected: n,
                found: groups.len(),
            });
        }
        let mut members: BTreeMap<&GroupKey, Vec<usize>> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            members.entry(g).or_default().push(i);
        }
        if members.len() < k {
            return Err(EvalError::TooFewGroups {
                groups: members.len(),
                k,
            });
        }
        let limit = n.div_ceil(k);
        let mut units: Vec<(PostureLabel, Vec<usize>)> = Vec::with_capacity(members.len());
        for (g, rows) in members {
            if rows.len() > limit {
                return Err(EvalError::GroupLargerThanFold {
                    group: format!("{}/{}", g.participant, g.event),
                    size: rows.len(),
                    limit,
                });
            }
            units.push((majority_label(labels, &rows), rows));
        }
        units.shuffle(&mut rng);
        // Stable sort keeps the shuffled order among equal keys.
        units.sort_by(|a, b| {
            let class = if stratified {
                a.0.cmp(&b.0)
            } else {
                std::cmp::Ordering::Equal
            };
            class.then(b.1.len().cmp(&a.1.len()))
        });
        let mut total = vec![0usize; k];
        let mut per_class: BTreeMap<PostureLabel, Vec<usize>> = BTreeMap::new();
        for (label, rows) in units {
            let class_load = per_class.entry(label).or_insert_with(|| vec![0; k]);
            let fold = (0..k)
                .min_by_key(|&f| (if stratified { class_load[f] } else { 0 }, total[f], f))
                .expect("k >= 2");
            class_load[fold] += rows.len();
            total[fold] += rows.len();
            for i in rows {
                assignments[i] = fold;
            }
        }
    } else {
        let mut order: Vec<usize> = Vec::with_capacity(n);
        if stratified {
            let mut by_class: BTreeMap<PostureLabel, Vec<usize>> = BTreeMap::new();
            for (i, &l) in labels.iter().enumerate() {
                by_class.entry(l).or_default().push(i);
            }
            for (_, mut rows) in by_class {
                rows.shuffle(&mut rng);
                order.extend(rows);
            }
        } else {
            order.extend(0..n);
            order.shuffle(&mut rng);
        }
        for (pos, i) in order.into_iter().enumerate() {
            assignments[i] = pos % k;
        }
    }

    Ok(FoldPlan {
        k,
        assignments,
        stratified,
        group_aware,
        seed,
    })
}

fn majority_label(labels: &[PostureLabel], rows: &[usize]) -> PostureLabel {
    let mut counts: BTreeMap<PostureLabel, usize> = BTreeMap::new();
    for &i in rows {
        *counts.entry(labels[i]).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .expect("groups are non-empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: PostureLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when any of the three metrics hit a zero denominator.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<PostureLabel>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub accuracy: f64,
    /// `confusion[t][p]`: rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn classification_report(
    y_true: &[PostureLabel],
    y_pred: &[PostureLabel],
    classes: &[PostureLabel],
) -> Result<ClassificationReport, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            what: "predictions",
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    let index = |l: PostureLabel| {
        classes
            .iter()
            .position(|&c| c == l)
            .ok_or(EvalError::UnknownLabel(l))
    };
    let c = classes.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[index(t)?][index(p)?] += 1;
    }
    let n = y_true.len();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let (precision, zp) = ratio(tp, predicted as f64);
            let (recall, zr) = ratio(tp, support as f64);
            let (f1, zf) = ratio(2.0 * precision * recall, precision + recall);
            ClassMetrics {
                label: classes[k],
                precision,
                recall,
                f1,
                support,
                zero_division: zp || zr || zf,
            }
        })
        .collect();

    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        if c == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / c as f64
        }
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        if n == 0 {
            0.0
        } else {
            per_class
                .iter()
                .map(|m| f(m) * m.support as f64)
                .sum::<f64>()
                / n as f64
        }
    };
    let macro_avg = AverageMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        support: n,
    };
    let weighted_avg = AverageMetrics {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
        support: n,
    };
    let trace: usize = (0..c).map(|k| confusion[k][k]).sum();
    Ok(ClassificationReport {
        classes: classes.to_vec(),
        per_class,
        macro_avg,
        weighted_avg,
        accuracy: if n == 0 { 0.0 } else { trace as f64 / n as f64 },
        confusion,
    })
}

impl ClassificationReport {
    pub fn support(&self) -> usize {
        self.weighted_avg.support
    }

    /// Aligned text table: one row per class, then accuracy and averages.
    pub fn to_text(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.as_str().len())
            .chain([12])
            .max()
            .unwrap_or(12);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>width$} {:>9} {:>9} {:>9} {:>9}",
            "", "precision", "recall", "f1-score", "support"
        );
        let _ = writeln!(s);
        for m in &self.per_class {
            let flag = if m.zero_division { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}{flag}",
                m.label.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>width$} {:>9} {:>9} {:>9.2} {:>9}",
            "accuracy",
            "",
            "",
            self.accuracy,
            self.support()
        );
        for (name, a) in [
            ("macro avg", &self.macro_avg),
            ("avg / total", &self.weighted_avg),
        ] {
            let _ = writeln!(
                s,
                "{:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, a.precision, a.recall, a.f1, a.support
            );
        }
        if self.per_class.iter().any(|m| m.zero_division) {
            let _ = writeln!(s, "\n* zero denominator, reported as 0");
        }
        s
    }

    /// Confusion matrix as CSV: header `true\pred,<classes>`, one row per true class.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in &self.classes {
            s.push(',');
            s.push_str(c.as_str());
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            s.push_str(c.as_str());
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub family: Family,
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub mean_accuracy: f64,
    /// Sample standard deviation of the fold accuracies.
    pub sd_accuracy: f64,
    /// Pooled accuracy over all out-of-fold predictions.
    pub accuracy: f64,
    pub predictions: Vec<PostureLabel>,
    pub report: ClassificationReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<(usize, FitWarning)>,
}

/// Fits on each fold's training rows with seed `derive(spec.seed, [fold])`
/// and predicts its test rows. Folds run in parallel; results are assembled
/// in fold order.
pub fn cross_validate(
    fm: &FeatureMatrix,
    spec: &ClassifierSpec,
    plan: &FoldPlan,
) -> Result<CvResult, EvalError> {
    let n = fm.n_rows();
    if plan.n() != n {
        return Err(EvalError::LengthMismatch {
            what: "fold plan",
            expected: n,
            found: plan.n(),
        });
    }
    type FoldOut = (Vec<usize>, Vec<PostureLabel>, Vec<FitWarning>);
    let folds: Vec<FoldOut> = (0..plan.k)
        .into_par_iter()
        .map(|fold| -> Result<FoldOut, EvalError> {
            let test = plan.test_indices(fold);
            let train = fm.select_rows(&plan.train_indices(fold));
            let fold_spec = spec.with_seed(seed::derive(spec.seed, &[fold as u64]));
            let wrap = |source| EvalError::Fold { fold, source };
            let model = fit(&fold_spec, &train).map_err(wrap)?;
            let preds = model.predict(&fm.select_rows(&test)).map_err(wrap)?;
            Ok((test, preds, model.warnings))
        })
        .collect::<Result<_, _>>()?;

    let labels = fm.labels();
    let mut predictions = vec![None; n];
    let mut fold_accuracies = Vec::with_capacity(plan.k);
    let mut fold_sizes = Vec::with_capacity(plan.k);
    let mut warnings = vec![];
    for (fold, (test, preds, w)) in folds.into_iter().enumerate() {
        let correct = test
            .iter()
            .zip(&preds)
            .filter(|(&i, &p)| labels[i] == p)
            .count();
        fold_sizes.push(test.len());
        fold_accuracies.push(if test.is_empty() {
            0.0
        } else {
            correct as f64 / test.len() as f64
        });
        for (i, p) in test.into_iter().zip(preds) {
            predictions[i] = Some(p);
        }
        warnings.extend(w.into_iter().map(|w| (fold, w)));
    }
    let predictions: Vec<PostureLabel> = predictions
        .into_iter()
        .map(|p| p.expect("folds partition the rows"))
        .collect();

    let mut classes: Vec<PostureLabel> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let report = classification_report(labels, &predictions, &classes)?;
    let k = fold_accuracies.len() as f64;
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / k;
    let sd_accuracy = if k > 1.0 {
        (fold_accuracies
            .iter()
            .map(|a| (a - mean_accuracy).powi(2))
            .sum::<f64>()
            / (k - 1.0))
            .sqrt()
    } else {
        0.0
    };
    Ok(CvResult {
        family: spec.family(),
        fold_accuracies,
        fold_sizes,
        mean_accuracy,
        sd_accuracy,
        accuracy: report.accuracy,
        predictions,
        report,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use PostureLabel::*;

    fn labels(n: usize) -> Vec<PostureLabel> {
        (0..n)
            .map(|i| if i % 3 == 0 { Left } else { Right })
            .collect()
    }

    #[test]
    fn paper_split_sizes() {
        let plan = kfold_split(&labels(1800), None, 10, true, false, 7).unwrap();
        for f in 0..10 {
            assert_eq!(plan.test_indices(f).len(), 180);
            assert_eq!(plan.train_indices(f).len(), 1620);
        }
    }

    #[test]
    fn leave_one_out_and_remainder() {
        let plan = kfold_split(&labels(10), None, 10, false, false, 1).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 1));
        let mut sizes = kfold_split(&labels(7), None, 3, false, false, 1)
            .unwrap()
            .fold_sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, [3, 2, 2]);
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            kfold_split(&labels(3), None, 4, false, false, 0),
            Err(EvalError::TooFewRows { .. })
        ));
        assert!(kfold_split(&labels(3), None, 1, false, false, 0).is_err());
    }

    #[test]
    fn stratified_counts_track_global_ratio() {
        let y = labels(101);
        let plan = kfold_split(&y, None, 10, true, false, 3).unwrap();
        for class in [Left, Right] {
            let total = y.iter().filter(|&&l| l == class).count() as f64;
            for f in 0..10 {
                let c = plan
                    .test_indices(f)
                    .iter()
                    .filter(|&&i| y[i] == class)
                    .count() as f64;
                assert!((c - total / 10.0).abs() < 1.0);
            }
        }
    }

    #[test]
    fn groups_stay_together() {
        let y = labels(60);
        let g: Vec<GroupKey> = (0..60)
            .map(|i| GroupKey {
                participant: format!("p{}", i / 6),
                event: "e".into(),
            })
            .collect();
        let plan = kfold_split(&y, Some(&g), 5, true, true, 9).unwrap();
        for i in 0..60 {
            for j in 0..60 {
                if g[i] == g[j] {
                    assert_eq!(plan.assignments[i], plan.assignments[j]);
                }
            }
        }
        let big: Vec<GroupKey> = (0..60)
            .map(|i| GroupKey {
                participant: if i < 30 { "a".into() } else { format!("p{i}") },
                event: "e".into(),
            })
            .collect();
        assert!(matches!(
            kfold_split(&y, Some(&big), 5, false, true, 9),
            Err(EvalError::GroupLargerThanFold { size: 30, .. })
        ));
    }

    #[test]
    fn plan_is_seed_deterministic() {
        let a = kfold_split(&labels(50), None, 5, true, false, 11).unwrap();
        assert_eq!(
            a,
            kfold_split(&labels(50), None, 5, true, false, 11).unwrap()
        );
        assert_ne!(
            a,
            kfold_split(&labels(50), None, 5, true, false, 12).unwrap()
        );
    }

    #[test]
    fn hand_computed_report() {
        let mut t = vec![];
        let mut p = vec![];
        for (tl, pl, count) in [
            (Left, Left, 8),
            (Left, Right, 2),
            (Right, Left, 1),
            (Right, Right, 9),
        ] {
            t.extend(std::iter::repeat_n(tl, count));
            p.extend(std::iter::repeat_n(pl, count));
        }
        let r = classification_report(&t, &p, &[Left, Right]).unwrap();
        assert_eq!(r.confusion, [[8, 2], [1, 9]]);
        let a = &r.per_class[0];
        assert!((a.precision - 8.0 / 9.0).abs() < 1e-15);
        assert!((a.recall - 0.8).abs() < 1e-15);
        assert!((a.f1 - 16.0 / 19.0).abs() < 1e-15);
        assert_eq!(r.accuracy, 17.0 / 20.0);
        assert_eq!(r.support(), 20);
        let w = (a.f1 * 10.0 + r.per_class[1].f1 * 10.0) / 20.0;
        assert!((r.weighted_avg.f1 - w).abs() < 1e-15);
    }

    #[test]
    fn zero_division_is_flagged() {
        let r = classification_report(&[Left, Left], &[Left, Left], &[Left, Right]).unwrap();
        assert!(r.per_class[1].zero_division);
        assert_eq!(r.per_class[1].precision, 0.0);
        assert!(!r.per_class[0].zero_division);
        assert!(r.to_text().contains('*'));
    }

    #[test]
    fn report_errors() {
        assert!(matches!(
            classification_report(&[Left], &[], &[Left]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            classification_report(&[Left], &[Still], &[Left]),
            Err(EvalError::UnknownLabel(Still))
        ));
    }

    #[test]
    fn permuted_class_order_permutes_rows() {
        let t = [Left, Right, Front, Left, Front];
        let p = [Left, Front, Front, Right, Left];
        let a = classification_report(&t, &p, &[Left, Right, Front]).unwrap();
        let b = classification_report(&t, &p, &[Front, Left, Right]).unwrap();
        assert_eq!(a.per_class[0], b.per_class[1]);
        assert_eq!(a.per_class[2], b.per_class[0]);
        assert_eq!(a.confusion[0][2], b.confusion[1][0]);
    }

    #[test]
    fn text_and_csv_layout() {
        let r = classification_report(&[Left, Right], &[Left, Right], &[Left, Right]).unwrap();
        let text = r.to_text();
        assert!(text.contains("precision"));
        assert!(text.contains("avg / total"));
        assert_eq!(
            r.confusion_csv(),
            "true\\pred,left,right\nleft,1,0\nright,0,1\n"
        );
    }
}
