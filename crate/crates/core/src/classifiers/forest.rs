//! CART trees with Gini impurity and a bagged random forest over them.
//!
//! Splits are `x[feature] <= threshold`, with thresholds at midpoints between
//! consecutive distinct sorted values. Among equally good splits the lowest
//! feature index wins, then the lowest threshold.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, TrainSet};
use crate::features::FeatureMatrix;
use crate::seed;

/// Two impurities closer than this are treated as a tie.
pub const IMPURITY_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// ⌈√d⌉ candidate features per split.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            min_samples_split: 2,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.n_trees == 0 {
            return Err(ClassifierError::InvalidSpec("n_trees must be ≥ 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ClassifierError::InvalidSpec(
                "min_samples_split must be ≥ 2".into(),
            ));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(ClassifierError::InvalidSpec(
                "max_features must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

pub fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / nf).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    // first maximum: ties go to the lowest class index
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl SplitCandidate {
    fn beats(&self, other: &SplitCandidate) -> bool {
        if self.impurity < other.impurity - IMPURITY_TIE_EPS {
            return true;
        }
        if self.impurity > other.impurity + IMPURITY_TIE_EPS {
            return false;
        }
        match self.feature.cmp(&other.feature) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.threshold < other.threshold,
        }
    }
}

struct Builder<'a, R: Rng> {
    data: &'a TrainSet,
    params: &'a ForestParams,
    mtry: usize,
    rng: R,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    n_root: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.data.n_classes];
        for &i in idx {
            c[self.data.y[i]] += 1;
        }
        c
    }

    /// Best split of `idx` on one feature, if the feature is not constant.
    fn best_on_feature(&self, idx: &[usize], f: usize, total: &[usize]) -> Option<SplitCandidate> {
        let mut pairs: Vec<(f64, usize)> = idx
            .iter()
            .map(|&i| (self.data.x(i)[f], self.data.y[i]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = pairs.len();
        let mut left = vec![0usize; self.data.n_classes];
        let mut best: Option<SplitCandidate> = None;
        for i in 0..m - 1 {
            left[pairs[i].1] += 1;
            let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
            if lo >= hi {
                continue;
            }
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            let nl = i + 1;
            let nr = m - nl;
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / m as f64;
            let cand = SplitCandidate {
                feature: f,
                threshold,
                impurity,
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(idx);
        let m = idx.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|md| depth >= md);
        if pure || depth_capped || m < self.params.min_samples_split {
            return id;
        }

        let d = self.data.d;
        let mut order: Vec<usize> = (0..d).collect();
        if self.mtry < d {
            order.shuffle(&mut self.rng);
        }
        let mut best: Option<SplitCandidate> = None;
        let mut usable = 0;
        for &f in &order {
            if usable == self.mtry {
                break;
            }
            if let Some(c) = self.best_on_feature(idx, f, &counts) {
                usable += 1;
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else { return id };

        let node_gini = gini(&counts, m);
        self.importance[split.feature] +=
            (m as f64 * node_gini - m as f64 * split.impurity) / self.n_root;

        // partition in place: left block keeps x <= threshold
        let mut k = 0;
        for j in 0..m {
            if self.data.x(idx[j])[split.feature] <= split.threshold {
                idx.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Grows one tree on the rows `sample` (with repetition for bootstrap).
    /// Returns the tree and its unnormalized impurity-decrease per feature.
    pub(crate) fn grow<R: Rng>(
        data: &TrainSet,
        sample: &mut [usize],
        params: &ForestParams,
        rng: R,
    ) -> (DecisionTree, Vec<f64>) {
        let mut b = Builder {
            data,
            params,
            mtry: params.max_features.resolve(data.d),
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; data.d],
            n_root: sample.len().max(1) as f64,
        };
        b.build(sample, 0);
        (DecisionTree { nodes: b.nodes }, b.importance)
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn check(&self, d: usize, n_classes: usize) -> bool {
        let n = self.nodes.len();
        n > 0
            && self.nodes.iter().all(|node| match node {
                Node::Leaf { class } => *class < n_classes,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => *feature < d && threshold.is_finite() && *left < n && *right < n,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub hyperparameters: ForestParams,
    pub n_classes: usize,
    pub trees: Vec<DecisionTree>,
    /// Mean normalized impurity decrease per feature.
    pub importances: Vec<f64>,
}

impl RandomForest {
    pub(crate) fn train(data: &TrainSet, params: &ForestParams, root_seed: u64) -> Self {
        let per_tree: Vec<(DecisionTree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng_for(root_seed, &[0x7265_6573, t as u64]);
                let mut sample: Vec<usize> = if params.bootstrap {
                    (0..data.n).map(|_| rng.random_range(0..data.n)).collect()
                } else {
                    (0..data.n).collect()
                };
                DecisionTree::grow(data, &mut sample, params, rng)
            })
            .collect();

        let mut importances = vec![0.0; data.d];
        let mut trees = Vec::with_capacity(per_tree.len());
        for (tree, imp) in per_tree {
            let total: f64 = imp.iter().sum();
            if total > 0.0 {
                importances
                    .iter_mut()
                    .zip(&imp)
                    .for_each(|(a, v)| *a += v / total);
            }
            trees.push(tree);
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        RandomForest {
            hyperparameters: params.clone(),
            n_classes: data.n_classes,
            trees,
            importances,
        }
    }

    /// Fits on a feature matrix, using its sorted label set as classes.
    pub fn fit(
        fm: &FeatureMatrix,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        params.validate()?;
        let (data, _) = TrainSet::from_matrix(fm)?;
        Ok(Self::train(&data, params, seed))
    }

    pub fn feature_importances(&self, d: usize) -> Vec<f64> {
        let mut v = self.importances.clone();
        v.resize(d, 0.0);
        v
    }

    /// Tree-vote fractions.
    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.predict_class(x)] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }

    pub(crate) fn check(&self, d: usize) -> bool {
        !self.trees.is_empty() && self.trees.iter().all(|t| t.check(d, self.n_classes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(f64, f64)], y: &[usize]) -> TrainSet {
        TrainSet {
            x: rows.iter().flat_map(|&(a, b)| [a, b]).collect(),
            y: y.to_vec(),
            n: rows.len(),
            d: 2,
            n_classes: y.iter().max().unwrap() + 1,
        }
    }

    fn single_tree() -> ForestParams {
        ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..ForestParams::default()
        }
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5, 0], 5), 0.0);
        assert!((gini(&[5, 5], 10) - 0.5).abs() < 1e-15);
        assert_eq!(gini(&[], 0), 0.0);
    }

    #[test]
    fn first_split_is_perfect_one() {
        let data = set(
            &[(0.0, 5.0), (1.0, 5.0), (2.0, 5.0), (3.0, 5.0)],
            &[0, 0, 1, 1],
        );
        let f = RandomForest::train(&data, &single_tree(), 0);
        let t = &f.trees[0];
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 1.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.depth(), 1);
        assert_eq!(f.importances, vec![1.0, 0.0]);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // both features split the classes identically
        let data = set(
            &[(0.0, 10.0), (1.0, 11.0), (2.0, 12.0), (3.0, 13.0)],
            &[0, 0, 1, 1],
        );
        let f = RandomForest::train(&data, &single_tree(), 0);
        assert!(matches!(
            f.trees[0].nodes[0],
            Node::Split { feature: 0, .. }
        ));
    }

    #[test]
    fn identical_rows_make_a_leaf() {
        let data = set(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)], &[0, 1, 1]);
        let f = RandomForest::train(&data, &single_tree(), 0);
        assert_eq!(f.trees[0].nodes, vec![Node::Leaf { class: 1 }]);
        assert!(f.importances.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depth_limit_is_respected() {
        let rows: Vec<(f64, f64)> = (0..16).map(|i| (i as f64, (i * 7 % 5) as f64)).collect();
        let y: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let data = set(&rows, &y);
        let p = ForestParams {
            max_depth: Some(2),
            ..single_tree()
        };
        let f = RandomForest::train(&data, &p, 0);
        assert!(f.trees[0].depth() <= 2);
    }

    #[test]
    fn adjacent_floats_split_cleanly() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let data = set(&[(a, 0.0), (b, 0.0)], &[0, 1]);
        let f = RandomForest::train(&data, &single_tree(), 0);
        assert_eq!(f.trees[0].predict_class(&[a, 0.0]), 0);
        assert_eq!(f.trees[0].predict_class(&[b, 0.0]), 1);
    }
}
